//! Discrete-event core: an integer-nanosecond clock, a stable event queue
//! and the run loop.
//!
//! Events are delivered in ascending `(fire_at, seq)` order, where `seq` is
//! the insertion counter. Two events scheduled for the same instant therefore
//! fire in the order they were scheduled.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An instant on the simulated clock, in nanoseconds since simulation start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    /// Time elapsed since `earlier`, saturating at zero.
    pub fn saturating_since(self, earlier: SimTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }

    /// Offset from simulation start.
    pub fn since_start(self) -> Duration {
        Duration::from_nanos(self.0)
    }
}

/// Converts a duration to whole nanoseconds, saturating at `u64::MAX`.
pub fn duration_nanos(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Duration) -> SimTime {
        SimTime(self.0.saturating_add(duration_nanos(rhs)))
    }
}

impl AddAssign<Duration> for SimTime {
    fn add_assign(&mut self, rhs: Duration) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = Duration;

    /// Panics in debug builds if `rhs` is later than `self`.
    fn sub(self, rhs: SimTime) -> Duration {
        debug_assert!(self >= rhs, "negative time difference");
        self.saturating_since(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("cannot schedule an event at {at} while the clock reads {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// Identifies a scheduled event so it can be cancelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    at: SimTime,
    seq: u64,
}

impl EventHandle {
    pub fn fire_at(&self) -> SimTime {
        self.at
    }
}

struct Entry<E> {
    key: Reverse<(SimTime, u64)>,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Something that reacts to events popped off an [`Engine`].
pub trait Handler<E> {
    fn handle(&mut self, engine: &mut Engine<E>, event: E);
}

impl<E, F> Handler<E> for F
where
    F: FnMut(&mut Engine<E>, E),
{
    fn handle(&mut self, engine: &mut Engine<E>, event: E) {
        self(engine, event)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSummary {
    pub events_processed: u64,
    pub end: SimTime,
}

/// Event queue plus simulated clock.
pub struct Engine<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
    // Key of the most recently popped entry. Pops are monotone in
    // (fire_at, seq), so anything at or below it has fired or been purged.
    last_popped: Option<(SimTime, u64)>,
    events_processed: u64,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            last_popped: None,
            events_processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    /// Number of events waiting, including cancelled ones not yet purged.
    pub fn queued(&self) -> usize {
        self.heap.len()
    }

    pub fn schedule(&mut self, at: SimTime, payload: E) -> Result<EventHandle, EngineError> {
        if at < self.now {
            return Err(EngineError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            key: Reverse((at, seq)),
            payload,
        });
        Ok(EventHandle { at, seq })
    }

    /// Schedules `payload` to fire `delay` after the current instant.
    pub fn schedule_in(&mut self, delay: Duration, payload: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("a non-negative delay never lands in the past")
    }

    /// Returns true iff the event had not fired yet and now never will.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        let key = (handle.at, handle.seq);
        if handle.seq >= self.next_seq {
            return false;
        }
        if self.last_popped.is_some_and(|last| key <= last) {
            return false;
        }
        self.cancelled.insert(handle.seq)
    }

    fn pop_due(&mut self, end: SimTime) -> Option<E> {
        loop {
            let due = self.heap.peek().is_some_and(|e| e.key.0 .0 <= end);
            if !due {
                return None;
            }
            let entry = self.heap.pop()?;
            let (at, seq) = entry.key.0;
            self.last_popped = Some((at, seq));
            if !self.cancelled.is_empty() && self.cancelled.remove(&seq) {
                continue;
            }
            debug_assert!(at >= self.now);
            self.now = at;
            self.events_processed += 1;
            return Some(entry.payload);
        }
    }

    /// Processes every event with `fire_at <= end`, then parks the clock at
    /// `end`.
    pub fn run_until<H: Handler<E>>(&mut self, end: SimTime, handler: &mut H) -> SimSummary {
        let start_count = self.events_processed;
        while let Some(payload) = self.pop_due(end) {
            handler.handle(self, payload);
        }
        if end > self.now {
            self.now = end;
        }
        SimSummary {
            events_processed: self.events_processed - start_count,
            end: self.now,
        }
    }
}
