//! MADPIE: PIE's random drops plus at most one deterministic drop per
//! update interval while the estimated delay exceeds a hard threshold.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::pie::{PieConfig, PieState};
use super::{Decision, DropCause};
use crate::units::serde_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MadpieConfig {
    #[serde(flatten)]
    pub pie: PieConfig,
    /// Estimated delay above which a deterministic drop is armed. `None`
    /// disables deterministic drops, which reduces MADPIE to PIE.
    #[serde(with = "serde_threshold")]
    pub tau_dd: Option<Duration>,
}

impl Default for MadpieConfig {
    fn default() -> Self {
        MadpieConfig {
            pie: PieConfig::default(),
            tau_dd: Some(Duration::from_millis(30)),
        }
    }
}

impl MadpieConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.pie.validate()?;
        match self.tau_dd {
            Some(t) if t < self.pie.target => Err(format!(
                "deterministic-drop threshold {t:?} is below the PIE target {:?}",
                self.pie.target
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MadpieState {
    pub pie: PieState,
    /// Armed deterministic drop.
    pub p_max: bool,
}

impl MadpieState {
    pub fn new(cfg: &MadpieConfig) -> Self {
        MadpieState {
            pie: PieState::new(&cfg.pie),
            p_max: false,
        }
    }

    /// Runs the PIE update, then arms a deterministic drop if the estimate
    /// is strictly above the threshold. An armed drop that was never taken
    /// stays armed.
    pub fn update(&mut self, cfg: &MadpieConfig) {
        self.pie.update(&cfg.pie);
        if cfg.tau_dd.is_some_and(|threshold| self.pie.est_delay > threshold) {
            self.p_max = true;
        }
    }

    pub fn enqueue_decision(&mut self, size: u32, capacity_bytes: u64, u: f64) -> Decision {
        match self.pie.enqueue_decision(size, capacity_bytes, u) {
            Decision::Drop(cause) => Decision::Drop(cause),
            Decision::Enqueue if self.p_max => {
                // Undo the admission the PIE half just booked.
                self.pie.queue_bytes -= u64::from(size);
                self.p_max = false;
                Decision::Drop(DropCause::DeterministicDrop)
            }
            Decision::Enqueue => Decision::Enqueue,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MadpieConfig {
        MadpieConfig {
            pie: PieConfig {
                range_scaling: false,
                ..PieConfig::default()
            },
            tau_dd: Some(Duration::from_millis(30)),
        }
    }

    #[test]
    fn arms_above_threshold() {
        let cfg = cfg();
        let mut s = MadpieState::new(&cfg);
        s.pie.est_delay = Duration::from_millis(35);
        s.update(&cfg);
        assert!(s.p_max);
    }

    #[test]
    fn threshold_is_strict() {
        let cfg = cfg();
        let mut s = MadpieState::new(&cfg);
        s.pie.est_delay = Duration::from_millis(30);
        s.update(&cfg);
        assert!(!s.p_max);
    }

    #[test]
    fn unconsumed_arm_persists_across_ticks() {
        let cfg = cfg();
        let mut s = MadpieState::new(&cfg);
        s.p_max = true;
        s.pie.est_delay = Duration::from_millis(10);
        s.update(&cfg);
        assert!(s.p_max);
    }

    #[test]
    fn random_drop_does_not_consume_arm() {
        let cfg = cfg();
        let mut s = MadpieState::new(&cfg);
        s.p_max = true;
        s.pie.p_drop = 0.5;
        s.pie.burst_remaining = Duration::ZERO;
        assert_eq!(
            s.enqueue_decision(1500, u64::MAX, 0.2),
            Decision::Drop(DropCause::RandomDrop)
        );
        assert!(s.p_max);
    }

    #[test]
    fn deterministic_drop_consumes_arm() {
        let cfg = cfg();
        let mut s = MadpieState::new(&cfg);
        s.p_max = true;
        s.pie.queue_bytes = 3000;
        assert_eq!(
            s.enqueue_decision(1500, u64::MAX, 0.9),
            Decision::Drop(DropCause::DeterministicDrop)
        );
        assert!(!s.p_max);
        assert_eq!(s.pie.queue_bytes, 3000);
        assert_eq!(s.enqueue_decision(1500, u64::MAX, 0.9), Decision::Enqueue);
        assert_eq!(s.pie.queue_bytes, 4500);
    }

    #[test]
    fn burst_allowance_does_not_suppress_deterministic_drop() {
        let cfg = cfg();
        let mut s = MadpieState::new(&cfg);
        assert!(!s.pie.burst_remaining.is_zero());
        s.p_max = true;
        assert_eq!(
            s.enqueue_decision(1500, u64::MAX, 0.9),
            Decision::Drop(DropCause::DeterministicDrop)
        );
    }

    #[test]
    fn overflow_does_not_consume_arm() {
        let cfg = cfg();
        let mut s = MadpieState::new(&cfg);
        s.p_max = true;
        s.pie.queue_bytes = 10_000;
        assert_eq!(
            s.enqueue_decision(1500, 10_000, 0.9),
            Decision::Drop(DropCause::BufferOverflow)
        );
        assert!(s.p_max);
    }

    #[test]
    fn serde_accepts_inf_threshold() {
        let mut c = cfg();
        c.tau_dd = None;
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"tau_dd\":\"inf\""), "{text}");
        let back: MadpieConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
