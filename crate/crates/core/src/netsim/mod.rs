//! Dumbbell topology: per-flow access links on both sides of a shared
//! bottleneck whose forward queue runs the selected discipline.
//!
//! ```text
//! senders --access--> R1 ==bottleneck (AQM)==> R2 --access--> receivers
//! senders <--access-- R1 <==bottleneck (FIFO)== R2 <--access-- receivers
//! ```

mod config;
mod link;
mod sim;

pub use config::{bdp_bytes, ConfigError, Group, Preset, ScenarioConfig};
pub use link::{serialization_time, FifoLine};
pub use sim::{run, QueueReport, RunResult, Simulation, TcpTotals};
