//! Traffic sources and sinks.

pub mod cbr;
pub mod cubic;
pub mod shortflow;
pub mod tcp;

pub use cbr::CbrSpec;
pub use cubic::{cubic_window, TcpConfig};
pub use shortflow::{DownloadRecord, ShortFlowSpec};
pub use tcp::{AckInfo, TcpReceiver, TcpSender, Transmission};
