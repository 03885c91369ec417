//! Sans-IO Reno sender and cumulative-ACK receiver.

mod receiver;
mod sender;
mod trace;

pub use receiver::{ReceiveOutcome, TcpReceiver};
pub use sender::{AckOutcome, SenderInput, TcpConfig, TcpConnState, TcpSender, TimerAction};
pub use trace::{write_cwnd_csv, CwndTraceRecord, TraceTag, CWND_CSV_HEADER};
