//! Deterministic simulator of Intel Memory Protection Keys and a
//! virtualized protection-key layer on top of it.
//!
//! The crate has three layers:
//!
//! - [`hw`] models the hardware primitives: per-thread PKRU registers, a
//!   shared page table with 4-bit key fields, and the permission
//!   intersection that decides every access.
//! - [`kernel`] models the OS interface: the key allocation bitmap, the
//!   `pkey_*` and `mprotect` syscalls (including the execute-only path
//!   and its missing inter-thread synchronization), task-work queues,
//!   and the lazy PKRU sync protocol. The raw interface's hazards are
//!   reproduced deliberately.
//! - [`manager`] virtualizes the 15 usable hardware keys behind
//!   application-chosen virtual keys with an LRU key cache, a reserved
//!   execute-only key, and kernel-guarded metadata; [`heap`] carves
//!   chunks out of protected page groups.
//!
//! [`trace`] and [`replay`] drive all of it from a textual trace format
//! with a cycle-cost ledger, and [`interleave`] exhaustively explores
//! small simulated-thread schedules.
//!
//! Threads are simulated: a [`kernel::ThreadId`] indexes into one
//! serialized machine, and concurrency is expressed by the order in
//! which the driver interleaves operations. Fresh threads start with
//! every PKRU entry read/write; only entry 0 (the default group) is
//! pinned down by the hardware description, the rest is an assumption.

pub mod cost;
pub mod error;
pub mod heap;
pub mod hw;
pub mod interleave;
pub mod kernel;
pub mod manager;
pub mod replay;
pub mod sim;
pub mod trace;

pub use error::{MpkError, Result};
pub use sim::Sim;
