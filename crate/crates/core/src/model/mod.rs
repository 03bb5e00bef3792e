//! Gate-level circuits, pulse schedules, and the canonical byte encodings
//! shared by persistence, digests, and sealed-metadata associated data.

mod backend;
mod bits;
mod circuit;
mod digest;
mod parse;
mod schedule;

pub use backend::BackendDescriptor;
pub use bits::BitString;
pub use circuit::{validate_circuit, Circuit, Gate, ModelError, Opcode, Violation};
pub use digest::{circuit_digest, schedule_digest, Digest};
pub use parse::{parse_circuit, ParseError};
pub use schedule::{lower_to_schedule, Channel, PulseSchedule, ScheduleError, Slot};
