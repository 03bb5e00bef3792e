//! Pulse-schedule representation: the provider-visible artifact a circuit is
//! lowered into before submission.
//!
//! The timing model is strictly sequential: one slot per gate, executed in
//! slot order. Removing a slot is therefore exactly the identity on the rest
//! of the schedule.

use std::fmt;

use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::model::circuit::{Circuit, Gate, ModelError, Opcode};

/// A pulse route: per-qubit drive channels carry single-qubit operations,
/// per-coupling control channels carry CX.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Drive(u32),
    Control(u32, u32),
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Drive(q) => write!(f, "D{q}"),
            Channel::Control(c, t) => write!(f, "U{c}_{t}"),
        }
    }
}

/// One schedule slot. Drive slots carry a single-qubit opcode (plus the RZ
/// angle when applicable); control slots always carry CX, so an ill-typed
/// channel/op pairing is unrepresentable.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Drive {
        qubit: u32,
        opcode: Opcode,
        param: Option<f64>,
    },
    Control {
        control: u32,
        target: u32,
    },
}

impl Slot {
    pub fn drive(qubit: u32, opcode: Opcode, param: Option<f64>) -> Result<Self, ModelError> {
        if opcode.arity() != 1 {
            return Err(ModelError::NotSingleQubit(opcode));
        }
        match (opcode.takes_angle(), param) {
            (true, None) => return Err(ModelError::AngleRequired),
            (false, Some(_)) => return Err(ModelError::AngleForbidden(opcode)),
            _ => {}
        }
        Ok(Slot::Drive {
            qubit,
            opcode,
            param,
        })
    }

    pub fn control(control: u32, target: u32) -> Self {
        Slot::Control { control, target }
    }

    pub fn channel(&self) -> Channel {
        match *self {
            Slot::Drive { qubit, .. } => Channel::Drive(qubit),
            Slot::Control { control, target } => Channel::Control(control, target),
        }
    }

    /// The gate this slot executes when read verbatim, with the qubit
    /// operands taken from the channel.
    pub fn to_gate(&self) -> Gate {
        match *self {
            Slot::Drive {
                qubit,
                opcode,
                param,
            } => match param {
                Some(angle) => Gate::rz(qubit, angle),
                None => Gate::single(opcode, qubit).expect("drive slot opcode is single-qubit"),
            },
            Slot::Control { control, target } => Gate::cx(control, target),
        }
    }

    /// Same operation, rerouted onto `channel`. The channel kind must match
    /// the slot kind.
    pub(crate) fn with_channel(&self, channel: Channel) -> Option<Slot> {
        match (self, channel) {
            (Slot::Drive { opcode, param, .. }, Channel::Drive(qubit)) => Some(Slot::Drive {
                qubit,
                opcode: *opcode,
                param: *param,
            }),
            (Slot::Control { .. }, Channel::Control(control, target)) => {
                Some(Slot::Control { control, target })
            }
            _ => None,
        }
    }

    fn encode_into(&self, e: &mut Encoder) {
        match *self {
            Slot::Drive {
                qubit,
                opcode,
                param,
            } => {
                e.put_u8(0);
                e.put_u32(qubit);
                e.put_u8(opcode.tag());
                if let Some(angle) = param {
                    e.put_f64_bits(angle);
                }
            }
            Slot::Control { control, target } => {
                e.put_u8(1);
                e.put_u32(control);
                e.put_u32(target);
            }
        }
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let at = d.pos();
        match d.u8()? {
            0 => {
                let qubit = d.u32()?;
                let op_at = d.pos();
                let tag = d.u8()?;
                let opcode = Opcode::from_tag(tag).ok_or(CodecError::InvalidTag {
                    what: "opcode",
                    tag,
                    at: op_at,
                })?;
                let param = if opcode.takes_angle() {
                    Some(d.f64_bits()?)
                } else {
                    None
                };
                Slot::drive(qubit, opcode, param).map_err(|_| CodecError::InvalidValue {
                    what: "drive slot opcode",
                    at: op_at,
                })
            }
            1 => {
                let control = d.u32()?;
                let target = d.u32()?;
                Ok(Slot::control(control, target))
            }
            tag => Err(CodecError::InvalidTag {
                what: "channel kind",
                tag,
                at,
            }),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("slot {index}: channel qubit {qubit} out of range for {num_qubits} qubits")]
    ChannelOutOfRange {
        index: usize,
        qubit: u32,
        num_qubits: u32,
    },
    #[error("slot {index}: control channel endpoints must be distinct")]
    ControlSelfLoop { index: usize },
}

/// Ordered slots over a fixed qubit count; the artifact the provider sees.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub num_qubits: u32,
    pub slots: Vec<Slot>,
}

impl PulseSchedule {
    pub fn new(num_qubits: u32, slots: Vec<Slot>) -> Self {
        Self { num_qubits, slots }
    }

    /// Checks channel indices against the declared qubit count.
    pub fn check_well_formed(&self) -> Result<(), ScheduleError> {
        for (index, slot) in self.slots.iter().enumerate() {
            let qubits: &[u32] = match slot {
                Slot::Drive { qubit, .. } => std::slice::from_ref(qubit),
                Slot::Control { control, target } => {
                    if control == target {
                        return Err(ScheduleError::ControlSelfLoop { index });
                    }
                    &[*control, *target][..]
                }
            };
            let qubits: Vec<u32> = qubits.to_vec();
            for qubit in qubits {
                if qubit >= self.num_qubits {
                    return Err(ScheduleError::ChannelOutOfRange {
                        index,
                        qubit,
                        num_qubits: self.num_qubits,
                    });
                }
            }
        }
        Ok(())
    }

    /// Canonical byte encoding: qubit count, slot count, slots in order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_capacity(8 + self.slots.len() * 10);
        self.encode_into(&mut e);
        e.into_bytes()
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_u32(self.num_qubits);
        e.put_u32(self.slots.len() as u32);
        for slot in &self.slots {
            slot.encode_into(e);
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let s = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(s)
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let num_qubits = d.u32()?;
        let count = d.u32()? as usize;
        let mut slots = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            slots.push(Slot::decode_from(d)?);
        }
        Ok(Self { num_qubits, slots })
    }
}

/// Lowers a validated circuit to its pulse schedule: one slot per gate, in
/// gate order. Single-qubit gates route to the drive channel of their qubit;
/// CX routes to the control channel of its ordered pair.
pub fn lower_to_schedule(circuit: &Circuit) -> PulseSchedule {
    let slots = circuit
        .gates
        .iter()
        .map(|gate| match gate.opcode() {
            Opcode::Cx => {
                let qs = gate.qubits();
                Slot::control(qs[0], qs[1])
            }
            opcode => Slot::drive(gate.qubits()[0], opcode, gate.param())
                .expect("validated gate lowers to a drive slot"),
        })
        .collect();
    PulseSchedule::new(circuit.num_qubits, slots)
}
