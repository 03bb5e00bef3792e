//! Gate-level circuit representation and validation against a backend.

use std::fmt;

use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::model::backend::BackendDescriptor;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("opcode {0} takes one qubit")]
    NotSingleQubit(Opcode),
    #[error("rz requires an angle parameter")]
    AngleRequired,
    #[error("opcode {0} takes no angle parameter")]
    AngleForbidden(Opcode),
    #[error("bit width mismatch: {left} vs {right}")]
    WidthMismatch { left: u8, right: u8 },
    #[error("bit width {0} exceeds 64")]
    WidthTooLarge(u32),
    #[error("invalid bit character {0:?}")]
    InvalidBitChar(char),
}

/// The fixed gate set accepted by every simulated backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    I,
    X,
    Y,
    Z,
    H,
    S,
    Sx,
    Rz,
    Cx,
}

impl Opcode {
    pub const ALL: [Opcode; 9] = [
        Opcode::I,
        Opcode::X,
        Opcode::Y,
        Opcode::Z,
        Opcode::H,
        Opcode::S,
        Opcode::Sx,
        Opcode::Rz,
        Opcode::Cx,
    ];

    pub fn arity(self) -> usize {
        match self {
            Opcode::Cx => 2,
            _ => 1,
        }
    }

    pub fn takes_angle(self) -> bool {
        self == Opcode::Rz
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::I => "i",
            Opcode::X => "x",
            Opcode::Y => "y",
            Opcode::Z => "z",
            Opcode::H => "h",
            Opcode::S => "s",
            Opcode::Sx => "sx",
            Opcode::Rz => "rz",
            Opcode::Cx => "cx",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Opcode::ALL.iter().copied().find(|op| op.mnemonic() == s)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Opcode::I => 0,
            Opcode::X => 1,
            Opcode::Y => 2,
            Opcode::Z => 3,
            Opcode::H => 4,
            Opcode::S => 5,
            Opcode::Sx => 6,
            Opcode::Rz => 7,
            Opcode::Cx => 8,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Opcode::ALL.iter().copied().find(|op| op.tag() == tag)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// One gate application. Constructed through [`Gate::single`], [`Gate::rz`],
/// or [`Gate::cx`] so the opcode arity and angle rules always hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    opcode: Opcode,
    qubits: [u32; 2],
    param: Option<f64>,
}

impl Gate {
    /// Parameter-free single-qubit gate.
    pub fn single(opcode: Opcode, qubit: u32) -> Result<Self, ModelError> {
        if opcode.arity() != 1 {
            return Err(ModelError::NotSingleQubit(opcode));
        }
        if opcode.takes_angle() {
            return Err(ModelError::AngleRequired);
        }
        Ok(Self {
            opcode,
            qubits: [qubit, 0],
            param: None,
        })
    }

    /// Z-axis rotation by `angle` radians. The angle is stored exactly as
    /// given; no normalization into [0, 2π).
    pub fn rz(qubit: u32, angle: f64) -> Self {
        Self {
            opcode: Opcode::Rz,
            qubits: [qubit, 0],
            param: Some(angle),
        }
    }

    /// Controlled-X. Operand distinctness is a circuit-level validation rule,
    /// not a construction error, so invalid circuits can be reported rather
    /// than rejected here.
    pub fn cx(control: u32, target: u32) -> Self {
        Self {
            opcode: Opcode::Cx,
            qubits: [control, target],
            param: None,
        }
    }

    pub fn opcode(&self) -> Opcode {
        self.opcode
    }

    pub fn qubits(&self) -> &[u32] {
        &self.qubits[..self.opcode.arity()]
    }

    pub fn param(&self) -> Option<f64> {
        self.param
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_u8(self.opcode.tag());
        for &q in self.qubits() {
            e.put_u32(q);
        }
        if let Some(angle) = self.param {
            e.put_f64_bits(angle);
        }
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let at = d.pos();
        let tag = d.u8()?;
        let opcode = Opcode::from_tag(tag).ok_or(CodecError::InvalidTag {
            what: "opcode",
            tag,
            at,
        })?;
        match opcode {
            Opcode::Cx => {
                let c = d.u32()?;
                let t = d.u32()?;
                Ok(Gate::cx(c, t))
            }
            Opcode::Rz => {
                let q = d.u32()?;
                let angle = d.f64_bits()?;
                Ok(Gate::rz(q, angle))
            }
            _ => {
                let q = d.u32()?;
                Ok(Gate::single(opcode, q).expect("single-qubit opcode"))
            }
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.opcode)?;
        for q in self.qubits() {
            write!(f, " {q}")?;
        }
        if let Some(angle) = self.param {
            write!(f, " {angle}")?;
        }
        Ok(())
    }
}

/// Gate-level program with a terminal measurement of every qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub num_qubits: u32,
    pub gates: Vec<Gate>,
    pub measure_all: bool,
}

impl Circuit {
    pub fn new(num_qubits: u32, gates: Vec<Gate>) -> Self {
        Self {
            num_qubits,
            gates,
            measure_all: true,
        }
    }

    /// Canonical byte encoding: `num_qubits`, gate count, gates in order,
    /// measure flag.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_capacity(8 + self.gates.len() * 10);
        self.encode_into(&mut e);
        e.into_bytes()
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_u32(self.num_qubits);
        e.put_u32(self.gates.len() as u32);
        for g in &self.gates {
            g.encode_into(e);
        }
        e.put_u8(self.measure_all as u8);
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let c = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(c)
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let num_qubits = d.u32()?;
        let count = d.u32()? as usize;
        let mut gates = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            gates.push(Gate::decode_from(d)?);
        }
        let at = d.pos();
        let measure_all = match d.u8()? {
            0 => false,
            1 => true,
            _ => return Err(CodecError::InvalidValue { what: "bool", at }),
        };
        Ok(Self {
            num_qubits,
            gates,
            measure_all,
        })
    }
}

/// One validation failure: the offending gate index (when gate-specific) and
/// a human-readable reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub gate_index: Option<usize>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gate_index {
            Some(i) => write!(f, "gate {i}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

/// Checks every circuit invariant against the target backend. Returns all
/// violations found instead of stopping at the first.
pub fn validate_circuit(circuit: &Circuit, backend: &BackendDescriptor) -> Vec<Violation> {
    let mut violations = Vec::new();
    if circuit.num_qubits == 0 {
        violations.push(Violation {
            gate_index: None,
            reason: "circuit must use at least one qubit".into(),
        });
    }
    if circuit.num_qubits > backend.num_qubits {
        violations.push(Violation {
            gate_index: None,
            reason: format!(
                "capacity exceeded: circuit uses {} qubits, backend {} has {}",
                circuit.num_qubits, backend.backend_id, backend.num_qubits
            ),
        });
    }
    if !circuit.measure_all {
        violations.push(Violation {
            gate_index: None,
            reason: "submitted circuits must end with a full measurement".into(),
        });
    }
    for (i, gate) in circuit.gates.iter().enumerate() {
        for &q in gate.qubits() {
            if q >= circuit.num_qubits {
                violations.push(Violation {
                    gate_index: Some(i),
                    reason: format!("qubit {q} out of range at gate {i}"),
                });
            }
        }
        if gate.opcode().arity() == 2 {
            let qs = gate.qubits();
            if qs[0] == qs[1] {
                violations.push(Violation {
                    gate_index: Some(i),
                    reason: format!("identical operands at gate {i}"),
                });
            }
        }
        if !backend.supported_opcodes.contains(&gate.opcode()) {
            violations.push(Violation {
                gate_index: Some(i),
                reason: format!(
                    "opcode {} not supported by backend {}",
                    gate.opcode(),
                    backend.backend_id
                ),
            });
        }
    }
    violations
}
