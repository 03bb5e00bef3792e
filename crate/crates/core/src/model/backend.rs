//! Backend descriptors: the per-quantum-computer facts a client needs before
//! preparing a submission.

use std::collections::BTreeSet;

use crate::envelope::KeyId;
use crate::model::circuit::Opcode;

/// Public description of one backend. The metadata key handle resolves to the
/// backend's static agreement key in a key registry; the private half never
/// leaves the backend's trust boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub num_qubits: u32,
    pub metadata_public_key: KeyId,
    pub supported_opcodes: BTreeSet<Opcode>,
}

impl BackendDescriptor {
    pub fn new(
        backend_id: impl Into<String>,
        num_qubits: u32,
        metadata_public_key: KeyId,
        supported_opcodes: BTreeSet<Opcode>,
    ) -> Self {
        Self {
            backend_id: backend_id.into(),
            num_qubits,
            metadata_public_key,
            supported_opcodes,
        }
    }

    /// Descriptor for a simulated backend supporting the full gate set, with
    /// the conventional metadata key id for `backend_id`.
    pub fn simulated(backend_id: &str, num_qubits: u32) -> Self {
        Self {
            backend_id: backend_id.to_string(),
            num_qubits,
            metadata_public_key: KeyId::backend_metadata(backend_id),
            supported_opcodes: Opcode::ALL.iter().copied().collect(),
        }
    }
}
