//! Seeded random circuit generation for demos, property tests, and the
//! acceptance suite.

use rand::RngExt;

use crate::model::{Circuit, Gate, Opcode};

const SINGLE_QUBIT_POOL: [Opcode; 7] = [
    Opcode::X,
    Opcode::Y,
    Opcode::Z,
    Opcode::H,
    Opcode::S,
    Opcode::Sx,
    Opcode::Rz,
];

/// Uniformly random circuit over the full gate set: `num_gates` gates on
/// `num_qubits` qubits, CX included once two qubits exist, RZ angles uniform
/// in [0, 2π). Always ends in a full measurement.
pub fn random_circuit<R: RngExt>(rng: &mut R, num_qubits: u32, num_gates: u32) -> Circuit {
    assert!(num_qubits >= 1);
    let mut gates = Vec::with_capacity(num_gates as usize);
    for _ in 0..num_gates {
        let make_cx = num_qubits >= 2 && rng.random_range(0..4) == 0;
        if make_cx {
            let control = rng.random_range(0..num_qubits);
            let mut target = rng.random_range(0..num_qubits - 1);
            if target >= control {
                target += 1;
            }
            gates.push(Gate::cx(control, target));
        } else {
            let opcode = SINGLE_QUBIT_POOL[rng.random_range(0..SINGLE_QUBIT_POOL.len())];
            let qubit = rng.random_range(0..num_qubits);
            if opcode == Opcode::Rz {
                gates.push(Gate::rz(qubit, rng.random_range(0.0..std::f64::consts::TAU)));
            } else {
                gates.push(Gate::single(opcode, qubit).expect("pool is single-qubit"));
            }
        }
    }
    Circuit::new(num_qubits, gates)
}

/// Random circuit with qubit and gate counts drawn from inclusive ranges.
pub fn random_circuit_in<R: RngExt>(
    rng: &mut R,
    qubits: std::ops::RangeInclusive<u32>,
    gates: std::ops::RangeInclusive<u32>,
) -> Circuit {
    let num_qubits = rng.random_range(qubits);
    let num_gates = rng.random_range(gates);
    random_circuit(rng, num_qubits, num_gates)
}
