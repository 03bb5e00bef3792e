//! Exact statevector simulation: the execution model inside trusted
//! controllers and the oracle for de-obfuscation equivalence checks.
//!
//! Noise-free by design, with a small configurable qubit ceiling so exact
//! distributions stay cheap. Bit order follows the crate convention: bit `i`
//! of an outcome reports qubit `i`, qubit 0 leftmost.

use num_complex::Complex64;
use rand::RngExt;
use thiserror::Error;

use crate::model::{BitString, Circuit, Gate, Opcode};

/// Default cap on exactly simulated qubits.
pub const DEFAULT_QUBIT_CEILING: u32 = 12;

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("circuit uses {num_qubits} qubits, above the simulation ceiling {ceiling}")]
    CapacityExceeded { num_qubits: u32, ceiling: u32 },
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: u32, right: u32 },
    #[error("shot count must be positive")]
    ZeroShots,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(&'static str),
}

/// Normalized amplitudes over the 2^n computational basis states.
#[derive(Debug, Clone)]
pub struct StateVector {
    num_qubits: u32,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0…0⟩ on `num_qubits` qubits.
    pub fn zero_state(num_qubits: u32) -> Self {
        let mut amps = vec![Complex64::ZERO; 1 << num_qubits];
        amps[0] = Complex64::ONE;
        Self { num_qubits, amps }
    }

    pub fn num_qubits(&self) -> u32 {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies one gate. Qubit operands must be in range (validated circuits
    /// guarantee this).
    pub fn apply_gate(&mut self, gate: &Gate) {
        let qs = gate.qubits();
        match gate.opcode() {
            Opcode::I => {}
            Opcode::Cx => self.apply_cx(qs[0], qs[1]),
            opcode => self.apply_single(qs[0], single_qubit_matrix(opcode, gate.param())),
        }
        debug_assert!((self.norm_sqr() - 1.0).abs() < NORM_TOL);
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) {
        for gate in &circuit.gates {
            self.apply_gate(gate);
        }
    }

    fn apply_single(&mut self, qubit: u32, m: [Complex64; 4]) {
        let bit = 1usize << qubit;
        for base in 0..self.amps.len() {
            if base & bit != 0 {
                continue;
            }
            let paired = base | bit;
            let a0 = self.amps[base];
            let a1 = self.amps[paired];
            self.amps[base] = m[0] * a0 + m[1] * a1;
            self.amps[paired] = m[2] * a0 + m[3] * a1;
        }
    }

    fn apply_cx(&mut self, control: u32, target: u32) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for base in 0..self.amps.len() {
            if base & cbit != 0 && base & tbit == 0 {
                self.amps.swap(base, base | tbit);
            }
        }
    }

    /// Computational-basis outcome probabilities.
    pub fn probabilities(&self) -> Distribution {
        Distribution {
            num_qubits: self.num_qubits,
            probs: self.amps.iter().map(|a| a.norm_sqr()).collect(),
        }
    }
}

/// Runs `circuit` on |0…0⟩ under the default qubit ceiling.
pub fn simulate_statevector(circuit: &Circuit) -> Result<StateVector, SimError> {
    simulate_statevector_capped(circuit, DEFAULT_QUBIT_CEILING)
}

pub fn simulate_statevector_capped(
    circuit: &Circuit,
    ceiling: u32,
) -> Result<StateVector, SimError> {
    if circuit.num_qubits > ceiling {
        return Err(SimError::CapacityExceeded {
            num_qubits: circuit.num_qubits,
            ceiling,
        });
    }
    let mut state = StateVector::zero_state(circuit.num_qubits);
    state.apply_circuit(circuit);
    Ok(state)
}

/// Exact computational-basis distribution of `circuit` applied to |0…0⟩.
pub fn simulate_probabilities(circuit: &Circuit) -> Result<Distribution, SimError> {
    Ok(simulate_statevector(circuit)?.probabilities())
}

pub fn simulate_probabilities_capped(
    circuit: &Circuit,
    ceiling: u32,
) -> Result<Distribution, SimError> {
    Ok(simulate_statevector_capped(circuit, ceiling)?.probabilities())
}

/// True iff a unit-modulus λ exists with `max_i |a_i − λ·b_i| ≤ tol`. λ is
/// fixed from the largest-magnitude amplitude of `b`.
pub fn equiv_up_to_global_phase(
    a: &StateVector,
    b: &StateVector,
    tol: f64,
) -> Result<bool, SimError> {
    if a.num_qubits != b.num_qubits {
        return Err(SimError::DimensionMismatch {
            left: a.num_qubits,
            right: b.num_qubits,
        });
    }
    let (ref_idx, _) = b
        .amps
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| x.norm_sqr().total_cmp(&y.norm_sqr()))
        .expect("statevector is non-empty");
    let lambda = a.amps[ref_idx] / b.amps[ref_idx];
    if (lambda.norm() - 1.0).abs() > tol {
        // magnitudes already disagree at the reference amplitude
        return Ok(false);
    }
    let lambda = lambda / lambda.norm();
    Ok(a.amps
        .iter()
        .zip(&b.amps)
        .all(|(x, y)| (x - lambda * y).norm() <= tol))
}

/// Probabilities over n-bit outcomes, indexed by basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    num_qubits: u32,
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates non-negativity and unit total probability (tolerance 1e-9).
    pub fn from_probs(num_qubits: u32, probs: Vec<f64>) -> Result<Self, SimError> {
        if probs.len() != 1 << num_qubits {
            return Err(SimError::InvalidDistribution("wrong outcome count"));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(SimError::InvalidDistribution("negative probability"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(SimError::InvalidDistribution("probabilities do not sum to 1"));
        }
        Ok(Self { num_qubits, probs })
    }

    pub fn num_qubits(&self) -> u32 {
        self.num_qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, outcome: &BitString) -> f64 {
        assert_eq!(outcome.width() as u32, self.num_qubits);
        self.probs[outcome.index() as usize]
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (BitString, f64)> + '_ {
        let width = self.num_qubits as u8;
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (BitString::from_index(i as u64, width), p))
    }
}

/// Total variation distance `½·Σ_x |p(x) − q(x)|` in [0, 1].
pub fn total_variation_distance(p: &Distribution, q: &Distribution) -> Result<f64, SimError> {
    if p.num_qubits != q.num_qubits {
        return Err(SimError::DimensionMismatch {
            left: p.num_qubits,
            right: q.num_qubits,
        });
    }
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0)
}

/// Draws `shots` independent outcomes. Reproducible bit-for-bit under a fixed
/// seeded generator.
pub fn sample_shots<R: RngExt>(
    dist: &Distribution,
    shots: u32,
    rng: &mut R,
) -> Result<Vec<BitString>, SimError> {
    if shots == 0 {
        return Err(SimError::ZeroShots);
    }
    let mut cumulative = Vec::with_capacity(dist.probs.len());
    let mut acc = 0.0;
    for &p in &dist.probs {
        acc += p;
        cumulative.push(acc);
    }
    let width = dist.num_qubits as u8;
    let last = dist.probs.len() - 1;
    let mut out = Vec::with_capacity(shots as usize);
    for _ in 0..shots {
        let u: f64 = rng.random_range(0.0..1.0);
        let idx = cumulative.partition_point(|&c| c <= u).min(last);
        out.push(BitString::from_index(idx as u64, width));
    }
    Ok(out)
}

fn single_qubit_matrix(opcode: Opcode, param: Option<f64>) -> [Complex64; 4] {
    let zero = Complex64::ZERO;
    let one = Complex64::ONE;
    let i = Complex64::I;
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    match opcode {
        Opcode::X => [zero, one, one, zero],
        Opcode::Y => [zero, -i, i, zero],
        Opcode::Z => [one, zero, zero, -one],
        Opcode::H => [h, h, h, -h],
        Opcode::S => [one, zero, zero, i],
        Opcode::Sx => {
            let p = Complex64::new(0.5, 0.5);
            let m = Complex64::new(0.5, -0.5);
            [p, m, m, p]
        }
        Opcode::Rz => {
            let theta = param.expect("rz carries its angle");
            let half = theta / 2.0;
            [
                Complex64::from_polar(1.0, -half),
                zero,
                zero,
                Complex64::from_polar(1.0, half),
            ]
        }
        Opcode::I | Opcode::Cx => unreachable!("handled by apply_gate"),
    }
}
