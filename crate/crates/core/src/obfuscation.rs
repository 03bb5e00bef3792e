//! Client-side obfuscating transforms over pulse schedules, and the metadata
//! that inverts them inside a trust boundary.
//!
//! Two mechanisms compose: dummy drive slots that the trusted controller
//! later attenuates away, and a relabeling of drive and control channels that
//! the controller un-swaps. Composition order is fixed: dummies are inserted
//! first, then channels are permuted; the controller applies the inverse
//! order (which commutes, since permutation preserves slot positions).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::RngExt;
use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::envelope::{SymmetricKey, SYMMETRIC_KEY_LEN};
use crate::model::{
    schedule_digest, BackendDescriptor, Channel, Circuit, Digest, PulseSchedule, Slot,
};
use crate::model::Opcode;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ObfuscationError {
    #[error("dummy opcode pool must be nonempty when dummy_count > 0")]
    EmptyDummyPool,
    #[error("dummy pool opcode {0} is not single-qubit")]
    PoolOpcodeNotSingleQubit(Opcode),
    #[error("dummy slot index {index} out of range for schedule of {len} slots")]
    DummyIndexOutOfRange { index: u32, len: usize },
    #[error("dummy slot indices must be strictly increasing")]
    DummyIndicesNotIncreasing,
    #[error("invalid channel permutation: {0}")]
    InvalidPermutation(&'static str),
}

/// Which obfuscating mechanisms a submission uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeLabel {
    DummyOnly,
    SwapOnly,
    Combined,
}

impl SchemeLabel {
    pub const ALL: [SchemeLabel; 3] = [
        SchemeLabel::DummyOnly,
        SchemeLabel::SwapOnly,
        SchemeLabel::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeLabel::DummyOnly => "dummy-only",
            SchemeLabel::SwapOnly => "swap-only",
            SchemeLabel::Combined => "combined",
        }
    }
}

impl fmt::Display for SchemeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected dummy-only, swap-only, or combined)"))
    }
}

/// Knobs for the obfuscating transforms. The paper-level mechanisms carry no
/// insertion policy, so placement and content are uniform draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscationParams {
    pub dummy_count: u32,
    pub dummy_opcode_pool: Vec<Opcode>,
    pub enable_swap: bool,
    pub scheme: SchemeLabel,
}

impl ObfuscationParams {
    pub const DEFAULT_POOL: [Opcode; 3] = [Opcode::X, Opcode::H, Opcode::Rz];

    /// Parameters for a scheme. The default dummy count is 3 per qubit — an
    /// arbitrary but documented knob, not a calibrated security level.
    pub fn for_scheme(scheme: SchemeLabel, num_qubits: u32, dummy_count: Option<u32>) -> Self {
        let default_dummies = 3 * num_qubits;
        match scheme {
            SchemeLabel::DummyOnly => Self {
                dummy_count: dummy_count.unwrap_or(default_dummies),
                dummy_opcode_pool: Self::DEFAULT_POOL.to_vec(),
                enable_swap: false,
                scheme,
            },
            SchemeLabel::SwapOnly => Self {
                dummy_count: 0,
                dummy_opcode_pool: Self::DEFAULT_POOL.to_vec(),
                enable_swap: true,
                scheme,
            },
            SchemeLabel::Combined => Self {
                dummy_count: dummy_count.unwrap_or(default_dummies),
                dummy_opcode_pool: Self::DEFAULT_POOL.to_vec(),
                enable_swap: true,
                scheme,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ObfuscationError> {
        if self.dummy_count > 0 && self.dummy_opcode_pool.is_empty() {
            return Err(ObfuscationError::EmptyDummyPool);
        }
        for &op in &self.dummy_opcode_pool {
            if op.arity() != 1 {
                return Err(ObfuscationError::PoolOpcodeNotSingleQubit(op));
            }
        }
        Ok(())
    }
}

/// A relabeling of channels: a bijection on drive channels and an independent
/// bijection on the control channels present in a schedule. Drive never maps
/// to control or vice versa.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelPermutation {
    drive: Vec<u32>,
    control: BTreeMap<(u32, u32), (u32, u32)>,
}

impl ChannelPermutation {
    pub fn identity(num_qubits: u32, control_pairs: &BTreeSet<(u32, u32)>) -> Self {
        Self {
            drive: (0..num_qubits).collect(),
            control: control_pairs.iter().map(|&p| (p, p)).collect(),
        }
    }

    /// Builds a permutation from explicit maps, validating bijectivity.
    pub fn from_maps(
        drive: Vec<u32>,
        control: BTreeMap<(u32, u32), (u32, u32)>,
    ) -> Result<Self, ObfuscationError> {
        let perm = Self { drive, control };
        perm.validate(perm.drive.len() as u32)?;
        Ok(perm)
    }

    /// Uniformly random permutation of all drive channels and of the given
    /// control pairs.
    pub fn random<R: RngExt>(
        num_qubits: u32,
        control_pairs: &BTreeSet<(u32, u32)>,
        rng: &mut R,
    ) -> Self {
        let mut drive: Vec<u32> = (0..num_qubits).collect();
        shuffle(&mut drive, rng);
        let sources: Vec<(u32, u32)> = control_pairs.iter().copied().collect();
        let mut targets = sources.clone();
        shuffle(&mut targets, rng);
        Self {
            drive,
            control: sources.into_iter().zip(targets).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.drive.iter().enumerate().all(|(i, &q)| i as u32 == q)
            && self.control.iter().all(|(k, v)| k == v)
    }

    pub fn drive_map(&self) -> &[u32] {
        &self.drive
    }

    pub fn control_map(&self) -> &BTreeMap<(u32, u32), (u32, u32)> {
        &self.control
    }

    pub fn apply_channel(&self, channel: Channel) -> Channel {
        match channel {
            Channel::Drive(q) => Channel::Drive(self.drive[q as usize]),
            Channel::Control(c, t) => {
                let (c2, t2) = *self.control.get(&(c, t)).unwrap_or(&(c, t));
                Channel::Control(c2, t2)
            }
        }
    }

    /// Reroutes every slot through the permutation. Slot order and count are
    /// untouched.
    pub fn apply_schedule(&self, schedule: &PulseSchedule) -> PulseSchedule {
        let slots = schedule
            .slots
            .iter()
            .map(|slot| {
                slot.with_channel(self.apply_channel(slot.channel()))
                    .expect("permutation preserves channel kind")
            })
            .collect();
        PulseSchedule::new(schedule.num_qubits, slots)
    }

    pub fn inverse(&self) -> ChannelPermutation {
        let mut drive = vec![0u32; self.drive.len()];
        for (src, &dst) in self.drive.iter().enumerate() {
            drive[dst as usize] = src as u32;
        }
        let control = self.control.iter().map(|(&k, &v)| (v, k)).collect();
        ChannelPermutation { drive, control }
    }

    /// Bijection checks: the drive map is a permutation of `0..num_qubits`
    /// and the control map permutes its own key set.
    pub fn validate(&self, num_qubits: u32) -> Result<(), ObfuscationError> {
        if self.drive.len() != num_qubits as usize {
            return Err(ObfuscationError::InvalidPermutation(
                "drive map size does not match qubit count",
            ));
        }
        let mut seen = vec![false; self.drive.len()];
        for &q in &self.drive {
            let idx = q as usize;
            if idx >= seen.len() || seen[idx] {
                return Err(ObfuscationError::InvalidPermutation(
                    "drive map is not a bijection",
                ));
            }
            seen[idx] = true;
        }
        let keys: BTreeSet<_> = self.control.keys().copied().collect();
        let values: BTreeSet<_> = self.control.values().copied().collect();
        if keys != values {
            return Err(ObfuscationError::InvalidPermutation(
                "control map is not a bijection on its channel set",
            ));
        }
        Ok(())
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_u32(self.drive.len() as u32);
        for &q in &self.drive {
            e.put_u32(q);
        }
        e.put_u32(self.control.len() as u32);
        for (&(a, b), &(c, d)) in &self.control {
            e.put_u32(a);
            e.put_u32(b);
            e.put_u32(c);
            e.put_u32(d);
        }
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let n = d.u32()? as usize;
        let mut drive = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            drive.push(d.u32()?);
        }
        let m = d.u32()? as usize;
        let mut control = BTreeMap::new();
        for _ in 0..m {
            let k = (d.u32()?, d.u32()?);
            let v = (d.u32()?, d.u32()?);
            control.insert(k, v);
        }
        Ok(Self { drive, control })
    }
}

fn shuffle<T, R: RngExt>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Inserts `params.dummy_count` dummy drive slots at uniform positions.
/// Returns the new schedule and the sorted positions of the dummies within
/// it; deleting exactly those positions restores the input.
pub fn insert_dummies<R: RngExt>(
    schedule: &PulseSchedule,
    params: &ObfuscationParams,
    rng: &mut R,
) -> Result<(PulseSchedule, Vec<u32>), ObfuscationError> {
    params.validate()?;
    let mut slots = schedule.slots.clone();
    let mut positions: Vec<u32> = Vec::with_capacity(params.dummy_count as usize);
    for _ in 0..params.dummy_count {
        let pos = rng.random_range(0..=slots.len()) as u32;
        let qubit = rng.random_range(0..schedule.num_qubits);
        let opcode = params.dummy_opcode_pool
            [rng.random_range(0..params.dummy_opcode_pool.len())];
        let param = opcode
            .takes_angle()
            .then(|| rng.random_range(0.0..std::f64::consts::TAU));
        let dummy = Slot::drive(qubit, opcode, param).expect("pool validated as single-qubit");
        slots.insert(pos as usize, dummy);
        for p in &mut positions {
            if *p >= pos {
                *p += 1;
            }
        }
        positions.push(pos);
    }
    positions.sort_unstable();
    Ok((PulseSchedule::new(schedule.num_qubits, slots), positions))
}

/// Deletes the slots at `sorted_indices` (strictly increasing). The exact
/// inverse of [`insert_dummies`] for the indices it returned.
pub fn delete_slots(
    schedule: &PulseSchedule,
    sorted_indices: &[u32],
) -> Result<PulseSchedule, ObfuscationError> {
    let len = schedule.slots.len();
    for pair in sorted_indices.windows(2) {
        if pair[0] >= pair[1] {
            return Err(ObfuscationError::DummyIndicesNotIncreasing);
        }
    }
    if let Some(&last) = sorted_indices.last() {
        if last as usize >= len {
            return Err(ObfuscationError::DummyIndexOutOfRange { index: last, len });
        }
    }
    let mut to_delete = sorted_indices.iter().copied().peekable();
    let slots = schedule
        .slots
        .iter()
        .enumerate()
        .filter_map(|(i, slot)| {
            if to_delete.peek() == Some(&(i as u32)) {
                to_delete.next();
                None
            } else {
                Some(slot.clone())
            }
        })
        .collect();
    Ok(PulseSchedule::new(schedule.num_qubits, slots))
}

/// Relabels every slot's channel through a fresh uniform permutation (or the
/// identity when disabled). Slot order and count never change.
pub fn permute_channels<R: RngExt>(
    schedule: &PulseSchedule,
    enable: bool,
    rng: &mut R,
) -> (PulseSchedule, ChannelPermutation) {
    let control_pairs: BTreeSet<(u32, u32)> = schedule
        .slots
        .iter()
        .filter_map(|slot| match slot.channel() {
            Channel::Control(c, t) => Some((c, t)),
            Channel::Drive(_) => None,
        })
        .collect();
    let permutation = if enable {
        ChannelPermutation::random(schedule.num_qubits, &control_pairs, rng)
    } else {
        ChannelPermutation::identity(schedule.num_qubits, &control_pairs)
    };
    (permutation.apply_schedule(schedule), permutation)
}

/// Reads a schedule verbatim, the way an untrusted provider would execute it:
/// each slot becomes the gate its channel implies, in slot order.
pub fn naive_interpret(schedule: &PulseSchedule) -> Circuit {
    Circuit::new(
        schedule.num_qubits,
        schedule.slots.iter().map(Slot::to_gate).collect(),
    )
}

/// Ties sealed metadata to one schedule on one backend; used as AEAD
/// associated data so the blob opens only in that exact context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataBinding {
    pub backend_id: String,
    pub schedule_digest: Digest,
}

impl MetadataBinding {
    pub fn new(backend_id: impl Into<String>, schedule: &PulseSchedule) -> Self {
        Self {
            backend_id: backend_id.into(),
            schedule_digest: schedule_digest(schedule),
        }
    }

    /// Canonical associated-data bytes for sealing and opening.
    pub fn associated_data(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.put_str(&self.backend_id);
        self.schedule_digest.encode_into(&mut e);
        e.into_bytes()
    }

    fn encode_into(&self, e: &mut Encoder) {
        e.put_str(&self.backend_id);
        self.schedule_digest.encode_into(e);
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            backend_id: d.str()?,
            schedule_digest: Digest::decode_from(d)?,
        })
    }
}

/// Everything a trust boundary needs to invert the obfuscation and seal its
/// response. Exists only sealed outside a trust boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscationMetadata {
    pub dummy_slot_indices: Vec<u32>,
    pub channel_permutation: ChannelPermutation,
    pub response_key: SymmetricKey,
    pub binding: MetadataBinding,
}

impl ObfuscationMetadata {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.put_u32(self.dummy_slot_indices.len() as u32);
        for &i in &self.dummy_slot_indices {
            e.put_u32(i);
        }
        self.channel_permutation.encode_into(&mut e);
        e.put_raw(self.response_key.as_bytes());
        self.binding.encode_into(&mut e);
        e.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let n = d.u32()? as usize;
        let mut dummy_slot_indices = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            dummy_slot_indices.push(d.u32()?);
        }
        let channel_permutation = ChannelPermutation::decode_from(&mut d)?;
        let key_bytes: [u8; SYMMETRIC_KEY_LEN] =
            d.raw(SYMMETRIC_KEY_LEN)?.try_into().unwrap();
        let binding = MetadataBinding::decode_from(&mut d)?;
        d.finish()?;
        Ok(Self {
            dummy_slot_indices,
            channel_permutation,
            response_key: SymmetricKey::from_bytes(key_bytes),
            binding,
        })
    }
}

/// Assembles and validates metadata against the obfuscated schedule it will
/// accompany. The binding digest is computed here, from that schedule.
pub fn build_metadata(
    dummy_indices: Vec<u32>,
    permutation: ChannelPermutation,
    response_key: SymmetricKey,
    backend: &BackendDescriptor,
    obf_schedule: &PulseSchedule,
) -> Result<ObfuscationMetadata, ObfuscationError> {
    let len = obf_schedule.slots.len();
    for pair in dummy_indices.windows(2) {
        if pair[0] >= pair[1] {
            return Err(ObfuscationError::DummyIndicesNotIncreasing);
        }
    }
    if let Some(&last) = dummy_indices.last() {
        if last as usize >= len {
            return Err(ObfuscationError::DummyIndexOutOfRange { index: last, len });
        }
    }
    permutation.validate(obf_schedule.num_qubits)?;
    Ok(ObfuscationMetadata {
        dummy_slot_indices: dummy_indices,
        channel_permutation: permutation,
        response_key,
        binding: MetadataBinding::new(backend.backend_id.clone(), obf_schedule),
    })
}

/// An obfuscated schedule with the plaintext inverting data, before sealing.
#[derive(Debug, Clone)]
pub struct ObfuscatedSchedule {
    pub schedule: PulseSchedule,
    pub dummy_indices: Vec<u32>,
    pub permutation: ChannelPermutation,
}

/// Full client-side transform: insert dummies, then permute channels.
pub fn obfuscate_schedule<R: RngExt>(
    schedule: &PulseSchedule,
    params: &ObfuscationParams,
    rng: &mut R,
) -> Result<ObfuscatedSchedule, ObfuscationError> {
    let (with_dummies, dummy_indices) = insert_dummies(schedule, params, rng)?;
    let (permuted, permutation) = permute_channels(&with_dummies, params.enable_swap, rng);
    Ok(ObfuscatedSchedule {
        schedule: permuted,
        dummy_indices,
        permutation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lower_to_schedule, Gate};
    use crate::sim::{equiv_up_to_global_phase, simulate_statevector};
    use crate::workload::random_circuit_in;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn single_h() -> PulseSchedule {
        PulseSchedule::new(1, vec![Slot::drive(0, Opcode::H, None).unwrap()])
    }

    #[test]
    fn zero_dummies_is_identity() {
        let params = ObfuscationParams {
            dummy_count: 0,
            dummy_opcode_pool: vec![],
            enable_swap: false,
            scheme: SchemeLabel::DummyOnly,
        };
        let s = single_h();
        let (out, idx) = insert_dummies(&s, &params, &mut rng(0)).unwrap();
        assert_eq!(out, s);
        assert!(idx.is_empty());
    }

    #[test]
    fn one_dummy_extends_and_deletion_restores() {
        let params = ObfuscationParams::for_scheme(SchemeLabel::DummyOnly, 1, Some(1));
        let s = single_h();
        let (out, idx) = insert_dummies(&s, &params, &mut rng(1)).unwrap();
        assert_eq!(out.slots.len(), 2);
        assert_eq!(idx.len(), 1);
        assert_eq!(delete_slots(&out, &idx).unwrap(), s);
    }

    #[test]
    fn insertion_is_deterministic_under_seed() {
        let params = ObfuscationParams::for_scheme(SchemeLabel::DummyOnly, 2, Some(5));
        let s = lower_to_schedule(&Circuit::new(
            2,
            vec![Gate::single(Opcode::H, 0).unwrap(), Gate::cx(0, 1)],
        ));
        let a = insert_dummies(&s, &params, &mut rng(9)).unwrap();
        let b = insert_dummies(&s, &params, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn many_dummies_delete_back_to_input() {
        let mut r = rng(2);
        for case in 0..50u64 {
            let c = random_circuit_in(&mut r, 1..=5, 0..=20);
            let s = lower_to_schedule(&c);
            let params =
                ObfuscationParams::for_scheme(SchemeLabel::DummyOnly, c.num_qubits, Some(7));
            let (out, idx) = insert_dummies(&s, &params, &mut r).unwrap();
            assert_eq!(out.slots.len(), s.slots.len() + 7, "case {case}");
            assert_eq!(delete_slots(&out, &idx).unwrap(), s, "case {case}");
        }
    }

    #[test]
    fn disabled_permutation_is_identity() {
        let s = single_h();
        let (out, p) = permute_channels(&s, false, &mut rng(3));
        assert_eq!(out, s);
        assert!(p.is_identity());
    }

    #[test]
    fn drive_swap_relabels_slot() {
        let perm = ChannelPermutation {
            drive: vec![1, 0],
            control: BTreeMap::new(),
        };
        let s = PulseSchedule::new(2, vec![Slot::drive(0, Opcode::X, None).unwrap()]);
        let out = perm.apply_schedule(&s);
        assert_eq!(out.slots, vec![Slot::drive(1, Opcode::X, None).unwrap()]);
    }

    #[test]
    fn permutation_inverse_restores_any_schedule() {
        let mut r = rng(4);
        for _ in 0..50 {
            let c = random_circuit_in(&mut r, 2..=6, 1..=25);
            let s = lower_to_schedule(&c);
            let (permuted, perm) = permute_channels(&s, true, &mut r);
            assert_eq!(permuted.slots.len(), s.slots.len());
            assert_eq!(perm.inverse().apply_schedule(&permuted), s);
        }
    }

    #[test]
    fn naive_interpret_inverts_lowering() {
        let c = Circuit::new(
            3,
            vec![
                Gate::single(Opcode::X, 1).unwrap(),
                Gate::rz(2, 0.5),
                Gate::cx(2, 0),
            ],
        );
        assert_eq!(naive_interpret(&lower_to_schedule(&c)), c);

        let single = PulseSchedule::new(2, vec![Slot::drive(1, Opcode::X, None).unwrap()]);
        let interpreted = naive_interpret(&single);
        assert_eq!(
            interpreted.gates,
            vec![Gate::single(Opcode::X, 1).unwrap()]
        );
        assert!(interpreted.measure_all);

        let empty = PulseSchedule::new(2, vec![]);
        assert!(naive_interpret(&empty).gates.is_empty());
    }

    #[test]
    fn metadata_binding_matches_schedule() {
        let backend = BackendDescriptor::simulated("sim-a", 4);
        let s = single_h();
        let key = SymmetricKey::from_bytes([7u8; 32]);
        let md = build_metadata(
            vec![],
            ChannelPermutation::identity(1, &BTreeSet::new()),
            key,
            &backend,
            &s,
        )
        .unwrap();
        assert_eq!(md.binding.schedule_digest, schedule_digest(&s));
        assert_eq!(md.binding.backend_id, "sim-a");
        // neutral metadata makes deobfuscation the identity
        let restored = md
            .channel_permutation
            .inverse()
            .apply_schedule(&delete_slots(&s, &md.dummy_slot_indices).unwrap());
        assert_eq!(restored, s);
    }

    #[test]
    fn metadata_rejects_bad_indices() {
        let backend = BackendDescriptor::simulated("sim-a", 4);
        let s = single_h();
        let key = SymmetricKey::from_bytes([7u8; 32]);
        let perm = ChannelPermutation::identity(1, &BTreeSet::new());
        assert_eq!(
            build_metadata(vec![1], perm.clone(), key.clone(), &backend, &s),
            Err(ObfuscationError::DummyIndexOutOfRange { index: 1, len: 1 })
        );
        assert_eq!(
            build_metadata(vec![0, 0], perm, key, &backend, &s),
            Err(ObfuscationError::DummyIndicesNotIncreasing)
        );
    }

    #[test]
    fn metadata_encoding_round_trips() {
        let mut r = rng(5);
        let c = random_circuit_in(&mut r, 2..=4, 5..=15);
        let s = lower_to_schedule(&c);
        let params = ObfuscationParams::for_scheme(SchemeLabel::Combined, c.num_qubits, None);
        let obf = obfuscate_schedule(&s, &params, &mut r).unwrap();
        let backend = BackendDescriptor::simulated("sim-a", 6);
        let md = build_metadata(
            obf.dummy_indices,
            obf.permutation,
            SymmetricKey::generate(&mut r),
            &backend,
            &obf.schedule,
        )
        .unwrap();
        assert_eq!(ObfuscationMetadata::from_bytes(&md.to_bytes()).unwrap(), md);
    }

    #[test]
    fn full_round_trip_preserves_statevector() {
        let mut r = rng(6);
        for scheme in SchemeLabel::ALL {
            for case in 0..40u64 {
                let c = random_circuit_in(&mut r, 1..=6, 0..=30);
                let s = lower_to_schedule(&c);
                let params = ObfuscationParams::for_scheme(scheme, c.num_qubits, None);
                let obf = obfuscate_schedule(&s, &params, &mut r).unwrap();
                let restored = obf
                    .permutation
                    .inverse()
                    .apply_schedule(&delete_slots(&obf.schedule, &obf.dummy_indices).unwrap());
                let recovered = naive_interpret(&restored);
                let original = simulate_statevector(&c).unwrap();
                let roundtrip = simulate_statevector(&recovered).unwrap();
                assert!(
                    equiv_up_to_global_phase(&original, &roundtrip, 1e-9).unwrap(),
                    "{scheme} case {case}"
                );
            }
        }
    }

    #[test]
    fn permutation_validation_catches_non_bijections() {
        let bad = ChannelPermutation {
            drive: vec![0, 0],
            control: BTreeMap::new(),
        };
        assert!(bad.validate(2).is_err());
        let bad_control = ChannelPermutation {
            drive: vec![0, 1],
            control: [((0, 1), (1, 0))].into_iter().collect(),
        };
        assert!(bad_control.validate(2).is_err());
    }
}
