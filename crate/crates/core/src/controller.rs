//! Simulated trust boundary of a quantum machine: opens sealed metadata,
//! attenuates dummy slots, un-swaps channels, executes shots with per-shot
//! X-flip output randomization, and seals the flip masks.
//!
//! One controller exists per backend and owns that backend's static secret.
//! The service reaches it only through the [`TrustBoundary`] trait, so the
//! secret never becomes reachable from service code — the in-process stand-in
//! for hardware isolation.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{CodecError, Decoder, Encoder};
use crate::envelope::{
    derive_backend_key_from_static, open, seal, AuthenticationFailure, BackendStaticSecret, KeyId,
    SealedBlob, SymmetricKey,
};
use crate::model::{BitString, Circuit, PulseSchedule};
use crate::obfuscation::{
    delete_slots, naive_interpret, ChannelPermutation, MetadataBinding, ObfuscationMetadata,
};
use crate::service::{BoundaryError, ExecutionOutput, JobHandoff, JobId, TrustBoundary};
use crate::sim::{
    sample_shots, simulate_probabilities_capped, SimError, DEFAULT_QUBIT_CEILING,
};

#[derive(Debug, Error)]
pub enum ControllerError {
    /// Uniform rejection of anything unauthentic: wrong backend, tampered
    /// blob, or substituted schedule. No detail leaks.
    #[error("metadata authentication failure")]
    Authentication,
    /// Metadata opened but does not fit the schedule — a mismatch that
    /// authentication should have made impossible. Fatal.
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("capacity error: {0}")]
    Capacity(SimError),
}

impl From<ControllerError> for BoundaryError {
    fn from(err: ControllerError) -> Self {
        match err {
            ControllerError::Authentication => BoundaryError::AuthenticationFailure,
            ControllerError::Integrity(_) => BoundaryError::Integrity,
            ControllerError::Capacity(_) => BoundaryError::Capacity,
        }
    }
}

/// The opened metadata, ready to invert a specific schedule. Exists only
/// inside the trust boundary and has no serialized form.
pub struct DeobfuscationPlan {
    dummy_slot_indices: Vec<u32>,
    inverse_channel_permutation: ChannelPermutation,
    response_key: SymmetricKey,
    shots: u32,
    job_id: JobId,
}

impl DeobfuscationPlan {
    pub fn shots(&self) -> u32 {
        self.shots
    }

    pub fn job_id(&self) -> &JobId {
        &self.job_id
    }

    pub fn response_key(&self) -> &SymmetricKey {
        &self.response_key
    }
}

/// Per-shot flip masks, in shot order. Sealed before leaving the boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputMetadata {
    pub flip_masks: Vec<BitString>,
}

impl OutputMetadata {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.put_u32(self.flip_masks.len() as u32);
        for mask in &self.flip_masks {
            mask.encode_into(&mut e);
        }
        e.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let n = d.u32()? as usize;
        let mut flip_masks = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            flip_masks.push(BitString::decode_from(&mut d)?);
        }
        d.finish()?;
        Ok(Self { flip_masks })
    }
}

/// How the controller draws its per-job randomness.
#[derive(Debug, Clone, Copy)]
pub enum SeedMode {
    /// Fresh entropy per job (production behavior).
    SystemEntropy,
    /// Seeds derived from a fixed base and the job id — the test-harness
    /// mode that makes runs reproducible and alignable.
    Deterministic(u64),
}

/// Derivation used in deterministic mode; public so a test harness can align
/// an independent direct simulation with the controller's draws.
pub fn derive_shot_seed(base: u64, job_id: &JobId) -> u64 {
    derive_seed(b"qtee.controller.shots.v1", base, job_id)
}

pub fn derive_mask_seed(base: u64, job_id: &JobId) -> u64 {
    derive_seed(b"qtee.controller.masks.v1", base, job_id)
}

fn derive_seal_seed(base: u64, job_id: &JobId) -> u64 {
    derive_seed(b"qtee.controller.seal.v1", base, job_id)
}

fn derive_seed(domain: &[u8], base: u64, job_id: &JobId) -> u64 {
    let mut h = Sha256::new();
    h.update(domain);
    h.update(base.to_be_bytes());
    h.update(job_id.as_str().as_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

pub struct TrustedController {
    backend_id: String,
    static_secret: BackendStaticSecret,
    qubit_ceiling: u32,
    seed_mode: SeedMode,
}

impl TrustedController {
    pub fn new(backend_id: impl Into<String>, static_secret: BackendStaticSecret) -> Self {
        Self {
            backend_id: backend_id.into(),
            static_secret,
            qubit_ceiling: DEFAULT_QUBIT_CEILING,
            seed_mode: SeedMode::SystemEntropy,
        }
    }

    pub fn with_seed_mode(mut self, seed_mode: SeedMode) -> Self {
        self.seed_mode = seed_mode;
        self
    }

    pub fn with_qubit_ceiling(mut self, ceiling: u32) -> Self {
        self.qubit_ceiling = ceiling;
        self
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    /// Phase-II ingest: derives the agreement key from the backend static
    /// secret and the client's ephemeral public key, then opens the sealed
    /// metadata bound to `{backend_id, digest(obf_schedule)}`. Any mismatch —
    /// tampered blob, substituted schedule, wrong backend — fails uniformly.
    pub fn ingest(
        &self,
        obf_schedule: &PulseSchedule,
        sealed_metadata: &SealedBlob,
        client_ephemeral_public: &[u8],
        job_id: &JobId,
        shots: u32,
    ) -> Result<DeobfuscationPlan, AuthenticationFailure> {
        let key = derive_backend_key_from_static(
            &self.static_secret,
            client_ephemeral_public,
            &self.backend_id,
        )
        .map_err(|_| AuthenticationFailure)?;
        let binding = MetadataBinding::new(self.backend_id.clone(), obf_schedule);
        let plaintext = open(sealed_metadata, &key, &binding.associated_data())?;
        let metadata =
            ObfuscationMetadata::from_bytes(&plaintext).map_err(|_| AuthenticationFailure)?;
        if metadata.binding != binding {
            return Err(AuthenticationFailure);
        }
        Ok(DeobfuscationPlan {
            dummy_slot_indices: metadata.dummy_slot_indices,
            inverse_channel_permutation: metadata.channel_permutation.inverse(),
            response_key: metadata.response_key,
            shots,
            job_id: job_id.clone(),
        })
    }

    fn job_seeds(&self, job_id: &JobId) -> (u64, u64, u64) {
        match self.seed_mode {
            SeedMode::Deterministic(base) => (
                derive_shot_seed(base, job_id),
                derive_mask_seed(base, job_id),
                derive_seal_seed(base, job_id),
            ),
            SeedMode::SystemEntropy => {
                let mut rng = rand::rng();
                (rng.random(), rng.random(), rng.random())
            }
        }
    }
}

/// Inverts the obfuscation: deletes the dummy slots (attenuation is exact
/// identity in this model), applies the inverse channel permutation to every
/// remaining slot, and reads the result back as a circuit.
pub fn deobfuscate(
    obf_schedule: &PulseSchedule,
    plan: &DeobfuscationPlan,
) -> Result<Circuit, ControllerError> {
    let attenuated = delete_slots(obf_schedule, &plan.dummy_slot_indices)
        .map_err(|e| ControllerError::Integrity(e.to_string()))?;
    let restored = plan.inverse_channel_permutation.apply_schedule(&attenuated);
    Ok(naive_interpret(&restored))
}

/// Executes `shots` measurements of `circuit`, flipping each shot's outcome
/// by an independent uniform mask. The flip is a classical XOR after
/// sampling, identical in law to appending X gates on the masked qubits
/// before a computational-basis measurement.
pub fn execute_shots_with_flips(
    circuit: &Circuit,
    shots: u32,
    qubit_ceiling: u32,
    shot_rng: &mut ChaCha12Rng,
    mask_rng: &mut ChaCha12Rng,
) -> Result<(Vec<BitString>, OutputMetadata), ControllerError> {
    let dist = simulate_probabilities_capped(circuit, qubit_ceiling).map_err(|e| match e {
        SimError::CapacityExceeded { .. } => ControllerError::Capacity(e),
        other => ControllerError::Integrity(other.to_string()),
    })?;
    let outcomes =
        sample_shots(&dist, shots, shot_rng).map_err(|e| ControllerError::Integrity(e.to_string()))?;
    let width = circuit.num_qubits as u8;
    let mask_bits = if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    let mut flipped = Vec::with_capacity(outcomes.len());
    let mut masks = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let mask = BitString::from_index(mask_rng.random::<u64>() & mask_bits, width);
        flipped.push(outcome.xor(&mask).expect("same width"));
        masks.push(mask);
    }
    Ok((flipped, OutputMetadata { flip_masks: masks }))
}

/// Seals the flip masks under the client's response key, bound to the job id
/// so a blob replayed against another job can never open.
pub fn seal_output_metadata(
    masks: &OutputMetadata,
    response_key: &SymmetricKey,
    job_id: &JobId,
    rng: &mut ChaCha12Rng,
) -> SealedBlob {
    seal(
        &masks.to_bytes(),
        response_key,
        &KeyId::response(job_id.as_str()),
        job_id.as_str().as_bytes(),
        rng,
    )
}

impl TrustBoundary for TrustedController {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn execute(&self, handoff: JobHandoff) -> Result<ExecutionOutput, BoundaryError> {
        let plan = self.ingest(
            &handoff.obf_schedule,
            &handoff.sealed_metadata,
            &handoff.client_ephemeral_public,
            &handoff.job_id,
            handoff.shots,
        )?;
        let circuit = deobfuscate(&handoff.obf_schedule, &plan)?;
        let (shot_seed, mask_seed, seal_seed) = self.job_seeds(&handoff.job_id);
        let mut shot_rng = ChaCha12Rng::seed_from_u64(shot_seed);
        let mut mask_rng = ChaCha12Rng::seed_from_u64(mask_seed);
        let (flipped, masks) = execute_shots_with_flips(
            &circuit,
            plan.shots(),
            self.qubit_ceiling,
            &mut shot_rng,
            &mut mask_rng,
        )?;
        let mut seal_rng = ChaCha12Rng::seed_from_u64(seal_seed);
        let sealed =
            seal_output_metadata(&masks, plan.response_key(), plan.job_id(), &mut seal_rng);
        Ok(ExecutionOutput {
            flipped_bitstrings: flipped,
            sealed_output_metadata: sealed,
        })
    }
}

impl From<AuthenticationFailure> for BoundaryError {
    fn from(_: AuthenticationFailure) -> Self {
        BoundaryError::AuthenticationFailure
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{establish_backend_key, open as open_blob, BackendStaticSecret};
    use crate::model::{lower_to_schedule, schedule_digest, BackendDescriptor, Gate, Opcode, Slot};
    use crate::obfuscation::{
        build_metadata, obfuscate_schedule, ObfuscationParams, SchemeLabel,
    };
    use crate::sim::{equiv_up_to_global_phase, simulate_statevector};
    use crate::workload::random_circuit_in;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    struct Harness {
        controller: TrustedController,
        backend: BackendDescriptor,
        response_key: SymmetricKey,
    }

    fn harness(backend_id: &str, seed: u64) -> Harness {
        let mut r = rng(seed);
        let static_secret = BackendStaticSecret::generate(&mut r);
        Harness {
            controller: TrustedController::new(backend_id, static_secret.clone())
                .with_seed_mode(SeedMode::Deterministic(seed)),
            backend: BackendDescriptor::simulated(backend_id, 6),
            response_key: SymmetricKey::generate(&mut r),
        }
    }

    /// Client-side prep: obfuscate, build metadata, seal it for the backend.
    fn prepare(
        h: &Harness,
        circuit: &Circuit,
        scheme: SchemeLabel,
        seed: u64,
    ) -> (PulseSchedule, SealedBlob, Vec<u8>) {
        let mut r = rng(seed);
        let schedule = lower_to_schedule(circuit);
        let params = ObfuscationParams::for_scheme(scheme, circuit.num_qubits, None);
        let obf = obfuscate_schedule(&schedule, &params, &mut r).unwrap();
        let metadata = build_metadata(
            obf.dummy_indices,
            obf.permutation,
            h.response_key.clone(),
            &h.backend,
            &obf.schedule,
        )
        .unwrap();
        let public = h.controller.static_secret.public();
        let (key, ephemeral) =
            establish_backend_key(&public, &h.backend.backend_id, &mut r).unwrap();
        let sealed = seal(
            &metadata.to_bytes(),
            &key,
            &h.backend.metadata_public_key,
            &metadata.binding.associated_data(),
            &mut r,
        );
        (obf.schedule, sealed, ephemeral.public_bytes().to_vec())
    }

    fn bell() -> Circuit {
        Circuit::new(2, vec![Gate::single(Opcode::H, 0).unwrap(), Gate::cx(0, 1)])
    }

    #[test]
    fn ingest_recovers_sealed_plan() {
        let h = harness("sim-a", 1);
        let (schedule, sealed, eph) = prepare(&h, &bell(), SchemeLabel::Combined, 11);
        let job_id = JobId::new("job-00000000");
        let plan = h
            .controller
            .ingest(&schedule, &sealed, &eph, &job_id, 8)
            .unwrap();
        assert_eq!(plan.shots(), 8);
        assert_eq!(plan.response_key(), &h.response_key);
    }

    #[test]
    fn ingest_rejects_substituted_schedule() {
        let h = harness("sim-a", 2);
        let (_, sealed, eph) = prepare(&h, &bell(), SchemeLabel::Combined, 12);
        let other = lower_to_schedule(&Circuit::new(
            2,
            vec![Gate::single(Opcode::X, 0).unwrap()],
        ));
        assert!(h
            .controller
            .ingest(&other, &sealed, &eph, &JobId::new("j"), 8)
            .is_err());
    }

    #[test]
    fn ingest_rejects_wrong_backend() {
        let h_a = harness("sim-a", 3);
        let h_b = harness("sim-b", 4);
        let (schedule, sealed, eph) = prepare(&h_a, &bell(), SchemeLabel::Combined, 13);
        assert!(h_b
            .controller
            .ingest(&schedule, &sealed, &eph, &JobId::new("j"), 8)
            .is_err());
    }

    #[test]
    fn ingest_rejects_tampered_blob() {
        let h = harness("sim-a", 5);
        let (schedule, mut sealed, eph) = prepare(&h, &bell(), SchemeLabel::Combined, 14);
        sealed.ciphertext[3] ^= 0x80;
        assert!(h
            .controller
            .ingest(&schedule, &sealed, &eph, &JobId::new("j"), 8)
            .is_err());
    }

    #[test]
    fn identity_plan_deobfuscates_to_naive_interpretation() {
        let h = harness("sim-a", 6);
        let (schedule, sealed, eph) = prepare(&h, &bell(), SchemeLabel::SwapOnly, 15);
        // swap-only with 0 dummies: deleting nothing, unswapping restores
        let plan = h
            .controller
            .ingest(&schedule, &sealed, &eph, &JobId::new("j"), 1)
            .unwrap();
        let circuit = deobfuscate(&schedule, &plan).unwrap();
        assert_eq!(circuit, bell());
    }

    #[test]
    fn deobfuscate_inverse_permutation_example() {
        let schedule = PulseSchedule::new(2, vec![Slot::drive(1, Opcode::X, None).unwrap()]);
        // inverse permutation swaps drive channels 0 and 1
        let drive_swapped =
            ChannelPermutation::from_maps(vec![1, 0], Default::default()).unwrap();
        let plan = DeobfuscationPlan {
            dummy_slot_indices: vec![],
            inverse_channel_permutation: drive_swapped,
            response_key: SymmetricKey::from_bytes([0; 32]),
            shots: 1,
            job_id: JobId::new("j"),
        };
        let circuit = deobfuscate(&schedule, &plan).unwrap();
        assert_eq!(circuit.gates, vec![Gate::single(Opcode::X, 0).unwrap()]);
    }

    #[test]
    fn deobfuscate_deletes_dummy_slot() {
        let schedule = PulseSchedule::new(
            1,
            vec![
                Slot::drive(0, Opcode::H, None).unwrap(),
                Slot::drive(0, Opcode::X, None).unwrap(),
            ],
        );
        let plan = DeobfuscationPlan {
            dummy_slot_indices: vec![1],
            inverse_channel_permutation: ChannelPermutation::identity(1, &Default::default()),
            response_key: SymmetricKey::from_bytes([0; 32]),
            shots: 1,
            job_id: JobId::new("j"),
        };
        let circuit = deobfuscate(&schedule, &plan).unwrap();
        assert_eq!(circuit.gates, vec![Gate::single(Opcode::H, 0).unwrap()]);
    }

    #[test]
    fn out_of_range_dummy_index_is_integrity_error() {
        let schedule = PulseSchedule::new(1, vec![Slot::drive(0, Opcode::H, None).unwrap()]);
        let plan = DeobfuscationPlan {
            dummy_slot_indices: vec![5],
            inverse_channel_permutation: ChannelPermutation::identity(1, &Default::default()),
            response_key: SymmetricKey::from_bytes([0; 32]),
            shots: 1,
            job_id: JobId::new("j"),
        };
        assert!(matches!(
            deobfuscate(&schedule, &plan),
            Err(ControllerError::Integrity(_))
        ));
    }

    #[test]
    fn flip_masks_xor_back_to_outcomes() {
        let circuit = Circuit::new(1, vec![Gate::single(Opcode::X, 0).unwrap()]);
        let (flipped, metadata) = execute_shots_with_flips(
            &circuit,
            32,
            DEFAULT_QUBIT_CEILING,
            &mut rng(21),
            &mut rng(22),
        )
        .unwrap();
        assert_eq!(flipped.len(), 32);
        assert_eq!(metadata.flip_masks.len(), 32);
        for (f, m) in flipped.iter().zip(&metadata.flip_masks) {
            // the true outcome of (X 0) is always "1"
            assert_eq!(f.xor(m).unwrap().to_string(), "1");
            // involution: outcome ^ mask ^ mask == outcome
            assert_eq!(f.xor(m).unwrap().xor(m).unwrap(), *f);
        }
    }

    #[test]
    fn seeded_execution_is_reproducible() {
        let circuit = bell();
        let run = |seed: u64| {
            execute_shots_with_flips(
                &circuit,
                16,
                DEFAULT_QUBIT_CEILING,
                &mut rng(seed),
                &mut rng(seed + 1),
            )
            .unwrap()
        };
        assert_eq!(run(33).0, run(33).0);
        assert_eq!(run(33).1, run(33).1);
        assert_ne!(run(33).1, run(34).1);
    }

    #[test]
    fn oversized_circuit_is_capacity_error() {
        let circuit = Circuit::new(13, vec![]);
        assert!(matches!(
            execute_shots_with_flips(&circuit, 1, 12, &mut rng(0), &mut rng(1)),
            Err(ControllerError::Capacity(_))
        ));
    }

    #[test]
    fn sealed_output_opens_only_under_its_job_id() {
        let masks = OutputMetadata {
            flip_masks: vec!["1".parse().unwrap()],
        };
        let key = SymmetricKey::from_bytes([9; 32]);
        let job_id = JobId::new("job-00000007");
        let blob = seal_output_metadata(&masks, &key, &job_id, &mut rng(40));
        let opened = open_blob(&blob, &key, job_id.as_str().as_bytes()).unwrap();
        assert_eq!(OutputMetadata::from_bytes(&opened).unwrap(), masks);
        assert!(open_blob(&blob, &key, b"job-00000008").is_err());
    }

    #[test]
    fn full_boundary_execution_restores_original_distribution() {
        for scheme in SchemeLabel::ALL {
            let h = harness("sim-a", 50);
            let mut r = rng(51);
            for case in 0..30u64 {
                let circuit = random_circuit_in(&mut r, 1..=6, 0..=30);
                let (schedule, sealed, eph) =
                    prepare(&h, &circuit, scheme, 1000 + case);
                let job_id = JobId::new(format!("job-{case:08}"));
                let plan = h
                    .controller
                    .ingest(&schedule, &sealed, &eph, &job_id, 4)
                    .unwrap();
                let reconstructed = deobfuscate(&schedule, &plan).unwrap();
                let a = simulate_statevector(&circuit).unwrap();
                let b = simulate_statevector(&reconstructed).unwrap();
                assert!(
                    equiv_up_to_global_phase(&a, &b, 1e-9).unwrap(),
                    "{scheme} case {case}"
                );
            }
        }
    }

    #[test]
    fn digest_binding_prevents_slot_edit() {
        let h = harness("sim-a", 60);
        let (mut schedule, sealed, eph) = prepare(&h, &bell(), SchemeLabel::Combined, 61);
        let original_digest = schedule_digest(&schedule);
        schedule.slots[0] = Slot::drive(1, Opcode::Z, None).unwrap();
        assert_ne!(schedule_digest(&schedule), original_digest);
        assert!(h
            .controller
            .ingest(&schedule, &sealed, &eph, &JobId::new("j"), 1)
            .is_err());
    }
}
