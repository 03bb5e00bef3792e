//! Sealing and opening of metadata blobs with authenticated encryption, plus
//! the static–ephemeral key agreement between clients and backend trust
//! boundaries.
//!
//! The AEAD scheme sits behind [`seal`] and [`open`]; everything else in the
//! crate treats sealed bytes as opaque. Opening failures are deliberately
//! uniform: a tampered ciphertext, a wrong key, and mismatched associated
//! data are indistinguishable.

use std::collections::BTreeMap;
use std::fmt;

use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, KeyInit, Nonce};
use hkdf::Hkdf;
use rand::{CryptoRng, RngExt};
use sha2::Sha256;
use thiserror::Error;
use x25519_dalek::{PublicKey, StaticSecret};

use crate::codec::{CodecError, Decoder, Encoder};

pub const SYMMETRIC_KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const PUBLIC_KEY_LEN: usize = 32;

/// Uniform failure for any unauthentic open attempt. Carries no detail by
/// design.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("authentication failure")]
pub struct AuthenticationFailure;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("malformed public key ({0} bytes, expected {PUBLIC_KEY_LEN})")]
    MalformedPublicKey(usize),
    #[error("key agreement produced a degenerate shared secret")]
    DegenerateSharedSecret,
    #[error("unknown key id {0}")]
    UnknownKeyId(KeyId),
    #[error("key {0} has the wrong kind for this operation")]
    WrongKeyKind(KeyId),
}

/// Identifier a key is registered and addressed under.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(String);

impl KeyId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    /// Conventional id for a backend's static metadata-agreement key.
    pub fn backend_metadata(backend_id: &str) -> Self {
        Self(format!("backend-metadata/{backend_id}"))
    }

    /// Conventional id for a client's transport session key.
    pub fn session(client_id: &str) -> Self {
        Self(format!("session/{client_id}"))
    }

    /// Conventional id for the per-job response key sealing output metadata.
    pub fn response(job_id: &str) -> Self {
        Self(format!("response/{job_id}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 256-bit symmetric key. Debug output never shows the key bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; SYMMETRIC_KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; SYMMETRIC_KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn generate<R: CryptoRng + RngExt>(rng: &mut R) -> Self {
        Self(rng.random())
    }

    pub fn as_bytes(&self) -> &[u8; SYMMETRIC_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// Authenticated ciphertext plus the nonce and key id needed to open it.
///
/// Wire layout: length-prefixed key id, length-prefixed nonce, and
/// length-prefixed ciphertext, concatenated in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBlob {
    pub key_id: KeyId,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

impl SealedBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_capacity(16 + self.ciphertext.len());
        self.encode_into(&mut e);
        e.into_bytes()
    }

    pub(crate) fn encode_into(&self, e: &mut Encoder) {
        e.put_str(self.key_id.as_str());
        e.put_bytes(&self.nonce);
        e.put_bytes(&self.ciphertext);
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut d = Decoder::new(bytes);
        let blob = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(blob)
    }

    pub(crate) fn decode_from(d: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let key_id = KeyId::new(d.str()?);
        let at = d.pos();
        let nonce_raw = d.bytes()?;
        let nonce: [u8; NONCE_LEN] = nonce_raw
            .try_into()
            .map_err(|_| CodecError::InvalidValue { what: "nonce", at })?;
        let ciphertext = d.byte_vec()?;
        Ok(Self {
            key_id,
            nonce,
            ciphertext,
        })
    }
}

/// Seals `plaintext` under `key`, authenticating `associated_data` alongside.
/// A fresh random 96-bit nonce is drawn per call, which keeps concurrent
/// sealers safe without shared state.
pub fn seal<R: CryptoRng + RngExt>(
    plaintext: &[u8],
    key: &SymmetricKey,
    key_id: &KeyId,
    associated_data: &[u8],
    rng: &mut R,
) -> SealedBlob {
    let nonce_bytes: [u8; NONCE_LEN] = rng.random();
    let cipher = ChaCha20Poly1305::new(key.as_bytes().into());
    let ciphertext = cipher
        .encrypt(
            &Nonce::from(nonce_bytes),
            Payload {
                msg: plaintext,
                aad: associated_data,
            },
        )
        .expect("chacha20poly1305 encryption is infallible for in-memory sizes");
    SealedBlob {
        key_id: key_id.clone(),
        nonce: nonce_bytes,
        ciphertext,
    }
}

/// Opens a sealed blob. Returns the exact original plaintext iff ciphertext,
/// nonce, and associated data are authentic under `key`; fails uniformly
/// otherwise, never yielding partial plaintext.
pub fn open(
    blob: &SealedBlob,
    key: &SymmetricKey,
    associated_data: &[u8],
) -> Result<Vec<u8>, AuthenticationFailure> {
    let cipher = ChaCha20Poly1305::new(key.as_bytes().into());
    cipher
        .decrypt(
            &Nonce::from(blob.nonce),
            Payload {
                msg: &blob.ciphertext,
                aad: associated_data,
            },
        )
        .map_err(|_| AuthenticationFailure)
}

/// Private half of a backend's static agreement keypair. Lives only inside
/// the backend's trust boundary.
#[derive(Clone)]
pub struct BackendStaticSecret(StaticSecret);

impl BackendStaticSecret {
    pub fn generate<R: CryptoRng + RngExt>(rng: &mut R) -> Self {
        Self(StaticSecret::from(rng.random::<[u8; 32]>()))
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(StaticSecret::from(bytes))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn public(&self) -> BackendStaticPublic {
        BackendStaticPublic(PublicKey::from(&self.0).to_bytes())
    }
}

impl fmt::Debug for BackendStaticSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BackendStaticSecret(..)")
    }
}

/// Public half of a backend's static agreement keypair; ships in client
/// configuration, standing in for a published attestation certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendStaticPublic([u8; PUBLIC_KEY_LEN]);

impl BackendStaticPublic {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        let arr: [u8; PUBLIC_KEY_LEN] = bytes
            .try_into()
            .map_err(|_| EnvelopeError::MalformedPublicKey(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }
}

/// Client-side per-job agreement state: the ephemeral secret is retained in
/// the client's local secret record, the public half travels with the job.
#[derive(Clone)]
pub struct ClientEphemeral {
    secret: StaticSecret,
}

impl ClientEphemeral {
    pub fn generate<R: CryptoRng + RngExt>(rng: &mut R) -> Self {
        Self {
            secret: StaticSecret::from(rng.random::<[u8; 32]>()),
        }
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self {
            secret: StaticSecret::from(bytes),
        }
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn public_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        PublicKey::from(&self.secret).to_bytes()
    }
}

impl fmt::Debug for ClientEphemeral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ClientEphemeral(..)")
    }
}

const METADATA_KEY_INFO: &[u8] = b"qtee.metadata-key.v1/";

fn derive_symmetric(shared: &[u8; 32], backend_id: &str) -> Result<SymmetricKey, EnvelopeError> {
    if shared.iter().all(|&b| b == 0) {
        return Err(EnvelopeError::DegenerateSharedSecret);
    }
    let hk = Hkdf::<Sha256>::new(None, shared);
    let mut okm = [0u8; SYMMETRIC_KEY_LEN];
    let mut info = METADATA_KEY_INFO.to_vec();
    info.extend_from_slice(backend_id.as_bytes());
    hk.expand(&info, &mut okm)
        .expect("okm length within hkdf bounds");
    Ok(SymmetricKey(okm))
}

/// Client side of key establishment: derives the metadata-sealing key for
/// `backend_id` from a fresh ephemeral secret and the backend's static public
/// key. The key derivation is labeled with the backend id, so blobs sealed
/// for one backend can never open on another.
pub fn establish_backend_key<R: CryptoRng + RngExt>(
    backend_public: &BackendStaticPublic,
    backend_id: &str,
    rng: &mut R,
) -> Result<(SymmetricKey, ClientEphemeral), EnvelopeError> {
    let ephemeral = ClientEphemeral::generate(rng);
    let key = derive_backend_key_from_ephemeral(&ephemeral, backend_public, backend_id)?;
    Ok((key, ephemeral))
}

/// Re-derives the client-side key from a retained ephemeral secret.
pub fn derive_backend_key_from_ephemeral(
    ephemeral: &ClientEphemeral,
    backend_public: &BackendStaticPublic,
    backend_id: &str,
) -> Result<SymmetricKey, EnvelopeError> {
    let shared = ephemeral
        .secret
        .diffie_hellman(&PublicKey::from(*backend_public.as_bytes()));
    derive_symmetric(shared.as_bytes(), backend_id)
}

/// Controller side of key establishment: same key, derived from the backend
/// static secret and the client's ephemeral public bytes.
pub fn derive_backend_key_from_static(
    static_secret: &BackendStaticSecret,
    client_ephemeral_public: &[u8],
    backend_id: &str,
) -> Result<SymmetricKey, EnvelopeError> {
    let arr: [u8; PUBLIC_KEY_LEN] = client_ephemeral_public
        .try_into()
        .map_err(|_| EnvelopeError::MalformedPublicKey(client_ephemeral_public.len()))?;
    let shared = static_secret.0.diffie_hellman(&PublicKey::from(arr));
    derive_symmetric(shared.as_bytes(), backend_id)
}

/// Key material addressable by id. Each deployment component holds its own
/// registry with exactly the material its trust boundary owns.
#[derive(Debug, Clone)]
pub enum KeyEntry {
    AgreementPublic(BackendStaticPublic),
    AgreementSecret(BackendStaticSecret),
    Symmetric(SymmetricKey),
}

#[derive(Debug, Default, Clone)]
pub struct KeyRegistry {
    entries: BTreeMap<KeyId, KeyEntry>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: KeyId, entry: KeyEntry) {
        self.entries.insert(id, entry);
    }

    pub fn contains(&self, id: &KeyId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn agreement_public(&self, id: &KeyId) -> Result<&BackendStaticPublic, EnvelopeError> {
        match self.entries.get(id) {
            Some(KeyEntry::AgreementPublic(k)) => Ok(k),
            Some(_) => Err(EnvelopeError::WrongKeyKind(id.clone())),
            None => Err(EnvelopeError::UnknownKeyId(id.clone())),
        }
    }

    pub fn agreement_secret(&self, id: &KeyId) -> Result<&BackendStaticSecret, EnvelopeError> {
        match self.entries.get(id) {
            Some(KeyEntry::AgreementSecret(k)) => Ok(k),
            Some(_) => Err(EnvelopeError::WrongKeyKind(id.clone())),
            None => Err(EnvelopeError::UnknownKeyId(id.clone())),
        }
    }

    pub fn symmetric(&self, id: &KeyId) -> Result<&SymmetricKey, EnvelopeError> {
        match self.entries.get(id) {
            Some(KeyEntry::Symmetric(k)) => Ok(k),
            Some(_) => Err(EnvelopeError::WrongKeyKind(id.clone())),
            None => Err(EnvelopeError::UnknownKeyId(id.clone())),
        }
    }
}

// PartialEq for BackendStaticSecret is intentionally absent; key comparison
// happens through derived public keys in tests.

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn seal_open_round_trip() {
        let mut r = rng(1);
        let key = SymmetricKey::generate(&mut r);
        let id = KeyId::new("k");
        let blob = seal(b"metadata", &key, &id, b"context", &mut r);
        assert_eq!(open(&blob, &key, b"context").unwrap(), b"metadata");
    }

    #[test]
    fn repeated_seals_differ() {
        let mut r = rng(2);
        let key = SymmetricKey::generate(&mut r);
        let id = KeyId::new("k");
        let a = seal(b"same", &key, &id, b"", &mut r);
        let b = seal(b"same", &key, &id, b"", &mut r);
        assert_ne!(a.nonce, b.nonce);
        assert_ne!(a.ciphertext, b.ciphertext);
    }

    #[test]
    fn empty_plaintext_round_trips() {
        let mut r = rng(3);
        let key = SymmetricKey::generate(&mut r);
        let blob = seal(b"", &key, &KeyId::new("k"), b"ad", &mut r);
        assert_eq!(open(&blob, &key, b"ad").unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn single_bit_tamper_fails() {
        let mut r = rng(4);
        let key = SymmetricKey::generate(&mut r);
        let mut blob = seal(b"payload", &key, &KeyId::new("k"), b"ad", &mut r);
        blob.ciphertext[0] ^= 0x01;
        assert_eq!(open(&blob, &key, b"ad"), Err(AuthenticationFailure));
    }

    #[test]
    fn wrong_associated_data_fails() {
        let mut r = rng(5);
        let key = SymmetricKey::generate(&mut r);
        let blob = seal(b"payload", &key, &KeyId::new("k"), b"right", &mut r);
        assert_eq!(open(&blob, &key, b"wrong"), Err(AuthenticationFailure));
    }

    #[test]
    fn wrong_key_fails() {
        let mut r = rng(6);
        let key = SymmetricKey::generate(&mut r);
        let other = SymmetricKey::generate(&mut r);
        let blob = seal(b"payload", &key, &KeyId::new("k"), b"ad", &mut r);
        assert_eq!(open(&blob, &other, b"ad"), Err(AuthenticationFailure));
    }

    #[test]
    fn blob_wire_layout_round_trips() {
        let mut r = rng(7);
        let key = SymmetricKey::generate(&mut r);
        let blob = seal(b"xyz", &key, &KeyId::new("some/key"), b"ad", &mut r);
        let decoded = SealedBlob::from_bytes(&blob.to_bytes()).unwrap();
        assert_eq!(decoded, blob);
    }

    #[test]
    fn both_sides_derive_the_same_key() {
        let mut r = rng(8);
        let static_secret = BackendStaticSecret::generate(&mut r);
        let public = static_secret.public();
        let (client_key, ephemeral) = establish_backend_key(&public, "sim-a", &mut r).unwrap();
        let controller_key =
            derive_backend_key_from_static(&static_secret, &ephemeral.public_bytes(), "sim-a")
                .unwrap();
        assert_eq!(client_key, controller_key);
    }

    #[test]
    fn backend_label_separates_keys() {
        let mut r = rng(9);
        let static_secret = BackendStaticSecret::generate(&mut r);
        let ephemeral = ClientEphemeral::generate(&mut r);
        let a = derive_backend_key_from_static(&static_secret, &ephemeral.public_bytes(), "sim-a")
            .unwrap();
        let b = derive_backend_key_from_static(&static_secret, &ephemeral.public_bytes(), "sim-b")
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn malformed_public_key_rejected() {
        let mut r = rng(10);
        let static_secret = BackendStaticSecret::generate(&mut r);
        let err = derive_backend_key_from_static(&static_secret, &[0u8; 31], "sim-a").unwrap_err();
        assert_eq!(err, EnvelopeError::MalformedPublicKey(31));
        assert!(BackendStaticPublic::from_bytes(&[1u8; 33]).is_err());
    }

    #[test]
    fn low_order_public_key_rejected() {
        let mut r = rng(11);
        let static_secret = BackendStaticSecret::generate(&mut r);
        // all-zero point yields an all-zero shared secret
        let err = derive_backend_key_from_static(&static_secret, &[0u8; 32], "sim-a").unwrap_err();
        assert_eq!(err, EnvelopeError::DegenerateSharedSecret);
    }

    #[test]
    fn registry_resolves_by_kind() {
        let mut r = rng(12);
        let sec = BackendStaticSecret::generate(&mut r);
        let sym = SymmetricKey::generate(&mut r);
        let mut reg = KeyRegistry::new();
        reg.insert(
            KeyId::backend_metadata("sim-a"),
            KeyEntry::AgreementPublic(sec.public()),
        );
        reg.insert(KeyId::session("alice"), KeyEntry::Symmetric(sym.clone()));
        assert_eq!(
            reg.agreement_public(&KeyId::backend_metadata("sim-a"))
                .unwrap(),
            &sec.public()
        );
        assert_eq!(reg.symmetric(&KeyId::session("alice")).unwrap(), &sym);
        assert!(matches!(
            reg.symmetric(&KeyId::backend_metadata("sim-a")),
            Err(EnvelopeError::WrongKeyKind(_))
        ));
        assert!(matches!(
            reg.agreement_public(&KeyId::new("missing")),
            Err(EnvelopeError::UnknownKeyId(_))
        ));
    }
}
