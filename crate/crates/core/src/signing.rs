//! Signatures over rank shares.
//!
//! The default backend is an ideal functionality: a signature verifies only if
//! the registry itself issued it for that exact `(signer, message)` pair, so
//! forgery is impossible rather than merely hard. An Ed25519 backend is
//! available for runs that want real cryptography on the wire.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use rand::RngCore;
use ring::signature::{Ed25519KeyPair, KeyPair, UnparsedPublicKey, ED25519};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::rank::RankBits;
use crate::rng::{Purpose, StreamKey};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text)
            .map(Signature)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub owner: NodeId,
    pub bytes: Vec<u8>,
}

/// Private half of a key pair. Only the registry can mint these.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    owner: NodeId,
    secret: [u8; 32],
}

impl SecretKey {
    pub fn owner(&self) -> NodeId {
        self.owner
    }

    /// A key claiming to belong to `owner` but holding arbitrary material.
    #[cfg(test)]
    pub(crate) fn forged(owner: NodeId, secret: [u8; 32]) -> Self {
        Self { owner, secret }
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", self.owner)
    }
}

pub trait SignatureScheme: Send {
    fn keygen(&mut self, node: NodeId, seed: [u8; 32]) -> Result<(PublicKey, SecretKey)>;
    fn sign(&mut self, sk: &SecretKey, msg: &[u8]) -> Result<Signature>;
    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureBackend {
    #[default]
    Ideal,
    Ed25519,
}

impl std::str::FromStr for SignatureBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "ed25519" => Ok(Self::Ed25519),
            _ => Err(Error::Config(format!("unknown signature backend {s:?}"))),
        }
    }
}

/// Ideal functionality: a table of issued signatures per signer.
#[derive(Default)]
pub struct IdealScheme {
    secrets: HashMap<NodeId, [u8; 32]>,
    issued: HashMap<NodeId, HashMap<Vec<u8>, Signature>>,
}

impl IdealScheme {
    fn tag(secret: &[u8; 32], msg: &[u8]) -> Signature {
        let digest = Sha256::new()
            .chain_update(secret)
            .chain_update(msg)
            .finalize();
        Signature(digest[..16].to_vec())
    }
}

impl SignatureScheme for IdealScheme {
    fn keygen(&mut self, node: NodeId, seed: [u8; 32]) -> Result<(PublicKey, SecretKey)> {
        if self.secrets.contains_key(&node) {
            return Err(Error::Signing(format!(
                "node {node} already has a key pair"
            )));
        }
        self.secrets.insert(node, seed);
        let bytes = node.0.to_be_bytes().to_vec();
        Ok((
            PublicKey { owner: node, bytes },
            SecretKey {
                owner: node,
                secret: seed,
            },
        ))
    }

    fn sign(&mut self, sk: &SecretKey, msg: &[u8]) -> Result<Signature> {
        match self.secrets.get(&sk.owner) {
            Some(secret) if *secret == sk.secret => {
                let sig = Self::tag(secret, msg);
                self.issued
                    .entry(sk.owner)
                    .or_default()
                    .insert(msg.to_vec(), sig.clone());
                Ok(sig)
            }
            Some(_) => Err(Error::Signing(format!(
                "secret key does not belong to {}",
                sk.owner
            ))),
            None => Err(Error::Signing(format!(
                "node {} is not registered",
                sk.owner
            ))),
        }
    }

    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        self.issued
            .get(&pk.owner)
            .and_then(|table| table.get(msg))
            .is_some_and(|issued| issued == sig)
    }
}

#[derive(Default)]
pub struct Ed25519Scheme {
    pairs: HashMap<NodeId, ([u8; 32], Ed25519KeyPair)>,
}

impl SignatureScheme for Ed25519Scheme {
    fn keygen(&mut self, node: NodeId, seed: [u8; 32]) -> Result<(PublicKey, SecretKey)> {
        if self.pairs.contains_key(&node) {
            return Err(Error::Signing(format!(
                "node {node} already has a key pair"
            )));
        }
        let pair = Ed25519KeyPair::from_seed_unchecked(&seed)
            .map_err(|e| Error::Signing(format!("ed25519 keygen: {e}")))?;
        let bytes = pair.public_key().as_ref().to_vec();
        self.pairs.insert(node, (seed, pair));
        Ok((
            PublicKey { owner: node, bytes },
            SecretKey {
                owner: node,
                secret: seed,
            },
        ))
    }

    fn sign(&mut self, sk: &SecretKey, msg: &[u8]) -> Result<Signature> {
        match self.pairs.get(&sk.owner) {
            Some((seed, pair)) if *seed == sk.secret => {
                Ok(Signature(pair.sign(msg).as_ref().to_vec()))
            }
            Some(_) => Err(Error::Signing(format!(
                "secret key does not belong to {}",
                sk.owner
            ))),
            None => Err(Error::Signing(format!(
                "node {} is not registered",
                sk.owner
            ))),
        }
    }

    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        UnparsedPublicKey::new(&ED25519, &pk.bytes)
            .verify(msg, &sig.0)
            .is_ok()
    }
}

/// Per-run key material: one key pair per node, public halves readable by all.
pub struct KeyRegistry {
    scheme: Box<dyn SignatureScheme>,
    keys: HashMap<NodeId, (PublicKey, SecretKey)>,
}

impl KeyRegistry {
    pub fn new(backend: SignatureBackend) -> Self {
        let scheme: Box<dyn SignatureScheme> = match backend {
            SignatureBackend::Ideal => Box::<IdealScheme>::default(),
            SignatureBackend::Ed25519 => Box::<Ed25519Scheme>::default(),
        };
        Self {
            scheme,
            keys: HashMap::new(),
        }
    }

    /// Registers every node in `[0, n)` with seeds drawn from the run's key stream.
    pub fn for_nodes(backend: SignatureBackend, n: usize, key: &StreamKey) -> Result<Self> {
        let mut reg = Self::new(backend);
        for i in 0..n {
            let node = NodeId::from(i);
            let mut seed = [0u8; 32];
            key.stream(node, 0, Purpose::KeyGen).fill_bytes(&mut seed);
            reg.keygen(node, seed)?;
        }
        Ok(reg)
    }

    pub fn keygen(&mut self, node: NodeId, seed: [u8; 32]) -> Result<PublicKey> {
        if self.keys.contains_key(&node) {
            return Err(Error::Signing(format!(
                "node {node} already has a key pair"
            )));
        }
        let (pk, sk) = self.scheme.keygen(node, seed)?;
        self.keys.insert(node, (pk.clone(), sk));
        Ok(pk)
    }

    pub fn public_key(&self, node: NodeId) -> Option<&PublicKey> {
        self.keys.get(&node).map(|(pk, _)| pk)
    }

    pub fn sign(&mut self, sk: &SecretKey, msg: &[u8]) -> Result<Signature> {
        self.scheme.sign(sk, msg)
    }

    /// Signs with `node`'s own key.
    pub fn sign_as(&mut self, node: NodeId, msg: &[u8]) -> Result<Signature> {
        let sk = self
            .keys
            .get(&node)
            .map(|(_, sk)| sk.clone())
            .ok_or_else(|| Error::Signing(format!("node {node} is not registered")))?;
        self.scheme.sign(&sk, msg)
    }

    /// Verifies against `signer`'s public key; unknown signers never verify.
    pub fn verify_as(&self, signer: NodeId, msg: &[u8], sig: &Signature) -> bool {
        self.public_key(signer)
            .is_some_and(|pk| self.scheme.verify(pk, msg, sig))
    }
}

/// Canonical bytes signed for a rank share: iteration (u64), issuer (u32),
/// recipient (u32), then the share in `ceil(L/8)` bytes, all big-endian.
#[derive(Clone, Copy)]
pub struct SigningInput {
    buf: [u8; 24],
    len: usize,
}

impl SigningInput {
    pub fn new(iteration: u64, issuer: NodeId, recipient: NodeId, bits: RankBits) -> Self {
        let mut buf = [0u8; 24];
        buf[..8].copy_from_slice(&iteration.to_be_bytes());
        buf[8..12].copy_from_slice(&issuer.0.to_be_bytes());
        buf[12..16].copy_from_slice(&recipient.0.to_be_bytes());
        let nbytes = bits.len().div_ceil(8) as usize;
        buf[16..16 + nbytes].copy_from_slice(&bits.value().to_be_bytes()[8 - nbytes..]);
        Self {
            buf,
            len: 16 + nbytes,
        }
    }
}

impl Deref for SigningInput {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.buf[..self.len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn registry(backend: SignatureBackend) -> KeyRegistry {
        KeyRegistry::for_nodes(backend, 3, &StreamKey::new(5)).unwrap()
    }

    #[test]
    fn duplicate_keygen_rejected() {
        let mut reg = KeyRegistry::new(SignatureBackend::Ideal);
        reg.keygen(NodeId(0), [1; 32]).unwrap();
        assert!(matches!(
            reg.keygen(NodeId(0), [2; 32]),
            Err(Error::Signing(_))
        ));
        let mut scheme = IdealScheme::default();
        scheme.keygen(NodeId(0), [1; 32]).unwrap();
        assert!(scheme.keygen(NodeId(0), [1; 32]).is_err());
    }

    #[test]
    fn sign_and_verify_both_backends() {
        for backend in [SignatureBackend::Ideal, SignatureBackend::Ed25519] {
            let mut reg = registry(backend);
            let msg = b"iteration 1";
            let sig = reg.sign_as(NodeId(1), msg).unwrap();
            assert!(reg.verify_as(NodeId(1), msg, &sig));
            assert!(!reg.verify_as(NodeId(1), b"iteration 2", &sig));
            assert!(!reg.verify_as(NodeId(2), msg, &sig));
            assert!(!reg.verify_as(NodeId(9), msg, &sig), "unregistered signer");
            assert!(!reg.verify_as(NodeId(1), msg, &Signature(vec![7; 64])));
        }
    }

    #[test]
    fn flipped_bit_fails() {
        let mut reg = registry(SignatureBackend::Ideal);
        let input = SigningInput::new(3, NodeId(0), NodeId(1), RankBits::new(0b1010, 4));
        let sig = reg.sign_as(NodeId(0), &input).unwrap();
        let mut tampered = input.to_vec();
        tampered[16] ^= 1;
        assert!(!reg.verify_as(NodeId(0), &tampered, &sig));
        assert_eq!(
            sig,
            reg.sign_as(NodeId(0), &input).unwrap(),
            "deterministic"
        );
    }

    #[test]
    fn forged_secret_cannot_sign() {
        let mut scheme = IdealScheme::default();
        let (pk, _) = scheme.keygen(NodeId(0), [3; 32]).unwrap();
        let fake = SecretKey::forged(NodeId(0), [4; 32]);
        assert!(scheme.sign(&fake, b"m").is_err());
        assert!(scheme
            .sign(&SecretKey::forged(NodeId(5), [3; 32]), b"m")
            .is_err());
        // Even the correct tag is rejected until it has been issued.
        let tag = IdealScheme::tag(&[3; 32], b"m");
        assert!(!scheme.verify(&pk, b"m", &tag));
    }

    #[test]
    fn canonical_encoding() {
        let input = SigningInput::new(1, NodeId(2), NodeId(3), RankBits::new(0x1ff, 9));
        assert_eq!(
            &*input,
            &[0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0x01, 0xff][..]
        );
        assert_eq!(
            SigningInput::new(0, NodeId(0), NodeId(0), RankBits::ones(64)).len(),
            24
        );
    }

    #[test]
    fn signature_serde_round_trip() {
        let sig = Signature(vec![0xde, 0xad]);
        let text = serde_json::to_string(&sig).unwrap();
        assert_eq!(text, "\"dead\"");
        assert_eq!(serde_json::from_str::<Signature>(&text).unwrap(), sig);
    }

    proptest! {
        // A party without the signer's secret cannot produce anything that verifies.
        #[test]
        fn ideal_unforgeable(
            msgs in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..24), 1..8),
            guesses in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 1..8),
            secret in any::<[u8; 32]>(),
        ) {
            let mut reg = registry(SignatureBackend::Ideal);
            let mut issued = Vec::new();
            for m in &msgs {
                issued.push((m.clone(), reg.sign_as(NodeId(0), m).unwrap()));
            }
            let forged = SecretKey::forged(NodeId(0), secret);
            prop_assert!(reg.sign(&forged, &msgs[0]).is_err());
            for g in guesses {
                let sig = Signature(g);
                for m in &msgs {
                    let legit = issued.iter().any(|(im, is)| im == m && *is == sig);
                    prop_assert_eq!(reg.verify_as(NodeId(0), m, &sig), legit);
                }
            }
        }
    }
}
