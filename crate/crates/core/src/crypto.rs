//! Signatures, opaque bearer tokens and verifiable credentials.
//!
//! Ed25519 is used throughout. Signing is deterministic, so a scenario that
//! derives its keys from fixed seeds produces byte-identical event logs.

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::model::Did;

pub const PUBLIC_KEY_LENGTH: usize = 32;
pub const SIGNATURE_LENGTH: usize = 64;
pub const NONCE_LENGTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerificationError {
    #[error("malformed public key: expected {PUBLIC_KEY_LENGTH} bytes, got {0}")]
    KeyLength(usize),
    #[error("malformed signature: expected {SIGNATURE_LENGTH} bytes, got {0}")]
    SignatureLength(usize),
    #[error("invalid hex: {0}")]
    Hex(String),
}

macro_rules! hex_newtype {
    ($name:ident, $len:expr, $err:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn from_slice(bytes: &[u8]) -> Result<Self, VerificationError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| $err(bytes.len()))?;
                Ok(Self(arr))
            }

            pub fn from_hex(s: &str) -> Result<Self, VerificationError> {
                let bytes = hex::decode(s).map_err(|e| VerificationError::Hex(e.to_string()))?;
                Self::from_slice(&bytes)
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                if s.chars().any(|c| c.is_ascii_uppercase()) {
                    return Err(serde::de::Error::custom("hex must be lowercase"));
                }
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_newtype!(PublicKey, PUBLIC_KEY_LENGTH, VerificationError::KeyLength);
hex_newtype!(
    Signature,
    SIGNATURE_LENGTH,
    VerificationError::SignatureLength
);
hex_newtype!(Nonce, NONCE_LENGTH, |n| VerificationError::Hex(format!(
    "nonce must be {NONCE_LENGTH} bytes, got {n}"
)));

impl PublicKey {
    /// Verifies `signature` over `message`. Points that do not decompress and
    /// non-canonical signatures both count as a failed verification.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        key.verify_strict(message, &sig).is_ok()
    }
}

/// A signing key pair derived from a 32-byte seed.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn secret_key(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

pub fn generate_keypair(seed: [u8; 32]) -> KeyPair {
    let signing = SigningKey::from_bytes(&seed);
    let public = PublicKey(signing.verifying_key().to_bytes());
    KeyPair { signing, public }
}

pub fn sign(secret_key: &[u8; 32], message: &[u8]) -> Signature {
    generate_keypair(*secret_key).sign(message)
}

/// Raw-bytes verification entry point. Length problems are reported as
/// errors; everything else is a plain `false`.
pub fn verify(
    public_key: &[u8],
    message: &[u8],
    signature: &[u8],
) -> Result<bool, VerificationError> {
    let key = PublicKey::from_slice(public_key)?;
    let sig = Signature::from_slice(signature)?;
    Ok(key.verify(message, &sig))
}

/// Domain separators prepended to every signing payload so a signature made
/// for one purpose never verifies for another.
pub(crate) mod domain {
    pub const TOKEN: &[u8] = b"didgov/token/v1";
    pub const CREDENTIAL: &[u8] = b"didgov/vc/v1";
    pub const PRESENTATION: &[u8] = b"didgov/presentation/v1";
    pub const PROPOSAL: &[u8] = b"didgov/proposal/v1";
    pub const DECISION: &[u8] = b"didgov/decision/v1";
}

/// An opaque bearer token: a nonce signed by its issuer. Whoever presents it
/// is authorized, once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BearerToken {
    pub nonce: Nonce,
    pub issuer_key: PublicKey,
    pub signature: Signature,
}

impl BearerToken {
    pub fn signing_payload(nonce: &Nonce) -> Vec<u8> {
        let mut enc = Encoder::with_domain(domain::TOKEN);
        enc.fixed(&nonce.0);
        enc.finish()
    }

    pub fn verify(&self) -> bool {
        self.issuer_key
            .verify(&Self::signing_payload(&self.nonce), &self.signature)
    }
}

pub fn issue_token(issuer: &KeyPair, nonce: Nonce) -> BearerToken {
    BearerToken {
        nonce,
        issuer_key: issuer.public_key(),
        signature: issuer.sign(&BearerToken::signing_payload(&nonce)),
    }
}

/// Issuer-signed claims bound to a holder key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiableCredential {
    pub issuer_key: PublicKey,
    pub holder_key: PublicKey,
    pub claims: BTreeMap<String, String>,
    pub issuer_signature: Signature,
}

impl VerifiableCredential {
    pub fn signing_payload(holder_key: &PublicKey, claims: &BTreeMap<String, String>) -> Vec<u8> {
        let mut enc = Encoder::with_domain(domain::CREDENTIAL);
        enc.fixed(&holder_key.0);
        enc.string_map(claims);
        enc.finish()
    }

    pub fn verify_issuer(&self) -> bool {
        let payload = Self::signing_payload(&self.holder_key, &self.claims);
        self.issuer_key.verify(&payload, &self.issuer_signature)
    }
}

pub fn issue_vc(
    issuer: &KeyPair,
    holder_key: PublicKey,
    claims: BTreeMap<String, String>,
) -> VerifiableCredential {
    let issuer_signature =
        issuer.sign(&VerifiableCredential::signing_payload(&holder_key, &claims));
    VerifiableCredential {
        issuer_key: issuer.public_key(),
        holder_key,
        claims,
        issuer_signature,
    }
}

/// A credential as presented alongside a proposal or decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CredentialPresentation {
    Token {
        token: BearerToken,
    },
    Vc {
        credential: VerifiableCredential,
        /// Holder proof of possession over (did, proposal_id, credential).
        holder_signature: Signature,
    },
}

impl CredentialPresentation {
    pub fn holder_payload(
        did: &Did,
        proposal_id: u64,
        credential: &VerifiableCredential,
    ) -> Vec<u8> {
        let mut enc = Encoder::with_domain(domain::PRESENTATION);
        enc.string(did.as_str());
        enc.u64(proposal_id);
        enc.put(credential);
        enc.finish()
    }

    /// Builds a VC presentation for the given proposal, signed by the holder.
    pub fn present_vc(
        holder: &KeyPair,
        did: &Did,
        proposal_id: u64,
        credential: VerifiableCredential,
    ) -> Self {
        let holder_signature = holder.sign(&Self::holder_payload(did, proposal_id, &credential));
        CredentialPresentation::Vc {
            credential,
            holder_signature,
        }
    }

    pub fn token(token: BearerToken) -> Self {
        CredentialPresentation::Token { token }
    }
}

impl Canonical for BearerToken {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.nonce);
        enc.put(&self.issuer_key);
        enc.put(&self.signature);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BearerToken {
            nonce: dec.get()?,
            issuer_key: dec.get()?,
            signature: dec.get()?,
        })
    }
}

impl Canonical for VerifiableCredential {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.issuer_key);
        enc.put(&self.holder_key);
        enc.string_map(&self.claims);
        enc.put(&self.issuer_signature);
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(VerifiableCredential {
            issuer_key: dec.get()?,
            holder_key: dec.get()?,
            claims: dec.string_map()?,
            issuer_signature: dec.get()?,
        })
    }
}

impl Canonical for CredentialPresentation {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            CredentialPresentation::Token { token } => {
                enc.u8(0);
                enc.put(token);
            }
            CredentialPresentation::Vc {
                credential,
                holder_signature,
            } => {
                enc.u8(1);
                enc.put(credential);
                enc.put(holder_signature);
            }
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(CredentialPresentation::Token { token: dec.get()? }),
            1 => Ok(CredentialPresentation::Vc {
                credential: dec.get()?,
                holder_signature: dec.get()?,
            }),
            tag => Err(dec.bad_tag("credential presentation", tag)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn seed(n: u64) -> [u8; 32] {
        let mut s = [0u8; 32];
        s[..8].copy_from_slice(&n.to_le_bytes());
        s
    }

    #[test]
    fn same_seed_same_key() {
        assert_eq!(
            generate_keypair(seed(7)).public_key(),
            generate_keypair(seed(7)).public_key()
        );
    }

    #[test]
    fn distinct_seeds_never_collide() {
        let keys: HashSet<_> = (0..10_000)
            .map(|i| generate_keypair(seed(i)).public_key())
            .collect();
        assert_eq!(keys.len(), 10_000);
    }

    #[test]
    fn sign_verify_round_trip() {
        let kp = generate_keypair(seed(1));
        let sig = kp.sign(b"x");
        assert!(kp.public_key().verify(b"x", &sig));
        assert_eq!(verify(&kp.public_key().0, b"x", &sig.0), Ok(true));
        assert_eq!(
            sign(&kp.secret_key(), b"x"),
            sig,
            "signing is deterministic"
        );
    }

    #[test]
    fn bit_flips_fail() {
        let kp = generate_keypair(seed(2));
        let msg = b"rotate keys".to_vec();
        let sig = kp.sign(&msg);
        for bit in 0..SIGNATURE_LENGTH * 8 {
            let mut bad = sig;
            bad.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!kp.public_key().verify(&msg, &bad), "signature bit {bit}");
        }
        for bit in 0..msg.len() * 8 {
            let mut bad = msg.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert!(!kp.public_key().verify(&bad, &sig), "message bit {bit}");
        }
    }

    #[test]
    fn wrong_key_fails() {
        let a = generate_keypair(seed(3));
        let b = generate_keypair(seed(4));
        assert!(!b.public_key().verify(b"m", &a.sign(b"m")));
    }

    #[test]
    fn malformed_lengths() {
        assert_eq!(
            verify(&[0; 31], b"m", &[0; 64]),
            Err(VerificationError::KeyLength(31))
        );
        assert_eq!(
            verify(&[0; 32], b"m", &[0; 65]),
            Err(VerificationError::SignatureLength(65))
        );
    }

    #[test]
    fn random_signatures_never_verify() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let kp = generate_keypair(seed(5));
        let pk = kp.public_key();
        for _ in 0..100_000 {
            let mut sig = [0u8; 64];
            rng.fill_bytes(&mut sig);
            assert!(!pk.verify(b"forge me", &Signature(sig)));
        }
    }

    #[test]
    fn token_issue_and_verify() {
        let issuer = generate_keypair(seed(10));
        let token = issue_token(&issuer, Nonce([9; 16]));
        assert!(token.verify());
        let forged = BearerToken {
            issuer_key: generate_keypair(seed(11)).public_key(),
            ..token
        };
        assert!(!forged.verify());
    }

    #[test]
    fn vc_carries_claims_and_binds_issuer() {
        let issuer = generate_keypair(seed(20));
        let holder = generate_keypair(seed(21));
        let claims = BTreeMap::from([("role".to_string(), "admin".to_string())]);
        let vc = issue_vc(&issuer, holder.public_key(), claims.clone());
        assert_eq!(vc.claims, claims);
        assert!(vc.verify_issuer());
        let other = VerifiableCredential {
            issuer_key: generate_keypair(seed(22)).public_key(),
            ..vc
        };
        assert!(!other.verify_issuer());
    }

    #[test]
    fn hex_serde_is_lowercase() {
        let pk = generate_keypair(seed(30)).public_key();
        let json = serde_json::to_string(&pk).unwrap();
        assert_eq!(json, format!("\"{}\"", pk.to_hex()));
        assert_eq!(serde_json::from_str::<PublicKey>(&json).unwrap(), pk);
        assert!(serde_json::from_str::<PublicKey>(&json.to_uppercase()).is_err());
    }
}
