//! Pluggable authorization: ACL membership, opaque bearer tokens and
//! verifiable credentials.
//!
//! The ACL check is a metered linear scan over the member list, so its cost
//! grows with group size. Token and VC checks verify signatures and never
//! look at a member list.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{CredentialPresentation, PublicKey};
use crate::metering::{CostCategory, Meter};
use crate::model::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::model::{ConsumedNonce, Did, ProposalId};

/// Claim name that carries a voting weight inside a VC.
pub const WEIGHT_CLAIM: &str = "weight";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthzKind {
    Acl,
    Token,
    Vc,
}

impl AuthzKind {
    pub fn label(self) -> &'static str {
        match self {
            AuthzKind::Acl => "acl",
            AuthzKind::Token => "token",
            AuthzKind::Vc => "vc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthzConfig {
    Acl {
        members: Vec<PublicKey>,
        weights: Option<Vec<u64>>,
    },
    Token {
        trusted_issuers: Vec<PublicKey>,
    },
    Vc {
        trusted_issuers: Vec<PublicKey>,
        required_claims: BTreeMap<String, String>,
    },
}

impl AuthzConfig {
    pub fn kind(&self) -> AuthzKind {
        match self {
            AuthzConfig::Acl { .. } => AuthzKind::Acl,
            AuthzConfig::Token { .. } => AuthzKind::Token,
            AuthzConfig::Vc { .. } => AuthzKind::Vc,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            AuthzConfig::Acl { members, weights } => {
                if members.is_empty() {
                    return Err("acl must list at least one member".into());
                }
                let unique: BTreeSet<_> = members.iter().collect();
                if unique.len() != members.len() {
                    return Err("acl members must be unique".into());
                }
                if let Some(weights) = weights {
                    if weights.len() != members.len() {
                        return Err(format!(
                            "acl has {} members but {} weights",
                            members.len(),
                            weights.len()
                        ));
                    }
                    if weights.contains(&0) {
                        return Err("acl weights must be positive".into());
                    }
                }
                Ok(())
            }
            AuthzConfig::Token { trusted_issuers }
            | AuthzConfig::Vc {
                trusted_issuers, ..
            } => {
                if trusted_issuers.is_empty() {
                    Err("at least one trusted issuer is required".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Number of list entries persisted for this configuration (members and
    /// weights, issuers, required claims).
    pub fn stored_entries(&self) -> u64 {
        let n = match self {
            AuthzConfig::Acl { members, weights } => {
                members.len() + weights.as_ref().map_or(0, Vec::len)
            }
            AuthzConfig::Token { trusted_issuers } => trusted_issuers.len(),
            AuthzConfig::Vc {
                trusted_issuers,
                required_claims,
            } => trusted_issuers.len() + required_claims.len(),
        };
        n as u64
    }

    pub(crate) fn from_repr(kind: AuthzKind, r: AuthzConfigRepr) -> Result<Self, String> {
        let unexpected = |field: &str| {
            Err(format!(
                "field `{field}` does not apply to {} authorization",
                kind.label()
            ))
        };
        match kind {
            AuthzKind::Acl => {
                if r.trusted_issuers.is_some() {
                    return unexpected("trusted_issuers");
                }
                if r.required_claims.is_some() {
                    return unexpected("required_claims");
                }
                Ok(AuthzConfig::Acl {
                    members: r.members.ok_or("acl config requires `members`")?,
                    weights: r.weights,
                })
            }
            AuthzKind::Token => {
                if r.members.is_some() {
                    return unexpected("members");
                }
                if r.weights.is_some() {
                    return unexpected("weights");
                }
                if r.required_claims.is_some() {
                    return unexpected("required_claims");
                }
                Ok(AuthzConfig::Token {
                    trusted_issuers: r
                        .trusted_issuers
                        .ok_or("token config requires `trusted_issuers`")?,
                })
            }
            AuthzKind::Vc => {
                if r.members.is_some() {
                    return unexpected("members");
                }
                if r.weights.is_some() {
                    return unexpected("weights");
                }
                Ok(AuthzConfig::Vc {
                    trusted_issuers: r
                        .trusted_issuers
                        .ok_or("vc config requires `trusted_issuers`")?,
                    required_claims: r.required_claims.unwrap_or_default(),
                })
            }
        }
    }

    pub(crate) fn to_repr(&self) -> AuthzConfigRepr {
        match self.clone() {
            AuthzConfig::Acl { members, weights } => AuthzConfigRepr {
                members: Some(members),
                weights,
                ..Default::default()
            },
            AuthzConfig::Token { trusted_issuers } => AuthzConfigRepr {
                trusted_issuers: Some(trusted_issuers),
                ..Default::default()
            },
            AuthzConfig::Vc {
                trusted_issuers,
                required_claims,
            } => AuthzConfigRepr {
                trusted_issuers: Some(trusted_issuers),
                required_claims: Some(required_claims),
                ..Default::default()
            },
        }
    }
}

/// Flat JSON shape of an authorization config; which fields are required
/// depends on the sibling `authz_kind`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct AuthzConfigRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    members: Option<Vec<PublicKey>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trusted_issuers: Option<Vec<PublicKey>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    required_claims: Option<BTreeMap<String, String>>,
}

// Absent weights encode as an empty list: a present weight list always has
// as many entries as there are members, and members are never empty.
impl Canonical for AuthzConfig {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            AuthzConfig::Acl { members, weights } => {
                enc.u8(0);
                enc.list(members);
                enc.list(weights.as_deref().unwrap_or(&[]));
            }
            AuthzConfig::Token { trusted_issuers } => {
                enc.u8(1);
                enc.list(trusted_issuers);
            }
            AuthzConfig::Vc {
                trusted_issuers,
                required_claims,
            } => {
                enc.u8(2);
                enc.list(trusted_issuers);
                enc.string_map(required_claims);
            }
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => {
                let members = dec.list()?;
                let weights: Vec<u64> = dec.list()?;
                Ok(AuthzConfig::Acl {
                    members,
                    weights: (!weights.is_empty()).then_some(weights),
                })
            }
            1 => Ok(AuthzConfig::Token {
                trusted_issuers: dec.list()?,
            }),
            2 => Ok(AuthzConfig::Vc {
                trusted_issuers: dec.list()?,
                required_claims: dec.string_map()?,
            }),
            tag => Err(dec.bad_tag("authz config", tag)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Propose,
    Decide,
}

/// Who is asking to do what. `proposal_id` is the id the action is bound to:
/// the proposal being decided, or the id a new proposal will receive.
#[derive(Debug, Clone, Copy)]
pub struct AuthzRequest<'a> {
    pub did: &'a Did,
    pub proposal_id: ProposalId,
    pub controller_key: &'a PublicKey,
    pub credential: Option<&'a CredentialPresentation>,
    pub action: Action,
}

/// Every bearer-token nonce that has been spent, keyed by issuer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceLedger {
    consumed: BTreeSet<ConsumedNonce>,
}

impl NonceLedger {
    pub fn is_consumed(&self, entry: &ConsumedNonce) -> bool {
        self.consumed.contains(entry)
    }

    /// Returns `false` if the nonce had already been consumed.
    pub fn consume(&mut self, entry: ConsumedNonce) -> bool {
        self.consumed.insert(entry)
    }

    pub fn len(&self) -> usize {
        self.consumed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumed.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthzGrant {
    pub effective_weight: u64,
    pub consumed_nonce: Option<ConsumedNonce>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthzError {
    #[error("controller is not a member of the group")]
    NotAMember,
    #[error("a credential is required by this group")]
    MissingCredential,
    #[error("malformed credential: {0}")]
    MalformedCredential(&'static str),
    #[error("credential issuer is not trusted")]
    UntrustedIssuer,
    #[error("issuer signature does not verify")]
    BadIssuerSignature,
    #[error("holder signature does not verify")]
    BadHolderSignature,
    #[error("credential holder is not the requesting controller")]
    HolderMismatch,
    #[error("required claim `{0}` missing or not equal")]
    ClaimMismatch(String),
    #[error("token nonce was already consumed")]
    ReplayedNonce,
}

impl AuthzError {
    pub fn code(&self) -> &'static str {
        match self {
            AuthzError::NotAMember => "NotAMember",
            AuthzError::MissingCredential => "MissingCredential",
            AuthzError::MalformedCredential(_) => "MalformedCredential",
            AuthzError::UntrustedIssuer => "UntrustedIssuer",
            AuthzError::BadIssuerSignature => "BadIssuerSignature",
            AuthzError::BadHolderSignature => "BadHolderSignature",
            AuthzError::HolderMismatch => "HolderMismatch",
            AuthzError::ClaimMismatch(_) => "ClaimMismatch",
            AuthzError::ReplayedNonce => "ReplayedNonce",
        }
    }
}

fn scan_issuers(
    trusted: &[PublicKey],
    issuer: &PublicKey,
    meter: &mut Meter,
) -> Result<(), AuthzError> {
    for candidate in trusted {
        meter.charge(CostCategory::IterationStep, 1);
        if candidate == issuer {
            return Ok(());
        }
    }
    Err(AuthzError::UntrustedIssuer)
}

/// Evaluates `request` against `config`. On a granted token request the
/// nonce is consumed; a denied request leaves the ledger untouched.
pub fn authorize(
    config: &AuthzConfig,
    request: &AuthzRequest<'_>,
    nonces: &mut NonceLedger,
    meter: &mut Meter,
) -> Result<AuthzGrant, AuthzError> {
    match config {
        AuthzConfig::Acl { members, weights } => {
            if request.credential.is_some() {
                return Err(AuthzError::MalformedCredential(
                    "acl groups take no credential",
                ));
            }
            for (i, member) in members.iter().enumerate() {
                meter.charge(CostCategory::IterationStep, 1);
                if member == request.controller_key {
                    let effective_weight = weights.as_ref().map_or(1, |w| w[i]);
                    return Ok(AuthzGrant {
                        effective_weight,
                        consumed_nonce: None,
                    });
                }
            }
            Err(AuthzError::NotAMember)
        }
        AuthzConfig::Token { trusted_issuers } => {
            let token = match request.credential {
                None => return Err(AuthzError::MissingCredential),
                Some(CredentialPresentation::Token { token }) => token,
                Some(_) => return Err(AuthzError::MalformedCredential("expected a bearer token")),
            };
            scan_issuers(trusted_issuers, &token.issuer_key, meter)?;
            meter.charge(CostCategory::SigVerify, 1);
            if !token.verify() {
                return Err(AuthzError::BadIssuerSignature);
            }
            let entry = ConsumedNonce {
                issuer_key: token.issuer_key,
                nonce: token.nonce,
            };
            if nonces.is_consumed(&entry) {
                return Err(AuthzError::ReplayedNonce);
            }
            meter.charge(CostCategory::StorageWriteNew, 1);
            nonces.consume(entry);
            Ok(AuthzGrant {
                effective_weight: 1,
                consumed_nonce: Some(entry),
            })
        }
        AuthzConfig::Vc {
            trusted_issuers,
            required_claims,
        } => {
            let (credential, holder_signature) = match request.credential {
                None => return Err(AuthzError::MissingCredential),
                Some(CredentialPresentation::Vc {
                    credential,
                    holder_signature,
                }) => (credential, holder_signature),
                Some(_) => {
                    return Err(AuthzError::MalformedCredential(
                        "expected a verifiable credential",
                    ))
                }
            };
            scan_issuers(trusted_issuers, &credential.issuer_key, meter)?;
            meter.charge(CostCategory::SigVerify, 1);
            if !credential.verify_issuer() {
                return Err(AuthzError::BadIssuerSignature);
            }
            if credential.holder_key != *request.controller_key {
                return Err(AuthzError::HolderMismatch);
            }
            meter.charge(CostCategory::SigVerify, 1);
            let payload = CredentialPresentation::holder_payload(
                request.did,
                request.proposal_id,
                credential,
            );
            if !credential.holder_key.verify(&payload, holder_signature) {
                return Err(AuthzError::BadHolderSignature);
            }
            for (key, expected) in required_claims {
                meter.charge(CostCategory::IterationStep, 1);
                if credential.claims.get(key) != Some(expected) {
                    return Err(AuthzError::ClaimMismatch(key.clone()));
                }
            }
            let effective_weight = credential
                .claims
                .get(WEIGHT_CLAIM)
                .and_then(|w| w.parse::<u64>().ok())
                .filter(|&w| w > 0)
                .unwrap_or(1);
            Ok(AuthzGrant {
                effective_weight,
                consumed_nonce: None,
            })
        }
    }
}
