//! Signed direct-storage capabilities.
//!
//! Wire format: `base64url(payload) "." base64url(HMAC-SHA-256(payload))`,
//! unpadded, where `payload` is the compact canonical JSON of
//! [`TokenPayload`].

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::kms::PlatformSecret;
use crate::canonical::to_canonical_bytes;
use crate::mesh::{PortRef, ProductId};
use crate::policy::Action;

pub const DEFAULT_TTL_SECONDS: u64 = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenPayload {
    /// Subject user id.
    pub sub: String,
    pub product: ProductId,
    pub port: String,
    pub action: Action,
    pub issued_at: u64,
    pub expires_at: u64,
    /// 128 random bits, hex.
    pub nonce: String,
}

impl TokenPayload {
    pub fn new(sub: &str, resource: &PortRef, action: Action, issued_at: u64, ttl_seconds: u64) -> Self {
        let mut nonce = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut nonce);
        TokenPayload {
            sub: sub.to_string(),
            product: resource.product.clone(),
            port: resource.port.clone(),
            action,
            issued_at,
            expires_at: issued_at + ttl_seconds.max(1),
            nonce: hex::encode(nonce),
        }
    }

    pub fn resource(&self) -> PortRef {
        self.product.port(&self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    pub payload: TokenPayload,
    /// The encoded token as handed to clients.
    pub token: String,
}

pub fn sign(payload: TokenPayload, secret: &PlatformSecret) -> AccessToken {
    let bytes = to_canonical_bytes(&payload).expect("payload serializes");
    let tag = secret.mac(&bytes);
    let token = format!("{}.{}", URL_SAFE_NO_PAD.encode(&bytes), URL_SAFE_NO_PAD.encode(tag));
    AccessToken { payload, token }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    Valid,
    Expired,
    SignatureInvalid,
    ResourceMismatch,
    /// Not a token at all: wrong shape, bad base64 or bad payload.
    Malformed,
}

impl Verification {
    pub fn is_valid(self) -> bool {
        self == Verification::Valid
    }
}

/// Splits and decodes a token without checking the signature.
pub fn decode_unverified(token: &str) -> Option<TokenPayload> {
    let (payload, _) = token.split_once('.')?;
    let bytes = URL_SAFE_NO_PAD.decode(payload).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// Checks, in order: structure, signature, resource binding, expiry.
/// Expired means `now >= expires_at`.
pub fn verify_token(token: &str, resource: &PortRef, now: u64, secret: &PlatformSecret) -> Verification {
    let Some((payload_b64, tag_b64)) = token.split_once('.') else {
        return Verification::Malformed;
    };
    let (Ok(bytes), Ok(tag)) = (URL_SAFE_NO_PAD.decode(payload_b64), URL_SAFE_NO_PAD.decode(tag_b64)) else {
        return Verification::Malformed;
    };
    if tag.len() != 32 {
        return Verification::Malformed;
    }
    if !secret.verify_mac(&bytes, &tag) {
        return Verification::SignatureInvalid;
    }
    let Ok(payload) = serde_json::from_slice::<TokenPayload>(&bytes) else {
        return Verification::Malformed;
    };
    if &payload.resource() != resource {
        return Verification::ResourceMismatch;
    }
    if now >= payload.expires_at {
        return Verification::Expired;
    }
    Verification::Valid
}
