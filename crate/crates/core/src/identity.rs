//! Pseudonymous associate identities and rotating broadcast tokens.
//!
//! An associate is only ever known to the system by `SHA-256(org_salt ‖ enterprise_id)`.
//! Devices broadcast a 16-byte token that changes every rotation epoch; the token is
//! the truncated `HMAC-SHA256(device_secret, epoch_be_u64)`. The server, which holds
//! the roster of device secrets, inverts tokens through a precomputed per-epoch table.

use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use hmac::{Hmac, KeyInit, Mac};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

type HmacSha256 = Hmac<Sha256>;

/// Default token rotation period: 15 minutes.
pub const DEFAULT_ROTATION_MS: i64 = 900_000;
/// Default tolerated clock skew, in epochs, when resolving tokens.
pub const DEFAULT_SKEW_EPOCHS: i64 = 1;
pub const TOKEN_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdentityError {
    #[error("enterprise id must be non-empty")]
    InvalidIdentity,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed hex value: {0}")]
    MalformedHex(String),
}

/// SHA-256 digest identifying an associate. Ordered lexicographically by bytes,
/// which coincides with the ordering of the lowercase hex encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AssociateHash(pub [u8; 32]);

impl AssociateHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for AssociateHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AssociateHash({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for AssociateHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for AssociateHash {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_array::<32>(s).map(AssociateHash)
    }
}

impl Serialize for AssociateHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for AssociateHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn parse_hex_array<const N: usize>(s: &str) -> Result<[u8; N], IdentityError> {
    if s.len() != 2 * N || s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(IdentityError::MalformedHex(s.to_string()));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).map_err(|_| IdentityError::MalformedHex(s.to_string()))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociateIdentity {
    pub associate_hash: AssociateHash,
    pub display_alias: String,
    pub enrolled_at: i64,
}

impl AssociateIdentity {
    pub fn enrolled(mut self, at_ms: i64) -> Self {
        self.enrolled_at = at_ms;
        self
    }

    pub fn with_alias(mut self, alias: impl Into<String>) -> Self {
        self.display_alias = alias.into();
        self
    }
}

/// Hash an enterprise identifier under the organisation salt.
///
/// The default alias is derived from the hash, never from the enterprise id.
pub fn hash_identity(enterprise_id: &str, org_salt: &[u8; 16]) -> Result<AssociateIdentity, IdentityError> {
    if enterprise_id.is_empty() {
        return Err(IdentityError::InvalidIdentity);
    }
    let mut hasher = Sha256::new();
    hasher.update(org_salt);
    hasher.update(enterprise_id.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let associate_hash = AssociateHash(digest);
    Ok(AssociateIdentity {
        display_alias: default_alias(&associate_hash),
        associate_hash,
        enrolled_at: 0,
    })
}

pub fn default_alias(hash: &AssociateHash) -> String {
    format!("assoc-{}", &hash.to_hex()[..8])
}

/// Per-device key material. Deliberately not `Serialize`: secrets only leave
/// memory through the roster file format in [`write_roster`].
#[derive(Clone, PartialEq, Eq)]
pub struct DeviceSecret {
    pub secret: [u8; 32],
    pub owner: AssociateHash,
    pub issued_epoch_day: i64,
}

impl fmt::Debug for DeviceSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeviceSecret")
            .field("owner", &self.owner)
            .field("issued_epoch_day", &self.issued_epoch_day)
            .finish_non_exhaustive()
    }
}

impl DeviceSecret {
    pub fn generate<R: RngCore + CryptoRng>(owner: AssociateHash, issued_epoch_day: i64, rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        DeviceSecret { secret, owner, issued_epoch_day }
    }
}

/// A 16-byte broadcast token. The epoch it was derived for travels alongside
/// it in [`EphemeralToken`]; on air only the bytes are visible.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TokenBytes(pub [u8; TOKEN_LEN]);

impl TokenBytes {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for TokenBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenBytes({})", self.to_hex())
    }
}

impl fmt::Display for TokenBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for TokenBytes {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_array::<TOKEN_LEN>(s).map(TokenBytes)
    }
}

impl Serialize for TokenBytes {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TokenBytes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EphemeralToken {
    pub token: TokenBytes,
    pub epoch_index: i64,
}

/// Rotation epoch containing `timestamp_ms`. Epoch 0 starts at the Unix origin.
pub fn epoch_of(timestamp_ms: i64, rotation_ms: i64) -> Result<i64, IdentityError> {
    if rotation_ms <= 0 {
        return Err(IdentityError::InvalidConfig(format!("rotation_ms must be positive, got {rotation_ms}")));
    }
    Ok(timestamp_ms.div_euclid(rotation_ms))
}

pub fn derive_token(secret: &DeviceSecret, epoch_index: i64) -> EphemeralToken {
    let mut mac = <HmacSha256 as KeyInit>::new_from_slice(&secret.secret).expect("HMAC accepts keys of any length");
    mac.update(&epoch_index.to_be_bytes());
    let tag = mac.finalize().into_bytes();
    let mut token = [0u8; TOKEN_LEN];
    token.copy_from_slice(&tag[..TOKEN_LEN]);
    EphemeralToken { token: TokenBytes(token), epoch_index }
}

/// Token → (owner, epoch) lookup over a contiguous range of epochs.
#[derive(Debug, Clone, Default)]
pub struct ResolutionTable {
    epochs: Option<RangeInclusive<i64>>,
    entries: HashMap<TokenBytes, (AssociateHash, i64)>,
}

impl ResolutionTable {
    pub fn build(roster: &[DeviceSecret], epochs: RangeInclusive<i64>) -> Self {
        let span = (epochs.end() - epochs.start() + 1).max(0) as usize;
        let mut entries = HashMap::with_capacity(roster.len() * span);
        for secret in roster {
            for epoch in epochs.clone() {
                let token = derive_token(secret, epoch);
                entries.entry(token.token).or_insert((secret.owner, epoch));
            }
        }
        ResolutionTable { epochs: Some(epochs), entries }
    }

    /// Table covering `observed_epoch ± skew_epochs`.
    pub fn around(roster: &[DeviceSecret], observed_epoch: i64, skew_epochs: i64) -> Self {
        let skew = skew_epochs.max(0);
        Self::build(roster, observed_epoch - skew..=observed_epoch + skew)
    }

    pub fn covers(&self, epoch: i64) -> bool {
        self.epochs.as_ref().is_some_and(|r| r.contains(&epoch))
    }

    pub fn epochs(&self) -> Option<&RangeInclusive<i64>> {
        self.epochs.as_ref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// O(1) lookup. Matches only tokens whose derivation epoch lies within
    /// `skew_epochs` of `observed_epoch`.
    pub fn resolve(&self, token: &TokenBytes, observed_epoch: i64, skew_epochs: i64) -> Option<AssociateHash> {
        let (owner, epoch) = self.entries.get(token)?;
        ((epoch - observed_epoch).abs() <= skew_epochs).then_some(*owner)
    }
}

/// One-shot resolution; builds a table for the skew window around `observed_epoch`.
/// Long-running callers should keep a [`ResolutionTable`] (or [`SharedResolver`]) instead.
pub fn resolve_token(
    token: &EphemeralToken,
    observed_epoch: i64,
    roster: &[DeviceSecret],
    skew_epochs: i64,
) -> Option<AssociateHash> {
    if skew_epochs < 0 {
        return None;
    }
    ResolutionTable::around(roster, observed_epoch, skew_epochs).resolve(&token.token, observed_epoch, skew_epochs)
}

/// Resolution table bound to a rotation period, so callers can resolve by
/// observation timestamp instead of epoch.
#[derive(Debug, Clone)]
pub struct EpochResolver {
    table: ResolutionTable,
    rotation_ms: i64,
    skew_epochs: i64,
}

impl EpochResolver {
    /// Table for every epoch touched by `[start_ms, end_ms]`, widened by the skew.
    pub fn for_span(
        roster: &[DeviceSecret],
        start_ms: i64,
        end_ms: i64,
        rotation_ms: i64,
        skew_epochs: i64,
    ) -> Result<Self, IdentityError> {
        if skew_epochs < 0 {
            return Err(IdentityError::InvalidConfig(format!("skew_epochs must be >= 0, got {skew_epochs}")));
        }
        let first = epoch_of(start_ms, rotation_ms)? - skew_epochs;
        let last = epoch_of(end_ms, rotation_ms)? + skew_epochs;
        Ok(EpochResolver { table: ResolutionTable::build(roster, first..=last), rotation_ms, skew_epochs })
    }

    pub fn resolve_at(&self, token: &TokenBytes, observed_ms: i64) -> Option<AssociateHash> {
        let epoch = observed_ms.div_euclid(self.rotation_ms);
        self.table.resolve(token, epoch, self.skew_epochs)
    }

    pub fn table(&self) -> &ResolutionTable {
        &self.table
    }
}

/// Read-mostly holder of the current resolution table. Readers get an `Arc`
/// snapshot; `replace` swaps in a rebuilt table in one step.
#[derive(Debug, Default)]
pub struct SharedResolver {
    current: RwLock<Arc<ResolutionTable>>,
}

impl SharedResolver {
    pub fn new(table: ResolutionTable) -> Self {
        SharedResolver { current: RwLock::new(Arc::new(table)) }
    }

    pub fn table(&self) -> Arc<ResolutionTable> {
        self.current.read().expect("resolver lock poisoned").clone()
    }

    pub fn replace(&self, table: ResolutionTable) {
        *self.current.write().expect("resolver lock poisoned") = Arc::new(table);
    }
}

/// Roster file: header-less CSV `owner_hash,secret_hex,issued_epoch_day`.
pub fn write_roster<W: std::io::Write>(roster: &[DeviceSecret], out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for s in roster {
        w.write_record([s.owner.to_hex(), hex::encode(s.secret), s.issued_epoch_day.to_string()])?;
    }
    w.flush()
}

pub fn read_roster<R: std::io::Read>(input: R) -> Result<Vec<DeviceSecret>, IdentityError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut roster = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| IdentityError::InvalidConfig(e.to_string()))?;
        if record.len() != 3 {
            return Err(IdentityError::InvalidConfig(format!("roster row has {} fields", record.len())));
        }
        let owner = record[0].parse()?;
        let secret = parse_hex_array::<32>(&record[1])?;
        let issued_epoch_day = record[2]
            .parse()
            .map_err(|_| IdentityError::InvalidConfig(format!("bad issue day {:?}", &record[2])))?;
        roster.push(DeviceSecret { secret, owner, issued_epoch_day });
    }
    Ok(roster)
}
