//! Layered encryption of destination addresses: chain ordering, onion
//! construction, one-layer peeling with shuffle, and the final list check.
//!
//! Position 1 removes the outermost layer. Every onion at a given depth has
//! the same byte length, so observers can check posts without any key.

use rand::seq::SliceRandom;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::groupcrypto::{
    derive_sig_pk, pke_decrypt, pke_encrypt, Ciphertext, CryptoError, GroupElement, Scalar,
    CIPHERTEXT_OVERHEAD, MAX_PAYLOAD,
};

pub const ADDRESS_LEN: usize = 20;
/// Innermost plaintext: the address followed by zero padding.
pub const PADDED_LEN: usize = 32;
pub const MAX_GROUP: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OnionError {
    #[error("duplicate public key in group")]
    DuplicateKey,
    #[error("group of {0} is too small")]
    GroupTooSmall(usize),
    #[error("group of {0} exceeds the supported maximum")]
    GroupTooLarge(usize),
    #[error("incoming onion {index} failed its integrity check")]
    IntegrityFailure { index: usize },
    #[error("incoming onion {index} has a malformed layer")]
    MalformedLayer { index: usize },
    #[error("incoming onions do not share one depth")]
    DepthMismatch,
    #[error("malformed stage post: {0}")]
    MalformedPost(&'static str),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Destination(pub [u8; ADDRESS_LEN]);

impl Destination {
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Destination)
    }

    pub fn padded(&self) -> [u8; PADDED_LEN] {
        let mut out = [0u8; PADDED_LEN];
        out[..ADDRESS_LEN].copy_from_slice(&self.0);
        out
    }

    pub fn unpad(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != PADDED_LEN || bytes[ADDRESS_LEN..].iter().any(|b| *b != 0) {
            return None;
        }
        Destination::from_slice(&bytes[..ADDRESS_LEN])
    }
}

impl std::fmt::Display for Destination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

/// Blob length of an onion with `depth` layers remaining.
pub const fn blob_len(depth: usize) -> usize {
    PADDED_LEN + depth * CIPHERTEXT_OVERHEAD
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Onion {
    depth: usize,
    blob: Vec<u8>,
}

impl Onion {
    pub fn new(depth: usize, blob: Vec<u8>) -> Result<Self, OnionError> {
        if blob.len() != blob_len(depth) {
            return Err(OnionError::MalformedPost(
                "onion length does not match depth",
            ));
        }
        Ok(Onion { depth, blob })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn blob(&self) -> &[u8] {
        &self.blob
    }

    pub fn into_blob(self) -> Vec<u8> {
        self.blob
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainEntry {
    pub position: u16,
    pub pk_enc: GroupElement,
    pub pk_sig: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainOrder {
    entries: Vec<ChainEntry>,
}

impl ChainOrder {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ChainEntry] {
        &self.entries
    }

    /// 1-based.
    pub fn entry(&self, position: u16) -> Option<&ChainEntry> {
        position
            .checked_sub(1)
            .and_then(|i| self.entries.get(i as usize))
    }

    pub fn position_of(&self, pk_enc: &GroupElement) -> Option<u16> {
        self.entries
            .iter()
            .find(|e| &e.pk_enc == pk_enc)
            .map(|e| e.position)
    }

    pub fn enc_keys(&self) -> Vec<GroupElement> {
        self.entries.iter().map(|e| e.pk_enc.clone()).collect()
    }
}

/// Last three hex characters of the canonical key encoding.
pub fn order_suffix(pk: &GroupElement) -> String {
    let h = hex::encode(pk.to_bytes());
    h[h.len() - 3..].to_string()
}

/// Sorts by key suffix, then by full encoding, and assigns positions from 1.
pub fn order_participants(
    pks: &[GroupElement],
    channel_id: &[u8],
) -> Result<ChainOrder, OnionError> {
    if pks.len() < 2 {
        return Err(OnionError::GroupTooSmall(pks.len()));
    }
    if pks.len() > MAX_GROUP {
        return Err(OnionError::GroupTooLarge(pks.len()));
    }
    let mut keyed: Vec<(String, Vec<u8>, &GroupElement)> = pks
        .iter()
        .map(|pk| (order_suffix(pk), pk.to_bytes(), pk))
        .collect();
    keyed.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    if keyed.windows(2).any(|w| w[0].1 == w[1].1) {
        return Err(OnionError::DuplicateKey);
    }
    let entries = keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, pk))| ChainEntry {
            position: i as u16 + 1,
            pk_enc: pk.clone(),
            pk_sig: derive_sig_pk(channel_id, pk),
        })
        .collect();
    Ok(ChainOrder { entries })
}

/// Encrypts `inner` under each key, last key innermost, so `pks[0]` peels first.
pub fn wrap_layers<R: RngCore + CryptoRng>(
    inner: &[u8],
    pks: &[GroupElement],
    rng: &mut R,
) -> Result<Vec<u8>, OnionError> {
    let mut blob = inner.to_vec();
    for pk in pks.iter().rev() {
        blob = pke_encrypt(pk, &blob, rng)?.to_bytes();
    }
    Ok(blob)
}

pub fn build_onion<R: RngCore + CryptoRng>(
    dest: &Destination,
    order: &ChainOrder,
    rng: &mut R,
) -> Result<Onion, OnionError> {
    let n = order.len();
    if n > MAX_GROUP || blob_len(n.saturating_sub(1)) > MAX_PAYLOAD {
        return Err(OnionError::GroupTooLarge(n));
    }
    let blob = wrap_layers(&dest.padded(), &order.enc_keys(), rng)?;
    Onion::new(n, blob)
}

/// Output of removing one layer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Peeled {
    Onion(Onion),
    Destination(Destination),
}

impl Peeled {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Peeled::Onion(o) => o.blob.clone(),
            Peeled::Destination(d) => d.0.to_vec(),
        }
    }
}

/// Removes one layer from a single onion without shuffling.
pub fn peel_one(sk: &Scalar, onion: &Onion, index: usize) -> Result<Peeled, OnionError> {
    if onion.depth == 0 {
        return Err(OnionError::MalformedLayer { index });
    }
    let ct =
        Ciphertext::from_bytes(&onion.blob).map_err(|_| OnionError::MalformedLayer { index })?;
    let plain = pke_decrypt(sk, &ct).map_err(|_| OnionError::IntegrityFailure { index })?;
    let depth = onion.depth - 1;
    if depth == 0 {
        Destination::unpad(&plain)
            .map(Peeled::Destination)
            .ok_or(OnionError::MalformedLayer { index })
    } else {
        Onion::new(depth, plain)
            .map(Peeled::Onion)
            .map_err(|_| OnionError::MalformedLayer { index })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StageItems {
    Onions(Vec<Onion>),
    Destinations(Vec<Destination>),
}

impl StageItems {
    pub fn len(&self) -> usize {
        match self {
            StageItems::Onions(v) => v.len(),
            StageItems::Destinations(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn blobs(&self) -> Vec<Vec<u8>> {
        match self {
            StageItems::Onions(v) => v.iter().map(|o| o.blob.clone()).collect(),
            StageItems::Destinations(v) => v.iter().map(|d| d.0.to_vec()).collect(),
        }
    }

    fn from_peeled(items: Vec<Peeled>) -> Result<Self, OnionError> {
        if items.iter().all(|p| matches!(p, Peeled::Destination(_))) {
            Ok(StageItems::Destinations(
                items
                    .into_iter()
                    .filter_map(|p| match p {
                        Peeled::Destination(d) => Some(d),
                        Peeled::Onion(_) => None,
                    })
                    .collect(),
            ))
        } else if items.iter().all(|p| matches!(p, Peeled::Onion(_))) {
            Ok(StageItems::Onions(
                items
                    .into_iter()
                    .filter_map(|p| match p {
                        Peeled::Onion(o) => Some(o),
                        Peeled::Destination(_) => None,
                    })
                    .collect(),
            ))
        } else {
            Err(OnionError::DepthMismatch)
        }
    }
}

/// One chain position's published list. Position 0 denotes the initial
/// onion set; at position `n` the items are destinations in the clear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagePost {
    pub position: u16,
    pub items: StageItems,
}

impl StagePost {
    pub fn destinations(&self) -> Option<&[Destination]> {
        match &self.items {
            StageItems::Destinations(d) => Some(d),
            StageItems::Onions(_) => None,
        }
    }

    pub fn onions(&self) -> Option<&[Onion]> {
        match &self.items {
            StageItems::Onions(o) => Some(o),
            StageItems::Destinations(_) => None,
        }
    }

    /// `u16 position || u16 count || items`, big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let blobs = self.items.blobs();
        let mut out = Vec::with_capacity(4 + blobs.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(&self.position.to_be_bytes());
        out.extend_from_slice(&(blobs.len() as u16).to_be_bytes());
        for b in blobs {
            out.extend_from_slice(&b);
        }
        out
    }

    /// Parses a post from a chain of `n`, enforcing the depth-determined
    /// item width. The item count is not checked here.
    pub fn from_bytes(bytes: &[u8], n: usize) -> Result<Self, OnionError> {
        if bytes.len() < 4 {
            return Err(OnionError::MalformedPost("truncated header"));
        }
        let position = u16::from_be_bytes([bytes[0], bytes[1]]);
        let count = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
        if position as usize > n {
            return Err(OnionError::MalformedPost("position beyond chain"));
        }
        let depth = n - position as usize;
        let width = if depth == 0 {
            ADDRESS_LEN
        } else {
            blob_len(depth)
        };
        let body = &bytes[4..];
        if body.len() != count * width {
            return Err(OnionError::MalformedPost("item width does not match depth"));
        }
        let chunks = body.chunks_exact(width);
        let items = if depth == 0 {
            StageItems::Destinations(
                chunks
                    .map(|c| Destination::from_slice(c).unwrap())
                    .collect(),
            )
        } else {
            StageItems::Onions(
                chunks
                    .map(|c| Onion {
                        depth,
                        blob: c.to_vec(),
                    })
                    .collect(),
            )
        };
        Ok(StagePost { position, items })
    }

    /// Full discipline check an observer can run without keys.
    pub fn is_well_formed(&self, n: usize) -> bool {
        if self.items.len() != n || self.position as usize > n {
            return false;
        }
        let depth = n - self.position as usize;
        match &self.items {
            StageItems::Destinations(_) => depth == 0,
            StageItems::Onions(o) => {
                depth > 0
                    && o.iter()
                        .all(|x| x.depth == depth && x.blob.len() == blob_len(depth))
            }
        }
    }
}

/// Peels every incoming onion with `sk` and publishes them in uniformly
/// random order.
pub fn peel_stage<R: RngCore + CryptoRng>(
    sk: &Scalar,
    position: u16,
    incoming: &[Onion],
    rng: &mut R,
) -> Result<StagePost, OnionError> {
    let depth = incoming.first().map(|o| o.depth).unwrap_or(0);
    if depth == 0 || incoming.iter().any(|o| o.depth != depth) {
        return Err(OnionError::DepthMismatch);
    }
    let mut peeled = incoming
        .iter()
        .enumerate()
        .map(|(i, o)| peel_one(sk, o, i))
        .collect::<Result<Vec<_>, _>>()?;
    peeled.shuffle(rng);
    Ok(StagePost {
        position,
        items: StageItems::from_peeled(peeled)?,
    })
}

/// True iff the list has exactly `n` entries and contains `own`.
pub fn check_destinations(final_list: &[Destination], own: &Destination, n: usize) -> bool {
    final_list.len() == n && final_list.contains(own)
}

/// Multiset equality of byte strings.
pub fn is_permutation(a: &[Vec<u8>], b: &[Vec<u8>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort();
    y.sort();
    x == y
}
