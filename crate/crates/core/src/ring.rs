//! Consistent-hash partitioner.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::RingError;
use crate::ids::NodeId;

/// MurmurHash3 x64 128-bit, returning `(h1, h2)`.
pub fn murmur3_x64_128(data: &[u8], seed: u64) -> (u64, u64) {
    const C1: u64 = 0x87c3_7b91_1142_53d5;
    const C2: u64 = 0x4cf5_ad43_2745_937f;

    let mut h1 = seed;
    let mut h2 = seed;
    let mut chunks = data.chunks_exact(16);
    for block in &mut chunks {
        let mut k1 = u64::from_le_bytes(block[..8].try_into().unwrap());
        let mut k2 = u64::from_le_bytes(block[8..].try_into().unwrap());

        k1 = k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
        h1 ^= k1;
        h1 = h1.rotate_left(27).wrapping_add(h2).wrapping_mul(5).wrapping_add(0x52dc_e729);

        k2 = k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h2 ^= k2;
        h2 = h2.rotate_left(31).wrapping_add(h1).wrapping_mul(5).wrapping_add(0x3849_5ab5);
    }

    let tail = chunks.remainder();
    let mut k1 = 0u64;
    let mut k2 = 0u64;
    for (i, &b) in tail.iter().enumerate() {
        if i < 8 {
            k1 |= (b as u64) << (8 * i);
        } else {
            k2 |= (b as u64) << (8 * (i - 8));
        }
    }
    if tail.len() > 8 {
        k2 = k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h2 ^= k2;
    }
    if !tail.is_empty() {
        k1 = k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
        h1 ^= k1;
    }

    let len = data.len() as u64;
    h1 ^= len;
    h2 ^= len;
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    (h1, h2)
}

fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// Ring position of a key.
pub fn key_token(key: &[u8]) -> u64 {
    murmur3_x64_128(key, 0).0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRing {
    tokens: Vec<(u64, NodeId)>,
    nodes: usize,
}

impl TokenRing {
    /// `n` nodes with `vnodes` evenly spaced tokens each; slot `j` belongs
    /// to node `j mod n`, so every node owns an equal share of the key space.
    pub fn evenly_spaced(n: u32, vnodes: u32) -> Result<Self, RingError> {
        if n == 0 || vnodes == 0 {
            return Err(RingError::Empty);
        }
        let slots = n as u128 * vnodes as u128;
        let step = (1u128 << 64) / slots;
        let tokens = (0..slots)
            .map(|j| ((j * step) as u64, NodeId((j % n as u128) as u32)))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(mut tokens: Vec<(u64, NodeId)>) -> Result<Self, RingError> {
        if tokens.is_empty() {
            return Err(RingError::Empty);
        }
        tokens.sort_unstable();
        for w in tokens.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(RingError::DuplicateToken { token: w[0].0, a: w[0].1, b: w[1].1 });
            }
        }
        let nodes = tokens.iter().map(|t| t.1).collect::<BTreeSet<_>>().len();
        Ok(TokenRing { tokens, nodes })
    }

    pub fn tokens(&self) -> &[(u64, NodeId)] {
        &self.tokens
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// `r` distinct nodes walking clockwise from the key's token, starting
    /// with the owner of the first token at or after it.
    pub fn responsible_nodes(&self, key: &[u8], r: usize) -> Result<Vec<NodeId>, RingError> {
        self.responsible_for_token(key_token(key), r)
    }

    pub fn responsible_for_token(&self, token: u64, r: usize) -> Result<Vec<NodeId>, RingError> {
        if r == 0 || r > self.nodes {
            return Err(RingError::InvalidReplicationFactor { r, nodes: self.nodes });
        }
        let start = self.tokens.partition_point(|&(t, _)| t < token);
        let mut out = Vec::with_capacity(r);
        for i in 0..self.tokens.len() {
            let node = self.tokens[(start + i) % self.tokens.len()].1;
            if !out.contains(&node) {
                out.push(node);
                if out.len() == r {
                    break;
                }
            }
        }
        Ok(out)
    }

    /// First responsible node of a key.
    pub fn primary(&self, key: &[u8]) -> NodeId {
        self.responsible_for_token(key_token(key), 1).expect("ring is non-empty")[0]
    }
}
