//! Recursive bit string (RBS) encoding of domain subtrees.
//!
//! Each internal node of a subtree contributes one block:
//!
//! ```text
//! [ port count : header_bits ][ port bitmap : port count bits ]
//! ```
//!
//! Bit `p` of the bitmap is set iff the link on port `p` carries a copy of
//! the packet. Blocks are laid out depth first, pre-order, children in
//! ascending port order. A set bit pointing at a user device means delivery
//! and has no block of its own, so the total length is
//! `sum(header_bits + port_count)` over internal nodes. Ports are numbered
//! by ascending link id at every node.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::topology::{LinkId, NodeId, NodeRole, Topology};
use crate::tree::DomainSubtree;

pub const DEFAULT_HEADER_BITS: u32 = 8;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RbsError {
    #[error("node {node} has {ports} ports, more than a {header_bits}-bit header can count")]
    HeaderOverflow { node: NodeId, ports: usize, header_bits: u32 },
    #[error("header width {0} outside 1..=32")]
    InvalidHeaderWidth(u32),
    #[error("encoding truncated at bit {at} while decoding node {node}")]
    Truncated { node: NodeId, at: usize },
    #[error("node {node} header claims {claimed} ports, node has {actual}")]
    PortCountMismatch { node: NodeId, claimed: u64, actual: usize },
    #[error("{0} trailing bits after the last block")]
    TrailingBits(usize),
    #[error("invalid hex encoding: {0}")]
    Hex(String),
}

/// Canonical per-node port numbering: port `p` of a node is its `p`-th
/// incident link in ascending link id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortMap {
    ports: Vec<Vec<LinkId>>,
}

impl PortMap {
    pub fn new(topology: &Topology) -> Self {
        let ports = topology
            .nodes()
            .map(|n| {
                let mut links: Vec<_> = topology.neighbors(n).iter().map(|&(l, _)| l).collect();
                links.sort_unstable();
                links
            })
            .collect();
        Self { ports }
    }

    pub fn port_count(&self, node: NodeId) -> usize {
        self.ports[node.index()].len()
    }

    pub fn port_of(&self, node: NodeId, link: LinkId) -> Option<usize> {
        self.ports[node.index()].binary_search(&link).ok()
    }

    pub fn link_at(&self, node: NodeId, port: usize) -> Option<LinkId> {
        self.ports[node.index()].get(port).copied()
    }
}

/// A serialized RBS bit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RbsEncoding {
    bits: Vec<bool>,
}

impl RbsEncoding {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bit_len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// The encoding with its last `n` bits removed.
    pub fn truncated(&self, n: usize) -> Self {
        let keep = self.bits.len().saturating_sub(n);
        Self { bits: self.bits[..keep].to_vec() }
    }

    /// Hex digits, most significant bit first within each byte, tail padded
    /// with zero bits.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.bits.len().div_ceil(4));
        for chunk in self.bits.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)));
            write!(out, "{byte:02x}").unwrap();
        }
        out
    }

    /// Inverse of [`to_hex`](Self::to_hex); `bit_len` drops the padding.
    pub fn from_hex(hex: &str, bit_len: usize) -> Result<Self, RbsError> {
        if !hex.len().is_multiple_of(2) || hex.len() * 4 < bit_len || hex.len() / 2 > bit_len.div_ceil(8) {
            return Err(RbsError::Hex(format!("{} hex digits cannot hold exactly {bit_len} bits", hex.len())));
        }
        let mut bits = Vec::with_capacity(bit_len);
        for i in (0..hex.len()).step_by(2) {
            let byte = u8::from_str_radix(&hex[i..i + 2], 16)
                .map_err(|e| RbsError::Hex(e.to_string()))?;
            bits.extend((0..8).map(|k| byte & (0x80 >> k) != 0));
        }
        if bits[bit_len..].iter().any(|&b| b) {
            return Err(RbsError::Hex("non-zero padding bits".into()));
        }
        bits.truncate(bit_len);
        Ok(Self { bits })
    }
}

/// Encoder, length oracle and forwarding simulator for one topology.
#[derive(Debug, Clone)]
pub struct RbsCodec {
    ports: PortMap,
    header_bits: u32,
}

impl RbsCodec {
    pub fn new(topology: &Topology) -> Self {
        Self { ports: PortMap::new(topology), header_bits: DEFAULT_HEADER_BITS }
    }

    pub fn with_header_bits(topology: &Topology, header_bits: u32) -> Result<Self, RbsError> {
        if !(1..=32).contains(&header_bits) {
            return Err(RbsError::InvalidHeaderWidth(header_bits));
        }
        Ok(Self { ports: PortMap::new(topology), header_bits })
    }

    pub fn port_map(&self) -> &PortMap {
        &self.ports
    }

    pub fn header_bits(&self) -> u32 {
        self.header_bits
    }

    /// Bits one block for `node` occupies, or a header overflow.
    pub fn block_bits(&self, node: NodeId) -> Result<u64, RbsError> {
        let ports = self.ports.port_count(node);
        if ports as u64 >= 1u64 << self.header_bits {
            return Err(RbsError::HeaderOverflow { node, ports, header_bits: self.header_bits });
        }
        Ok(u64::from(self.header_bits) + ports as u64)
    }

    /// Length of [`encode`](Self::encode)'s output without materializing it.
    pub fn encoded_length(&self, subtree: &DomainSubtree) -> Result<u64, RbsError> {
        subtree.internal_nodes().map(|n| self.block_bits(n)).sum()
    }

    pub fn encode(&self, subtree: &DomainSubtree) -> Result<RbsEncoding, RbsError> {
        let mut bits = Vec::new();
        if subtree.is_internal(subtree.root()) {
            self.encode_node(subtree, subtree.root(), &mut bits)?;
        }
        Ok(RbsEncoding { bits })
    }

    fn encode_node(&self, subtree: &DomainSubtree, node: NodeId, bits: &mut Vec<bool>) -> Result<(), RbsError> {
        self.block_bits(node)?;
        let ports = self.ports.port_count(node);
        push_uint(bits, ports as u64, self.header_bits);
        let start = bits.len();
        bits.resize(start + ports, false);
        let mut next = Vec::new();
        for &(link, child) in subtree.children(node) {
            let port = self.ports.port_of(node, link).expect("subtree link is incident to its parent");
            bits[start + port] = true;
            next.push((port, child));
        }
        next.sort_unstable();
        for (_, child) in next {
            if subtree.is_internal(child) {
                self.encode_node(subtree, child, bits)?;
            }
        }
        Ok(())
    }

    /// Walks `encoding` from `root` the way each router on the path would:
    /// read its block, deliver on set ports facing user devices and hand the
    /// next block to the neighbor on every other set port.
    ///
    /// Returns deliveries in the order they happen. An empty encoding
    /// delivers to `root` itself.
    pub fn simulate_forwarding(
        &self,
        topology: &Topology,
        root: NodeId,
        encoding: &RbsEncoding,
    ) -> Result<Vec<NodeId>, RbsError> {
        if encoding.is_empty() {
            return Ok(vec![root]);
        }
        let mut reader = BitReader { bits: &encoding.bits, pos: 0 };
        let mut delivered = Vec::new();
        self.forward_at(topology, root, &mut reader, &mut delivered)?;
        let rest = encoding.bits.len() - reader.pos;
        if rest > 0 {
            return Err(RbsError::TrailingBits(rest));
        }
        Ok(delivered)
    }

    fn forward_at(
        &self,
        topology: &Topology,
        node: NodeId,
        reader: &mut BitReader<'_>,
        delivered: &mut Vec<NodeId>,
    ) -> Result<(), RbsError> {
        let claimed = reader.read_uint(self.header_bits).ok_or(RbsError::Truncated { node, at: reader.pos })?;
        let actual = self.ports.port_count(node);
        if claimed != actual as u64 {
            return Err(RbsError::PortCountMismatch { node, claimed, actual });
        }
        let bitmap = reader.take(actual).ok_or(RbsError::Truncated { node, at: reader.pos })?;
        let targets: Vec<NodeId> = bitmap
            .iter()
            .enumerate()
            .filter(|(_, &set)| set)
            .map(|(port, _)| {
                let link = self.ports.link_at(node, port).expect("port below port count");
                topology.link(link).other(node)
            })
            .collect();
        for next in targets {
            if topology.role(next) == NodeRole::UserDevice {
                delivered.push(next);
            } else {
                self.forward_at(topology, next, reader, delivered)?;
            }
        }
        Ok(())
    }
}

/// The delivered set of a forwarding run, or `None` if any node received
/// more than one copy.
pub fn delivered_set(deliveries: &[NodeId]) -> Option<BTreeSet<NodeId>> {
    let set: BTreeSet<_> = deliveries.iter().copied().collect();
    (set.len() == deliveries.len()).then_some(set)
}

fn push_uint(bits: &mut Vec<bool>, value: u64, width: u32) {
    bits.extend((0..width).rev().map(|k| (value >> k) & 1 == 1));
}

struct BitReader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [bool]> {
        let out = self.bits.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn read_uint(&mut self, width: u32) -> Option<u64> {
        let raw = self.take(width as usize)?;
        Some(raw.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b)))
    }
}
