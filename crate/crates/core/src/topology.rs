//! Campus network graph model and random topology generation.
//!
//! A campus topology is a five-layer hierarchy: a randomly meshed core,
//! core edge routers hanging off the core with a log-normally distributed
//! number of uplinks, secondary edge routers (one per region), user access
//! routers and finally user devices. Node ids are assigned layer by layer in
//! that order, so ids within one role are contiguous.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Attempts made by [`generate_topology`] before giving up on connectivity.
pub const MAX_GENERATION_ATTEMPTS: u64 = 100;

/// Bandwidth assigned to links touching a core router, in Mbps.
pub const CORE_LINK_BANDWIDTH: u32 = 10_000;
/// Bandwidth assigned to every other link, in Mbps.
pub const EDGE_LINK_BANDWIDTH: u32 = 1_000;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology config: {0}")]
    InvalidConfig(String),
    #[error("no connected topology after {attempts} attempts")]
    RetryCapExceeded { attempts: u64 },
    #[error("invalid link {src}-{dst}: {reason}")]
    InvalidLink { src: u32, dst: u32, reason: &'static str },
    #[error("node ids must be contiguous from 0; found id {0} out of place")]
    NonContiguousIds(u32),
    #[error("unknown node role `{0}`")]
    UnknownRole(String),
    #[error("topology is disconnected: node {0} unreachable from node {1}")]
    Disconnected(u32, u32),
    #[error("malformed topology json: {0}")]
    Json(String),
}

/// Node identifier, an index into [`Topology::roles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Link identifier, an index into [`Topology::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl LinkId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRole {
    Core,
    CoreEdge,
    SecondaryEdge,
    UserAccess,
    UserDevice,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Core => "Core",
            NodeRole::CoreEdge => "CoreEdge",
            NodeRole::SecondaryEdge => "SecondaryEdge",
            NodeRole::UserAccess => "UserAccess",
            NodeRole::UserDevice => "UserDevice",
        }
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeRole {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "Core" => NodeRole::Core,
            "CoreEdge" => NodeRole::CoreEdge,
            "SecondaryEdge" => NodeRole::SecondaryEdge,
            "UserAccess" => NodeRole::UserAccess,
            "UserDevice" => NodeRole::UserDevice,
            other => return Err(TopologyError::UnknownRole(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    /// Capacity in Mbps. Carried for completeness, no algorithm reads it.
    pub bandwidth: u32,
}

impl Link {
    /// The endpoint opposite `node`. `node` must be an endpoint.
    #[inline]
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.src == node {
            self.dst
        } else {
            self.src
        }
    }
}

/// An undirected campus graph.
///
/// Immutable once built. Adjacency lists are sorted by ascending link id,
/// which is also the port numbering used by the RBS codec.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    roles: Vec<NodeRole>,
    links: Vec<Link>,
    adjacency: Vec<Vec<(LinkId, NodeId)>>,
    seed: u64,
}

impl Topology {
    /// Builds a topology from node roles (node `i` has role `roles[i]`) and
    /// undirected `(src, dst, bandwidth)` triples; link ids follow slice order.
    pub fn new(
        roles: Vec<NodeRole>,
        links: &[(u32, u32, u32)],
        seed: u64,
    ) -> Result<Self, TopologyError> {
        let n = roles.len() as u32;
        let mut seen = HashSet::with_capacity(links.len());
        let mut adjacency = vec![Vec::new(); roles.len()];
        let mut out = Vec::with_capacity(links.len());
        for (i, &(src, dst, bandwidth)) in links.iter().enumerate() {
            if src == dst {
                return Err(TopologyError::InvalidLink { src, dst, reason: "self loop" });
            }
            if src >= n || dst >= n {
                return Err(TopologyError::InvalidLink { src, dst, reason: "unknown endpoint" });
            }
            if !seen.insert((src.min(dst), src.max(dst))) {
                return Err(TopologyError::InvalidLink { src, dst, reason: "duplicate pair" });
            }
            let id = LinkId(i as u32);
            adjacency[src as usize].push((id, NodeId(dst)));
            adjacency[dst as usize].push((id, NodeId(src)));
            out.push(Link { id, src: NodeId(src), dst: NodeId(dst), bandwidth });
        }
        Ok(Self { roles, links: out, adjacency, seed })
    }

    /// Number of nodes (`m`).
    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    /// Number of links (`k`).
    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn role(&self, node: NodeId) -> NodeRole {
        self.roles[node.index()]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    /// Incident `(link, neighbor)` pairs in ascending link id order.
    pub fn neighbors(&self, node: NodeId) -> &[(LinkId, NodeId)] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.roles.len() as u32).map(NodeId)
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |&n| self.role(n) == role)
    }

    /// First neighbor of `node` (in port order) with the given role.
    pub fn neighbor_with_role(&self, node: NodeId, role: NodeRole) -> Option<NodeId> {
        self.neighbors(node)
            .iter()
            .map(|&(_, n)| n)
            .find(|&n| self.role(n) == role)
    }

    /// Whether every node is reachable from node 0.
    pub fn is_connected(&self) -> bool {
        self.first_unreachable().is_none()
    }

    fn first_unreachable(&self) -> Option<NodeId> {
        if self.roles.is_empty() {
            return None;
        }
        let hops = bfs_hops(self, NodeId(0));
        hops.iter()
            .position(|h| h.is_none())
            .map(|i| NodeId(i as u32))
    }

    pub fn to_json(&self) -> String {
        let wire = WireTopology {
            nodes: self
                .nodes()
                .map(|id| WireNode { id: id.0, role: self.role(id).as_str().to_string() })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| WireLink {
                    link_id: l.id.0,
                    src: l.src.0,
                    dst: l.dst.0,
                    bandwidth: l.bandwidth,
                })
                .collect(),
            seed: self.seed,
        };
        serde_json::to_string(&wire).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let wire: WireTopology =
            serde_json::from_str(text).map_err(|e| TopologyError::Json(e.to_string()))?;
        let mut roles = Vec::with_capacity(wire.nodes.len());
        for (i, node) in wire.nodes.iter().enumerate() {
            if node.id as usize != i {
                return Err(TopologyError::NonContiguousIds(node.id));
            }
            roles.push(node.role.parse()?);
        }
        let mut links = Vec::with_capacity(wire.links.len());
        for (i, link) in wire.links.iter().enumerate() {
            if link.link_id as usize != i {
                return Err(TopologyError::Json(format!(
                    "link ids must be contiguous from 0; found {} at position {i}",
                    link.link_id
                )));
            }
            links.push((link.src, link.dst, link.bandwidth));
        }
        Topology::new(roles, &links, wire.seed)
    }
}

#[derive(Serialize, Deserialize)]
struct WireTopology {
    nodes: Vec<WireNode>,
    links: Vec<WireLink>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct WireNode {
    id: u32,
    role: String,
}

#[derive(Serialize, Deserialize)]
struct WireLink {
    #[serde(rename = "linkId")]
    link_id: u32,
    src: u32,
    dst: u32,
    #[serde(rename = "bandWidth")]
    bandwidth: u32,
}

/// Parameters for [`generate_topology`].
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub num_core: u32,
    pub num_core_edge: u32,
    pub num_secondary_edge: u32,
    pub num_user_access: u32,
    pub num_user_device: u32,
    /// Probability of a link between any two core routers.
    pub core_link_prob: f64,
    /// Probability of a link between any two secondary edge routers.
    pub edge_link_prob: f64,
    pub lognormal_mu: f64,
    pub lognormal_sigma: f64,
    pub seed: u64,
}

impl Default for TopologyConfig {
    /// The 60/128/12/128/512 campus used throughout the experiments.
    fn default() -> Self {
        Self {
            num_core: 60,
            num_core_edge: 128,
            num_secondary_edge: 12,
            num_user_access: 128,
            num_user_device: 512,
            core_link_prob: 0.10,
            edge_link_prob: 0.10,
            lognormal_mu: 2.0,
            lognormal_sigma: 1.5,
            seed: 0,
        }
    }
}

impl TopologyConfig {
    pub fn with_counts(core: u32, core_edge: u32, secondary: u32, access: u32, devices: u32) -> Self {
        Self {
            num_core: core,
            num_core_edge: core_edge,
            num_secondary_edge: secondary,
            num_user_access: access,
            num_user_device: devices,
            ..Self::default()
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn node_count(&self) -> usize {
        [
            self.num_core,
            self.num_core_edge,
            self.num_secondary_edge,
            self.num_user_access,
            self.num_user_device,
        ]
        .iter()
        .map(|&c| c as usize)
        .sum()
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let counts = [
            ("numCore", self.num_core),
            ("numCoreEdge", self.num_core_edge),
            ("numSecondaryEdge", self.num_secondary_edge),
            ("numUserAccess", self.num_user_access),
            ("numUserDevice", self.num_user_device),
        ];
        for (name, count) in counts {
            if count == 0 {
                return Err(TopologyError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        for (name, p) in [("coreLinkProb", self.core_link_prob), ("edgeLinkProb", self.edge_link_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(TopologyError::InvalidConfig(format!("{name} = {p} not in [0, 1]")));
            }
        }
        if !(self.lognormal_sigma.is_finite() && self.lognormal_sigma > 0.0) || !self.lognormal_mu.is_finite() {
            return Err(TopologyError::InvalidConfig(format!(
                "log-normal parameters mu = {}, sigma = {} invalid",
                self.lognormal_mu, self.lognormal_sigma
            )));
        }
        Ok(())
    }
}

/// Draws `exp(N)` with `N ~ Normal(mu, sigma^2)`.
///
/// `sigma` must be positive; callers validate it (see
/// [`TopologyConfig::validate`]).
pub fn sample_lognormal<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    let normal = Normal::new(mu, sigma).expect("sigma must be positive and finite");
    normal.sample(rng).exp()
}

/// Number of core uplinks for one core edge router: the log-normal draw
/// rounded half-up and clamped to `[1, num_core]`.
fn core_uplink_count<R: Rng + ?Sized>(config: &TopologyConfig, rng: &mut R) -> usize {
    let x = sample_lognormal(config.lognormal_mu, config.lognormal_sigma, rng);
    let rounded = (x + 0.5).floor();
    rounded.clamp(1.0, config.num_core as f64) as usize
}

/// Generates a connected campus topology.
///
/// Deterministic in `config.seed`. Attempt `i` draws from the ChaCha stream
/// `i` of that seed; disconnected draws are discarded until one connects or
/// [`MAX_GENERATION_ATTEMPTS`] is reached.
pub fn generate_topology(config: &TopologyConfig) -> Result<Topology, TopologyError> {
    config.validate()?;
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(attempt);
        let topology = generate_once(config, &mut rng)?;
        if topology.is_connected() {
            return Ok(topology);
        }
    }
    Err(TopologyError::RetryCapExceeded { attempts: MAX_GENERATION_ATTEMPTS })
}

fn generate_once(config: &TopologyConfig, rng: &mut ChaCha8Rng) -> Result<Topology, TopologyError> {
    let core = 0..config.num_core;
    let core_edge = core.end..core.end + config.num_core_edge;
    let secondary = core_edge.end..core_edge.end + config.num_secondary_edge;
    let access = secondary.end..secondary.end + config.num_user_access;
    let devices = access.end..access.end + config.num_user_device;

    let mut roles = Vec::with_capacity(config.node_count());
    for (range, role) in [
        (&core, NodeRole::Core),
        (&core_edge, NodeRole::CoreEdge),
        (&secondary, NodeRole::SecondaryEdge),
        (&access, NodeRole::UserAccess),
        (&devices, NodeRole::UserDevice),
    ] {
        roles.extend(range.clone().map(|_| role));
    }

    let mut links = Vec::new();
    for a in core.clone() {
        for b in a + 1..core.end {
            if rng.random_bool(config.core_link_prob) {
                links.push((a, b, CORE_LINK_BANDWIDTH));
            }
        }
    }
    for a in secondary.clone() {
        for b in a + 1..secondary.end {
            if rng.random_bool(config.edge_link_prob) {
                links.push((a, b, EDGE_LINK_BANDWIDTH));
            }
        }
    }
    for ce in core_edge.clone() {
        let count = core_uplink_count(config, rng);
        let mut picks = index::sample(rng, config.num_core as usize, count).into_vec();
        picks.sort_unstable();
        links.extend(picks.into_iter().map(|c| (ce, core.start + c as u32, CORE_LINK_BANDWIDTH)));
    }
    for se in secondary.clone() {
        let ce = rng.random_range(core_edge.clone());
        links.push((se, ce, EDGE_LINK_BANDWIDTH));
    }
    for ua in access.clone() {
        let se = rng.random_range(secondary.clone());
        links.push((ua, se, EDGE_LINK_BANDWIDTH));
    }
    for dev in devices.clone() {
        let ua = rng.random_range(access.clone());
        links.push((dev, ua, EDGE_LINK_BANDWIDTH));
    }
    Topology::new(roles, &links, config.seed)
}

/// Hop counts from `source` to every node; `None` for unreachable nodes.
pub fn bfs_hops(topology: &Topology, source: NodeId) -> Vec<Option<u32>> {
    let mut hops = vec![None; topology.node_count()];
    let mut queue = VecDeque::new();
    hops[source.index()] = Some(0);
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = hops[u.index()].unwrap() + 1;
        for &(_, v) in topology.neighbors(u) {
            if hops[v.index()].is_none() {
                hops[v.index()] = Some(next);
                queue.push_back(v);
            }
        }
    }
    hops
}

/// Dense, symmetric all-pairs hop-count matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    hops: Vec<u32>,
}

impl DistanceMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: NodeId, b: NodeId) -> u32 {
        self.hops[a.index() * self.n + b.index()]
    }

    pub fn row(&self, a: NodeId) -> &[u32] {
        let start = a.index() * self.n;
        &self.hops[start..start + self.n]
    }
}

const UNREACHABLE: u32 = u32::MAX / 2;

/// All-pairs hop counts by Floyd-Warshall, `O(m^3)`.
///
/// Fails if any pair is unreachable.
pub fn all_pairs_hops(topology: &Topology) -> Result<DistanceMatrix, TopologyError> {
    let n = topology.node_count();
    let mut hops = vec![UNREACHABLE; n * n];
    for i in 0..n {
        hops[i * n + i] = 0;
    }
    for link in topology.links() {
        let (a, b) = (link.src.index(), link.dst.index());
        hops[a * n + b] = 1;
        hops[b * n + a] = 1;
    }
    let mut row_k = vec![0u32; n];
    for k in 0..n {
        row_k.copy_from_slice(&hops[k * n..(k + 1) * n]);
        for i in 0..n {
            let ik = hops[i * n + k];
            if ik >= UNREACHABLE {
                continue;
            }
            let row_i = &mut hops[i * n..(i + 1) * n];
            for (cell, &kj) in row_i.iter_mut().zip(&row_k) {
                let via = ik + kj;
                if via < *cell {
                    *cell = via;
                }
            }
        }
    }
    if let Some(pos) = hops.iter().position(|&h| h >= UNREACHABLE) {
        return Err(TopologyError::Disconnected((pos % n) as u32, (pos / n) as u32));
    }
    Ok(DistanceMatrix { n, hops })
}
