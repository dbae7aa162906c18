//! Virtual domain partitioning.
//!
//! A partition splits the member leaves of a [`MulticastTree`] into domains,
//! each served by one packet whose RBS encoding must fit in
//! `max_rbs_length` bits. Fewer domains means fewer packet copies leaving
//! the source. Three partitioners live here:
//!
//! * [`dynamic_partition`]: grows a candidate domain around every unassigned
//!   member by adding its nearest unassigned neighbors while the encoding
//!   still fits, commits the largest candidate and repeats on the remainder.
//! * [`fixed_partition`]: one domain per access region, split in member id
//!   order when a region does not fit.
//! * [`brute_force_partition`]: exact minimum over all set partitions, for
//!   small member counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::rbs::{delivered_set, RbsCodec, RbsError};
use crate::topology::{DistanceMatrix, LinkId, NodeId, NodeRole, Topology};
use crate::tree::{extract_subtree, DomainSubtree, MulticastTree, TreeError};

/// Member cap for [`brute_force_partition`].
pub const BRUTE_FORCE_MAX_MEMBERS: usize = 12;

/// The usual packet budgets for an RBS extension header, in bits.
pub const STANDARD_BUDGETS: [u64; 3] = [256, 512, 1024];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Rbs(#[from] RbsError),
    #[error("member {0} has no access region")]
    NoRegion(NodeId),
    #[error("{count} members exceed the exhaustive search cap of {cap}")]
    TooManyMembers { count: usize, cap: usize },
    #[error("domain rooted at {root} needs {bits} bits, budget is {budget}")]
    BoundExceeded { root: NodeId, bits: u64, budget: u64 },
    #[error("domain rooted at {root} delivered {delivered:?}, expected {expected:?}")]
    DeliveryMismatch { root: NodeId, delivered: Vec<NodeId>, expected: Vec<NodeId> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionConfig {
    pub max_rbs_length: u64,
}

impl PartitionConfig {
    pub fn new(max_rbs_length: u64) -> Self {
        Self { max_rbs_length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Dynamic,
    Fixed,
    BruteForce,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dynamic => "dynamic",
            Algorithm::Fixed => "fixed",
            Algorithm::BruteForce => "brute-force",
        }
    }
}

/// What "designated area" the fixed baseline groups members by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegionKey {
    /// The secondary edge router above the member's access router.
    #[default]
    SecondaryEdge,
    /// The core edge router that secondary edge router uplinks to.
    CoreEdge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualDomain {
    pub subtree: DomainSubtree,
    /// Encoded length in bits, `RL_i`.
    pub encoded_length: u64,
}

impl VirtualDomain {
    pub fn members(&self) -> &BTreeSet<NodeId> {
        self.subtree.members()
    }

    pub fn root(&self) -> NodeId {
        self.subtree.root()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionResult {
    pub algorithm: Algorithm,
    pub domains: Vec<VirtualDomain>,
    pub total_encoded_bits: u64,
    pub flow_entries: usize,
}

impl PartitionResult {
    fn new(
        algorithm: Algorithm,
        tree: &MulticastTree,
        topology: &Topology,
        codec: &RbsCodec,
        config: &PartitionConfig,
        groups: Vec<BTreeSet<NodeId>>,
    ) -> Result<Self, PartitionError> {
        let mut domains = Vec::with_capacity(groups.len());
        for group in groups {
            let subtree = extract_subtree(tree, &group)?;
            let encoded_length = codec.encoded_length(&subtree)?;
            if encoded_length > config.max_rbs_length {
                return Err(PartitionError::BoundExceeded {
                    root: subtree.root(),
                    bits: encoded_length,
                    budget: config.max_rbs_length,
                });
            }
            domains.push(VirtualDomain { subtree, encoded_length });
        }
        let total_encoded_bits = domains.iter().map(|d| d.encoded_length).sum();
        let roots: Vec<_> = domains.iter().map(VirtualDomain::root).collect();
        let flow_entries = flow_entries(&roots, tree, topology);
        Ok(Self { algorithm, domains, total_encoded_bits, flow_entries })
    }

    /// Domain count `j`, the number of packet copies the source emits.
    pub fn j(&self) -> usize {
        self.domains.len()
    }

    /// Encodes every domain, replays it through the forwarding simulator and
    /// checks each domain reaches exactly its own members, once each.
    pub fn verify_forwarding(&self, topology: &Topology, codec: &RbsCodec) -> Result<(), PartitionError> {
        for domain in &self.domains {
            let encoding = codec.encode(&domain.subtree)?;
            let deliveries = codec.simulate_forwarding(topology, domain.root(), &encoding)?;
            if delivered_set(&deliveries).as_ref() != Some(domain.members()) {
                return Err(PartitionError::DeliveryMismatch {
                    root: domain.root(),
                    delivered: deliveries,
                    expected: domain.members().iter().copied().collect(),
                });
            }
        }
        Ok(())
    }

    /// Mean fill of the budget across domains, `sum(RL_i) / (j * budget)`.
    pub fn utilization(&self, budget: u64) -> f64 {
        if self.domains.is_empty() || budget == 0 {
            return 0.0;
        }
        self.total_encoded_bits as f64 / (self.j() as f64 * budget as f64)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Wire<'a> {
            algorithm: &'a str,
            j: usize,
            total_encoded_bits: u64,
            flow_entries: usize,
            domains: Vec<WireDomain>,
        }
        #[derive(Serialize)]
        struct WireDomain {
            root: u32,
            members: Vec<u32>,
            bits: u64,
        }
        let wire = Wire {
            algorithm: self.algorithm.as_str(),
            j: self.j(),
            total_encoded_bits: self.total_encoded_bits,
            flow_entries: self.flow_entries,
            domains: self
                .domains
                .iter()
                .map(|d| WireDomain {
                    root: d.root().0,
                    members: d.members().iter().map(|m| m.0).collect(),
                    bits: d.encoded_length,
                })
                .collect(),
        };
        serde_json::to_string(&wire).expect("partition serializes")
    }
}

/// Sentinel block cost for nodes whose port count overflows the header.
/// Any domain that includes one gets a length at or above this value.
const OVERFLOW_COST: u64 = 1 << 48;

/// Per-node block costs over one tree, with root-path prefix sums so the
/// length of any member subset can be maintained incrementally.
///
/// For a member set `S` with lowest common ancestor `l`, the encoded length
/// is the summed cost of the union of root paths of `S`, minus the cost of
/// the path strictly above `l`. Members are leaves and cost nothing.
#[derive(Debug)]
pub struct DomainCosts<'a> {
    tree: &'a MulticastTree,
    cost: Vec<u64>,
    prefix: Vec<u64>,
}

impl<'a> DomainCosts<'a> {
    pub fn new(tree: &'a MulticastTree, codec: &RbsCodec) -> Self {
        let n = tree_capacity(tree);
        let mut cost = vec![0; n];
        let mut prefix = vec![0; n];
        let mut order: Vec<NodeId> = tree.nodes().collect();
        order.sort_by_key(|&v| tree.depth(v));
        for v in order {
            let c = if tree.is_member(v) { 0 } else { codec.block_bits(v).unwrap_or(OVERFLOW_COST) };
            cost[v.index()] = c;
            let above = tree.parent(v).map_or(0, |(p, _)| prefix[p.index()]);
            prefix[v.index()] = above + c;
        }
        Self { tree, cost, prefix }
    }

    fn above(&self, lca: NodeId) -> u64 {
        self.tree.parent(lca).map_or(0, |(p, _)| self.prefix[p.index()])
    }

    pub fn grower(&self) -> DomainGrower<'_> {
        DomainGrower {
            costs: self,
            mark: vec![0; self.cost.len()],
            epoch: 0,
            union: 0,
            lca: self.tree.root(),
            members: Vec::new(),
        }
    }
}

fn tree_capacity(tree: &MulticastTree) -> usize {
    tree.nodes().last().map_or(0, |v| v.index() + 1)
}

/// Incrementally grown member set with its exact encoded length.
#[derive(Debug)]
pub struct DomainGrower<'a> {
    costs: &'a DomainCosts<'a>,
    mark: Vec<u32>,
    epoch: u32,
    union: u64,
    lca: NodeId,
    members: Vec<NodeId>,
}

/// Outcome of probing one more member; feed back into
/// [`DomainGrower::commit`].
#[derive(Debug, Clone, Copy)]
pub struct Probe {
    member: NodeId,
    union: u64,
    lca: NodeId,
    pub length: u64,
}

impl DomainGrower<'_> {
    /// Restarts from the singleton `{seed}`.
    pub fn reset(&mut self, seed: NodeId) {
        self.epoch += 1;
        self.members.clear();
        self.union = 0;
        for v in self.costs.tree.path_to_root(seed) {
            self.mark[v.index()] = self.epoch;
            self.union += self.costs.cost[v.index()];
        }
        self.lca = seed;
        self.members.push(seed);
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn length(&self) -> u64 {
        self.union - self.costs.above(self.lca)
    }

    pub fn probe(&self, member: NodeId) -> Probe {
        let tree = self.costs.tree;
        let added: u64 = tree
            .path_to_root(member)
            .take_while(|v| self.mark[v.index()] != self.epoch)
            .map(|v| self.costs.cost[v.index()])
            .sum();
        let lca = tree.lca(self.lca, member);
        let union = self.union + added;
        Probe { member, union, lca, length: union - self.costs.above(lca) }
    }

    pub fn commit(&mut self, probe: Probe) {
        for v in self.costs.tree.path_to_root(probe.member) {
            if self.mark[v.index()] == self.epoch {
                break;
            }
            self.mark[v.index()] = self.epoch;
        }
        self.union = probe.union;
        self.lca = probe.lca;
        self.members.push(probe.member);
    }
}

/// Re-derives a header overflow error for a member set whose incremental
/// length hit the overflow sentinel.
fn overflow_error(tree: &MulticastTree, codec: &RbsCodec, members: &[NodeId], extra: NodeId) -> PartitionError {
    let mut set: BTreeSet<NodeId> = members.iter().copied().collect();
    set.insert(extra);
    match extract_subtree(tree, &set).map(|s| codec.encoded_length(&s)) {
        Ok(Err(e)) => e.into(),
        Err(e) => e.into(),
        Ok(Ok(_)) => unreachable!("overflow sentinel without an overflowing node"),
    }
}

/// Dynamic virtual domain partitioning.
///
/// Each round, every unassigned member seeds a candidate that absorbs the
/// remaining members in order of hop distance from the seed (ties by node
/// id), stopping at the first member whose addition would push the encoding
/// past the budget. The candidate with the most members wins (ties go to the
/// smallest seed) and its members leave the pool.
pub fn dynamic_partition(
    topology: &Topology,
    tree: &MulticastTree,
    distances: &DistanceMatrix,
    codec: &RbsCodec,
    config: &PartitionConfig,
) -> Result<PartitionResult, PartitionError> {
    let members: Vec<NodeId> = tree.members().iter().copied().collect();
    let slot: HashMap<NodeId, usize> = members.iter().enumerate().map(|(i, &m)| (m, i)).collect();

    // Nearby members of each seed, nearest first.
    let nearby: Vec<Vec<usize>> = members
        .iter()
        .map(|&s| {
            let row = distances.row(s);
            let mut others: Vec<usize> = (0..members.len()).filter(|&i| members[i] != s).collect();
            others.sort_by_key(|&i| (row[members[i].index()], members[i]));
            others
        })
        .collect();

    let costs = DomainCosts::new(tree, codec);
    let mut grower = costs.grower();
    let mut assigned = vec![false; members.len()];
    let mut remaining = members.len();
    let mut groups = Vec::new();

    while remaining > 0 {
        let mut best: Option<Vec<NodeId>> = None;
        for (seed_slot, &seed) in members.iter().enumerate() {
            if assigned[seed_slot] {
                continue;
            }
            grower.reset(seed);
            for &next in &nearby[seed_slot] {
                if assigned[next] {
                    continue;
                }
                let probe = grower.probe(members[next]);
                if probe.length >= OVERFLOW_COST {
                    return Err(overflow_error(tree, codec, grower.members(), members[next]));
                }
                if probe.length > config.max_rbs_length {
                    break;
                }
                grower.commit(probe);
            }
            if best.as_ref().is_none_or(|b| grower.members().len() > b.len()) {
                best = Some(grower.members().to_vec());
                if grower.members().len() == remaining {
                    break;
                }
            }
        }
        let chosen = best.expect("at least one unassigned seed");
        for m in &chosen {
            assigned[slot[m]] = true;
        }
        remaining -= chosen.len();
        groups.push(chosen.into_iter().collect());
    }
    PartitionResult::new(Algorithm::Dynamic, tree, topology, codec, config, groups)
}

/// The fixed-domain region a member device belongs to.
pub fn region_of(topology: &Topology, member: NodeId, key: RegionKey) -> Option<NodeId> {
    let access = topology.neighbor_with_role(member, NodeRole::UserAccess)?;
    let secondary = topology.neighbor_with_role(access, NodeRole::SecondaryEdge)?;
    match key {
        RegionKey::SecondaryEdge => Some(secondary),
        RegionKey::CoreEdge => topology.neighbor_with_role(secondary, NodeRole::CoreEdge),
    }
}

/// Fixed-region baseline: members grouped by [`region_of`], each region one
/// domain unless it overflows the budget, in which case it is cut into
/// consecutive runs of ascending member id, each as long as fits.
pub fn fixed_partition(
    topology: &Topology,
    tree: &MulticastTree,
    codec: &RbsCodec,
    config: &PartitionConfig,
    key: RegionKey,
) -> Result<PartitionResult, PartitionError> {
    let mut regions: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &m in tree.members() {
        let region = region_of(topology, m, key).ok_or(PartitionError::NoRegion(m))?;
        regions.entry(region).or_default().push(m);
    }

    let costs = DomainCosts::new(tree, codec);
    let mut grower = costs.grower();
    let mut groups = Vec::new();
    for region_members in regions.values() {
        let (first, rest) = region_members.split_first().expect("regions are non-empty");
        grower.reset(*first);
        for &m in rest {
            let probe = grower.probe(m);
            if probe.length >= OVERFLOW_COST {
                return Err(overflow_error(tree, codec, grower.members(), m));
            }
            if probe.length <= config.max_rbs_length {
                grower.commit(probe);
            } else {
                groups.push(grower.members().iter().copied().collect());
                grower.reset(m);
            }
        }
        groups.push(grower.members().iter().copied().collect());
    }
    PartitionResult::new(Algorithm::Fixed, tree, topology, codec, config, groups)
}

/// Minimum-`j` partition by exhaustive search over set partitions.
///
/// Block feasibility is evaluated by extracting each candidate subtree and
/// measuring it with [`RbsCodec::encoded_length`], independently of the
/// incremental bookkeeping the heuristics use.
pub fn brute_force_partition(
    topology: &Topology,
    tree: &MulticastTree,
    codec: &RbsCodec,
    config: &PartitionConfig,
) -> Result<PartitionResult, PartitionError> {
    let members: Vec<NodeId> = tree.members().iter().copied().collect();
    let n = members.len();
    if n > BRUTE_FORCE_MAX_MEMBERS {
        return Err(PartitionError::TooManyMembers { count: n, cap: BRUTE_FORCE_MAX_MEMBERS });
    }
    let full = (1usize << n) - 1;
    let subset = |mask: usize| -> BTreeSet<NodeId> {
        (0..n).filter(|i| mask & (1 << i) != 0).map(|i| members[i]).collect()
    };

    let mut feasible = vec![false; full + 1];
    for (mask, ok) in feasible.iter_mut().enumerate().skip(1) {
        let sub = extract_subtree(tree, &subset(mask))?;
        *ok = codec.encoded_length(&sub)? <= config.max_rbs_length;
    }

    // best[mask]: fewest blocks covering mask; choice[mask]: the block that
    // holds mask's lowest member in one optimal cover.
    let mut best = vec![usize::MAX; full + 1];
    let mut choice = vec![0usize; full + 1];
    best[0] = 0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let block = sub | low;
            if feasible[block] && best[mask ^ block] != usize::MAX && best[mask ^ block] + 1 < best[mask] {
                best[mask] = best[mask ^ block] + 1;
                choice[mask] = block;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }

    let mut groups = Vec::new();
    let mut mask = full;
    while mask != 0 {
        groups.push(subset(choice[mask]));
        mask ^= choice[mask];
    }
    PartitionResult::new(Algorithm::BruteForce, tree, topology, codec, config, groups)
}

/// Routers on the inter-domain distribution layer: distinct non-device nodes
/// on the tree paths from the source to each domain root, plus the domain
/// roots themselves.
pub fn flow_entries(domain_roots: &[NodeId], tree: &MulticastTree, topology: &Topology) -> usize {
    let mut managed = BTreeSet::new();
    for &root in domain_roots {
        managed.insert(root);
        managed.extend(tree.path_to_root(root).filter(|&v| topology.role(v) != NodeRole::UserDevice));
    }
    managed.len()
}

/// Redundant link crossings: every domain's packet travels the tree path
/// from the source to its root and then its own subtree; each link crossed
/// by more than one packet contributes its extra crossings.
pub fn duplicate_link_traversals(result: &PartitionResult, tree: &MulticastTree) -> usize {
    let mut crossings: HashMap<LinkId, usize> = HashMap::new();
    for domain in &result.domains {
        let mut v = domain.root();
        while let Some((p, link)) = tree.parent(v) {
            *crossings.entry(link).or_default() += 1;
            v = p;
        }
        for &link in domain.subtree.links() {
            *crossings.entry(link).or_default() += 1;
        }
    }
    crossings.values().map(|&c| c - 1).sum()
}
