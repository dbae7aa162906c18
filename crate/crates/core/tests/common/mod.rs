#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbs_mcast::harness::{pick_source, select_members};
use rbs_mcast::partition::RegionKey;
use rbs_mcast::topology::{all_pairs_hops, generate_topology, DistanceMatrix, NodeId, NodeRole, Topology, TopologyConfig};
use rbs_mcast::tree::{build_multicast_tree, MulticastTree};

pub struct Instance {
    pub topo: Topology,
    pub hops: DistanceMatrix,
    pub tree: MulticastTree,
}

/// A small random campus configuration drawn from `seed`.
pub fn small_config(seed: u64) -> TopologyConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    TopologyConfig::with_counts(
        rng.random_range(3..=12),
        rng.random_range(4..=20),
        rng.random_range(1..=6),
        rng.random_range(2..=20),
        rng.random_range(8..=80),
    )
    .seed(seed)
}

/// Random topology, 1..=max_members members and a source outside them.
pub fn instance(seed: u64, max_members: usize) -> Instance {
    let topo = generate_topology(&small_config(seed)).unwrap();
    let hops = all_pairs_hops(&topo).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let devices = topo.nodes_with_role(NodeRole::UserDevice).count();
    let count = rng.random_range(1..=max_members.min(devices - 1));
    let density = rng.random_range(1..=10) as f64 / 10.0;
    let members = select_members(&topo, count, density, RegionKey::SecondaryEdge, &mut rng).unwrap();
    let source = pick_source(&topo, &members, &mut rng).unwrap();
    let tree = build_multicast_tree(&topo, &hops, source, &members).unwrap();
    Instance { topo, hops, tree }
}

pub fn ids(set: &BTreeSet<NodeId>) -> Vec<u32> {
    set.iter().map(|n| n.0).collect()
}
