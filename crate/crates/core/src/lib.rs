//! Stateless campus multicast with recursive bit string (RBS) headers.
//!
//! The pipeline: [`topology`] generates a five-tier campus network and its
//! hop distances, [`tree`] builds the source-rooted shortest-path tree to a
//! member set, [`partition`] splits members into virtual domains whose RBS
//! headers fit a bit budget, and [`rbs`] encodes each domain and simulates
//! forwarding. [`keyexchange`] distributes a group key; [`savi`] filters
//! multicast senders; [`harness`] runs the comparison sweeps.
//!
//! ```
//! use std::collections::BTreeSet;
//! use rbs_mcast::partition::{dynamic_partition, PartitionConfig};
//! use rbs_mcast::rbs::RbsCodec;
//! use rbs_mcast::topology::{all_pairs_hops, generate_topology, NodeId, NodeRole, TopologyConfig};
//! use rbs_mcast::tree::build_multicast_tree;
//!
//! let topo = generate_topology(&TopologyConfig::with_counts(6, 8, 3, 9, 40).seed(7)).unwrap();
//! let hops = all_pairs_hops(&topo).unwrap();
//! let devices: Vec<NodeId> = topo.nodes_with_role(NodeRole::UserDevice).collect();
//! let members: BTreeSet<NodeId> = devices[1..20].iter().copied().collect();
//! let tree = build_multicast_tree(&topo, &hops, devices[0], &members).unwrap();
//! let codec = RbsCodec::new(&topo);
//! let result = dynamic_partition(&topo, &tree, &hops, &codec, &PartitionConfig::new(256)).unwrap();
//! result.verify_forwarding(&topo, &codec).unwrap();
//! assert!(result.domains.iter().all(|d| d.encoded_length <= 256));
//! ```

pub mod harness;
pub mod keyexchange;
pub mod partition;
pub mod rbs;
pub mod savi;
pub mod topology;
pub mod tree;

// The guide's snippets and the README example run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/topology.md")]
    mod topology {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/rbs.md")]
    mod rbs {}
    #[doc = include_str!("../../../book/src/partitioning.md")]
    mod partitioning {}
    #[doc = include_str!("../../../book/src/keyexchange.md")]
    mod keyexchange {}
    #[doc = include_str!("../../../book/src/savi.md")]
    mod savi {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
