//! Multicast distribution trees and per-domain subtrees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::topology::{DistanceMatrix, LinkId, NodeId, NodeRole, Topology};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("member set is empty")]
    NoMembers,
    #[error("node {0} is not in the topology")]
    UnknownNode(NodeId),
    #[error("member {0} is not a user device")]
    NotADevice(NodeId),
    #[error("source {0} is also listed as a member")]
    SourceIsMember(NodeId),
    #[error("member {0} is unreachable from the source")]
    Unreachable(NodeId),
    #[error("distance matrix covers {matrix} nodes, topology has {topology}")]
    SizeMismatch { matrix: usize, topology: usize },
    #[error("node {0} is not a member of the tree")]
    NotAMember(NodeId),
}

/// Rooted shortest-path distribution tree `TP = {TV, TE}` from one source to
/// its member leaves (`edgeTV`).
///
/// Storage is dense over the topology's node ids so the partitioner's inner
/// loops can walk parents without hashing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastTree {
    root: NodeId,
    parent: Vec<Option<(NodeId, LinkId)>>,
    children: Vec<Vec<(LinkId, NodeId)>>,
    depth: Vec<u32>,
    in_tree: Vec<bool>,
    members: BTreeSet<NodeId>,
}

/// Builds the hop-count shortest-path tree from `source` to `members`.
///
/// Every node's parent is its smallest-id neighbor one hop closer to the
/// source, so the result is a pure function of its inputs. Branches that
/// lead to no member are never added.
pub fn build_multicast_tree(
    topology: &Topology,
    distances: &DistanceMatrix,
    source: NodeId,
    members: &BTreeSet<NodeId>,
) -> Result<MulticastTree, TreeError> {
    let n = topology.node_count();
    if distances.size() != n {
        return Err(TreeError::SizeMismatch { matrix: distances.size(), topology: n });
    }
    if source.index() >= n {
        return Err(TreeError::UnknownNode(source));
    }
    if members.is_empty() {
        return Err(TreeError::NoMembers);
    }
    for &m in members {
        if m.index() >= n {
            return Err(TreeError::UnknownNode(m));
        }
        if topology.role(m) != NodeRole::UserDevice {
            return Err(TreeError::NotADevice(m));
        }
        if m == source {
            return Err(TreeError::SourceIsMember(m));
        }
    }

    let from_source = distances.row(source);
    let mut tree = MulticastTree {
        root: source,
        parent: vec![None; n],
        children: vec![Vec::new(); n],
        depth: vec![0; n],
        in_tree: vec![false; n],
        members: members.clone(),
    };
    tree.in_tree[source.index()] = true;

    for &member in members {
        let mut v = member;
        while !tree.in_tree[v.index()] {
            let want = from_source[v.index()]
                .checked_sub(1)
                .ok_or(TreeError::Unreachable(member))?;
            let (link, up) = topology
                .neighbors(v)
                .iter()
                .filter(|&&(_, u)| from_source[u.index()] == want)
                .min_by_key(|&&(_, u)| u)
                .copied()
                .ok_or(TreeError::Unreachable(member))?;
            tree.in_tree[v.index()] = true;
            tree.parent[v.index()] = Some((up, link));
            tree.depth[v.index()] = from_source[v.index()];
            tree.children[up.index()].push((link, v));
            v = up;
        }
    }
    for kids in &mut tree.children {
        kids.sort_unstable();
    }
    Ok(tree)
}

impl MulticastTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// The member leaves, `edgeTV`.
    pub fn members(&self) -> &BTreeSet<NodeId> {
        &self.members
    }

    pub fn is_member(&self, node: NodeId) -> bool {
        self.members.contains(&node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.in_tree.get(node.index()).copied().unwrap_or(false)
    }

    /// Tree nodes `TV` in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.in_tree
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(i, _)| NodeId(i as u32))
    }

    /// Tree links `TE` in ascending id order.
    pub fn links(&self) -> BTreeSet<LinkId> {
        self.parent.iter().flatten().map(|&(_, l)| l).collect()
    }

    pub fn node_count(&self) -> usize {
        self.in_tree.iter().filter(|&&t| t).count()
    }

    pub fn parent(&self, node: NodeId) -> Option<(NodeId, LinkId)> {
        self.parent[node.index()]
    }

    /// Children of `node` as `(link, child)` in ascending link order.
    pub fn children(&self, node: NodeId) -> &[(LinkId, NodeId)] {
        &self.children[node.index()]
    }

    pub fn depth(&self, node: NodeId) -> u32 {
        self.depth[node.index()]
    }

    /// Nodes from `node` up to and including the root.
    pub fn path_to_root(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(Some(node), move |&v| self.parent(v).map(|(p, _)| p))
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        let (mut a, mut b) = (a, b);
        while self.depth(a) > self.depth(b) {
            a = self.parent(a).expect("non-root has a parent").0;
        }
        while self.depth(b) > self.depth(a) {
            b = self.parent(b).expect("non-root has a parent").0;
        }
        while a != b {
            a = self.parent(a).expect("non-root has a parent").0;
            b = self.parent(b).expect("non-root has a parent").0;
        }
        a
    }

    /// Debug export, one `parent child linkId` line per tree link, sorted by
    /// child id.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (child, entry) in self.parent.iter().enumerate() {
            if let Some((parent, link)) = entry {
                writeln!(out, "{parent} {child} {link}").unwrap();
            }
        }
        out
    }
}

/// The restriction of a [`MulticastTree`] to a subset of its members,
/// rooted at their lowest common ancestor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainSubtree {
    root: NodeId,
    members: BTreeSet<NodeId>,
    nodes: BTreeSet<NodeId>,
    links: BTreeSet<LinkId>,
    children: BTreeMap<NodeId, Vec<(LinkId, NodeId)>>,
}

/// Extracts the union of tree paths from the LCA of `subset` down to each
/// member of `subset`.
pub fn extract_subtree(
    tree: &MulticastTree,
    subset: &BTreeSet<NodeId>,
) -> Result<DomainSubtree, TreeError> {
    let mut iter = subset.iter();
    let first = *iter.next().ok_or(TreeError::NoMembers)?;
    if let Some(&bad) = subset.iter().find(|m| !tree.is_member(**m)) {
        return Err(TreeError::NotAMember(bad));
    }
    let root = iter.fold(first, |acc, &m| tree.lca(acc, m));

    let mut nodes = BTreeSet::new();
    let mut links = BTreeSet::new();
    let mut children: BTreeMap<NodeId, Vec<(LinkId, NodeId)>> = BTreeMap::new();
    nodes.insert(root);
    for &member in subset {
        let mut v = member;
        while v != root && nodes.insert(v) {
            let (p, link) = tree.parent(v).expect("member lies below the LCA");
            links.insert(link);
            children.entry(p).or_default().push((link, v));
            v = p;
        }
    }
    for kids in children.values_mut() {
        kids.sort_unstable();
    }
    Ok(DomainSubtree { root, members: subset.clone(), nodes, links, children })
}

impl DomainSubtree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn members(&self) -> &BTreeSet<NodeId> {
        &self.members
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn links(&self) -> &BTreeSet<LinkId> {
        &self.links
    }

    /// Nodes with at least one child, in ascending id order.
    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.children.keys().copied()
    }

    /// Children of `node` within the subtree, ascending by link id.
    pub fn children(&self, node: NodeId) -> &[(LinkId, NodeId)] {
        self.children.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_internal(&self, node: NodeId) -> bool {
        self.children.contains_key(&node)
    }

    /// Nodes without children. For a well-formed domain these are exactly
    /// the members.
    pub fn leaves(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().copied().filter(|n| !self.is_internal(*n)).collect()
    }
}
