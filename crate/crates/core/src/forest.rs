//! Arena-backed search trees rooted at seed solutions.

use std::collections::BTreeMap;

use crate::types::{CandidateSolution, Direction, DirectionId, DirectionStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct SearchNode {
    pub solution: CandidateSolution,
    pub directions: Vec<Direction>,
    pub children: BTreeMap<DirectionId, NodeId>,
    pub parent: Option<NodeId>,
}

impl SearchNode {
    pub fn new(solution: CandidateSolution, parent: Option<NodeId>) -> Self {
        Self {
            solution,
            directions: Vec::new(),
            children: BTreeMap::new(),
            parent,
        }
    }

    /// A node is a leaf iff at least one of its directions has no child.
    /// Unscattered nodes (no directions) are therefore not leaves.
    pub fn is_leaf(&self) -> bool {
        self.directions.iter().any(|d| !self.children.contains_key(&d.id))
    }

    pub fn direction(&self, id: DirectionId) -> Option<&Direction> {
        self.directions.iter().find(|d| d.id == id)
    }

    pub fn direction_mut(&mut self, id: DirectionId) -> Option<&mut Direction> {
        self.directions.iter_mut().find(|d| d.id == id)
    }

    pub fn visit_total(&self) -> u64 {
        self.directions.iter().map(|d| u64::from(d.stats.visits)).sum()
    }
}

/// A set of seed-rooted trees sharing one node arena.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Forest {
    nodes: Vec<SearchNode>,
    roots: Vec<NodeId>,
    seed_stats: Vec<DirectionStats>,
}

impl Forest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_root(&mut self, solution: CandidateSolution) -> NodeId {
        let id = self.push(SearchNode::new(solution, None));
        self.roots.push(id);
        self.seed_stats.push(DirectionStats::default());
        id
    }

    pub(crate) fn push(&mut self, node: SearchNode) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SearchNode {
        &mut self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&SearchNode> {
        self.nodes.get(id.0)
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn seed_stats(&self) -> &[DirectionStats] {
        &self.seed_stats
    }

    pub(crate) fn seed_stats_mut(&mut self) -> &mut [DirectionStats] {
        &mut self.seed_stats
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &SearchNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    /// Index into `roots()` of the tree containing `id`.
    pub fn root_index_of(&self, mut id: NodeId) -> Option<usize> {
        while let Some(p) = self.get(id)?.parent {
            id = p;
        }
        self.roots.iter().position(|r| *r == id)
    }

    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.node(id).parent {
            id = p;
            d += 1;
        }
        d
    }

    /// Replaces the directions of an unscattered node; stats start at zero.
    pub fn set_directions(&mut self, id: NodeId, directions: Vec<Direction>) {
        self.node_mut(id).directions = directions;
    }
}

/// The root-to-leaf walk taken by one simulation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(NodeId, DirectionId)>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }
}
