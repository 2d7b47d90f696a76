//! Balanced tree overlays, holon decomposition and failure partitioning.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::{AgentId, Position};

/// A rooted tree of agent positions.
///
/// Positions are numbered breadth-first, so the root is position 0 and every
/// parent precedes its children. Levels count upwards: leaves at the deepest
/// depth sit at level 0 and the root sits at level `height`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    children_per_node: usize,
    parent: Vec<Option<Position>>,
    children: Vec<Vec<Position>>,
    depth: Vec<usize>,
    height: usize,
    placement: Vec<AgentId>,
    origin: Vec<Position>,
}

impl TreeTopology {
    /// Builds a tree from a parent array in which every parent precedes its
    /// children and position 0 is the only root.
    fn from_parents(
        children_per_node: usize,
        parent: Vec<Option<Position>>,
        placement: Vec<AgentId>,
        origin: Vec<Position>,
    ) -> Self {
        let n = parent.len();
        let mut children = vec![Vec::new(); n];
        let mut depth = vec![0usize; n];
        for p in 1..n {
            let up = parent[p].expect("non-root position without parent");
            children[up].push(p);
            depth[p] = depth[up] + 1;
        }
        let height = depth.iter().copied().max().unwrap_or(0);
        Self {
            children_per_node,
            parent,
            children,
            depth,
            height,
            placement,
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> Position {
        0
    }

    pub fn children_per_node(&self) -> usize {
        self.children_per_node
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn parent(&self, p: Position) -> Option<Position> {
        self.parent[p]
    }

    pub fn children(&self, p: Position) -> &[Position] {
        &self.children[p]
    }

    pub fn depth(&self, p: Position) -> usize {
        self.depth[p]
    }

    pub fn level(&self, p: Position) -> usize {
        self.height - self.depth[p]
    }

    pub fn edge_count(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn agent_at(&self, p: Position) -> AgentId {
        self.placement[p]
    }

    /// Agent ids in position order.
    pub fn agents(&self) -> &[AgentId] {
        &self.placement
    }

    pub fn position_of(&self, agent: AgentId) -> Option<Position> {
        self.placement.iter().position(|&a| a == agent)
    }

    /// Position this node had in the tree it was derived from. Identity for
    /// trees produced by [`build_tree`](Self::build_tree).
    pub fn origin(&self, p: Position) -> Position {
        self.origin[p]
    }

    /// The complete subtree under `root`, inclusive, in breadth-first order.
    pub fn subtree(&self, root: Position) -> Vec<Position> {
        let mut out = vec![root];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.children[out[i]]);
            i += 1;
        }
        out
    }

    /// Whether every internal node has exactly `c` children and all leaves
    /// share one depth.
    pub fn is_perfect(&self) -> bool {
        (0..self.len()).all(|p| {
            let k = self.children[p].len();
            if k == 0 {
                self.depth[p] == self.height
            } else {
                k == self.children_per_node
            }
        })
    }

    /// Builds a balanced tree with `num_agents` positions filled level by
    /// level, left to right, and places agents by a seeded Fisher–Yates
    /// shuffle of the agent ids.
    pub fn build_tree(
        num_agents: usize,
        children_per_node: usize,
        seed: u64,
    ) -> Result<Self, Error> {
        if num_agents == 0 {
            return Err(Error::NoAgents);
        }
        if children_per_node < 2 {
            return Err(Error::InvalidFanout(children_per_node));
        }
        let parent = (0..num_agents)
            .map(|p| {
                if p == 0 {
                    None
                } else {
                    Some((p - 1) / children_per_node)
                }
            })
            .collect();
        let mut placement: Vec<AgentId> = (0..num_agents).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        placement.shuffle(&mut rng);
        let origin = (0..num_agents).collect();
        Ok(Self::from_parents(
            children_per_node,
            parent,
            placement,
            origin,
        ))
    }

    /// Builds a tree with the identity placement (agent `i` at position `i`).
    pub fn build_tree_unshuffled(
        num_agents: usize,
        children_per_node: usize,
    ) -> Result<Self, Error> {
        let mut tree = Self::build_tree(num_agents, children_per_node, 0)?;
        tree.placement = (0..num_agents).collect();
        Ok(tree)
    }

    /// Re-roots the subtree under `root` as a standalone tree.
    pub fn extract_subtree(&self, root: Position) -> TreeTopology {
        self.extract(root, |_| true)
    }

    fn extract(
        &self,
        root: Position,
        mut keep_child: impl FnMut(Position) -> bool,
    ) -> TreeTopology {
        let mut order = vec![root];
        let mut parent = vec![None];
        let mut queue = VecDeque::from([(root, 0usize)]);
        while let Some((p, local)) = queue.pop_front() {
            for &ch in &self.children[p] {
                if keep_child(ch) {
                    let idx = order.len();
                    order.push(ch);
                    parent.push(Some(local));
                    queue.push_back((ch, idx));
                }
            }
        }
        let placement = order.iter().map(|&p| self.placement[p]).collect();
        let origin = order.iter().map(|&p| self.origin[p]).collect();
        TreeTopology::from_parents(self.children_per_node, parent, placement, origin)
    }
}

/// Whether holarchic learning spans the whole tree or one branch under the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Partial,
}

/// A complete subtree that learns as a self-contained unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Holon {
    pub root: Position,
    /// Subtree of `root`, inclusive, breadth-first.
    pub members: Vec<Position>,
    pub stage: usize,
}

impl Holon {
    fn new(t: &TreeTopology, root: Position, stage: usize) -> Self {
        Self {
            root,
            members: t.subtree(root),
            stage,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Messages of one learning iteration: one per edge in each direction.
    pub fn messages_per_iteration(&self) -> u64 {
        2 * (self.members.len() as u64 - 1)
    }
}

/// Stages of nested holons, processed in order; holons within a stage are
/// pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HolonStagePlan {
    pub stages: Vec<Vec<Holon>>,
}

impl HolonStagePlan {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Splits a tree into holarchic stages.
///
/// Stage `j` holds one holon per internal node at level `j + 1`. With
/// [`Scale::Full`] the stages cover the whole tree and the last one is the
/// whole tree. With [`Scale::Partial`] the stages cover the subtree under the
/// root's `branch`-th child and a final whole-tree stage is appended.
pub fn decompose_holarchy(
    t: &TreeTopology,
    scale: Scale,
    branch: Option<usize>,
) -> Result<HolonStagePlan, Error> {
    let mut stages: Vec<Vec<Holon>> = Vec::new();
    let (region, top_level) = match scale {
        Scale::Full => (t.subtree(t.root()), t.height()),
        Scale::Partial => {
            let branch = branch.ok_or(Error::Config("partial scale requires a branch index"))?;
            let degree = t.children(t.root()).len();
            let child = *t
                .children(t.root())
                .get(branch)
                .ok_or(Error::BranchOutOfRange { branch, degree })?;
            (t.subtree(child), t.level(child))
        }
    };
    for j in 0..top_level {
        let holons: Vec<Holon> = region
            .iter()
            .copied()
            .filter(|&p| t.level(p) == j + 1 && !t.children(p).is_empty())
            .map(|p| Holon::new(t, p, j))
            .collect();
        if !holons.is_empty() {
            stages.push(holons);
        }
    }
    let covers_whole_tree = stages
        .last()
        .is_some_and(|s| s.len() == 1 && s[0].root == t.root());
    if !covers_whole_tree {
        let stage = stages.len();
        stages.push(vec![Holon::new(t, t.root(), stage)]);
    }
    Ok(HolonStagePlan { stages })
}

/// Crashed nodes and cut links. A link is named by its child endpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FailureSet {
    pub nodes: BTreeSet<Position>,
    pub links: BTreeSet<Position>,
}

impl FailureSet {
    pub fn nodes(nodes: impl IntoIterator<Item = Position>) -> Self {
        Self {
            nodes: nodes.into_iter().collect(),
            links: BTreeSet::new(),
        }
    }

    pub fn links(links: impl IntoIterator<Item = Position>) -> Self {
        Self {
            nodes: BTreeSet::new(),
            links: links.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.links.is_empty()
    }
}

/// Removes failed nodes and links and returns the surviving connected
/// components, each rooted at its highest surviving node and ordered by the
/// original position of that root.
pub fn partition_on_failure(
    t: &TreeTopology,
    failed: &FailureSet,
) -> Result<Vec<TreeTopology>, Error> {
    if let Some(&p) = failed
        .nodes
        .iter()
        .chain(&failed.links)
        .find(|&&p| p >= t.len())
    {
        return Err(Error::UnknownPosition(p));
    }
    let alive = |p: Position| !failed.nodes.contains(&p);
    let components = (0..t.len())
        .filter(|&p| alive(p))
        .filter(|&p| match t.parent(p) {
            None => true,
            Some(up) => !alive(up) || failed.links.contains(&p),
        })
        .map(|root| t.extract(root, |ch| alive(ch) && !failed.links.contains(&ch)))
        .collect();
    Ok(components)
}
