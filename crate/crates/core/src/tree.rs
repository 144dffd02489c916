//! Configurations, guards, and atomic step execution.
//!
//! A [`Configuration`] is a rooted tree plus one height variable per node.
//! Heights are arbitrary: the protocol must converge from any assignment.
//! Internally nodes are stored densely, indexed in ascending id order, so
//! that "smallest id wins" tie-breaks reduce to comparing indices.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, BadnessVector};
use crate::error::{Diagnostic, StepError};

/// Height variable value. Arithmetic is checked; overflow is a run error.
pub type Height = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Balance tolerance: children heights may differ by at most this much.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Alpha(i64);

impl Alpha {
    pub const ONE: Alpha = Alpha(1);

    pub fn new(value: i64) -> Result<Self, Diagnostic> {
        if value < 1 {
            return Err(Diagnostic::AlphaTooSmall(value));
        }
        Ok(Alpha(value))
    }

    pub fn get(self) -> i64 {
        self.0
    }
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::ONE
    }
}

impl TryFrom<i64> for Alpha {
    type Error = Diagnostic;
    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Alpha::new(value)
    }
}

impl From<Alpha> for i64 {
    fn from(a: Alpha) -> i64 {
        a.0
    }
}

/// The four nodes involved in one swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwapRoles {
    pub source: NodeId,
    /// Tallest child of the source.
    pub target: NodeId,
    /// Shortest child of the source; moves under the target.
    pub swap_out: NodeId,
    /// Tallest child of the target; moves under the source.
    pub swap_in: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionPlan {
    HeightUpdate { node: NodeId },
    Swap(SwapRoles),
}

impl ActionPlan {
    pub fn node(&self) -> NodeId {
        match self {
            ActionPlan::HeightUpdate { node } => *node,
            ActionPlan::Swap(roles) => roles.source,
        }
    }
}

/// Index-based plan used on the hot path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Plan {
    Update(usize),
    Swap {
        source: usize,
        target: usize,
        swap_out: usize,
        swap_in: usize,
    },
}

/// What happened in one execution step.
///
/// `activated` is partitioned into `height_updates` (non-bad nodes running a
/// height update), `bad_updates` (bad nodes running a height update) and
/// `swap_sources`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u64,
    pub activated: Vec<NodeId>,
    pub height_updates: Vec<NodeId>,
    pub bad_updates: Vec<NodeId>,
    pub swap_sources: Vec<NodeId>,
    pub swap_targets: Vec<NodeId>,
    pub swaps: Vec<SwapRoles>,
    pub bad_before: Vec<NodeId>,
    pub bad_after: Vec<NodeId>,
    pub badness_before: BadnessVector,
    pub badness_after: BadnessVector,
}

/// One node of the JSON snapshot format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub father: Option<NodeId>,
    pub height: Height,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Snapshot {
    root: NodeId,
    nodes: Vec<NodeSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("malformed configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Diagnostic),
}

/// Rooted tree with per-node height variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    root: usize,
    father: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    height: Vec<Height>,
}

impl Configuration {
    /// Builds and validates a configuration. Children lists follow the order
    /// in which nodes appear in `nodes`.
    pub fn from_nodes(
        root: NodeId,
        nodes: impl IntoIterator<Item = NodeSpec>,
    ) -> Result<Self, Diagnostic> {
        let cfg = Self::from_nodes_unchecked(root, nodes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the father/children maps without checking the tree shape.
    /// Only id-level problems (zero, duplicate, dangling references) are
    /// rejected, since the maps cannot be built without resolving ids.
    pub fn from_nodes_unchecked(
        root: NodeId,
        nodes: impl IntoIterator<Item = NodeSpec>,
    ) -> Result<Self, Diagnostic> {
        let nodes: Vec<NodeSpec> = nodes.into_iter().collect();
        if nodes.is_empty() {
            return Err(Diagnostic::Empty);
        }
        let mut ids: Vec<NodeId> = nodes.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids[0].0 == 0 {
            return Err(Diagnostic::ZeroId);
        }
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Diagnostic::DuplicateId(w[0]));
        }
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let root_idx = *index.get(&root).ok_or(Diagnostic::UnknownRoot(root))?;

        let n = ids.len();
        let mut father = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut height = vec![0; n];
        for spec in &nodes {
            let i = index[&spec.id];
            height[i] = spec.height;
            if let Some(f) = spec.father {
                let fi = *index.get(&f).ok_or(Diagnostic::UnknownFather {
                    node: spec.id,
                    father: f,
                })?;
                father[i] = Some(fi);
                children[fi].push(i);
            }
        }
        Ok(Configuration {
            ids,
            index,
            root: root_idx,
            father,
            children,
            height,
        })
    }

    /// Checks rooted-tree shape, map consistency and internal degree ≥ 2.
    pub fn validate(&self) -> Result<(), Diagnostic> {
        let n = self.ids.len();
        if n == 0 {
            return Err(Diagnostic::Empty);
        }
        if self.father[self.root].is_some() {
            return Err(Diagnostic::RootHasFather(self.ids[self.root]));
        }
        for u in 0..n {
            match self.father[u] {
                None if u != self.root => return Err(Diagnostic::MissingFather(self.ids[u])),
                Some(f) if !self.children[f].contains(&u) => {
                    return Err(Diagnostic::Inconsistent(self.ids[u]))
                }
                _ => {}
            }
            for &c in &self.children[u] {
                if self.father[c] != Some(u) {
                    return Err(Diagnostic::Inconsistent(self.ids[c]));
                }
            }
        }
        // Every node has exactly one father, so reachability from the root
        // rules out cycles.
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(u) = stack.pop() {
            for &c in &self.children[u] {
                if seen[c] {
                    return Err(Diagnostic::NotATree(self.ids[c]));
                }
                seen[c] = true;
                stack.push(c);
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Diagnostic::NotATree(self.ids[u]));
        }
        if let Some(u) = (0..n).find(|&u| self.children[u].len() == 1) {
            return Err(Diagnostic::DegreeOne(self.ids[u]));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let snap: Snapshot = serde_json::from_str(text)?;
        Ok(Self::from_nodes(snap.root, snap.nodes)?)
    }

    /// Serializes in breadth-first order so that reloading reproduces the
    /// children order.
    pub fn to_json(&self) -> String {
        let snap = Snapshot {
            root: self.ids[self.root],
            nodes: self.node_specs(),
        };
        serde_json::to_string_pretty(&snap).expect("snapshot serialization cannot fail")
    }

    pub fn node_specs(&self) -> Vec<NodeSpec> {
        let mut out = Vec::with_capacity(self.len());
        let mut queue = std::collections::VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            out.push(NodeSpec {
                id: self.ids[u],
                father: self.father[u].map(|f| self.ids[f]),
                height: self.height[u],
            });
            queue.extend(self.children[u].iter().copied());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.ids[self.root]
    }

    /// Node ids in ascending order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn height(&self, id: NodeId) -> Result<Height, StepError> {
        Ok(self.height[self.idx(id)?])
    }

    pub fn set_height(&mut self, id: NodeId, h: Height) -> Result<(), StepError> {
        let i = self.idx(id)?;
        self.height[i] = h;
        Ok(())
    }

    pub fn father(&self, id: NodeId) -> Result<Option<NodeId>, StepError> {
        Ok(self.father[self.idx(id)?].map(|f| self.ids[f]))
    }

    pub fn children(&self, id: NodeId) -> Result<Vec<NodeId>, StepError> {
        Ok(self.children[self.idx(id)?]
            .iter()
            .map(|&c| self.ids[c])
            .collect())
    }

    pub fn is_leaf(&self, id: NodeId) -> Result<bool, StepError> {
        Ok(self.children[self.idx(id)?].is_empty())
    }

    pub fn leaves(&self) -> BTreeSet<NodeId> {
        (0..self.len())
            .filter(|&u| self.children[u].is_empty())
            .map(|u| self.ids[u])
            .collect()
    }

    /// Child with the largest height variable, smallest id among ties;
    /// `None` for a leaf.
    pub fn max_child(&self, id: NodeId) -> Result<Option<NodeId>, StepError> {
        Ok(self.max_child_i(self.idx(id)?).map(|c| self.ids[c]))
    }

    /// Child with the smallest height variable, smallest id among ties;
    /// `None` for a leaf.
    pub fn min_child(&self, id: NodeId) -> Result<Option<NodeId>, StepError> {
        Ok(self.min_child_i(self.idx(id)?).map(|c| self.ids[c]))
    }

    /// `h = 1 + max child height`, or `h = 0` for a leaf.
    pub fn stable(&self, id: NodeId) -> Result<bool, StepError> {
        Ok(self.stable_i(self.idx(id)?))
    }

    pub fn balanced(&self, id: NodeId, alpha: Alpha) -> Result<bool, StepError> {
        Ok(self.balanced_i(self.idx(id)?, alpha))
    }

    pub fn enabled_action(
        &self,
        id: NodeId,
        alpha: Alpha,
    ) -> Result<Option<ActionPlan>, StepError> {
        Ok(self.plan_i(self.idx(id)?, alpha).map(|p| self.plan_ids(p)))
    }

    /// Enabled nodes in ascending id order.
    pub fn enabled_nodes(&self, alpha: Alpha) -> Vec<NodeId> {
        self.enabled_idx(alpha)
            .into_iter()
            .map(|u| self.ids[u])
            .collect()
    }

    pub fn is_terminal(&self, alpha: Alpha) -> bool {
        (0..self.len()).all(|u| self.plan_i(u, alpha).is_none())
    }

    /// Executes one atomic step: every statement is computed against `self`
    /// and the results are applied together.
    pub fn execute_step(
        &self,
        activated: &[NodeId],
        alpha: Alpha,
    ) -> Result<(Configuration, StepRecord), StepError> {
        if activated.is_empty() {
            return Err(StepError::EmptyActivation);
        }
        let mut act = activated
            .iter()
            .map(|&id| self.idx(id))
            .collect::<Result<Vec<_>, _>>()?;
        act.sort_unstable();
        act.dedup();

        let plans = act
            .iter()
            .map(|&u| {
                self.plan_i(u, alpha)
                    .ok_or(StepError::NotEnabled(self.ids[u]))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut next = self.clone();
        let mut record = StepRecord {
            step_index: 0,
            activated: act.iter().map(|&u| self.ids[u]).collect(),
            height_updates: Vec::new(),
            bad_updates: Vec::new(),
            swap_sources: Vec::new(),
            swap_targets: Vec::new(),
            swaps: Vec::new(),
            bad_before: Vec::new(),
            bad_after: Vec::new(),
            badness_before: BadnessVector::default(),
            badness_after: BadnessVector::default(),
        };

        let mut removed: HashSet<(usize, usize)> = HashSet::new();
        let mut targets: HashSet<usize> = HashSet::new();
        let mut additions = Vec::new();
        for plan in &plans {
            match *plan {
                Plan::Update(u) => {
                    next.height[u] = self.updated_height(u)?;
                    if analysis::is_bad_i(self, u) {
                        record.bad_updates.push(self.ids[u]);
                    } else {
                        record.height_updates.push(self.ids[u]);
                    }
                }
                Plan::Swap {
                    source,
                    target,
                    swap_out,
                    swap_in,
                } => {
                    if !targets.insert(target) {
                        return Err(StepError::SharedTarget(self.ids[target]));
                    }
                    for (from, to) in [(source, swap_out), (target, swap_in)] {
                        if !removed.insert((from, to)) {
                            return Err(StepError::EdgeConflict {
                                from: self.ids[from],
                                to: self.ids[to],
                            });
                        }
                    }
                    additions.push((source, swap_in));
                    additions.push((target, swap_out));
                    record.swap_sources.push(self.ids[source]);
                    record.swaps.push(SwapRoles {
                        source: self.ids[source],
                        target: self.ids[target],
                        swap_out: self.ids[swap_out],
                        swap_in: self.ids[swap_in],
                    });
                }
            }
        }
        for &(from, to) in &removed {
            next.children[from].retain(|&c| c != to);
        }
        for &(from, to) in &additions {
            next.children[from].push(to);
            next.father[to] = Some(from);
        }
        next.validate().map_err(StepError::Corrupted)?;

        let mut tgt: Vec<usize> = targets.into_iter().collect();
        tgt.sort_unstable();
        record.swap_targets = tgt.into_iter().map(|u| self.ids[u]).collect();
        record.bad_before = analysis::bad_set(self);
        record.bad_after = analysis::bad_set(&next);
        record.badness_before = analysis::badness_vector(self);
        record.badness_after = analysis::badness_vector(&next);
        Ok((next, record))
    }

    // ---- index-level API used by analysis and engine ----

    pub(crate) fn idx(&self, id: NodeId) -> Result<usize, StepError> {
        self.index
            .get(&id)
            .copied()
            .ok_or(StepError::UnknownNode(id))
    }

    pub(crate) fn id_of(&self, u: usize) -> NodeId {
        self.ids[u]
    }

    pub(crate) fn root_idx(&self) -> usize {
        self.root
    }

    pub(crate) fn kids(&self, u: usize) -> &[usize] {
        &self.children[u]
    }

    pub(crate) fn father_idx(&self, u: usize) -> Option<usize> {
        self.father[u]
    }

    pub(crate) fn h(&self, u: usize) -> Height {
        self.height[u]
    }

    pub(crate) fn max_child_height(&self, u: usize) -> Option<Height> {
        self.children[u].iter().map(|&c| self.height[c]).max()
    }

    pub(crate) fn max_child_i(&self, u: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for &c in &self.children[u] {
            best = match best {
                Some(b) if self.height[b] > self.height[c] => Some(b),
                Some(b) if self.height[b] == self.height[c] && b < c => Some(b),
                _ => Some(c),
            };
        }
        best
    }

    pub(crate) fn min_child_i(&self, u: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for &c in &self.children[u] {
            best = match best {
                Some(b) if self.height[b] < self.height[c] => Some(b),
                Some(b) if self.height[b] == self.height[c] && b < c => Some(b),
                _ => Some(c),
            };
        }
        best
    }

    pub(crate) fn stable_i(&self, u: usize) -> bool {
        match self.max_child_height(u) {
            None => self.height[u] == 0,
            Some(m) => m.checked_add(1) == Some(self.height[u]),
        }
    }

    pub(crate) fn balanced_i(&self, u: usize, alpha: Alpha) -> bool {
        let mut hs = self.children[u].iter().map(|&c| self.height[c]);
        let Some(first) = hs.next() else {
            return true;
        };
        let (lo, hi) = hs.fold((first, first), |(lo, hi), h| (lo.min(h), hi.max(h)));
        (hi as i128) - (lo as i128) <= alpha.get() as i128
    }

    /// Guard evaluation. The swap additionally requires the tallest child to
    /// be internal: otherwise it has no child to hand over.
    pub(crate) fn plan_i(&self, u: usize, alpha: Alpha) -> Option<Plan> {
        if !self.stable_i(u) {
            return Some(Plan::Update(u));
        }
        let target = self.max_child_i(u)?;
        if self.balanced_i(u, alpha) || !self.stable_i(target) {
            return None;
        }
        let swap_in = self.max_child_i(target)?;
        let swap_out = self.min_child_i(u)?;
        Some(Plan::Swap {
            source: u,
            target,
            swap_out,
            swap_in,
        })
    }

    pub(crate) fn enabled_idx(&self, alpha: Alpha) -> Vec<usize> {
        (0..self.len())
            .filter(|&u| self.plan_i(u, alpha).is_some())
            .collect()
    }

    fn updated_height(&self, u: usize) -> Result<Height, StepError> {
        match self.max_child_height(u) {
            None => Ok(0),
            Some(m) => m
                .checked_add(1)
                .ok_or(StepError::HeightOverflow(self.ids[u])),
        }
    }

    fn plan_ids(&self, plan: Plan) -> ActionPlan {
        match plan {
            Plan::Update(u) => ActionPlan::HeightUpdate { node: self.ids[u] },
            Plan::Swap {
                source,
                target,
                swap_out,
                swap_in,
            } => ActionPlan::Swap(SwapRoles {
                source: self.ids[source],
                target: self.ids[target],
                swap_out: self.ids[swap_out],
                swap_in: self.ids[swap_in],
            }),
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn node(id: u64, father: Option<u64>, height: Height) -> NodeSpec {
        NodeSpec {
            id: NodeId(id),
            father: father.map(NodeId),
            height,
        }
    }

    /// r=1 (h 2) with a=2 (h 5) and b=3 (h 1); a has leaves c=4, d=5 (h 0).
    pub fn cfg_a() -> Configuration {
        Configuration::from_nodes(
            NodeId(1),
            [
                node(1, None, 2),
                node(2, Some(1), 5),
                node(3, Some(1), 1),
                node(4, Some(2), 0),
                node(5, Some(2), 0),
            ],
        )
        .unwrap()
    }

    /// r=1 (h 6) with v=2 (h 5) and x=3 (leaf, h 2); v has w1=4 (h 4) and
    /// w2=5 (h 2), both leaves.
    pub fn cfg_b() -> Configuration {
        Configuration::from_nodes(
            NodeId(1),
            [
                node(1, None, 6),
                node(2, Some(1), 5),
                node(3, Some(1), 2),
                node(4, Some(2), 4),
                node(5, Some(2), 2),
            ],
        )
        .unwrap()
    }

    /// r=1 (h 0) with a=2 (h 3) and e=3 (leaf, h 0); a has b=4 (leaf, h -1)
    /// and f=5 (leaf, h 0).
    pub fn cfg_c() -> Configuration {
        Configuration::from_nodes(
            NodeId(1),
            [
                node(1, None, 0),
                node(2, Some(1), 3),
                node(3, Some(1), 0),
                node(4, Some(2), -1),
                node(5, Some(2), 0),
            ],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn ids(v: &[u64]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn max_and_min_child() {
        let a = cfg_a();
        assert_eq!(a.max_child(NodeId(1)).unwrap(), Some(NodeId(2)));
        assert_eq!(a.min_child(NodeId(1)).unwrap(), Some(NodeId(3)));
        assert_eq!(a.max_child(NodeId(4)).unwrap(), None);
        assert_eq!(a.min_child(NodeId(3)).unwrap(), None);
        assert_eq!(
            a.max_child(NodeId(99)),
            Err(StepError::UnknownNode(NodeId(99)))
        );
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let c = Configuration::from_nodes(
            NodeId(1),
            [node(1, None, 5), node(9, Some(1), 4), node(7, Some(1), 4)],
        )
        .unwrap();
        assert_eq!(c.max_child(NodeId(1)).unwrap(), Some(NodeId(7)));
        let c = Configuration::from_nodes(
            NodeId(1),
            [node(1, None, 1), node(5, Some(1), 0), node(3, Some(1), 0)],
        )
        .unwrap();
        assert_eq!(c.min_child(NodeId(1)).unwrap(), Some(NodeId(3)));
    }

    #[test]
    fn stable_and_balanced() {
        let a = cfg_a();
        assert!(a.stable(NodeId(4)).unwrap());
        assert!(!a.stable(NodeId(2)).unwrap());
        assert!(!a.balanced(NodeId(1), Alpha::ONE).unwrap());
        assert!(a.balanced(NodeId(4), Alpha::ONE).unwrap());

        let c = Configuration::from_nodes(
            NodeId(1),
            [node(1, None, 6), node(2, Some(1), 5), node(3, Some(1), 2)],
        )
        .unwrap();
        assert!(c.stable(NodeId(1)).unwrap());

        let c = Configuration::from_nodes(
            NodeId(1),
            [
                node(1, None, 5),
                node(2, Some(1), 3),
                node(3, Some(1), 4),
                node(4, Some(1), 3),
            ],
        )
        .unwrap();
        assert!(c.balanced(NodeId(1), Alpha::ONE).unwrap());
    }

    #[test]
    fn guards() {
        let a = cfg_a();
        assert_eq!(
            a.enabled_action(NodeId(3), Alpha::ONE).unwrap(),
            Some(ActionPlan::HeightUpdate { node: NodeId(3) })
        );
        let b = cfg_b();
        assert_eq!(
            b.enabled_action(NodeId(1), Alpha::ONE).unwrap(),
            Some(ActionPlan::Swap(SwapRoles {
                source: NodeId(1),
                target: NodeId(2),
                swap_out: NodeId(3),
                swap_in: NodeId(4),
            }))
        );
        let fine = Configuration::from_nodes(
            NodeId(1),
            [node(1, None, 1), node(2, Some(1), 0), node(3, Some(1), 0)],
        )
        .unwrap();
        assert_eq!(fine.enabled_action(NodeId(1), Alpha::ONE).unwrap(), None);
        assert!(fine.is_terminal(Alpha::ONE));
    }

    #[test]
    fn swap_needs_an_internal_target() {
        // Root is stable, unbalanced, and its tallest child is a stable leaf:
        // there is no grandchild to pull up, so the root stays idle.
        let c = Configuration::from_nodes(
            NodeId(1),
            [node(1, None, 1), node(2, Some(1), 0), node(3, Some(1), -3)],
        )
        .unwrap();
        assert_eq!(c.enabled_action(NodeId(1), Alpha::ONE).unwrap(), None);
        assert_eq!(c.enabled_nodes(Alpha::ONE), ids(&[3]));
    }

    #[test]
    fn synchronous_height_step_on_cfg_a() {
        let a = cfg_a();
        assert_eq!(a.enabled_nodes(Alpha::ONE), ids(&[1, 2, 3]));
        let (next, rec) = a.execute_step(&ids(&[1, 2, 3]), Alpha::ONE).unwrap();
        assert_eq!(next.height(NodeId(1)).unwrap(), 6);
        assert_eq!(next.height(NodeId(2)).unwrap(), 1);
        assert_eq!(next.height(NodeId(3)).unwrap(), 0);
        assert_eq!(next.height(NodeId(4)).unwrap(), 0);
        assert_eq!(rec.bad_updates, ids(&[1]));
        assert_eq!(rec.height_updates, ids(&[2, 3]));
        assert!(rec.bad_after.is_empty());
    }

    #[test]
    fn swap_step_on_cfg_b() {
        let b = cfg_b();
        let (next, rec) = b.execute_step(&ids(&[1]), Alpha::ONE).unwrap();
        let mut rc = next.children(NodeId(1)).unwrap();
        rc.sort();
        let mut vc = next.children(NodeId(2)).unwrap();
        vc.sort();
        assert_eq!(rc, ids(&[2, 4]));
        assert_eq!(vc, ids(&[3, 5]));
        for id in 1..=5 {
            assert_eq!(
                next.height(NodeId(id)).unwrap(),
                b.height(NodeId(id)).unwrap()
            );
        }
        assert_eq!(rec.swap_sources, ids(&[1]));
        assert_eq!(rec.swap_targets, ids(&[2]));
        assert_eq!(next.leaves(), b.leaves());
    }

    #[test]
    fn activating_a_disabled_node_fails() {
        let b = cfg_b();
        assert_eq!(
            b.execute_step(&ids(&[2]), Alpha::ONE).unwrap_err(),
            StepError::NotEnabled(NodeId(2))
        );
        assert_eq!(
            b.execute_step(&[], Alpha::ONE).unwrap_err(),
            StepError::EmptyActivation
        );
    }

    #[test]
    fn height_overflow_is_an_error() {
        let c = Configuration::from_nodes(
            NodeId(1),
            [
                node(1, None, 0),
                node(2, Some(1), Height::MAX),
                node(3, Some(1), 0),
            ],
        )
        .unwrap();
        assert_eq!(
            c.execute_step(&ids(&[1]), Alpha::ONE).unwrap_err(),
            StepError::HeightOverflow(NodeId(1))
        );
    }

    #[test]
    fn validate_diagnostics() {
        assert!(cfg_a().validate().is_ok());
        let cyclic = Configuration::from_nodes_unchecked(
            NodeId(1),
            [
                node(1, None, 0),
                node(2, Some(3), 0),
                node(3, Some(2), 0),
                node(4, Some(1), 0),
                node(5, Some(1), 0),
            ],
        )
        .unwrap();
        let err = cyclic.validate().unwrap_err();
        assert!(matches!(err, Diagnostic::NotATree(_)));
        assert!(err.to_string().contains("not a tree"));

        let err = Configuration::from_nodes(NodeId(1), [node(1, None, 0), node(2, Some(1), 0)])
            .unwrap_err();
        assert_eq!(err, Diagnostic::DegreeOne(NodeId(1)));
        assert!(err.to_string().contains("degree < 2"));

        assert_eq!(
            Configuration::from_nodes(NodeId(1), [node(1, None, 0), node(1, None, 0)]).unwrap_err(),
            Diagnostic::DuplicateId(NodeId(1))
        );
        assert_eq!(
            Configuration::from_nodes(NodeId(0), [node(0, None, 0)]).unwrap_err(),
            Diagnostic::ZeroId
        );
        assert_eq!(
            Configuration::from_nodes(
                NodeId(1),
                [node(1, None, 0), node(2, None, 0), node(3, Some(1), 0)]
            )
            .unwrap_err(),
            Diagnostic::MissingFather(NodeId(2))
        );
        assert_eq!(Alpha::new(0).unwrap_err(), Diagnostic::AlphaTooSmall(0));
    }

    #[test]
    fn json_round_trip_keeps_children_order() {
        let b = cfg_b();
        let (next, _) = b.execute_step(&ids(&[1]), Alpha::ONE).unwrap();
        let back = Configuration::from_json(&next.to_json()).unwrap();
        assert_eq!(back, next);
        let err = Configuration::from_json(
            r#"{"root":1,"nodes":[{"id":1,"father":null,"height":0},
                {"id":2,"father":3,"height":0},{"id":3,"father":2,"height":0}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not a tree"));
    }
}
