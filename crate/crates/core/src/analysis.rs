//! Bad nodes, the component partition of the extended configuration,
//! badness vectors, leaf components, swap chains, and the executable
//! invariant checks applied after every step and at termination.
//!
//! The extended configuration adds an artificial father of the root whose
//! height is minus infinity. It is never materialized: it shows up only as
//! [`ComponentRoot::Sentinel`], which is always bad and never enabled.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::StepError;
use crate::tree::{Alpha, Configuration, NodeId, StepRecord, SwapRoles};

pub(crate) fn is_bad_i(cfg: &Configuration, u: usize) -> bool {
    match cfg.max_child_height(u) {
        None => cfg.h(u) < 0,
        Some(m) => cfg.h(u) <= m,
    }
}

fn bad_flags(cfg: &Configuration) -> Vec<bool> {
    (0..cfg.len()).map(|u| is_bad_i(cfg, u)).collect()
}

/// Real bad nodes in ascending id order (the sentinel is not included).
pub fn bad_set(cfg: &Configuration) -> Vec<NodeId> {
    (0..cfg.len())
        .filter(|&u| is_bad_i(cfg, u))
        .map(|u| cfg.id_of(u))
        .collect()
}

/// Post-order over node indices (children before fathers).
pub(crate) fn post_order(cfg: &Configuration) -> Vec<usize> {
    let mut order = Vec::with_capacity(cfg.len());
    let mut stack = vec![cfg.root_idx()];
    while let Some(u) = stack.pop() {
        order.push(u);
        stack.extend_from_slice(cfg.kids(u));
    }
    order.reverse();
    order
}

pub(crate) fn actual_heights(cfg: &Configuration) -> Vec<u64> {
    let mut hs = vec![0u64; cfg.len()];
    for u in post_order(cfg) {
        hs[u] = cfg.kids(u).iter().map(|&c| hs[c] + 1).max().unwrap_or(0);
    }
    hs
}

/// True height of the subtree rooted at `id` (edge count, leaves are 0).
pub fn actual_height(cfg: &Configuration, id: NodeId) -> Result<u64, StepError> {
    let u = cfg.idx(id)?;
    Ok(actual_heights(cfg)[u])
}

/// Node set of the subtree rooted at `id`.
pub fn subtree(cfg: &Configuration, id: NodeId) -> Result<BTreeSet<NodeId>, StepError> {
    let mut out = BTreeSet::new();
    let mut stack = vec![cfg.idx(id)?];
    while let Some(u) = stack.pop() {
        out.insert(cfg.id_of(u));
        stack.extend_from_slice(cfg.kids(u));
    }
    Ok(out)
}

/// Root of a component: the sentinel or a real bad node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentRoot {
    Sentinel,
    Node(NodeId),
}

impl fmt::Display for ComponentRoot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentRoot::Sentinel => f.write_str("sentinel"),
            ComponentRoot::Node(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub root: ComponentRoot,
    /// Bad nodes on the path from the sentinel to `root`, both ends included.
    pub bad_depth: usize,
    /// Real member nodes in ascending id order.
    pub members: Vec<NodeId>,
}

impl Component {
    /// Member count, counting the sentinel for its own component.
    pub fn size(&self) -> usize {
        self.members.len() + usize::from(self.root == ComponentRoot::Sentinel)
    }
}

/// Components ordered by bad depth, then root (sentinel first, then id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPartition {
    pub components: Vec<Component>,
}

impl ComponentPartition {
    pub fn badness_vector(&self) -> BadnessVector {
        BadnessVector(self.components.iter().map(Component::size).collect())
    }
}

/// Component sizes in partition order; the lexicographic potential.
///
/// `Ord` is the potential's order: a shorter vector is smaller, vectors of
/// equal length compare entry by entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BadnessVector(pub Vec<usize>);

impl BadnessVector {
    pub fn lex_less(&self, other: &BadnessVector) -> bool {
        self < other
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }
}

impl Ord for BadnessVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for BadnessVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BadnessVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str(")")
    }
}

/// Partition with a component index per real node, in partition order.
pub(crate) struct RawPartition {
    pub comp_of: Vec<usize>,
    pub roots: Vec<ComponentRoot>,
    pub depths: Vec<usize>,
    pub bad: Vec<bool>,
}

pub(crate) fn raw_partition(cfg: &Configuration) -> RawPartition {
    let n = cfg.len();
    let bad = bad_flags(cfg);
    let mut roots = vec![ComponentRoot::Sentinel];
    let mut depths = vec![1usize];
    let mut comp_of = vec![0usize; n];
    let mut stack = vec![(cfg.root_idx(), 0usize)];
    while let Some((u, parent_comp)) = stack.pop() {
        let c = if bad[u] {
            roots.push(ComponentRoot::Node(cfg.id_of(u)));
            depths.push(depths[parent_comp] + 1);
            roots.len() - 1
        } else {
            parent_comp
        };
        comp_of[u] = c;
        for &k in cfg.kids(u) {
            stack.push((k, c));
        }
    }
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by_key(|&c| (depths[c], roots[c]));
    let mut rank = vec![0usize; roots.len()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    RawPartition {
        comp_of: comp_of.into_iter().map(|c| rank[c]).collect(),
        roots: order.iter().map(|&c| roots[c]).collect(),
        depths: order.iter().map(|&c| depths[c]).collect(),
        bad,
    }
}

impl RawPartition {
    fn into_partition(self, cfg: &Configuration) -> ComponentPartition {
        let mut components: Vec<Component> = self
            .roots
            .iter()
            .zip(&self.depths)
            .map(|(&root, &bad_depth)| Component {
                root,
                bad_depth,
                members: Vec::new(),
            })
            .collect();
        // Indices are in ascending id order, so members come out sorted.
        for (u, &c) in self.comp_of.iter().enumerate() {
            components[c].members.push(cfg.id_of(u));
        }
        ComponentPartition { components }
    }

    fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.roots.len()];
        sizes[0] = 1;
        for &c in &self.comp_of {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Partition of the extended configuration into components, one per bad
/// node (the sentinel included).
pub fn partition(cfg: &Configuration) -> ComponentPartition {
    raw_partition(cfg).into_partition(cfg)
}

pub fn badness_vector(cfg: &Configuration) -> BadnessVector {
    BadnessVector(raw_partition(cfg).sizes())
}

/// Components none of whose members has a bad child.
pub fn leaf_components(cfg: &Configuration) -> Vec<Component> {
    let raw = raw_partition(cfg);
    let mut has_bad_child = vec![false; raw.roots.len()];
    for u in 0..cfg.len() {
        if raw.bad[u] {
            let parent_comp = cfg.father_idx(u).map_or(0, |f| raw.comp_of[f]);
            has_bad_child[parent_comp] = true;
        }
    }
    raw.into_partition(cfg)
        .components
        .into_iter()
        .enumerate()
        .filter(|(c, _)| !has_bad_child[*c])
        .map(|(_, comp)| comp)
        .collect()
}

/// Smallest leaf-component size; `None` once no real bad node remains.
pub fn smallest_leaf_component_size(cfg: &Configuration) -> Option<usize> {
    if !(0..cfg.len()).any(|u| is_bad_i(cfg, u)) {
        return None;
    }
    leaf_components(cfg).iter().map(Component::size).min()
}

/// Maximal path `u0 … uσ` where each `u_i` (i < σ) is a swap source whose
/// target is `u_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapChain {
    pub path: Vec<NodeId>,
}

/// Swap chains of the step that activates `activated` in `cfg`.
pub fn swap_chains(
    cfg: &Configuration,
    activated: &[NodeId],
    alpha: Alpha,
) -> Result<Vec<SwapChain>, StepError> {
    let mut swaps = Vec::new();
    for &id in activated {
        match cfg.enabled_action(id, alpha)? {
            Some(crate::tree::ActionPlan::Swap(roles)) => swaps.push(roles),
            Some(_) => {}
            None => return Err(StepError::NotEnabled(id)),
        }
    }
    Ok(chains_from_swaps(&swaps))
}

pub fn chains_from_swaps(swaps: &[SwapRoles]) -> Vec<SwapChain> {
    let next: std::collections::HashMap<NodeId, NodeId> =
        swaps.iter().map(|s| (s.source, s.target)).collect();
    let targets: HashSet<NodeId> = swaps.iter().map(|s| s.target).collect();
    let mut starts: Vec<NodeId> = swaps
        .iter()
        .map(|s| s.source)
        .filter(|s| !targets.contains(s))
        .collect();
    starts.sort_unstable();
    starts
        .into_iter()
        .map(|s| {
            let mut path = vec![s];
            let mut cur = s;
            while let Some(&t) = next.get(&cur) {
                path.push(t);
                cur = t;
            }
            SwapChain { path }
        })
        .collect()
}

/// Order-independent fingerprint of each subtree's node set.
fn subtree_fingerprints(cfg: &Configuration) -> Vec<(u64, u64, usize)> {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut fp = vec![(0u64, 0u64, 0usize); cfg.len()];
    for u in post_order(cfg) {
        let id = cfg.id_of(u).0;
        let mut acc = (mix(id), mix(id ^ 0x5555_5555_5555_5555), 1usize);
        for &c in cfg.kids(u) {
            acc.0 = acc.0.wrapping_add(fp[c].0);
            acc.1 = acc.1.wrapping_add(fp[c].1);
            acc.2 += fp[c].2;
        }
        fp[u] = acc;
    }
    fp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// More bad nodes after a step than before.
    BadCountIncreased,
    /// Bad nodes after a bad-free configuration.
    BadNodeReappeared,
    /// A bad node was activated or turned non-bad without the badness
    /// vector decreasing.
    BadnessNotDecreased,
    /// Same bad set, different components.
    PartitionChanged,
    /// Root, node set or leaf set changed.
    StructureChanged,
    /// A node outside every swap's target set saw its subtree change.
    SubtreeChanged,
    /// Children changed for a node that is neither source nor target.
    ChildrenChanged,
    /// The union of children along a swap chain changed.
    SwapChainChildren,
    /// Activated roles overlap in a way the guards rule out.
    RoleOverlap,
    /// Phase 1 took more rounds than there are nodes.
    PhaseOneRounds,
    /// Terminal node not balanced.
    FinalUnbalanced,
    /// Terminal node with a wrong height variable.
    FinalHeight,
    /// The smallest leaf component did not grow over a round.
    LeafComponentGrowth,
}

impl Rule {
    /// Rules backed by an unproven claim; reported apart from hard failures.
    pub fn is_conjecture(self) -> bool {
        matches!(self, Rule::LeafComponentGrowth)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("rule serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub step: u64,
    pub rule: Rule,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    None,
    #[default]
    Step,
    /// Per-step checks plus leaf-component growth at round boundaries.
    Round,
}

fn ids_to_idx(cfg: &Configuration, ids: &[NodeId]) -> Vec<usize> {
    ids.iter().filter_map(|&id| cfg.idx(id).ok()).collect()
}

/// Checks every per-step invariant on `pre → post`; empty when all hold.
pub fn check_step(pre: &Configuration, rec: &StepRecord, post: &Configuration) -> Vec<Violation> {
    let step = rec.step_index;
    let mut out = Vec::new();
    let mut fail = |rule: Rule, detail: String| out.push(Violation { step, rule, detail });

    if pre.root() != post.root() || pre.ids() != post.ids() {
        fail(Rule::StructureChanged, "root or node set changed".into());
        return out;
    }
    if pre.leaves() != post.leaves() {
        fail(Rule::StructureChanged, "leaf set changed".into());
    }

    let n = pre.len();
    let bad_pre = bad_flags(pre);
    let bad_post = bad_flags(post);
    let count_pre = bad_pre.iter().filter(|&&b| b).count();
    let count_post = bad_post.iter().filter(|&&b| b).count();
    if count_post > count_pre {
        fail(
            Rule::BadCountIncreased,
            format!("{count_pre} bad nodes became {count_post}"),
        );
    }
    if count_pre == 0 && count_post > 0 {
        fail(
            Rule::BadNodeReappeared,
            format!("{count_post} bad nodes after a bad-free configuration"),
        );
    }

    let mut role = vec![0u8; n];
    const H: u8 = 1;
    const B: u8 = 2;
    const S: u8 = 4;
    const T: u8 = 8;
    for (ids, bit) in [
        (&rec.height_updates, H),
        (&rec.bad_updates, B),
        (&rec.swap_sources, S),
        (&rec.swap_targets, T),
    ] {
        for u in ids_to_idx(pre, ids) {
            role[u] |= bit;
        }
    }
    let activated: HashSet<usize> = ids_to_idx(pre, &rec.activated).into_iter().collect();
    for u in 0..n {
        let r = role[u];
        let a = r & (H | B | S);
        let id = pre.id_of(u);
        if a.count_ones() > 1 || (a != 0) != activated.contains(&u) {
            fail(Rule::RoleOverlap, format!("node {id} has roles {r:#06b}"));
        }
        if r & B != 0 && !bad_pre[u] {
            fail(Rule::RoleOverlap, format!("bad updater {id} was not bad"));
        }
        if r & H != 0 && bad_pre[u] {
            fail(Rule::RoleOverlap, format!("non-bad updater {id} was bad"));
        }
        if r & (S | T) != 0 && (bad_pre[u] || r & H != 0) {
            fail(
                Rule::RoleOverlap,
                format!("swap source/target {id} is bad or height-updating"),
            );
        }
    }

    let progress = !rec.bad_updates.is_empty() || (0..n).any(|u| bad_pre[u] && !bad_post[u]);
    if progress {
        let before = badness_vector(pre);
        let after = badness_vector(post);
        if !after.lex_less(&before) {
            fail(
                Rule::BadnessNotDecreased,
                format!("badness {before} -> {after}"),
            );
        }
    }

    if bad_pre == bad_post {
        let p = raw_partition(pre);
        let q = raw_partition(post);
        let moved = (0..n).find(|&u| p.roots[p.comp_of[u]] != q.roots[q.comp_of[u]]);
        if let Some(u) = moved {
            fail(
                Rule::PartitionChanged,
                format!(
                    "node {} moved from component {} to {}",
                    pre.id_of(u),
                    p.roots[p.comp_of[u]],
                    q.roots[q.comp_of[u]]
                ),
            );
        }
    }

    let fp_pre = subtree_fingerprints(pre);
    let fp_post = subtree_fingerprints(post);
    for u in 0..n {
        if role[u] & T == 0 && fp_pre[u] != fp_post[u] {
            fail(
                Rule::SubtreeChanged,
                format!("subtree of non-target {} changed", pre.id_of(u)),
            );
        }
        if role[u] & (S | T) == 0 {
            let mut a = pre.kids(u).to_vec();
            let mut b = post.kids(u).to_vec();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                fail(
                    Rule::ChildrenChanged,
                    format!("children of {} changed", pre.id_of(u)),
                );
            }
        }
    }

    for chain in chains_from_swaps(&rec.swaps) {
        let union = |cfg: &Configuration| -> BTreeSet<usize> {
            ids_to_idx(cfg, &chain.path)
                .into_iter()
                .flat_map(|u| cfg.kids(u).iter().copied())
                .collect()
        };
        if union(pre) != union(post) {
            fail(
                Rule::SwapChainChildren,
                format!("children union changed along chain {:?}", chain.path),
            );
        }
    }
    out
}

/// Leaf-component growth over one round; `start` is the smallest leaf
/// component at the round's first configuration.
pub fn check_round(
    start: Option<usize>,
    end: &Configuration,
    round: u64,
    step: u64,
) -> Option<Violation> {
    let start = start?;
    let end_size = smallest_leaf_component_size(end)?;
    (end_size <= start).then(|| Violation {
        step,
        rule: Rule::LeafComponentGrowth,
        detail: format!("round {round}: smallest leaf component {start} -> {end_size}"),
    })
}

/// Root-height bound for α = 1: `1.45·log2(n+2) + 2`.
pub fn height_bound(n: usize) -> f64 {
    1.45 * ((n + 2) as f64).log2() + 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalCheck {
    pub violations: Vec<Violation>,
    pub root_height: u64,
    pub height_bound: f64,
    /// Reported, never a failure.
    pub within_bound: bool,
}

/// Terminal-state checks: every node balanced with a correct height.
pub fn check_final(cfg: &Configuration, alpha: Alpha, step: u64) -> Result<FinalCheck, StepError> {
    if !cfg.is_terminal(alpha) {
        return Err(StepError::NotTerminal);
    }
    let actual = actual_heights(cfg);
    let mut violations = Vec::new();
    for (u, &true_h) in actual.iter().enumerate() {
        let id = cfg.id_of(u);
        if !cfg.balanced_i(u, alpha) {
            violations.push(Violation {
                step,
                rule: Rule::FinalUnbalanced,
                detail: format!("node {id} is unbalanced"),
            });
        }
        if cfg.h(u) != true_h as i64 {
            violations.push(Violation {
                step,
                rule: Rule::FinalHeight,
                detail: format!("node {id} has h={} but true height {true_h}", cfg.h(u)),
            });
        }
    }
    let root_height = actual[cfg.root_idx()];
    let bound = height_bound(cfg.len());
    Ok(FinalCheck {
        violations,
        root_height,
        height_bound: bound,
        within_bound: (root_height as f64) <= bound,
    })
}

/// Nodes whose height variable underestimates their true height although
/// their subtree holds no bad node. Always empty for a correct model.
pub fn underestimates_without_bad_descendant(cfg: &Configuration) -> Vec<NodeId> {
    let actual = actual_heights(cfg);
    let mut has_bad = vec![false; cfg.len()];
    let mut out = Vec::new();
    for u in post_order(cfg) {
        has_bad[u] = is_bad_i(cfg, u) || cfg.kids(u).iter().any(|&c| has_bad[c]);
        if cfg.h(u) < actual[u] as i64 && !has_bad[u] {
            out.push(cfg.id_of(u));
        }
    }
    out.sort_unstable();
    out
}
