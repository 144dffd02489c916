//! Initial configurations.
//!
//! Heights are edge counts everywhere (a leaf is 0), so the almost-linear
//! tree on `n` nodes has a root of true height `(n-1)/2`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::GeneratorError;
use crate::tree::{Configuration, Height, NodeId, NodeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Caterpillar: the unique full binary tree of maximal height.
    AlmostLinear { n: usize },
    /// Caterpillar with the adversarial heights `n + 2 - 2i` on the spine.
    LowerBound { n: usize },
    /// Random leaf splitting from a 3-node tree.
    Random { n: usize, seed: u64 },
}

impl Shape {
    pub fn n(&self) -> usize {
        match *self {
            Shape::AlmostLinear { n } | Shape::LowerBound { n } | Shape::Random { n, .. } => n,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Shape::AlmostLinear { .. } => "linear",
            Shape::LowerBound { .. } => "lowerbound",
            Shape::Random { .. } => "random",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::AlmostLinear { n } => write!(f, "linear:{n}"),
            Shape::LowerBound { n } => write!(f, "lowerbound:{n}"),
            Shape::Random { n, seed } => write!(f, "random:{n}:{seed}"),
        }
    }
}

impl FromStr for Shape {
    type Err = GeneratorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeneratorError::Parse(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| {
            parts
                .get(i)
                .ok_or_else(bad)?
                .parse::<u64>()
                .map_err(|_| bad())
        };
        match (parts[0], parts.len()) {
            ("linear", 2) => Ok(Shape::AlmostLinear {
                n: num(1)? as usize,
            }),
            ("lowerbound", 2) => Ok(Shape::LowerBound {
                n: num(1)? as usize,
            }),
            ("random", 2) => Ok(Shape::Random {
                n: num(1)? as usize,
                seed: 0,
            }),
            ("random", 3) => Ok(Shape::Random {
                n: num(1)? as usize,
                seed: num(2)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Initial height assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeightPolicy {
    /// Whatever the shape defines: true heights, or the adversarial values
    /// of the lower-bound family.
    Exact,
    Zero,
    /// Independent uniform draws from `[lo, hi]`.
    Uniform {
        lo: Height,
        hi: Height,
        seed: u64,
    },
}

impl fmt::Display for HeightPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeightPolicy::Exact => f.write_str("exact"),
            HeightPolicy::Zero => f.write_str("zero"),
            HeightPolicy::Uniform { lo, hi, seed } => write!(f, "uniform:{lo}:{hi}:{seed}"),
        }
    }
}

impl FromStr for HeightPolicy {
    type Err = GeneratorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeneratorError::Parse(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["exact"] => Ok(HeightPolicy::Exact),
            ["zero"] => Ok(HeightPolicy::Zero),
            ["uniform", lo, hi, rest @ ..] if rest.len() <= 1 => {
                let lo: Height = lo.parse().map_err(|_| bad())?;
                let hi: Height = hi.parse().map_err(|_| bad())?;
                let seed = match rest {
                    [s] => s.parse().map_err(|_| bad())?,
                    _ => 0,
                };
                if lo > hi {
                    return Err(GeneratorError::HeightRange { lo, hi });
                }
                Ok(HeightPolicy::Uniform { lo, hi, seed })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub shape: Shape,
    pub heights: HeightPolicy,
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<Configuration, GeneratorError> {
        let mut cfg = match self.shape {
            Shape::AlmostLinear { n } => almost_linear(n)?,
            Shape::LowerBound { n } => lower_bound_family(n)?,
            Shape::Random { n, seed } => random_tree(n, seed)?,
        };
        apply_heights(&mut cfg, self.heights)?;
        Ok(cfg)
    }
}

fn check_odd(shape: &'static str, n: usize) -> Result<usize, GeneratorError> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(GeneratorError::Size { shape, n });
    }
    Ok((n - 1) / 2)
}

/// Caterpillar on ids `1..=n`: spine `1..=k+1` with `1` the root and
/// `k+1` a leaf; leaf `k+1+i` hangs under spine node `i`.
fn caterpillar(n: usize, spine_height: impl Fn(usize) -> Height) -> Configuration {
    let k = (n - 1) / 2;
    let mut nodes = Vec::with_capacity(n);
    nodes.push(NodeSpec {
        id: NodeId(1),
        father: None,
        height: spine_height(1),
    });
    for i in 1..=k {
        nodes.push(NodeSpec {
            id: NodeId(i as u64 + 1),
            father: Some(NodeId(i as u64)),
            height: spine_height(i + 1),
        });
        nodes.push(NodeSpec {
            id: NodeId((k + 1 + i) as u64),
            father: Some(NodeId(i as u64)),
            height: 0,
        });
    }
    Configuration::from_nodes(NodeId(1), nodes).expect("caterpillar is a valid tree")
}

/// Almost-linear tree with correct heights.
pub fn almost_linear(n: usize) -> Result<Configuration, GeneratorError> {
    let k = check_odd("almost-linear", n)?;
    Ok(caterpillar(n, |i| (k + 1 - i) as Height))
}

/// Lower-bound instance on `n = 2k+1` nodes: spine heights `n + 2 - 2i`,
/// leaves 0.
pub fn lower_bound_family(n: usize) -> Result<Configuration, GeneratorError> {
    check_odd("lower-bound", n)?;
    Ok(caterpillar(n, |i| n as Height + 2 - 2 * i as Height))
}

/// Random full binary tree grown by splitting uniformly chosen leaves, with
/// correct heights. Ids are assigned in creation order.
pub fn random_tree(n: usize, seed: u64) -> Result<Configuration, GeneratorError> {
    check_odd("random", n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // index = id; slot 0 unused
    let mut children: Vec<Vec<u64>> = vec![vec![], vec![2, 3], vec![], vec![]];
    let mut father: Vec<u64> = vec![0, 0, 1, 1];
    let mut leaves: Vec<u64> = vec![2, 3];
    while children.len() - 1 < n {
        let slot = rng.gen_range(0..leaves.len());
        let leaf = leaves[slot];
        let mid = children.len() as u64;
        let fresh = mid + 1;
        let f = father[leaf as usize];
        let pos = children[f as usize]
            .iter()
            .position(|&c| c == leaf)
            .expect("leaf is listed under its father");
        children[f as usize][pos] = mid;
        children.push(vec![leaf, fresh]);
        children.push(vec![]);
        father.push(f);
        father.push(mid);
        father[leaf as usize] = mid;
        leaves.push(fresh);
    }
    let mut nodes = Vec::with_capacity(n);
    let mut queue = VecDeque::from([1u64]);
    while let Some(u) = queue.pop_front() {
        nodes.push(NodeSpec {
            id: NodeId(u),
            father: (u != 1).then(|| NodeId(father[u as usize])),
            height: 0,
        });
        queue.extend(children[u as usize].iter().copied());
    }
    let mut cfg = Configuration::from_nodes(NodeId(1), nodes).expect("grown tree is valid");
    set_true_heights(&mut cfg);
    Ok(cfg)
}

fn set_true_heights(cfg: &mut Configuration) {
    let actual = analysis::actual_heights(cfg);
    for (u, h) in actual.into_iter().enumerate() {
        let id = cfg.id_of(u);
        cfg.set_height(id, h as Height).expect("id exists");
    }
}

pub fn apply_heights(cfg: &mut Configuration, policy: HeightPolicy) -> Result<(), GeneratorError> {
    let ids = cfg.ids().to_vec();
    match policy {
        HeightPolicy::Exact => {}
        HeightPolicy::Zero => {
            for id in ids {
                cfg.set_height(id, 0).expect("id exists");
            }
        }
        HeightPolicy::Uniform { lo, hi, seed } => {
            if lo > hi {
                return Err(GeneratorError::HeightRange { lo, hi });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for id in ids {
                cfg.set_height(id, rng.gen_range(lo..=hi))
                    .expect("id exists");
            }
        }
    }
    Ok(())
}
