//! Property tests against oracles written independently of the library.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treeswap::analysis::{self, subtree};
use treeswap::engine;
use treeswap::{
    ActionPlan, Alpha, CheckLevel, Configuration, GeneratorSpec, HeightPolicy, NodeId, RunOptions,
    RunStatus, SchedulerKind, Shape,
};

/// Plain adjacency copy of a configuration.
struct Plain {
    root: NodeId,
    height: BTreeMap<NodeId, i64>,
    kids: BTreeMap<NodeId, Vec<NodeId>>,
}

impl Plain {
    fn of(cfg: &Configuration) -> Plain {
        let mut height = BTreeMap::new();
        let mut kids = BTreeMap::new();
        for &id in cfg.ids() {
            height.insert(id, cfg.height(id).unwrap());
            kids.insert(id, cfg.children(id).unwrap());
        }
        Plain {
            root: cfg.root(),
            height,
            kids,
        }
    }

    fn true_height(&self, u: NodeId) -> i64 {
        self.kids[&u]
            .iter()
            .map(|&c| 1 + self.true_height(c))
            .max()
            .unwrap_or(0)
    }

    // Smallest id among the children of extreme height.
    fn pick(&self, u: NodeId, tallest: bool) -> Option<NodeId> {
        let kids = &self.kids[&u];
        let best = if tallest {
            kids.iter().map(|c| self.height[c]).max()?
        } else {
            kids.iter().map(|c| self.height[c]).min()?
        };
        kids.iter()
            .copied()
            .filter(|c| self.height[c] == best)
            .min()
    }

    fn stable(&self, u: NodeId) -> bool {
        let want = match self.pick(u, true) {
            Some(m) => self.height[&m].checked_add(1),
            None => Some(0),
        };
        want == Some(self.height[&u])
    }

    fn g1(&self, u: NodeId) -> bool {
        !self.stable(u)
    }

    fn g2(&self, u: NodeId, alpha: i64) -> bool {
        let (Some(mx), Some(mn)) = (self.pick(u, true), self.pick(u, false)) else {
            return false;
        };
        let unbalanced = (self.height[&mx] as i128 - self.height[&mn] as i128) > alpha as i128;
        self.stable(u) && self.stable(mx) && !self.kids[&mx].is_empty() && unbalanced
    }

    fn bad(&self) -> BTreeSet<NodeId> {
        self.height
            .iter()
            .filter(|(u, &h)| match self.pick(**u, true) {
                Some(m) => h <= self.height[&m],
                None => h < 0,
            })
            .map(|(u, _)| *u)
            .collect()
    }

    fn leaves(&self) -> BTreeSet<NodeId> {
        self.kids
            .iter()
            .filter(|(_, k)| k.is_empty())
            .map(|(u, _)| *u)
            .collect()
    }
}

fn build(n: usize, tree_seed: u64, linear: bool, lo: i64, hi: i64, hseed: u64) -> Configuration {
    let shape = if linear {
        Shape::AlmostLinear { n }
    } else {
        Shape::Random { n, seed: tree_seed }
    };
    GeneratorSpec {
        shape,
        heights: HeightPolicy::Uniform {
            lo: lo.min(hi),
            hi: lo.max(hi),
            seed: hseed,
        },
    }
    .build()
    .unwrap()
}

fn config() -> impl Strategy<Value = Configuration> {
    (
        1usize..=20,
        any::<u64>(),
        any::<bool>(),
        -25i64..25,
        -25i64..25,
        any::<u64>(),
    )
        .prop_map(|(k, ts, lin, lo, hi, hs)| build(2 * k + 1, ts, lin, lo, hi, hs))
}

fn scheduler() -> impl Strategy<Value = SchedulerKind> {
    prop_oneof![
        Just(SchedulerKind::Synchronous),
        Just(SchedulerKind::Central),
        (0.1f64..1.0, any::<u64>()).prop_map(|(p, seed)| SchedulerKind::RandomSubset { p, seed }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn guards_match_oracle_and_exclude_each_other(cfg in config(), alpha in 1i64..4) {
        let plain = Plain::of(&cfg);
        let a = Alpha::new(alpha).unwrap();
        for &u in cfg.ids() {
            let (g1, g2) = (plain.g1(u), plain.g2(u, alpha));
            prop_assert!(!(g1 && g2));
            match cfg.enabled_action(u, a).unwrap() {
                None => prop_assert!(!g1 && !g2),
                Some(ActionPlan::HeightUpdate { .. }) => prop_assert!(g1),
                Some(ActionPlan::Swap(r)) => {
                    prop_assert!(g2);
                    prop_assert_eq!(r.source, u);
                    prop_assert_eq!(Some(r.target), plain.pick(u, true));
                    prop_assert_eq!(Some(r.swap_out), plain.pick(u, false));
                    prop_assert_eq!(Some(r.swap_in), plain.pick(r.target, true));
                }
            }
        }
        prop_assert_eq!(plain.bad().into_iter().collect::<Vec<_>>(), analysis::bad_set(&cfg));
    }

    #[test]
    fn steps_preserve_the_tree(cfg in config(), pick_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(pick_seed);
        let mut cfg = cfg;
        for _ in 0..30 {
            let enabled = cfg.enabled_nodes(Alpha::ONE);
            if enabled.is_empty() {
                break;
            }
            let mut chosen: Vec<NodeId> =
                enabled.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            if chosen.is_empty() {
                chosen.push(enabled[0]);
            }
            let pre = Plain::of(&cfg);
            let (next, rec) = cfg.execute_step(&chosen, Alpha::ONE).unwrap();
            let post = Plain::of(&next);
            prop_assert!(next.validate().is_ok());
            prop_assert_eq!(pre.root, post.root);
            prop_assert_eq!(pre.leaves(), post.leaves());
            prop_assert_eq!(cfg.ids(), next.ids());
            prop_assert!(post.bad().len() <= pre.bad().len());
            if pre.bad().is_empty() {
                prop_assert!(post.bad().is_empty());
            }
            // Height updates land on 1 + max child height of the pre-state.
            for &u in rec.height_updates.iter().chain(&rec.bad_updates) {
                let want = pre.pick(u, true).map_or(0, |m| pre.height[&m] + 1);
                prop_assert_eq!(post.height[&u], want);
            }
            // Exact subtree sets for every node that is not a swap target.
            let targets: BTreeSet<NodeId> = rec.swap_targets.iter().copied().collect();
            for &u in cfg.ids() {
                if !targets.contains(&u) {
                    prop_assert_eq!(subtree(&cfg, u).unwrap(), subtree(&next, u).unwrap());
                }
            }
            prop_assert_eq!(analysis::check_step(&cfg, &rec, &next), vec![]);
            cfg = next;
        }
    }

    #[test]
    fn runs_are_deterministic_and_correct(cfg in config(), sched in scheduler()) {
        let opts = RunOptions {
            scheduler: sched,
            check_level: CheckLevel::Round,
            trace: true,
            ..RunOptions::default()
        };
        let a = engine::run(cfg.clone(), &opts).unwrap();
        let b = engine::run(cfg, &opts).unwrap();
        prop_assert_eq!(&a.metrics, &b.metrics);
        prop_assert_eq!(&a.trace, &b.trace);
        let m = a.metrics;
        prop_assert_eq!(m.status, RunStatus::Ok);
        prop_assert_eq!(m.violations, vec![]);
        prop_assert_eq!(m.phase1_rounds + m.phase2_rounds, m.rounds);
        prop_assert!(m.phase1_rounds <= m.n as u64);
        let fin = Plain::of(&a.final_config);
        for &u in a.final_config.ids() {
            prop_assert_eq!(fin.height[&u], fin.true_height(u));
            let hs: Vec<i64> = fin.kids[&u].iter().map(|c| fin.height[c]).collect();
            if let (Some(mx), Some(mn)) = (hs.iter().max(), hs.iter().min()) {
                prop_assert!(mx - mn <= 1);
            }
        }
        prop_assert_eq!(fin.true_height(fin.root) as u64, m.h_f);
    }
}

/// Heights reachable by a full binary tree with `n` nodes in which sibling
/// heights differ by at most one, by exhaustive composition.
fn balanced_heights(max_n: usize) -> Vec<BTreeSet<u64>> {
    let mut hs: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); max_n + 1];
    hs[1].insert(0);
    for n in (3..=max_n).step_by(2) {
        let mut set = BTreeSet::new();
        for left in (1..n - 1).step_by(2) {
            let right = n - 1 - left;
            for &a in &hs[left] {
                for &b in &hs[right] {
                    if a.abs_diff(b) <= 1 {
                        set.insert(1 + a.max(b));
                    }
                }
            }
        }
        hs[n] = set;
    }
    hs
}

#[test]
fn height_bound_holds_for_every_balanced_tree() {
    // Minimal node count for height h: N(h) = 1 + N(h-1) + N(h-2).
    let mut min_nodes = vec![1u64, 3];
    while min_nodes.len() < 40 {
        let k = min_nodes.len();
        min_nodes.push(1 + min_nodes[k - 1] + min_nodes[k - 2]);
    }
    // N(h) + 1 = 2·F(h+2).
    let (mut f0, mut f1) = (0u64, 1u64);
    let mut fib = vec![f0, f1];
    for _ in 0..45 {
        (f0, f1) = (f1, f0 + f1);
        fib.push(f1);
    }
    for (h, &nh) in min_nodes.iter().enumerate() {
        assert_eq!(nh + 1, 2 * fib[h + 2]);
        assert!(
            h as f64 <= analysis::height_bound(nh as usize),
            "h={h} N={nh} bound={}",
            analysis::height_bound(nh as usize)
        );
    }

    let hs = balanced_heights(401);
    for n in (1..=401).step_by(2) {
        let tallest = *hs[n].iter().max().unwrap();
        let by_recurrence = min_nodes.iter().rposition(|&m| m <= n as u64).unwrap() as u64;
        assert_eq!(tallest, by_recurrence, "n={n}");
        assert!(tallest as f64 <= analysis::height_bound(n));
    }
}

#[test]
fn lower_bound_family_exact_small_cases() {
    let m = engine::run(
        treeswap::generators::lower_bound_family(5).unwrap(),
        &RunOptions::default(),
    )
    .unwrap()
    .metrics;
    assert_eq!((m.steps, m.rounds, m.phase1_rounds, m.swaps), (3, 3, 0, 0));
    for n in (3..=61).step_by(2) {
        let m = engine::run(
            treeswap::generators::lower_bound_family(n).unwrap(),
            &RunOptions::default(),
        )
        .unwrap()
        .metrics;
        assert!(
            m.rounds >= n.div_ceil(2) as u64,
            "n={n} rounds={}",
            m.rounds
        );
        assert_eq!(m.status, RunStatus::Ok);
    }
}

#[test]
fn json_round_trip_preserves_runs() {
    let cfg = build(41, 7, false, -41, 41, 3);
    let back = Configuration::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
    let opts = RunOptions::default();
    assert_eq!(
        engine::run(cfg, &opts).unwrap().metrics,
        engine::run(back, &opts).unwrap().metrics
    );
}
