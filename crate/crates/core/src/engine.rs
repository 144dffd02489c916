//! Full executions, parameter sweeps and fuzz campaigns.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CheckLevel, Rule, Violation};
use crate::error::EngineError;
use crate::generators::{GeneratorSpec, HeightPolicy, Shape};
use crate::scheduling::{RoundTracker, Scheduler, SchedulerKind};
use crate::tree::{Alpha, Configuration, StepRecord};

/// Default step cap: `50·n²`.
pub fn default_step_cap(n: usize) -> u64 {
    50 * (n as u64) * (n as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub alpha: Alpha,
    pub scheduler: SchedulerKind,
    /// `None` means [`default_step_cap`].
    pub max_steps: Option<u64>,
    pub check_level: CheckLevel,
    /// Stop at the first hard violation instead of accumulating.
    pub strict: bool,
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            alpha: Alpha::ONE,
            scheduler: SchedulerKind::Synchronous,
            max_steps: None,
            check_level: CheckLevel::Step,
            strict: false,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    CapExceeded,
    Violation,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "ok",
            RunStatus::CapExceeded => "cap_exceeded",
            RunStatus::Violation => "violation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n: usize,
    /// True root height before the run.
    pub h_i: u64,
    /// True root height at the end of the run.
    pub h_f: u64,
    pub steps: u64,
    pub rounds: u64,
    /// Rounds up to and including the one in which bad nodes die out.
    pub phase1_rounds: u64,
    pub phase2_rounds: u64,
    /// Step at which the configuration first became bad-free.
    pub phase1_steps: Option<u64>,
    pub height_updates: u64,
    pub swaps: u64,
    pub status: RunStatus,
    /// Final root height within `1.45·log2(n+2) + 2`; reported only.
    pub within_height_bound: Option<bool>,
    pub violations: Vec<Violation>,
}

impl RunMetrics {
    pub fn hard_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| !v.rule.is_conjecture())
    }

    pub fn conjecture_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.rule.is_conjecture())
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub metrics: RunMetrics,
    pub final_config: Configuration,
    pub trace: Option<Vec<StepRecord>>,
}

/// Runs the protocol from `cfg` until no node is enabled or the step cap is
/// hit.
pub fn run(cfg: Configuration, opts: &RunOptions) -> Result<RunReport, EngineError> {
    cfg.validate()?;
    let n = cfg.len();
    let cap = opts.max_steps.unwrap_or_else(|| default_step_cap(n));
    if cap == 0 {
        return Err(EngineError::ZeroStepCap);
    }
    let alpha = opts.alpha;
    let checking = opts.check_level >= CheckLevel::Step;
    let check_rounds = opts.check_level >= CheckLevel::Round;

    let mut scheduler = Scheduler::new(opts.scheduler.clone());
    let mut cfg = cfg;
    let h_i = analysis::actual_heights(&cfg)[cfg.root_idx()];
    let mut enabled = cfg.enabled_nodes(alpha);
    let mut tracker = RoundTracker::new(&enabled);
    let mut phase1: Option<(u64, u64)> = analysis::bad_set(&cfg).is_empty().then_some((0, 0));
    let mut round_start = if check_rounds {
        analysis::smallest_leaf_component_size(&cfg)
    } else {
        None
    };

    let mut steps = 0u64;
    let mut height_updates = 0u64;
    let mut swaps = 0u64;
    let mut violations = Vec::new();
    let mut trace = opts.trace.then(Vec::new);
    let mut status = RunStatus::Ok;

    while !enabled.is_empty() {
        if steps == cap {
            status = RunStatus::CapExceeded;
            break;
        }
        let selected = scheduler.select(&enabled)?;
        let (next, mut rec) = cfg.execute_step(&selected, alpha)?;
        steps += 1;
        rec.step_index = steps;
        height_updates += (rec.height_updates.len() + rec.bad_updates.len()) as u64;
        swaps += rec.swap_sources.len() as u64;

        let mut stop = false;
        if checking {
            let found = analysis::check_step(&cfg, &rec, &next);
            stop = opts.strict && found.iter().any(|v| !v.rule.is_conjecture());
            violations.extend(found);
        }

        let enabled_after = next.enabled_nodes(alpha);
        let rounds_before = tracker.round_count;
        let closed = tracker.advance(&selected, &enabled_after);
        if phase1.is_none() && rec.bad_after.is_empty() {
            phase1 = Some((rounds_before + 1, steps));
        }
        if closed && check_rounds {
            violations.extend(analysis::check_round(
                round_start,
                &next,
                tracker.round_count,
                steps,
            ));
            round_start = analysis::smallest_leaf_component_size(&next);
        }
        if let Some(t) = trace.as_mut() {
            t.push(rec);
        }
        cfg = next;
        enabled = enabled_after;
        if stop {
            break;
        }
    }

    let rounds = tracker.round_count;
    let (phase1_rounds, phase1_steps) = match phase1 {
        Some((r, s)) => (r, Some(s)),
        None => (rounds, None),
    };
    let mut within_height_bound = None;
    if enabled.is_empty() {
        if checking {
            let fc = analysis::check_final(&cfg, alpha, steps)?;
            violations.extend(fc.violations);
            within_height_bound = Some(fc.within_bound);
            if phase1_rounds > n as u64 {
                violations.push(Violation {
                    step: steps,
                    rule: Rule::PhaseOneRounds,
                    detail: format!("phase 1 took {phase1_rounds} rounds for n={n}"),
                });
            }
        } else {
            within_height_bound = Some(
                analysis::actual_heights(&cfg)[cfg.root_idx()] as f64 <= analysis::height_bound(n),
            );
        }
    }
    if status == RunStatus::Ok && violations.iter().any(|v| !v.rule.is_conjecture()) {
        status = RunStatus::Violation;
    }

    let metrics = RunMetrics {
        n,
        h_i,
        h_f: analysis::actual_heights(&cfg)[cfg.root_idx()],
        steps,
        rounds,
        phase1_rounds,
        phase2_rounds: rounds - phase1_rounds.min(rounds),
        phase1_steps,
        height_updates,
        swaps,
        status,
        within_height_bound,
        violations,
    };
    Ok(RunReport {
        metrics,
        final_config: cfg,
        trace,
    })
}

/// Writes a JSON-lines trace: a header line, one line per step, a footer.
pub fn write_trace<W: Write>(
    mut out: W,
    generator: &str,
    opts: &RunOptions,
    steps: &[StepRecord],
    metrics: &RunMetrics,
) -> io::Result<()> {
    let header = serde_json::json!({ "type": "header", "generator": generator, "options": opts });
    writeln!(out, "{header}")?;
    for rec in steps {
        let mut line = serde_json::to_value(rec).map_err(io::Error::other)?;
        line["type"] = "step".into();
        writeln!(out, "{line}")?;
    }
    let footer = serde_json::json!({ "type": "footer", "metrics": metrics });
    writeln!(out, "{footer}")
}

// ---- sweeps ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Linear,
    LowerBound,
    Random,
}

impl FromStr for ShapeKind {
    type Err = crate::error::GeneratorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ShapeKind::Linear),
            "lowerbound" => Ok(ShapeKind::LowerBound),
            "random" => Ok(ShapeKind::Random),
            _ => Err(crate::error::GeneratorError::Parse(s.to_string())),
        }
    }
}

/// Cartesian sweep: every `n`, `reps` repetitions with seeds
/// `base_seed + rep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub shape: ShapeKind,
    pub ns: Vec<usize>,
    pub reps: u64,
    pub base_seed: u64,
    /// `None` draws heights uniformly from `[0, n]`. A uniform policy has its
    /// seed offset by the repetition's seed.
    pub heights: Option<HeightPolicy>,
    pub options: RunOptions,
}

/// One CSV row per run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub alpha: i64,
    pub scheduler: String,
    pub tree_kind: String,
    pub seed: u64,
    pub h_i: u64,
    pub h_f: u64,
    pub steps: u64,
    pub rounds: u64,
    pub phase1_rounds: u64,
    pub phase2_rounds: u64,
    pub height_updates: u64,
    pub swaps: u64,
    pub status: String,
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SweepPlan {
    /// Expands the plan into `(generator, options, seed)` jobs ordered by
    /// `(n, seed)`.
    pub fn jobs(&self) -> Vec<(GeneratorSpec, RunOptions, u64)> {
        let mut ns = self.ns.clone();
        ns.sort_unstable();
        let mut jobs = Vec::new();
        for &n in &ns {
            for rep in 0..self.reps {
                let seed = self.base_seed.wrapping_add(rep);
                let shape = match self.shape {
                    ShapeKind::Linear => Shape::AlmostLinear { n },
                    ShapeKind::LowerBound => Shape::LowerBound { n },
                    ShapeKind::Random => Shape::Random { n, seed },
                };
                let height_seed = mix64(seed);
                let heights = match self.heights {
                    None => HeightPolicy::Uniform {
                        lo: 0,
                        hi: n as i64,
                        seed: height_seed,
                    },
                    Some(HeightPolicy::Uniform { lo, hi, seed: s }) => HeightPolicy::Uniform {
                        lo,
                        hi,
                        seed: s.wrapping_add(height_seed),
                    },
                    Some(p) => p,
                };
                let mut options = self.options.clone();
                options.trace = false;
                if let SchedulerKind::RandomSubset { p, seed: s } = options.scheduler {
                    options.scheduler = SchedulerKind::RandomSubset {
                        p,
                        seed: s.wrapping_add(seed),
                    };
                }
                jobs.push((GeneratorSpec { shape, heights }, options, seed));
            }
        }
        jobs
    }
}

pub fn sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>, EngineError> {
    plan.jobs()
        .into_par_iter()
        .map(|(spec, options, seed)| {
            let report = run(spec.build()?, &options)?;
            let m = report.metrics;
            Ok(SweepRow {
                n: m.n,
                alpha: options.alpha.get(),
                scheduler: options.scheduler.label(),
                tree_kind: spec.shape.label().to_string(),
                seed,
                h_i: m.h_i,
                h_f: m.h_f,
                steps: m.steps,
                rounds: m.rounds,
                phase1_rounds: m.phase1_rounds,
                phase2_rounds: m.phase2_rounds,
                height_updates: m.height_updates,
                swaps: m.swaps,
                status: m.status.to_string(),
            })
        })
        .collect()
}

/// Per-`n` statistics of `t − (h_i + h_f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub runs: usize,
    pub min: i64,
    pub max: i64,
    pub mean: f64,
    pub stddev: f64,
    pub mean_abs: f64,
    pub mean_rounds: f64,
    /// `mean_abs / mean_rounds`.
    pub relative: f64,
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.n == n).collect();
            let diffs: Vec<i64> = group
                .iter()
                .map(|r| r.rounds as i64 - (r.h_i + r.h_f) as i64)
                .collect();
            let k = diffs.len() as f64;
            let mean = diffs.iter().sum::<i64>() as f64 / k;
            let var = diffs
                .iter()
                .map(|&d| (d as f64 - mean).powi(2))
                .sum::<f64>()
                / k;
            let mean_abs = diffs.iter().map(|d| d.unsigned_abs() as f64).sum::<f64>() / k;
            let mean_rounds = group.iter().map(|r| r.rounds as f64).sum::<f64>() / k;
            AggregateRow {
                n,
                runs: diffs.len(),
                min: *diffs.iter().min().unwrap_or(&0),
                max: *diffs.iter().max().unwrap_or(&0),
                mean,
                stddev: var.sqrt(),
                mean_abs,
                mean_rounds,
                relative: if mean_rounds > 0.0 {
                    mean_abs / mean_rounds
                } else {
                    0.0
                },
            }
        })
        .collect()
}

// ---- fuzzing ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzCampaign {
    pub count: u64,
    pub min_n: usize,
    pub max_n: usize,
    /// Random-subset seeds are replaced per case.
    pub schedulers: Vec<SchedulerKind>,
    /// Fixed height range; `None` draws from `[-n, n]`.
    pub height_range: Option<(i64, i64)>,
    pub master_seed: u64,
    pub check_level: CheckLevel,
    pub alpha: Alpha,
}

impl Default for FuzzCampaign {
    fn default() -> Self {
        FuzzCampaign {
            count: 1000,
            min_n: 3,
            max_n: 201,
            schedulers: vec![
                SchedulerKind::Synchronous,
                SchedulerKind::Central,
                SchedulerKind::RandomSubset { p: 0.5, seed: 0 },
            ],
            height_range: None,
            master_seed: 0,
            check_level: CheckLevel::Round,
            alpha: Alpha::ONE,
        }
    }
}

/// Everything needed to reproduce one fuzz run. The textual form
/// `shape/heights/scheduler/alpha` is the replay token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzCase {
    pub generator: GeneratorSpec,
    pub scheduler: SchedulerKind,
    pub alpha: Alpha,
}

impl fmt::Display for FuzzCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.generator.shape,
            self.generator.heights,
            self.scheduler,
            self.alpha.get()
        )
    }
}

impl FromStr for FuzzCase {
    type Err = EngineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EngineError::Replay(s.to_string());
        let parts: Vec<&str> = s.split('/').collect();
        let [shape, heights, scheduler, alpha] = parts.as_slice() else {
            return Err(bad());
        };
        Ok(FuzzCase {
            generator: GeneratorSpec {
                shape: shape.parse()?,
                heights: heights.parse()?,
            },
            scheduler: scheduler.parse()?,
            alpha: Alpha::new(alpha.parse().map_err(|_| bad())?)?,
        })
    }
}

impl FuzzCase {
    pub fn options(&self, check_level: CheckLevel, trace: bool) -> RunOptions {
        RunOptions {
            alpha: self.alpha,
            scheduler: self.scheduler.clone(),
            max_steps: None,
            check_level,
            strict: false,
            trace,
        }
    }

    pub fn run(&self, check_level: CheckLevel, trace: bool) -> Result<RunReport, EngineError> {
        run(self.generator.build()?, &self.options(check_level, trace))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzOutcome {
    pub case: String,
    pub n: usize,
    pub scheduler: String,
    pub status: String,
    pub steps: u64,
    pub rounds: u64,
    pub phase1_rounds: u64,
    pub phase2_rounds: u64,
    pub hard_violations: Vec<Violation>,
    pub conjecture_violations: Vec<Violation>,
    pub within_height_bound: Option<bool>,
    pub error: Option<String>,
}

impl FuzzOutcome {
    pub fn is_finding(&self) -> bool {
        self.error.is_some() || self.status != "ok" || !self.hard_violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub runs: usize,
    pub hard_findings: usize,
    pub conjecture_findings: usize,
    pub cap_hits: usize,
    pub errors: usize,
    /// Largest `phase1_rounds / n` seen.
    pub max_phase1_ratio: f64,
    /// Largest `phase2_rounds / n` seen; measured, never asserted.
    pub max_phase2_ratio: f64,
    pub outcomes: Vec<FuzzOutcome>,
}

impl FuzzReport {
    pub fn findings(&self) -> impl Iterator<Item = &FuzzOutcome> {
        self.outcomes.iter().filter(|o| o.is_finding())
    }
}

impl FuzzCampaign {
    /// Deterministic case list derived from the master seed.
    pub fn cases(&self) -> Vec<FuzzCase> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        let lo = self.min_n.max(3) | 1;
        let hi = self.max_n.max(lo);
        let odd_count = (hi - lo) / 2 + 1;
        (0..self.count)
            .map(|i| {
                let n = lo + 2 * rng.gen_range(0..odd_count);
                let tree_seed: u64 = rng.gen();
                let shape = if rng.gen_ratio(1, 8) {
                    Shape::AlmostLinear { n }
                } else {
                    Shape::Random { n, seed: tree_seed }
                };
                let (hlo, hhi) = self.height_range.unwrap_or((-(n as i64), n as i64));
                let heights = HeightPolicy::Uniform {
                    lo: hlo,
                    hi: hhi,
                    seed: rng.gen(),
                };
                let sched_seed: u64 = rng.gen();
                let scheduler = match &self.schedulers[i as usize % self.schedulers.len()] {
                    SchedulerKind::RandomSubset { p, .. } => SchedulerKind::RandomSubset {
                        p: *p,
                        seed: sched_seed,
                    },
                    other => other.clone(),
                };
                FuzzCase {
                    generator: GeneratorSpec { shape, heights },
                    scheduler,
                    alpha: self.alpha,
                }
            })
            .collect()
    }
}

pub fn fuzz(campaign: &FuzzCampaign) -> FuzzReport {
    let cases = if campaign.schedulers.is_empty() {
        Vec::new()
    } else {
        campaign.cases()
    };
    let outcomes: Vec<FuzzOutcome> = cases
        .par_iter()
        .map(|case| {
            let token = case.to_string();
            let n = case.generator.shape.n();
            match case.run(campaign.check_level, false) {
                Ok(report) => {
                    let m = report.metrics;
                    FuzzOutcome {
                        case: token,
                        n,
                        scheduler: case.scheduler.label(),
                        status: m.status.to_string(),
                        steps: m.steps,
                        rounds: m.rounds,
                        phase1_rounds: m.phase1_rounds,
                        phase2_rounds: m.phase2_rounds,
                        hard_violations: m.hard_violations().cloned().collect(),
                        conjecture_violations: m.conjecture_violations().cloned().collect(),
                        within_height_bound: m.within_height_bound,
                        error: None,
                    }
                }
                Err(e) => FuzzOutcome {
                    case: token,
                    n,
                    scheduler: case.scheduler.label(),
                    status: "error".into(),
                    steps: 0,
                    rounds: 0,
                    phase1_rounds: 0,
                    phase2_rounds: 0,
                    hard_violations: Vec::new(),
                    conjecture_violations: Vec::new(),
                    within_height_bound: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ratio = |f: fn(&FuzzOutcome) -> u64| {
        outcomes
            .iter()
            .map(|o| f(o) as f64 / o.n as f64)
            .fold(0.0, f64::max)
    };
    FuzzReport {
        runs: outcomes.len(),
        hard_findings: outcomes.iter().filter(|o| o.is_finding()).count(),
        conjecture_findings: outcomes
            .iter()
            .filter(|o| !o.conjecture_violations.is_empty())
            .count(),
        cap_hits: outcomes
            .iter()
            .filter(|o| o.status == "cap_exceeded")
            .count(),
        errors: outcomes.iter().filter(|o| o.error.is_some()).count(),
        max_phase1_ratio: ratio(|o| o.phase1_rounds),
        max_phase2_ratio: ratio(|o| o.phase2_rounds),
        outcomes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::lower_bound_family;
    use crate::tree::fixtures::cfg_a;

    #[test]
    fn lower_bound_five_takes_three_rounds() {
        let report = run(lower_bound_family(5).unwrap(), &RunOptions::default()).unwrap();
        let m = report.metrics;
        assert_eq!(m.status, RunStatus::Ok);
        assert_eq!((m.steps, m.rounds, m.phase1_rounds, m.swaps), (3, 3, 0, 0));
        assert!(m.violations.is_empty());
    }

    #[test]
    fn cfg_a_leaves_phase_one_after_one_round() {
        let m = run(cfg_a(), &RunOptions::default()).unwrap().metrics;
        assert_eq!(m.phase1_rounds, 1);
        assert_eq!(m.phase1_steps, Some(1));
        assert_eq!(m.status, RunStatus::Ok);
    }

    #[test]
    fn terminal_start_does_nothing() {
        let cfg = crate::generators::almost_linear(3).unwrap();
        let m = run(cfg, &RunOptions::default()).unwrap().metrics;
        assert_eq!((m.steps, m.rounds), (0, 0));
    }

    #[test]
    fn step_cap_is_reported() {
        let opts = RunOptions {
            max_steps: Some(1),
            ..RunOptions::default()
        };
        let m = run(lower_bound_family(9).unwrap(), &opts).unwrap().metrics;
        assert_eq!(m.status, RunStatus::CapExceeded);
        assert_eq!(m.steps, 1);
    }

    #[test]
    fn fuzz_token_round_trips() {
        let camp = FuzzCampaign {
            count: 5,
            ..FuzzCampaign::default()
        };
        for case in camp.cases() {
            let back: FuzzCase = case.to_string().parse().unwrap();
            assert_eq!(back, case);
        }
        let empty = fuzz(&FuzzCampaign {
            count: 0,
            ..FuzzCampaign::default()
        });
        assert_eq!(empty.runs, 0);
    }

    #[test]
    fn empty_sweep() {
        let plan = SweepPlan {
            shape: ShapeKind::Linear,
            ns: vec![11],
            reps: 0,
            base_seed: 0,
            heights: None,
            options: RunOptions::default(),
        };
        assert!(sweep(&plan).unwrap().is_empty());
        assert!(aggregate(&[]).is_empty());
    }
}
