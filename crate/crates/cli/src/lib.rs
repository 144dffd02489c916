//! Command-line front end: `run`, `sweep`, `lowerbound` and `fuzz`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use treeswap::engine::{self, AggregateRow, FuzzCampaign, FuzzCase, SweepPlan, SweepRow};
use treeswap::{
    Alpha, CheckLevel, Configuration, GeneratorSpec, HeightPolicy, NodeId, RunMetrics, RunOptions,
    RunStatus, SchedulerKind, Shape, ShapeKind,
};

const EXIT_USAGE: u8 = 2;
const EXIT_VIOLATION: u8 = 3;
const EXIT_CAP: u8 = 4;

/// Column order of the per-run CSV.
const COLUMNS: [&str; 14] = [
    "n",
    "alpha",
    "scheduler",
    "tree_kind",
    "seed",
    "h_i",
    "h_f",
    "steps",
    "rounds",
    "phase1_rounds",
    "phase2_rounds",
    "height_updates",
    "swaps",
    "status",
];

#[derive(Parser)]
#[command(
    name = "treeswap",
    version,
    about = "Self-stabilizing tree balancing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and print its metrics.
    Run(RunArgs),
    /// Run many generated configurations and emit one CSV row per run.
    Sweep(SweepArgs),
    /// Run the lower-bound family under the synchronous daemon.
    Lowerbound(LowerboundArgs),
    /// Randomized invariant audit.
    Fuzz(FuzzArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    None,
    Step,
    Round,
}

impl From<Check> for CheckLevel {
    fn from(c: Check) -> Self {
        match c {
            Check::None => CheckLevel::None,
            Check::Step => CheckLevel::Step,
            Check::Round => CheckLevel::Round,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// sync, central, random:<p>[:<seed>] or script:<file>
    #[arg(long, default_value = "sync")]
    scheduler: String,
    #[arg(long, default_value_t = 1)]
    alpha: i64,
    /// Default seed for random daemons.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step cap; defaults to 50·n².
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, value_enum, default_value = "step")]
    check: Check,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// linear:<n>, lowerbound:<n>, random:<n>[:<seed>] or file:<path>
    #[arg(long)]
    tree: String,
    /// exact, zero or uniform:<lo>:<hi>[:<seed>]
    #[arg(long, default_value = "exact")]
    heights: String,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Abort at the first hard violation.
    #[arg(long)]
    strict: bool,
    /// Write a JSON-lines trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = ["linear", "lowerbound", "random"], default_value = "linear")]
    tree: String,
    /// Comma-separated sizes.
    #[arg(long, value_delimiter = ',', default_value = "11")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    /// Height policy; by default uniform in [0, n] with a per-run seed.
    #[arg(long)]
    heights: Option<String>,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Emit per-n statistics of t − (h_i + h_f) instead of per-run rows.
    #[arg(long)]
    aggregate: bool,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(long, value_delimiter = ',', default_value = "5,9,21,101")]
    n: Vec<usize>,
    #[arg(long, value_enum, default_value = "step")]
    check: Check,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 1000)]
    count: u64,
    #[arg(long, default_value_t = 3)]
    min_n: usize,
    #[arg(long, default_value_t = 201)]
    max_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    alpha: i64,
    /// Comma-separated daemons.
    #[arg(long, value_delimiter = ',', default_value = "sync,central,random:0.5")]
    schedulers: Vec<String>,
    /// Fixed height range <lo>:<hi>; by default [-n, n].
    #[arg(long)]
    heights: Option<String>,
    #[arg(long, value_enum, default_value = "round")]
    check: Check,
    /// Re-run one case from its token and print its metrics.
    #[arg(long)]
    replay: Option<String>,
    /// Trace file for --replay.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first) and executes the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let mut io = Io { stdout, stderr };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, &mut io),
        Command::Sweep(a) => cmd_sweep(a, &mut io),
        Command::Lowerbound(a) => cmd_lowerbound(a, &mut io),
        Command::Fuzz(a) => cmd_fuzz(a, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

struct Io<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Io<'_> {
    /// Sends a finished report to `path`, or to stdout.
    fn emit(&mut self, path: Option<&Path>, bytes: &[u8]) -> Result<()> {
        match path {
            Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
            None => {
                self.stdout.write_all(bytes)?;
                Ok(self.stdout.flush()?)
            }
        }
    }
}

fn parse_scheduler(s: &str, seed: u64) -> Result<SchedulerKind> {
    if let Some(path) = s.strip_prefix("script:") {
        let text =
            fs::read_to_string(path).with_context(|| format!("cannot read script {path}"))?;
        let raw: Vec<Vec<u64>> = serde_json::from_str(&text)
            .with_context(|| format!("script {path} is not a JSON list of id lists"))?;
        let script = raw
            .into_iter()
            .map(|step| step.into_iter().map(NodeId).collect())
            .collect();
        return Ok(SchedulerKind::Scripted(script));
    }
    Ok(SchedulerKind::parse_with_seed(s, seed)?)
}

fn options(common: &Common, strict: bool, trace: bool) -> Result<RunOptions> {
    Ok(RunOptions {
        alpha: Alpha::new(common.alpha)?,
        scheduler: parse_scheduler(&common.scheduler, common.seed)?,
        max_steps: common.max_steps,
        check_level: common.check.into(),
        strict,
        trace,
    })
}

fn load_tree(tree: &str, heights: &str) -> Result<(Configuration, String)> {
    let policy: HeightPolicy = heights.parse()?;
    if let Some(path) = tree.strip_prefix("file:") {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {path}"))?;
        let mut cfg =
            Configuration::from_json(&text).with_context(|| format!("invalid tree file {path}"))?;
        treeswap::generators::apply_heights(&mut cfg, policy)?;
        return Ok((cfg, format!("file/{heights}")));
    }
    let spec = GeneratorSpec {
        shape: tree.parse::<Shape>()?,
        heights: policy,
    };
    Ok((spec.build()?, format!("{}/{}", spec.shape, spec.heights)))
}

fn exit_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Ok => 0,
        RunStatus::Violation => EXIT_VIOLATION,
        RunStatus::CapExceeded => EXIT_CAP,
    }
}

fn summary(m: &RunMetrics) -> String {
    let mut s = format!(
        "status {}\nn {}\nh_i {}\nh_f {}\nsteps {}\nrounds {} (phase 1: {}, phase 2: {})\nheight updates {}\nswaps {}\n",
        m.status, m.n, m.h_i, m.h_f, m.steps, m.rounds, m.phase1_rounds, m.phase2_rounds,
        m.height_updates, m.swaps
    );
    if let Some(ok) = m.within_height_bound {
        s += &format!("within height bound {ok}\n");
    }
    s += &format!("{} violations\n", m.hard_violations().count());
    for v in &m.violations {
        let class = if v.rule.is_conjecture() {
            "conjecture-violation"
        } else {
            "violation"
        };
        s += &format!("{class} step {} {}: {}\n", v.step, v.rule, v.detail);
    }
    s
}

fn row(m: &RunMetrics, opts: &RunOptions, tree_kind: &str, seed: u64) -> SweepRow {
    SweepRow {
        n: m.n,
        alpha: opts.alpha.get(),
        scheduler: opts.scheduler.label(),
        tree_kind: tree_kind.to_string(),
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
    }
}

fn write_rows(out: impl Write, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_aggregate(out: impl Write, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(a: RunArgs, io: &mut Io) -> Result<u8> {
    let (cfg, generator) = load_tree(&a.tree, &a.heights)?;
    let opts = options(&a.common, a.strict, a.trace.is_some())?;
    let report = engine::run(cfg, &opts)?;
    let m = &report.metrics;
    if let (Some(path), Some(trace)) = (&a.trace, &report.trace) {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        engine::write_trace(BufWriter::new(f), &generator, &opts, trace, m)?;
    }
    let mut out = Vec::new();
    match a.format {
        Format::Text => write!(out, "{}", summary(m))?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(m)?)?,
        Format::Csv => {
            let kind = a.tree.split(':').next().unwrap_or("file");
            write_rows(&mut out, &[row(m, &opts, kind, a.common.seed)])?
        }
    }
    io.emit(a.common.out.as_deref(), &out)?;
    Ok(exit_code(m.status))
}

fn worst(statuses: impl Iterator<Item = RunStatus>) -> u8 {
    statuses.map(exit_code).max().unwrap_or(0)
}

fn cmd_sweep(a: SweepArgs, io: &mut Io) -> Result<u8> {
    let heights = a.heights.as_deref().map(str::parse).transpose()?;
    let plan = SweepPlan {
        shape: a.tree.parse::<ShapeKind>()?,
        ns: a.n.clone(),
        reps: a.reps,
        base_seed: a.common.seed,
        heights,
        options: options(&a.common, false, false)?,
    };
    let rows = engine::sweep(&plan)?;
    let mut out = Vec::new();
    if a.aggregate {
        let agg = engine::aggregate(&rows);
        match a.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&agg)?)?,
            _ => write_aggregate(&mut out, &agg)?,
        }
    } else {
        match a.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
            _ => write_rows(&mut out, &rows)?,
        }
    }
    io.emit(a.common.out.as_deref(), &out)?;
    let status = |s: &str| match s {
        "cap_exceeded" => RunStatus::CapExceeded,
        "violation" => RunStatus::Violation,
        _ => RunStatus::Ok,
    };
    Ok(worst(rows.iter().map(|r| status(&r.status))))
}

fn cmd_lowerbound(a: LowerboundArgs, io: &mut Io) -> Result<u8> {
    let opts = RunOptions {
        check_level: a.check.into(),
        ..RunOptions::default()
    };
    let mut rows = Vec::new();
    let mut code = 0;
    for &n in &a.n {
        let cfg = treeswap::generators::lower_bound_family(n)?;
        let m = engine::run(cfg, &opts)?.metrics;
        let need = n.div_ceil(2) as u64;
        if m.rounds < need {
            writeln!(
                io.stderr,
                "n={n}: {} rounds, expected at least {need}",
                m.rounds
            )?;
            code = code.max(EXIT_VIOLATION);
        }
        code = code.max(exit_code(m.status));
        rows.push(row(&m, &opts, "lowerbound", 0));
    }
    let mut out = Vec::new();
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
        _ => write_rows(&mut out, &rows)?,
    }
    io.emit(a.out.as_deref(), &out)?;
    Ok(code)
}

fn cmd_fuzz(a: FuzzArgs, io: &mut Io) -> Result<u8> {
    let check: CheckLevel = a.check.into();
    if let Some(token) = &a.replay {
        let case: FuzzCase = token.parse()?;
        let report = case.run(check, a.trace.is_some())?;
        let m = &report.metrics;
        if let (Some(path), Some(trace)) = (&a.trace, &report.trace) {
            let f =
                File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let opts = case.options(check, true);
            engine::write_trace(BufWriter::new(f), token, &opts, trace, m)?;
        }
        let mut out = Vec::new();
        match a.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(m)?)?,
            _ => write!(out, "case {token}\n{}", summary(m))?,
        }
        io.emit(a.out.as_deref(), &out)?;
        return Ok(exit_code(m.status));
    }

    let height_range = match &a.heights {
        None => None,
        Some(s) => {
            let Some((lo, hi)) = s.split_once(':') else {
                bail!("--heights expects <lo>:<hi>, got {s}");
            };
            let (lo, hi): (i64, i64) = (lo.parse()?, hi.parse()?);
            if lo > hi {
                bail!("empty height range {s}");
            }
            Some((lo, hi))
        }
    };
    if a.min_n > a.max_n {
        bail!("--min-n exceeds --max-n");
    }
    let schedulers = a
        .schedulers
        .iter()
        .map(|s| parse_scheduler(s, a.seed))
        .collect::<Result<Vec<_>>>()?;
    let campaign = FuzzCampaign {
        count: a.count,
        min_n: a.min_n,
        max_n: a.max_n,
        schedulers,
        height_range,
        master_seed: a.seed,
        check_level: check,
        alpha: Alpha::new(a.alpha)?,
    };
    let report = engine::fuzz(&campaign);
    let mut out = Vec::new();
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        _ => {
            writeln!(out, "{} runs", report.runs)?;
            writeln!(out, "{} violations", report.hard_findings)?;
            writeln!(out, "{} conjecture-violations", report.conjecture_findings)?;
            writeln!(out, "{} cap hits", report.cap_hits)?;
            writeln!(out, "max phase1_rounds/n {:.3}", report.max_phase1_ratio)?;
            writeln!(out, "max phase2_rounds/n {:.3}", report.max_phase2_ratio)?;
            for o in report.findings() {
                let what = o.error.clone().unwrap_or_else(|| o.status.clone());
                writeln!(out, "finding {what}: --replay {}", o.case)?;
            }
            for o in report
                .outcomes
                .iter()
                .filter(|o| !o.conjecture_violations.is_empty())
            {
                writeln!(out, "conjecture-violation: --replay {}", o.case)?;
            }
        }
    }
    io.emit(a.out.as_deref(), &out)?;
    Ok(if report.hard_findings > 0 {
        EXIT_VIOLATION
    } else {
        0
    })
}
