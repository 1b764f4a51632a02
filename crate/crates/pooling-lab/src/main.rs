//! Command-line workbench for the pooling simulator.
//!
//! Exit codes: 2 for usage problems, 3 for unreadable or malformed data,
//! 4 for numeric failures, 1 when verification finds a violated bound.
//! Data goes to stdout or the requested files; progress and warnings go to
//! stderr. Identical flags and files produce byte-identical outputs.

mod formats;
mod ingest;
mod sweep;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pooling_core::engine::{simulate, SimOptions};
use pooling_core::instance::{
    adversarial_any_index_offline, adversarial_gre_offline, adversarial_gre_online,
    adversarial_pb_offline, adversarial_pb_online, adversarial_reward_c_online,
    gen_2d_common_origin, gen_2d_heterogeneous, gen_beta_1d, gen_uniform_1d, CriticalityModel,
    Instance,
};
use pooling_core::metrics::{run_metrics, GeneratorSpec, SweepConfig};
use pooling_core::offline::{lp_relaxation, opt_matching, OptMode};
use pooling_core::policies::{
    build_price_table, default_gamma_grid, enclosing_bounds, make_ad, make_gre, make_hd, make_pb,
    tune_gamma, BatchMode, BatchPolicy, CellScheme, Policy, PriceAdjustment, PriceSource,
    DEFAULT_ONE_D_CELLS,
};
use pooling_core::topology::TopologyId;
use pooling_core::verify::{
    check_laminar, check_lower_bound_constructions, check_marginal_concentration,
    check_ml_mg_identity, check_offline_pb_bound, check_online_pb_bound, check_remarks, BoundCheck,
};

use formats::{
    load_instance, load_table, out_path, write_json, write_sweep_csv, write_trace, DualsFile,
    InstanceFile, MetricsFile, ScoreRow, SweepFile, TableFile, TuneFile, VerifyFile, VerifyRow,
    VERSION,
};
use ingest::{detect_projection, ingest_orders_csv, PlanarProjection};

#[derive(Parser)]
#[command(
    name = "pooling-lab",
    version,
    about = "Dynamic delivery pooling workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file from a generator or adversarial constructor
    Gen(GenArgs),
    /// Simulate one policy on an instance and report metrics against OPT
    Run(RunArgs),
    /// Run a policy grid over cells and paired seeds, aggregating metrics
    Sweep(SweepArgs),
    /// Hindsight LP shadow prices, per job or averaged into a price table
    Duals(DualsArgs),
    /// Score a gamma grid on training instances and pick the best
    TuneGamma(TuneArgs),
    /// Run bound and identity checks; nonzero exit on any violation
    Verify(VerifyArgs),
    /// Convert an order CSV into a time-window instance
    Ingest(IngestArgs),
}

/// Usage mistakes that clap cannot catch (flag combinations, kind-specific
/// parameters).
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// A failed verification run; data and flags were fine.
#[derive(Debug)]
struct VerifyFailed;

impl fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed")
    }
}

impl std::error::Error for VerifyFailed {}

fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<VerifyFailed>().is_some() {
        return 1;
    }
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<pooling_core::Error>() {
        Some(pooling_core::Error::InvalidArgument(_)) => 2,
        Some(_) => 4,
        None => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Duals(args) => cmd_duals(args),
        Command::TuneGamma(args) => cmd_tune(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Ingest(args) => cmd_ingest(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}

fn default_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(seed) = explicit {
        return Ok(seed);
    }
    match std::env::var("POOLING_LAB_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| {
            usage(format!(
                "POOLING_LAB_SEED is not an unsigned integer: {v:?}"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn need<T>(value: Option<T>, flag: &str, kind: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("--kind {kind} requires {flag}")))
}

// ---------------------------------------------------------------- gen

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    Uniform1d,
    Beta1d,
    #[value(name = "2d-common-origin")]
    #[serde(rename = "2d-common-origin")]
    TwoDCommonOrigin,
    #[value(name = "2d-heterogeneous")]
    #[serde(rename = "2d-heterogeneous")]
    TwoDHeterogeneous,
    AdversarialGreOffline,
    AdversarialPbOffline,
    AdversarialGreOnline,
    AdversarialPbOnline,
    AdversarialAnyIndexOffline,
    AdversarialRewardCOnline,
}

#[derive(Args, Serialize)]
struct GenArgs {
    /// Generator or constructor family
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Count window; defaults to n for the random generators
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    /// Defaults to POOLING_LAB_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    /// Recursion depth for the doubling constructor
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_c: Option<f64>,
    /// Replace the count window with unit-spaced timestamps and this window
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    time_window: Option<f64>,
    #[arg(short, long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn cmd_gen(mut args: GenArgs) -> Result<()> {
    args.seed = Some(default_seed(args.seed)?);
    let seed = args.seed.unwrap();
    let kind = args.kind;
    let n = args.n;
    let d = |n: usize| args.d.unwrap_or(n);
    let inst = match kind {
        Kind::Uniform1d => {
            let n = need(n, "--n", "uniform1d")?;
            gen_uniform_1d(n, d(n), seed)?
        }
        Kind::Beta1d => {
            let n = need(n, "--n", "beta1d")?;
            gen_beta_1d(
                n,
                d(n),
                need(args.alpha, "--alpha", "beta1d")?,
                need(args.beta, "--beta", "beta1d")?,
                seed,
            )?
        }
        Kind::TwoDCommonOrigin => {
            let n = need(n, "--n", "2d-common-origin")?;
            gen_2d_common_origin(n, d(n), seed)?
        }
        Kind::TwoDHeterogeneous => {
            let n = need(n, "--n", "2d-heterogeneous")?;
            gen_2d_heterogeneous(n, d(n), seed)?
        }
        Kind::AdversarialGreOffline => adversarial_gre_offline(
            need(n, "--n", "adversarial-gre-offline")?,
            need(args.eps, "--eps", "adversarial-gre-offline")?,
        )?,
        Kind::AdversarialPbOffline => {
            adversarial_pb_offline(need(args.k, "--k", "adversarial-pb-offline")?)?
        }
        Kind::AdversarialGreOnline => adversarial_gre_online(
            need(n, "--n", "adversarial-gre-online")?,
            need(args.d, "--d", "adversarial-gre-online")?,
            need(args.eps, "--eps", "adversarial-gre-online")?,
        )?,
        Kind::AdversarialPbOnline => adversarial_pb_online(
            need(n, "--n", "adversarial-pb-online")?,
            need(args.d, "--d", "adversarial-pb-online")?,
        )?,
        Kind::AdversarialAnyIndexOffline => adversarial_any_index_offline(
            need(n, "--n", "adversarial-any-index-offline")?,
            need(args.theta_c, "--theta-c", "adversarial-any-index-offline")?,
            need(args.eps, "--eps", "adversarial-any-index-offline")?,
        )?,
        Kind::AdversarialRewardCOnline => adversarial_reward_c_online(
            need(n, "--n", "adversarial-reward-c-online")?,
            need(args.d, "--d", "adversarial-reward-c-online")?,
            need(args.eps, "--eps", "adversarial-reward-c-online")?,
        )?,
    };
    let inst = match args.time_window {
        Some(w) => inst
            .with_unit_timestamps()
            .rewindow(CriticalityModel::TimeWindow { w })?,
        None => inst,
    };
    let out = args.out.clone();
    write_json(
        out_path(&out),
        &InstanceFile {
            version: VERSION.into(),
            config: serde_json::to_value(&args)?,
            instance: inst,
        },
    )
}

// ---------------------------------------------------------------- run

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyArg {
    Pb,
    Gre,
    Hd,
    Ad,
    Bat,
    Rbat,
    Prbat,
}

impl PolicyArg {
    fn name(self) -> &'static str {
        match self {
            PolicyArg::Pb => "pb",
            PolicyArg::Gre => "gre",
            PolicyArg::Hd => "hd",
            PolicyArg::Ad => "ad",
            PolicyArg::Bat => "bat",
            PolicyArg::Rbat => "rbat",
            PolicyArg::Prbat => "prbat",
        }
    }

    fn is_batch(self) -> bool {
        matches!(self, PolicyArg::Bat | PolicyArg::Rbat | PolicyArg::Prbat)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SourceArg {
    Potential,
    Hd,
    Ad,
}

#[derive(Args, Serialize)]
struct RunArgs {
    #[arg(short = 'i', long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    /// Price discount for batch policies; omitting it disables adjustment
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    /// Price source for adjusted batching (default potential)
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    price: Option<SourceArg>,
    /// Price table file for `--policy ad` or `--price ad`
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    price_table: Option<PathBuf>,
    /// Epoch spacing for prbat
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    period: Option<f64>,
    /// Write the decision trace as JSON lines
    #[arg(long)]
    #[serde(skip)]
    trace: Option<PathBuf>,
    /// Report wall time on stderr
    #[arg(long)]
    #[serde(skip)]
    timings: bool,
    #[arg(short, long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn build_policy(args: &RunArgs, inst: &Instance) -> Result<Policy> {
    let topology = inst.topology();
    if !args.policy.is_batch() {
        for (set, flag) in [
            (args.gamma.is_some(), "--gamma"),
            (args.price.is_some(), "--price"),
            (args.period.is_some(), "--period"),
        ] {
            if set {
                return Err(usage(format!("{flag} applies to batch policies only")));
            }
        }
    }
    match args.policy {
        PolicyArg::Pb => Ok(make_pb(topology)),
        PolicyArg::Gre => Ok(make_gre(topology)),
        PolicyArg::Hd => Ok(make_hd(inst)?),
        PolicyArg::Ad => {
            let path = args
                .price_table
                .as_ref()
                .ok_or_else(|| usage("--policy ad requires --price-table"))?;
            Ok(make_ad(topology, load_table(path)?))
        }
        PolicyArg::Bat | PolicyArg::Rbat | PolicyArg::Prbat => {
            let mode = match args.policy {
                PolicyArg::Bat => BatchMode::Full,
                PolicyArg::Rbat => BatchMode::Rolling,
                _ => BatchMode::Periodic {
                    period: args
                        .period
                        .ok_or_else(|| usage("prbat requires --period"))?,
                },
            };
            if args.policy != PolicyArg::Prbat && args.period.is_some() {
                return Err(usage("--period applies to prbat only"));
            }
            let adjustment = match (args.gamma, args.price) {
                (None, None) => None,
                (None, Some(_)) => return Err(usage("--price requires --gamma")),
                (Some(gamma), price) => {
                    let source = match price.unwrap_or(SourceArg::Potential) {
                        SourceArg::Potential => PriceSource::Potential,
                        SourceArg::Hd => PriceSource::HindsightDuals,
                        SourceArg::Ad => {
                            let path = args
                                .price_table
                                .as_ref()
                                .ok_or_else(|| usage("--price ad requires --price-table"))?;
                            PriceSource::Table(load_table(path)?)
                        }
                    };
                    Some(PriceAdjustment { source, gamma })
                }
            };
            Ok(Policy::Batch(BatchPolicy { mode, adjustment }))
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let inst = load_instance(&args.instance)?;
    let policy = build_policy(&args, &inst)?;
    let opts = SimOptions {
        record_trace: args.trace.is_some(),
        ..SimOptions::for_topology(inst.topology())
    };
    let started = Instant::now();
    let outcome = simulate(&inst, &policy, &opts)?;
    let opt = opt_matching(&inst, OptMode::Blossom)?;
    if args.timings {
        eprintln!(
            "run: n = {}, simulate + opt in {:.3?}",
            inst.n(),
            started.elapsed()
        );
    }
    let metrics = run_metrics(&inst, &outcome, opt.value)?;
    if let Some(path) = &args.trace {
        write_trace(path, &outcome.trace)?;
    }
    let out = args.out.clone();
    write_json(
        out_path(&out),
        &MetricsFile {
            version: VERSION.into(),
            config: serde_json::to_value(&args)?,
            policy: args.policy.name().into(),
            metrics,
        },
    )
}

// ---------------------------------------------------------------- sweep

#[derive(Args)]
struct SweepArgs {
    /// Sweep definition (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for the seed grid
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Tidy CSV output path
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON report path (stdout when omitted)
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Override the configured seed count
    #[arg(long)]
    seeds: Option<usize>,
    /// Override the configured base seed
    #[arg(long)]
    base_seed: Option<u64>,
    /// Override the configured instance size
    #[arg(long)]
    n: Option<usize>,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: SweepConfig = serde_json::from_str(&raw)
        .with_context(|| format!("{} is not a sweep config", args.config.display()))?;
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    if let Some(base) = args.base_seed {
        config.base_seed = base;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    let plan = pooling_core::metrics::prepare_sweep(config.clone())?;
    eprintln!(
        "sweep: {} cells x {} seeds x {} policies, {} worker(s)",
        config.cells.len(),
        config.seeds,
        config.policies.len(),
        args.jobs.max(1)
    );
    let started = Instant::now();
    let report = sweep::run_parallel(&plan, args.jobs)?;
    eprintln!("sweep: done in {:.3?}", started.elapsed());
    if let Some(path) = &args.csv {
        write_sweep_csv(path, &report)?;
    }
    write_json(
        out_path(&args.out),
        &SweepFile {
            version: VERSION.into(),
            config,
            report,
        },
    )
}

// ---------------------------------------------------------------- duals

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RandomKind {
    Uniform1d,
    Beta1d,
    #[value(name = "2d-common-origin")]
    #[serde(rename = "2d-common-origin")]
    TwoDCommonOrigin,
    #[value(name = "2d-heterogeneous")]
    #[serde(rename = "2d-heterogeneous")]
    TwoDHeterogeneous,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Training generator family
    #[arg(long, value_enum)]
    generator: RandomKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    /// Number of training instances
    #[arg(long)]
    train: usize,
    /// Seed of the first training instance; defaults like --seed
    #[arg(long)]
    base_seed: Option<u64>,
}

impl TrainArgs {
    fn spec(&self) -> Result<GeneratorSpec> {
        Ok(match self.generator {
            RandomKind::Uniform1d => GeneratorSpec::Uniform1d,
            RandomKind::Beta1d => GeneratorSpec::Beta1d {
                alpha: self.alpha.ok_or_else(|| usage("beta1d requires --alpha"))?,
                beta: self.beta.ok_or_else(|| usage("beta1d requires --beta"))?,
            },
            RandomKind::TwoDCommonOrigin => GeneratorSpec::TwoDCommonOrigin,
            RandomKind::TwoDHeterogeneous => GeneratorSpec::TwoDHeterogeneous,
        })
    }

    fn instances(&self, time_window: Option<f64>) -> Result<Vec<Instance>> {
        if self.train == 0 {
            return Err(usage("--train must be at least 1"));
        }
        let spec = self.spec()?;
        let base = default_seed(self.base_seed)?;
        (0..self.train)
            .map(|i| {
                let inst = spec.synth(self.n, self.d, base.wrapping_add(i as u64))?;
                match time_window {
                    Some(w) => Ok(inst
                        .with_unit_timestamps()
                        .rewindow(CriticalityModel::TimeWindow { w })?),
                    None => Ok(inst),
                }
            })
            .collect()
    }
}

#[derive(Args, Serialize)]
struct DualsArgs {
    /// Instance to price (per-job mode)
    #[arg(short = 'i', long, conflicts_with = "table")]
    #[serde(skip_serializing_if = "Option::is_none")]
    instance: Option<PathBuf>,
    /// Build a per-cell price table from training instances instead
    #[arg(long)]
    table: bool,
    /// Training generator family (table mode)
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    generator: Option<RandomKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    /// Number of training instances (table mode)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<usize>,
    /// Seed of the first training instance; defaults like --seed
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    base_seed: Option<u64>,
    /// One-dimensional cell count (table mode)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cells: Option<usize>,
    /// Two-dimensional grid level (table mode)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<u32>,
    #[arg(short, long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn cmd_duals(args: DualsArgs) -> Result<()> {
    if args.table {
        let training = TrainArgs {
            generator: args
                .generator
                .ok_or_else(|| usage("--table requires --generator"))?,
            n: args.n.ok_or_else(|| usage("--table requires --n"))?,
            d: args.d.ok_or_else(|| usage("--table requires --d"))?,
            alpha: args.alpha,
            beta: args.beta,
            train: args
                .train
                .ok_or_else(|| usage("--table requires --train"))?,
            base_seed: args.base_seed,
        };
        let history = training.instances(None)?;
        let scheme = if history[0].topology().is_one_dimensional() {
            CellScheme::OneDUniform {
                cells: args.cells.unwrap_or(DEFAULT_ONE_D_CELLS),
            }
        } else {
            CellScheme::TwoDGrid {
                level: args.level.unwrap_or(4),
                bounds: enclosing_bounds(&history)?,
            }
        };
        eprintln!(
            "duals: averaging shadow prices over {} training instances",
            history.len()
        );
        let table = build_price_table(&history, scheme)?;
        let out = args.out.clone();
        return write_json(
            out_path(&out),
            &TableFile {
                version: VERSION.into(),
                config: serde_json::to_value(&args)?,
                table,
            },
        );
    }
    let path = args
        .instance
        .as_ref()
        .ok_or_else(|| usage("provide --instance, or --table with training flags"))?;
    let inst = load_instance(path)?;
    let solution = lp_relaxation(&inst)?;
    let out = args.out.clone();
    write_json(
        out_path(&out),
        &DualsFile {
            version: VERSION.into(),
            config: serde_json::to_value(&args)?,
            objective: solution.value,
            duals: solution.duals,
        },
    )
}

// ---------------------------------------------------------------- tune-gamma

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Bat,
    Rbat,
    Prbat,
}

#[derive(Args, Serialize)]
struct TuneArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Epoch spacing (prbat)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    period: Option<f64>,
    /// Price source being discounted
    #[arg(long, value_enum, default_value = "potential")]
    source: SourceArg,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    price_table: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    training: TrainArgs,
    /// Give training instances unit-spaced timestamps and this window
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    time_window: Option<f64>,
    /// Comma-separated gammas; defaults to 0, 0.1, ..., 1
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<String>,
    #[arg(short, long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let mode = match args.mode {
        ModeArg::Bat => BatchMode::Full,
        ModeArg::Rbat => BatchMode::Rolling,
        ModeArg::Prbat => BatchMode::Periodic {
            period: args
                .period
                .ok_or_else(|| usage("--mode prbat requires --period"))?,
        },
    };
    if args.mode != ModeArg::Prbat && args.period.is_some() {
        return Err(usage("--period applies to prbat only"));
    }
    if args.mode == ModeArg::Prbat && args.time_window.is_none() {
        return Err(usage("--mode prbat requires --time-window"));
    }
    let source = match args.source {
        SourceArg::Potential => PriceSource::Potential,
        SourceArg::Hd => PriceSource::HindsightDuals,
        SourceArg::Ad => {
            let path = args
                .price_table
                .as_ref()
                .ok_or_else(|| usage("--source ad requires --price-table"))?;
            PriceSource::Table(load_table(path)?)
        }
    };
    let grid = match &args.grid {
        Some(raw) => raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("bad gamma {s:?} in --grid")))
            })
            .collect::<Result<Vec<f64>>>()?,
        None => default_gamma_grid(),
    };
    let train = args.training.instances(args.time_window)?;
    eprintln!(
        "tune-gamma: {} gammas x {} training instances",
        grid.len(),
        train.len()
    );
    let opts = SimOptions {
        record_trace: false,
        ..SimOptions::for_topology(train[0].topology())
    };
    let gamma_star = tune_gamma(&train, mode, &source, &grid, &opts)?;
    let mut scores = Vec::with_capacity(grid.len());
    for &gamma in &grid {
        let policy = Policy::Batch(BatchPolicy {
            mode,
            adjustment: Some(PriceAdjustment {
                source: source.clone(),
                gamma,
            }),
        });
        let mut total = 0.0;
        for inst in &train {
            total += simulate(inst, &policy, &opts)?.total_reward;
        }
        scores.push(ScoreRow {
            gamma,
            mean_total_reward: total / train.len() as f64,
        });
    }
    let out = args.out.clone();
    write_json(
        out_path(&out),
        &TuneFile {
            version: VERSION.into(),
            config: serde_json::to_value(&args)?,
            gamma_star,
            scores,
        },
    )
}

// ---------------------------------------------------------------- verify

const CHECK_NAMES: [&str; 7] = [
    "lower-bounds",
    "laminar",
    "offline-bound",
    "online-bound",
    "identity",
    "concentration",
    "remarks",
];

#[derive(Args, Serialize)]
struct VerifyArgs {
    /// Run every check (the default when no --check is given)
    #[arg(long)]
    all: bool,
    /// Run one named check; repeatable
    #[arg(long = "check")]
    checks: Vec<String>,
    /// Base seed for the randomized checks; defaults like --seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn rows_from(checks: &[BoundCheck], instance: &str) -> Vec<VerifyRow> {
    checks
        .iter()
        .map(|c| VerifyRow {
            check: c.name.clone(),
            instance: instance.into(),
            observed: c.observed,
            bound: c.bound,
            pass: c.holds,
            advisory: !c.asserted,
        })
        .collect()
}

fn cmd_verify(mut args: VerifyArgs) -> Result<()> {
    args.seed = Some(default_seed(args.seed)?);
    let base = args.seed.unwrap();
    let selected: Vec<String> = if args.checks.is_empty() {
        CHECK_NAMES.iter().map(|s| (*s).into()).collect()
    } else {
        args.checks.clone()
    };
    for name in &selected {
        if !CHECK_NAMES.contains(&name.as_str()) {
            return Err(usage(format!(
                "unknown check {name:?}; expected one of {}",
                CHECK_NAMES.join(", ")
            )));
        }
    }
    let mco = TopologyId::MinCommonOrigin;
    let mut rows: Vec<VerifyRow> = Vec::new();
    for name in &selected {
        eprintln!("verify: {name}");
        match name.as_str() {
            "lower-bounds" => {
                rows.extend(rows_from(
                    &check_lower_bound_constructions()?,
                    "constructed",
                ));
            }
            "laminar" => {
                for i in 0..20 {
                    let seed = base.wrapping_add(i);
                    let inst = gen_uniform_1d(200, 200, seed)?;
                    let report = check_laminar(&inst, &make_pb(mco))?;
                    rows.extend(rows_from(
                        &report.checks,
                        &format!("uniform1d(n=200,d=200,seed={seed})"),
                    ));
                }
            }
            "offline-bound" => {
                for i in 0..20 {
                    let seed = base.wrapping_add(i);
                    let inst = gen_uniform_1d(200, 200, seed)?;
                    rows.extend(rows_from(
                        &check_offline_pb_bound(&inst)?,
                        &format!("uniform1d(n=200,d=200,seed={seed})"),
                    ));
                }
            }
            "online-bound" => {
                for i in 0..20 {
                    let seed = base.wrapping_add(i);
                    let inst = gen_uniform_1d(200, 10, seed)?;
                    rows.extend(rows_from(
                        &check_online_pb_bound(&inst)?,
                        &format!("uniform1d(n=200,d=10,seed={seed})"),
                    ));
                }
            }
            "identity" => {
                for i in 0..20 {
                    let seed = base.wrapping_add(i);
                    let inst = gen_uniform_1d(50, 50, seed)?;
                    let check = check_ml_mg_identity(&inst)?;
                    rows.extend(rows_from(
                        core::slice::from_ref(&check),
                        &format!("uniform1d(n=50,d=50,seed={seed})"),
                    ));
                }
            }
            "concentration" => {
                let report = check_marginal_concentration(0.5, 1000, 2000, base)?;
                rows.extend(rows_from(
                    &report.checks,
                    &format!("mc(theta1=0.5,n=1000,samples=2000,seed={base})"),
                ));
            }
            "remarks" => {
                for i in 0..20 {
                    let seed = base.wrapping_add(i);
                    let inst = gen_uniform_1d(60, 7, seed)?;
                    let label = format!("uniform1d(n=60,d=7,seed={seed})");
                    let gre = check_remarks(&inst, &make_gre(mco))?;
                    let pb = check_remarks(&inst, &make_pb(mco))?;
                    rows.extend(rows_from(core::slice::from_ref(&gre), &label));
                    rows.extend(rows_from(core::slice::from_ref(&pb), &label));
                }
            }
            _ => unreachable!(),
        }
    }
    let pass = rows.iter().all(|r| r.pass || r.advisory);
    write_json(
        out_path(&args.out.clone()),
        &VerifyFile {
            version: VERSION.into(),
            config: serde_json::to_value(&args)?,
            pass,
            checks: rows,
        },
    )?;
    if pass {
        Ok(())
    } else {
        Err(anyhow::Error::new(VerifyFailed))
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Args, Serialize)]
struct IngestArgs {
    /// Order CSV path
    #[serde(skip)]
    csv: PathBuf,
    /// Dispatch window in the timestamp unit (seconds for epoch/ISO input)
    #[arg(long)]
    window: f64,
    #[arg(short, long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&args.csv)
        .with_context(|| format!("reading {}", args.csv.display()))?;
    let projection = detect_projection(reader.headers()?)?;
    drop(reader);
    let (inst, report) = ingest_orders_csv(&args.csv, args.window, projection)?;
    for warning in &report.warnings {
        eprintln!("ingest: {warning}");
    }
    eprintln!(
        "ingest: kept {} of {} rows ({} warnings), projection {:?}",
        report.rows_kept,
        report.rows_read,
        report.warnings.len(),
        projection
    );
    #[derive(Serialize)]
    struct IngestConfig<'a> {
        source: String,
        window: f64,
        projection: &'a str,
        rows_read: usize,
        rows_kept: usize,
    }
    let config = IngestConfig {
        source: args.csv.display().to_string(),
        window: args.window,
        projection: match projection {
            PlanarProjection::LocalXy => "local-xy",
            PlanarProjection::Equirectangular => "equirectangular",
        },
        rows_read: report.rows_read,
        rows_kept: report.rows_kept,
    };
    write_json(
        out_path(&args.out),
        &InstanceFile {
            version: VERSION.into(),
            config: serde_json::to_value(&config)?,
            instance: inst,
        },
    )
}
