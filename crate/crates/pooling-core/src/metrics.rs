//! Run metrics and parameter sweeps.
//!
//! A sweep runs a policy set over a grid of (window, seed) cells with paired
//! seeds, so every policy sees the same instances and differences are purely
//! behavioral. Cells and seeds may execute concurrently; aggregation
//! consumes task outputs in task order, so the report is byte-identical
//! however the work was scheduled. All randomness is seeded: seed `k` of a
//! cell is `base_seed + k`, and the instances that train an AD price table
//! come from the disjoint stream `base_seed + 1_000_000 + i`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::engine::{simulate, MatchingOutcome, SimOptions};
use crate::error::invalid;
use crate::instance::{
    gen_2d_common_origin, gen_2d_heterogeneous, gen_beta_1d, gen_uniform_1d, CriticalityModel,
    Instance,
};
use crate::offline::{opt_matching, OptMode};
use crate::policies::{
    build_price_table, enclosing_bounds, make_ad, make_gre, make_hd, make_pb, BatchMode,
    BatchPolicy, CellScheme, Policy, PriceAdjustment, PriceSource, PriceTable, DEFAULT_ONE_D_CELLS,
};
use crate::topology::{solo_distance, TopologyId};
use crate::Result;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Headline numbers for one run against the hindsight optimum.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunMetrics {
    pub total_reward: f64,
    pub opt_value: f64,
    /// `opt_value - total_reward`.
    pub regret: f64,
    /// `total_reward / opt_value`, defined as 1 when the optimum is zero.
    pub ratio: f64,
    /// Fraction of jobs dispatched in a pair.
    pub match_rate: f64,
    /// Pooling reward over the summed solo costs. `None` for topologies
    /// without a solo cost, or when that sum is zero. Never exceeds 1/2.
    pub saving_fraction: Option<f64>,
}

/// Metrics for a completed run.
pub fn run_metrics(
    inst: &Instance,
    outcome: &MatchingOutcome,
    opt_value: f64,
) -> Result<RunMetrics> {
    metrics_from_parts(
        inst,
        outcome.total_reward,
        outcome.matched_jobs(),
        opt_value,
    )
}

/// Metrics from the raw ingredients; also prices the hindsight optimum
/// itself as a pseudo-policy (`total_reward = opt_value`).
pub fn metrics_from_parts(
    inst: &Instance,
    total_reward: f64,
    matched_jobs: usize,
    opt_value: f64,
) -> Result<RunMetrics> {
    if !total_reward.is_finite() || !opt_value.is_finite() {
        return Err(invalid("metrics need finite reward and optimum"));
    }
    if !matched_jobs.is_multiple_of(2) || matched_jobs > inst.n() {
        return Err(invalid(format!(
            "{matched_jobs} matched jobs is not a pairing of n = {}",
            inst.n()
        )));
    }
    let ratio = if opt_value > 0.0 {
        total_reward / opt_value
    } else {
        1.0
    };
    Ok(RunMetrics {
        total_reward,
        opt_value,
        regret: opt_value - total_reward,
        ratio,
        match_rate: matched_jobs as f64 / inst.n() as f64,
        saving_fraction: saving_fraction(inst, total_reward)?,
    })
}

fn saving_fraction(inst: &Instance, total_reward: f64) -> Result<Option<f64>> {
    let mut solo_sum = 0.0;
    for a in inst.arrivals() {
        match solo_distance(inst.topology(), a.job)? {
            Some(cost) => solo_sum += cost,
            None => return Ok(None),
        }
    }
    if solo_sum > 0.0 {
        Ok(Some(total_reward / solo_sum))
    } else {
        Ok(None)
    }
}

/// Which random family a sweep draws from.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GeneratorSpec {
    Uniform1d,
    Beta1d { alpha: f64, beta: f64 },
    TwoDCommonOrigin,
    TwoDHeterogeneous,
}

impl GeneratorSpec {
    fn default_topology(&self) -> TopologyId {
        match self {
            GeneratorSpec::Uniform1d | GeneratorSpec::Beta1d { .. } => TopologyId::MinCommonOrigin,
            GeneratorSpec::TwoDCommonOrigin | GeneratorSpec::TwoDHeterogeneous => {
                TopologyId::Pool2D
            }
        }
    }

    /// Draws one instance from this family under a count window `d`.
    pub fn synth(&self, n: usize, d: usize, seed: u64) -> Result<Instance> {
        match *self {
            GeneratorSpec::Uniform1d => gen_uniform_1d(n, d, seed),
            GeneratorSpec::Beta1d { alpha, beta } => gen_beta_1d(n, d, alpha, beta, seed),
            GeneratorSpec::TwoDCommonOrigin => gen_2d_common_origin(n, d, seed),
            GeneratorSpec::TwoDHeterogeneous => gen_2d_heterogeneous(n, d, seed),
        }
    }
}

/// One sweep cell: a count-window density or a time window (the latter gets
/// unit-spaced synthetic timestamps).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CellParam {
    Density(usize),
    Window(f64),
}

impl CellParam {
    fn as_f64(&self) -> f64 {
        match *self {
            CellParam::Density(d) => d as f64,
            CellParam::Window(w) => w,
        }
    }
}

/// A policy to sweep. Batch gammas of `None` mean unadjusted; `Some(g)`
/// discounts by potentials. AD resolution defaults to 100 one-dimensional
/// cells or grid level 4.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PolicySpec {
    Pb,
    Gre,
    Hd,
    Ad {
        train: usize,
        cells: Option<usize>,
        level: Option<u32>,
    },
    Bat {
        gamma: Option<f64>,
    },
    Rbat {
        gamma: Option<f64>,
    },
    Prbat {
        period: f64,
        gamma: Option<f64>,
    },
}

impl PolicySpec {
    /// Row label in reports.
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Pb => "pb",
            PolicySpec::Gre => "gre",
            PolicySpec::Hd => "hd",
            PolicySpec::Ad { .. } => "ad",
            PolicySpec::Bat { .. } => "bat",
            PolicySpec::Rbat { .. } => "rbat",
            PolicySpec::Prbat { .. } => "prbat",
        }
    }

    fn batch(mode: BatchMode, gamma: Option<f64>) -> Policy {
        Policy::Batch(BatchPolicy {
            mode,
            adjustment: gamma.map(|gamma| PriceAdjustment {
                source: PriceSource::Potential,
                gamma,
            }),
        })
    }
}

/// Sweep definition. `cells x seeds` instances are generated; every policy
/// (plus the hindsight optimum, when `include_opt`) runs on each.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SweepConfig {
    pub generator: GeneratorSpec,
    /// Overrides the generator's natural topology (same dimensionality).
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub topology: Option<TopologyId>,
    pub n: usize,
    pub cells: Vec<CellParam>,
    pub base_seed: u64,
    pub seeds: usize,
    pub policies: Vec<PolicySpec>,
    pub include_opt: bool,
}

impl SweepConfig {
    fn topology(&self) -> TopologyId {
        self.topology.unwrap_or(self.generator.default_topology())
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("sweep needs n >= 1"));
        }
        if self.cells.is_empty() || self.seeds == 0 || self.policies.is_empty() {
            return Err(invalid("sweep needs cells, seeds, and policies"));
        }
        let mut names: Vec<&str> = self.policies.iter().map(|p| p.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate policy in sweep"));
        }
        if self.topology().is_one_dimensional()
            != self.generator.default_topology().is_one_dimensional()
        {
            return Err(invalid("topology override changes dimensionality"));
        }
        for cell in &self.cells {
            match *cell {
                CellParam::Density(d) => {
                    if d == 0 {
                        return Err(invalid("density cells need d >= 1"));
                    }
                }
                CellParam::Window(w) => {
                    if w <= 0.0 || !w.is_finite() {
                        return Err(invalid("window cells must be positive and finite"));
                    }
                }
            }
        }
        for p in &self.policies {
            match *p {
                PolicySpec::Ad { train, .. } => {
                    if train == 0 {
                        return Err(invalid("ad needs at least one training instance"));
                    }
                }
                PolicySpec::Prbat { .. }
                    if self
                        .cells
                        .iter()
                        .any(|c| matches!(c, CellParam::Density(_))) =>
                {
                    return Err(invalid("prbat sweeps need window cells"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn instance(&self, cell: usize, seed: u64) -> Result<Instance> {
        let inst = match self.cells[cell] {
            CellParam::Density(d) => self.generator.synth(self.n, d, seed)?,
            CellParam::Window(w) => self
                .generator
                .synth(self.n, self.n, seed)?
                .with_unit_timestamps()
                .rewindow(CriticalityModel::TimeWindow { w })?,
        };
        match self.topology {
            Some(t) if t != inst.topology() => inst.retopologize(t),
            _ => Ok(inst),
        }
    }
}

/// A validated sweep with its AD price tables prebuilt.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    config: SweepConfig,
    /// `(cell index, policy index) -> table` for AD policies.
    tables: BTreeMap<(usize, usize), PriceTable>,
}

/// One unit of sweep work: a (cell, seed) index pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepTask {
    pub cell: usize,
    pub seed: usize,
}

/// Metrics for every policy on one instance.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TaskOutput {
    pub cell: usize,
    pub seed: usize,
    pub rows: Vec<(String, RunMetrics)>,
}

/// One aggregate in the tidy report.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SweepRow {
    pub policy: String,
    pub density_or_window: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

/// Tidy sweep aggregates, one row per (policy, cell, metric).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

const METRICS: [&str; 5] = [
    "total_reward",
    "regret",
    "ratio",
    "match_rate",
    "saving_fraction",
];

fn metric_value(m: &RunMetrics, name: &str) -> Option<f64> {
    match name {
        "total_reward" => Some(m.total_reward),
        "regret" => Some(m.regret),
        "ratio" => Some(m.ratio),
        "match_rate" => Some(m.match_rate),
        "saving_fraction" => m.saving_fraction,
        _ => None,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// Validates the config and trains any AD tables.
pub fn prepare_sweep(config: SweepConfig) -> Result<SweepPlan> {
    config.validate()?;
    let mut tables = BTreeMap::new();
    for (pi, p) in config.policies.iter().enumerate() {
        let PolicySpec::Ad {
            train,
            cells,
            level,
        } = *p
        else {
            continue;
        };
        for ci in 0..config.cells.len() {
            let history: Vec<Instance> = (0..train)
                .map(|i| config.instance(ci, config.base_seed.wrapping_add(1_000_000 + i as u64)))
                .collect::<Result<_>>()?;
            let scheme = if config.topology().is_one_dimensional() {
                CellScheme::OneDUniform {
                    cells: cells.unwrap_or(DEFAULT_ONE_D_CELLS),
                }
            } else {
                CellScheme::TwoDGrid {
                    level: level.unwrap_or(4),
                    bounds: enclosing_bounds(&history)?,
                }
            };
            tables.insert((ci, pi), build_price_table(&history, scheme)?);
        }
    }
    Ok(SweepPlan { config, tables })
}

impl SweepPlan {
    pub fn config(&self) -> &SweepConfig {
        &self.config
    }

    /// All (cell, seed) tasks, cell-major. Aggregation expects outputs in
    /// exactly this order.
    pub fn tasks(&self) -> Vec<SweepTask> {
        let mut out = Vec::with_capacity(self.config.cells.len() * self.config.seeds);
        for cell in 0..self.config.cells.len() {
            for seed in 0..self.config.seeds {
                out.push(SweepTask { cell, seed });
            }
        }
        out
    }

    /// Runs every policy on the task's instance. Pure; safe to call from
    /// worker threads.
    pub fn run_task(&self, task: &SweepTask) -> Result<TaskOutput> {
        let config = &self.config;
        let inst = config.instance(task.cell, config.base_seed.wrapping_add(task.seed as u64))?;
        let topology = inst.topology();
        let opts = SimOptions {
            record_trace: false,
            ..SimOptions::for_topology(topology)
        };
        let opt = opt_matching(&inst, OptMode::Blossom)?;
        let mut rows = Vec::with_capacity(config.policies.len() + 1);
        for (pi, spec) in config.policies.iter().enumerate() {
            let policy = match *spec {
                PolicySpec::Pb => make_pb(topology),
                PolicySpec::Gre => make_gre(topology),
                PolicySpec::Hd => make_hd(&inst)?,
                PolicySpec::Ad { .. } => {
                    let table = self.tables[&(task.cell, pi)].clone();
                    make_ad(topology, table)
                }
                PolicySpec::Bat { gamma } => PolicySpec::batch(BatchMode::Full, gamma),
                PolicySpec::Rbat { gamma } => PolicySpec::batch(BatchMode::Rolling, gamma),
                PolicySpec::Prbat { period, gamma } => {
                    PolicySpec::batch(BatchMode::Periodic { period }, gamma)
                }
            };
            let outcome = simulate(&inst, &policy, &opts)?;
            rows.push((
                spec.name().to_string(),
                run_metrics(&inst, &outcome, opt.value)?,
            ));
        }
        if config.include_opt {
            rows.push((
                "opt".to_string(),
                metrics_from_parts(&inst, opt.value, 2 * opt.pairs.len(), opt.value)?,
            ));
        }
        Ok(TaskOutput {
            cell: task.cell,
            seed: task.seed,
            rows,
        })
    }

    /// Folds task outputs (in task order) into the tidy report.
    pub fn aggregate(&self, outputs: &[TaskOutput]) -> Result<SweepReport> {
        let tasks = self.tasks();
        if outputs.len() != tasks.len() {
            return Err(invalid(format!(
                "expected {} task outputs, got {}",
                tasks.len(),
                outputs.len()
            )));
        }
        for (t, o) in tasks.iter().zip(outputs) {
            if (o.cell, o.seed) != (t.cell, t.seed) {
                return Err(invalid("task outputs are out of order"));
            }
        }
        let mut names: Vec<String> = self
            .config
            .policies
            .iter()
            .map(|p| p.name().to_string())
            .collect();
        if self.config.include_opt {
            names.push("opt".to_string());
        }
        let mut rows = Vec::new();
        for (ci, cell) in self.config.cells.iter().enumerate() {
            for name in &names {
                for metric in METRICS {
                    let mut xs = Vec::with_capacity(self.config.seeds);
                    for o in outputs.iter().filter(|o| o.cell == ci) {
                        let m = o
                            .rows
                            .iter()
                            .find(|(n, _)| n == name)
                            .map(|(_, m)| m)
                            .ok_or_else(|| invalid(format!("missing {name} in task output")))?;
                        if let Some(x) = metric_value(m, metric) {
                            xs.push(x);
                        }
                    }
                    if xs.is_empty() {
                        continue;
                    }
                    let (mean, std) = mean_std(&xs);
                    rows.push(SweepRow {
                        policy: name.clone(),
                        density_or_window: cell.as_f64(),
                        metric: metric.to_string(),
                        mean,
                        std,
                        n_seeds: xs.len(),
                    });
                }
            }
        }
        Ok(SweepReport { rows })
    }

    /// Sequential reference runner.
    pub fn run(&self) -> Result<SweepReport> {
        let outputs: Vec<TaskOutput> = self
            .tasks()
            .iter()
            .map(|t| self.run_task(t))
            .collect::<Result<_>>()?;
        self.aggregate(&outputs)
    }
}
