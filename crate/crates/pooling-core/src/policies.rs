//! Matching policies.
//!
//! An index policy scores a candidate partner `k` for the critical job `j` as
//! `q(j, k) = r(theta_j, theta_k) - price(k)` and matches the argmax
//! (ties to the lowest id), or dispatches solo when no candidate exists.
//! The price rule is what distinguishes the family:
//!
//! * `Zero`: plain greedy (GRE).
//! * `Potential`: the closed-form potential `p(theta)` (PB).
//! * `PerJob`: externally supplied per-job prices, e.g. hindsight LP duals (HD).
//! * `PerCell`: a [`PriceTable`] of historical dual averages (AD).
//!
//! Batch policies instead clear a market: `Full` solves every completed batch
//! of `d + 1` arrivals (BAT), `Rolling` re-solves at every criticality but
//! dispatches only the critical job and its match (RBAT), and `Periodic`
//! solves at fixed epochs and dispatches whatever cannot wait for the next
//! one (PRBAT). An optional [`PriceAdjustment`] discounts batch edge weights
//! by `gamma` times the price of each non-critical endpoint, holding jobs
//! back for better partners; recorded rewards stay unadjusted.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{simulate, SimOptions};
use crate::error::invalid;
use crate::instance::Instance;
use crate::offline;
use crate::topology::{potential, JobType, Point2, TopologyId};
use crate::Result;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Either an index rule applied at criticality or a batch-clearing rule.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Policy {
    Index(IndexPolicy),
    Batch(BatchPolicy),
}

/// Index policy: match the critical job to the candidate maximizing
/// `r - price`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IndexPolicy {
    /// Topology the policy was built for; must match the instance.
    pub topology: TopologyId,
    pub price: PriceRule,
}

/// How an index policy prices a candidate partner.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PriceRule {
    Zero,
    Potential,
    /// One price per job id, `prices[j - 1]` for job `j`.
    PerJob(Vec<f64>),
    PerCell(PriceTable),
}

/// Batch policy: solve a maximum-weight matching over the available set at
/// each trigger and dispatch according to the mode.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BatchPolicy {
    pub mode: BatchMode,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub adjustment: Option<PriceAdjustment>,
}

/// When a batch policy clears the market.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BatchMode {
    /// Clear every completed count-window batch of `d + 1` arrivals.
    Full,
    /// Re-solve at every criticality; dispatch the critical job and its
    /// match only.
    Rolling,
    /// Solve at epochs `t_1 + i * period`; dispatch jobs whose deadline
    /// falls before the next epoch, together with their matches. Time
    /// windows only, and `period` must not exceed the window.
    Periodic { period: f64 },
}

/// Discount batch edge weights by `gamma` times each non-critical endpoint's
/// price: `r~ = r - gamma p(j) 1[j not critical] - gamma p(k) 1[k not
/// critical]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PriceAdjustment {
    pub source: PriceSource,
    pub gamma: f64,
}

/// Where a batch adjustment takes its prices from.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PriceSource {
    Potential,
    /// Solve the instance's own LP relaxation and price by its duals.
    HindsightDuals,
    Table(PriceTable),
}

/// Greedy: zero prices.
pub fn make_gre(topology: TopologyId) -> Policy {
    Policy::Index(IndexPolicy {
        topology,
        price: PriceRule::Zero,
    })
}

/// Potential-based: price each candidate at its potential `p(theta)`.
pub fn make_pb(topology: TopologyId) -> Policy {
    Policy::Index(IndexPolicy {
        topology,
        price: PriceRule::Potential,
    })
}

/// Hindsight-dual policy: solve the LP relaxation of `inst` and price each
/// job by its own optimal dual.
pub fn make_hd(inst: &Instance) -> Result<Policy> {
    let lp = offline::lp_relaxation(inst)?;
    Ok(Policy::Index(IndexPolicy {
        topology: inst.topology(),
        price: PriceRule::PerJob(lp.duals),
    }))
}

/// Average-dual policy: price by a table built from historical instances.
pub fn make_ad(topology: TopologyId, table: PriceTable) -> Policy {
    Policy::Index(IndexPolicy {
        topology,
        price: PriceRule::PerCell(table),
    })
}

/// The grid `{0, 0.1, ..., 1}` used to tune batch adjustments.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Picks the `gamma` in `grid` maximizing mean total reward over `train`
/// under the given batch mode and price source. The grid is scanned in the
/// given order and only a strict improvement replaces the incumbent, so ties
/// resolve to the earliest (lowest) value.
pub fn tune_gamma(
    train: &[Instance],
    mode: BatchMode,
    source: &PriceSource,
    grid: &[f64],
    opts: &SimOptions,
) -> Result<f64> {
    if train.is_empty() {
        return Err(invalid("gamma tuning needs at least one training instance"));
    }
    if grid.is_empty() {
        return Err(invalid("gamma grid is empty"));
    }
    let mut best: Option<(f64, f64)> = None;
    for &gamma in grid {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(invalid(format!("gamma {gamma} is not a non-negative real")));
        }
        let policy = Policy::Batch(BatchPolicy {
            mode,
            adjustment: Some(PriceAdjustment {
                source: source.clone(),
                gamma,
            }),
        });
        let mut total = 0.0;
        for inst in train {
            total += simulate(inst, &policy, opts)?.total_reward;
        }
        let mean = total / train.len() as f64;
        if best.is_none_or(|(_, incumbent)| mean > incumbent) {
            best = Some((gamma, mean));
        }
    }
    Ok(best.expect("grid is nonempty").0)
}

/// Per-job prices for an index rule, indexed by `j - 1`.
pub(crate) fn job_prices(inst: &Instance, rule: &PriceRule) -> Result<Vec<f64>> {
    let n = inst.n();
    match rule {
        PriceRule::Zero => Ok(vec![0.0; n]),
        PriceRule::Potential => (1..=n)
            .map(|j| potential(inst.topology(), inst.job_type(j)))
            .collect(),
        PriceRule::PerJob(prices) => {
            if prices.len() != n {
                return Err(invalid(format!(
                    "per-job price rule has {} prices for {} jobs",
                    prices.len(),
                    n
                )));
            }
            if let Some(p) = prices.iter().find(|p| !p.is_finite()) {
                return Err(invalid(format!("per-job price {p} is not finite")));
            }
            Ok(prices.clone())
        }
        PriceRule::PerCell(table) => (1..=n).map(|j| table.price(inst.job_type(j))).collect(),
    }
}

/// Per-job prices for a batch adjustment, indexed by `j - 1`.
pub(crate) fn source_prices(inst: &Instance, source: &PriceSource) -> Result<Vec<f64>> {
    match source {
        PriceSource::Potential => (1..=inst.n())
            .map(|j| potential(inst.topology(), inst.job_type(j)))
            .collect(),
        PriceSource::HindsightDuals => Ok(offline::lp_relaxation(inst)?.duals),
        PriceSource::Table(table) => (1..=inst.n())
            .map(|j| table.price(inst.job_type(j)))
            .collect(),
    }
}

/// Axis-aligned bounding box for 2D cell grids.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GridBounds {
    pub min: Point2,
    pub max: Point2,
}

impl GridBounds {
    fn validate(&self) -> Result<()> {
        for c in [self.min.x, self.min.y, self.max.x, self.max.y] {
            if !c.is_finite() {
                return Err(invalid("grid bounds must be finite"));
            }
        }
        if self.max.x < self.min.x || self.max.y < self.min.y {
            return Err(invalid("grid bounds are inverted"));
        }
        Ok(())
    }
}

/// Smallest box covering every origin and destination in `history`.
pub fn enclosing_bounds(history: &[Instance]) -> Result<GridBounds> {
    let mut bounds: Option<GridBounds> = None;
    for inst in history {
        for a in inst.arrivals() {
            let (origin, dest) = a
                .job
                .trip_2d()
                .ok_or_else(|| invalid("grid bounds need 2D instances"))?;
            for p in [origin, dest] {
                let b = bounds.get_or_insert(GridBounds { min: p, max: p });
                b.min.x = b.min.x.min(p.x);
                b.min.y = b.min.y.min(p.y);
                b.max.x = b.max.x.max(p.x);
                b.max.y = b.max.y.max(p.y);
            }
        }
    }
    bounds.ok_or_else(|| invalid("grid bounds need at least one instance"))
}

/// How job types map to price cells.
///
/// 1D types split `[0,1]` into `cells` equal buckets. 2D trips key on the
/// (origin cell, destination cell) pair of a `2^level x 2^level` grid over
/// `bounds`; points outside clamp to the border cells.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CellScheme {
    OneDUniform { cells: usize },
    TwoDGrid { level: u32, bounds: GridBounds },
}

/// Default bucket count for 1D price tables.
pub const DEFAULT_ONE_D_CELLS: usize = 100;

impl CellScheme {
    fn validate(&self) -> Result<()> {
        match *self {
            CellScheme::OneDUniform { cells } => {
                if cells == 0 || cells > 1 << 20 {
                    return Err(invalid("cell count must be in 1..=2^20"));
                }
            }
            CellScheme::TwoDGrid { level, bounds } => {
                if level > 15 {
                    return Err(invalid("grid level must be at most 15"));
                }
                bounds.validate()?;
            }
        }
        Ok(())
    }

    fn is_one_dimensional(&self) -> bool {
        matches!(self, CellScheme::OneDUniform { .. })
    }

    /// Cell key for a job type, or an error on a dimensionality mismatch.
    fn key(&self, job: JobType) -> Result<u64> {
        match *self {
            CellScheme::OneDUniform { cells } => {
                let v = job
                    .value_1d()
                    .ok_or_else(|| invalid("1D cell scheme queried with a 2D job"))?;
                let idx = ((v * cells as f64) as usize).min(cells - 1);
                Ok(idx as u64)
            }
            CellScheme::TwoDGrid { level, bounds } => {
                let (origin, dest) = job
                    .trip_2d()
                    .ok_or_else(|| invalid("2D cell scheme queried with a 1D job"))?;
                let (ox, oy) = grid_cell(level, bounds, origin);
                let (dx, dy) = grid_cell(level, bounds, dest);
                Ok(ox << 48 | oy << 32 | dx << 16 | dy)
            }
        }
    }

    /// The same scheme one step coarser, if there is one.
    fn coarsen(&self) -> Option<CellScheme> {
        match *self {
            CellScheme::OneDUniform { .. } => None,
            CellScheme::TwoDGrid { level: 0, .. } => None,
            CellScheme::TwoDGrid { level, bounds } => Some(CellScheme::TwoDGrid {
                level: level - 1,
                bounds,
            }),
        }
    }
}

fn grid_cell(level: u32, bounds: GridBounds, p: Point2) -> (u64, u64) {
    let div = 1u64 << level;
    let axis = |x: f64, lo: f64, hi: f64| -> u64 {
        let width = hi - lo;
        if width <= 0.0 {
            return 0;
        }
        let f = libm::floor((x - lo) / width * div as f64);
        if f < 0.0 {
            0
        } else {
            (f as u64).min(div - 1)
        }
    };
    (
        axis(p.x, bounds.min.x, bounds.max.x),
        axis(p.y, bounds.min.y, bounds.max.y),
    )
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
struct PriceLevel {
    scheme: CellScheme,
    /// Mean dual per occupied cell, sorted by key.
    cells: Vec<(u64, f64)>,
}

/// Cell-averaged historical LP duals, with a coarsening fallback chain.
///
/// A query walks the levels finest-first and returns the first occupied
/// cell's mean; a type missing at every level prices at the global mean over
/// every historical dual.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PriceTable {
    levels: Vec<PriceLevel>,
    global: f64,
}

impl PriceTable {
    /// Price for a job type. Errors only when the type's dimensionality does
    /// not match the table's scheme.
    pub fn price(&self, job: JobType) -> Result<f64> {
        for level in &self.levels {
            let key = level.scheme.key(job)?;
            if let Ok(pos) = level.cells.binary_search_by(|(k, _)| k.cmp(&key)) {
                return Ok(level.cells[pos].1);
            }
        }
        Ok(self.global)
    }

    /// True for tables over 1D schemes.
    pub fn is_one_dimensional(&self) -> bool {
        self.levels[0].scheme.is_one_dimensional()
    }
}

/// Builds a [`PriceTable`] by solving each historical instance's LP
/// relaxation and averaging the job duals per cell, at `scheme` and at every
/// coarsening of it.
pub fn build_price_table(history: &[Instance], scheme: CellScheme) -> Result<PriceTable> {
    scheme.validate()?;
    if history.is_empty() {
        return Err(invalid(
            "price table needs at least one historical instance",
        ));
    }
    let mut schemes = vec![scheme];
    while let Some(coarser) = schemes.last().unwrap().coarsen() {
        schemes.push(coarser);
    }
    let mut sums: Vec<BTreeMap<u64, (f64, usize)>> = vec![BTreeMap::new(); schemes.len()];
    let mut global = (0.0, 0usize);
    for inst in history {
        if inst.topology().is_one_dimensional() != scheme.is_one_dimensional() {
            return Err(invalid(format!(
                "cell scheme dimensionality does not match a {} instance",
                inst.topology().name()
            )));
        }
        let lp = offline::lp_relaxation(inst)?;
        for (a, &dual) in inst.arrivals().iter().zip(&lp.duals) {
            for (scheme, acc) in schemes.iter().zip(&mut sums) {
                let cell = acc.entry(scheme.key(a.job)?).or_insert((0.0, 0));
                cell.0 += dual;
                cell.1 += 1;
            }
            global.0 += dual;
            global.1 += 1;
        }
    }
    let levels = schemes
        .into_iter()
        .zip(sums)
        .map(|(scheme, acc)| PriceLevel {
            scheme,
            cells: acc
                .into_iter()
                .map(|(k, (sum, count))| (k, sum / count as f64))
                .collect(),
        })
        .collect();
    Ok(PriceTable {
        levels,
        global: global.0 / global.1 as f64,
    })
}
