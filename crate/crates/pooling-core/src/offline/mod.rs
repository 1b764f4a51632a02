//! Hindsight benchmarks: the exact optimal matching, its linear relaxation
//! with dual prices, and per-job marginal values.
//!
//! Everything here sees the whole instance at once. The online engine never
//! calls into this module; it exists to score policies after the fact.

pub(crate) mod blossom;
mod simplex;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::instance::{Arrival, Instance, JobId};
use crate::topology::{reward, TopologyId};
use crate::Result;

/// A feasible pair and its pooling reward, `a < b`, ids 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: JobId,
    pub b: JobId,
    pub w: f64,
}

/// Which exact solver backs [`opt_matching`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMode {
    /// Blossom algorithm; polynomial, works at any size.
    Blossom,
    /// Exhaustive bitmask dynamic program, capped at 16 jobs. Kept as an
    /// independent oracle for the blossom path.
    BruteForce,
}

/// A hindsight matching: disjoint feasible pairs and their total reward.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingSolution {
    /// Matched pairs `(lo, hi)`, sorted ascending. Jobs absent from every
    /// pair are dispatched solo.
    pub pairs: Vec<(JobId, JobId)>,
    /// Sum of pair rewards; solo jobs contribute zero.
    pub value: f64,
}

/// Marginal effect of one job on the hindsight optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginals {
    /// How much the optimum drops when the job is removed.
    pub loss: f64,
    /// How much the optimum rises when a copy of the job is inserted
    /// directly after it.
    pub gain: f64,
}

/// Relaxation objective and one optimal dual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    /// One optimal dual price per job, indexed by `job - 1`. The dual is
    /// generally not unique; only feasibility and the objective are pinned.
    pub duals: Vec<f64>,
}

/// Exact and relaxed optimum side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralityReport {
    pub ip: f64,
    pub lp: f64,
    /// `ip / lp`, defined as 1 when the relaxation is zero.
    pub ratio: f64,
}

/// Every feasible unordered pair of the instance with its reward.
pub fn feasible_edges(inst: &Instance) -> Result<Vec<Edge>> {
    let n = inst.n();
    let mut edges = Vec::new();
    for j in 1..=n {
        for k in (j + 1)..=n {
            if inst.feasible(j, k) {
                let w = reward(inst.topology(), inst.job_type(j), inst.job_type(k))?;
                edges.push(Edge { a: j, b: k, w });
            }
        }
    }
    Ok(edges)
}

/// Hindsight-optimal matching over the feasible pairs. Where the
/// sorted-pairing shortcut applies, `Blossom` mode uses it instead of the
/// general solver (same value, possibly a different optimal pairing).
pub fn opt_matching(inst: &Instance, mode: OptMode) -> Result<MatchingSolution> {
    if let (OptMode::Blossom, Some(sol)) = (mode, closed_form_matching(inst)) {
        return Ok(sol);
    }
    let edges = feasible_edges(inst)?;
    match mode {
        OptMode::Blossom => blossom_opt(inst.n(), &edges),
        OptMode::BruteForce => brute_force_opt(inst.n(), &edges),
    }
}

/// Hindsight-optimal value. Uses the sorted-pairing shortcut where the
/// topology admits one, otherwise solves the matching exactly.
pub fn opt_value(inst: &Instance) -> Result<f64> {
    if let Some(v) = closed_form_value(inst) {
        return Ok(v);
    }
    Ok(opt_matching(inst, OptMode::Blossom)?.value)
}

/// Under min-common-origin with every pair feasible, the optimum sorts the
/// values descending and pairs them two at a time, collecting each second
/// entry. Returns `None` when the shortcut does not apply.
fn closed_form_value(inst: &Instance) -> Option<f64> {
    sorted_values_offline(inst).map(|sorted| sorted.iter().skip(1).step_by(2).sum())
}

/// The sorted pairing itself, with original ids. Pairs whose reward would be
/// zero are left solo, matching the solver's convention.
fn closed_form_matching(inst: &Instance) -> Option<MatchingSolution> {
    if inst.topology() != TopologyId::MinCommonOrigin || !inst.is_offline() {
        return None;
    }
    let mut jobs: Vec<(f64, JobId)> = (1..=inst.n())
        .map(|j| (inst.job_type(j).value_1d().unwrap_or(0.0), j))
        .collect();
    jobs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut pairs = Vec::new();
    let mut value = 0.0;
    for pair in jobs.chunks_exact(2) {
        let (hi, lo) = (pair[0], pair[1]);
        if lo.0 > 0.0 {
            pairs.push((hi.1.min(lo.1), hi.1.max(lo.1)));
            value += lo.0;
        }
    }
    pairs.sort_unstable();
    Some(MatchingSolution { pairs, value })
}

fn sorted_values_offline(inst: &Instance) -> Option<Vec<f64>> {
    if inst.topology() != TopologyId::MinCommonOrigin || !inst.is_offline() {
        return None;
    }
    let mut values: Vec<f64> = (1..=inst.n())
        .map(|j| inst.job_type(j).value_1d().unwrap_or(0.0))
        .collect();
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    Some(values)
}

fn blossom_opt(n: usize, edges: &[Edge]) -> Result<MatchingSolution> {
    // Zero and negative pairs never help the objective; dropping them up
    // front keeps the matched pair set canonical.
    let positive: Vec<(usize, usize, f64)> = edges
        .iter()
        .filter(|e| e.w > 0.0)
        .map(|e| (e.a - 1, e.b - 1, e.w))
        .collect();
    let mate = blossom::max_weight_matching(n, &positive)?;
    let mut pairs = Vec::new();
    let mut value = 0.0;
    for (v, &m) in mate.iter().enumerate() {
        if m != blossom::UNSET && v < m {
            let (a, b) = (v + 1, m + 1);
            let idx = edges
                .binary_search_by(|e| (e.a, e.b).cmp(&(a, b)))
                .expect("matched pair must be a feasible edge");
            pairs.push((a, b));
            value += edges[idx].w;
        }
    }
    Ok(MatchingSolution { pairs, value })
}

fn brute_force_opt(n: usize, edges: &[Edge]) -> Result<MatchingSolution> {
    if n > 16 {
        return Err(invalid("brute force matching is capped at 16 jobs"));
    }
    // w[j][k] over 0-based ids; NAN marks an infeasible pair.
    let mut w = vec![vec![f64::NAN; n]; n];
    for e in edges {
        w[e.a - 1][e.b - 1] = e.w;
    }

    // best[mask] is the optimal value over the jobs still present in mask.
    // The lowest job in the mask either goes solo or pairs with some k;
    // choice[mask] records the 1-based k, or 0 for solo.
    let full = (1usize << n) - 1;
    let mut best = vec![0.0f64; full + 1];
    let mut choice = vec![0u8; full + 1];
    for mask in 1..=full {
        let j = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << j);
        let mut b = best[rest];
        let mut c = 0u8;
        for k in (j + 1)..n {
            if mask & (1 << k) != 0 && !w[j][k].is_nan() {
                let v = w[j][k] + best[rest & !(1 << k)];
                if v > b {
                    b = v;
                    c = (k + 1) as u8;
                }
            }
        }
        best[mask] = b;
        choice[mask] = c;
    }

    let mut pairs = Vec::new();
    let mut value = 0.0;
    let mut mask = full;
    while mask != 0 {
        let j = mask.trailing_zeros() as usize;
        let c = choice[mask] as usize;
        mask &= !(1 << j);
        if c != 0 {
            pairs.push((j + 1, c));
            value += w[j][c - 1];
            mask &= !(1 << (c - 1));
        }
    }
    Ok(MatchingSolution { pairs, value })
}

/// Marginal loss and gain of job `j`, via the sorted shortcut when the
/// topology admits one and by re-solving otherwise.
pub fn marginals(inst: &Instance, j: JobId) -> Result<Marginals> {
    check_job(inst, j)?;
    if let Some(sorted) = sorted_values_offline(inst) {
        let value = inst.job_type(j).value_1d().unwrap_or(0.0);
        return Ok(marginals_sorted(&sorted, value));
    }
    marginals_definitional(inst, j)
}

/// Marginals straight from the definition: re-solve the instance with job
/// `j` deleted, and again with a copy of `j` inserted directly after it.
pub fn marginals_definitional(inst: &Instance, j: JobId) -> Result<Marginals> {
    check_job(inst, j)?;
    let base = opt_matching(inst, OptMode::Blossom)?.value;
    let without = if inst.n() == 1 {
        0.0
    } else {
        opt_matching(&remove_job(inst, j)?, OptMode::Blossom)?.value
    };
    let with_copy = opt_matching(&duplicate_job(inst, j)?, OptMode::Blossom)?.value;
    Ok(Marginals {
        loss: base - without,
        gain: with_copy - base,
    })
}

fn check_job(inst: &Instance, j: JobId) -> Result<()> {
    if j == 0 || j > inst.n() {
        return Err(invalid("job id out of range"));
    }
    Ok(())
}

/// Sorted-list marginals. With values descending and position `p` of the
/// affected job (1-based, zero-padded past the end), removing the job
/// telescopes the even-position differences from `p` on, and inserting a
/// copy telescopes the odd ones. Ties in position only shift zero terms.
fn marginals_sorted(sorted: &[f64], value: f64) -> Marginals {
    let n = sorted.len();
    let pos = sorted
        .iter()
        .position(|&v| v == value)
        .expect("value taken from the instance")
        + 1;
    let at = |k: usize| if k <= n { sorted[k - 1] } else { 0.0 };
    let mut loss = 0.0;
    let mut gain = 0.0;
    for k in pos..=n {
        let diff = at(k) - at(k + 1);
        if k % 2 == 0 {
            loss += diff;
        } else {
            gain += diff;
        }
    }
    Marginals { loss, gain }
}

fn remove_job(inst: &Instance, j: JobId) -> Result<Instance> {
    let arrivals: Vec<Arrival> = inst
        .arrivals()
        .iter()
        .filter(|a| a.id != j)
        .enumerate()
        .map(|(i, a)| Arrival {
            id: i + 1,
            t: a.t,
            job: a.job,
        })
        .collect();
    Instance::new(inst.topology(), inst.criticality(), arrivals, inst.seed())
}

fn duplicate_job(inst: &Instance, j: JobId) -> Result<Instance> {
    let mut arrivals = Vec::with_capacity(inst.n() + 1);
    for a in inst.arrivals() {
        arrivals.push(*a);
        if a.id == j {
            arrivals.push(*a);
        }
    }
    let arrivals = arrivals
        .into_iter()
        .enumerate()
        .map(|(i, a)| Arrival {
            id: i + 1,
            t: a.t,
            job: a.job,
        })
        .collect();
    Instance::new(inst.topology(), inst.criticality(), arrivals, inst.seed())
}

/// Relaxation of the pairing problem, solved over the same feasible edges
/// as the exact matching.
pub fn lp_relaxation(inst: &Instance) -> Result<LpSolution> {
    let edges = feasible_edges(inst)?;
    let raw: Vec<(usize, usize, f64)> = edges.iter().map(|e| (e.a - 1, e.b - 1, e.w)).collect();
    let out = simplex::solve_matching_lp(inst.n(), &raw)?;
    Ok(LpSolution {
        value: out.value,
        duals: out.duals,
    })
}

/// Exact optimum against its relaxation.
pub fn integrality_report(inst: &Instance) -> Result<IntegralityReport> {
    let ip = opt_matching(inst, OptMode::Blossom)?.value;
    let lp = lp_relaxation(inst)?.value;
    let ratio = if lp <= 0.0 { 1.0 } else { ip / lp };
    Ok(IntegralityReport { ip, lp, ratio })
}
