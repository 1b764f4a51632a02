//! The dispatch engine.
//!
//! `simulate` drives an instance's arrivals, criticalities, and (for periodic
//! batching) decision epochs through a policy, producing the dispatched
//! pairs, solos, total pooling reward, and a decision trace.
//!
//! Count windows follow the arrival clock: at step `t` job `t` arrives, then
//! job `t - d` becomes critical if it is still available, with the trailing
//! criticalities firing in id order after the last arrival. Full batch
//! clears happen on the arrival that completes a batch, before that step's
//! criticality. Time windows run an event queue ordered by (time, class,
//! id) with arrivals before epochs before criticalities at equal times.
//!
//! A critical job under an index policy scans the available set in id order
//! and takes the strict argmax of `r - price`, so ties break to the lowest
//! id. When negative matches are disallowed, candidates with `r < 0` are
//! skipped and batch solves drop those edges; a critical job whose only
//! partners are negative dispatches solo.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::instance::{CriticalityModel, Instance, JobId};
use crate::offline::blossom;
use crate::policies::{job_prices, source_prices, BatchMode, BatchPolicy, IndexPolicy, Policy};
use crate::topology::{reward, JobType, TopologyId};
use crate::{Error, Result};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Tie-break for index policies. Fixed: ties go to the lowest job id.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

/// Knobs shared by every policy.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SimOptions {
    /// Whether a critical job may be pooled at a negative reward. On by
    /// default for the 1D topologies (their rewards are non-negative anyway)
    /// and off for 2D pooling, where a detour can cost more than it saves.
    pub negative_match_allowed: bool,
    pub tiebreak: TieBreak,
    /// Record the decision trace. Sweeps turn this off to save memory.
    pub record_trace: bool,
}

impl SimOptions {
    /// The defaults for a topology; see `negative_match_allowed`.
    pub fn for_topology(topology: TopologyId) -> SimOptions {
        SimOptions {
            negative_match_allowed: topology.is_one_dimensional(),
            tiebreak: TieBreak::LowestIndex,
            record_trace: true,
        }
    }
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            negative_match_allowed: true,
            tiebreak: TieBreak::LowestIndex,
            record_trace: true,
        }
    }
}

/// A dispatched pair. `critical` is the endpoint whose deadline forced the
/// dispatch, when there is one (full clears can fire before any deadline).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PairedDispatch {
    pub a: JobId,
    pub b: JobId,
    pub reward: f64,
    pub critical: Option<JobId>,
}

/// What happened at one criticality.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TraceDecision {
    Match { partner: JobId, reward: f64 },
    Solo,
}

/// What fired a batch clear.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BatchTrigger {
    /// Arrival step that completed a count-window batch.
    Count { step: usize },
    /// Periodic decision epoch.
    Epoch { time: f64 },
}

/// One engine event. `available` snapshots the other available jobs at the
/// moment of decision (for criticalities, excluding the critical job
/// itself), in id order.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TraceEvent {
    Arrival {
        id: JobId,
    },
    Critical {
        id: JobId,
        available: Vec<JobId>,
        decision: TraceDecision,
    },
    Batch {
        trigger: BatchTrigger,
        available: Vec<JobId>,
        pairs: Vec<(JobId, JobId)>,
        solos: Vec<JobId>,
    },
}

/// Everything a run produced.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MatchingOutcome {
    pub pairs: Vec<PairedDispatch>,
    pub solos: Vec<JobId>,
    /// Sum of pair rewards; solo dispatches contribute zero.
    pub total_reward: f64,
    pub trace: Vec<TraceEvent>,
}

impl MatchingOutcome {
    /// Number of jobs dispatched in a pair.
    pub fn matched_jobs(&self) -> usize {
        2 * self.pairs.len()
    }
}

/// Runs `policy` over `inst`. Deterministic: equal inputs give equal
/// outcomes, trace included.
pub fn simulate(inst: &Instance, policy: &Policy, opts: &SimOptions) -> Result<MatchingOutcome> {
    let TieBreak::LowestIndex = opts.tiebreak;
    let mut sim = Sim::new(inst, opts);
    match policy {
        Policy::Index(index) => run_index(&mut sim, index)?,
        Policy::Batch(batch) => run_batch(&mut sim, batch)?,
    }
    sim.finish()
}

struct Sim<'a> {
    inst: &'a Instance,
    opts: &'a SimOptions,
    types: Vec<JobType>,
    available: BTreeSet<JobId>,
    done: Vec<bool>,
    pairs: Vec<PairedDispatch>,
    solos: Vec<JobId>,
    total: f64,
    trace: Vec<TraceEvent>,
}

impl<'a> Sim<'a> {
    fn new(inst: &'a Instance, opts: &'a SimOptions) -> Sim<'a> {
        let n = inst.n();
        Sim {
            inst,
            opts,
            types: (1..=n).map(|j| inst.job_type(j)).collect(),
            available: BTreeSet::new(),
            done: alloc::vec![false; n + 1],
            pairs: Vec::new(),
            solos: Vec::new(),
            total: 0.0,
            trace: Vec::new(),
        }
    }

    fn reward(&self, j: JobId, k: JobId) -> Result<f64> {
        reward(self.inst.topology(), self.types[j - 1], self.types[k - 1])
    }

    fn arrive(&mut self, j: JobId) {
        self.available.insert(j);
        if self.opts.record_trace {
            self.trace.push(TraceEvent::Arrival { id: j });
        }
    }

    fn snapshot_without(&self, j: JobId) -> Vec<JobId> {
        self.available.iter().copied().filter(|&k| k != j).collect()
    }

    fn dispatch_pair(&mut self, a: JobId, b: JobId, reward: f64, critical: Option<JobId>) {
        self.available.remove(&a);
        self.available.remove(&b);
        self.done[a] = true;
        self.done[b] = true;
        self.total += reward;
        self.pairs.push(PairedDispatch {
            a: a.min(b),
            b: a.max(b),
            reward,
            critical,
        });
    }

    fn dispatch_solo(&mut self, j: JobId) {
        self.available.remove(&j);
        self.done[j] = true;
        self.solos.push(j);
    }

    fn finish(self) -> Result<MatchingOutcome> {
        if let Some(j) = (1..=self.inst.n()).find(|&j| !self.done[j]) {
            return Err(Error::ContractViolation(format!(
                "job {j} was never dispatched"
            )));
        }
        debug_assert_eq!(2 * self.pairs.len() + self.solos.len(), self.inst.n());
        Ok(MatchingOutcome {
            pairs: self.pairs,
            solos: self.solos,
            total_reward: self.total,
            trace: self.trace,
        })
    }
}

/// Critical job `j` picks the feasible available job maximizing
/// `r - price`, scanning in id order so ties go low.
fn index_decide(sim: &mut Sim, j: JobId, prices: &[f64]) -> Result<()> {
    let mut best: Option<(JobId, f64, f64)> = None;
    for &k in &sim.available {
        if k == j || !sim.inst.feasible(j, k) {
            continue;
        }
        let r = sim.reward(j, k)?;
        if !sim.opts.negative_match_allowed && r < 0.0 {
            continue;
        }
        let q = r - prices[k - 1];
        if best.is_none_or(|(_, bq, _)| q > bq) {
            best = Some((k, q, r));
        }
    }
    let snapshot = if sim.opts.record_trace {
        sim.snapshot_without(j)
    } else {
        Vec::new()
    };
    match best {
        Some((k, _, r)) => {
            sim.dispatch_pair(j, k, r, Some(j));
            if sim.opts.record_trace {
                sim.trace.push(TraceEvent::Critical {
                    id: j,
                    available: snapshot,
                    decision: TraceDecision::Match {
                        partner: k,
                        reward: r,
                    },
                });
            }
        }
        None => {
            sim.dispatch_solo(j);
            if sim.opts.record_trace {
                sim.trace.push(TraceEvent::Critical {
                    id: j,
                    available: snapshot,
                    decision: TraceDecision::Solo,
                });
            }
        }
    }
    Ok(())
}

fn run_index(sim: &mut Sim, policy: &IndexPolicy) -> Result<()> {
    if policy.topology != sim.inst.topology() {
        return Err(invalid(format!(
            "policy built for {} run on a {} instance",
            policy.topology.name(),
            sim.inst.topology().name()
        )));
    }
    let prices = job_prices(sim.inst, &policy.price)?;
    match sim.inst.criticality() {
        CriticalityModel::CountWindow { d } => {
            let n = sim.inst.n();
            for t in 1..=n {
                sim.arrive(t);
                if let Some(j) = t.checked_sub(d).filter(|&j| j >= 1) {
                    if !sim.done[j] {
                        index_decide(sim, j, &prices)?;
                    }
                }
            }
            for j in n.saturating_sub(d) + 1..=n {
                if !sim.done[j] {
                    index_decide(sim, j, &prices)?;
                }
            }
        }
        CriticalityModel::TimeWindow { .. } => {
            for event in time_events(sim.inst, None)? {
                match event.class {
                    EventClass::Arrival => sim.arrive(event.id),
                    EventClass::Epoch => unreachable!("index policies have no epochs"),
                    EventClass::Critical => {
                        if !sim.done[event.id] {
                            index_decide(sim, event.id, &prices)?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Maximum-weight matching over the available jobs, on edge weights
/// discounted by `gamma` times each non-critical endpoint's price. Edges
/// whose raw reward is negative are dropped when negative matches are
/// disallowed; edges with non-positive adjusted weight never help and are
/// dropped too. Returns the matched pairs in id order.
fn batch_solve(
    sim: &Sim,
    avail: &[JobId],
    is_critical: &dyn Fn(JobId) -> bool,
    adjustment: Option<(&[f64], f64)>,
) -> Result<Vec<(JobId, JobId)>> {
    let mut edges = Vec::new();
    for (i, &j) in avail.iter().enumerate() {
        for (ii, &k) in avail.iter().enumerate().skip(i + 1) {
            if !sim.inst.feasible(j, k) {
                continue;
            }
            let r = sim.reward(j, k)?;
            if !sim.opts.negative_match_allowed && r < 0.0 {
                continue;
            }
            let mut w = r;
            if let Some((prices, gamma)) = adjustment {
                if !is_critical(j) {
                    w -= gamma * prices[j - 1];
                }
                if !is_critical(k) {
                    w -= gamma * prices[k - 1];
                }
            }
            if w > 0.0 {
                edges.push((i, ii, w));
            }
        }
    }
    let mate = blossom::max_weight_matching(avail.len(), &edges)?;
    let mut pairs = Vec::new();
    for (i, &m) in mate.iter().enumerate() {
        if m != blossom::UNSET && m > i {
            pairs.push((avail[i], avail[m]));
        }
    }
    Ok(pairs)
}

fn run_batch(sim: &mut Sim, policy: &BatchPolicy) -> Result<()> {
    let adjustment = match &policy.adjustment {
        Some(adj) => {
            if !adj.gamma.is_finite() || adj.gamma < 0.0 {
                return Err(invalid(format!(
                    "gamma {} is not a non-negative real",
                    adj.gamma
                )));
            }
            Some((source_prices(sim.inst, &adj.source)?, adj.gamma))
        }
        None => None,
    };
    let adj = adjustment.as_ref().map(|(p, g)| (p.as_slice(), *g));
    match (policy.mode, sim.inst.criticality()) {
        (BatchMode::Full, CriticalityModel::CountWindow { d }) => {
            let ends: BTreeSet<JobId> = sim.inst.batches()?.into_iter().map(|(_, hi)| hi).collect();
            let n = sim.inst.n();
            for t in 1..=n {
                sim.arrive(t);
                if ends.contains(&t) {
                    clear_market(sim, BatchTrigger::Count { step: t }, &|j| j + d <= t, adj)?;
                }
                if let Some(j) = t.checked_sub(d).filter(|&j| j >= 1) {
                    if !sim.done[j] {
                        return Err(Error::ContractViolation(format!(
                            "full batching left job {j} past its deadline"
                        )));
                    }
                }
            }
        }
        (BatchMode::Full, CriticalityModel::TimeWindow { .. }) => {
            return Err(invalid("full batching needs a count window"));
        }
        (BatchMode::Rolling, CriticalityModel::CountWindow { d }) => {
            let n = sim.inst.n();
            for t in 1..=n {
                sim.arrive(t);
                if let Some(j) = t.checked_sub(d).filter(|&j| j >= 1) {
                    if !sim.done[j] {
                        rolling_decide(sim, j, &|k| k + d <= t, adj)?;
                    }
                }
            }
            for j in n.saturating_sub(d) + 1..=n {
                let t = j + d;
                if !sim.done[j] {
                    rolling_decide(sim, j, &|k| k + d <= t, adj)?;
                }
            }
        }
        (BatchMode::Rolling, CriticalityModel::TimeWindow { w }) => {
            for event in time_events(sim.inst, None)? {
                match event.class {
                    EventClass::Arrival => sim.arrive(event.id),
                    EventClass::Epoch => unreachable!("rolling batching has no epochs"),
                    EventClass::Critical => {
                        if !sim.done[event.id] {
                            let now = event.time;
                            let inst = sim.inst;
                            let deadline_reached =
                                move |k: JobId| inst.arrival_time(k).is_some_and(|t| t + w <= now);
                            rolling_decide(sim, event.id, &deadline_reached, adj)?;
                        }
                    }
                }
            }
        }
        (BatchMode::Periodic { period }, CriticalityModel::TimeWindow { w }) => {
            if period <= 0.0 || !period.is_finite() {
                return Err(invalid("epoch period must be positive and finite"));
            }
            if period > w {
                return Err(invalid(format!(
                    "epoch period {period} exceeds the time window {w}; jobs could expire between epochs"
                )));
            }
            for event in time_events(sim.inst, Some(period))? {
                match event.class {
                    EventClass::Arrival => sim.arrive(event.id),
                    EventClass::Epoch => {
                        if sim.available.is_empty() {
                            continue;
                        }
                        let next = event.time + period;
                        let inst = sim.inst;
                        let must_go =
                            move |k: JobId| inst.arrival_time(k).is_some_and(|t| t + w < next);
                        epoch_clear(sim, event.time, &must_go, adj)?;
                    }
                    EventClass::Critical => {
                        if !sim.done[event.id] {
                            return Err(Error::ContractViolation(format!(
                                "periodic batching left job {} past its deadline",
                                event.id
                            )));
                        }
                    }
                }
            }
        }
        (BatchMode::Periodic { .. }, CriticalityModel::CountWindow { .. }) => {
            return Err(invalid("periodic batching needs a time window"));
        }
    }
    Ok(())
}

/// Full clear: everything available dispatches, matched or not.
fn clear_market(
    sim: &mut Sim,
    trigger: BatchTrigger,
    is_critical: &dyn Fn(JobId) -> bool,
    adj: Option<(&[f64], f64)>,
) -> Result<()> {
    let avail: Vec<JobId> = sim.available.iter().copied().collect();
    if avail.is_empty() {
        return Ok(());
    }
    let pairs = batch_solve(sim, &avail, is_critical, adj)?;
    for &(a, b) in &pairs {
        let r = sim.reward(a, b)?;
        let critical = [a, b].into_iter().find(|&x| is_critical(x));
        sim.dispatch_pair(a, b, r, critical);
    }
    let solos: Vec<JobId> = sim.available.iter().copied().collect();
    for &j in &solos {
        sim.dispatch_solo(j);
    }
    if sim.opts.record_trace {
        sim.trace.push(TraceEvent::Batch {
            trigger,
            available: avail,
            pairs,
            solos,
        });
    }
    Ok(())
}

/// Rolling clear: re-solve, but only the critical job (and its match, if
/// any) leaves the market.
fn rolling_decide(
    sim: &mut Sim,
    j: JobId,
    is_critical: &dyn Fn(JobId) -> bool,
    adj: Option<(&[f64], f64)>,
) -> Result<()> {
    let avail: Vec<JobId> = sim.available.iter().copied().collect();
    let pairs = batch_solve(sim, &avail, is_critical, adj)?;
    let partner = pairs
        .iter()
        .find(|&&(a, b)| a == j || b == j)
        .map(|&(a, b)| if a == j { b } else { a });
    let snapshot = if sim.opts.record_trace {
        sim.snapshot_without(j)
    } else {
        Vec::new()
    };
    match partner {
        Some(k) => {
            let r = sim.reward(j, k)?;
            sim.dispatch_pair(j, k, r, Some(j));
            if sim.opts.record_trace {
                sim.trace.push(TraceEvent::Critical {
                    id: j,
                    available: snapshot,
                    decision: TraceDecision::Match {
                        partner: k,
                        reward: r,
                    },
                });
            }
        }
        None => {
            sim.dispatch_solo(j);
            if sim.opts.record_trace {
                sim.trace.push(TraceEvent::Critical {
                    id: j,
                    available: snapshot,
                    decision: TraceDecision::Solo,
                });
            }
        }
    }
    Ok(())
}

/// Periodic clear: dispatch every job that cannot wait for the next epoch,
/// together with its match; everyone else stays in the market.
fn epoch_clear(
    sim: &mut Sim,
    time: f64,
    must_go: &dyn Fn(JobId) -> bool,
    adj: Option<(&[f64], f64)>,
) -> Result<()> {
    let avail: Vec<JobId> = sim.available.iter().copied().collect();
    let pairs = batch_solve(sim, &avail, must_go, adj)?;
    let mut dispatched_pairs = Vec::new();
    for &(a, b) in &pairs {
        if must_go(a) || must_go(b) {
            let r = sim.reward(a, b)?;
            let critical = [a, b].into_iter().find(|&x| must_go(x));
            sim.dispatch_pair(a, b, r, critical);
            dispatched_pairs.push((a, b));
        }
    }
    let solos: Vec<JobId> = sim
        .available
        .iter()
        .copied()
        .filter(|&j| must_go(j))
        .collect();
    for &j in &solos {
        sim.dispatch_solo(j);
    }
    if sim.opts.record_trace && !(dispatched_pairs.is_empty() && solos.is_empty()) {
        sim.trace.push(TraceEvent::Batch {
            trigger: BatchTrigger::Epoch { time },
            available: avail,
            pairs: dispatched_pairs,
            solos,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventClass {
    Arrival,
    Epoch,
    Critical,
}

struct TimeEvent {
    time: f64,
    class: EventClass,
    id: usize,
}

/// Event queue for a time-window run: arrivals and criticalities for every
/// job, plus decision epochs `t_1 + i * period` through the last deadline
/// when a period is given. Sorted by (time, class, id); classes order
/// arrivals before epochs before criticalities.
fn time_events(inst: &Instance, period: Option<f64>) -> Result<Vec<TimeEvent>> {
    let CriticalityModel::TimeWindow { w } = inst.criticality() else {
        return Err(invalid("time events need a time window"));
    };
    let mut events = Vec::with_capacity(2 * inst.n());
    for a in inst.arrivals() {
        let t = a.t.expect("validated: timed instances have timestamps");
        events.push(TimeEvent {
            time: t,
            class: EventClass::Arrival,
            id: a.id,
        });
        events.push(TimeEvent {
            time: t + w,
            class: EventClass::Critical,
            id: a.id,
        });
    }
    if let Some(period) = period {
        let first = inst.arrival_time(1).expect("validated");
        let horizon = inst.arrival_time(inst.n()).expect("validated") + w;
        let count = libm::floor((horizon - first) / period) as usize + 1;
        if count > 10_000_000 {
            return Err(invalid(
                "epoch period is too small for the instance horizon",
            ));
        }
        for i in 0..count {
            let time = first + i as f64 * period;
            if time > horizon {
                break;
            }
            events.push(TimeEvent {
                time,
                class: EventClass::Epoch,
                id: i,
            });
        }
    }
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.class.cmp(&b.class))
            .then(a.id.cmp(&b.id))
    });
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{
        adversarial_gre_offline, gen_2d_heterogeneous, gen_uniform_1d, Arrival, CriticalityModel,
    };
    use crate::policies::{make_gre, make_pb, BatchPolicy, PriceAdjustment, PriceSource};
    use crate::topology::Point2;

    fn one_d(topology: TopologyId, d: usize, values: &[f64]) -> Instance {
        let arrivals = values
            .iter()
            .enumerate()
            .map(|(i, &value)| Arrival {
                id: i + 1,
                t: None,
                job: JobType::scalar(value),
            })
            .collect();
        Instance::new(topology, CriticalityModel::CountWindow { d }, arrivals, 0).unwrap()
    }

    fn timed(topology: TopologyId, w: f64, jobs: &[(f64, f64)]) -> Instance {
        let arrivals = jobs
            .iter()
            .enumerate()
            .map(|(i, &(t, value))| Arrival {
                id: i + 1,
                t: Some(t),
                job: JobType::scalar(value),
            })
            .collect();
        Instance::new(topology, CriticalityModel::TimeWindow { w }, arrivals, 0).unwrap()
    }

    fn pair_ids(outcome: &MatchingOutcome) -> Vec<(JobId, JobId)> {
        outcome.pairs.iter().map(|p| (p.a, p.b)).collect()
    }

    fn opts_1d() -> SimOptions {
        SimOptions::for_topology(TopologyId::MinCommonOrigin)
    }

    #[test]
    fn pb_takes_zero_reward_matches() {
        let inst = one_d(TopologyId::MinCommonOrigin, 4, &[0.5, 0.0, 1.0, 0.0]);
        let out = simulate(&inst, &make_pb(inst.topology()), &opts_1d()).unwrap();
        assert_eq!(pair_ids(&out), vec![(1, 2), (3, 4)]);
        assert_eq!(out.total_reward, 0.0);
        assert!(out.solos.is_empty());
    }

    #[test]
    fn pb_leaves_the_odd_job_solo() {
        let inst = one_d(TopologyId::MinCommonOrigin, 3, &[0.4, 1.0, 1.0]);
        let out = simulate(&inst, &make_pb(inst.topology()), &opts_1d()).unwrap();
        assert_eq!(pair_ids(&out), vec![(1, 2)]);
        assert_eq!(out.pairs[0].reward, 0.4);
        assert_eq!(out.solos, vec![3]);
        assert_eq!(out.pairs[0].critical, Some(1));
    }

    #[test]
    fn greedy_burns_the_high_types() {
        let inst = adversarial_gre_offline(4, 0.1).unwrap();
        let out = simulate(&inst, &make_gre(inst.topology()), &opts_1d()).unwrap();
        assert_eq!(pair_ids(&out), vec![(1, 3), (2, 4)]);
        let lows: f64 = inst.arrivals()[..2]
            .iter()
            .map(|a| a.job.value_1d().unwrap())
            .sum();
        assert!((out.total_reward - lows).abs() < 1e-12);

        // PB prices the high types at 1/2 and pairs the lows together.
        let pb = simulate(&inst, &make_pb(inst.topology()), &opts_1d()).unwrap();
        assert_eq!(pair_ids(&pb), vec![(1, 2), (3, 4)]);
        assert!(pb.total_reward > out.total_reward);
    }

    #[test]
    fn online_window_limits_candidates() {
        let inst = timed(
            TopologyId::MinCommonOrigin,
            1.0,
            &[(0.0, 0.5), (0.5, 0.9), (3.0, 0.8)],
        );
        let out = simulate(&inst, &make_pb(inst.topology()), &opts_1d()).unwrap();
        assert_eq!(pair_ids(&out), vec![(1, 2)]);
        assert_eq!(out.solos, vec![3]);
    }

    #[test]
    fn criticality_snapshot_excludes_the_actor() {
        let inst = one_d(TopologyId::MinCommonOrigin, 5, &[0.3, 0.7, 0.9]);
        let out = simulate(&inst, &make_pb(inst.topology()), &opts_1d()).unwrap();
        let Some(TraceEvent::Critical { id, available, .. }) = out
            .trace
            .iter()
            .find(|e| matches!(e, TraceEvent::Critical { .. }))
        else {
            panic!("no criticality recorded");
        };
        assert_eq!(*id, 1);
        assert!(!available.contains(id));
        assert_eq!(available, &[2, 3]);
    }

    #[test]
    fn negative_pools_are_refused_unless_allowed() {
        let arrivals = alloc::vec![
            Arrival {
                id: 1,
                t: None,
                job: JobType::TwoD {
                    origin: Point2::new(0.0, 0.0),
                    dest: Point2::new(1.0, 0.0),
                },
            },
            Arrival {
                id: 2,
                t: None,
                job: JobType::TwoD {
                    origin: Point2::new(0.0, 5.0),
                    dest: Point2::new(1.0, 5.0),
                },
            },
        ];
        let inst = Instance::new(
            TopologyId::Pool2D,
            CriticalityModel::CountWindow { d: 2 },
            arrivals,
            0,
        )
        .unwrap();
        let gre = make_gre(TopologyId::Pool2D);
        let strict = SimOptions::for_topology(TopologyId::Pool2D);
        let out = simulate(&inst, &gre, &strict).unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.solos, vec![1, 2]);

        let permissive = SimOptions {
            negative_match_allowed: true,
            ..strict
        };
        let out = simulate(&inst, &gre, &permissive).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert!(out.total_reward < 0.0);
    }

    #[test]
    fn full_batching_clears_whole_batches() {
        let inst = one_d(TopologyId::MinCommonOrigin, 3, &[0.5, 0.0, 1.0, 0.0]);
        let bat = Policy::Batch(BatchPolicy {
            mode: BatchMode::Full,
            adjustment: None,
        });
        let out = simulate(&inst, &bat, &opts_1d()).unwrap();
        assert_eq!(pair_ids(&out), vec![(1, 3)]);
        assert_eq!(out.solos, vec![2, 4]);
        assert_eq!(out.total_reward, 0.5);
        assert!(matches!(
            out.trace.last(),
            Some(TraceEvent::Batch {
                trigger: BatchTrigger::Count { step: 4 },
                ..
            })
        ));
    }

    #[test]
    fn full_batching_splits_at_batch_boundaries() {
        let inst = one_d(TopologyId::MinCommonOrigin, 1, &[0.5, 0.0, 1.0, 0.0]);
        let bat = Policy::Batch(BatchPolicy {
            mode: BatchMode::Full,
            adjustment: None,
        });
        let out = simulate(&inst, &bat, &opts_1d()).unwrap();
        // Both batch solves see only zero-weight edges, so nobody pools.
        assert!(out.pairs.is_empty());
        assert_eq!(out.solos, vec![1, 2, 3, 4]);
    }

    #[test]
    fn rolling_dispatches_only_the_critical_job() {
        let inst = gen_uniform_1d(60, 7, 5).unwrap();
        let rbat = Policy::Batch(BatchPolicy {
            mode: BatchMode::Rolling,
            adjustment: None,
        });
        let out = simulate(&inst, &rbat, &opts_1d()).unwrap();
        for p in &out.pairs {
            let c = p.critical.expect("rolling pairs carry their critical job");
            assert!(c == p.a || c == p.b);
        }
        // Every decision in the trace is a criticality, never a bulk clear.
        assert!(out
            .trace
            .iter()
            .all(|e| !matches!(e, TraceEvent::Batch { .. })));
    }

    #[test]
    fn gamma_zero_changes_nothing() {
        for seed in [1, 2, 3] {
            let inst = gen_uniform_1d(40, 4, seed).unwrap();
            for mode in [BatchMode::Full, BatchMode::Rolling] {
                let plain = Policy::Batch(BatchPolicy {
                    mode,
                    adjustment: None,
                });
                let zero = Policy::Batch(BatchPolicy {
                    mode,
                    adjustment: Some(PriceAdjustment {
                        source: PriceSource::Potential,
                        gamma: 0.0,
                    }),
                });
                let a = simulate(&inst, &plain, &opts_1d()).unwrap();
                let b = simulate(&inst, &zero, &opts_1d()).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn periodic_batching_meets_every_deadline() {
        let jobs: Vec<(f64, f64)> = [0.2, 0.8, 0.3, 0.7, 0.5, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64, v))
            .collect();
        let inst = timed(TopologyId::MinCommonOrigin, 2.0, &jobs);
        let prbat = Policy::Batch(BatchPolicy {
            mode: BatchMode::Periodic { period: 1.0 },
            adjustment: None,
        });
        let out = simulate(&inst, &prbat, &opts_1d()).unwrap();
        assert_eq!(out.matched_jobs() + out.solos.len(), 6);
        for p in &out.pairs {
            assert!(inst.feasible(p.a, p.b));
        }
        for e in &out.trace {
            if let TraceEvent::Batch { trigger, .. } = e {
                assert!(matches!(trigger, BatchTrigger::Epoch { .. }));
            }
        }
    }

    #[test]
    fn batch_mode_window_mismatches_are_rejected() {
        let counted = one_d(TopologyId::MinCommonOrigin, 2, &[0.1, 0.2, 0.3]);
        let timed = timed(TopologyId::MinCommonOrigin, 2.0, &[(0.0, 0.1), (1.0, 0.2)]);
        let full = Policy::Batch(BatchPolicy {
            mode: BatchMode::Full,
            adjustment: None,
        });
        let periodic = |period| {
            Policy::Batch(BatchPolicy {
                mode: BatchMode::Periodic { period },
                adjustment: None,
            })
        };
        assert!(simulate(&timed, &full, &opts_1d()).is_err());
        assert!(simulate(&counted, &periodic(1.0), &opts_1d()).is_err());
        // Period longer than the window: jobs could expire between epochs.
        assert!(simulate(&timed, &periodic(3.0), &opts_1d()).is_err());
        // Policy topology must match the instance.
        assert!(simulate(&counted, &make_pb(TopologyId::Proximity), &opts_1d()).is_err());
    }

    #[test]
    fn every_job_is_dispatched_exactly_once() {
        let policies = [
            make_gre(TopologyId::Pool2D),
            make_pb(TopologyId::Pool2D),
            Policy::Batch(BatchPolicy {
                mode: BatchMode::Rolling,
                adjustment: Some(PriceAdjustment {
                    source: PriceSource::Potential,
                    gamma: 0.5,
                }),
            }),
            Policy::Batch(BatchPolicy {
                mode: BatchMode::Full,
                adjustment: None,
            }),
        ];
        for seed in 0..20 {
            let inst = gen_2d_heterogeneous(30, 4, seed).unwrap();
            for policy in &policies {
                let out =
                    simulate(&inst, policy, &SimOptions::for_topology(TopologyId::Pool2D)).unwrap();
                let mut seen = alloc::vec![0u8; inst.n() + 1];
                for p in &out.pairs {
                    assert!(inst.feasible(p.a, p.b));
                    seen[p.a] += 1;
                    seen[p.b] += 1;
                }
                for &s in &out.solos {
                    seen[s] += 1;
                }
                assert!(seen[1..].iter().all(|&c| c == 1));
                let sum: f64 = out.pairs.iter().map(|p| p.reward).sum();
                assert!((sum - out.total_reward).abs() < 1e-9);
            }
        }
    }

    proptest::proptest! {
        /// Every policy partitions the arrivals into feasible pairs and
        /// solos, whatever the window or price adjustment.
        #[test]
        fn prop_dispatch_partitions_the_arrivals(
            values in proptest::collection::vec(0.0f64..=1.0, 2..24),
            d in 1usize..30,
            gamma in 0.0f64..=1.0,
            which in 0usize..4,
        ) {
            let inst = one_d(TopologyId::MinCommonOrigin, d, &values);
            let policy = match which {
                0 => make_gre(TopologyId::MinCommonOrigin),
                1 => make_pb(TopologyId::MinCommonOrigin),
                2 => Policy::Batch(BatchPolicy { mode: BatchMode::Full, adjustment: None }),
                _ => Policy::Batch(BatchPolicy {
                    mode: BatchMode::Rolling,
                    adjustment: Some(PriceAdjustment { source: PriceSource::Potential, gamma }),
                }),
            };
            let out = simulate(&inst, &policy, &opts_1d()).unwrap();
            let mut seen = alloc::vec![0u8; inst.n() + 1];
            for p in &out.pairs {
                proptest::prop_assert!(inst.feasible(p.a, p.b));
                seen[p.a] += 1;
                seen[p.b] += 1;
            }
            for &s in &out.solos {
                seen[s] += 1;
            }
            proptest::prop_assert!(seen[1..].iter().all(|&c| c == 1));
            let sum: f64 = out.pairs.iter().map(|p| p.reward).sum();
            proptest::prop_assert!((sum - out.total_reward).abs() < 1e-9);
        }
    }
}
