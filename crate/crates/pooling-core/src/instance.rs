//! Instances: an arrival sequence plus a criticality model.
//!
//! Jobs carry ids `1..=n` in arrival order. Under `CountWindow { d }` a job
//! becomes critical after `d` further arrivals; `d >= n` is the offline
//! sentinel (everything arrives before anything must be dispatched). Under
//! `TimeWindow { w }` a job arriving at time `t` becomes critical at `t + w`.
//!
//! Randomized generators draw from a ChaCha8 stream seeded with the given
//! seed; one job consumes its type's samples in field order (value, or
//! origin.x, origin.y, dest.x, dest.y), so instances are reproducible across
//! platforms. Adversarial constructors are deterministic and record seed 0.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::error::invalid;
use crate::topology::{JobType, Point2, TopologyId};
use crate::Result;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// 1-based job id, equal to the job's arrival rank.
pub type JobId = usize;

/// When jobs become critical.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CriticalityModel {
    /// Critical after `d` further arrivals. `d >= n` means offline.
    CountWindow { d: usize },
    /// Critical `w` time units after arrival. Requires timestamps.
    TimeWindow { w: f64 },
}

/// One job: id, optional arrival timestamp, and its type.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Arrival {
    pub id: JobId,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub t: Option<f64>,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub job: JobType,
}

/// A validated problem instance.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawInstance"))]
#[cfg_attr(feature = "serde", derive(Deserialize))]
pub struct Instance {
    topology: TopologyId,
    criticality: CriticalityModel,
    arrivals: Vec<Arrival>,
    seed: u64,
}

#[cfg(feature = "serde")]
#[derive(Deserialize)]
struct RawInstance {
    topology: TopologyId,
    criticality: CriticalityModel,
    arrivals: Vec<Arrival>,
    #[serde(default)]
    seed: u64,
}

#[cfg(feature = "serde")]
impl TryFrom<RawInstance> for Instance {
    type Error = crate::Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        Instance::new(raw.topology, raw.criticality, raw.arrivals, raw.seed)
    }
}

impl Instance {
    /// Validates ids, type ranges, dimensionality, and timestamps.
    pub fn new(
        topology: TopologyId,
        criticality: CriticalityModel,
        arrivals: Vec<Arrival>,
        seed: u64,
    ) -> Result<Self> {
        if arrivals.is_empty() {
            return Err(invalid("instance needs at least one job"));
        }
        match criticality {
            CriticalityModel::CountWindow { d } => {
                if d == 0 {
                    return Err(invalid("count window requires d >= 1"));
                }
            }
            CriticalityModel::TimeWindow { w } => {
                if w <= 0.0 || !w.is_finite() {
                    return Err(invalid("time window must be positive and finite"));
                }
            }
        }
        let timed = matches!(criticality, CriticalityModel::TimeWindow { .. });
        let mut last_t = f64::NEG_INFINITY;
        for (i, a) in arrivals.iter().enumerate() {
            if a.id != i + 1 {
                return Err(invalid(format!(
                    "job ids must be contiguous from 1 in arrival order; position {} holds id {}",
                    i + 1,
                    a.id
                )));
            }
            check_type(topology, a.job, a.id)?;
            match a.t {
                Some(t) => {
                    if !t.is_finite() {
                        return Err(invalid(format!("job {} has non-finite timestamp", a.id)));
                    }
                    if t < last_t {
                        return Err(invalid(format!(
                            "timestamps must be non-decreasing; job {} arrives at {} after {}",
                            a.id, t, last_t
                        )));
                    }
                    last_t = t;
                }
                None if timed => {
                    return Err(invalid(format!(
                        "time window instances need a timestamp on every job; job {} has none",
                        a.id
                    )));
                }
                None => {}
            }
        }
        Ok(Instance {
            topology,
            criticality,
            arrivals,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.arrivals.len()
    }

    pub fn topology(&self) -> TopologyId {
        self.topology
    }

    pub fn criticality(&self) -> CriticalityModel {
        self.criticality
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn job_type(&self, id: JobId) -> JobType {
        self.arrivals[id - 1].job
    }

    pub fn arrival_time(&self, id: JobId) -> Option<f64> {
        self.arrivals[id - 1].t
    }

    /// True when every job is seen before any dispatch is forced.
    pub fn is_offline(&self) -> bool {
        matches!(self.criticality, CriticalityModel::CountWindow { d } if d >= self.n())
    }

    /// Whether jobs `j` and `k` can ever be pooled.
    pub fn feasible(&self, j: JobId, k: JobId) -> bool {
        if j == k {
            return false;
        }
        match self.criticality {
            CriticalityModel::CountWindow { d } => j.abs_diff(k) <= d,
            CriticalityModel::TimeWindow { w } => {
                let (tj, tk) = (self.arrivals[j - 1].t, self.arrivals[k - 1].t);
                match (tj, tk) {
                    (Some(tj), Some(tk)) => crate::topology::abs(tj - tk) <= w,
                    _ => false,
                }
            }
        }
    }

    /// Count-window batch partition: batch `t` holds ids
    /// `(t-1)(d+1)+1 ..= min(t(d+1), n)`. Errors for time windows.
    pub fn batches(&self) -> Result<Vec<(JobId, JobId)>> {
        let CriticalityModel::CountWindow { d } = self.criticality else {
            return Err(invalid("batch partition is defined for count windows only"));
        };
        let n = self.n();
        let width = d + 1;
        let mut out = Vec::new();
        let mut lo = 1;
        while lo <= n {
            let hi = (lo + width - 1).min(n);
            out.push((lo, hi));
            lo = hi + 1;
        }
        Ok(out)
    }

    /// Same arrivals under a different topology; both must be 1D, or both 2D.
    pub fn retopologize(&self, topology: TopologyId) -> Result<Instance> {
        if topology.is_one_dimensional() != self.topology.is_one_dimensional() {
            return Err(invalid(format!(
                "cannot retopologize {} arrivals as {}",
                self.topology.name(),
                topology.name()
            )));
        }
        Ok(Instance {
            topology,
            criticality: self.criticality,
            arrivals: self.arrivals.clone(),
            seed: self.seed,
        })
    }

    /// Same arrivals under a different criticality model.
    pub fn rewindow(&self, criticality: CriticalityModel) -> Result<Instance> {
        Instance::new(self.topology, criticality, self.arrivals.clone(), self.seed)
    }

    /// Same arrivals with synthetic unit-spaced timestamps `t_j = j - 1`,
    /// replacing any existing ones. Chain with [`Instance::rewindow`] to drive
    /// time-window policies on count-generated arrivals.
    pub fn with_unit_timestamps(&self) -> Instance {
        let arrivals = self
            .arrivals
            .iter()
            .map(|a| Arrival {
                t: Some((a.id - 1) as f64),
                ..*a
            })
            .collect();
        Instance {
            topology: self.topology,
            criticality: self.criticality,
            arrivals,
            seed: self.seed,
        }
    }
}

fn check_type(topology: TopologyId, job: JobType, id: JobId) -> Result<()> {
    match (topology.is_one_dimensional(), job) {
        (true, JobType::OneD { value }) => {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(format!("job {id} has type {value}, outside [0,1]")));
            }
            Ok(())
        }
        (false, JobType::TwoD { origin, dest }) => {
            for c in [origin.x, origin.y, dest.x, dest.y] {
                if !c.is_finite() {
                    return Err(invalid(format!("job {id} has non-finite coordinates")));
                }
            }
            Ok(())
        }
        _ => Err(invalid(format!(
            "job {id} does not match the {} topology",
            topology.name()
        ))),
    }
}

fn scalar_instance(
    topology: TopologyId,
    d: usize,
    values: Vec<f64>,
    seed: u64,
) -> Result<Instance> {
    let arrivals = values
        .into_iter()
        .enumerate()
        .map(|(i, value)| Arrival {
            id: i + 1,
            t: None,
            job: JobType::OneD { value },
        })
        .collect();
    Instance::new(
        topology,
        CriticalityModel::CountWindow { d },
        arrivals,
        seed,
    )
}

/// `n` types drawn uniformly from `[0,1)`, MinCommonOrigin.
pub fn gen_uniform_1d(n: usize, d: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n).map(|_| rng.random::<f64>()).collect();
    scalar_instance(TopologyId::MinCommonOrigin, d, values, seed)
}

/// `n` types drawn from Beta(alpha, beta), MinCommonOrigin.
pub fn gen_beta_1d(n: usize, d: usize, alpha: f64, beta: f64, seed: u64) -> Result<Instance> {
    let dist = rand_distr::Beta::new(alpha, beta)
        .map_err(|e| invalid(format!("bad beta parameters: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| {
            let v: f64 = dist.sample(&mut rng);
            v.clamp(0.0, 1.0)
        })
        .collect();
    scalar_instance(TopologyId::MinCommonOrigin, d, values, seed)
}

/// `n` trips from a shared origin at `(0,0)` to uniform destinations in the
/// unit square.
pub fn gen_2d_common_origin(n: usize, d: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = (0..n)
        .map(|i| Arrival {
            id: i + 1,
            t: None,
            job: JobType::TwoD {
                origin: Point2::new(0.0, 0.0),
                dest: Point2::new(rng.random(), rng.random()),
            },
        })
        .collect();
    Instance::new(
        TopologyId::Pool2D,
        CriticalityModel::CountWindow { d },
        arrivals,
        seed,
    )
}

/// `n` trips with both endpoints uniform in the unit square.
pub fn gen_2d_heterogeneous(n: usize, d: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = (0..n)
        .map(|i| Arrival {
            id: i + 1,
            t: None,
            job: JobType::TwoD {
                origin: Point2::new(rng.random(), rng.random()),
                dest: Point2::new(rng.random(), rng.random()),
            },
        })
        .collect();
    Instance::new(
        TopologyId::Pool2D,
        CriticalityModel::CountWindow { d },
        arrivals,
        seed,
    )
}

/// `m` strictly decreasing values spread through the open band `(lo, hi)`.
fn open_band(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let step = (hi - lo) / (m as f64 + 1.0);
    (1..=m).map(|i| hi - i as f64 * step).collect()
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(String::from(msg)))
    }
}

/// Offline family where greedy wastes the high types: `n/2` small types
/// strictly decreasing inside `(eps/2, eps)`, then `n/2` types at 1.
/// Greedy pairs each small job with a high one; regret is at least
/// `(1 - 2 eps) n / 4`. MinCommonOrigin, offline sentinel.
pub fn adversarial_gre_offline(n: usize, eps: f64) -> Result<Instance> {
    require(
        n >= 4 && n.is_multiple_of(4),
        "n must be a positive multiple of 4",
    )?;
    require(eps > 0.0 && eps < 1.0 / 3.0, "eps must lie in (0, 1/3)")?;
    let mut values = open_band(eps / 2.0, eps, n / 2);
    values.extend(core::iter::repeat_n(1.0, n / 2));
    scalar_instance(TopologyId::MinCommonOrigin, n, values, 0)
}

/// Offline family where PB keeps halving its error: level `k` has
/// `n = 2^(k+3) - 4` jobs and PB regret at least `(log2(n+4) - 3) / 4`.
/// Level 0 is `(1/2, 0, 1, 0)`; level `k` prefixes `2^(k+2)` rescaled copies
/// of level 0 and appends level `k-1`. MinCommonOrigin, offline sentinel.
pub fn adversarial_pb_offline(k: u32) -> Result<Instance> {
    require(k <= 20, "k must be at most 20")?;
    let base = [0.5, 0.0, 1.0, 0.0];
    let mut values: Vec<f64> = base.to_vec();
    for level in 1..=k {
        let scale = libm::exp2(-(level as f64 + 1.0));
        let offset = libm::exp2(-(level as f64));
        let mut next = Vec::with_capacity(values.len() + (4 << level));
        for s in 0..(1usize << level) {
            for v in base {
                next.push(v * scale + s as f64 * offset);
            }
        }
        next.extend_from_slice(&values);
        values = next;
    }
    let n = values.len();
    scalar_instance(TopologyId::MinCommonOrigin, n, values, 0)
}

/// Online version of the greedy trap: each batch of `d+1` jobs has `(d+1)/2`
/// small types strictly decreasing inside `(eps/2^(t+1), eps/2^t)` followed by
/// `(d+1)/2` types at 1. Greedy regret is at least `(1 - 2 eps) n / 4`.
pub fn adversarial_gre_online(n: usize, d: usize, eps: f64) -> Result<Instance> {
    require((d + 1).is_multiple_of(4), "d + 1 must be a multiple of 4")?;
    require(
        n > 0 && n.is_multiple_of(d + 1),
        "n must be a multiple of d + 1",
    )?;
    require(eps > 0.0 && eps < 1.0 / 3.0, "eps must lie in (0, 1/3)")?;
    let b = n / (d + 1);
    require(b <= 512, "too many batches; the type bands would underflow")?;
    let mut values = Vec::with_capacity(n);
    for t in 0..b {
        let hi = eps * libm::exp2(-(t as f64));
        values.extend(open_band(hi / 2.0, hi, d.div_ceil(2)));
        values.extend(core::iter::repeat_n(1.0, d.div_ceil(2)));
    }
    scalar_instance(TopologyId::MinCommonOrigin, d, values, 0)
}

/// Online version of the PB trap: batches alternate shrunk and shifted copies
/// of the level-`k` offline instance, where `d + 1 = 2^(k+3) - 4`. Odd
/// batches are `theta/3`, even batches `theta/3 + 2/3`. PB regret is at least
/// `n / (3(d+1)) * (log2(d+5) - 3) / 4`.
pub fn adversarial_pb_online(n: usize, d: usize) -> Result<Instance> {
    let k = (3..=23)
        .find(|&k| (1usize << k) - 4 == d + 1)
        .map(|k| k - 3)
        .ok_or_else(|| invalid("d + 1 must equal 2^(k+3) - 4 for some k >= 0"))?;
    require(
        n > 0 && n.is_multiple_of(d + 1),
        "n must be a multiple of d + 1",
    )?;
    let base = adversarial_pb_offline(k as u32)?;
    let b = n / (d + 1);
    let mut values = Vec::with_capacity(n);
    for t in 1..=b {
        for a in base.arrivals() {
            let JobType::OneD { value } = a.job else {
                unreachable!()
            };
            let v = value / 3.0;
            values.push(if t % 2 == 1 { v } else { v + 2.0 / 3.0 });
        }
    }
    scalar_instance(TopologyId::MinCommonOrigin, d, values, 0)
}

/// Offline trap for any index rule with critical type `theta_c`, under the
/// Separation reward. For `theta_c > 0`: `n/4` jobs at `theta_c`, `n/4` at 1,
/// `n/2` at 0; the leading jobs burn the high types and regret is at least
/// `n theta_c / 2`. Pass `theta_c = 0` for the variant with `n/4` jobs at
/// `eps`, `n/2` at 1, `n/4` at 0.
pub fn adversarial_any_index_offline(n: usize, theta_c: f64, eps: f64) -> Result<Instance> {
    require(
        n >= 4 && n.is_multiple_of(4),
        "n must be a positive multiple of 4",
    )?;
    require((0.0..=1.0).contains(&theta_c), "theta_c must lie in [0,1]")?;
    require(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)")?;
    let mut values = Vec::with_capacity(n);
    if theta_c > 0.0 {
        values.extend(core::iter::repeat_n(theta_c, n / 4));
        values.extend(core::iter::repeat_n(1.0, n / 4));
        values.extend(core::iter::repeat_n(0.0, n / 2));
    } else {
        values.extend(core::iter::repeat_n(eps, n / 4));
        values.extend(core::iter::repeat_n(1.0, n / 2));
        values.extend(core::iter::repeat_n(0.0, n / 4));
    }
    scalar_instance(TopologyId::Separation, n, values, 0)
}

/// Online trap under the Separation reward. Every two batches:
/// `(d+1)/4` jobs at 1/2, `(d+1)/2` at `eps`, `(d+1)/4` at 1, then `(d+1)/2`
/// at 0 and `(d+1)/2` at 1. Greedy and PB coincide here; regret is at least
/// `(1 - 2 eps) n / 8`.
pub fn adversarial_reward_c_online(n: usize, d: usize, eps: f64) -> Result<Instance> {
    require((d + 1).is_multiple_of(4), "d + 1 must be a multiple of 4")?;
    require(
        n > 0 && n.is_multiple_of(2 * (d + 1)),
        "n must be a multiple of 2(d + 1)",
    )?;
    require(eps > 0.0 && eps < 0.5, "eps must lie in (0, 1/2)")?;
    let w = d + 1;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n / (2 * w) {
        for j in 1..=2 * w {
            let v = if j <= w / 4 {
                0.5
            } else if j <= 3 * w / 4 {
                eps
            } else if j <= w {
                1.0
            } else if j <= 3 * w / 2 {
                0.0
            } else {
                1.0
            };
            values.push(v);
        }
    }
    scalar_instance(TopologyId::Separation, d, values, 0)
}
