//! Reward topologies: how much trip distance two jobs save when pooled.
//!
//! Rewards are symmetric. Every topology admits a potential
//! `p(theta) = sup_theta' r(theta, theta') / 2`, the largest half-reward a
//! type can ever collect; potentials are dual feasible for the matching LP.

use crate::error::invalid;
use crate::Result;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Planar point, kilometers or meters depending on the data source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        libm::sqrt(dx * dx + dy * dy)
    }
}

#[cfg(feature = "serde")]
impl Serialize for Point2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        (self.x, self.y).serialize(s)
    }
}

#[cfg(feature = "serde")]
impl<'de> Deserialize<'de> for Point2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let (x, y) = <(f64, f64)>::deserialize(d)?;
        Ok(Point2 { x, y })
    }
}

/// The four supported reward structures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TopologyId {
    /// `r = min(theta, theta')`: value of the shared leg from a common origin.
    MinCommonOrigin,
    /// `r = 1 - |theta - theta'|`: closer types pool better.
    Proximity,
    /// `r = |theta - theta'|`: only dissimilar types pool well.
    Separation,
    /// Euclidean pickup-then-deliver pooling, reward of Eq. (5) form;
    /// may be negative for badly aligned pairs.
    #[cfg_attr(feature = "serde", serde(rename = "pool2d"))]
    Pool2D,
}

impl TopologyId {
    pub fn is_one_dimensional(self) -> bool {
        !matches!(self, TopologyId::Pool2D)
    }

    /// Stable lowercase name, used in file formats and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            TopologyId::MinCommonOrigin => "min_common_origin",
            TopologyId::Proximity => "proximity",
            TopologyId::Separation => "separation",
            TopologyId::Pool2D => "pool2d",
        }
    }
}

/// A job's type: scalar in `[0,1]` for the 1D topologies, an origin and
/// destination pair for Pool2D.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum JobType {
    OneD { value: f64 },
    TwoD { origin: Point2, dest: Point2 },
}

impl JobType {
    pub fn scalar(value: f64) -> Self {
        JobType::OneD { value }
    }

    pub fn trip(origin: Point2, dest: Point2) -> Self {
        JobType::TwoD { origin, dest }
    }

    /// The scalar type value, if this is a 1D job.
    pub fn value_1d(self) -> Option<f64> {
        match self {
            JobType::OneD { value } => Some(value),
            JobType::TwoD { .. } => None,
        }
    }

    /// The origin/destination pair, if this is a 2D job.
    pub fn trip_2d(self) -> Option<(Point2, Point2)> {
        match self {
            JobType::OneD { .. } => None,
            JobType::TwoD { origin, dest } => Some((origin, dest)),
        }
    }
}

fn one_d(t: JobType, topology: TopologyId) -> Result<f64> {
    match t {
        JobType::OneD { value } => Ok(value),
        JobType::TwoD { .. } => Err(invalid(alloc::format!(
            "{} expects scalar job types",
            topology.name()
        ))),
    }
}

fn two_d(t: JobType) -> Result<(Point2, Point2)> {
    match t {
        JobType::TwoD { origin, dest } => Ok((origin, dest)),
        JobType::OneD { .. } => Err(invalid("pool2d expects origin/destination job types")),
    }
}

/// Pairwise pooling reward. Errors on a dimensionality mismatch.
pub fn reward(topology: TopologyId, a: JobType, b: JobType) -> Result<f64> {
    match topology {
        TopologyId::MinCommonOrigin => {
            let (x, y) = (one_d(a, topology)?, one_d(b, topology)?);
            Ok(x.min(y))
        }
        TopologyId::Proximity => {
            let (x, y) = (one_d(a, topology)?, one_d(b, topology)?);
            Ok(1.0 - abs(x - y))
        }
        TopologyId::Separation => {
            let (x, y) = (one_d(a, topology)?, one_d(b, topology)?);
            Ok(abs(x - y))
        }
        TopologyId::Pool2D => {
            let (o1, d1) = two_d(a)?;
            let (o2, d2) = two_d(b)?;
            // Pooled trip: both pickups first, then both dropoffs. The best of
            // the four pickup/dropoff orders shares the origin and destination
            // legs and differs only in the middle leg.
            let solo = o1.dist(d1) + o2.dist(d2);
            let middle = o1
                .dist(d1)
                .min(o1.dist(d2))
                .min(o2.dist(d1))
                .min(o2.dist(d2));
            let pooled = o1.dist(o2) + middle + d1.dist(d2);
            Ok(solo - pooled)
        }
    }
}

/// Half the best reward the type can ever collect.
pub fn potential(topology: TopologyId, t: JobType) -> Result<f64> {
    match topology {
        TopologyId::MinCommonOrigin => Ok(one_d(t, topology)? / 2.0),
        TopologyId::Proximity => {
            one_d(t, topology)?;
            Ok(0.5)
        }
        TopologyId::Separation => {
            let x = one_d(t, topology)?;
            Ok(x.max(1.0 - x) / 2.0)
        }
        TopologyId::Pool2D => {
            let (o, d) = two_d(t)?;
            Ok(o.dist(d) / 2.0)
        }
    }
}

/// Distance driven when the job is dispatched alone. `None` where the
/// topology has no distance semantics (Proximity, Separation).
pub fn solo_distance(topology: TopologyId, t: JobType) -> Result<Option<f64>> {
    match topology {
        TopologyId::MinCommonOrigin => Ok(Some(one_d(t, topology)?)),
        TopologyId::Proximity | TopologyId::Separation => {
            one_d(t, topology)?;
            Ok(None)
        }
        TopologyId::Pool2D => {
            let (o, d) = two_d(t)?;
            Ok(Some(o.dist(d)))
        }
    }
}

pub(crate) fn abs(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: f64) -> JobType {
        JobType::scalar(v)
    }

    fn t(ox: f64, oy: f64, dx: f64, dy: f64) -> JobType {
        JobType::trip(Point2::new(ox, oy), Point2::new(dx, dy))
    }

    /// Independent oracle: enumerate the four pickup-then-deliver routes.
    fn pool2d_oracle(a: JobType, b: JobType) -> f64 {
        let (
            JobType::TwoD {
                origin: o1,
                dest: d1,
            },
            JobType::TwoD {
                origin: o2,
                dest: d2,
            },
        ) = (a, b)
        else {
            panic!("oracle needs 2D jobs");
        };
        let routes = [
            o1.dist(o2) + o2.dist(d1) + d1.dist(d2),
            o1.dist(o2) + o2.dist(d2) + d2.dist(d1),
            o2.dist(o1) + o1.dist(d1) + d1.dist(d2),
            o2.dist(o1) + o1.dist(d2) + d2.dist(d1),
        ];
        let pooled = routes.iter().cloned().fold(f64::INFINITY, f64::min);
        o1.dist(d1) + o2.dist(d2) - pooled
    }

    #[test]
    fn one_d_rewards() {
        assert_eq!(
            reward(TopologyId::MinCommonOrigin, s(0.3), s(0.7)).unwrap(),
            0.3
        );
        assert!((reward(TopologyId::Proximity, s(0.2), s(0.9)).unwrap() - 0.3).abs() < 1e-15);
        assert!((reward(TopologyId::Separation, s(0.2), s(0.9)).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn one_d_potentials() {
        assert_eq!(potential(TopologyId::MinCommonOrigin, s(0.8)).unwrap(), 0.4);
        assert_eq!(potential(TopologyId::Proximity, s(0.1)).unwrap(), 0.5);
        assert_eq!(potential(TopologyId::Separation, s(0.8)).unwrap(), 0.4);
        assert_eq!(potential(TopologyId::Separation, s(0.2)).unwrap(), 0.4);
        assert_eq!(potential(TopologyId::Separation, s(0.5)).unwrap(), 0.25);
    }

    #[test]
    fn pool2d_identical_jobs_reward_full_trip() {
        let job = t(0.0, 0.0, 3.0, 4.0);
        assert_eq!(reward(TopologyId::Pool2D, job, job).unwrap(), 5.0);
        assert_eq!(potential(TopologyId::Pool2D, job).unwrap(), 2.5);
        assert_eq!(solo_distance(TopologyId::Pool2D, job).unwrap(), Some(5.0));
    }

    #[test]
    fn pool2d_perpendicular_unit_trips() {
        let a = t(0.0, 0.0, 1.0, 0.0);
        let b = t(0.0, 0.0, 0.0, 1.0);
        let r = reward(TopologyId::Pool2D, a, b).unwrap();
        assert!((r - (1.0 - 2.0_f64.sqrt())).abs() < 1e-12);
        assert!(r < 0.0);
    }

    #[test]
    fn pool2d_disjoint_collinear_trips() {
        let a = t(0.0, 0.0, 1.0, 0.0);
        let b = t(2.0, 0.0, 3.0, 0.0);
        assert_eq!(reward(TopologyId::Pool2D, a, b).unwrap(), -3.0);
    }

    #[test]
    fn dimensionality_mismatch_is_an_error() {
        assert!(reward(TopologyId::MinCommonOrigin, s(0.1), t(0.0, 0.0, 1.0, 1.0)).is_err());
        assert!(reward(TopologyId::Pool2D, s(0.1), s(0.2)).is_err());
        assert!(potential(TopologyId::Pool2D, s(0.1)).is_err());
        assert!(solo_distance(TopologyId::Separation, t(0.0, 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn solo_distance_applicability() {
        assert_eq!(
            solo_distance(TopologyId::MinCommonOrigin, s(0.8)).unwrap(),
            Some(0.8)
        );
        assert_eq!(solo_distance(TopologyId::Proximity, s(0.8)).unwrap(), None);
        assert_eq!(solo_distance(TopologyId::Separation, s(0.8)).unwrap(), None);
    }

    proptest! {
        #[test]
        fn pool2d_matches_route_enumeration(
            ox1 in -1e4..1e4f64, oy1 in -1e4..1e4f64, dx1 in -1e4..1e4f64, dy1 in -1e4..1e4f64,
            ox2 in -1e4..1e4f64, oy2 in -1e4..1e4f64, dx2 in -1e4..1e4f64, dy2 in -1e4..1e4f64,
        ) {
            let a = t(ox1, oy1, dx1, dy1);
            let b = t(ox2, oy2, dx2, dy2);
            let closed = reward(TopologyId::Pool2D, a, b).unwrap();
            let oracle = pool2d_oracle(a, b);
            prop_assert!((closed - oracle).abs() <= 1e-9);
        }

        #[test]
        fn rewards_are_symmetric(
            x in 0.0..=1.0f64, y in 0.0..=1.0f64,
            ox1 in -1e3..1e3f64, oy1 in -1e3..1e3f64, dx1 in -1e3..1e3f64, dy1 in -1e3..1e3f64,
            ox2 in -1e3..1e3f64, oy2 in -1e3..1e3f64, dx2 in -1e3..1e3f64, dy2 in -1e3..1e3f64,
        ) {
            for top in [TopologyId::MinCommonOrigin, TopologyId::Proximity, TopologyId::Separation] {
                prop_assert_eq!(
                    reward(top, s(x), s(y)).unwrap(),
                    reward(top, s(y), s(x)).unwrap()
                );
            }
            let a = t(ox1, oy1, dx1, dy1);
            let b = t(ox2, oy2, dx2, dy2);
            prop_assert_eq!(
                reward(TopologyId::Pool2D, a, b).unwrap(),
                reward(TopologyId::Pool2D, b, a).unwrap()
            );
        }

        #[test]
        fn potentials_are_dual_feasible_1d(x in 0.0..=1.0f64, y in 0.0..=1.0f64) {
            for top in [TopologyId::MinCommonOrigin, TopologyId::Proximity, TopologyId::Separation] {
                let r = reward(top, s(x), s(y)).unwrap();
                let p = potential(top, s(x)).unwrap() + potential(top, s(y)).unwrap();
                prop_assert!(p >= r - 1e-9);
            }
        }

        #[test]
        fn potentials_are_dual_feasible_2d(
            ox1 in -1e3..1e3f64, oy1 in -1e3..1e3f64, dx1 in -1e3..1e3f64, dy1 in -1e3..1e3f64,
            ox2 in -1e3..1e3f64, oy2 in -1e3..1e3f64, dx2 in -1e3..1e3f64, dy2 in -1e3..1e3f64,
        ) {
            let a = t(ox1, oy1, dx1, dy1);
            let b = t(ox2, oy2, dx2, dy2);
            let r = reward(TopologyId::Pool2D, a, b).unwrap();
            let p = potential(TopologyId::Pool2D, a).unwrap() + potential(TopologyId::Pool2D, b).unwrap();
            prop_assert!(p >= r - 1e-9);
            // pooling never beats the shorter of the two solo trips
            let sa = solo_distance(TopologyId::Pool2D, a).unwrap().unwrap();
            let sb = solo_distance(TopologyId::Pool2D, b).unwrap().unwrap();
            prop_assert!(r <= sa.min(sb) + 1e-9);
        }

        #[test]
        fn proximity_reward_in_unit_range(x in 0.0..=1.0f64, y in 0.0..=1.0f64) {
            let r = reward(TopologyId::Proximity, s(x), s(y)).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
