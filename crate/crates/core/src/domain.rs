//! Shared domain types: descriptors, input logs, reduced sets, solutions and
//! the guess ladder.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unit-norm point on the descriptor hypersphere.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor<T> {
    coords: Vec<T>,
}

impl<T: Scalar> Descriptor<T> {
    /// Wraps coordinates that are already unit norm.
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::DimensionTooSmall(coords.len()));
        }
        let norm = l2_norm(&coords).as_f64();
        let tolerance = T::norm_tolerance(coords.len());
        if (norm - 1.0).abs() > tolerance {
            return Err(Error::NotUnitNorm { norm, tolerance });
        }
        Ok(Self { coords })
    }

    /// Wraps coordinates whose norm the caller has already checked against
    /// its own tolerance (stored f32 descriptors).
    pub(crate) fn from_raw(coords: Vec<T>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::DimensionTooSmall(coords.len()));
        }
        Ok(Self { coords })
    }

    /// Scales arbitrary non-zero coordinates onto the unit sphere.
    pub fn normalized(mut coords: Vec<T>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::DimensionTooSmall(coords.len()));
        }
        // normalize in f64 so f32 descriptors land as close to unit as possible
        let norm = coords.iter().map(|c| c.as_f64() * c.as_f64()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Degenerate("cannot normalize a zero or non-finite vector".into()));
        }
        for c in coords.iter_mut() {
            *c = T::of(c.as_f64() / norm);
        }
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    /// Chordal distance; callers guarantee equal dimensions.
    #[inline]
    pub fn distance(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| (a - b) * (a - b))
            .fold(T::zero(), |acc, x| acc + x)
            .sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> Result<Descriptor<U>> {
        Descriptor::normalized(self.coords.iter().map(|c| U::of(c.as_f64())).collect())
    }
}

fn l2_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// One scan of a mapping session.
#[derive(Clone, Debug, PartialEq)]
pub struct Element<T> {
    /// Ordinal in the original session; also names the scan payload.
    pub index: u64,
    pub descriptor: Descriptor<T>,
    /// Position in meters.
    pub pose: [f64; 3],
    /// Seconds since session start.
    pub timestamp: f64,
    /// Path-length weight.
    pub weight: T,
}

/// Sample spacing used when validating `sigma` after quantization.
const SIGMA_SLACK: f64 = 1e-6;

/// Ordered sequence of scans with the sequential-gap bound `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputLog<T> {
    elements: Vec<Element<T>>,
    sigma: T,
}

impl<T: Scalar> InputLog<T> {
    /// Validates an already-weighted element sequence.
    pub fn new(elements: Vec<Element<T>>, sigma: T) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dim = elements[0].descriptor.dim();
        if elements[0].weight != T::zero() {
            return Err(Error::Contract("first element of a log must carry weight 0".into()));
        }
        let slack = SIGMA_SLACK * (1.0 + sigma.as_f64());
        for pair in elements.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            if next.descriptor.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: next.descriptor.dim(),
                });
            }
            if !(next.timestamp > prev.timestamp) {
                return Err(Error::Contract(format!(
                    "timestamps must increase strictly (index {} at {} after {})",
                    next.index, next.timestamp, prev.timestamp
                )));
            }
            if !(next.weight >= T::zero()) {
                return Err(Error::Contract(format!("negative weight at index {}", next.index)));
            }
            let gap = prev.descriptor.distance(&next.descriptor).as_f64();
            if gap > sigma.as_f64() + slack {
                return Err(Error::Contract(format!(
                    "sequential gap {gap} at index {} exceeds sigma {sigma}",
                    next.index
                )));
            }
        }
        Ok(Self { elements, sigma })
    }

    /// Builds a log from raw samples; weights are the gaps to the previous
    /// sample and `sigma` is the largest gap.
    pub fn from_samples<I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Descriptor<T>, [f64; 3], f64)>,
    {
        let elements: Vec<Element<T>> = samples
            .into_iter()
            .enumerate()
            .map(|(i, (descriptor, pose, timestamp))| Element {
                index: i as u64,
                descriptor,
                pose,
                timestamp,
                weight: T::zero(),
            })
            .collect();
        Self::reweighted(elements)
    }

    /// Recomputes weights and sigma from the descriptor sequence, keeping
    /// element indices.
    pub fn reweighted(mut elements: Vec<Element<T>>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut sigma = T::zero();
        elements[0].weight = T::zero();
        for i in 1..elements.len() {
            let gap = elements[i - 1].descriptor.distance(&elements[i].descriptor);
            elements[i].weight = gap;
            sigma = sigma.max(gap);
        }
        Self::new(elements, sigma)
    }

    pub fn elements(&self) -> &[Element<T>] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<Element<T>> {
        self.elements
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].descriptor.dim()
    }

    /// Total path length, the sum of all weights.
    pub fn total_length(&self) -> T {
        self.elements.iter().fold(T::zero(), |acc, e| acc + e.weight)
    }
}

/// Weighted ground set used by the clustering rewards.
///
/// Produced by `reduction::reduce` for CEBC, or by [`ReducedSet::uniform`]
/// (unit weight per element of the full log) for EBC.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedSet<T> {
    elements: Vec<Element<T>>,
    theta: Vec<usize>,
    d_tot: T,
    epsilon_dist: T,
}

impl<T: Scalar> ReducedSet<T> {
    pub fn new(elements: Vec<Element<T>>, theta: Vec<usize>, epsilon_dist: T) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::EmptyInput);
        }
        if theta.len() != elements.len() {
            return Err(Error::Contract(format!(
                "theta has {} entries for {} elements",
                theta.len(),
                elements.len()
            )));
        }
        if theta.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("theta must be strictly increasing".into()));
        }
        let dim = elements[0].descriptor.dim();
        if let Some(e) = elements.iter().find(|e| e.descriptor.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: e.descriptor.dim(),
            });
        }
        if elements.iter().any(|e| !(e.weight >= T::zero())) {
            return Err(Error::Contract("weights must be non-negative".into()));
        }
        let d_tot = elements.iter().fold(T::zero(), |acc, e| acc + e.weight);
        Ok(Self {
            elements,
            theta,
            d_tot,
            epsilon_dist,
        })
    }

    /// Every element of `log` with weight 1, the ground set of plain
    /// exemplar-based clustering.
    pub fn uniform(log: &InputLog<T>) -> Self {
        let elements = log
            .elements()
            .iter()
            .cloned()
            .map(|mut e| {
                e.weight = T::one();
                e
            })
            .collect::<Vec<_>>();
        let theta = (0..elements.len()).collect();
        let d_tot = T::of(elements.len() as f64);
        Self {
            elements,
            theta,
            d_tot,
            epsilon_dist: T::zero(),
        }
    }

    pub fn elements(&self) -> &[Element<T>] {
        &self.elements
    }

    pub fn theta(&self) -> &[usize] {
        &self.theta
    }

    pub fn d_tot(&self) -> T {
        self.d_tot
    }

    pub fn epsilon_dist(&self) -> T {
        self.epsilon_dist
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].descriptor.dim()
    }

    /// Views the reduced set as a log of its own, reweighted by the gaps
    /// between kept elements.
    pub fn as_log(&self) -> Result<InputLog<T>> {
        InputLog::reweighted(self.elements.clone())
    }
}

/// A candidate distilled map over a ground set.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution<T> {
    pub(crate) members: Vec<usize>,
    pub(crate) value: T,
    /// `min(1, d(r_j, S))` per ground element; 1 is the distance to the
    /// null element at the origin.
    pub(crate) min_dists: Vec<T>,
}

impl<T: Scalar> Solution<T> {
    pub fn empty(ground: &ReducedSet<T>) -> Self {
        Self {
            members: Vec::new(),
            value: T::zero(),
            min_dists: vec![T::one(); ground.len()],
        }
    }

    /// Members in admission order.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn min_dists(&self) -> &[T] {
        &self.min_dists
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.contains(&index)
    }

    /// Members sorted ascending.
    pub fn sorted_members(&self) -> Vec<usize> {
        let mut m = self.members.clone();
        m.sort_unstable();
        m
    }
}

/// Re-evaluates `(1/d_tot) Σ ŵ_j (1 − min_dists[j])` from the cached
/// distances of `sol`.
pub fn recompute_value<T: Scalar>(sol: &Solution<T>, red: &ReducedSet<T>) -> Result<T> {
    if sol.min_dists.len() != red.len() {
        return Err(Error::Contract(format!(
            "solution caches {} distances for a ground set of {}",
            sol.min_dists.len(),
            red.len()
        )));
    }
    if red.d_tot() <= T::zero() {
        return Ok(T::zero());
    }
    let total = red
        .elements()
        .iter()
        .zip(&sol.min_dists)
        .fold(T::zero(), |acc, (e, &d)| acc + e.weight * (T::one() - d));
    Ok(total / red.d_tot())
}

/// Geometric ladder of guesses for the optimum value.
#[derive(Clone, Debug, PartialEq)]
pub struct GuessLadder<T> {
    guesses: Vec<T>,
    epsilon: T,
}

impl<T: Scalar> GuessLadder<T> {
    /// All `(1+ε)^i` with `lower ≤ (1+ε)^i ≤ upper`. When no power falls in
    /// the interval the ladder holds `upper` alone.
    pub fn new(lower: T, upper: T, epsilon: T) -> Result<Self> {
        let eps = epsilon.as_f64();
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {eps}"
            )));
        }
        let (lo, hi) = (lower.as_f64(), upper.as_f64());
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "guess bounds must satisfy 0 < lower <= upper, got [{lo}, {hi}]"
            )));
        }
        let base = (1.0 + eps).ln();
        let first = (lo.ln() / base - 1e-9).ceil() as i32;
        let last = (hi.ln() / base + 1e-9).floor() as i32;
        let ratio = T::one() + epsilon;
        let mut guesses: Vec<T> = (first..=last).map(|i| ratio.powi(i)).collect();
        if guesses.is_empty() {
            guesses.push(upper);
        }
        Ok(Self { guesses, epsilon })
    }

    pub fn guesses(&self) -> &[T] {
        &self.guesses
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.guesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guesses.is_empty()
    }

    /// One empty solution per guess.
    pub fn solutions(&self, ground: &ReducedSet<T>) -> Vec<Solution<T>> {
        self.guesses.iter().map(|_| Solution::empty(ground)).collect()
    }
}

/// Spatial ball constraint, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Inclusive time window, seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

/// Position and time constraints applied before distillation. Empty lists
/// disable the corresponding filter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    balls: Vec<Ball>,
    windows: Vec<TimeWindow>,
}

impl ConstraintSet {
    pub fn new(balls: Vec<Ball>, windows: Vec<TimeWindow>) -> Result<Self> {
        if let Some(b) = balls.iter().find(|b| !(b.radius > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {}",
                b.radius
            )));
        }
        if let Some(w) = windows.iter().find(|w| !(w.start < w.end)) {
            return Err(Error::InvalidParameter(format!(
                "time window must satisfy start < end, got [{}, {}]",
                w.start, w.end
            )));
        }
        Ok(Self { balls, windows })
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn windows(&self) -> &[TimeWindow] {
        &self.windows
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty() && self.windows.is_empty()
    }

    pub fn admits<T>(&self, e: &Element<T>) -> bool {
        let in_ball = self.balls.is_empty()
            || self.balls.iter().any(|b| {
                let d2: f64 = (0..3).map(|a| (e.pose[a] - b.center[a]).powi(2)).sum();
                d2.sqrt() <= b.radius
            });
        let in_window = self.windows.is_empty()
            || self
                .windows
                .iter()
                .any(|w| e.timestamp >= w.start && e.timestamp <= w.end);
        in_ball && in_window
    }
}

/// Keeps the elements inside at least one ball and one window, then
/// recomputes weights over the surviving sequence. The gap across a removed
/// stretch is charged to the first survivor after it.
pub fn filter_constraints<T: Scalar>(log: &InputLog<T>, c: &ConstraintSet) -> Result<InputLog<T>> {
    if c.is_empty() {
        return Ok(log.clone());
    }
    let kept: Vec<Element<T>> = log.elements().iter().filter(|e| c.admits(e)).cloned().collect();
    if kept.is_empty() {
        return Err(Error::EmptyInput);
    }
    InputLog::reweighted(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(coords: &[f64]) -> Descriptor<f64> {
        Descriptor::normalized(coords.to_vec()).unwrap()
    }

    fn line_log(n: usize) -> InputLog<f64> {
        InputLog::from_samples((0..n).map(|i| {
            let a = i as f64 * 0.01;
            (unit(&[a.cos(), a.sin(), 0.0]), [i as f64, 0.0, 0.0], i as f64)
        }))
        .unwrap()
    }

    #[test]
    fn descriptor_rejects_non_unit_and_low_dimension() {
        assert!(matches!(
            Descriptor::new(vec![1.0f64]),
            Err(Error::DimensionTooSmall(1))
        ));
        assert!(matches!(
            Descriptor::new(vec![1.0f64, 1.0]),
            Err(Error::NotUnitNorm { .. })
        ));
        assert!(Descriptor::normalized(vec![0.0f64, 0.0]).is_err());
        let d = Descriptor::normalized(vec![3.0f32, 4.0]).unwrap();
        assert!((d.coords()[0] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn log_weights_are_gaps() {
        let log = line_log(5);
        assert_eq!(log.elements()[0].weight, 0.0);
        for e in &log.elements()[1..] {
            assert!((e.weight - 0.01).abs() < 1e-6);
        }
        assert!((log.sigma() - 0.01).abs() < 1e-6);
    }

    #[test]
    fn log_rejects_gap_above_sigma_and_time_reversal() {
        let log = line_log(3);
        let els = log.elements().to_vec();
        assert!(InputLog::new(els.clone(), 0.001).is_err());
        let mut back = els;
        back[2].timestamp = 0.5;
        assert!(InputLog::new(back, 1.0).is_err());
    }

    #[test]
    fn recompute_value_of_empty_solution_is_zero() {
        let log = line_log(8);
        let red = ReducedSet::uniform(&log);
        let sol = Solution::empty(&red);
        assert_eq!(recompute_value(&sol, &red).unwrap(), 0.0);
    }

    #[test]
    fn recompute_value_full_weight_single_element() {
        let log = line_log(1);
        let mut e = log.elements()[0].clone();
        e.weight = 2.5;
        let red = ReducedSet::new(vec![e], vec![0], 0.1).unwrap();
        let sol = Solution {
            members: vec![0],
            value: 1.0,
            min_dists: vec![0.0],
        };
        assert_eq!(recompute_value(&sol, &red).unwrap(), 1.0);
    }

    #[test]
    fn recompute_value_length_mismatch_is_an_error() {
        let red = ReducedSet::uniform(&line_log(4));
        let sol = Solution {
            members: vec![],
            value: 0.0,
            min_dists: vec![1.0; 3],
        };
        assert!(matches!(recompute_value(&sol, &red), Err(Error::Contract(_))));
    }

    #[test]
    fn ladder_spans_bounds_with_constant_ratio() {
        let ladder = GuessLadder::new(0.1f64, 1.0, 0.1).unwrap();
        let g = ladder.guesses();
        assert!(g[0] >= 0.1 && *g.last().unwrap() <= 1.0 + 1e-12);
        assert!((g.last().unwrap() - 1.0).abs() < 1e-12);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - 1.1).abs() < 1e-12);
        }
        // 1.1^-24 ≈ 0.1015 is the smallest power above 0.1
        assert_eq!(g.len(), 25);
        assert!(GuessLadder::new(0.5f64, 0.4, 0.1).is_err());
        assert!(GuessLadder::new(0.5f64, 1.0, 1.0).is_err());
        assert_eq!(GuessLadder::new(1.02f64, 1.05, 0.1).unwrap().guesses(), &[1.05]);
    }

    #[test]
    fn constraint_validation() {
        let ball = Ball {
            center: [0.0; 3],
            radius: 0.0,
        };
        assert!(ConstraintSet::new(vec![ball], vec![]).is_err());
        let win = TimeWindow { start: 2.0, end: 1.0 };
        assert!(ConstraintSet::new(vec![], vec![win]).is_err());
    }

    #[test]
    fn covering_constraints_are_identity() {
        let log = line_log(20);
        let c = ConstraintSet::new(
            vec![Ball {
                center: [10.0, 0.0, 0.0],
                radius: 100.0,
            }],
            vec![TimeWindow {
                start: -1.0,
                end: 100.0,
            }],
        )
        .unwrap();
        assert_eq!(filter_constraints(&log, &c).unwrap(), log);
    }

    #[test]
    fn tiny_ball_keeps_single_element() {
        let log = line_log(20);
        let c = ConstraintSet::new(
            vec![Ball {
                center: [7.0, 0.0, 0.0],
                radius: 0.1,
            }],
            vec![],
        )
        .unwrap();
        let out = filter_constraints(&log, &c).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.elements()[0].index, 7);
        assert_eq!(out.elements()[0].weight, 0.0);
    }

    #[test]
    fn filtering_everything_is_an_error() {
        let log = line_log(5);
        let c = ConstraintSet::new(
            vec![],
            vec![TimeWindow {
                start: 100.0,
                end: 200.0,
            }],
        )
        .unwrap();
        assert!(matches!(filter_constraints(&log, &c), Err(Error::EmptyInput)));
    }

    #[test]
    fn two_windows_union_with_boundary_gap_on_later_segment() {
        let log = line_log(100);
        let c = ConstraintSet::new(
            vec![],
            vec![
                TimeWindow { start: 10.0, end: 19.0 },
                TimeWindow { start: 60.5, end: 70.0 },
            ],
        )
        .unwrap();
        let out = filter_constraints(&log, &c).unwrap();
        let expected: Vec<u64> = log
            .elements()
            .iter()
            .filter(|e| (10.0..=19.0).contains(&e.timestamp) || (60.5..=70.0).contains(&e.timestamp))
            .map(|e| e.index)
            .collect();
        let got: Vec<u64> = out.elements().iter().map(|e| e.index).collect();
        assert_eq!(got, expected);
        // first survivor of the later window carries the jump from index 19 to 61
        let jump = out.elements().iter().find(|e| e.index == 61).unwrap();
        assert!((jump.weight - 2.0 * 0.21f64.sin()).abs() < 1e-9);
        assert!(out.sigma() >= jump.weight);
    }
}
