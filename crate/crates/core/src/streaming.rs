//! Single-pass streaming optimizers.
//!
//! [`sieve_stream`] consumes the reduced set in a seeded random order and
//! keeps one solution per guess of the optimum, admitting an element into
//! `S_v` when its marginal value reaches `(v/2 − f(S_v)) / (k − |S_v|)`.
//!
//! [`dr_stream`] runs the same admission rule but picks the next element
//! from a bounded sorted partition of ordering scores. Scores start at 1 and
//! only decrease: whenever a guess admits an element, every pending element
//! it moves closer loses `(Γ̂(new gap) − Γ̂(old gap)) / |O|`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, VecDeque};
use std::sync::mpsc::Sender;

use ordered_float::OrderedFloat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::approx::{ApproxKind, GapChannel, DEFAULT_ALPHA};
use crate::domain::{GuessLadder, ReducedSet, Solution};
use crate::error::{Error, Result};
use crate::rewards::value_of_members;
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_SORT_FACTOR: usize = 10;
pub const DEFAULT_PRELOAD_STEPS: usize = 20;

/// Work size (ground elements × guesses) above which guesses are evaluated
/// on the rayon pool.
const PARALLEL_WORK: usize = 1 << 15;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub k: usize,
    /// Guess ladder granularity ε.
    pub epsilon: f64,
    /// Sorted partition holds `sort_factor · k` entries.
    pub sort_factor: usize,
    pub approx: ApproxKind,
    /// Leader stability (in consumed elements) before a preload signal;
    /// 0 disables signalling.
    pub preload_stability_steps: usize,
    pub seed: u64,
    /// Keep per-step guess values in the report.
    pub record_trace: bool,
}

impl RunConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            epsilon: DEFAULT_EPSILON,
            sort_factor: DEFAULT_SORT_FACTOR,
            approx: ApproxKind::Pose { alpha: DEFAULT_ALPHA },
            preload_stability_steps: DEFAULT_PRELOAD_STEPS,
            seed: 0,
            record_trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.sort_factor < 1 {
            return Err(Error::InvalidParameter("sort factor must be at least 1".into()));
        }
        Ok(())
    }
}

/// Bounds on the optimum used to build the guess ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<T> {
    pub lower: T,
    pub upper: T,
    /// Evenly spaced solution the lower bound was evaluated on.
    pub heuristic_members: Vec<usize>,
    /// Lower bound came from the best singleton instead of the heuristic.
    pub fallback: bool,
}

/// Up to `k` elements evenly spaced along the descriptor path: for each
/// target `(m + ½)·d_tot/k` the element whose cumulative path length is
/// nearest (ties to the lower index). Duplicates collapse.
pub fn heuristic_selection<T: Scalar>(red: &ReducedSet<T>, k: usize) -> Vec<usize> {
    let n = red.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for e in red.elements() {
        acc += e.weight.as_f64();
        cumulative.push(acc);
    }
    let total = acc;
    let mut picked = Vec::with_capacity(k);
    for m in 0..k {
        let target = (m as f64 + 0.5) * total / k as f64;
        let hi = cumulative.partition_point(|&c| c < target).min(n - 1);
        let idx = if hi > 0 && (target - cumulative[hi - 1]) <= (cumulative[hi] - target) {
            hi - 1
        } else {
            hi
        };
        if picked.last() != Some(&idx) && !picked.contains(&idx) {
            picked.push(idx);
        }
    }
    picked
}

/// Lower bound from the evenly spaced heuristic solution. `k` is capped at
/// `|red|`; the matching upper bound is always 1.
pub fn heuristic_lower_bound<T: Scalar>(red: &ReducedSet<T>, k: usize) -> Result<(T, Vec<usize>)> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if red.is_empty() {
        return Err(Error::EmptyInput);
    }
    let members = heuristic_selection(red, k);
    Ok((value_of_members(&members, red), members))
}

/// Heuristic bound with a fallback to the best singleton among the first
/// `sort_factor · k` elements when the heuristic is below `ε/k`.
pub fn initial_bounds<T: Scalar>(red: &ReducedSet<T>, k: usize, epsilon: f64, sort_factor: usize) -> Result<Bounds<T>> {
    if red.d_tot() <= T::zero() {
        return Err(Error::Degenerate(
            "reduced set has zero path length; every reward is 0".into(),
        ));
    }
    let (mut lower, heuristic_members) = heuristic_lower_bound(red, k)?;
    let mut fallback = false;
    if lower.as_f64() < epsilon / k as f64 {
        let empty = Solution::empty(red);
        let scan = (sort_factor.saturating_mul(k)).min(red.len());
        let best = (0..scan).map(|j| empty.marginal_value(j, red)).fold(T::zero(), T::max);
        if best > lower {
            lower = best;
            fallback = true;
        }
    }
    if !(lower > T::zero()) {
        return Err(Error::Degenerate("no positive lower bound on the optimum".into()));
    }
    Ok(Bounds {
        lower: lower.min(T::one()),
        upper: T::one(),
        heuristic_members,
        fallback,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Partition {
    Sorted,
    Unsorted,
    Consumed,
}

type SortKey = (Reverse<OrderedFloat<f64>>, usize);

/// Ordering scores split into a bounded sorted partition (the candidates
/// for the next element) and an unsorted queue that refills it.
#[derive(Clone, Debug)]
pub struct OrderingState {
    scores: Vec<f64>,
    partition: Vec<Partition>,
    sorted: BTreeSet<SortKey>,
    unsorted: VecDeque<usize>,
    capacity: usize,
}

impl OrderingState {
    /// `order` is a permutation of the reduced indices; the first
    /// `capacity` of them seed the sorted partition.
    pub fn new(order: &[usize], capacity: usize) -> Self {
        let n = order.len();
        let capacity = capacity.max(1);
        let mut partition = vec![Partition::Unsorted; n];
        let mut sorted = BTreeSet::new();
        let mut unsorted = VecDeque::with_capacity(n.saturating_sub(capacity));
        for (pos, &i) in order.iter().enumerate() {
            if pos < capacity {
                partition[i] = Partition::Sorted;
                sorted.insert((Reverse(OrderedFloat(1.0)), i));
            } else {
                unsorted.push_back(i);
            }
        }
        Self {
            scores: vec![1.0; n],
            partition,
            sorted,
            unsorted,
            capacity,
        }
    }

    /// Pops the best sorted entry (ties to the lowest index) and refills
    /// the sorted partition from the head of the queue.
    pub fn next_index(&mut self) -> Result<usize> {
        let (_, i) = self
            .sorted
            .pop_first()
            .ok_or_else(|| Error::Contract("ordering state exhausted".into()))?;
        self.partition[i] = Partition::Consumed;
        if let Some(j) = self.unsorted.pop_front() {
            self.partition[j] = Partition::Sorted;
            self.sorted.insert((Reverse(OrderedFloat(self.scores[j])), j));
        }
        Ok(i)
    }

    /// Adds `delta` to the score of `j`; consumed elements are ignored.
    pub fn apply_delta(&mut self, j: usize, delta: f64) {
        match self.partition[j] {
            Partition::Consumed => {}
            Partition::Unsorted => self.scores[j] += delta,
            Partition::Sorted => {
                self.sorted.remove(&(Reverse(OrderedFloat(self.scores[j])), j));
                self.scores[j] += delta;
                self.sorted.insert((Reverse(OrderedFloat(self.scores[j])), j));
            }
        }
    }

    pub fn score(&self, j: usize) -> f64 {
        self.scores[j]
    }

    pub fn is_pending(&self, j: usize) -> bool {
        self.partition[j] != Partition::Consumed
    }

    pub fn sorted_len(&self) -> usize {
        self.sorted.len()
    }

    pub fn unsorted_len(&self) -> usize {
        self.unsorted.len()
    }

    pub fn remaining(&self) -> usize {
        self.sorted.len() + self.unsorted.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// One guess of the ladder with its solution and, when the approximation
/// needs it, the per-element pose distance to the solution.
#[derive(Clone, Debug)]
pub struct GuessSlot<T> {
    pub guess: T,
    pub solution: Solution<T>,
    pose_min: Vec<f64>,
}

impl<T: Scalar> GuessSlot<T> {
    pub fn new(guess: T, ground: &ReducedSet<T>, track_pose: bool) -> Self {
        Self {
            guess,
            solution: Solution::empty(ground),
            pose_min: if track_pose {
                vec![f64::INFINITY; ground.len()]
            } else {
                Vec::new()
            },
        }
    }
}

/// Outcome of evaluating one element against one guess.
#[derive(Clone, Debug, Default)]
pub struct SlotOutcome<T> {
    /// A marginal value was computed (the slot was not full).
    pub evaluated: bool,
    pub admitted: bool,
    pub marginal: T,
    /// Ordering-score deltas to merge when admitted.
    pub deltas: Vec<(usize, f64)>,
}

/// Admission threshold `(v/2 − f(S)) / (k − |S|)`; callers ensure `|S| < k`.
pub fn admission_threshold<T: Scalar>(guess: T, sol: &Solution<T>, k: usize) -> T {
    (guess / T::of(2.0) - sol.value()) / T::of((k - sol.len()) as f64)
}

fn pose_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Evaluates reduced element `i` against one guess slot and admits it when
/// the marginal value clears the threshold. Ordering deltas are produced
/// only for admitted elements and only when `ordering` is given.
pub fn element_evaluation<T: Scalar>(
    i: usize,
    slot: &mut GuessSlot<T>,
    k: usize,
    red: &ReducedSet<T>,
    ordering: Option<(&OrderingState, &ApproxKind)>,
    num_solutions: usize,
) -> SlotOutcome<T> {
    if slot.solution.len() >= k || slot.solution.contains(i) {
        return SlotOutcome::default();
    }
    let eval = slot.solution.evaluate(i, red);
    let threshold = admission_threshold(slot.guess, &slot.solution, k);
    let mut outcome = SlotOutcome {
        evaluated: true,
        admitted: false,
        marginal: eval.marginal,
        deltas: Vec::new(),
    };
    if eval.marginal < threshold {
        return outcome;
    }
    if let Some((state, approx)) = ordering {
        if approx.uses(GapChannel::Descriptor) {
            for &(j, d) in &eval.improved {
                if state.is_pending(j) {
                    let old = slot.solution.min_dists()[j].as_f64();
                    let delta = approx.ordering_delta(GapChannel::Descriptor, d.as_f64(), old, num_solutions);
                    outcome.deltas.push((j, delta));
                }
            }
        }
        if approx.uses(GapChannel::Pose) && !slot.pose_min.is_empty() {
            let xi = red.elements()[i].pose;
            for (j, e) in red.elements().iter().enumerate() {
                let p = pose_distance(&xi, &e.pose);
                if p < slot.pose_min[j] {
                    if state.is_pending(j) {
                        let delta = approx.ordering_delta(GapChannel::Pose, p, slot.pose_min[j], num_solutions);
                        outcome.deltas.push((j, delta));
                    }
                    slot.pose_min[j] = p;
                }
            }
        }
    }
    slot.solution
        .commit(eval, k)
        .expect("slot has room and candidate is new");
    outcome.admitted = true;
    outcome
}

/// Snapshot handed to the map preloader.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreloadSignal {
    /// Number of consumed elements when the signal fired.
    pub step: usize,
    /// Ladder index of the leading guess.
    pub guess: usize,
    /// Reduced-set indices of the leader's members.
    pub members: Vec<usize>,
    /// Session scan indices of the same members.
    pub scan_ids: Vec<u64>,
}

/// Watches the leading guess and fires once it has led for `steps`
/// consecutive consumed elements; at most one firing per leadership.
#[derive(Clone, Debug)]
pub struct PreloadTracker {
    steps: usize,
    leader: Option<usize>,
    streak: usize,
    fired: bool,
}

impl PreloadTracker {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            leader: None,
            streak: 0,
            fired: false,
        }
    }

    /// Records the leader after a step; true when a signal is due.
    pub fn observe(&mut self, leader: usize) -> bool {
        if self.leader == Some(leader) {
            self.streak += 1;
        } else {
            self.leader = Some(leader);
            self.streak = 1;
            self.fired = false;
        }
        self.steps > 0 && self.streak >= self.steps && !self.fired
    }

    pub fn mark_fired(&mut self) {
        self.fired = true;
    }
}

/// Index of the highest-valued solution, ties to the lowest index.
pub fn leader_index<T: Scalar>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best = (0, T::neg_infinity());
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Emits the preload signal for the current step if the leader is stable.
pub fn preload_signal<T: Scalar>(
    tracker: &mut PreloadTracker,
    step: usize,
    slots: &[GuessSlot<T>],
    red: &ReducedSet<T>,
) -> Option<PreloadSignal> {
    let leader = leader_index(slots.iter().map(|s| s.solution.value()));
    if !tracker.observe(leader) || slots[leader].solution.is_empty() {
        return None;
    }
    tracker.mark_fired();
    let members = slots[leader].solution.sorted_members();
    let scan_ids = members.iter().map(|&m| red.elements()[m].index).collect();
    Some(PreloadSignal {
        step,
        guess: leader,
        members,
        scan_ids,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuessOutcome<T> {
    pub guess: T,
    pub value: T,
    pub size: usize,
}

#[derive(Clone, Debug)]
pub struct RunReport<T> {
    pub best_solution: Solution<T>,
    pub best_guess: usize,
    /// Marginal-value computations performed.
    pub evaluations: u64,
    pub elements_consumed: usize,
    /// Reduced indices in the order they were consumed.
    pub consumed_order: Vec<usize>,
    pub terminated_early: bool,
    pub preload_signals: Vec<PreloadSignal>,
    pub per_guess_values: Vec<GuessOutcome<T>>,
    pub bounds: Bounds<T>,
    pub seed: u64,
    /// Guess values after each consumed element, if requested.
    pub value_trace: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> RunReport<T> {
    pub fn num_guesses(&self) -> usize {
        self.per_guess_values.len()
    }

    pub fn best_value(&self) -> T {
        self.best_solution.value()
    }
}

/// How the next element is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamOrder {
    /// Seeded random permutation.
    Random,
    /// Dynamic reordering by ordering scores.
    Dynamic,
}

pub fn sieve_stream<T: Scalar>(red: &ReducedSet<T>, cfg: &RunConfig) -> Result<RunReport<T>> {
    stream(red, cfg, StreamOrder::Random, None)
}

pub fn dr_stream<T: Scalar>(red: &ReducedSet<T>, cfg: &RunConfig) -> Result<RunReport<T>> {
    stream(red, cfg, StreamOrder::Dynamic, None)
}

/// Runs either optimizer; preload signals are also sent over `preload`
/// when given. Sending never blocks and a dropped receiver is ignored.
pub fn stream<T: Scalar>(
    red: &ReducedSet<T>,
    cfg: &RunConfig,
    order: StreamOrder,
    preload: Option<Sender<PreloadSignal>>,
) -> Result<RunReport<T>> {
    cfg.validate()?;
    if red.is_empty() {
        return Err(Error::EmptyInput);
    }
    let bounds = initial_bounds(red, cfg.k, cfg.epsilon, cfg.sort_factor)?;
    let ladder = GuessLadder::new(bounds.lower, bounds.upper, T::of(cfg.epsilon))?;
    let n = red.len();
    let num_solutions = ladder.len();
    let dynamic = order == StreamOrder::Dynamic;
    let track_pose = dynamic && cfg.approx.uses(GapChannel::Pose);
    let mut slots: Vec<GuessSlot<T>> = ladder
        .guesses()
        .iter()
        .map(|&v| GuessSlot::new(v, red, track_pose))
        .collect();

    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut ordering = dynamic.then(|| OrderingState::new(&permutation, cfg.sort_factor.saturating_mul(cfg.k)));

    let parallel = n.saturating_mul(num_solutions) >= PARALLEL_WORK;
    let mut tracker = PreloadTracker::new(cfg.preload_stability_steps);
    let mut evaluations = 0u64;
    let mut consumed_order = Vec::with_capacity(n);
    let mut preload_signals = Vec::new();
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut terminated_early = false;

    for step in 1..=n {
        let i = match ordering.as_mut() {
            Some(state) => state.next_index()?,
            None => permutation[step - 1],
        };
        consumed_order.push(i);
        let ctx = ordering.as_ref().map(|s| (s, &cfg.approx));
        let eval = |slot: &mut GuessSlot<T>| element_evaluation(i, slot, cfg.k, red, ctx, num_solutions);
        let outcomes: Vec<SlotOutcome<T>> = if parallel {
            slots.par_iter_mut().map(eval).collect()
        } else {
            slots.iter_mut().map(eval).collect()
        };
        for o in outcomes {
            evaluations += o.evaluated as u64;
            if let (true, Some(state)) = (o.admitted, ordering.as_mut()) {
                for (j, delta) in o.deltas {
                    state.apply_delta(j, delta);
                }
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push(slots.iter().map(|s| s.solution.value()).collect());
        }
        if let Some(sig) = preload_signal(&mut tracker, step, &slots, red) {
            if let Some(tx) = &preload {
                let _ = tx.send(sig.clone());
            }
            preload_signals.push(sig);
        }
        if slots.iter().all(|s| s.solution.len() >= cfg.k) {
            terminated_early = step < n;
            break;
        }
    }

    let best_guess = leader_index(slots.iter().map(|s| s.solution.value()));
    let per_guess_values = slots
        .iter()
        .map(|s| GuessOutcome {
            guess: s.guess,
            value: s.solution.value(),
            size: s.solution.len(),
        })
        .collect();
    Ok(RunReport {
        best_solution: slots.swap_remove(best_guess).solution,
        best_guess,
        evaluations,
        elements_consumed: consumed_order.len(),
        consumed_order,
        terminated_early,
        preload_signals,
        per_guess_values,
        bounds,
        seed: cfg.seed,
        value_trace: trace,
    })
}
