//! Clustering rewards over a weighted ground set.
//!
//! `Γ(S) = (1/d_tot) Σ_j ŵ_j (1 − min(1, d(r_j, S)))`. CEBC uses the reduced
//! set with path-length weights; EBC uses the full log with unit weights.
//! Both share the cached-distance machinery on [`Solution`].

use crate::domain::{Descriptor, InputLog, ReducedSet, Solution};
use crate::error::{Error, Result};
use crate::reduction::reduce;
use crate::scalar::Scalar;

/// Which clustering reward to optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardKind {
    /// Continuous exemplar-based clustering on the reduced set.
    Cebc,
    /// Exemplar-based clustering with uniform weights on the full log.
    Ebc,
}

impl RewardKind {
    /// Ground set this reward is evaluated against.
    pub fn ground_set<T: Scalar>(&self, log: &InputLog<T>, reduce_dist: T) -> Result<ReducedSet<T>> {
        match self {
            RewardKind::Cebc => reduce(log, reduce_dist),
            RewardKind::Ebc => Ok(ReducedSet::uniform(log)),
        }
    }
}

/// Result of one marginal-value pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub candidate: usize,
    pub marginal: T,
    /// `(j, d(candidate, r_j))` for every ground element the candidate
    /// would move closer.
    pub improved: Vec<(usize, T)>,
}

impl<T: Scalar> Solution<T> {
    /// Marginal value of adding ground element `candidate`.
    pub fn marginal_value(&self, candidate: usize, ground: &ReducedSet<T>) -> T {
        if self.contains(candidate) {
            return T::zero();
        }
        let c = &ground.elements()[candidate].descriptor;
        let mut gain = T::zero();
        for (e, &cached) in ground.elements().iter().zip(&self.min_dists) {
            let d = c.distance(&e.descriptor);
            if d < cached {
                gain = gain + e.weight * (cached - d);
            }
        }
        normalize(gain, ground)
    }

    /// Single pass that yields both the marginal value and the ground
    /// elements whose cached distance would shrink.
    pub fn evaluate(&self, candidate: usize, ground: &ReducedSet<T>) -> Evaluation<T> {
        if self.contains(candidate) {
            return Evaluation {
                candidate,
                marginal: T::zero(),
                improved: Vec::new(),
            };
        }
        let c = &ground.elements()[candidate].descriptor;
        let mut gain = T::zero();
        let mut improved = Vec::new();
        for (j, (e, &cached)) in ground.elements().iter().zip(&self.min_dists).enumerate() {
            let d = c.distance(&e.descriptor);
            if d < cached {
                gain = gain + e.weight * (cached - d);
                improved.push((j, d));
            }
        }
        Evaluation {
            candidate,
            marginal: normalize(gain, ground),
            improved,
        }
    }

    /// Admits the candidate of a previous [`Solution::evaluate`] call made
    /// against the current state.
    pub fn commit(&mut self, eval: Evaluation<T>, k: usize) -> Result<T> {
        if self.members.len() >= k {
            return Err(Error::SolutionFull(k));
        }
        if self.contains(eval.candidate) {
            return Err(Error::DuplicateMember(eval.candidate));
        }
        for (j, d) in eval.improved {
            self.min_dists[j] = self.min_dists[j].min(d);
        }
        self.members.push(eval.candidate);
        self.value = self.value + eval.marginal;
        Ok(eval.marginal)
    }

    /// Adds `candidate`, updating the distance cache; returns the gain.
    pub fn admit(&mut self, candidate: usize, ground: &ReducedSet<T>, k: usize) -> Result<T> {
        if candidate >= ground.len() {
            return Err(Error::Contract(format!(
                "candidate {candidate} outside ground set of {}",
                ground.len()
            )));
        }
        if self.members.len() >= k {
            return Err(Error::SolutionFull(k));
        }
        if self.contains(candidate) {
            return Err(Error::DuplicateMember(candidate));
        }
        let eval = self.evaluate(candidate, ground);
        self.commit(eval, k)
    }

    /// Builds a solution from ground-set indices by successive admission.
    pub fn from_members(members: &[usize], ground: &ReducedSet<T>) -> Result<Self> {
        let mut sol = Solution::empty(ground);
        for &m in members {
            sol.admit(m, ground, usize::MAX)?;
        }
        Ok(sol)
    }
}

#[inline]
fn normalize<T: Scalar>(total: T, ground: &ReducedSet<T>) -> T {
    if ground.d_tot() > T::zero() {
        total / ground.d_tot()
    } else {
        T::zero()
    }
}

/// Reward of an arbitrary descriptor set against `ground`; the descriptors
/// need not belong to it.
pub fn value_of_descriptors<T: Scalar>(solution: &[&Descriptor<T>], ground: &ReducedSet<T>) -> T {
    let total = ground.elements().iter().fold(T::zero(), |acc, e| {
        let d = solution
            .iter()
            .map(|s| s.distance(&e.descriptor))
            .fold(T::one(), T::min);
        acc + e.weight * (T::one() - d)
    });
    normalize(total, ground)
}

/// Reward of a set of ground-set indices.
pub fn value_of_members<T: Scalar>(members: &[usize], ground: &ReducedSet<T>) -> T {
    let descs: Vec<&Descriptor<T>> = members.iter().map(|&m| &ground.elements()[m].descriptor).collect();
    value_of_descriptors(&descs, ground)
}

/// Plain exemplar-based clustering of full-log indices, evaluated on the
/// full log: `1 − (1/|E|) Σ_i min(1, d(e_i, S))`.
pub fn ebc_value<T: Scalar>(sol_members: &[usize], log: &InputLog<T>) -> Result<T> {
    if let Some(&bad) = sol_members.iter().find(|&&m| m >= log.len()) {
        return Err(Error::Contract(format!("index {bad} outside the log")));
    }
    Ok(value_of_members(sol_members, &ReducedSet::uniform(log)))
}
