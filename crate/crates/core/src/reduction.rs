//! Reduced input set selection.
//!
//! Keeps one element per `ℰ` of accumulated descriptor path length and
//! transfers the weights of the skipped elements onto the kept one, so the
//! total path length is preserved.

use crate::domain::{Descriptor, InputLog, ReducedSet};
use crate::error::{Error, Result};
use crate::rewards::value_of_descriptors;
use crate::scalar::Scalar;

/// Builds the reduced set of `log` with path threshold `epsilon_dist`.
///
/// The weight accumulator uses `≥` and resets to zero after each emission.
/// The last log element is always kept, carrying the residual weight,
/// unless the threshold rule already emitted it. With `epsilon_dist ≥ σ`
/// every kept weight after the first is at most `2ℰ`.
pub fn reduce<T: Scalar>(log: &InputLog<T>, epsilon_dist: T) -> Result<ReducedSet<T>> {
    if log.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(epsilon_dist > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "reduction distance must be positive, got {epsilon_dist}"
        )));
    }
    let els = log.elements();
    let mut kept = vec![els[0].clone()];
    kept[0].weight = T::zero();
    let mut theta = vec![0usize];
    let mut acc = T::zero();
    for (i, e) in els.iter().enumerate().skip(1) {
        acc = acc + e.weight;
        if acc >= epsilon_dist {
            let mut r = e.clone();
            r.weight = acc;
            kept.push(r);
            theta.push(i);
            acc = T::zero();
        }
    }
    let last = els.len() - 1;
    if *theta.last().unwrap() != last {
        let mut r = els[last].clone();
        r.weight = acc;
        kept.push(r);
        theta.push(last);
    }
    ReducedSet::new(kept, theta, epsilon_dist)
}

/// Source index ranges `η_i` of each reduced element in the full log.
pub fn source_sets<T: Scalar>(red: &ReducedSet<T>) -> Vec<std::ops::RangeInclusive<usize>> {
    let theta = red.theta();
    theta
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let start = if i == 0 { 0 } else { theta[i - 1] + 1 };
            start..=t
        })
        .collect()
}

/// Evaluates the same solution (indices into the full log) against both
/// the full and the reduced ground sets. The two values differ by at most
/// `2ℰ` when `ℰ ≥ σ`.
pub fn check_value_preservation<T: Scalar>(
    log: &InputLog<T>,
    red: &ReducedSet<T>,
    sol_members: &[usize],
) -> Result<(T, T)> {
    let descs: Vec<&Descriptor<T>> = sol_members
        .iter()
        .map(|&i| {
            log.elements()
                .get(i)
                .map(|e| &e.descriptor)
                .ok_or_else(|| Error::Contract(format!("solution index {i} outside the log")))
        })
        .collect::<Result<_>>()?;
    let full = full_ground(log)?;
    Ok((value_of_descriptors(&descs, &full), value_of_descriptors(&descs, red)))
}

/// The full log as a CEBC ground set (weights are the raw gaps).
pub fn full_ground<T: Scalar>(log: &InputLog<T>) -> Result<ReducedSet<T>> {
    ReducedSet::new(log.elements().to_vec(), (0..log.len()).collect(), T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn great_circle(n: usize, gap: f64) -> InputLog<f64> {
        // chord `gap` between successive samples
        let step = 2.0 * (gap / 2.0).asin();
        InputLog::from_samples((0..n).map(|i| {
            let a = i as f64 * step;
            let d = Descriptor::normalized(vec![a.cos(), a.sin(), 0.0, 0.0]).unwrap();
            (d, [i as f64, 0.0, 0.0], i as f64 * 0.1)
        }))
        .unwrap()
    }

    #[test]
    fn sparse_log_is_kept_whole() {
        let log = great_circle(30, 0.1);
        let red = reduce(&log, 0.05).unwrap();
        assert_eq!(red.len(), log.len());
        for (r, e) in red.elements().iter().zip(log.elements()) {
            assert_eq!(r.weight, e.weight);
        }
        assert_eq!(red.theta(), &(0..30).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn stationary_log_keeps_first_and_last() {
        let d = Descriptor::normalized(vec![1.0, 2.0, 3.0]).unwrap();
        let log = InputLog::from_samples((0..100).map(|i| (d.clone(), [0.0; 3], i as f64))).unwrap();
        let red = reduce(&log, 0.025).unwrap();
        assert_eq!(red.theta(), &[0, 99]);
        assert_eq!(red.d_tot(), 0.0);
    }

    #[test]
    fn single_element_log() {
        let log = great_circle(1, 0.01);
        let red = reduce(&log, 0.025).unwrap();
        assert_eq!(red.theta(), &[0]);
    }

    #[test]
    fn kept_weights_between_one_and_two_epsilon() {
        let log = great_circle(1000, 0.01);
        let eps = 0.025;
        let red = reduce(&log, eps).unwrap();
        let n = red.len();
        for (i, r) in red.elements().iter().enumerate().skip(1) {
            if i + 1 == n && r.weight < eps {
                continue; // residual tail
            }
            assert!(r.weight >= eps && r.weight <= 2.0 * eps, "{i}: {}", r.weight);
        }
        let total: f64 = log.elements().iter().map(|e| e.weight).sum();
        assert!((red.d_tot() - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn reduction_is_idempotent() {
        let log = great_circle(500, 0.007);
        let red = reduce(&log, 0.02).unwrap();
        let again = reduce(&red.as_log().unwrap(), 0.02).unwrap();
        assert_eq!(again.len(), red.len());
    }

    #[test]
    fn rejects_non_positive_threshold() {
        let log = great_circle(5, 0.01);
        assert!(reduce(&log, 0.0).is_err());
    }

    #[test]
    fn value_preservation_trivial_cases() {
        let log = great_circle(300, 0.01);
        let eps = 0.025;
        let red = reduce(&log, eps).unwrap();
        assert_eq!(check_value_preservation(&log, &red, &[]).unwrap(), (0.0, 0.0));
        let all: Vec<usize> = (0..log.len()).collect();
        let (full, reduced) = check_value_preservation(&log, &red, &all).unwrap();
        assert!((full - 1.0).abs() < 1e-12);
        assert!(reduced >= 1.0 - eps);
    }

    #[test]
    fn source_sets_partition_the_log() {
        let log = great_circle(200, 0.01);
        let red = reduce(&log, 0.025).unwrap();
        let sets = source_sets(&red);
        assert_eq!(*sets[0].start(), 0);
        let covered: usize = sets.iter().map(|r| r.clone().count()).sum();
        assert_eq!(covered, log.len());
        for w in sets.windows(2) {
            assert_eq!(*w[0].end() + 1, *w[1].start());
        }
    }
}
