//! Reference optimizers and map-overlap evaluation.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use itertools::Itertools;
use ordered_float::OrderedFloat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::{ReducedSet, Solution};
use crate::error::{Error, Result};
use crate::rewards::value_of_members;
use crate::scalar::Scalar;
use crate::streaming::heuristic_selection;

/// Exhaustive search refuses instances with more subsets than this.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Default overlap radius in meters.
pub const DEFAULT_TAU: f64 = 0.5;

pub type Point = [f32; 3];

/// Lazy greedy; identical output to [`greedy_naive`] (max marginal per
/// round, ties to the lowest index).
pub fn greedy<T: Scalar>(red: &ReducedSet<T>, k: usize) -> Result<Solution<T>> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut sol = Solution::empty(red);
    let empty = sol.clone();
    // (upper bound, lowest index first, round the bound was computed in)
    let mut heap: BinaryHeap<(OrderedFloat<f64>, Reverse<usize>, usize)> = (0..red.len())
        .map(|j| (OrderedFloat(empty.marginal_value(j, red).as_f64()), Reverse(j), 0))
        .collect();
    let mut round = 0;
    while sol.len() < k {
        let Some((_, Reverse(j), at)) = heap.pop() else {
            break;
        };
        if at == round {
            sol.admit(j, red, k)?;
            round += 1;
        } else {
            let fresh = sol.marginal_value(j, red).as_f64();
            heap.push((OrderedFloat(fresh), Reverse(j), round));
        }
    }
    Ok(sol)
}

/// Plain greedy: every round scans all non-members.
pub fn greedy_naive<T: Scalar>(red: &ReducedSet<T>, k: usize) -> Result<Solution<T>> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut sol = Solution::empty(red);
    while sol.len() < k.min(red.len()) {
        let mut best: Option<(T, usize)> = None;
        for j in (0..red.len()).filter(|&j| !sol.contains(j)) {
            let g = sol.marginal_value(j, red);
            if best.is_none_or(|(b, _)| g > b) {
                best = Some((g, j));
            }
        }
        let (_, j) = best.expect("a non-member remains");
        sol.admit(j, red, k)?;
    }
    Ok(sol)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Best `k`-subset by enumeration; the first maximizer in lexicographic
/// order wins ties.
pub fn brute_force_opt<T: Scalar>(red: &ReducedSet<T>, k: usize) -> Result<(T, Vec<usize>)> {
    let k = k.min(red.len());
    if k == 0 {
        return Ok((T::zero(), Vec::new()));
    }
    let count = binomial(red.len(), k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let mut best = (T::neg_infinity(), Vec::new());
    for combo in (0..red.len()).combinations(k) {
        let v = value_of_members(&combo, red);
        if v > best.0 {
            best = (v, combo);
        }
    }
    Ok(best)
}

/// Uniform `k`-subset without replacement.
pub fn random_baseline<T: Scalar>(red: &ReducedSet<T>, k: usize, seed: u64) -> Result<Solution<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, red.len(), k.min(red.len())).into_vec();
    picked.sort_unstable();
    Solution::from_members(&picked, red)
}

/// Elements evenly spaced along the descriptor path.
pub fn evenly_spaced_baseline<T: Scalar>(red: &ReducedSet<T>, k: usize) -> Result<Solution<T>> {
    if k >= red.len() {
        let all: Vec<usize> = (0..red.len()).collect();
        return Solution::from_members(&all, red);
    }
    Solution::from_members(&heuristic_selection(red, k), red)
}

type Cell = (i64, i64, i64);

/// Uniform voxel hash with cell size `tau` for exact radius queries.
#[derive(Clone, Debug)]
pub struct VoxelIndex<'a> {
    tau: f64,
    points: &'a [Point],
    cells: HashMap<Cell, Vec<u32>>,
}

impl<'a> VoxelIndex<'a> {
    pub fn new(points: &'a [Point], tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, tau)).or_default().push(i as u32);
        }
        Ok(Self { tau, points, cells })
    }

    /// Indices of points within `tau` of `p` (inclusive).
    pub fn neighbors<'s>(&'s self, p: &'s Point) -> impl Iterator<Item = usize> + 's {
        let (cx, cy, cz) = cell_of(p, self.tau);
        let t2 = self.tau * self.tau;
        (-1..=1)
            .flat_map(move |dx| (-1..=1).flat_map(move |dy| (-1..=1).map(move |dz| (cx + dx, cy + dy, cz + dz))))
            .filter_map(move |c| self.cells.get(&c))
            .flatten()
            .map(|&i| i as usize)
            .filter(move |&i| dist2(&self.points[i], p) <= t2)
    }

    pub fn has_neighbor(&self, p: &Point) -> bool {
        self.neighbors(p).next().is_some()
    }
}

fn cell_of(p: &Point, tau: f64) -> Cell {
    (
        (p[0] as f64 / tau).floor() as i64,
        (p[1] as f64 / tau).floor() as i64,
        (p[2] as f64 / tau).floor() as i64,
    )
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (0..3).map(|i| (a[i] as f64 - b[i] as f64).powi(2)).sum()
}

fn count_near(query: &[Point], index: &VoxelIndex<'_>) -> usize {
    query.par_iter().filter(|p| index.has_neighbor(p)).count()
}

/// Intersection over union of two clouds, where the intersection is every
/// point of either cloud within `tau` of the other cloud.
pub fn overlap_iou(a: &[Point], b: &[Point], tau: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ia = VoxelIndex::new(a, tau)?;
    let ib = VoxelIndex::new(b, tau)?;
    let near = count_near(a, &ib) + count_near(b, &ia);
    Ok(near as f64 / (a.len() + b.len()) as f64)
}

/// Greedy scan selection maximizing [`overlap_iou`] of the concatenated
/// scans against `dense`; the stand-in for exhaustive overlap search.
///
/// With `M` the concatenation of the picked scans, the intersection is
/// `Σ_s near(s, dense) + |{p ∈ dense : near(p, M)}|`, so each round only
/// needs per-scan near counts and dense-coverage bitsets.
pub fn greedy_overlap(scans: &[Vec<Point>], dense: &[Point], k: usize, tau: f64) -> Result<Vec<usize>> {
    if dense.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dense_index = VoxelIndex::new(dense, tau)?;
    let words = dense.len().div_ceil(64);
    let profiles: Vec<(usize, Vec<u64>)> = scans
        .par_iter()
        .map(|scan| {
            let mut bits = vec![0u64; words];
            let mut near = 0;
            for p in scan {
                let mut any = false;
                for j in dense_index.neighbors(p) {
                    bits[j / 64] |= 1 << (j % 64);
                    any = true;
                }
                near += any as usize;
            }
            (near, bits)
        })
        .collect();
    let mut covered = vec![0u64; words];
    let (mut near_sum, mut size_sum) = (0usize, 0usize);
    let mut picked: Vec<usize> = Vec::new();
    while picked.len() < k.min(scans.len()) {
        let mut best: Option<(f64, usize)> = None;
        for (s, (near, bits)) in profiles.iter().enumerate() {
            if picked.contains(&s) {
                continue;
            }
            let cover: u32 = covered.iter().zip(bits).map(|(c, b)| (c | b).count_ones()).sum();
            let iou = (near_sum + near + cover as usize) as f64 / (size_sum + scans[s].len() + dense.len()) as f64;
            if best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, s));
            }
        }
        let (_, s) = best.expect("an unpicked scan remains");
        near_sum += profiles[s].0;
        size_sum += scans[s].len();
        for (c, b) in covered.iter_mut().zip(&profiles[s].1) {
            *c |= b;
        }
        picked.push(s);
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Descriptor, Element};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_ground(n: usize, dim: usize, seed: u64) -> ReducedSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let els = (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                Element {
                    index: i as u64,
                    descriptor: Descriptor::normalized(v).unwrap(),
                    pose: [0.0; 3],
                    timestamp: i as f64,
                    weight: rng.random_range(0.05..1.0),
                }
            })
            .collect();
        ReducedSet::new(els, (0..n).collect(), 0.1).unwrap()
    }

    #[test]
    fn lazy_matches_naive() {
        for seed in 0..40 {
            let g = random_ground(30, 6, seed);
            for k in [1, 3, 7, 30, 40] {
                let lazy = greedy(&g, k).unwrap();
                let naive = greedy_naive(&g, k).unwrap();
                assert_eq!(lazy.members(), naive.members(), "seed {seed} k {k}");
            }
        }
    }

    #[test]
    fn greedy_k1_is_best_singleton() {
        let g = random_ground(15, 4, 3);
        let sol = greedy(&g, 1).unwrap();
        let (v, m) = brute_force_opt(&g, 1).unwrap();
        assert_eq!(sol.members(), &m[..]);
        assert!((sol.value() - v).abs() < 1e-12);
    }

    #[test]
    fn greedy_meets_its_guarantee() {
        let bound = 1.0 - (-1.0f64).exp();
        for seed in 0..50 {
            let g = random_ground(10, 4, 100 + seed);
            let (opt, _) = brute_force_opt(&g, 3).unwrap();
            let sol = greedy(&g, 3).unwrap();
            assert!(sol.value() >= bound * opt - 1e-12);
        }
    }

    #[test]
    fn brute_force_edges() {
        let g = random_ground(8, 4, 4);
        assert_eq!(brute_force_opt(&g, 0).unwrap().0, 0.0);
        assert!((brute_force_opt(&g, 8).unwrap().0 - 1.0).abs() < 1e-12);
        let big = random_ground(60, 4, 5);
        assert!(matches!(brute_force_opt(&big, 10), Err(Error::TooLarge(_))));
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(5, 7), 1);
    }

    #[test]
    fn separated_clusters_make_greedy_optimal() {
        // three tight clusters on orthogonal axes, one pick per cluster is best
        let mut els = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for c in 0..3 {
            for m in 0..3 {
                let mut v = vec![0.0f64; 6];
                v[c] = 1.0;
                v[3 + c] = rng.random_range(0.0..0.02);
                els.push(Element {
                    index: (c * 3 + m) as u64,
                    descriptor: Descriptor::normalized(v).unwrap(),
                    pose: [0.0; 3],
                    timestamp: (c * 3 + m) as f64,
                    weight: 1.0,
                });
            }
        }
        let n = els.len();
        let g = ReducedSet::new(els, (0..n).collect(), 0.1).unwrap();
        let (opt, members) = brute_force_opt(&g, 3).unwrap();
        let sol = greedy(&g, 3).unwrap();
        assert!((sol.value() - opt).abs() < 1e-12);
        let clusters: Vec<usize> = members.iter().map(|m| m / 3).sorted().collect();
        assert_eq!(clusters, vec![0, 1, 2]);
    }

    #[test]
    fn baselines_below_opt_and_reproducible() {
        let g = random_ground(12, 4, 7);
        let (opt, _) = brute_force_opt(&g, 4).unwrap();
        let r1 = random_baseline(&g, 4, 11).unwrap();
        let r2 = random_baseline(&g, 4, 11).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.len(), 4);
        let e = evenly_spaced_baseline(&g, 4).unwrap();
        assert!(r1.value() <= opt + 1e-12 && e.value() <= opt + 1e-12);
    }

    fn brute_iou(a: &[Point], b: &[Point], tau: f64) -> f64 {
        let near = |p: &Point, cloud: &[Point]| cloud.iter().any(|q| dist2(p, q) <= tau * tau);
        let n = a.iter().filter(|p| near(p, b)).count() + b.iter().filter(|p| near(p, a)).count();
        n as f64 / (a.len() + b.len()) as f64
    }

    #[test]
    fn iou_examples() {
        let grid: Vec<Point> = (0..10)
            .flat_map(|x| (0..10).map(move |y| [x as f32, y as f32, 0.0]))
            .collect();
        assert_eq!(overlap_iou(&grid, &grid, 0.5).unwrap(), 1.0);
        let far: Vec<Point> = grid.iter().map(|p| [p[0] + 100.0, p[1], p[2]]).collect();
        assert_eq!(overlap_iou(&grid, &far, 0.5).unwrap(), 0.0);
        let shifted: Vec<Point> = grid.iter().map(|p| [p[0] + 0.25, p[1], p[2]]).collect();
        assert_eq!(
            overlap_iou(&grid, &shifted, 0.5).unwrap(),
            brute_iou(&grid, &shifted, 0.5)
        );
        assert!(overlap_iou(&grid, &[], 0.5).is_err());
    }

    #[test]
    fn iou_matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mut cloud = |n: usize| -> Vec<Point> {
                (0..n)
                    .map(|_| {
                        [
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-3.0..3.0),
                            rng.random_range(-0.5..0.5),
                        ]
                    })
                    .collect()
            };
            let (a, b) = (cloud(150), cloud(90));
            let tau = 0.3;
            let fast = overlap_iou(&a, &b, tau).unwrap();
            assert_eq!(fast, brute_iou(&a, &b, tau));
            assert_eq!(fast, overlap_iou(&b, &a, tau).unwrap());
        }
    }

    #[test]
    fn greedy_overlap_matches_direct_iou() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scans: Vec<Vec<Point>> = (0..8)
            .map(|s| {
                (0..40)
                    .map(|_| [s as f32 + rng.random_range(0.0..1.5), rng.random_range(0.0..1.0), 0.0])
                    .collect()
            })
            .collect();
        let dense: Vec<Point> = (0..200)
            .map(|_| [rng.random_range(0.0..9.0), rng.random_range(0.0..1.0), 0.0])
            .collect();
        let picked = greedy_overlap(&scans, &dense, 3, 0.3).unwrap();
        // replay with the direct evaluator
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..3 {
            let best = (0..scans.len())
                .filter(|s| !chosen.contains(s))
                .map(|s| {
                    let map: Vec<Point> = chosen
                        .iter()
                        .chain([&s])
                        .flat_map(|&c| scans[c].iter().copied())
                        .collect();
                    (overlap_iou(&map, &dense, 0.3).unwrap(), s)
                })
                .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
            chosen.push(best.1);
        }
        assert_eq!(picked, chosen);
    }
}
