//! Hypersphere geometry: chordal distances, spherical-cap overlap and the
//! quartic overlap model ψ used by the descriptor ordering approximation.
//!
//! Caps always have chordal radius 1, the distance at which the null
//! element (the origin) ties with a descriptor. Overlap between two caps is
//! measured as intersection over union of their areas and estimated by
//! Monte-Carlo sampling inside the first cap.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::Descriptor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Center distance beyond which caps are treated as disjoint.
pub const DEFAULT_CUTOFF: f64 = 1.1;
/// Chordal cap radius.
pub const CAP_RADIUS: f64 = 1.0;
/// Smallest sample count accepted by the Monte-Carlo estimators.
pub const MIN_SAMPLES: usize = 10_000;
/// Dimensions above this sample the cap directly instead of by rejection.
pub const REJECTION_MAX_DIM: usize = 16;

const FIT_GRID_POINTS: usize = 45;

pub fn descriptor_distance<T: Scalar>(a: &Descriptor<T>, b: &Descriptor<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(a.distance(b))
}

/// Fitted pairwise mutual-information model.
///
/// `ψ(x) = Σ coeffs[p]·x^p` with `coeffs[0] = 1`; the fit is constrained to
/// be non-increasing on `[0, cutoff]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CapOverlapModel {
    pub dimension: usize,
    pub poly_coeffs: [f64; 5],
    pub cutoff: f64,
    pub cap_radius: f64,
    /// Largest |ψ − estimate| over the fit grid.
    pub max_residual: f64,
}

impl CapOverlapModel {
    /// Raw polynomial value.
    pub fn psi(&self, x: f64) -> f64 {
        self.poly_coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Pairwise mutual information `𝒪(d)`: ψ clamped to `[0, 1]` below the
    /// cutoff, 0 at and beyond it.
    pub fn mutual_info(&self, d: f64) -> f64 {
        if d < self.cutoff {
            self.psi(d).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

pub fn pairwise_mutual_info(model: &CapOverlapModel, d: f64) -> f64 {
    model.mutual_info(d)
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize, buf: &mut Vec<f64>) {
    loop {
        buf.clear();
        buf.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = buf.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            buf.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}

/// Inverse-CDF table for the first coordinate `t = x·c` of a uniform point
/// in the cap `t ≥ 1/2`, density `∝ (1 − t²)^((D−3)/2)`.
struct CapHeightTable {
    ts: Vec<f64>,
    cdf: Vec<f64>,
}

impl CapHeightTable {
    fn new(dim: usize) -> Self {
        const N: usize = 16_384;
        let expo = (dim as f64 - 3.0) / 2.0;
        let ts: Vec<f64> = (0..=N).map(|i| 0.5 + 0.5 * i as f64 / N as f64).collect();
        let logp: Vec<f64> = ts.iter().map(|t| expo * (1.0 - t * t).max(1e-300).ln()).collect();
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let mut cdf = vec![0.0; ts.len()];
        for i in 1..ts.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (p[i] + p[i - 1]) * (ts[i] - ts[i - 1]);
        }
        let total = cdf[N];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { ts, cdf }
    }

    fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let f = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.ts[i - 1] + f * (self.ts[i] - self.ts[i - 1])
    }
}

/// Draws `samples` uniform points of the unit-radius cap around `e_0` and
/// keeps only the first two coordinates, which is all the overlap test
/// needs since both centers lie in the `e_0, e_1` plane.
fn sample_cap_plane(dim: usize, samples: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    let mut buf = Vec::with_capacity(dim);
    if dim <= REJECTION_MAX_DIM {
        // cap of chordal radius 1 ⇔ x·c ≥ 1/2
        while out.len() < samples {
            gaussian_unit(&mut rng, dim, &mut buf);
            if buf[0] >= 0.5 {
                out.push([buf[0], buf[1]]);
            }
        }
    } else {
        let table = CapHeightTable::new(dim);
        while out.len() < samples {
            let t = table.sample(rng.random::<f64>());
            gaussian_unit(&mut rng, dim - 1, &mut buf);
            let r = (1.0 - t * t).max(0.0).sqrt();
            out.push([t, r * buf[0]]);
        }
    }
    out
}

fn second_center(d: f64) -> [f64; 2] {
    [1.0 - d * d / 2.0, d * (1.0 - d * d / 4.0).max(0.0).sqrt()]
}

fn iou_from_fraction(shared: f64) -> f64 {
    // both caps have equal area A: |A∩B| / (2A − |A∩B|)
    shared / (2.0 - shared)
}

fn overlap_from_samples(pts: &[[f64; 2]], d: f64) -> f64 {
    let c = second_center(d);
    let inside = pts.iter().filter(|p| p[0] * c[0] + p[1] * c[1] >= 0.5).count();
    iou_from_fraction(inside as f64 / pts.len() as f64)
}

/// Monte-Carlo intersection-over-union of two unit-radius caps on
/// `𝒮^{D−1}` whose centers are `d` apart (chordal).
pub fn cap_overlap_mc(dim: usize, d: f64, samples: usize, seed: u64) -> Result<f64> {
    check_mc_args(dim, samples)?;
    let pts = sample_cap_plane(dim, samples, seed);
    Ok(overlap_from_samples(&pts, d))
}

fn check_mc_args(dim: usize, samples: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_SAMPLES} Monte-Carlo samples required, got {samples}"
        )));
    }
    Ok(())
}

/// Overlap estimates on the fit grid `d ∈ [0, cutoff]`.
pub fn cap_overlap_curve(dim: usize, samples: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    check_mc_args(dim, samples)?;
    let pts = sample_cap_plane(dim, samples, seed);
    Ok((0..FIT_GRID_POINTS)
        .map(|i| {
            let d = DEFAULT_CUTOFF * i as f64 / (FIT_GRID_POINTS - 1) as f64;
            (d, overlap_from_samples(&pts, d))
        })
        .collect())
}

/// Quartic with `ψ(0) = 1` and `ψ' = −[x(a+bx)² + (L−x)(c+dx)²]`, which is
/// non-positive on `[0, L]` for every parameter choice.
fn monotone_coeffs(p: &Vector4<f64>, l: f64) -> [f64; 5] {
    let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
    [
        1.0,
        -l * c * c,
        -(a * a + 2.0 * l * c * d - c * c) / 2.0,
        -(2.0 * a * b + l * d * d - 2.0 * c * d) / 3.0,
        -(b * b - d * d) / 4.0,
    ]
}

fn monotone_jacobian_row(p: &Vector4<f64>, l: f64, x: f64) -> Vector4<f64> {
    let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
    let (x2, x3, x4) = (x * x, x * x * x, x * x * x * x);
    Vector4::new(
        -(a * x2 + 2.0 * b * x3 / 3.0),
        -(2.0 * a * x3 / 3.0 + b * x4 / 2.0),
        -(2.0 * l * c * x + (l * d - c) * x2 - 2.0 * d * x3 / 3.0),
        -(l * c * x2 + (2.0 * l * d - 2.0 * c) * x3 / 3.0 - d * x4 / 2.0),
    )
}

fn eval_poly(coeffs: &[f64; 5], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn sum_sq(points: &[(f64, f64)], coeffs: &[f64; 5]) -> f64 {
    points.iter().map(|&(x, y)| (eval_poly(coeffs, x) - y).powi(2)).sum()
}

/// Levenberg–Marquardt fit of the monotone quartic to `(d, overlap)` pairs.
fn fit_monotone_quartic(points: &[(f64, f64)], l: f64) -> [f64; 5] {
    let starts = [
        Vector4::new(0.3, 0.1, 1.0 / l, 0.1),
        Vector4::new(1.0, -0.5, 2.0, -1.0),
        Vector4::new(0.1, 0.0, 3.0, -2.5),
        Vector4::new(-0.5, 0.5, 1.0, 0.0),
    ];
    let mut best = (f64::INFINITY, monotone_coeffs(&starts[0], l));
    for start in starts {
        let mut p = start;
        let mut cost = sum_sq(points, &monotone_coeffs(&p, l));
        let mut lambda = 1e-3;
        for _ in 0..500 {
            let coeffs = monotone_coeffs(&p, l);
            let mut jtj = Matrix4::<f64>::zeros();
            let mut jtr = Vector4::<f64>::zeros();
            for &(x, y) in points {
                let j = monotone_jacobian_row(&p, l, x);
                let r = eval_poly(&coeffs, x) - y;
                jtj += j * j.transpose();
                jtr += j * r;
            }
            let mut improved = false;
            for _ in 0..20 {
                let mut damped = jtj;
                for i in 0..4 {
                    damped[(i, i)] += lambda * (jtj[(i, i)] + 1e-9);
                }
                let Some(step) = damped.lu().solve(&(-jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand = p + step;
                let c = sum_sq(points, &monotone_coeffs(&cand, l));
                if c < cost {
                    p = cand;
                    let gain = cost - c;
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = gain > 1e-15 * (1.0 + cost);
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        if cost < best.0 {
            best = (cost, monotone_coeffs(&p, l));
        }
    }
    best.1
}

/// Estimates cap overlap on a grid over `[0, 1.1]` and fits ψ.
pub fn fit_cap_overlap(dim: usize, samples: usize, seed: u64) -> Result<CapOverlapModel> {
    let curve = cap_overlap_curve(dim, samples, seed)?;
    let coeffs = fit_monotone_quartic(&curve, DEFAULT_CUTOFF);
    let max_residual = curve
        .iter()
        .map(|&(x, y)| (eval_poly(&coeffs, x) - y).abs())
        .fold(0.0, f64::max);
    Ok(CapOverlapModel {
        dimension: dim,
        poly_coeffs: coeffs,
        cutoff: DEFAULT_CUTOFF,
        cap_radius: CAP_RADIUS,
        max_residual,
    })
}

/// Monte-Carlo share of `𝒮^{D−1}` within chordal distance 1 of any of the
/// given descriptors.
///
/// The same sample points (fixed by `seed`) are tested against every set,
/// so for a fixed seed the estimate is itself a monotone submodular
/// coverage function.
pub fn mc_coverage_value<T: Scalar>(solution: &[Descriptor<T>], samples: usize, seed: u64) -> Result<f64> {
    if solution.is_empty() {
        return Ok(0.0);
    }
    let dim = solution[0].dim();
    if let Some(d) = solution.iter().find(|d| d.dim() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: d.dim(),
        });
    }
    check_mc_args(dim, samples)?;
    let centers: Vec<Vec<f64>> = solution
        .iter()
        .map(|d| d.coords().iter().map(|c| c.as_f64()).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(dim);
    let mut covered = 0usize;
    for _ in 0..samples {
        gaussian_unit(&mut rng, dim, &mut buf);
        // ||x − c|| ≤ 1 ⇔ x·c ≥ 1/2 on the unit sphere
        if centers
            .iter()
            .any(|c| c.iter().zip(&buf).map(|(a, b)| a * b).sum::<f64>() >= 0.5)
        {
            covered += 1;
        }
    }
    Ok(covered as f64 / samples as f64)
}

/// Text cache of fitted ψ models, one record per line:
/// `dimension seed samples cutoff c0 c1 c2 c3 c4 max_residual`.
#[derive(Clone, Debug)]
pub struct PsiCache {
    path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiRecord {
    pub seed: u64,
    pub samples: usize,
    pub model: CapOverlapModel,
}

impl PsiRecord {
    pub fn to_line(&self) -> String {
        let c = &self.model.poly_coeffs;
        format!(
            "{} {} {} {} {} {} {} {} {} {}",
            self.model.dimension,
            self.seed,
            self.samples,
            self.model.cutoff,
            c[0],
            c[1],
            c[2],
            c[3],
            c[4],
            self.model.max_residual
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(Error::Config(format!(
                "psi cache record needs 10 fields, found {}",
                fields.len()
            )));
        }
        let bad = |what: &str| Error::Config(format!("psi cache: bad {what} in `{line}`"));
        let num = |i: usize, what: &str| fields[i].parse::<f64>().map_err(|_| bad(what));
        let mut coeffs = [0.0; 5];
        for (p, c) in coeffs.iter_mut().enumerate() {
            *c = num(4 + p, "coefficient")?;
        }
        Ok(Self {
            seed: fields[1].parse().map_err(|_| bad("seed"))?,
            samples: fields[2].parse().map_err(|_| bad("samples"))?,
            model: CapOverlapModel {
                dimension: fields[0].parse().map_err(|_| bad("dimension"))?,
                poly_coeffs: coeffs,
                cutoff: num(3, "cutoff")?,
                cap_radius: CAP_RADIUS,
                max_residual: num(9, "residual")?,
            },
        })
    }
}

impl PsiCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> Result<Vec<PsiRecord>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(PsiRecord::parse)
            .collect()
    }

    pub fn lookup(&self, dim: usize, samples: usize, seed: u64) -> Result<Option<CapOverlapModel>> {
        Ok(self
            .records()?
            .into_iter()
            .find(|r| r.model.dimension == dim && r.samples == samples && r.seed == seed)
            .map(|r| r.model))
    }

    pub fn append(&self, record: &PsiRecord) -> Result<()> {
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let fresh = !self.path.exists();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        if fresh {
            writeln!(f, "# dimension seed samples cutoff c0 c1 c2 c3 c4 max_residual")?;
        }
        writeln!(f, "{}", record.to_line())?;
        Ok(())
    }

    /// Returns the cached model or fits and records a new one.
    pub fn load_or_fit(&self, dim: usize, samples: usize, seed: u64) -> Result<CapOverlapModel> {
        if let Some(m) = self.lookup(dim, samples, seed)? {
            return Ok(m);
        }
        let model = fit_cap_overlap(dim, samples, seed)?;
        self.append(&PsiRecord {
            seed,
            samples,
            model: model.clone(),
        })?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Descriptor<f64> {
        Descriptor::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = unit(&[1.0, 0.0, 0.0]);
        let b = unit(&[0.0, 1.0, 0.0]);
        let c = unit(&[-1.0, 0.0, 0.0]);
        assert_eq!(descriptor_distance(&a, &a).unwrap(), 0.0);
        assert!((descriptor_distance(&a, &c).unwrap() - 2.0).abs() < 1e-15);
        assert!((descriptor_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let d = unit(&[1.0, 0.0]);
        assert!(matches!(
            descriptor_distance(&a, &d),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coincident_caps_overlap_fully() {
        for dim in [3, 8, 64] {
            assert_eq!(cap_overlap_mc(dim, 0.0, 10_000, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn rejects_small_sample_counts_and_dimensions() {
        assert!(fit_cap_overlap(8, 100, 0).is_err());
        assert!(matches!(
            fit_cap_overlap(1, 20_000, 0),
            Err(Error::DimensionTooSmall(1))
        ));
    }

    #[test]
    fn cap_height_table_matches_rejection_statistics() {
        // mean of x·c inside the cap for D = 16, compared across both samplers
        let table = CapHeightTable::new(16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let direct: f64 = (0..n).map(|_| table.sample(rng.random())).sum::<f64>() / n as f64;
        let rejected = sample_cap_plane(16, 50_000, 6);
        let mean: f64 = rejected.iter().map(|p| p[0]).sum::<f64>() / rejected.len() as f64;
        assert!((direct - mean).abs() < 3e-3, "{direct} vs {mean}");
    }

    #[test]
    fn psi_model_shape() {
        for dim in [3, 8, 64] {
            let m = fit_cap_overlap(dim, 20_000, 11).unwrap();
            assert_eq!(m.psi(0.0), 1.0);
            assert!(m.max_residual <= 0.03, "D={dim} residual {}", m.max_residual);
            let mut prev = f64::INFINITY;
            for i in 0..=1100 {
                let v = m.mutual_info(i as f64 * 1e-3);
                assert!(v <= prev + 1e-12, "D={dim} not monotone at {i}");
                prev = v;
            }
            assert_eq!(m.mutual_info(1.1), 0.0);
            assert_eq!(m.mutual_info(1.5), 0.0);
            assert_eq!(m.mutual_info(0.0), 1.0);
        }
    }

    #[test]
    fn mutual_info_is_clamped_polynomial() {
        let m = fit_cap_overlap(8, 20_000, 3).unwrap();
        let c = m.poly_coeffs;
        let x = 0.6f64;
        let direct = c[0] + c[1] * x + c[2] * x * x + c[3] * x.powi(3) + c[4] * x.powi(4);
        assert!((m.mutual_info(0.6) - direct.clamp(0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn fit_is_deterministic() {
        assert_eq!(
            fit_cap_overlap(8, 10_000, 9).unwrap(),
            fit_cap_overlap(8, 10_000, 9).unwrap()
        );
    }

    #[test]
    fn coverage_of_empty_and_antipodal_sets() {
        let empty: Vec<Descriptor<f64>> = vec![];
        assert_eq!(mc_coverage_value(&empty, 10_000, 0).unwrap(), 0.0);
        let a = unit(&[0.0, 0.0, 1.0]);
        let b = unit(&[0.0, 0.0, -1.0]);
        let one = mc_coverage_value(std::slice::from_ref(&a), 100_000, 4).unwrap();
        let two = mc_coverage_value(&[a, b], 100_000, 4).unwrap();
        assert!((one - 0.25).abs() < 0.01, "{one}");
        assert!((two - 0.5).abs() < 0.01, "{two}");
    }

    #[test]
    fn psi_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PsiCache::new(dir.path().join("sub/psi.txt"));
        assert!(cache.lookup(8, 10_000, 1).unwrap().is_none());
        let fitted = cache.load_or_fit(8, 10_000, 1).unwrap();
        let again = cache.load_or_fit(8, 10_000, 1).unwrap();
        assert_eq!(fitted, again);
        assert_eq!(cache.records().unwrap().len(), 1);
        assert!(PsiRecord::parse("1 2 3").is_err());
    }
}
