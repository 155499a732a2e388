//! Synthetic sessions.
//!
//! Two generators: a descriptor-only walk on the hypersphere with
//! configurable dwell segments, and a planar world scanned by a simulated
//! range sensor whose descriptors are polar occupancy histograms.
//!
//! Specs are read from TOML:
//!
//! ```toml
//! schema_version = 1
//!
//! [trajectory]
//! dimension = 16
//! num_elements = 2000
//! step_size = 0.01
//! noise = 0.05
//! dwell_segments = [{ start = 100, length = 500, jitter = 0.0005 }]
//! ```
//!
//! or a `[world]` table (see [`WorldSpec`]).

use std::collections::HashSet;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use crate::baselines::Point;
use crate::domain::{Descriptor, InputLog};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const ANGLE_BINS: usize = 64;
pub const RANGE_BINS: usize = 4;
/// Scans merged into the dense evaluation map.
pub const DENSE_SCANS: usize = 250;
pub const DENSE_VOXEL: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellSegment {
    pub start: usize,
    pub length: usize,
    /// Largest tangent offset of a dwell sample from the dwell center.
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub dimension: usize,
    pub num_elements: usize,
    /// Chordal gap of every walking step.
    pub step_size: f64,
    #[serde(default)]
    pub dwell_segments: Vec<DwellSegment>,
    /// Per-step perturbation of the walking direction.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Pose distance per unit of descriptor distance.
    #[serde(default = "default_meters_per_unit")]
    pub meters_per_unit: f64,
    /// Points in each synthetic scan payload.
    #[serde(default = "default_payload_points")]
    pub payload_points: usize,
}

fn default_meters_per_unit() -> f64 {
    30.0
}

fn default_payload_points() -> usize {
    256
}

impl TrajectorySpec {
    pub fn new(dimension: usize, num_elements: usize, step_size: f64, seed: u64) -> Self {
        Self {
            dimension,
            num_elements,
            step_size,
            dwell_segments: Vec::new(),
            noise: 0.0,
            seed,
            meters_per_unit: default_meters_per_unit(),
            payload_points: default_payload_points(),
        }
    }

    /// The gap bound every generated log satisfies.
    pub fn sigma(&self) -> f64 {
        2.0 * self.step_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.dimension < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dimension));
        }
        if self.num_elements == 0 {
            return bad("num_elements must be positive".into());
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return bad(format!("step_size must lie in (0, 1], got {}", self.step_size));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(self.meters_per_unit > 0.0) {
            return bad("meters_per_unit must be positive".into());
        }
        let mut end = 0;
        for s in &self.dwell_segments {
            if s.start < end || s.start + s.length > self.num_elements {
                return bad(format!(
                    "dwell segment at {} (length {}) overlaps another or leaves the log",
                    s.start, s.length
                ));
            }
            if !(s.jitter >= 0.0 && s.jitter <= self.step_size) {
                return bad(format!("dwell jitter {} must lie in [0, step_size]", s.jitter));
            }
            end = s.start + s.length;
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|c| *c /= n);
}

/// Removes the component of `v` along unit `x`.
fn reject(v: &mut [f64], x: &[f64]) {
    let p = dot(v, x);
    v.iter_mut().zip(x).for_each(|(c, xi)| *c -= p * xi);
}

fn random_tangent(rng: &mut ChaCha8Rng, x: &[f64]) -> Vec<f64> {
    loop {
        let mut t = gaussian(rng, x.len());
        reject(&mut t, x);
        if dot(&t, &t) > 1e-12 {
            normalize(&mut t);
            return t;
        }
    }
}

/// Walks the hypersphere with fixed chordal steps along a slowly turning
/// direction; dwell segments hold position and emit jittered copies.
pub fn gen_descriptor_log(spec: &TrajectorySpec) -> Result<InputLog<f64>> {
    spec.validate()?;
    let dim = spec.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = gaussian(&mut rng, dim);
    normalize(&mut x);
    let mut t = random_tangent(&mut rng, &x);
    let theta = 2.0 * (spec.step_size / 2.0).asin();
    let (sin_t, cos_t) = theta.sin_cos();

    let mut heading: f64 = rng.random_range(0.0..TAU);
    let mut pose = [0.0f64; 3];
    let mut prev: Option<Vec<f64>> = None;
    let mut samples = Vec::with_capacity(spec.num_elements);
    let mut seg = spec.dwell_segments.iter().peekable();

    for i in 0..spec.num_elements {
        while seg.peek().is_some_and(|s| i >= s.start + s.length) {
            seg.next();
        }
        let dwelling = seg.peek().is_some_and(|s| i >= s.start);
        let emitted = if dwelling {
            let jitter = seg.peek().unwrap().jitter;
            let u = random_tangent(&mut rng, &x);
            let r = jitter * rng.random::<f64>();
            let mut y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + r * b).collect();
            normalize(&mut y);
            y
        } else {
            if i > 0 {
                if spec.noise > 0.0 {
                    let mut g = gaussian(&mut rng, dim);
                    reject(&mut g, &x);
                    t.iter_mut().zip(&g).for_each(|(a, b)| *a += spec.noise * b);
                    reject(&mut t, &x);
                    normalize(&mut t);
                }
                let nx: Vec<f64> = x.iter().zip(&t).map(|(a, b)| cos_t * a + sin_t * b).collect();
                let nt: Vec<f64> = x.iter().zip(&t).map(|(a, b)| -sin_t * a + cos_t * b).collect();
                x = nx;
                t = nt;
                // keep the frame orthonormal against drift
                normalize(&mut x);
                reject(&mut t, &x);
                normalize(&mut t);
            }
            x.clone()
        };
        if let Some(p) = &prev {
            let gap = p.iter().zip(&emitted).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            heading += 0.02 + 0.01 * rng.sample::<f64, _>(StandardNormal);
            let step = gap * spec.meters_per_unit;
            pose[0] += step * heading.cos();
            pose[1] += step * heading.sin();
            pose[2] += 0.05 * step * (heading / 3.0).sin();
        }
        prev = Some(emitted.clone());
        samples.push((Descriptor::normalized(emitted)?, pose, i as f64 * 0.1));
    }
    let log = InputLog::from_samples(samples)?;
    InputLog::new(log.into_elements(), spec.sigma())
}

/// Seeded random points around each pose, one payload per element.
pub fn trajectory_payloads(spec: &TrajectorySpec, log: &InputLog<f64>) -> Vec<Vec<Point>> {
    log.elements()
        .par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ e.index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            (0..spec.payload_points)
                .map(|_| {
                    [
                        (e.pose[0] + rng.random_range(-10.0..10.0)) as f32,
                        (e.pose[1] + rng.random_range(-10.0..10.0)) as f32,
                        (e.pose[2] + rng.random_range(-1.0..1.0)) as f32,
                    ]
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Slab test: (entry, exit) parameters along the ray, if it meets the box.
    fn slab(&self, o: [f64; 2], d: [f64; 2]) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..2 {
            if d[i].abs() < 1e-15 {
                if o[i] < self.min[i] || o[i] > self.max[i] {
                    return None;
                }
            } else {
                let a = (self.min[i] - o[i]) / d[i];
                let b = (self.max[i] - o[i]) / d[i];
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    fn hit(&self, o: [f64; 2], d: [f64; 2]) -> Option<f64> {
        let f = [o[0] - self.center[0], o[1] - self.center[1]];
        let b = f[0] * d[0] + f[1] * d[1];
        let c = f[0] * f[0] + f[1] * f[1] - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let t = -b - disc.sqrt();
        (t > 0.0).then_some(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Maximum range, meters.
    pub range: f64,
    pub beams: usize,
    /// Angular field of view, radians.
    #[serde(default = "full_circle")]
    pub span: f64,
}

fn full_circle() -> f64 {
    TAU
}

fn default_world_dimension() -> usize {
    ANGLE_BINS * RANGE_BINS
}

/// Planar world: the bounds act as the outer wall; `rects` and `circles`
/// are solid obstacles. The sensor follows the waypoint polyline at the
/// per-segment speeds (m/s), scanning at `scan_rate` Hz.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub bounds: Rect,
    #[serde(default)]
    pub rects: Vec<Rect>,
    #[serde(default)]
    pub circles: Vec<Circle>,
    pub sensor: SensorSpec,
    pub waypoints: Vec<[f64; 2]>,
    pub speeds: Vec<f64>,
    pub scan_rate: f64,
    /// Half-width of the uniform range noise, meters.
    #[serde(default)]
    pub range_noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_world_dimension")]
    pub dimension: usize,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.sensor.range > 0.0) {
            return bad(format!("sensor range must be positive, got {}", self.sensor.range));
        }
        if self.sensor.beams == 0 {
            return bad("sensor needs at least one beam".into());
        }
        if !(self.sensor.span > 0.0 && self.sensor.span <= TAU) {
            return bad(format!("sensor span must lie in (0, 2π], got {}", self.sensor.span));
        }
        if self.waypoints.len() < 2 {
            return bad("trajectory needs at least two waypoints".into());
        }
        if self.speeds.len() != self.waypoints.len() - 1 {
            return bad(format!(
                "{} speeds given for {} segments",
                self.speeds.len(),
                self.waypoints.len() - 1
            ));
        }
        if self.speeds.iter().any(|&s| !(s > 0.0)) {
            return bad("speeds must be positive".into());
        }
        if let Some(w) = self.waypoints.iter().find(|w| !self.bounds.contains(**w)) {
            return bad(format!("waypoint {w:?} lies outside the world bounds"));
        }
        if !(self.scan_rate > 0.0) {
            return bad("scan_rate must be positive".into());
        }
        if !(self.range_noise >= 0.0) {
            return bad("range_noise must be non-negative".into());
        }
        if self.dimension < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dimension));
        }
        Ok(())
    }

    /// Sensor positions at every scan time along the polyline.
    pub fn poses(&self) -> Vec<[f64; 2]> {
        let segs: Vec<(f64, f64)> = self
            .waypoints
            .windows(2)
            .zip(&self.speeds)
            .map(|(w, &v)| (((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt(), v))
            .collect();
        let total: f64 = segs.iter().map(|(l, v)| l / v).sum();
        let count = (total * self.scan_rate).floor() as usize + 1;
        (0..count)
            .map(|m| {
                let mut t = m as f64 / self.scan_rate;
                for (s, &(len, v)) in segs.iter().enumerate() {
                    let dur = len / v;
                    if t <= dur || s + 1 == segs.len() {
                        let f = if len > 0.0 { (t * v / len).min(1.0) } else { 0.0 };
                        let (a, b) = (self.waypoints[s], self.waypoints[s + 1]);
                        return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
                    }
                    t -= dur;
                }
                unreachable!("at least one segment")
            })
            .collect()
    }

    /// Nearest obstacle hit along a unit ray, within sensor range.
    pub fn cast(&self, o: [f64; 2], d: [f64; 2]) -> Option<f64> {
        let mut best = self
            .bounds
            .slab(o, d)
            .map(|(_, exit)| exit)
            .filter(|&t| t > 0.0)
            .unwrap_or(f64::INFINITY);
        for r in &self.rects {
            if let Some((enter, _)) = r.slab(o, d) {
                if enter > 0.0 {
                    best = best.min(enter);
                }
            }
        }
        for c in &self.circles {
            if let Some(t) = c.hit(o, d) {
                best = best.min(t);
            }
        }
        (best <= self.sensor.range).then_some(best)
    }

    /// Hit points of one scan, in world coordinates at z = 0.
    pub fn scan(&self, o: [f64; 2], rng: Option<&mut ChaCha8Rng>) -> Vec<Point> {
        let beams = self.sensor.beams;
        let span = self.sensor.span;
        let step = if span >= TAU {
            span / beams as f64
        } else {
            span / (beams.max(2) - 1) as f64
        };
        let start = if span >= TAU { 0.0 } else { -span / 2.0 };
        let mut rng = rng;
        (0..beams)
            .filter_map(|b| {
                let a = start + b as f64 * step;
                let d = [a.cos(), a.sin()];
                let mut r = self.cast(o, d)?;
                if let Some(g) = rng.as_deref_mut() {
                    if self.range_noise > 0.0 {
                        r = (r + g.random_range(-self.range_noise..=self.range_noise)).max(0.0);
                    }
                }
                Some([(o[0] + r * d[0]) as f32, (o[1] + r * d[1]) as f32, 0.0])
            })
            .collect()
    }
}

/// Polar occupancy histogram (angle-major, bilinear binning) of scan
/// points around `origin`, padded or truncated to `dim` and normalized.
pub fn scan_descriptor(points: &[Point], origin: [f64; 2], max_range: f64, dim: usize) -> Result<Descriptor<f64>> {
    let mut hist = vec![0.0f64; ANGLE_BINS * RANGE_BINS];
    for p in points {
        let (dx, dy) = (p[0] as f64 - origin[0], p[1] as f64 - origin[1]);
        let angle = dy.atan2(dx).rem_euclid(TAU);
        let fa = angle / TAU * ANGLE_BINS as f64 - 0.5;
        let fr = ((dx * dx + dy * dy).sqrt() / max_range * RANGE_BINS as f64 - 0.5).clamp(0.0, (RANGE_BINS - 1) as f64);
        let a0 = fa.floor();
        let wa = fa - a0;
        let r0 = fr.floor().min((RANGE_BINS - 2) as f64);
        let wr = fr - r0;
        for (da, wa) in [(0, 1.0 - wa), (1, wa)] {
            let ai = (a0 as i64 + da).rem_euclid(ANGLE_BINS as i64) as usize;
            for (dr, wr) in [(0usize, 1.0 - wr), (1, wr)] {
                hist[ai * RANGE_BINS + r0 as usize + dr] += wa * wr;
            }
        }
    }
    hist.resize(dim, 0.0);
    if hist.iter().all(|&h| h == 0.0) {
        return Err(Error::Degenerate("scan has no returns in the descriptor bins".into()));
    }
    Descriptor::normalized(hist)
}

/// Generated session: aligned log, per-element payloads and optionally the
/// dense evaluation map.
#[derive(Clone, Debug)]
pub struct Session {
    pub log: InputLog<f64>,
    pub payloads: Vec<Vec<Point>>,
    pub dense_map: Option<Vec<Point>>,
}

/// Keeps the first point in each voxel of edge `voxel`.
pub fn voxel_filter(points: &[Point], voxel: f64) -> Vec<Point> {
    let mut seen = HashSet::new();
    points
        .iter()
        .filter(|p| {
            seen.insert((
                (p[0] as f64 / voxel).floor() as i64,
                (p[1] as f64 / voxel).floor() as i64,
                (p[2] as f64 / voxel).floor() as i64,
            ))
        })
        .copied()
        .collect()
}

/// Up to [`DENSE_SCANS`] evenly spaced scans merged and voxel filtered.
pub fn dense_map(payloads: &[Vec<Point>]) -> Vec<Point> {
    let n = payloads.len();
    let picks: Vec<usize> = if n <= DENSE_SCANS {
        (0..n).collect()
    } else {
        let mut v: Vec<usize> = (0..DENSE_SCANS)
            .map(|i| (i as f64 * (n - 1) as f64 / (DENSE_SCANS - 1) as f64).round() as usize)
            .collect();
        v.dedup();
        v
    };
    let merged: Vec<Point> = picks.iter().flat_map(|&i| payloads[i].iter().copied()).collect();
    voxel_filter(&merged, DENSE_VOXEL)
}

pub fn gen_world_session(spec: &WorldSpec) -> Result<Session> {
    spec.validate()?;
    let poses = spec.poses();
    let scans: Vec<(Vec<Point>, Descriptor<f64>)> = poses
        .par_iter()
        .enumerate()
        .map(|(m, &o)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (m as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let pts = spec.scan(o, Some(&mut rng));
            let desc = scan_descriptor(&pts, o, spec.sensor.range, spec.dimension)
                .map_err(|_| Error::Degenerate(format!("scan {m} at {o:?} has no returns within sensor range")))?;
            Ok((pts, desc))
        })
        .collect::<Result<_>>()?;
    let rate = spec.scan_rate;
    let (payloads, descs): (Vec<_>, Vec<_>) = scans.into_iter().unzip();
    let log = InputLog::from_samples(
        descs
            .into_iter()
            .zip(&poses)
            .enumerate()
            .map(|(m, (d, p))| (d, [p[0], p[1], 0.0], m as f64 / rate)),
    )?;
    let dense = dense_map(&payloads);
    Ok(Session {
        log,
        payloads,
        dense_map: Some(dense),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum SynthSpec {
    Trajectory(TrajectorySpec),
    World(WorldSpec),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    schema_version: u32,
    trajectory: Option<TrajectorySpec>,
    world: Option<WorldSpec>,
}

impl SynthSpec {
    /// Parses a TOML spec; parse errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        match (file.trajectory, file.world) {
            (Some(t), None) => Ok(Self::Trajectory(t)),
            (None, Some(w)) => Ok(Self::World(w)),
            _ => Err(Error::Config(
                "spec needs exactly one of a [trajectory] or a [world] table".into(),
            )),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::Trajectory(t) => t.seed = seed,
            Self::World(w) => w.seed = seed,
        }
    }

    pub fn generate(&self) -> Result<Session> {
        match self {
            Self::Trajectory(spec) => {
                let log = gen_descriptor_log(spec)?;
                let payloads = trajectory_payloads(spec, &log);
                Ok(Session {
                    log,
                    payloads,
                    dense_map: None,
                })
            }
            Self::World(spec) => gen_world_session(spec),
        }
    }
}
