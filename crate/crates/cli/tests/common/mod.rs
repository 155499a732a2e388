#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mapdistill"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Runs and asserts success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            files(&p, out);
        } else {
            out.push(p);
        }
    }
}

/// SHA-256 over relative paths and contents of every file under `dir`.
pub fn hash_dir(dir: &Path) -> String {
    let mut all = Vec::new();
    files(dir, &mut all);
    all.sort();
    let mut h = Sha256::new();
    for p in all {
        h.update(p.strip_prefix(dir).unwrap().to_str().unwrap().as_bytes());
        h.update([0]);
        h.update(fs::read(&p).unwrap());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(p: &Path) -> String {
    Sha256::digest(fs::read(p).unwrap())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Rows of a CSV file without the header.
pub fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

/// Fraction of a unit-radius cap on S² shared with another whose center is
/// `d` away (chordal), by quadrature over the polar angle. Returns IoU.
pub fn lens_iou(d: f64) -> f64 {
    let rho = std::f64::consts::FRAC_PI_3;
    let gamma = 2.0 * (d / 2.0).asin();
    if gamma == 0.0 {
        return 1.0;
    }
    let n = 200_000;
    let h = rho / n as f64;
    let mut shared = 0.0;
    for i in 0..n {
        let t = (i as f64 + 0.5) * h;
        let c = (rho.cos() - t.cos() * gamma.cos()) / (t.sin() * gamma.sin());
        let phi = c.clamp(-1.0, 1.0).acos();
        shared += 2.0 * phi * t.sin() * h;
    }
    // cap area 2π(1 − cos ρ) = π
    shared / (2.0 * std::f64::consts::PI - shared)
}
