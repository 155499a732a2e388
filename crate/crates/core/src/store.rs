//! Session persistence and scan loading.
//!
//! A session directory holds `session.omdl` (descriptor log), one payload
//! file per scan under `scans/<index>.bin`, and optionally `dense_map.bin`
//! with the evaluation map. Everything is little-endian.
//!
//! ```text
//! session.omdl  "OMDL" u16 version, u16 dim, u64 count, f64 sigma,
//!               then per element: u64 index, f64 t, 3×f64 pose, f64 weight, dim×f32
//! <payload>     u64 count, then count × 3×f32
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::baselines::Point;
use crate::domain::{Descriptor, Element, InputLog};
use crate::error::{Error, Result};
use crate::streaming::PreloadSignal;

pub const MAGIC: &[u8; 4] = b"OMDL";
pub const FORMAT_VERSION: u16 = 1;
pub const SESSION_FILE: &str = "session.omdl";
pub const SCANS_DIR: &str = "scans";
pub const DENSE_MAP_FILE: &str = "dense_map.bin";

/// Largest deviation from unit norm accepted for a stored descriptor.
const STORED_NORM_TOLERANCE: f64 = 1e-5;

const HEADER_LEN: usize = 4 + 2 + 2 + 8 + 8;

pub fn encode_session(log: &InputLog<f64>) -> Result<Vec<u8>> {
    let dim = log.dim();
    let dim16 =
        u16::try_from(dim).map_err(|_| Error::InvalidParameter(format!("dimension {dim} does not fit the format")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + log.len() * (48 + 4 * dim));
    out.extend_from_slice(MAGIC);
    out.write_u16::<LE>(FORMAT_VERSION)?;
    out.write_u16::<LE>(dim16)?;
    out.write_u64::<LE>(log.len() as u64)?;
    out.write_f64::<LE>(log.sigma())?;
    for e in log.elements() {
        out.write_u64::<LE>(e.index)?;
        out.write_f64::<LE>(e.timestamp)?;
        for p in e.pose {
            out.write_f64::<LE>(p)?;
        }
        out.write_f64::<LE>(e.weight)?;
        for &c in e.descriptor.coords() {
            out.write_f32::<LE>(c as f32)?;
        }
    }
    Ok(out)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Truncated
    } else {
        Error::Io(e)
    }
}

/// Parses a session. Descriptors are widened from f32 without
/// renormalization so that re-encoding reproduces the input bytes.
pub fn decode_session(bytes: &[u8]) -> Result<InputLog<f64>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Cursor::new(&bytes[4..]);
    let version = r.read_u16::<LE>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dim = r.read_u16::<LE>().map_err(truncated)? as usize;
    let count = r.read_u64::<LE>().map_err(truncated)?;
    let sigma = r.read_f64::<LE>().map_err(truncated)?;
    let record = 48 + 4 * dim as u64;
    let body = bytes.len() as u64 - HEADER_LEN as u64;
    if body < count.saturating_mul(record) {
        return Err(Error::Truncated);
    }
    if body > count * record {
        return Err(Error::Contract(format!(
            "session holds {} trailing bytes beyond {count} records",
            body - count * record
        )));
    }
    let mut elements = Vec::with_capacity(count as usize);
    let mut coords32 = vec![0f32; dim];
    for _ in 0..count {
        let index = r.read_u64::<LE>().map_err(truncated)?;
        let timestamp = r.read_f64::<LE>().map_err(truncated)?;
        let mut pose = [0.0; 3];
        for p in &mut pose {
            *p = r.read_f64::<LE>().map_err(truncated)?;
        }
        let weight = r.read_f64::<LE>().map_err(truncated)?;
        r.read_f32_into::<LE>(&mut coords32).map_err(truncated)?;
        let coords: Vec<f64> = coords32.iter().map(|&c| c as f64).collect();
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STORED_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm {
                norm,
                tolerance: STORED_NORM_TOLERANCE,
            });
        }
        elements.push(Element {
            index,
            descriptor: Descriptor::from_raw(coords)?,
            pose,
            timestamp,
            weight,
        });
    }
    InputLog::new(elements, sigma)
}

pub fn write_session(path: &Path, log: &InputLog<f64>) -> Result<()> {
    fs::write(path, encode_session(log)?)?;
    Ok(())
}

pub fn read_session(path: &Path) -> Result<InputLog<f64>> {
    decode_session(&fs::read(path)?)
}

pub fn encode_points(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 12 * points.len());
    out.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_points(bytes: &[u8]) -> Result<Vec<Point>> {
    let mut r = Cursor::new(bytes);
    let count = r.read_u64::<LE>().map_err(truncated)?;
    if (bytes.len() as u64 - 8) < count.saturating_mul(12) {
        return Err(Error::Truncated);
    }
    let mut flat = vec![0f32; count as usize * 3];
    r.read_f32_into::<LE>(&mut flat).map_err(truncated)?;
    let mut rest = Vec::new();
    if r.read_to_end(&mut rest)? > 0 {
        return Err(Error::Contract("trailing bytes after point payload".into()));
    }
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    fs::write(path, encode_points(points))?;
    Ok(())
}

pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    match fs::read(path) {
        Ok(bytes) => decode_points(&bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingPayload(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

/// Handle on a session's payload directory. Clones share the load counter.
#[derive(Clone, Debug)]
pub struct ScanStore {
    root: PathBuf,
    loads: Arc<AtomicUsize>,
}

impl ScanStore {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            loads: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn payload_path(&self, index: u64) -> PathBuf {
        self.root.join(SCANS_DIR).join(format!("{index}.bin"))
    }

    pub fn load(&self, index: u64) -> Result<Vec<Point>> {
        let pts = read_points(&self.payload_path(index))?;
        self.loads.fetch_add(1, Ordering::SeqCst);
        Ok(pts)
    }

    /// Payload loads performed through this store and its clones.
    pub fn load_count(&self) -> usize {
        self.loads.load(Ordering::SeqCst)
    }

    pub fn dense_map(&self) -> Result<Option<Vec<Point>>> {
        let path = self.root.join(DENSE_MAP_FILE);
        if path.exists() {
            read_points(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Every element of `log` has a payload file.
    pub fn verify(&self, log: &InputLog<f64>) -> Result<()> {
        for e in log.elements() {
            let p = self.payload_path(e.index);
            if !p.is_file() {
                return Err(Error::MissingPayload(p));
            }
        }
        Ok(())
    }
}

/// Writes a complete session directory.
pub fn write_session_dir(
    dir: &Path,
    log: &InputLog<f64>,
    payloads: &[Vec<Point>],
    dense_map: Option<&[Point]>,
) -> Result<ScanStore> {
    if payloads.len() != log.len() {
        return Err(Error::Contract(format!(
            "{} payloads for {} log elements",
            payloads.len(),
            log.len()
        )));
    }
    fs::create_dir_all(dir.join(SCANS_DIR))?;
    write_session(&dir.join(SESSION_FILE), log)?;
    let store = ScanStore::open(dir);
    for (e, pts) in log.elements().iter().zip(payloads) {
        write_points(&store.payload_path(e.index), pts)?;
    }
    if let Some(dense) = dense_map {
        write_points(&dir.join(DENSE_MAP_FILE), dense)?;
    }
    Ok(store)
}

pub fn open_session_dir(dir: &Path) -> Result<(InputLog<f64>, ScanStore)> {
    let log = read_session(&dir.join(SESSION_FILE))?;
    Ok((log, ScanStore::open(dir)))
}

/// Concatenates payloads in ascending scan order.
fn assemble(ids: &[u64], cache: &HashMap<u64, Vec<Point>>) -> Vec<Point> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.iter().flat_map(|id| cache[id].iter().copied()).collect()
}

/// Loads `ids` one after another and assembles the map.
pub fn serial_load(store: &ScanStore, ids: &[u64]) -> Result<(Vec<Point>, Duration)> {
    let start = Instant::now();
    let mut cache = HashMap::new();
    for &id in ids {
        if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(id) {
            slot.insert(store.load(id)?);
        }
    }
    let map = assemble(ids, &cache);
    Ok((map, start.elapsed()))
}

#[derive(Clone, Debug)]
pub struct PreloadOutcome {
    pub map: Vec<Point>,
    /// Scans loaded while the optimizer was running, in load order.
    pub preloaded: Vec<u64>,
    /// Loads needed after the optimizer finished.
    pub post_load_count: usize,
    /// `|signaled ∪ final|`.
    pub total_loads: usize,
    /// Time spent loading after the optimizer finished.
    pub load_time: Duration,
}

struct WorkerState {
    cache: HashMap<u64, Vec<Point>>,
    order: Vec<u64>,
}

/// Background loader fed by preload signals. It owns its scan cache; the
/// optimizer only ever sends.
pub struct PreloadConsumer {
    store: ScanStore,
    worker: JoinHandle<Result<WorkerState>>,
}

impl PreloadConsumer {
    pub fn spawn(store: ScanStore, signals: Receiver<PreloadSignal>) -> Self {
        let worker_store = store.clone();
        let worker = std::thread::spawn(move || {
            let mut state = WorkerState {
                cache: HashMap::new(),
                order: Vec::new(),
            };
            for sig in signals {
                for id in sig.scan_ids {
                    if let std::collections::hash_map::Entry::Vacant(slot) = state.cache.entry(id) {
                        slot.insert(worker_store.load(id)?);
                        state.order.push(id);
                    }
                }
            }
            Ok(state)
        });
        Self { store, worker }
    }

    /// Waits for the worker (the signal sender must have been dropped),
    /// loads whatever is still missing and assembles the final map.
    pub fn finish(self, final_ids: &[u64]) -> Result<PreloadOutcome> {
        let mut state = self
            .worker
            .join()
            .map_err(|_| Error::Worker("preload thread panicked".into()))??;
        let start = Instant::now();
        let mut post = 0;
        for &id in final_ids {
            if let std::collections::hash_map::Entry::Vacant(slot) = state.cache.entry(id) {
                slot.insert(self.store.load(id)?);
                post += 1;
            }
        }
        let map = assemble(final_ids, &state.cache);
        let load_time = start.elapsed();
        let total: HashSet<u64> = state.order.iter().chain(final_ids).copied().collect();
        Ok(PreloadOutcome {
            map,
            preloaded: state.order,
            post_load_count: post,
            total_loads: total.len(),
            load_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::mpsc::channel;

    fn small_log(n: usize) -> InputLog<f64> {
        InputLog::from_samples((0..n).map(|i| {
            let a = i as f64 * 0.05;
            let d = Descriptor::normalized(vec![a.cos(), a.sin(), 0.3, 0.1]).unwrap();
            (d, [i as f64, 2.0, 0.5], i as f64 * 0.1)
        }))
        .unwrap()
    }

    fn payloads(n: usize) -> Vec<Vec<Point>> {
        (0..n)
            .map(|i| (0..5).map(|j| [i as f32, j as f32, 0.0]).collect())
            .collect()
    }

    #[test]
    fn session_round_trip() {
        let log = small_log(30);
        let bytes = encode_session(&log).unwrap();
        let back = decode_session(&bytes).unwrap();
        assert_eq!(back.len(), 30);
        for (a, b) in log.elements().iter().zip(back.elements()) {
            assert_eq!(
                (a.index, a.timestamp, a.pose, a.weight),
                (b.index, b.timestamp, b.pose, b.weight)
            );
            for (x, y) in a.descriptor.coords().iter().zip(b.descriptor.coords()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        assert_eq!(encode_session(&back).unwrap(), bytes);
    }

    #[test]
    fn distinct_decode_errors() {
        let bytes = encode_session(&small_log(4)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_session(&bad), Err(Error::BadMagic)));
        let mut newer = bytes.clone();
        newer[4] = 9;
        assert!(matches!(
            decode_session(&newer),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        for cut in [2, 10, HEADER_LEN, bytes.len() - 1] {
            assert!(
                matches!(decode_session(&bytes[..cut]), Err(Error::Truncated)),
                "cut {cut}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_session(&long), Err(Error::Contract(_))));
    }

    #[test]
    fn points_round_trip_and_errors() {
        let pts = vec![[1.0, 2.0, 3.0], [-4.5, 0.0, 1e-3]];
        assert_eq!(decode_points(&encode_points(&pts)).unwrap(), pts);
        let enc = encode_points(&pts);
        assert!(matches!(decode_points(&enc[..enc.len() - 2]), Err(Error::Truncated)));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_points(&dir.path().join("nope.bin")),
            Err(Error::MissingPayload(_))
        ));
    }

    #[test]
    fn signal_equal_to_final_needs_no_post_load() {
        let dir = tempfile::tempdir().unwrap();
        let log = small_log(10);
        let store = write_session_dir(dir.path(), &log, &payloads(10), None).unwrap();
        let (tx, rx) = channel();
        let consumer = PreloadConsumer::spawn(store.clone(), rx);
        tx.send(PreloadSignal {
            step: 5,
            guess: 0,
            members: vec![],
            scan_ids: vec![7, 2, 4],
        })
        .unwrap();
        drop(tx);
        let out = consumer.finish(&[2, 4, 7]).unwrap();
        assert_eq!(out.post_load_count, 0);
        assert_eq!(out.total_loads, 3);
        assert_eq!(store.load_count(), 3);
        let (serial, _) = serial_load(&ScanStore::open(dir.path()), &[7, 4, 2]).unwrap();
        assert_eq!(encode_points(&out.map), encode_points(&serial));
    }

    #[test]
    fn partial_overlap_and_no_signal() {
        let dir = tempfile::tempdir().unwrap();
        let log = small_log(10);
        let store = write_session_dir(dir.path(), &log, &payloads(10), None).unwrap();
        let (tx, rx) = channel();
        let consumer = PreloadConsumer::spawn(store.clone(), rx);
        tx.send(PreloadSignal {
            step: 1,
            guess: 0,
            members: vec![],
            scan_ids: vec![1, 2, 3],
        })
        .unwrap();
        tx.send(PreloadSignal {
            step: 9,
            guess: 1,
            members: vec![],
            scan_ids: vec![3, 5],
        })
        .unwrap();
        drop(tx);
        let out = consumer.finish(&[3, 5, 8, 9]).unwrap();
        assert_eq!(out.post_load_count, 2);
        assert_eq!(out.total_loads, 6);
        assert_eq!(store.load_count(), 6);

        let (tx, rx) = channel::<PreloadSignal>();
        let consumer = PreloadConsumer::spawn(ScanStore::open(dir.path()), rx);
        drop(tx);
        let out = consumer.finish(&[0, 6]).unwrap();
        assert_eq!(out.post_load_count, 2);
        assert!(out.preloaded.is_empty());
    }

    #[test]
    fn missing_payload_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let log = small_log(4);
        let store = write_session_dir(dir.path(), &log, &payloads(4), None).unwrap();
        std::fs::remove_file(store.payload_path(2)).unwrap();
        assert!(matches!(store.verify(&log), Err(Error::MissingPayload(_))));
        let (tx, rx) = channel();
        let consumer = PreloadConsumer::spawn(store, rx);
        tx.send(PreloadSignal {
            step: 1,
            guess: 0,
            members: vec![],
            scan_ids: vec![2],
        })
        .unwrap();
        drop(tx);
        assert!(matches!(consumer.finish(&[0]), Err(Error::MissingPayload(_))));
    }
}
