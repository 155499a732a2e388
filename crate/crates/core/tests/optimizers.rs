use mapdistill::baselines::{brute_force_opt, greedy};
use mapdistill::streaming::{dr_stream, sieve_stream, stream, PreloadSignal, RunConfig, StreamOrder};
use mapdistill::synth::{gen_descriptor_log, DwellSegment, TrajectorySpec};
use mapdistill::{fit_cap_overlap, reduce, ApproxKind, Descriptor, Element, ReducedSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::mpsc::channel;

fn random_ground(n: usize, dim: usize, seed: u64) -> ReducedSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let els = (0..n)
        .map(|i| Element {
            index: i as u64,
            descriptor: Descriptor::normalized((0..dim).map(|_| rng.sample(StandardNormal)).collect()).unwrap(),
            pose: [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 0.0],
            timestamp: i as f64,
            weight: rng.random_range(0.05..1.0),
        })
        .collect();
    ReducedSet::new(els, (0..n).collect(), 0.1).unwrap()
}

#[test]
fn streaming_reaches_half_of_opt() {
    let model = fit_cap_overlap(4, 10_000, 3).unwrap();
    for seed in 0..30 {
        let g = random_ground(10 + (seed as usize % 3), 4, seed);
        let k = 3 + (seed as usize % 2);
        let (opt, _) = brute_force_opt(&g, k).unwrap();
        let mut cfg = RunConfig::new(k);
        cfg.seed = seed;
        for approx in [ApproxKind::pose(15.0).unwrap(), ApproxKind::Descriptor(model.clone())] {
            cfg.approx = approx;
            let dr = dr_stream(&g, &cfg).unwrap();
            assert!(dr.best_value() >= 0.4 * opt, "seed {seed}");
        }
        let sv = sieve_stream(&g, &cfg).unwrap();
        assert!(sv.best_value() >= 0.4 * opt, "seed {seed}");
        assert!(greedy(&g, k).unwrap().value() >= (1.0 - (-1.0f64).exp()) * opt - 1e-12);
    }
}

/// `clusters` tight groups on orthogonal axes, `per` elements each,
/// interleaved in stream order.
fn clustered(clusters: usize, per: usize, seed: u64) -> ReducedSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 2 * clusters;
    let els = (0..clusters * per)
        .map(|i| {
            let mut v = vec![0.0; dim];
            v[i % clusters] = 1.0;
            v[clusters + i % clusters] = rng.random_range(0.0..0.05);
            Element {
                index: i as u64,
                descriptor: Descriptor::normalized(v).unwrap(),
                pose: [(i % clusters) as f64 * 100.0, 0.0, 0.0],
                timestamp: i as f64,
                weight: 1.0,
            }
        })
        .collect();
    ReducedSet::new(els, (0..clusters * per).collect(), 0.1).unwrap()
}

#[test]
fn single_pass_and_early_termination() {
    let red = clustered(4, 100, 2);
    let mut cfg = RunConfig::new(4);
    cfg.seed = 5;
    for order in [StreamOrder::Random, StreamOrder::Dynamic] {
        let r = stream(&red, &cfg, order, None).unwrap();
        let mut seen = r.consumed_order.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), r.consumed_order.len());
        assert!(r.evaluations <= (r.num_guesses() * r.elements_consumed) as u64);
        assert!(r.terminated_early && r.elements_consumed < red.len() / 2, "{order:?}");
    }
}

#[test]
fn preload_signals_match_offline_replay() {
    let mut spec = TrajectorySpec::new(16, 4000, 0.01, 7);
    spec.noise = 0.05;
    spec.dwell_segments = vec![DwellSegment {
        start: 500,
        length: 1500,
        jitter: 0.001,
    }];
    let log = gen_descriptor_log(&spec).unwrap();
    let red = reduce(&log, 0.025).unwrap();
    for steps in [1usize, 5, 20] {
        let mut cfg = RunConfig::new(10);
        cfg.seed = 3;
        cfg.preload_stability_steps = steps;
        cfg.record_trace = true;
        let (tx, rx) = channel();
        let r = stream(&red, &cfg, StreamOrder::Dynamic, Some(tx)).unwrap();
        let sent: Vec<PreloadSignal> = rx.iter().collect();
        assert_eq!(sent, r.preload_signals);
        assert!(steps > 5 || !sent.is_empty());

        // replay leader streaks from the recorded per-step values
        let trace = r.value_trace.as_ref().unwrap();
        let mut expected = Vec::new();
        let (mut leader, mut streak, mut fired) = (usize::MAX, 0, false);
        for (s, values) in trace.iter().enumerate() {
            let mut best = 0;
            for (i, v) in values.iter().enumerate() {
                if *v > values[best] {
                    best = i;
                }
            }
            if best == leader {
                streak += 1;
            } else {
                (leader, streak, fired) = (best, 1, false);
            }
            if streak >= steps && !fired && values[best] > 0.0 {
                expected.push((s + 1, best));
                fired = true;
            }
        }
        let got: Vec<(usize, usize)> = sent.iter().map(|p| (p.step, p.guess)).collect();
        assert_eq!(got, expected, "steps {steps}");
        for p in &sent {
            let ids: Vec<u64> = p.members.iter().map(|&m| red.elements()[m].index).collect();
            assert_eq!(ids, p.scan_ids);
        }
    }
}

#[test]
fn parallel_and_serial_paths_agree() {
    // large enough to cross the parallel threshold
    let mut spec = TrajectorySpec::new(16, 20_000, 0.01, 11);
    spec.noise = 0.2;
    let log = gen_descriptor_log(&spec).unwrap();
    let red = reduce(&log, 0.025).unwrap();
    let mut cfg = RunConfig::new(20);
    cfg.seed = 1;
    let a = dr_stream(&red, &cfg).unwrap();
    let b = dr_stream(&red, &cfg).unwrap();
    assert_eq!(a.consumed_order, b.consumed_order);
    assert_eq!(a.best_solution, b.best_solution);
    assert_eq!(a.evaluations, b.evaluations);
}
