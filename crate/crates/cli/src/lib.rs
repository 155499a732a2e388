//! Command-line pipeline: synthesize sessions, distill maps, and run the
//! ablation and timing sweeps. Every output file is a pure function of the
//! inputs and `--seed`; wall-clock timings go to stderr or to a separate
//! timings file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::channel;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mapdistill::baselines::{
    evenly_spaced_baseline, greedy, greedy_overlap, overlap_iou, random_baseline, Point, DEFAULT_TAU,
};
use mapdistill::geometry::PsiCache;
use mapdistill::store::{encode_points, open_session_dir, serial_load, write_session_dir, PreloadConsumer, ScanStore};
use mapdistill::streaming::{stream, RunConfig, StreamOrder};
use mapdistill::synth::SynthSpec;
use mapdistill::{
    filter_constraints, fit_cap_overlap, value_of_members, ApproxKind, Ball, CapOverlapModel, ConstraintSet, InputLog,
    ReducedSet, RewardKind, TimeWindow,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] mapdistill::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_ctx<T>(r: std::io::Result<T>, context: impl FnOnce() -> String) -> CliResult<T> {
    r.map_err(|source| CliError::Io {
        context: context(),
        source,
    })
}

#[derive(Debug, Parser)]
#[command(name = "mapdistill", version, about = "Distill scan logs into compact maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session from a TOML spec.
    Synth(SynthArgs),
    /// Distill a session into a map.
    Distill(DistillArgs),
    /// Compare optimizers over repeated seeded runs.
    Ablate(AblateArgs),
    /// Time optimization and loading across cardinalities.
    Bench(BenchArgs),
    /// Fit and cache the cap-overlap model for one dimension.
    FitPsi(FitPsiArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed given in the TOML file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Dr,
    Sieve,
    Greedy,
    Random,
    Even,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ApproxChoice {
    Pose,
    Desc,
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RewardChoice {
    Cebc,
    Ebc,
}

/// Optimizer parameters shared by every optimizing subcommand.
#[derive(Clone, Debug, Args)]
pub struct OptArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Guess ladder granularity.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Descriptor path length per reduced element.
    #[arg(long, default_value_t = 0.025)]
    pub reduce_dist: f64,
    /// Sorted partition size as a multiple of k.
    #[arg(long, default_value_t = 10)]
    pub factor: usize,
    #[arg(long, value_enum, default_value_t = ApproxChoice::Desc)]
    pub approx: ApproxChoice,
    /// Pose radius in meters.
    #[arg(long, default_value_t = 15.0)]
    pub alpha: f64,
    /// Leader stability before preloading (0 disables).
    #[arg(long, default_value_t = 20)]
    pub preload_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = RewardChoice::Cebc)]
    pub reward: RewardChoice,
    /// Spatial constraints `x,y,z,r[;x,y,z,r...]`.
    #[arg(long)]
    pub balls: Option<String>,
    /// Time constraints `t0,t1[;t0,t1...]`.
    #[arg(long)]
    pub windows: Option<String>,
    /// Text cache for fitted cap-overlap models.
    #[arg(long)]
    pub psi_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    pub psi_samples: usize,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub opt: OptArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Algo::Dr)]
    pub algo: Algo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    DrDesc,
    DrPose,
    DrCombined,
    Sieve,
    Random,
    Even,
    Greedy,
    /// Greedy on dense-map overlap; stand-in for exhaustive overlap search.
    OverlapGreedy,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DrDesc => "dr-desc",
            Method::DrPose => "dr-pose",
            Method::DrCombined => "dr-combined",
            Method::Sieve => "sieve",
            Method::Random => "random",
            Method::Even => "even",
            Method::Greedy => "greedy",
            Method::OverlapGreedy => "overlap-greedy",
        }
    }
}

pub const DEFAULT_METHODS: [Method; 6] = [
    Method::DrDesc,
    Method::DrPose,
    Method::DrCombined,
    Method::Sieve,
    Method::Random,
    Method::Even,
];

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub opt: OptArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Repetitions per method; repetition r runs with seed `seed + r`.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Overlap radius in meters.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub opt: OptArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![25, 50, 100, 200])]
    pub ks: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Algo::Dr)]
    pub algo: Algo,
    /// Timing repetitions per k; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct FitPsiArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "psi_cache.txt")]
    pub cache: PathBuf,
}

fn parse_list<const N: usize>(text: &str, what: &str) -> CliResult<Vec<[f64; N]>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let vals: Vec<f64> = item
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("bad {what} entry '{item}': {e}")))?;
            <[f64; N]>::try_from(vals)
                .map_err(|v| CliError::Usage(format!("{what} entry '{item}' needs {N} values, got {}", v.len())))
        })
        .collect()
}

pub fn parse_constraints(balls: Option<&str>, windows: Option<&str>) -> CliResult<ConstraintSet> {
    let balls = match balls {
        Some(b) => parse_list::<4>(b, "ball")?
            .into_iter()
            .map(|[x, y, z, r]| Ball {
                center: [x, y, z],
                radius: r,
            })
            .collect(),
        None => Vec::new(),
    };
    let windows = match windows {
        Some(w) => parse_list::<2>(w, "window")?
            .into_iter()
            .map(|[start, end]| TimeWindow { start, end })
            .collect(),
        None => Vec::new(),
    };
    ConstraintSet::new(balls, windows).map_err(|e| CliError::Usage(e.to_string()))
}

/// Session, ground set and the parameters needed to run any method on it.
pub struct Context {
    pub opt: OptArgs,
    pub log: InputLog<f64>,
    pub store: ScanStore,
    pub ground: ReducedSet<f64>,
    model: Option<CapOverlapModel>,
}

impl Context {
    pub fn load(opt: &OptArgs) -> CliResult<Self> {
        if !opt.session.is_dir() {
            return Err(CliError::Usage(format!(
                "session directory {} does not exist",
                opt.session.display()
            )));
        }
        let constraints = parse_constraints(opt.balls.as_deref(), opt.windows.as_deref())?;
        let (full, store) = open_session_dir(&opt.session)?;
        let log = filter_constraints(&full, &constraints)?;
        let ground = match opt.reward {
            RewardChoice::Cebc => RewardKind::Cebc,
            RewardChoice::Ebc => RewardKind::Ebc,
        }
        .ground_set(&log, opt.reduce_dist)?;
        Ok(Self {
            opt: opt.clone(),
            log,
            store,
            ground,
            model: None,
        })
    }

    fn model(&mut self) -> CliResult<CapOverlapModel> {
        if self.model.is_none() {
            let dim = self.ground.dim();
            let (samples, seed) = (self.opt.psi_samples, self.opt.seed);
            let m = match &self.opt.psi_cache {
                Some(path) => PsiCache::new(path).load_or_fit(dim, samples, seed)?,
                None => fit_cap_overlap(dim, samples, seed)?,
            };
            self.model = Some(m);
        }
        Ok(self.model.clone().unwrap())
    }

    fn approx(&mut self, choice: ApproxChoice) -> CliResult<ApproxKind> {
        Ok(match choice {
            ApproxChoice::Pose => ApproxKind::pose(self.opt.alpha)?,
            ApproxChoice::Desc => ApproxKind::Descriptor(self.model()?),
            ApproxChoice::Combined => ApproxKind::combined(self.opt.alpha, self.model()?)?,
        })
    }

    fn run_config(&self, k: usize, seed: u64, approx: ApproxKind) -> RunConfig {
        RunConfig {
            k,
            epsilon: self.opt.epsilon,
            sort_factor: self.opt.factor,
            approx,
            preload_stability_steps: self.opt.preload_steps,
            seed,
            record_trace: false,
        }
    }

    fn scan_ids(&self, members: &[usize]) -> Vec<u64> {
        members.iter().map(|&m| self.ground.elements()[m].index).collect()
    }

    /// Runs one optimizer and assembles its map, overlapping loads with
    /// optimization for the streaming methods.
    pub fn run(&mut self, method: Method, k: usize, seed: u64) -> CliResult<MethodRun> {
        if k < 1 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        let order = match method {
            Method::DrDesc | Method::DrPose | Method::DrCombined => Some(StreamOrder::Dynamic),
            Method::Sieve => Some(StreamOrder::Random),
            _ => None,
        };
        if let Some(order) = order {
            let approx = match method {
                Method::DrPose => self.approx(ApproxChoice::Pose)?,
                Method::DrCombined => self.approx(ApproxChoice::Combined)?,
                Method::DrDesc => self.approx(ApproxChoice::Desc)?,
                _ => ApproxKind::pose(self.opt.alpha)?,
            };
            let cfg = self.run_config(k, seed, approx);
            let (tx, rx) = channel();
            let consumer = PreloadConsumer::spawn(self.store.clone(), rx);
            let start = Instant::now();
            let report = stream(&self.ground, &cfg, order, Some(tx))?;
            let opt_time = start.elapsed();
            let members = report.best_solution.sorted_members();
            let scan_ids = self.scan_ids(&members);
            let loaded = consumer.finish(&scan_ids)?;
            return Ok(MethodRun {
                value: report.best_value(),
                members,
                scan_ids,
                map: loaded.map,
                stats: Some(StreamStats {
                    guesses: report.num_guesses(),
                    evaluations: report.evaluations,
                    elements_consumed: report.elements_consumed,
                    terminated_early: report.terminated_early,
                    lower_bound: report.bounds.lower,
                    lower_bound_fallback: report.bounds.fallback,
                    preload_signals: report.preload_signals.len(),
                    preloaded_scans: loaded.preloaded.len(),
                    post_load_count: loaded.post_load_count,
                    total_loads: loaded.total_loads,
                }),
                opt_time,
                load_time: loaded.load_time,
            });
        }
        let start = Instant::now();
        let members = match method {
            Method::Greedy => greedy(&self.ground, k)?.sorted_members(),
            Method::Random => random_baseline(&self.ground, k, seed)?.sorted_members(),
            Method::Even => evenly_spaced_baseline(&self.ground, k)?.sorted_members(),
            Method::OverlapGreedy => {
                let dense = self
                    .store
                    .dense_map()?
                    .ok_or_else(|| CliError::Usage("overlap-greedy needs a session with a dense map".into()))?;
                let scans: Vec<Vec<Point>> = self
                    .ground
                    .elements()
                    .iter()
                    .map(|e| self.store.load(e.index))
                    .collect::<Result<_, _>>()?;
                let mut picked = greedy_overlap(&scans, &dense, k, DEFAULT_TAU)?;
                picked.sort_unstable();
                picked
            }
            _ => unreachable!("streaming methods handled above"),
        };
        let opt_time = start.elapsed();
        let scan_ids = self.scan_ids(&members);
        let (map, load_time) = serial_load(&self.store, &scan_ids)?;
        Ok(MethodRun {
            value: value_of_members(&members, &self.ground),
            members,
            scan_ids,
            map,
            stats: None,
            opt_time,
            load_time,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StreamStats {
    pub guesses: usize,
    pub evaluations: u64,
    pub elements_consumed: usize,
    pub terminated_early: bool,
    pub lower_bound: f64,
    pub lower_bound_fallback: bool,
    pub preload_signals: usize,
    pub preloaded_scans: usize,
    pub post_load_count: usize,
    pub total_loads: usize,
}

pub struct MethodRun {
    pub value: f64,
    /// Ground-set indices, ascending.
    pub members: Vec<usize>,
    pub scan_ids: Vec<u64>,
    pub map: Vec<Point>,
    pub stats: Option<StreamStats>,
    pub opt_time: Duration,
    pub load_time: Duration,
}

fn algo_method(algo: Algo, approx: ApproxChoice) -> Method {
    match (algo, approx) {
        (Algo::Dr, ApproxChoice::Desc) => Method::DrDesc,
        (Algo::Dr, ApproxChoice::Pose) => Method::DrPose,
        (Algo::Dr, ApproxChoice::Combined) => Method::DrCombined,
        (Algo::Sieve, _) => Method::Sieve,
        (Algo::Greedy, _) => Method::Greedy,
        (Algo::Random, _) => Method::Random,
        (Algo::Even, _) => Method::Even,
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    io_ctx(fs::write(path, bytes), || format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> CliResult<()> {
    io_ctx(fs::create_dir_all(path), || format!("creating {}", path.display()))
}

pub fn synth(args: &SynthArgs) -> CliResult<String> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Usage(format!("cannot read spec {}: {e}", args.spec.display())))?;
    let mut spec = SynthSpec::parse(&text)?;
    if let Some(seed) = args.seed {
        spec.set_seed(seed);
    }
    let session = spec.generate()?;
    write_session_dir(&args.out, &session.log, &session.payloads, session.dense_map.as_deref())?;
    Ok(format!(
        "wrote {} elements (dimension {}, sigma {}) to {}\n",
        session.log.len(),
        session.log.dim(),
        session.log.sigma(),
        args.out.display()
    ))
}

#[derive(Serialize)]
struct DistillReport<'a> {
    algo: &'a str,
    reward: &'a str,
    k: usize,
    seed: u64,
    log_size: usize,
    reduced_size: usize,
    value: f64,
    members: &'a [usize],
    scan_ids: &'a [u64],
    map_points: usize,
    #[serde(flatten)]
    stats: Option<&'a StreamStats>,
}

pub fn distill(args: &DistillArgs) -> CliResult<String> {
    let mut ctx = Context::load(&args.opt)?;
    let method = algo_method(args.algo, args.opt.approx);
    let run = ctx.run(method, args.k, args.opt.seed)?;
    create_dir(&args.out)?;
    write_file(&args.out.join("map.bin"), encode_points(&run.map))?;
    let report = DistillReport {
        algo: method.name(),
        reward: match args.opt.reward {
            RewardChoice::Cebc => "cebc",
            RewardChoice::Ebc => "ebc",
        },
        k: args.k,
        seed: args.opt.seed,
        log_size: ctx.log.len(),
        reduced_size: ctx.ground.len(),
        value: run.value,
        members: &run.members,
        scan_ids: &run.scan_ids,
        map_points: run.map.len(),
        stats: run.stats.as_ref(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&args.out.join("report.json"), format!("{json}\n"))?;
    let mut text = String::new();
    let _ = writeln!(text, "algorithm      {}", report.algo);
    let _ = writeln!(text, "reward         {}", report.reward);
    let _ = writeln!(text, "k              {}", report.k);
    let _ = writeln!(text, "seed           {}", report.seed);
    let _ = writeln!(text, "log size       {}", report.log_size);
    let _ = writeln!(text, "reduced size   {}", report.reduced_size);
    let _ = writeln!(text, "value          {:.6}", report.value);
    let _ = writeln!(text, "scans          {:?}", report.scan_ids);
    let _ = writeln!(text, "map points     {}", report.map_points);
    if let Some(s) = &run.stats {
        let _ = writeln!(text, "guesses        {}", s.guesses);
        let _ = writeln!(text, "evaluations    {}", s.evaluations);
        let _ = writeln!(text, "consumed       {}", s.elements_consumed);
        let _ = writeln!(text, "early stop     {}", s.terminated_early);
        let _ = writeln!(
            text,
            "lower bound    {:.6}{}",
            s.lower_bound,
            if s.lower_bound_fallback { " (singleton)" } else { "" }
        );
        let _ = writeln!(
            text,
            "preload        {} signals, {} scans, {} loaded after",
            s.preload_signals, s.preloaded_scans, s.post_load_count
        );
    }
    write_file(&args.out.join("report.txt"), &text)?;
    eprintln!(
        "optimization {:.3} ms, post-optimization load {:.3} ms",
        run.opt_time.as_secs_f64() * 1e3,
        run.load_time.as_secs_f64() * 1e3
    );
    Ok(text)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn ablate(args: &AblateArgs) -> CliResult<String> {
    let mut ctx = Context::load(&args.opt)?;
    let dense = ctx.store.dense_map()?;
    let methods = args.methods.clone().unwrap_or_else(|| DEFAULT_METHODS.to_vec());
    let mut runs_csv = String::from("method,rep,seed,cebc,iou,evaluations\n");
    let mut results: Vec<(Method, Vec<f64>, Vec<f64>)> = Vec::new();
    for &method in &methods {
        let (mut values, mut ious) = (Vec::new(), Vec::new());
        for rep in 0..args.reps {
            let seed = args.opt.seed + rep as u64;
            let run = ctx.run(method, args.k, seed)?;
            let iou = match &dense {
                Some(d) if !run.map.is_empty() => Some(overlap_iou(&run.map, d, args.tau)?),
                _ => None,
            };
            let evals = run
                .stats
                .as_ref()
                .map(|s| s.evaluations.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                runs_csv,
                "{},{rep},{seed},{:.6},{},{evals}",
                method.name(),
                run.value,
                fmt_opt(iou)
            );
            values.push(run.value);
            ious.extend(iou);
        }
        results.push((method, values, ious));
    }
    let best_value = results.iter().map(|r| mean_std(&r.1).0).fold(f64::MIN, f64::max);
    let best_iou = results
        .iter()
        .filter(|r| !r.2.is_empty())
        .map(|r| mean_std(&r.2).0)
        .fold(f64::MIN, f64::max);
    let mut summary = String::from("method,runs,mean_cebc,std_cebc,norm_cebc,mean_iou,std_iou,norm_iou\n");
    for (method, values, ious) in &results {
        let (m, s) = mean_std(values);
        let (im, is) = if ious.is_empty() {
            (None, None)
        } else {
            let (a, b) = mean_std(ious);
            (Some(a), Some(b))
        };
        let norm = |x: f64, best: f64| if best > 0.0 { x / best } else { 0.0 };
        let _ = writeln!(
            summary,
            "{},{},{m:.6},{s:.6},{:.6},{},{},{}",
            method.name(),
            values.len(),
            norm(m, best_value),
            fmt_opt(im),
            fmt_opt(is),
            fmt_opt(im.map(|x| norm(x, best_iou)))
        );
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("runs.csv"), &runs_csv)?;
    write_file(&args.out.join("summary.csv"), &summary)?;
    Ok(summary)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn bench(args: &BenchArgs) -> CliResult<String> {
    let mut ctx = Context::load(&args.opt)?;
    let method = algo_method(args.algo, args.opt.approx);
    let mut counts = String::from("k,evaluations,elements_consumed,early_termination_step,guesses,value\n");
    let mut timings = String::from("k,optimization_ms,load_ms,total_ms\n");
    for &k in &args.ks {
        let mut opt_ms = Vec::new();
        let mut load_ms = Vec::new();
        let mut first: Option<MethodRun> = None;
        for _ in 0..args.repeats.max(1) {
            let run = ctx.run(method, k, args.opt.seed)?;
            opt_ms.push(run.opt_time.as_secs_f64() * 1e3);
            // serial cost of loading the final map from storage
            let (_, t) = serial_load(&ctx.store, &run.scan_ids)?;
            load_ms.push(t.as_secs_f64() * 1e3);
            first.get_or_insert(run);
        }
        let run = first.expect("at least one repetition");
        let (evals, consumed, early, guesses) = match &run.stats {
            Some(s) => (
                s.evaluations.to_string(),
                s.elements_consumed.to_string(),
                if s.terminated_early {
                    s.elements_consumed.to_string()
                } else {
                    String::new()
                },
                s.guesses.to_string(),
            ),
            None => Default::default(),
        };
        let _ = writeln!(counts, "{k},{evals},{consumed},{early},{guesses},{:.6}", run.value);
        let (o, l) = (median(opt_ms), median(load_ms));
        let _ = writeln!(timings, "{k},{o:.3},{l:.3},{:.3}", o + l);
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("bench.csv"), &counts)?;
    write_file(&args.out.join("timings.csv"), &timings)?;
    eprint!("{timings}");
    Ok(counts)
}

pub fn fit_psi(args: &FitPsiArgs) -> CliResult<String> {
    let cache = PsiCache::new(&args.cache);
    let model = cache.load_or_fit(args.dim, args.samples, args.seed)?;
    let c = model.poly_coeffs;
    Ok(format!(
        "dimension {} seed {} samples {}\ncoefficients {:.9} {:.9} {:.9} {:.9} {:.9}\nmax residual {:.6}\n",
        model.dimension, args.seed, args.samples, c[0], c[1], c[2], c[3], c[4], model.max_residual
    ))
}

pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Distill(a) => distill(a),
        Command::Ablate(a) => ablate(a),
        Command::Bench(a) => bench(a),
        Command::FitPsi(a) => fit_psi(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_lists_parse() {
        let c = parse_constraints(Some("1,2,3,4; 0,0,0,1.5"), Some("0,10")).unwrap();
        assert_eq!(c.balls().len(), 2);
        assert_eq!(c.balls()[1].radius, 1.5);
        assert_eq!(c.windows()[0], TimeWindow { start: 0.0, end: 10.0 });
        assert!(parse_constraints(Some("1,2,3"), None).is_err());
        assert!(parse_constraints(None, Some("5,1")).is_err());
        assert!(parse_constraints(Some("a,b,c,d"), None).is_err());
    }

    #[test]
    fn median_and_spread() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
