//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input (flags, files, values), 2 a check
//! that ran and failed (`oracle-check`, `gradcheck`).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use l2h_core::deployment::{calibrate, AvailabilitySchedule};
use l2h_core::metrics::evaluate;
use l2h_core::models::Checkpoint;
use l2h_core::oracle::{ClientBehavior, DiscreteWorld};
use l2h_core::seed::stream;
use l2h_core::synth::{gen_data, GaussianMixtureSpec};
use l2h_core::training::{
    train_client, train_timed, AsyncConfig, ClientHandicap, ClientTrainConfig, NoClock, SgdConfig,
    StageClock, DEFAULT_MAX_GRAD_NORM,
};
use l2h_core::{Architecture, CostParams, Dataset, HybridSystem, Label, RngSeed, ScoreModel};
use rand::Rng as _;

use crate::experiment::{self, Algo, Grid, Setup};
use crate::records::{
    self, BrrLine, DecisionLine, LedgerLine, ReportLine, StepLine, SweepLine, WallClock,
};
use crate::{checkpoint, features, gradcheck, world_file, KvFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "l2h",
    version,
    about = "Train and evaluate client/server/rejector hybrid classifiers"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Sample a Gaussian-mixture dataset into train/cali/test feature files.
    GenData(GenDataArgs),
    /// Train and freeze a client classifier.
    TrainClient(TrainClientArgs),
    /// Jointly train server and rejector around a frozen client.
    Train(TrainArgs),
    /// Contrastive evaluation of a trained system on a feature file.
    Evaluate(EvaluateArgs),
    /// Train and evaluate over a grid of costs, algorithms and seeds.
    Sweep(SweepArgs),
    /// Empirical reject rate of a trained rejector on a calibration set.
    BrrCalibrate(BrrCalibrateArgs),
    /// Bounded-reject-rate inference against the random-deferral baseline.
    BrrEval(BrrEvalArgs),
    /// Check closed-form Bayes rules and surrogate consistency on discrete worlds.
    OracleCheck(OracleCheckArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Clone)]
struct MixtureArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long = "n-train", default_value_t = 6000)]
    n_train: usize,
    #[arg(long = "n-cali", default_value_t = 1000)]
    n_cali: usize,
    #[arg(long = "n-test", default_value_t = 3000)]
    n_test: usize,
}

impl MixtureArgs {
    fn spec(&self) -> anyhow::Result<GaussianMixtureSpec> {
        Ok(GaussianMixtureSpec::ring(
            self.classes,
            self.dim,
            self.radius,
            self.variance,
            (self.n_train, self.n_cali, self.n_test),
        )?)
    }
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving train.txt, cali.txt and test.txt.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write a random discrete world with this many support points.
    #[arg(long)]
    world_points: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainClientArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value = "linear")]
    arch: Architecture,
    /// Keep only this fraction of the training set.
    #[arg(long)]
    subset_fraction: Option<f64>,
    /// Remove these classes (1-based, comma-separated).
    #[arg(long, value_delimiter = ',')]
    drop_class: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum AlgoKind {
    Sync,
    Async,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    client: PathBuf,
    #[arg(long, value_enum, default_value = "sync")]
    algo: AlgoKind,
    #[arg(long, default_value_t = 100)]
    sync_interval: usize,
    #[arg(long)]
    ce: f64,
    #[arg(long)]
    c1: f64,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr_server: f64,
    #[arg(long, default_value_t = 0.05)]
    lr_rejector: f64,
    /// Per-step gradient norm cap; `inf` disables it.
    #[arg(long, default_value_t = DEFAULT_MAX_GRAD_NORM)]
    max_grad_norm: f64,
    #[arg(long, default_value = "mlp1")]
    server_arch: Architecture,
    #[arg(long, default_value = "mlp1")]
    rejector_arch: Architecture,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record wall-clock stage timings in the trace.
    #[arg(long)]
    timings: bool,
    /// Directory receiving server.ckpt, rejector.ckpt and trace.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SystemArgs {
    #[arg(long)]
    client: PathBuf,
    #[arg(long)]
    server: PathBuf,
    #[arg(long)]
    rejector: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    ce: f64,
    #[arg(long)]
    c1: f64,
    /// Server availability: `always`, `periodic:<period>:<duty>` or `bernoulli:<p_up>`.
    #[arg(long, default_value = "always")]
    schedule: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report as one JSON line.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-example routing decisions as JSON lines.
    #[arg(long)]
    decisions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    /// Read train.txt, cali.txt and test.txt from here instead of sampling a mixture.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ce: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    c1: Vec<f64>,
    /// Training algorithms: `sync`, `async:<S>`.
    #[arg(long, value_delimiter = ',', default_value = "sync")]
    algos: Vec<String>,
    /// Sync intervals; each adds `async:<S>` to the algorithm list.
    #[arg(long, value_delimiter = ',')]
    sync_interval: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "linear")]
    client_arch: Architecture,
    #[arg(long, default_value_t = 0.005)]
    client_subset: f64,
    #[arg(long, value_delimiter = ',')]
    drop_class: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    client_epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    client_lr: f64,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr_server: f64,
    #[arg(long, default_value_t = 0.05)]
    lr_rejector: f64,
    /// Per-step gradient norm cap; `inf` disables it.
    #[arg(long, default_value_t = DEFAULT_MAX_GRAD_NORM)]
    max_grad_norm: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BrrCalibrateArgs {
    #[arg(long)]
    cali: PathBuf,
    #[command(flatten)]
    system: SystemArgs,
}

#[derive(Debug, Args)]
struct BrrEvalArgs {
    #[arg(long)]
    cali: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleCheckArgs {
    /// World file; without it, random worlds are generated.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    random: usize,
    #[arg(long, default_value_t = 20)]
    max_points: usize,
    #[arg(long, default_value_t = 5)]
    max_classes: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.25,0.5,1")]
    ce: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.25,2")]
    c1: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    configs: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Entries whose absolute error is at most this are not counted.
    #[arg(long, default_value_t = 1e-8)]
    abs_floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure of a check that ran to completion, as opposed to bad input.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_INVALID;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd, out) {
        Ok(()) => EXIT_OK,
        Err(e) if e.downcast_ref::<CheckFailed>().is_some() => {
            eprintln!("check failed: {e}");
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}

/// Replaces `--config <file>` with the file's `key=value` pairs as `--key value`
/// flags. Keys also given explicitly on the command line are dropped.
fn expand_config(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(PathBuf::from(it.next().context("--config needs a file")?));
        } else if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            config = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    if rest.len() < 2 {
        bail!("--config must follow a subcommand");
    }
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let kv = KvFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    let explicit: Vec<String> = rest[2..]
        .iter()
        .filter_map(|a| a.to_str())
        .filter(|a| a.starts_with("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut injected = Vec::new();
    for (k, v) in kv.in_order() {
        let flag = format!("--{}", k.replace('_', "-"));
        if explicit.contains(&flag) {
            continue;
        }
        match v {
            "true" => injected.push(flag.into()),
            "false" => {}
            _ => {
                injected.push(flag.into());
                injected.push(v.into());
            }
        }
    }
    let mut out: Vec<OsString> = rest[..2].to_vec();
    out.extend(injected);
    out.extend_from_slice(&rest[2..]);
    Ok(out)
}

fn dispatch(cmd: Cmd, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        Cmd::GenData(a) => gen_data_cmd(a, out),
        Cmd::TrainClient(a) => train_client_cmd(a, out),
        Cmd::Train(a) => train_cmd(a, out),
        Cmd::Evaluate(a) => evaluate_cmd(a, out),
        Cmd::Sweep(a) => sweep_cmd(a, out),
        Cmd::BrrCalibrate(a) => brr_calibrate_cmd(a, out),
        Cmd::BrrEval(a) => brr_eval_cmd(a, out),
        Cmd::OracleCheck(a) => oracle_check_cmd(a, out),
        Cmd::Gradcheck(a) => gradcheck_cmd(a, out),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_features(path: &Path) -> anyhow::Result<Dataset> {
    features::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<(ScoreModel, Checkpoint)> {
    let ck = checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((ck.clone().into_model()?, ck))
}

fn load_system(a: &SystemArgs) -> anyhow::Result<HybridSystem> {
    let (client, _) = load_model(&a.client)?;
    let (server, _) = load_model(&a.server)?;
    let (rejector, _) = load_model(&a.rejector)?;
    Ok(HybridSystem::new(client, rejector, server)?)
}

fn check_data(system: &HybridSystem, data: &Dataset) -> anyhow::Result<()> {
    if data.dim() != system.input_dim() || data.num_classes() != system.num_classes() {
        bail!(
            "data has K={} L={}, models expect K={} L={}",
            data.num_classes(),
            data.dim(),
            system.num_classes(),
            system.input_dim()
        );
    }
    Ok(())
}

fn labels(one_based: &[usize], k: usize) -> anyhow::Result<Vec<Label>> {
    Ok(one_based
        .iter()
        .map(|&l| Label::from_one_based(l, k))
        .collect::<l2h_core::Result<_>>()?)
}

fn gen_data_cmd(a: GenDataArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let spec = a.mixture.spec()?;
    let master = RngSeed(a.seed);
    let (train, cali, test) = gen_data(&spec, master.derive(stream::DATA))?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (name, d) in [
        ("train.txt", &train),
        ("cali.txt", &cali),
        ("test.txt", &test),
    ] {
        features::save(&a.out_dir.join(name), d)?;
    }
    writeln!(
        out,
        "wrote {} / {} / {} examples to {}",
        train.len(),
        cali.len(),
        test.len(),
        a.out_dir.display()
    )?;
    if let Some(points) = a.world_points {
        let mut rng = master.derive(stream::WORLD).rng();
        let world = DiscreteWorld::random(&mut rng, points, spec.num_classes(), spec.dim())?;
        let client = ClientBehavior::Deterministic(
            (0..points)
                .map(|_| Label(rng.random_range(0..spec.num_classes())))
                .collect(),
        );
        let path = a.out_dir.join("world.txt");
        world_file::save(&path, &world, &client)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}

fn train_client_cmd(a: TrainClientArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let data = load_features(&a.train)?;
    let handicap = ClientHandicap {
        subset_fraction: a.subset_fraction,
        dropped_classes: labels(&a.drop_class, data.num_classes())?,
    };
    let cfg = ClientTrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: RngSeed(a.seed),
    };
    let model = train_client(&data, a.arch, &handicap, &cfg)?;
    checkpoint::save(
        &a.out,
        &Checkpoint::from_model(&model, data.num_classes(), Some(RngSeed(a.seed)), None),
    )?;
    let acc = data
        .examples()
        .iter()
        .filter(|e| model.predict(e.x.as_slice()).is_ok_and(|p| p == e.y))
        .count() as f64
        / data.len() as f64;
    writeln!(
        out,
        "client {} trained, training accuracy {:.1}%, saved to {}",
        a.arch,
        100.0 * acc,
        a.out.display()
    )?;
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let data = load_features(&a.train)?;
    let (client, _) = load_model(&a.client)?;
    let costs = CostParams::new(a.ce, a.c1)?;
    let master = RngSeed(a.seed);
    let (dim, k) = (data.dim(), data.num_classes());
    let system = HybridSystem::new(
        client,
        ScoreModel::init(
            a.rejector_arch,
            dim,
            2,
            master.derive(stream::REJECTOR_INIT),
        )?,
        ScoreModel::init(a.server_arch, dim, k, master.derive(stream::SERVER_INIT))?,
    )?;
    check_data(&system, &data)?;
    let cfg = SgdConfig {
        learning_rate_server: a.lr_server,
        learning_rate_rejector: a.lr_rejector,
        epochs: a.epochs,
        shuffle: true,
        seed: master.derive(stream::TRAIN_SHUFFLE),
        max_grad_norm: a.max_grad_norm,
    };
    let async_cfg = match a.algo {
        AlgoKind::Sync => None,
        AlgoKind::Async => Some(AsyncConfig::new(a.sync_interval)?),
    };
    let mut wall = WallClock::default();
    let clock: &mut dyn StageClock = if a.timings { &mut wall } else { &mut NoClock };
    let (trained, trace) = train_timed(system, &data, costs, &cfg, async_cfg, clock)?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let ck = |m: &ScoreModel| Checkpoint::from_model(m, k, Some(master), Some(costs));
    checkpoint::save(&a.out_dir.join("server.ckpt"), &ck(&trained.server))?;
    checkpoint::save(&a.out_dir.join("rejector.ckpt"), &ck(&trained.rejector))?;
    let mut w = create(&a.out_dir.join("trace.jsonl"))?;
    records::write_lines(&mut w, trace.steps.iter().map(StepLine::from))?;
    w.flush()?;
    writeln!(
        out,
        "{:<6}{:>10}{:>10}{:>10}",
        "epoch", "mean_l1", "mean_l2", "mean_ls"
    )?;
    for e in &trace.epochs {
        writeln!(
            out,
            "{:<6}{:>10.4}{:>10.4}{:>10.4}",
            e.epoch + 1,
            e.mean_l1,
            e.mean_l2,
            e.mean_ls
        )?;
    }
    writeln!(
        out,
        "saved server.ckpt, rejector.ckpt, trace.jsonl to {}",
        a.out_dir.display()
    )?;
    Ok(())
}

fn parse_schedule(s: &str, seed: RngSeed) -> anyhow::Result<AvailabilitySchedule> {
    let parts: Vec<&str> = s.split(':').collect();
    let sched = match parts.as_slice() {
        ["always"] => AvailabilitySchedule::Always,
        ["periodic", p, d] => AvailabilitySchedule::Periodic {
            period: p.parse().context("periodic period")?,
            duty: d.parse().context("periodic duty")?,
        },
        ["bernoulli", p] => AvailabilitySchedule::Bernoulli {
            p_up: p.parse().context("bernoulli p_up")?,
            seed: seed.derive(stream::AVAILABILITY),
        },
        _ => bail!("unknown schedule `{s}`"),
    };
    sched.validate()?;
    Ok(sched)
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let system = load_system(&a.system)?;
    let test = load_features(&a.test)?;
    check_data(&system, &test)?;
    let costs = CostParams::new(a.ce, a.c1)?;
    let schedule = parse_schedule(&a.schedule, RngSeed(a.seed))?;
    let report = evaluate(&system, &test, costs)?;
    write!(out, "{}", records::report_table(&report))?;
    let (decisions, ledger) = experiment::route_test_set(&system, &test, costs, &schedule)?;
    if schedule != AvailabilitySchedule::Always {
        let fallbacks = decisions.iter().filter(|d| d.fallback).count();
        writeln!(
            out,
            "availability {}: {} fallbacks, ledger cost {:.4}",
            a.schedule, fallbacks, ledger.accumulated_cost
        )?;
    }
    if let Some(p) = &a.decisions {
        let mut w = create(p)?;
        records::write_lines(&mut w, decisions.iter().map(DecisionLine::from))?;
        records::write_lines(&mut w, [LedgerLine::from(&ledger)])?;
        w.flush()?;
    }
    if let Some(p) = &a.report {
        let mut w = create(p)?;
        records::write_lines(&mut w, [ReportLine::from(&report)])?;
        w.flush()?;
    }
    Ok(())
}

fn parse_algo(s: &str) -> anyhow::Result<Algo> {
    match s.split_once(':') {
        None if s == "sync" => Ok(Algo::Sync),
        Some(("async", n)) => Ok(Algo::Async(
            n.parse()
                .with_context(|| format!("sync interval in `{s}`"))?,
        )),
        _ => bail!("unknown algorithm `{s}` (expected sync or async:<S>)"),
    }
}

fn sweep_cmd(a: SweepArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut algos: Vec<Algo> = a
        .algos
        .iter()
        .map(|s| parse_algo(s))
        .collect::<anyhow::Result<_>>()?;
    algos.extend(a.sync_interval.iter().map(|&s| Algo::Async(s)));
    let grid = Grid {
        c_e: if a.ce.is_empty() {
            experiment::linspace(0.0, 0.5, 11)
        } else {
            a.ce.clone()
        },
        c_1: a.c1.clone(),
        algos,
    };
    grid.points()?;
    let loaded = match &a.data_dir {
        Some(dir) => Some((
            load_features(&dir.join("train.txt"))?,
            load_features(&dir.join("cali.txt"))?,
            load_features(&dir.join("test.txt"))?,
        )),
        None => None,
    };
    let k = loaded
        .as_ref()
        .map_or(a.mixture.classes, |d| d.0.num_classes());
    let setup = Setup {
        mixture: a.mixture.spec()?,
        client_arch: a.client_arch,
        handicap: ClientHandicap {
            subset_fraction: if a.drop_class.is_empty() {
                Some(a.client_subset)
            } else {
                None
            },
            dropped_classes: labels(&a.drop_class, k)?,
        },
        client_lr: a.client_lr,
        client_epochs: a.client_epochs,
        server_arch: Architecture::mlp1(),
        rejector_arch: Architecture::mlp1(),
        lr_server: a.lr_server,
        lr_rejector: a.lr_rejector,
        epochs: a.epochs,
        max_grad_norm: a.max_grad_norm,
    };
    let mut lines = Vec::new();
    writeln!(
        out,
        "{:>6}{:>8}{:>8}{:>12}{:>9}{:>9}{:>9}  {:>10}",
        "seed", "c_e", "c_1", "algo", "reject%", "joint%", "client%", "final_ls"
    )?;
    for &seed in &a.seeds {
        let prep = match &loaded {
            Some(d) => experiment::prepare_from(&setup, RngSeed(seed), d.clone())?,
            None => experiment::prepare(&setup, RngSeed(seed))?,
        };
        for p in experiment::sweep(&setup, &prep, &grid)? {
            writeln!(
                out,
                "{:>6}{:>8.3}{:>8.3}{:>12}{:>9.1}{:>9.1}{:>9.1}  {:>10.4}",
                seed,
                p.costs.c_e,
                p.costs.c_1,
                p.algo.name(),
                100.0 * p.report.reject_ratio,
                100.0 * p.report.joint_accuracy,
                100.0 * p.report.client_only_accuracy,
                p.final_ls
            )?;
            lines.push(SweepLine::new(seed, &p));
        }
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        records::write_lines(&mut w, lines)?;
        w.flush()?;
    }
    Ok(())
}

fn brr_calibrate_cmd(a: BrrCalibrateArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let system = load_system(&a.system)?;
    let cali = load_features(&a.cali)?;
    check_data(&system, &cali)?;
    writeln!(out, "q1={}", calibrate(&system, &cali)?)?;
    Ok(())
}

fn brr_eval_cmd(a: BrrEvalArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let system = load_system(&a.system)?;
    let cali = load_features(&a.cali)?;
    let test = load_features(&a.test)?;
    check_data(&system, &cali)?;
    check_data(&system, &test)?;
    writeln!(
        out,
        "{:>6}{:>8}{:>7}{:>10}{:>10}{:>10}{:>11}",
        "q", "q1", "mode", "realized%", "brr_acc%", "base%", "base_acc%"
    )?;
    let mut lines = Vec::new();
    for &q in &a.q {
        let o = experiment::brr_eval(&system, &cali, &test, q, RngSeed(a.seed))?;
        let line = BrrLine::from(&o);
        writeln!(
            out,
            "{:>6.3}{:>8.3}{:>7}{:>10.1}{:>10.1}{:>10.1}{:>11.1}",
            q,
            o.q1,
            line.mode,
            100.0 * o.realized,
            100.0 * o.accuracy,
            100.0 * o.baseline_realized,
            100.0 * o.baseline_accuracy
        )?;
        lines.push(line);
    }
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        records::write_lines(&mut w, lines)?;
        w.flush()?;
    }
    Ok(())
}

fn oracle_check_cmd(a: OracleCheckArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let worlds: Vec<(DiscreteWorld, ClientBehavior)> = match &a.world {
        Some(p) => vec![world_file::load(p).with_context(|| format!("reading {}", p.display()))?],
        None => {
            if a.max_points == 0 || a.max_classes < 2 {
                bail!("need --max-points >= 1 and --max-classes >= 2");
            }
            let mut rng = RngSeed(a.seed).derive(stream::WORLD).rng();
            (0..a.random)
                .map(|_| {
                    let s = rng.random_range(1..=a.max_points);
                    let k = rng.random_range(2..=a.max_classes);
                    let w = DiscreteWorld::random(&mut rng, s, k, 2)?;
                    let c = ClientBehavior::Deterministic(
                        (0..s).map(|_| Label(rng.random_range(0..k))).collect(),
                    );
                    Ok((w, c))
                })
                .collect::<anyhow::Result<_>>()?
        }
    };
    let (mut cells, mut failed) = (0usize, 0usize);
    for (i, (world, client)) in worlds.iter().enumerate() {
        for r in experiment::oracle_grid(world, client, &a.ce, &a.c1)? {
            cells += 1;
            if !r.passed() {
                failed += 1;
                writeln!(
                    out,
                    "FAIL world {} c_e={} c_1={}: equivalence {:?}, consistency {} closed-form / {} numeric mismatches",
                    i + 1,
                    r.costs.c_e,
                    r.costs.c_1,
                    r.equivalence,
                    r.consistency.closed_form_mismatches,
                    r.consistency.numeric_mismatches
                )?;
            }
        }
    }
    writeln!(
        out,
        "{} worlds, {} grid cells, {} failed",
        worlds.len(),
        cells,
        failed
    )?;
    if failed > 0 {
        return Err(CheckFailed(format!("{failed} of {cells} oracle cells failed")).into());
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let mut failed = 0;
    for (i, case) in gradcheck::Case::ALL.into_iter().enumerate() {
        let r = gradcheck::run(
            case,
            a.configs,
            RngSeed(a.seed).derive(i as u64),
            a.tol,
            a.abs_floor,
        )?;
        let status = if r.failures == 0 { "ok" } else { "FAIL" };
        writeln!(
            out,
            "{:<10} {:>4} configs  max rel err {:.3e}  {}",
            case.name(),
            r.configurations,
            r.max_rel_error,
            status
        )?;
        failed += r.failures;
    }
    if failed > 0 {
        return Err(CheckFailed(format!("{failed} gradient entries above tolerance")).into());
    }
    Ok(())
}
