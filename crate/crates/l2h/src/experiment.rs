//! End-to-end pipeline: data, client, joint training, evaluation, sweeps.
//!
//! Every component seed is derived from one master seed, so grid points
//! share data, client and initial weights and differ only in what the grid
//! changes.

use l2h_core::deployment::{
    brr_infer, calibrate, ia_infer, random_reject_baseline, AvailabilitySchedule, BrrMode,
    BrrPolicy, RoutingDecision, UsageLedger,
};
use l2h_core::metrics::{evaluate, MetricsReport};
use l2h_core::oracle::{
    bayes_equivalence, consistency_check, ClientBehavior, ConsistencyReport, DiscreteWorld,
    EquivalenceReport,
};
use l2h_core::seed::stream;
use l2h_core::synth::{gen_data, GaussianMixtureSpec};
use l2h_core::training::{
    train_timed, AsyncConfig, ClientHandicap, ClientTrainConfig, NoClock, SgdConfig, StageClock,
    TrainTrace, DEFAULT_MAX_GRAD_NORM,
};
use l2h_core::{Architecture, CostParams, Dataset, HybridSystem, Label, RngSeed, ScoreModel};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Sync,
    Async(usize),
}

impl Algo {
    fn async_config(self) -> l2h_core::Result<Option<AsyncConfig>> {
        match self {
            Algo::Sync => Ok(None),
            Algo::Async(s) => AsyncConfig::new(s).map(Some),
        }
    }

    pub fn name(self) -> String {
        match self {
            Algo::Sync => "sync".into(),
            Algo::Async(s) => format!("async:{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub mixture: GaussianMixtureSpec,
    pub client_arch: Architecture,
    pub handicap: ClientHandicap,
    pub client_lr: f64,
    pub client_epochs: usize,
    pub server_arch: Architecture,
    pub rejector_arch: Architecture,
    pub lr_server: f64,
    pub lr_rejector: f64,
    pub epochs: usize,
    pub max_grad_norm: f64,
}

impl Setup {
    /// The synthetic benchmark: a 3-class planar mixture and a weak client that
    /// sees 30 training points for one pass. With a shared variance the Bayes
    /// boundaries are linear, so data starvation is the only way to weaken a
    /// linear client here.
    pub fn synthetic() -> Self {
        Setup {
            mixture: GaussianMixtureSpec::ring(3, 2, 2.0, 1.0, (6000, 1000, 3000))
                .expect("valid mixture"),
            client_arch: Architecture::Linear,
            handicap: ClientHandicap {
                subset_fraction: Some(0.005),
                dropped_classes: Vec::new(),
            },
            client_lr: 0.05,
            client_epochs: 1,
            server_arch: Architecture::mlp1(),
            rejector_arch: Architecture::mlp1(),
            lr_server: 0.05,
            lr_rejector: 0.05,
            epochs: 3,
            max_grad_norm: DEFAULT_MAX_GRAD_NORM,
        }
    }

    pub fn with_dropped_class(mut self, label: Label) -> Self {
        self.handicap = ClientHandicap {
            subset_fraction: None,
            dropped_classes: vec![label],
        };
        self
    }

    pub fn sgd(&self, master: RngSeed) -> SgdConfig {
        SgdConfig {
            learning_rate_server: self.lr_server,
            learning_rate_rejector: self.lr_rejector,
            epochs: self.epochs,
            shuffle: true,
            seed: master.derive(stream::TRAIN_SHUFFLE),
            max_grad_norm: self.max_grad_norm,
        }
    }
}

/// Data splits and the frozen client for one master seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub master: RngSeed,
    pub train: Dataset,
    pub cali: Dataset,
    pub test: Dataset,
    pub client: ScoreModel,
}

pub fn prepare(setup: &Setup, master: RngSeed) -> anyhow::Result<Prepared> {
    prepare_from(
        setup,
        master,
        gen_data(&setup.mixture, master.derive(stream::DATA))?,
    )
}

/// Like [`prepare`] but with splits supplied by the caller; `setup.mixture` is ignored.
pub fn prepare_from(
    setup: &Setup,
    master: RngSeed,
    (train, cali, test): (Dataset, Dataset, Dataset),
) -> anyhow::Result<Prepared> {
    anyhow::ensure!(
        cali.dim() == train.dim() && test.dim() == train.dim(),
        "splits disagree on feature dimension"
    );
    anyhow::ensure!(
        cali.num_classes() == train.num_classes() && test.num_classes() == train.num_classes(),
        "splits disagree on class count"
    );
    let cfg = ClientTrainConfig {
        learning_rate: setup.client_lr,
        epochs: setup.client_epochs,
        seed: master,
    };
    let client =
        l2h_core::training::train_client(&train, setup.client_arch, &setup.handicap, &cfg)?;
    Ok(Prepared {
        master,
        train,
        cali,
        test,
        client,
    })
}

/// Untrained system with server and rejector drawn from the master seed.
pub fn initial_system(setup: &Setup, prep: &Prepared) -> anyhow::Result<HybridSystem> {
    let dim = prep.train.dim();
    let k = prep.train.num_classes();
    let rejector = ScoreModel::init(
        setup.rejector_arch,
        dim,
        2,
        prep.master.derive(stream::REJECTOR_INIT),
    )?;
    let server = ScoreModel::init(
        setup.server_arch,
        dim,
        k,
        prep.master.derive(stream::SERVER_INIT),
    )?;
    Ok(HybridSystem::new(prep.client.clone(), rejector, server)?)
}

pub fn train(
    setup: &Setup,
    prep: &Prepared,
    costs: CostParams,
    algo: Algo,
    clock: &mut dyn StageClock,
) -> anyhow::Result<(HybridSystem, TrainTrace)> {
    let system = initial_system(setup, prep)?;
    let cfg = setup.sgd(prep.master);
    Ok(train_timed(
        system,
        &prep.train,
        costs,
        &cfg,
        algo.async_config()?,
        clock,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub costs: CostParams,
    pub algo: Algo,
    pub report: MetricsReport,
    pub final_ls: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub c_e: Vec<f64>,
    pub c_1: Vec<f64>,
    pub algos: Vec<Algo>,
}

impl Grid {
    pub fn points(&self) -> anyhow::Result<Vec<(CostParams, Algo)>> {
        anyhow::ensure!(
            !self.c_e.is_empty() && !self.c_1.is_empty() && !self.algos.is_empty(),
            "every grid axis needs at least one value"
        );
        let mut out = Vec::new();
        for &c_1 in &self.c_1 {
            for &c_e in &self.c_e {
                for &algo in &self.algos {
                    out.push((CostParams::new(c_e, c_1)?, algo));
                }
            }
        }
        Ok(out)
    }
}

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub const TAIL_WINDOW: usize = 500;

/// Trains and evaluates every grid point in parallel; results come back in grid order.
pub fn sweep(setup: &Setup, prep: &Prepared, grid: &Grid) -> anyhow::Result<Vec<PointResult>> {
    grid.points()?
        .into_par_iter()
        .map(|(costs, algo)| {
            let (system, trace) = train(setup, prep, costs, algo, &mut NoClock)?;
            Ok(PointResult {
                costs,
                algo,
                report: evaluate(&system, &prep.test, costs)?,
                final_ls: trace.tail_mean_ls(TAIL_WINDOW),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrrOutcome {
    pub q: f64,
    pub q1: f64,
    pub mode: BrrMode,
    pub pass_probability: f64,
    pub realized: f64,
    pub accuracy: f64,
    pub baseline_realized: f64,
    pub baseline_accuracy: f64,
}

/// BRR inference on the test split, plus the random baseline run at the
/// budget BRR actually used.
pub fn brr_eval(
    system: &HybridSystem,
    cali: &Dataset,
    test: &Dataset,
    q: f64,
    seed: RngSeed,
) -> anyhow::Result<BrrOutcome> {
    let q1 = calibrate(system, cali)?;
    let mut policy = BrrPolicy::new(q, q1, seed.derive(stream::BRR_UNIFORM))?;
    let n = test.len() as f64;
    let (mut remote, mut correct) = (0usize, 0usize);
    for e in test.examples() {
        let (label, route) = brr_infer(system, e.x.as_slice(), &mut policy)?;
        remote += route.is_remote() as usize;
        correct += (label == e.y) as usize;
    }
    let realized = remote as f64 / n;
    let mut rng = seed.derive(stream::BASELINE_UNIFORM).rng();
    let (mut b_remote, mut b_correct) = (0usize, 0usize);
    for e in test.examples() {
        let (label, route) = random_reject_baseline(
            system.client(),
            &system.server,
            e.x.as_slice(),
            realized,
            &mut rng,
        )?;
        b_remote += route.is_remote() as usize;
        b_correct += (label == e.y) as usize;
    }
    Ok(BrrOutcome {
        q,
        q1,
        mode: policy.mode(),
        pass_probability: policy.pass_probability(),
        realized,
        accuracy: correct as f64 / n,
        baseline_realized: b_remote as f64 / n,
        baseline_accuracy: b_correct as f64 / n,
    })
}

/// Routes every test example under pay-per-request billing, optionally with
/// an availability schedule (remote requests during downtime fall back to the client).
pub fn route_test_set(
    system: &HybridSystem,
    test: &Dataset,
    costs: CostParams,
    schedule: &AvailabilitySchedule,
) -> anyhow::Result<(Vec<RoutingDecision>, UsageLedger)> {
    schedule.validate()?;
    let mut ledger = UsageLedger::default();
    let mut out = Vec::with_capacity(test.len());
    for (i, e) in test.examples().iter().enumerate() {
        let (label, route, fallback) = ia_infer(system, e.x.as_slice(), schedule, i as u64)?;
        let server_correct = route.is_remote().then(|| label == e.y);
        let cost_delta = ledger.record(route, server_correct, costs);
        out.push(RoutingDecision {
            index: i,
            route,
            fallback,
            label,
            cost_delta,
        });
    }
    Ok((out, ledger))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGridResult {
    pub costs: CostParams,
    pub equivalence: EquivalenceReport,
    pub consistency: ConsistencyReport,
}

impl OracleGridResult {
    pub fn passed(&self) -> bool {
        self.equivalence.passed() && self.consistency.passed()
    }
}

/// Closed-form versus enumerated Bayes rules and surrogate consistency at every cost pair.
pub fn oracle_grid(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    c_e: &[f64],
    c_1: &[f64],
) -> anyhow::Result<Vec<OracleGridResult>> {
    anyhow::ensure!(
        !c_e.is_empty() && !c_1.is_empty(),
        "cost grids must be non-empty"
    );
    let mut out = Vec::new();
    for &a in c_e {
        for &b in c_1 {
            let costs = CostParams::new(a, b)?;
            let equivalence = match client {
                ClientBehavior::Deterministic(_) => bayes_equivalence(world, client, costs)?,
                // closed-form rejector needs a deterministic client
                ClientBehavior::Stochastic(_) => EquivalenceReport::default(),
            };
            out.push(OracleGridResult {
                costs,
                equivalence,
                consistency: consistency_check(world, client, costs)?,
            });
        }
    }
    Ok(out)
}
