//! Stage-switching SGD.
//!
//! Each step takes one example `(x_t, y_t)` and runs two stages in order:
//!
//! 1. server stage: an `L1` gradient step on `e`;
//! 2. rejector stage: an `L2` gradient step on `r`, where the `L2` weights use
//!    `1[e(x_t) = y_t]` from the server copy the rejector can see and
//!    `1[m(x_t) = y_t]` from the frozen client.
//!
//! In the synchronous loop the rejector sees the server just updated in
//! stage 1. In the asynchronous loop it sees a snapshot `e⁻` that is refreshed
//! only every `S` steps (right after the server stage of steps `t = 1, S+1,
//! 2S+1, ...`), modelling a client that only talks to the server
//! intermittently.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::domain::{CostParams, Dataset, Label, RngSeed};
use crate::error::{Error, Result};
use crate::losses::{backprop_l1, backprop_l2, l2_weights, GradReport};
use crate::models::{Architecture, HybridSystem, ScoreModel};
use crate::seed::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate_server: f64,
    pub learning_rate_rejector: f64,
    pub epochs: usize,
    pub shuffle: bool,
    pub seed: RngSeed,
    /// Per-step cap on the Euclidean norm of each parameter gradient;
    /// `f64::INFINITY` disables it. When `a < 0` the rejector loss has no
    /// minimum, and without a cap an MLP rejector grows until it overflows.
    pub max_grad_norm: f64,
}

pub const DEFAULT_MAX_GRAD_NORM: f64 = 100.0;

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate_server: 0.05,
            learning_rate_rejector: 0.05,
            epochs: 1,
            shuffle: false,
            seed: RngSeed(0),
            max_grad_norm: DEFAULT_MAX_GRAD_NORM,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| r.is_finite() && r > 0.0;
        if !ok(self.learning_rate_server) || !ok(self.learning_rate_rejector) {
            return Err(Error::InvalidInput("learning rates must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1"));
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return Err(Error::InvalidInput("max_grad_norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AsyncConfig {
    pub sync_interval: usize,
}

impl AsyncConfig {
    pub fn new(sync_interval: usize) -> Result<Self> {
        if sync_interval == 0 {
            return Err(Error::InvalidInput("sync interval must be at least 1"));
        }
        Ok(AsyncConfig { sync_interval })
    }

    /// Whether the snapshot is refreshed at 1-based step `t`.
    pub fn refreshes_at(&self, t: usize) -> bool {
        (t - 1).is_multiple_of(self.sync_interval)
    }
}

/// Source of stage timestamps. Training itself is clock-free; the std
/// companion plugs in a wall clock.
pub trait StageClock {
    fn now_ns(&mut self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl StageClock for NoClock {
    fn now_ns(&mut self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based global step.
    pub step: usize,
    pub epoch: usize,
    /// Index of the example in the dataset.
    pub example: usize,
    pub l1: f64,
    pub l2: f64,
    pub l_s: f64,
    pub running_mean_l1: f64,
    pub running_mean_l2: f64,
    pub running_mean_ls: f64,
    pub server_stage_ns: u64,
    pub rejector_stage_ns: u64,
    /// The rejector-side server copy was refreshed at this step.
    pub refreshed: bool,
}

impl StepRecord {
    /// Equality of the loss values and step bookkeeping, ignoring timings and refresh flags.
    pub fn same_values(&self, other: &StepRecord) -> bool {
        self.step == other.step
            && self.epoch == other.epoch
            && self.example == other.example
            && self.l1.to_bits() == other.l1.to_bits()
            && self.l2.to_bits() == other.l2.to_bits()
            && self.l_s.to_bits() == other.l_s.to_bits()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_ls: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Mean `L_S` over the last `window` steps (or all of them if fewer).
    pub fn tail_mean_ls(&self, window: usize) -> f64 {
        let n = self.steps.len().min(window);
        if n == 0 {
            return f64::NAN;
        }
        self.steps[self.steps.len() - n..]
            .iter()
            .map(|s| s.l_s)
            .sum::<f64>()
            / n as f64
    }

    pub fn same_values(&self, other: &TrainTrace) -> bool {
        self.steps.len() == other.steps.len()
            && self
                .steps
                .iter()
                .zip(&other.steps)
                .all(|(a, b)| a.same_values(b))
    }
}

/// `params <- params - lr * grad`. Frozen models refuse.
pub fn sgd_step(model: &mut ScoreModel, grads: &GradReport, lr: f64) -> Result<()> {
    let n = model.params().len();
    if grads.param_grad.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grads.param_grad.len(),
        });
    }
    let params = model.params_mut()?;
    for (p, g) in params.iter_mut().zip(&grads.param_grad) {
        *p -= lr * g;
    }
    Ok(())
}

/// Rescales `grads` in place so its norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut GradReport, max_norm: f64) {
    let norm = libm::sqrt(grads.param_grad.iter().map(|g| g * g).sum::<f64>());
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.param_grad.iter_mut() {
            *g *= scale;
        }
    }
}

fn check_data(system: &HybridSystem, data: &Dataset) -> Result<()> {
    if data.dim() != system.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: system.input_dim(),
            got: data.dim(),
        });
    }
    if data.num_classes() != system.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: system.num_classes(),
            got: data.num_classes(),
        });
    }
    Ok(())
}

fn epoch_order(n: usize, epochs: usize, shuffle: bool, seed: RngSeed) -> Vec<Vec<usize>> {
    let mut rng = seed.rng();
    (0..epochs)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            if shuffle {
                order.shuffle(&mut rng);
            }
            order
        })
        .collect()
}

/// Synchronous stage-switching training (pay-per-request setting).
pub fn train_sync(
    system: HybridSystem,
    data: &Dataset,
    costs: CostParams,
    cfg: &SgdConfig,
) -> Result<(HybridSystem, TrainTrace)> {
    run(system, data, costs, cfg, None, &mut NoClock)
}

/// Asynchronous training against a stale server snapshot (intermittent availability).
pub fn train_async(
    system: HybridSystem,
    data: &Dataset,
    costs: CostParams,
    cfg: &SgdConfig,
    async_cfg: AsyncConfig,
) -> Result<(HybridSystem, TrainTrace)> {
    run(system, data, costs, cfg, Some(async_cfg), &mut NoClock)
}

/// Either loop with a caller-supplied clock for stage timings.
pub fn train_timed(
    system: HybridSystem,
    data: &Dataset,
    costs: CostParams,
    cfg: &SgdConfig,
    async_cfg: Option<AsyncConfig>,
    clock: &mut dyn StageClock,
) -> Result<(HybridSystem, TrainTrace)> {
    run(system, data, costs, cfg, async_cfg, clock)
}

fn run(
    mut system: HybridSystem,
    data: &Dataset,
    costs: CostParams,
    cfg: &SgdConfig,
    async_cfg: Option<AsyncConfig>,
    clock: &mut dyn StageClock,
) -> Result<(HybridSystem, TrainTrace)> {
    cfg.validate()?;
    check_data(&system, data)?;
    let examples = data.examples();
    // the client never changes, so its predictions are computed once
    let client_preds: Vec<Label> = examples
        .iter()
        .map(|ex| system.client().predict(ex.x.as_slice()))
        .collect::<Result<_>>()?;

    let mut snapshot: Option<ScoreModel> = None;
    let mut trace = TrainTrace::default();
    let (mut sum1, mut sum2) = (0.0, 0.0);
    let mut t = 0usize;
    for (epoch, order) in epoch_order(examples.len(), cfg.epochs, cfg.shuffle, cfg.seed)
        .into_iter()
        .enumerate()
    {
        let (mut e1, mut e2) = (0.0, 0.0);
        for &i in &order {
            t += 1;
            let x = examples[i].x.as_slice();
            let y = examples[i].y;

            let t0 = clock.now_ns();
            let mut g1 = backprop_l1(&system.server, x, y)?;
            clip_grad_norm(&mut g1, cfg.max_grad_norm);
            sgd_step(&mut system.server, &g1, cfg.learning_rate_server)?;
            let t1 = clock.now_ns();

            let refreshed = match async_cfg {
                Some(a) if a.refreshes_at(t) => {
                    snapshot = Some(system.server.clone());
                    true
                }
                _ => false,
            };
            let visible = match async_cfg {
                Some(_) => snapshot.as_ref().expect("snapshot taken at t = 1"),
                None => &system.server,
            };
            let e_pred = visible.predict(x)?;
            let w = l2_weights(e_pred, client_preds[i], y, costs);
            let mut g2 = backprop_l2(&system.rejector, x, w)?;
            clip_grad_norm(&mut g2, cfg.max_grad_norm);
            sgd_step(&mut system.rejector, &g2, cfg.learning_rate_rejector)?;
            let t2 = clock.now_ns();

            sum1 += g1.loss;
            sum2 += g2.loss;
            e1 += g1.loss;
            e2 += g2.loss;
            let n = t as f64;
            trace.steps.push(StepRecord {
                step: t,
                epoch,
                example: i,
                l1: g1.loss,
                l2: g2.loss,
                l_s: g1.loss + g2.loss,
                running_mean_l1: sum1 / n,
                running_mean_l2: sum2 / n,
                running_mean_ls: (sum1 + sum2) / n,
                server_stage_ns: t1.saturating_sub(t0),
                rejector_stage_ns: t2.saturating_sub(t1),
                refreshed,
            });
        }
        let n = order.len() as f64;
        trace.epochs.push(EpochSummary {
            epoch,
            mean_l1: e1 / n,
            mean_l2: e2 / n,
            mean_ls: (e1 + e2) / n,
        });
    }
    Ok((system, trace))
}

/// How the client is weakened before it is frozen.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClientHandicap {
    /// Fraction of the training set kept, in `(0, 1]`. `None` keeps everything.
    pub subset_fraction: Option<f64>,
    /// Classes removed from the client's training data.
    pub dropped_classes: Vec<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: RngSeed,
}

impl Default for ClientTrainConfig {
    fn default() -> Self {
        ClientTrainConfig {
            learning_rate: 0.05,
            epochs: 5,
            seed: RngSeed(0),
        }
    }
}

/// Plain cross-entropy SGD on the (possibly handicapped) data; returns a frozen model.
pub fn train_client(
    data: &Dataset,
    arch: Architecture,
    handicap: &ClientHandicap,
    cfg: &ClientTrainConfig,
) -> Result<ScoreModel> {
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) || cfg.epochs == 0 {
        return Err(Error::InvalidInput(
            "client learning rate and epochs must be positive",
        ));
    }
    if let Some(l) = handicap
        .dropped_classes
        .iter()
        .find(|l| l.0 >= data.num_classes())
    {
        return Err(Error::LabelOutOfRange {
            label: l.0,
            num_classes: data.num_classes(),
        });
    }
    let remaining = (0..data.num_classes())
        .filter(|k| !handicap.dropped_classes.contains(&Label(*k)))
        .count();
    if remaining == 0 {
        return Err(Error::InvalidInput("class dropout removes every class"));
    }
    let mut subset = data.filter(|_, ex| !handicap.dropped_classes.contains(&ex.y))?;
    if let Some(f) = handicap.subset_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidInput("subset fraction must be in (0, 1]"));
        }
        let mut idx: Vec<usize> = (0..subset.len()).collect();
        idx.shuffle(&mut cfg.seed.derive(stream::DATA).rng());
        let keep = libm::ceil(f * subset.len() as f64) as usize;
        let mut chosen = alloc::vec![false; subset.len()];
        for &i in &idx[..keep.max(1)] {
            chosen[i] = true;
        }
        subset = subset.filter(|i, _| chosen[i])?;
    }

    let mut model = ScoreModel::init(
        arch,
        data.dim(),
        data.num_classes(),
        cfg.seed.derive(stream::CLIENT_INIT),
    )?;
    let orders = epoch_order(
        subset.len(),
        cfg.epochs,
        true,
        cfg.seed.derive(stream::CLIENT_SGD),
    );
    for order in orders {
        for i in order {
            let ex = &subset.examples()[i];
            let g = backprop_l1(&model, ex.x.as_slice(), ex.y)?;
            sgd_step(&mut model, &g, cfg.learning_rate)?;
        }
    }
    Ok(model.frozen())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeatureVector, LabeledExample};
    use crate::losses::{l2_loss, L2Weights};
    use alloc::vec;

    fn dataset(points: &[(f64, f64, usize)], k: usize) -> Dataset {
        Dataset::new(
            points
                .iter()
                .map(|&(a, b, y)| LabeledExample {
                    x: FeatureVector(vec![a, b]),
                    y: Label(y),
                })
                .collect(),
            k,
            2,
        )
        .unwrap()
    }

    fn system(seed: u64) -> HybridSystem {
        let client = ScoreModel::init(Architecture::Linear, 2, 3, RngSeed(seed)).unwrap();
        let rej = ScoreModel::init(Architecture::Linear, 2, 2, RngSeed(seed + 1)).unwrap();
        let server = ScoreModel::init(Architecture::mlp1(), 2, 3, RngSeed(seed + 2)).unwrap();
        HybridSystem::new(client, rej, server).unwrap()
    }

    #[test]
    fn sgd_step_basics() {
        let mut m = ScoreModel::init(Architecture::Linear, 2, 2, RngSeed(1)).unwrap();
        let before = m.clone();
        let zero = GradReport {
            loss: 0.0,
            score_grad: vec![0.0; 2],
            param_grad: vec![0.0; 6],
        };
        sgd_step(&mut m, &zero, 0.3).unwrap();
        assert_eq!(m, before);
        let own = GradReport {
            loss: 0.0,
            score_grad: vec![],
            param_grad: m.params().to_vec(),
        };
        sgd_step(&mut m, &own, 1.0).unwrap();
        assert!(m.params().iter().all(|&p| p == 0.0));
        let mut frozen = before.frozen();
        assert_eq!(sgd_step(&mut frozen, &zero, 0.1), Err(Error::FrozenModel));
    }

    #[test]
    fn small_step_decreases_convex_l2() {
        let rej = ScoreModel::init(Architecture::Linear, 2, 2, RngSeed(4)).unwrap();
        let x = [0.4, -1.2];
        let w = L2Weights { a: 0.6, b: 1.0 };
        let g = backprop_l2(&rej, &x, w).unwrap();
        let mut after = rej.clone();
        sgd_step(&mut after, &g, 0.01).unwrap();
        let s = after.forward(&x).unwrap();
        assert!(l2_loss(s[0], s[1], w) < g.loss);
    }

    #[test]
    fn single_sample_single_epoch() {
        let data = dataset(&[(0.5, -0.5, 1)], 3);
        let cfg = SgdConfig::default();
        let (_, trace) =
            train_sync(system(1), &data, CostParams::new(0.2, 1.0).unwrap(), &cfg).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.epochs.len(), 1);
    }

    #[test]
    fn sync_matches_hand_rolled_stage_order() {
        let data = dataset(&[(0.5, -0.5, 1), (1.0, 0.2, 0), (-0.3, 0.8, 2)], 3);
        let costs = CostParams::new(0.25, 1.25).unwrap();
        let cfg = SgdConfig::default();
        let sys = system(7);
        let (trained, _) = train_sync(sys.clone(), &data, costs, &cfg).unwrap();

        let mut server = sys.server.clone();
        let mut rej = sys.rejector.clone();
        for ex in data.examples() {
            let x = ex.x.as_slice();
            let g = backprop_l1(&server, x, ex.y).unwrap();
            sgd_step(&mut server, &g, 0.05).unwrap();
            let w = l2_weights(
                server.predict(x).unwrap(),
                sys.client().predict(x).unwrap(),
                ex.y,
                costs,
            );
            let g = backprop_l2(&rej, x, w).unwrap();
            sgd_step(&mut rej, &g, 0.05).unwrap();
        }
        assert_eq!(trained.server, server);
        assert_eq!(trained.rejector, rej);
    }

    #[test]
    fn refresh_schedule() {
        let a = AsyncConfig::new(3).unwrap();
        let hits: Vec<usize> = (1..=10).filter(|&t| a.refreshes_at(t)).collect();
        assert_eq!(hits, vec![1, 4, 7, 10]);
        let one = AsyncConfig::new(1).unwrap();
        assert!((1..=10).all(|t| one.refreshes_at(t)));
        assert!(AsyncConfig::new(0).is_err());
    }

    #[test]
    fn async_interval_n_refreshes_once() {
        let data = dataset(
            &[(0.5, -0.5, 1), (1.0, 0.2, 0), (-0.3, 0.8, 2), (0.1, 0.1, 0)],
            3,
        );
        let cfg = SgdConfig::default();
        let costs = CostParams::new(0.1, 1.0).unwrap();
        let (_, trace) =
            train_async(system(3), &data, costs, &cfg, AsyncConfig::new(4).unwrap()).unwrap();
        let refreshes: Vec<usize> = trace
            .steps
            .iter()
            .filter(|s| s.refreshed)
            .map(|s| s.step)
            .collect();
        assert_eq!(refreshes, vec![1]);
    }

    #[test]
    fn validation_errors() {
        let data = dataset(&[(0.5, -0.5, 1)], 3);
        let costs = CostParams::new(0.1, 1.0).unwrap();
        let bad = SgdConfig {
            learning_rate_server: 0.0,
            ..SgdConfig::default()
        };
        assert!(train_sync(system(1), &data, costs, &bad).is_err());
        let bad = SgdConfig {
            max_grad_norm: 0.0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SgdConfig {
            epochs: 0,
            ..SgdConfig::default()
        };
        assert!(train_sync(system(1), &data, costs, &bad).is_err());
        let wrong_k = dataset(&[(0.5, -0.5, 1)], 2);
        assert!(train_sync(system(1), &wrong_k, costs, &SgdConfig::default()).is_err());
    }

    #[test]
    fn client_dropout_errors() {
        let data = dataset(&[(0.5, -0.5, 1), (1.0, 0.2, 0)], 2);
        let all = ClientHandicap {
            subset_fraction: None,
            dropped_classes: vec![Label(0), Label(1)],
        };
        assert!(train_client(
            &data,
            Architecture::Linear,
            &all,
            &ClientTrainConfig::default()
        )
        .is_err());
        let bad = ClientHandicap {
            subset_fraction: Some(0.0),
            dropped_classes: vec![],
        };
        assert!(train_client(
            &data,
            Architecture::Linear,
            &bad,
            &ClientTrainConfig::default()
        )
        .is_err());
        let m = train_client(
            &data,
            Architecture::Linear,
            &ClientHandicap::default(),
            &ClientTrainConfig::default(),
        )
        .unwrap();
        assert!(m.is_frozen());
    }
}
