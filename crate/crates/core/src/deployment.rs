//! Inference-time runtimes for the three deployment regimes.
//!
//! - Pay-per-request: every deferral is billed `c_e`, plus `c_1` when the
//!   server turns out to be wrong and the label is known.
//! - Intermittent availability: a remote request made while the server is
//!   down falls back to the client.
//! - Bounded reject rate: a calibrated stochastic post-hoc policy thins out
//!   (or tops up) the rejector's deferrals so the remote fraction is `q` in
//!   expectation.

use rand::distr::Open01;
use rand::Rng as _;

use crate::domain::{CostParams, Dataset, Label, RngSeed, Route};
use crate::error::{Error, Result};
use crate::models::{HybridSystem, ScoreModel};
use crate::seed::{keyed_uniform, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UsageLedger {
    pub total_queries: u64,
    pub remote_queries: u64,
    /// Remote queries whose label was known and wrong.
    pub remote_errors: u64,
    pub accumulated_cost: f64,
}

impl UsageLedger {
    /// Books one query and returns the cost it added.
    pub fn record(&mut self, route: Route, server_correct: Option<bool>, costs: CostParams) -> f64 {
        self.total_queries += 1;
        if route == Route::Local {
            return 0.0;
        }
        self.remote_queries += 1;
        let mut delta = costs.c_e;
        if server_correct == Some(false) {
            self.remote_errors += 1;
            delta += costs.c_1;
        }
        self.accumulated_cost += delta;
        delta
    }

    pub fn remote_fraction(&self) -> f64 {
        if self.total_queries == 0 {
            0.0
        } else {
            self.remote_queries as f64 / self.total_queries as f64
        }
    }
}

/// One routed query, as exported to decision logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingDecision {
    pub index: usize,
    pub route: Route,
    pub fallback: bool,
    pub label: Label,
    pub cost_delta: f64,
}

/// Pay-per-request inference. `truth`, when known, lets the ledger charge `c_1`.
pub fn ppr_infer(
    system: &HybridSystem,
    x: &[f64],
    costs: CostParams,
    ledger: &mut UsageLedger,
    truth: Option<Label>,
) -> Result<(Label, Route, f64)> {
    let (label, route) = system.infer(x)?;
    let delta = ledger.record(route, truth.map(|y| y == label), costs);
    Ok((label, route, delta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AvailabilitySchedule {
    Always,
    /// Up for the first `duty * period` steps of every period.
    Periodic {
        period: usize,
        duty: f64,
    },
    /// Up with probability `p_up` at each step, keyed by `(seed, step)`.
    Bernoulli {
        p_up: f64,
        seed: RngSeed,
    },
}

impl AvailabilitySchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AvailabilitySchedule::Always => Ok(()),
            AvailabilitySchedule::Periodic { period, duty } => {
                if period == 0 || !(0.0..=1.0).contains(&duty) {
                    return Err(Error::InvalidInput(
                        "periodic schedule needs period >= 1 and duty in [0, 1]",
                    ));
                }
                Ok(())
            }
            AvailabilitySchedule::Bernoulli { p_up, .. } => {
                if !(0.0..=1.0).contains(&p_up) {
                    return Err(Error::InvalidProbability("p_up must be in [0, 1]"));
                }
                Ok(())
            }
        }
    }

    pub fn is_available(&self, step: u64) -> bool {
        match *self {
            AvailabilitySchedule::Always => true,
            AvailabilitySchedule::Periodic { period, duty } => {
                ((step % period as u64) as f64) < duty * period as f64
            }
            AvailabilitySchedule::Bernoulli { p_up, seed } => keyed_uniform(seed, step) < p_up,
        }
    }
}

/// Intermittent-availability inference. Returns the label, the route actually
/// used, and whether a remote request fell back to the client.
pub fn ia_infer(
    system: &HybridSystem,
    x: &[f64],
    schedule: &AvailabilitySchedule,
    step: u64,
) -> Result<(Label, Route, bool)> {
    let requested = system.rejector.route(x)?;
    if requested == Route::Remote && !schedule.is_available(step) {
        return Ok((system.client().predict(x)?, Route::Local, true));
    }
    let label = match requested {
        Route::Local => system.client().predict(x)?,
        Route::Remote => system.server.predict(x)?,
    };
    Ok((label, requested, false))
}

/// Fraction of calibration points the rejector sends remote.
pub fn calibrate(system: &HybridSystem, calibration: &Dataset) -> Result<f64> {
    let mut remote = 0usize;
    for ex in calibration.examples() {
        if system.rejector.route(ex.x.as_slice())? == Route::Remote {
            remote += 1;
        }
    }
    Ok(remote as f64 / calibration.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrrMode {
    /// `q < q1`: keep a share `1 - p` of the rejector's deferrals local.
    Under,
    /// `q >= q1`: additionally send a share `p` of local decisions to the server.
    Over,
}

/// Stochastic post-hoc policy for a reject-rate bound `q`. Owns its uniform stream.
#[derive(Debug, Clone)]
pub struct BrrPolicy {
    q: f64,
    q1: f64,
    p: f64,
    mode: BrrMode,
    rng: Rng,
}

impl BrrPolicy {
    pub fn new(q: f64, q1: f64, seed: RngSeed) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidProbability(
                "reject-rate bound q must be in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&q1) {
            return Err(Error::InvalidProbability(
                "calibrated reject rate q1 must be in [0, 1]",
            ));
        }
        let (mode, p) = if q < q1 {
            // q1 > q >= 0 here, so the division is safe
            (BrrMode::Under, q / q1)
        } else if q1 >= 1.0 {
            // q = q1 = 1: everything is already remote
            (BrrMode::Over, 1.0)
        } else {
            (BrrMode::Over, (q - q1) / (1.0 - q1))
        };
        Ok(BrrPolicy {
            q,
            q1,
            p: p.clamp(0.0, 1.0),
            mode,
            rng: seed.rng(),
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn pass_probability(&self) -> f64 {
        self.p
    }

    pub fn mode(&self) -> BrrMode {
        self.mode
    }

    /// Remote fraction implied by the policy if the test-time reject rate equals `q1`.
    pub fn expected_remote_fraction(&self) -> f64 {
        match self.mode {
            BrrMode::Under => self.q1 * self.p,
            BrrMode::Over => self.q1 + (1.0 - self.q1) * self.p,
        }
    }

    /// Uniform on the open interval `(0, 1)`, so `p = 0` never passes.
    fn draw(&mut self) -> f64 {
        self.rng.sample(Open01)
    }
}

/// Bounded-reject-rate inference. Returns the label and the branch that produced it.
pub fn brr_infer(
    system: &HybridSystem,
    x: &[f64],
    policy: &mut BrrPolicy,
) -> Result<(Label, Route)> {
    let requested = system.rejector.route(x)?;
    let route = match (policy.mode, requested) {
        (BrrMode::Under, Route::Remote) | (BrrMode::Over, Route::Local) => {
            if policy.draw() <= policy.p {
                Route::Remote
            } else {
                Route::Local
            }
        }
        (BrrMode::Under, Route::Local) => Route::Local,
        (BrrMode::Over, Route::Remote) => Route::Remote,
    };
    let label = match route {
        Route::Local => system.client().predict(x)?,
        Route::Remote => system.server.predict(x)?,
    };
    Ok((label, route))
}

/// Rejector-free baseline: send to the server with probability `q`.
pub fn random_reject_baseline(
    client: &ScoreModel,
    server: &ScoreModel,
    x: &[f64],
    q: f64,
    rng: &mut Rng,
) -> Result<(Label, Route)> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidProbability("q must be in [0, 1]"));
    }
    let u: f64 = rng.random();
    if u < q {
        Ok((server.predict(x)?, Route::Remote))
    } else {
        Ok((client.predict(x)?, Route::Local))
    }
}
