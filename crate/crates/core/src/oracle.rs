//! Exact ground truth on finite discrete worlds.
//!
//! A [`DiscreteWorld`] is a finite support with a prior and a class-posterior
//! matrix `eta[s][i] = P(Y = i | X = x_s)`. On such a world every risk is a
//! finite sum, so the Bayes rules can be checked against brute-force posterior
//! risk enumeration and the surrogate's pointwise minimizer can be checked
//! against the Bayes rejector.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::domain::{argmax_label, generalized_loss, CostParams, FeatureVector, Label, Route};
use crate::error::{Error, Result};
use crate::losses::{l2_grad, L2Weights};
use crate::seed::Rng;

const ROW_SUM_TOL: f64 = 1e-12;

/// Route comparisons within this distance of the decision boundary are not scored.
pub const BOUNDARY_TOL: f64 = 1e-9;
pub const NUMERIC_STEPS: usize = 2000;
pub const NUMERIC_STEP_SIZE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWorld {
    support: Vec<FeatureVector>,
    prior: Vec<f64>,
    eta: Vec<Vec<f64>>,
    num_classes: usize,
}

fn check_distribution(row: &[f64], what: &'static str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidProbability(what));
    }
    if (row.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidProbability(what));
    }
    Ok(())
}

impl DiscreteWorld {
    pub fn new(support: Vec<FeatureVector>, prior: Vec<f64>, eta: Vec<Vec<f64>>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidInput("world support is empty"));
        }
        if prior.len() != support.len() || eta.len() != support.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: if prior.len() != support.len() {
                    prior.len()
                } else {
                    eta.len()
                },
            });
        }
        let dim = support[0].dim();
        if let Some(bad) = support.iter().find(|x| x.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        for (i, a) in support.iter().enumerate() {
            if support[..i].contains(a) {
                return Err(Error::InvalidInput("world support points must be distinct"));
            }
        }
        let num_classes = eta[0].len();
        if num_classes == 0 {
            return Err(Error::InvalidInput("world needs at least one class"));
        }
        check_distribution(&prior, "prior must be a probability vector")?;
        for row in &eta {
            if row.len() != num_classes {
                return Err(Error::DimensionMismatch {
                    expected: num_classes,
                    got: row.len(),
                });
            }
            check_distribution(row, "eta rows must be probability vectors")?;
        }
        Ok(DiscreteWorld {
            support,
            prior,
            eta,
            num_classes,
        })
    }

    /// Random world with `points` support points. Posterior rows are softmaxes of
    /// uniform logits at a random temperature, so both confident and ambiguous
    /// points show up.
    pub fn random(rng: &mut Rng, points: usize, num_classes: usize, dim: usize) -> Result<Self> {
        if points == 0 || num_classes == 0 || dim == 0 {
            return Err(Error::InvalidInput("world sizes must be positive"));
        }
        let support: Vec<FeatureVector> = (0..points)
            .map(|s| {
                // first coordinate is the index, so points are always distinct
                let mut v = vec![s as f64];
                v.extend((1..dim).map(|_| rng.random_range(-1.0..1.0)));
                FeatureVector(v)
            })
            .collect();
        let raw: Vec<f64> = (0..points).map(|_| rng.random_range(0.05..1.0)).collect();
        let prior = normalize(raw);
        let eta = (0..points)
            .map(|_| {
                let temp = rng.random_range(0.2..4.0);
                let logits: Vec<f64> = (0..num_classes)
                    .map(|_| libm::exp(temp * rng.random_range(-1.0..1.0)))
                    .collect();
                normalize(logits)
            })
            .collect();
        DiscreteWorld::new(support, prior, eta)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    pub fn support(&self) -> &[FeatureVector] {
        &self.support
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn eta(&self, point: usize) -> &[f64] {
        &self.eta[point]
    }

    fn max_eta(&self, point: usize) -> f64 {
        self.eta[point]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Draws `n` labelled examples: support point by prior, label by its eta row.
    pub fn sample(&self, rng: &mut Rng, n: usize) -> Vec<(usize, Label)> {
        (0..n)
            .map(|_| {
                let s = sample_categorical(rng, &self.prior);
                (s, Label(sample_categorical(rng, &self.eta[s])))
            })
            .collect()
    }
}

/// Scales a non-negative vector to sum to one, correcting the last entry for rounding.
fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    for p in v.iter_mut() {
        *p /= sum;
    }
    let head: f64 = v[..v.len() - 1].iter().sum();
    let last = v.len() - 1;
    v[last] = (1.0 - head).max(0.0);
    v
}

fn sample_categorical(rng: &mut Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientBehavior {
    /// Fixed prediction per support point.
    Deterministic(Vec<Label>),
    /// `P(M = i | X = x_s)` per support point.
    Stochastic(Vec<Vec<f64>>),
}

impl ClientBehavior {
    pub fn validate(&self, world: &DiscreteWorld) -> Result<()> {
        let k = world.num_classes();
        match self {
            ClientBehavior::Deterministic(labels) => {
                if labels.len() != world.len() {
                    return Err(Error::DimensionMismatch {
                        expected: world.len(),
                        got: labels.len(),
                    });
                }
                if let Some(l) = labels.iter().find(|l| l.0 >= k) {
                    return Err(Error::LabelOutOfRange {
                        label: l.0,
                        num_classes: k,
                    });
                }
            }
            ClientBehavior::Stochastic(rows) => {
                if rows.len() != world.len() {
                    return Err(Error::DimensionMismatch {
                        expected: world.len(),
                        got: rows.len(),
                    });
                }
                for row in rows {
                    if row.len() != k {
                        return Err(Error::DimensionMismatch {
                            expected: k,
                            got: row.len(),
                        });
                    }
                    check_distribution(row, "client rows must be probability vectors")?;
                }
            }
        }
        Ok(())
    }

    /// `P(M = i | x_s)` as a dense row.
    pub fn distribution(&self, point: usize, num_classes: usize) -> Vec<f64> {
        match self {
            ClientBehavior::Deterministic(labels) => {
                let mut row = vec![0.0; num_classes];
                row[labels[point].0] = 1.0;
                row
            }
            ClientBehavior::Stochastic(rows) => rows[point].clone(),
        }
    }

    /// `P(M = Y | x_s) = sum_i P(M = i | x_s) eta_i(x_s)`.
    pub fn accuracy_at(&self, world: &DiscreteWorld, point: usize) -> f64 {
        match self {
            ClientBehavior::Deterministic(labels) => world.eta(point)[labels[point].0],
            ClientBehavior::Stochastic(rows) => rows[point]
                .iter()
                .zip(world.eta(point))
                .map(|(m, e)| m * e)
                .sum(),
        }
    }
}

/// `(1 - c_e - c_1) + c_1 * max_i eta_i(x)`: the client must beat this to keep a point local.
pub fn bayes_threshold(world: &DiscreteWorld, costs: CostParams, point: usize) -> f64 {
    (1.0 - costs.c_e - costs.c_1) + costs.c_1 * world.max_eta(point)
}

pub fn bayes_server(world: &DiscreteWorld) -> Vec<Label> {
    (0..world.len())
        .map(|s| argmax_label(world.eta(s)).expect("eta rows are non-empty"))
        .collect()
}

/// Closed-form Bayes rejector for a deterministic client.
pub fn bayes_rejector(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    costs: CostParams,
) -> Result<Vec<Route>> {
    client.validate(world)?;
    let labels = match client {
        ClientBehavior::Deterministic(labels) => labels,
        ClientBehavior::Stochastic(_) => return Err(Error::StochasticClient),
    };
    Ok((0..world.len())
        .map(|s| {
            if world.eta(s)[labels[s].0] > bayes_threshold(world, costs, s) {
                Route::Local
            } else {
                Route::Remote
            }
        })
        .collect())
}

/// Posterior risks of every decision at one support point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerdict {
    pub point: usize,
    /// `P(M != Y | x)`.
    pub local_risk: f64,
    /// `c_e + c_1 (1 - eta_{e'}(x))` for each server label `e'`.
    pub remote_risks: Vec<f64>,
    pub route: Route,
    /// Lowest-index minimizer of the remote risk.
    pub server_label: Label,
    /// `min(local_risk, min remote_risks)`.
    pub bayes_risk: f64,
}

/// Brute-force minimization of the posterior risk over `{local, remote} x [K]`.
/// Works for stochastic clients; local wins only on a strictly smaller risk.
pub fn posterior_enumeration(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    costs: CostParams,
    point: usize,
) -> Result<OracleVerdict> {
    client.validate(world)?;
    if point >= world.len() {
        return Err(Error::InvalidInput("support point index out of range"));
    }
    let local_risk = 1.0 - client.accuracy_at(world, point);
    let remote_risks: Vec<f64> = world
        .eta(point)
        .iter()
        .map(|e| costs.c_e + costs.c_1 * (1.0 - e))
        .collect();
    let mut server_label = 0;
    for (i, &r) in remote_risks.iter().enumerate() {
        if r < remote_risks[server_label] {
            server_label = i;
        }
    }
    let best_remote = remote_risks[server_label];
    let (route, bayes_risk) = if local_risk < best_remote {
        (Route::Local, local_risk)
    } else {
        (Route::Remote, best_remote)
    };
    Ok(OracleVerdict {
        point,
        local_risk,
        remote_risks,
        route,
        server_label: Label(server_label),
        bayes_risk,
    })
}

/// Expected generalized 0-1 loss of fixed rejector and server maps.
pub fn exact_risk(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    rejector: &[Route],
    server: &[Label],
    costs: CostParams,
) -> Result<f64> {
    client.validate(world)?;
    if rejector.len() != world.len() || server.len() != world.len() {
        return Err(Error::DimensionMismatch {
            expected: world.len(),
            got: rejector.len().min(server.len()),
        });
    }
    let k = world.num_classes();
    let mut total = 0.0;
    for s in 0..world.len() {
        let m_dist = client.distribution(s, k);
        let mut point = 0.0;
        for (y, &py) in world.eta(s).iter().enumerate() {
            for (m, &pm) in m_dist.iter().enumerate() {
                if pm == 0.0 {
                    continue;
                }
                point +=
                    py * pm * generalized_loss(rejector[s], Label(m), server[s], Label(y), costs);
            }
        }
        total += world.prior()[s] * point;
    }
    Ok(total)
}

/// Pointwise minimizer of `E[L2 | x]` with the server at its cross-entropy optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurrogateMinimizer {
    /// Positive threshold: the optimum has `e^{r1*} / e^{r2*} = ratio`.
    Ratio(f64),
    /// Non-positive threshold: `E[L2 | x]` keeps decreasing as `r1 - r2` grows,
    /// so the minimizer diverges to always-local.
    LimitLocal,
}

impl SurrogateMinimizer {
    pub fn route(self) -> Route {
        match self {
            SurrogateMinimizer::Ratio(r) if r > 1.0 => Route::Local,
            SurrogateMinimizer::Ratio(_) => Route::Remote,
            SurrogateMinimizer::LimitLocal => Route::Local,
        }
    }
}

/// Conditional weights of `E[L2 | x]` at the server optimum: `a` is the
/// threshold, `b = P(M = Y | x)`.
pub fn conditional_l2_weights(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    costs: CostParams,
    point: usize,
) -> L2Weights {
    L2Weights {
        a: bayes_threshold(world, costs, point),
        b: client.accuracy_at(world, point),
    }
}

pub fn surrogate_pointwise_minimizer(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    costs: CostParams,
    point: usize,
) -> Result<(SurrogateMinimizer, Route)> {
    client.validate(world)?;
    if point >= world.len() {
        return Err(Error::InvalidInput("support point index out of range"));
    }
    let w = conditional_l2_weights(world, client, costs, point);
    let m = if w.a <= 0.0 {
        SurrogateMinimizer::LimitLocal
    } else {
        SurrogateMinimizer::Ratio(w.b / w.a)
    };
    Ok((m, m.route()))
}

/// Result of plain gradient descent on `E[L2 | x]` from `r1 = r2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericMinimum {
    pub r1: f64,
    pub r2: f64,
    pub route: Route,
    /// The gradient never vanished and `r1 - r2` grew at every step.
    pub diverging: bool,
}

pub fn numeric_l2_minimum(w: L2Weights, steps: usize, step_size: f64) -> NumericMinimum {
    let (mut r1, mut r2) = (0.0f64, 0.0f64);
    let mut monotone = true;
    let mut last_grad = 0.0;
    for _ in 0..steps {
        let (g1, g2) = l2_grad(r1, r2, w);
        let before = r1 - r2;
        r1 -= step_size * g1;
        r2 -= step_size * g2;
        monotone &= r1 - r2 > before;
        last_grad = g1;
    }
    NumericMinimum {
        r1,
        r2,
        route: crate::domain::route_from_scores(r1, r2),
        diverging: monotone && last_grad.abs() > 1e-12,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCheck {
    pub point: usize,
    pub bayes_route: Route,
    pub closed_form_route: Route,
    pub numeric_route: Route,
    /// `P(M = Y | x) - threshold`.
    pub margin: f64,
    pub on_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsistencyReport {
    pub points: Vec<PointCheck>,
    pub checked: usize,
    pub boundary: usize,
    pub closed_form_mismatches: usize,
    pub numeric_mismatches: usize,
    /// Deterministic clients only: closed-form rejector disagreed with enumeration.
    pub enumeration_mismatches: usize,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.closed_form_mismatches == 0
            && self.numeric_mismatches == 0
            && self.enumeration_mismatches == 0
    }

    pub fn merge(&mut self, other: ConsistencyReport) {
        self.checked += other.checked;
        self.boundary += other.boundary;
        self.closed_form_mismatches += other.closed_form_mismatches;
        self.numeric_mismatches += other.numeric_mismatches;
        self.enumeration_mismatches += other.enumeration_mismatches;
        self.points.extend(other.points);
    }
}

/// Checks, point by point, that the surrogate minimizer routes like the Bayes rejector.
///
/// The Bayes route comes from the closed form for deterministic clients and
/// from posterior enumeration for stochastic ones (the closed form in that
/// case would silently assume a deterministic `j*`).
pub fn consistency_check(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    costs: CostParams,
) -> Result<ConsistencyReport> {
    client.validate(world)?;
    let closed = match client {
        ClientBehavior::Deterministic(_) => Some(bayes_rejector(world, client, costs)?),
        ClientBehavior::Stochastic(_) => None,
    };
    let mut report = ConsistencyReport::default();
    for s in 0..world.len() {
        let enumerated = posterior_enumeration(world, client, costs, s)?;
        let bayes_route = closed.as_ref().map_or(enumerated.route, |c| c[s]);
        if let Some(c) = &closed {
            if c[s] != enumerated.route {
                report.enumeration_mismatches += 1;
            }
        }
        let (_, closed_form_route) = surrogate_pointwise_minimizer(world, client, costs, s)?;
        let w = conditional_l2_weights(world, client, costs, s);
        let numeric = numeric_l2_minimum(w, NUMERIC_STEPS, NUMERIC_STEP_SIZE);
        let margin = w.b - w.a;
        let on_boundary = margin.abs() <= BOUNDARY_TOL;
        if on_boundary {
            report.boundary += 1;
        } else {
            report.checked += 1;
            if closed_form_route != bayes_route {
                report.closed_form_mismatches += 1;
            }
            if numeric.route != bayes_route {
                report.numeric_mismatches += 1;
            }
        }
        report.points.push(PointCheck {
            point: s,
            bayes_route,
            closed_form_route,
            numeric_route: numeric.route,
            margin,
            on_boundary,
        });
    }
    Ok(report)
}

/// Closed-form Bayes maps must coincide with the enumeration argmin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EquivalenceReport {
    pub points: usize,
    pub route_mismatches: usize,
    pub server_mismatches: usize,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.route_mismatches == 0 && self.server_mismatches == 0
    }

    pub fn merge(&mut self, other: EquivalenceReport) {
        self.points += other.points;
        self.route_mismatches += other.route_mismatches;
        self.server_mismatches += other.server_mismatches;
    }
}

/// With `c_1 > 0` the server labels must be identical. With `c_1 = 0` every server
/// label has the same remote risk, so the check is that `argmax eta` attains
/// the enumerated minimum.
pub fn bayes_equivalence(
    world: &DiscreteWorld,
    client: &ClientBehavior,
    costs: CostParams,
) -> Result<EquivalenceReport> {
    let server = bayes_server(world);
    let rejector = bayes_rejector(world, client, costs)?;
    let mut report = EquivalenceReport {
        points: world.len(),
        ..Default::default()
    };
    for s in 0..world.len() {
        let v = posterior_enumeration(world, client, costs, s)?;
        if v.route != rejector[s] {
            report.route_mismatches += 1;
        }
        let server_ok = if costs.c_1 > 0.0 {
            v.server_label == server[s]
        } else {
            v.remote_risks[server[s].0] == v.remote_risks[v.server_label.0]
        };
        if !server_ok {
            report.server_mismatches += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::RngSeed;

    fn one_point(eta: Vec<f64>) -> DiscreteWorld {
        DiscreteWorld::new(vec![FeatureVector(vec![0.0])], vec![1.0], vec![eta]).unwrap()
    }

    fn costs(c_e: f64, c_1: f64) -> CostParams {
        CostParams::new(c_e, c_1).unwrap()
    }

    #[test]
    fn world_validation() {
        let x = |v: f64| FeatureVector(vec![v]);
        assert!(DiscreteWorld::new(vec![x(0.0)], vec![0.9], vec![vec![1.0]]).is_err());
        assert!(DiscreteWorld::new(vec![x(0.0)], vec![1.0], vec![vec![0.5, 0.4]]).is_err());
        assert!(DiscreteWorld::new(
            vec![x(0.0), x(0.0)],
            vec![0.5, 0.5],
            vec![vec![1.0], vec![1.0]]
        )
        .is_err());
        assert!(DiscreteWorld::new(vec![x(0.0)], vec![1.0], vec![vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn bayes_server_examples() {
        let w = one_point(vec![0.7, 0.2, 0.1]);
        assert_eq!(bayes_server(&w), vec![Label(0)]);
        let w = one_point(vec![0.25; 4]);
        assert_eq!(bayes_server(&w), vec![Label(0)]);
    }

    #[test]
    fn bayes_rejector_worked_example() {
        let w = one_point(vec![0.7, 0.2, 0.1]);
        let client = ClientBehavior::Deterministic(vec![Label(0)]);
        let c = costs(0.25, 1.25);
        assert!((bayes_threshold(&w, c, 0) - 0.375).abs() < 1e-15);
        assert_eq!(bayes_rejector(&w, &client, c).unwrap(), vec![Route::Local]);
        let v = posterior_enumeration(&w, &client, c, 0).unwrap();
        assert!((v.local_risk - 0.3).abs() < 1e-15);
        let expect = [0.625, 1.25, 1.375];
        for (r, e) in v.remote_risks.iter().zip(expect) {
            assert!((r - e).abs() < 1e-15);
        }
        assert_eq!(v.route, Route::Local);
        assert!((v.bayes_risk - 0.3).abs() < 1e-15);
    }

    #[test]
    fn free_server_takes_everything() {
        let w = one_point(vec![0.9, 0.1]);
        let client = ClientBehavior::Deterministic(vec![Label(0)]);
        assert_eq!(
            bayes_rejector(&w, &client, costs(0.0, 0.0)).unwrap(),
            vec![Route::Remote]
        );
    }

    #[test]
    fn expensive_server_keeps_everything_local() {
        let mut rng = RngSeed(11).rng();
        let w = DiscreteWorld::random(&mut rng, 20, 4, 2).unwrap();
        let client = ClientBehavior::Deterministic(bayes_server(&w));
        let r = bayes_rejector(&w, &client, costs(1.0, 1.0)).unwrap();
        assert!(r.iter().all(|&x| x == Route::Local));
    }

    #[test]
    fn stochastic_client_needs_enumeration() {
        let w = one_point(vec![0.6, 0.4]);
        let client = ClientBehavior::Stochastic(vec![vec![0.5, 0.5]]);
        assert_eq!(
            bayes_rejector(&w, &client, costs(0.1, 1.0)),
            Err(Error::StochasticClient)
        );
        let v = posterior_enumeration(&w, &client, costs(0.1, 1.0), 0).unwrap();
        // P(M != Y) = 1 - (0.5*0.6 + 0.5*0.4) = 0.5; best remote = 0.1 + 0.4 = 0.5 -> tie -> remote
        assert!((v.local_risk - 0.5).abs() < 1e-15);
        assert_eq!(v.route, Route::Remote);
    }

    #[test]
    fn perfect_client_on_onehot_is_local() {
        let w = one_point(vec![0.0, 1.0, 0.0]);
        let client = ClientBehavior::Deterministic(vec![Label(1)]);
        let v = posterior_enumeration(&w, &client, costs(0.01, 0.0), 0).unwrap();
        assert_eq!(v.local_risk, 0.0);
        assert_eq!(v.route, Route::Local);
        let rep = consistency_check(&w, &client, costs(0.01, 3.0)).unwrap();
        assert!(rep.passed());
        assert!(rep
            .points
            .iter()
            .all(|p| p.closed_form_route == Route::Local));
    }

    #[test]
    fn exact_risk_simple_cases() {
        let mut rng = RngSeed(3).rng();
        let w = DiscreteWorld::random(&mut rng, 6, 3, 1).unwrap();
        let c = costs(0.2, 1.1);
        // perfect client on a onehot world
        let eta: Vec<Vec<f64>> = (0..6)
            .map(|s| {
                let mut r = vec![0.0; 3];
                r[s % 3] = 1.0;
                r
            })
            .collect();
        let pw = DiscreteWorld::new(w.support().to_vec(), w.prior().to_vec(), eta).unwrap();
        let client = ClientBehavior::Deterministic((0..6).map(|s| Label(s % 3)).collect());
        let risk = exact_risk(&pw, &client, &[Route::Local; 6], &[Label(0); 6], c).unwrap();
        assert_eq!(risk, 0.0);
        // always remote with the Bayes server
        let client = ClientBehavior::Deterministic(vec![Label(0); 6]);
        let risk = exact_risk(&w, &client, &[Route::Remote; 6], &bayes_server(&w), c).unwrap();
        let direct: f64 = (0..6)
            .map(|s| {
                w.prior()[s] * (0.2 + 1.1 * (1.0 - w.eta(s).iter().cloned().fold(0.0, f64::max)))
            })
            .sum();
        assert!((risk - direct).abs() < 1e-14);
    }

    #[test]
    fn pointwise_minimizer_examples() {
        let w = one_point(vec![0.7, 0.2, 0.1]);
        let client = ClientBehavior::Deterministic(vec![Label(0)]);
        let (m, r) = surrogate_pointwise_minimizer(&w, &client, costs(0.25, 1.25), 0).unwrap();
        match m {
            SurrogateMinimizer::Ratio(v) => assert!((v - 0.7 / 0.375).abs() < 1e-12),
            _ => panic!("expected ratio"),
        }
        assert_eq!(r, Route::Local);
        // threshold equal to eta_j*: 1 - c_e - c_1 + c_1*0.7 = 0.7 with c_1 = 0, c_e = 0.3
        let (m, r) = surrogate_pointwise_minimizer(&w, &client, costs(0.3, 0.0), 0).unwrap();
        assert_eq!(m, SurrogateMinimizer::Ratio(0.7 / (1.0 - 0.3)));
        assert!(matches!(m, SurrogateMinimizer::Ratio(v) if (v - 1.0).abs() < 1e-15));
        assert_eq!(r, Route::Remote);
        // non-positive threshold
        let (m, r) = surrogate_pointwise_minimizer(&w, &client, costs(1.0, 2.0), 0).unwrap();
        assert_eq!(m, SurrogateMinimizer::LimitLocal);
        assert_eq!(r, Route::Local);
    }

    #[test]
    fn numeric_minimizer_diverges_in_non_positive_case() {
        let n = numeric_l2_minimum(
            L2Weights { a: -0.2, b: 0.6 },
            NUMERIC_STEPS,
            NUMERIC_STEP_SIZE,
        );
        assert!(n.diverging);
        assert_eq!(n.route, Route::Local);
        let n = numeric_l2_minimum(
            L2Weights { a: 0.5, b: 0.25 },
            NUMERIC_STEPS,
            NUMERIC_STEP_SIZE,
        );
        assert!(!n.diverging);
        assert!((libm::exp(n.r1 - n.r2) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn consistency_trivial_worlds() {
        let mut rng = RngSeed(5).rng();
        let w = DiscreteWorld::random(&mut rng, 12, 3, 2).unwrap();
        let client = ClientBehavior::Deterministic(vec![Label(1); 12]);
        let rep = consistency_check(&w, &client, costs(0.0, 0.0)).unwrap();
        assert!(rep.passed());
        assert!(rep
            .points
            .iter()
            .all(|p| p.bayes_route == Route::Remote && p.numeric_route == Route::Remote));
    }

    #[test]
    fn stochastic_client_consistency() {
        let mut rng = RngSeed(8).rng();
        let w = DiscreteWorld::random(&mut rng, 15, 4, 2).unwrap();
        let other = DiscreteWorld::random(&mut rng, 15, 4, 2).unwrap();
        let client = ClientBehavior::Stochastic((0..15).map(|s| other.eta(s).to_vec()).collect());
        for c in [costs(0.1, 0.5), costs(0.25, 1.25), costs(0.5, 2.0)] {
            assert!(consistency_check(&w, &client, c).unwrap().passed());
        }
    }

    #[test]
    fn world_sampling_follows_prior() {
        let w = DiscreteWorld::new(
            vec![FeatureVector(vec![0.0]), FeatureVector(vec![1.0])],
            vec![0.25, 0.75],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let draws = w.sample(&mut RngSeed(1).rng(), 20_000);
        let frac = draws.iter().filter(|(s, _)| *s == 1).count() as f64 / 20_000.0;
        assert!((frac - 0.75).abs() < 0.02);
        assert!(draws.iter().all(|(s, y)| y.0 == *s));
    }
}
