//! Contrastive evaluation: split the test set by routing decision and compare
//! client and server accuracy on each branch.

use alloc::vec::Vec;

use crate::deployment::UsageLedger;
use crate::domain::{generalized_loss, CostParams, Dataset, Label, Route};
use crate::error::{Error, Result};
use crate::models::HybridSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchRow {
    pub route: Route,
    pub count: usize,
    /// Share of the test set routed this way, in `[0, 1]`.
    pub ratio: f64,
    /// `None` when the branch is empty.
    pub client_accuracy: Option<f64>,
    pub server_accuracy: Option<f64>,
    /// `server_accuracy - client_accuracy`.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRow {
    pub label: Label,
    pub count: usize,
    pub reject_rate: f64,
    pub client_accuracy: f64,
    pub joint_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub joint_accuracy: f64,
    pub client_only_accuracy: f64,
    pub server_only_accuracy: f64,
    pub reject_ratio: f64,
    pub mean_generalized_loss: f64,
    /// Local row first, remote row second.
    pub branches: [BranchRow; 2],
    pub per_class: Vec<ClassRow>,
    pub ledger: UsageLedger,
}

/// Per-example predictions of both classifiers and the branch that was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub client: Label,
    pub server: Label,
    pub route: Route,
}

impl Decision {
    pub fn joint(&self) -> Label {
        match self.route {
            Route::Local => self.client,
            Route::Remote => self.server,
        }
    }
}

fn frac(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_decisions(
        test: &Dataset,
        decisions: &[Decision],
        costs: CostParams,
    ) -> Result<Self> {
        if decisions.len() != test.len() {
            return Err(Error::DimensionMismatch {
                expected: test.len(),
                got: decisions.len(),
            });
        }
        let n = test.len();
        let k = test.num_classes();
        let mut ledger = UsageLedger::default();
        let (mut joint, mut client, mut server, mut loss) = (0usize, 0usize, 0usize, 0.0);
        // [local, remote] x (count, client correct, server correct)
        let mut branch = [(0usize, 0usize, 0usize); 2];
        // per class: (count, remote, client correct, joint correct)
        let mut classes = alloc::vec![(0usize, 0usize, 0usize, 0usize); k];
        for (ex, d) in test.examples().iter().zip(decisions) {
            let y = ex.y;
            let c_ok = d.client == y;
            let s_ok = d.server == y;
            let j_ok = d.joint() == y;
            joint += j_ok as usize;
            client += c_ok as usize;
            server += s_ok as usize;
            loss += generalized_loss(d.route, d.client, d.server, y, costs);
            ledger.record(d.route, Some(s_ok), costs);
            let b = &mut branch[d.route.is_remote() as usize];
            b.0 += 1;
            b.1 += c_ok as usize;
            b.2 += s_ok as usize;
            let c = &mut classes[y.0];
            c.0 += 1;
            c.1 += d.route.is_remote() as usize;
            c.2 += c_ok as usize;
            c.3 += j_ok as usize;
        }
        let row = |route: Route, (count, c_ok, s_ok): (usize, usize, usize)| {
            let (ca, sa) = if count == 0 {
                (None, None)
            } else {
                (Some(frac(c_ok, count)), Some(frac(s_ok, count)))
            };
            BranchRow {
                route,
                count,
                ratio: frac(count, n),
                client_accuracy: ca,
                server_accuracy: sa,
                difference: ca.zip(sa).map(|(c, s)| s - c),
            }
        };
        Ok(MetricsReport {
            n,
            joint_accuracy: frac(joint, n),
            client_only_accuracy: frac(client, n),
            server_only_accuracy: frac(server, n),
            reject_ratio: frac(branch[1].0, n),
            mean_generalized_loss: loss / n as f64,
            branches: [row(Route::Local, branch[0]), row(Route::Remote, branch[1])],
            per_class: classes
                .into_iter()
                .enumerate()
                .map(|(i, (count, remote, c_ok, j_ok))| ClassRow {
                    label: Label(i),
                    count,
                    reject_rate: frac(remote, count),
                    client_accuracy: frac(c_ok, count),
                    joint_accuracy: frac(j_ok, count),
                })
                .collect(),
            ledger,
        })
    }
}

/// Both classifiers' predictions on every test point, with the rejector's route.
pub fn decisions(system: &HybridSystem, test: &Dataset) -> Result<Vec<Decision>> {
    test.examples()
        .iter()
        .map(|ex| {
            let x = ex.x.as_slice();
            Ok(Decision {
                client: system.client().predict(x)?,
                server: system.server.predict(x)?,
                route: system.rejector.route(x)?,
            })
        })
        .collect()
}

pub fn evaluate(system: &HybridSystem, test: &Dataset, costs: CostParams) -> Result<MetricsReport> {
    MetricsReport::from_decisions(test, &decisions(system, test)?, costs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeatureVector, LabeledExample};
    use crate::models::{Architecture, ScoreModel};
    use alloc::vec;

    fn test_set() -> Dataset {
        let pts = [(-1.0, 0), (-0.5, 0), (0.5, 1), (1.0, 1), (2.0, 1)];
        Dataset::new(
            pts.iter()
                .map(|&(x, y)| LabeledExample {
                    x: FeatureVector(vec![x]),
                    y: Label(y),
                })
                .collect(),
            2,
            1,
        )
        .unwrap()
    }

    fn sys(rejector_bias: [f64; 2]) -> HybridSystem {
        // client always says class 0; server thresholds at 0 (perfect here)
        let client =
            ScoreModel::from_parts(Architecture::Linear, 1, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let server =
            ScoreModel::from_parts(Architecture::Linear, 1, 2, vec![-1.0, 1.0, 0.0, 0.0]).unwrap();
        let rej = ScoreModel::from_parts(
            Architecture::Linear,
            1,
            2,
            vec![0.0, 0.0, rejector_bias[0], rejector_bias[1]],
        )
        .unwrap();
        HybridSystem::new(client, rej, server).unwrap()
    }

    #[test]
    fn always_local_has_empty_remote_row() {
        let r = evaluate(
            &sys([1.0, 0.0]),
            &test_set(),
            CostParams::new(0.2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(r.reject_ratio, 0.0);
        assert_eq!(r.branches[1].count, 0);
        assert_eq!(r.branches[1].client_accuracy, None);
        assert_eq!(r.branches[1].difference, None);
        assert!((r.joint_accuracy - 0.4).abs() < 1e-15);
        assert!((r.mean_generalized_loss - 0.6).abs() < 1e-15);
    }

    #[test]
    fn perfect_server_always_remote() {
        let r = evaluate(
            &sys([0.0, 1.0]),
            &test_set(),
            CostParams::new(0.2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(r.joint_accuracy, 1.0);
        assert_eq!(r.reject_ratio, 1.0);
        assert_eq!(r.ledger.remote_queries, 5);
        assert!((r.ledger.accumulated_cost - 1.0).abs() < 1e-12);
        assert!((r.branches[1].difference.unwrap() - 0.6).abs() < 1e-15);
        assert!((r.branches[0].ratio + r.branches[1].ratio - 1.0).abs() < 1e-12);
        assert_eq!(r.per_class[1].reject_rate, 1.0);
    }
}
