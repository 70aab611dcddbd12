//! The stage-switching surrogate `L_S = L1 + L2`.
//!
//! `L1` is softmax cross-entropy on the server scores. `L2` is a weighted
//! two-way log-softmax on the rejector scores `(r1, r2)`:
//!
//! ```text
//! L2 = -a * ln(e^r2 / (e^r1 + e^r2)) - b * ln(e^r1 / (e^r1 + e^r2))
//! a  = 1 - c_e - c_1 + c_1 * 1[e(x) = y]
//! b  = 1[m(x) = y]
//! ```
//!
//! Every log-softmax is evaluated with max-subtraction, so large scores never
//! overflow.

use alloc::vec::Vec;

use crate::domain::{CostParams, Label};
use crate::error::{Error, Result};
use crate::models::ScoreModel;

/// Coefficients of the two log-softmax terms of `L2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Weights {
    /// Weight on the remote term.
    pub a: f64,
    /// Weight on the local term.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub loss: f64,
    pub score_grad: Vec<f64>,
    pub param_grad: Vec<f64>,
}

/// `ln(e^z / (1 + e^z))`, stable for any finite `z`.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -libm::log1p(libm::exp(-z))
    } else {
        z - libm::log1p(libm::exp(z))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(scores.iter().map(|s| libm::exp(s - max)).sum::<f64>())
}

/// Cross-entropy `-ln softmax_y(scores)`.
pub fn l1_loss(e_scores: &[f64], y: Label) -> f64 {
    (log_sum_exp(e_scores) - e_scores[y.0]).max(0.0)
}

/// `softmax(scores) - onehot(y)`.
pub fn l1_grad_scores(e_scores: &[f64], y: Label) -> Vec<f64> {
    let mut g = softmax(e_scores);
    g[y.0] -= 1.0;
    g
}

pub fn l2_weights(e_pred: Label, m_pred: Label, y: Label, costs: CostParams) -> L2Weights {
    let server_right = if e_pred == y { 1.0 } else { 0.0 };
    L2Weights {
        a: 1.0 - costs.c_e - costs.c_1 + costs.c_1 * server_right,
        b: if m_pred == y { 1.0 } else { 0.0 },
    }
}

pub fn l2_loss(r1: f64, r2: f64, w: L2Weights) -> f64 {
    // ln(e^r2/(e^r1+e^r2)) = log_sigmoid(r2 - r1)
    let d = r1 - r2;
    -w.a * log_sigmoid(-d) - w.b * log_sigmoid(d)
}

/// `(dL2/dr1, dL2/dr2)`; the pair always sums to zero.
pub fn l2_grad(r1: f64, r2: f64, w: L2Weights) -> (f64, f64) {
    let d = r1 - r2;
    let d_r1 = w.a * sigmoid(d) - w.b * sigmoid(-d);
    (d_r1, -d_r1)
}

/// `L_S` for one example given the raw scores of both heads.
pub fn surrogate_loss(e_scores: &[f64], y: Label, r1: f64, r2: f64, w: L2Weights) -> f64 {
    l1_loss(e_scores, y) + l2_loss(r1, r2, w)
}

/// `(f(u) + f(v)) / 2 - f((u + v) / 2)` for the `L2` surface at fixed weights.
pub fn chord_gap(w: L2Weights, u: (f64, f64), v: (f64, f64)) -> f64 {
    let mid = ((u.0 + v.0) / 2.0, (u.1 + v.1) / 2.0);
    (l2_loss(u.0, u.1, w) + l2_loss(v.0, v.1, w)) / 2.0 - l2_loss(mid.0, mid.1, w)
}

pub fn backprop_l1(server: &ScoreModel, x: &[f64], y: Label) -> Result<GradReport> {
    if y.0 >= server.output_dim() {
        return Err(Error::LabelOutOfRange {
            label: y.0,
            num_classes: server.output_dim(),
        });
    }
    let scores = server.forward(x)?;
    let score_grad = l1_grad_scores(&scores, y);
    let param_grad = server.backprop(x, &score_grad)?;
    Ok(GradReport {
        loss: l1_loss(&scores, y),
        score_grad,
        param_grad,
    })
}

pub fn backprop_l2(rejector: &ScoreModel, x: &[f64], w: L2Weights) -> Result<GradReport> {
    if rejector.output_dim() != 2 {
        return Err(Error::RejectorOutputs(rejector.output_dim()));
    }
    let scores = rejector.forward(x)?;
    let (g1, g2) = l2_grad(scores[0], scores[1], w);
    let score_grad = alloc::vec![g1, g2];
    let param_grad = rejector.backprop(x, &score_grad)?;
    Ok(GradReport {
        loss: l2_loss(scores[0], scores[1], w),
        score_grad,
        param_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Architecture;
    use alloc::vec;
    use proptest::prelude::*;

    const LN2: f64 = core::f64::consts::LN_2;

    fn w(a: f64, b: f64) -> L2Weights {
        L2Weights { a, b }
    }

    #[test]
    fn l1_examples() {
        assert!((l1_loss(&[0.0, 0.0, 0.0], Label(1)) - 1.0986122886681098).abs() < 1e-12);
        // -ln(e^10 / (e^10 + 2)) = ln(1 + 2e^-10)
        let expect = libm::log1p(2.0 * libm::exp(-10.0));
        assert!((l1_loss(&[10.0, 0.0, 0.0], Label(0)) - expect).abs() < 1e-15);
        assert!((expect - 9.0797e-5).abs() < 1e-8);
        let expect = 10.0 + libm::log1p(libm::exp(-10.0));
        assert!((l1_loss(&[0.0, 10.0], Label(0)) - expect).abs() < 1e-12);
        assert!((expect - 10.0000454).abs() < 1e-7);
    }

    #[test]
    fn l1_is_stable_for_huge_scores() {
        let v = l1_loss(&[1000.0, -1000.0, 0.0], Label(1));
        assert!((v - 2000.0).abs() < 1e-9);
        assert_eq!(l1_loss(&[1000.0, 0.0], Label(0)), 0.0);
    }

    #[test]
    fn l1_grad_examples() {
        assert_eq!(l1_grad_scores(&[0.0, 0.0], Label(0)), vec![-0.5, 0.5]);
        let g = l1_grad_scores(&[1.5, -2.0, 0.3, 4.0], Label(2));
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn l2_weight_examples() {
        let c = CostParams::new(0.25, 1.25).unwrap();
        assert_eq!(l2_weights(Label(1), Label(0), Label(1), c), w(0.75, 0.0));
        assert_eq!(l2_weights(Label(0), Label(1), Label(1), c), w(-0.5, 1.0));
        let free = CostParams::new(0.0, 0.0).unwrap();
        for (e, m) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(l2_weights(Label(e), Label(m), Label(0), free).a, 1.0);
        }
    }

    #[test]
    fn l2_examples() {
        assert!((l2_loss(0.0, 0.0, w(1.0, 1.0)) - 2.0 * LN2).abs() < 1e-15);
        assert!((l2_loss(0.0, 0.0, w(-0.5, 1.0)) - 0.5 * LN2).abs() < 1e-15);
        assert!(l2_loss(0.0, 50.0, w(1.0, 0.0)) < 1e-20);
        assert!(l2_loss(0.0, 800.0, w(1.0, 0.0)).is_finite());
    }

    #[test]
    fn l2_grad_examples() {
        assert_eq!(l2_grad(0.7, 0.7, w(0.3, 0.3)), (0.0, 0.0));
        assert_eq!(l2_grad(0.0, 0.0, w(1.0, 0.0)), (0.5, -0.5));
    }

    #[test]
    fn chord_gap_zero_on_identical_points() {
        assert_eq!(chord_gap(w(0.4, 1.0), (1.0, -2.0), (1.0, -2.0)), 0.0);
    }

    #[test]
    fn zero_linear_bias_gradient_equals_score_gradient() {
        let server = ScoreModel::zeros(Architecture::Linear, 3, 4).unwrap();
        let x = [0.3, -1.0, 2.0];
        let rep = backprop_l1(&server, &x, Label(2)).unwrap();
        assert_eq!(&rep.param_grad[12..], rep.score_grad.as_slice());
        let rej = ScoreModel::zeros(Architecture::Linear, 3, 2).unwrap();
        let rep = backprop_l2(&rej, &x, w(0.75, 1.0)).unwrap();
        assert_eq!(&rep.param_grad[6..], rep.score_grad.as_slice());
    }

    #[test]
    fn dead_relu_has_zero_first_layer_gradient() {
        let arch = Architecture::Mlp1 { hidden: 3 };
        let mut m = ScoreModel::init(arch, 2, 2, crate::RngSeed(3)).unwrap();
        let p = m.params_mut().unwrap();
        // positive x with non-positive weights and negative bias: all pre-activations < 0
        for v in &mut p[..6] {
            *v = -v.abs();
        }
        for v in &mut p[6..9] {
            *v = -1.0;
        }
        let rep = backprop_l2(&m, &[0.5, 2.0], w(1.0, 1.0)).unwrap();
        assert!(rep.param_grad[..9].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backprop_rejects_bad_shapes() {
        let m = ScoreModel::zeros(Architecture::Linear, 2, 3).unwrap();
        assert!(backprop_l1(&m, &[1.0], Label(0)).is_err());
        assert!(backprop_l1(&m, &[1.0, 2.0], Label(3)).is_err());
        assert_eq!(
            backprop_l2(&m, &[1.0, 2.0], w(1.0, 1.0)).err(),
            Some(Error::RejectorOutputs(3))
        );
    }

    proptest! {
        #[test]
        fn l2_translation_invariant(r1 in -30.0f64..30.0, r2 in -30.0f64..30.0, c in -30.0f64..30.0,
                                    a in -2.0f64..1.0, b in 0.0f64..=1.0) {
            let ww = w(a, b);
            let base = l2_loss(r1, r2, ww);
            prop_assert!((l2_loss(r1 + c, r2 + c, ww) - base).abs() <= 1e-9 * (1.0 + base.abs()));
            let (g1, g2) = l2_grad(r1, r2, ww);
            prop_assert_eq!(g1 + g2, 0.0);
        }

        #[test]
        fn l1_non_negative(scores in proptest::collection::vec(-50.0f64..50.0, 1..6), y in 0usize..6) {
            prop_assume!(y < scores.len());
            prop_assert!(l1_loss(&scores, Label(y)) >= 0.0);
        }
    }
}
