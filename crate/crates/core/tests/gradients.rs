//! Analytic gradients against central finite differences.
//!
//! The finite-difference oracle below only evaluates scalar losses through
//! `forward`, never through the backprop path it checks.

use l2h_core::losses::{
    backprop_l1, backprop_l2, chord_gap, l1_grad_scores, l1_loss, l2_grad, l2_loss, L2Weights,
};
use l2h_core::models::{Architecture, ScoreModel};
use l2h_core::seed::Rng;
use l2h_core::{Label, RngSeed};
use rand::Rng as _;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut p = at.to_vec();
            p[i] += H;
            let up = f(&p);
            p[i] -= 2.0 * H;
            let down = f(&p);
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn with_params(model: &ScoreModel, params: &[f64]) -> ScoreModel {
    ScoreModel::from_parts(
        model.architecture(),
        model.input_dim(),
        model.output_dim(),
        params.to_vec(),
    )
    .unwrap()
}

fn random_weights(rng: &mut Rng) -> L2Weights {
    L2Weights {
        a: rng.random_range(-2.0..1.0),
        b: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
    }
}

#[test]
fn l1_score_gradient_matches_finite_differences() {
    let mut rng = RngSeed(1).rng();
    for _ in 0..100 {
        let k = rng.random_range(2..7);
        let scores: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y = Label(rng.random_range(0..k));
        let fd = central_diff(|s| l1_loss(s, y), &scores);
        let an = l1_grad_scores(&scores, y);
        for (a, b) in an.iter().zip(&fd) {
            assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn l2_gradient_matches_finite_differences() {
    let mut rng = RngSeed(2).rng();
    for _ in 0..100 {
        let w = random_weights(&mut rng);
        let r = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let fd = central_diff(|p| l2_loss(p[0], p[1], w), &r);
        let (g1, g2) = l2_grad(r[0], r[1], w);
        assert!(rel_err(g1, fd[0]) < 1e-6 || (g1 - fd[0]).abs() < 1e-10);
        assert!(rel_err(g2, fd[1]) < 1e-6 || (g2 - fd[1]).abs() < 1e-10);
    }
}

type LossAt = Box<dyn Fn(&ScoreModel) -> f64>;

fn check_backprop(arch: Architecture, out: usize, seed: u64, loss_kind: u8) {
    let mut rng = RngSeed(seed).rng();
    for case in 0..100 {
        let dim = rng.random_range(1..5);
        let model = ScoreModel::init(arch, dim, out, RngSeed(seed * 1000 + case)).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (analytic, loss_at): (Vec<f64>, LossAt) = if loss_kind == 1 {
            let y = Label(rng.random_range(0..out));
            let xx = x.clone();
            (
                backprop_l1(&model, &x, y).unwrap().param_grad,
                Box::new(move |m| l1_loss(&m.forward(&xx).unwrap(), y)),
            )
        } else {
            let w = random_weights(&mut rng);
            let xx = x.clone();
            (
                backprop_l2(&model, &x, w).unwrap().param_grad,
                Box::new(move |m| {
                    let s = m.forward(&xx).unwrap();
                    l2_loss(s[0], s[1], w)
                }),
            )
        };
        let fd = central_diff(|p| loss_at(&with_params(&model, p)), model.params());
        for (i, (a, b)) in analytic.iter().zip(&fd).enumerate() {
            // a parameter whose rectifier sits within H of its kink is not differentiable there
            let ok = rel_err(*a, *b) < 1e-4 || (a - b).abs() < 1e-8;
            assert!(ok, "case {case} param {i}: analytic {a} fd {b}");
        }
    }
}

#[test]
fn backprop_l1_linear() {
    check_backprop(Architecture::Linear, 4, 3, 1);
}

#[test]
fn backprop_l1_mlp() {
    check_backprop(Architecture::Mlp1 { hidden: 6 }, 3, 4, 1);
}

#[test]
fn backprop_l2_linear() {
    check_backprop(Architecture::Linear, 2, 5, 2);
}

#[test]
fn backprop_l2_mlp() {
    check_backprop(Architecture::Mlp1 { hidden: 6 }, 2, 6, 2);
}

#[test]
fn l2_is_convex_for_positive_a() {
    let mut rng = RngSeed(7).rng();
    for _ in 0..1000 {
        let w = L2Weights {
            a: rng.random_range(1e-3..2.0),
            b: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        };
        let u = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let v = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        assert!(chord_gap(w, u, v) >= -1e-12);
    }
}

#[test]
fn l2_is_monotone_for_non_positive_a() {
    let mut rng = RngSeed(8).rng();
    for _ in 0..1000 {
        let w = L2Weights {
            a: rng.random_range(-2.0..=0.0),
            b: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        };
        let (r1, r2) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let d = rng.random_range(1e-3..5.0);
        let base = l2_loss(r1, r2, w);
        assert!(l2_loss(r1 + d, r2, w) <= base + 1e-12);
        assert!(l2_loss(r1, r2 + d, w) >= base - 1e-12);
        if w.a < 0.0 || w.b > 0.0 {
            assert!(l2_loss(r1 + d, r2, w) < base);
        }
    }
}

#[test]
fn surrogate_is_sum_of_parts() {
    let mut rng = RngSeed(9).rng();
    for _ in 0..100 {
        let scores: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w = random_weights(&mut rng);
        let (r1, r2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let y = Label(rng.random_range(0..3));
        let total = l2h_core::losses::surrogate_loss(&scores, y, r1, r2, w);
        assert_eq!(total, l1_loss(&scores, y) + l2_loss(r1, r2, w));
    }
}
