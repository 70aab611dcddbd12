//! Central-difference check of the analytic parameter gradients.

use l2h_core::losses::{backprop_l1, backprop_l2, l1_loss, l2_loss, L2Weights};
use l2h_core::seed::Rng;
use l2h_core::{Architecture, Label, RngSeed, ScoreModel};
use rand::Rng as _;

pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    L1Linear,
    L1Mlp,
    L2Linear,
    L2Mlp,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::L1Linear, Case::L1Mlp, Case::L2Linear, Case::L2Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Case::L1Linear => "l1/linear",
            Case::L1Mlp => "l1/mlp1",
            Case::L2Linear => "l2/linear",
            Case::L2Mlp => "l2/mlp1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseResult {
    pub case: Case,
    pub configurations: usize,
    /// Worst relative error over all parameters. Entries count as failures only
    /// when their absolute error also exceeds `abs_floor`.
    pub max_rel_error: f64,
    pub failures: usize,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

pub fn run(
    case: Case,
    configurations: usize,
    seed: RngSeed,
    tol: f64,
    abs_floor: f64,
) -> l2h_core::Result<CaseResult> {
    let mut rng: Rng = seed.rng();
    let (arch, l1) = match case {
        Case::L1Linear => (Architecture::Linear, true),
        Case::L1Mlp => (Architecture::Mlp1 { hidden: 8 }, true),
        Case::L2Linear => (Architecture::Linear, false),
        Case::L2Mlp => (Architecture::Mlp1 { hidden: 8 }, false),
    };
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..configurations {
        let dim = rng.random_range(1..=4);
        let out = if l1 { rng.random_range(2..=5) } else { 2 };
        let model = ScoreModel::init(arch, dim, out, seed.derive(i as u64))?;
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = Label(rng.random_range(0..out));
        let w = L2Weights {
            a: rng.random_range(-1.0..1.0),
            b: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        };
        let loss = |m: &ScoreModel| -> l2h_core::Result<f64> {
            let s = m.forward(&x)?;
            Ok(if l1 {
                l1_loss(&s, y)
            } else {
                l2_loss(s[0], s[1], w)
            })
        };
        let analytic = if l1 {
            backprop_l1(&model, &x, y)?.param_grad
        } else {
            backprop_l2(&model, &x, w)?.param_grad
        };
        let mut p = model.params().to_vec();
        for (j, g) in analytic.iter().enumerate() {
            let orig = p[j];
            p[j] = orig + STEP;
            let up = loss(&ScoreModel::from_parts(arch, dim, out, p.clone())?)?;
            p[j] = orig - STEP;
            let down = loss(&ScoreModel::from_parts(arch, dim, out, p.clone())?)?;
            p[j] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let r = rel(*g, fd);
            worst = worst.max(r);
            if r >= tol && (g - fd).abs() > abs_floor {
                failures += 1;
            }
        }
    }
    Ok(CaseResult {
        case,
        configurations,
        max_rel_error: worst,
        failures,
    })
}
