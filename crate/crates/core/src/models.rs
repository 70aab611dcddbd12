//! Score functions for the client `m`, server `e` and rejector `r`.
//!
//! Parameters are stored flat so that optimizers, checkpoints and finite
//! difference checks all see the same vector. Layout:
//!
//! - `Linear`: `W (out x in, row-major)`, `b (out)`
//! - `Mlp1 { hidden }`: `W1 (h x in)`, `b1 (h)`, `W2 (out x h)`, `b2 (out)`

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;

use crate::domain::{argmax_label, route_from_scores, CostParams, Label, RngSeed, Route};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear,
    /// One hidden rectifier layer.
    Mlp1 {
        hidden: usize,
    },
}

impl Architecture {
    pub fn mlp1() -> Self {
        Architecture::Mlp1 {
            hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn param_count(self, input_dim: usize, output_dim: usize) -> usize {
        match self {
            Architecture::Linear => output_dim * input_dim + output_dim,
            Architecture::Mlp1 { hidden } => {
                hidden * input_dim + hidden + output_dim * hidden + output_dim
            }
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Linear => f.write_str("linear"),
            Architecture::Mlp1 { hidden } => write!(f, "mlp1:{hidden}"),
        }
    }
}

impl core::str::FromStr for Architecture {
    type Err = Error;

    /// Accepts `linear`, `mlp1` (default width) or `mlp1:<hidden>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(Architecture::Linear),
            "mlp1" => Ok(Architecture::mlp1()),
            other => {
                let width = other
                    .strip_prefix("mlp1:")
                    .and_then(|w| w.parse::<usize>().ok())
                    .filter(|&w| w > 0)
                    .ok_or(Error::InvalidInput("unknown architecture"))?;
                Ok(Architecture::Mlp1 { hidden: width })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    arch: Architecture,
    input_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
    frozen: bool,
}

impl ScoreModel {
    pub fn from_parts(
        arch: Architecture,
        input_dim: usize,
        output_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidInput("model dimensions must be positive"));
        }
        if let Architecture::Mlp1 { hidden: 0 } = arch {
            return Err(Error::InvalidInput("hidden width must be positive"));
        }
        let expected = arch.param_count(input_dim, output_dim);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter"));
        }
        Ok(ScoreModel {
            arch,
            input_dim,
            output_dim,
            params,
            frozen: false,
        })
    }

    pub fn zeros(arch: Architecture, input_dim: usize, output_dim: usize) -> Result<Self> {
        let n = arch.param_count(input_dim, output_dim);
        Self::from_parts(arch, input_dim, output_dim, vec![0.0; n])
    }

    /// Uniform fan-in initialization: each layer draws from `[-s, s]`, `s = 1/sqrt(fan_in)`.
    pub fn init(
        arch: Architecture,
        input_dim: usize,
        output_dim: usize,
        seed: RngSeed,
    ) -> Result<Self> {
        let mut model = Self::zeros(arch, input_dim, output_dim)?;
        let mut rng = seed.rng();
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let s = 1.0 / libm::sqrt(fan_in as f64);
            for p in slice {
                *p = rng.random_range(-s..=s);
            }
        };
        match arch {
            Architecture::Linear => fill(&mut model.params, input_dim),
            Architecture::Mlp1 { hidden } => {
                let first = hidden * input_dim + hidden;
                let (l1, l2) = model.params.split_at_mut(first);
                fill(l1, input_dim);
                fill(l2, hidden);
            }
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> Result<&mut [f64]> {
        if self.frozen {
            return Err(Error::FrozenModel);
        }
        Ok(&mut self.params)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self.arch {
            Architecture::Linear => affine(&self.params, self.output_dim, x),
            Architecture::Mlp1 { hidden } => {
                let first = hidden * self.input_dim + hidden;
                let mut h = affine(&self.params[..first], hidden, x);
                relu_in_place(&mut h);
                affine(&self.params[first..], self.output_dim, &h)
            }
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        argmax_label(&self.forward(x)?)
    }

    /// Rejector decision: output 0 is the local score `r_1`, output 1 the remote score `r_2`.
    pub fn route(&self, x: &[f64]) -> Result<Route> {
        if self.output_dim != 2 {
            return Err(Error::RejectorOutputs(self.output_dim));
        }
        let s = self.forward(x)?;
        Ok(route_from_scores(s[0], s[1]))
    }

    /// Gradient of `sum_k dscores[k] * score_k(x)` with respect to the parameters.
    pub fn backprop(&self, x: &[f64], dscores: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if dscores.len() != self.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim,
                got: dscores.len(),
            });
        }
        let mut grad = vec![0.0; self.params.len()];
        match self.arch {
            Architecture::Linear => affine_backward(&mut grad, x, dscores),
            Architecture::Mlp1 { hidden } => {
                let first = hidden * self.input_dim + hidden;
                let pre = affine(&self.params[..first], hidden, x);
                let mut h = pre.clone();
                relu_in_place(&mut h);
                let (g1, g2) = grad.split_at_mut(first);
                affine_backward(g2, &h, dscores);
                // dL/dh = W2^T dscores, gated by the rectifier (subgradient 0 at the kink)
                let w2 = &self.params[first..first + self.output_dim * hidden];
                let mut dh = vec![0.0; hidden];
                for (k, &d) in dscores.iter().enumerate() {
                    let row = &w2[k * hidden..(k + 1) * hidden];
                    for (j, w) in row.iter().enumerate() {
                        dh[j] += w * d;
                    }
                }
                for (dhj, &p) in dh.iter_mut().zip(&pre) {
                    if p <= 0.0 {
                        *dhj = 0.0;
                    }
                }
                affine_backward(g1, x, &dh);
            }
        }
        Ok(grad)
    }
}

/// `W x + b` where `params = [W (out x in) | b (out)]`.
fn affine(params: &[f64], out: usize, x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    let (w, b) = params.split_at(out * n_in);
    (0..out)
        .map(|k| {
            let row = &w[k * n_in..(k + 1) * n_in];
            row.iter().zip(x).fold(b[k], |acc, (wi, xi)| acc + wi * xi)
        })
        .collect()
}

fn affine_backward(grad: &mut [f64], x: &[f64], dout: &[f64]) {
    let n_in = x.len();
    let (gw, gb) = grad.split_at_mut(dout.len() * n_in);
    for (k, &d) in dout.iter().enumerate() {
        for (g, xi) in gw[k * n_in..(k + 1) * n_in].iter_mut().zip(x) {
            *g += d * xi;
        }
        gb[k] += d;
    }
}

fn relu_in_place(v: &mut [f64]) {
    for h in v {
        if *h < 0.0 {
            *h = 0.0;
        }
    }
}

/// The `(m, r, e)` triple. The client is frozen on construction and never mutated.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSystem {
    client: ScoreModel,
    pub rejector: ScoreModel,
    pub server: ScoreModel,
}

impl HybridSystem {
    pub fn new(client: ScoreModel, rejector: ScoreModel, server: ScoreModel) -> Result<Self> {
        if rejector.output_dim() != 2 {
            return Err(Error::RejectorOutputs(rejector.output_dim()));
        }
        if client.output_dim() != server.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: client.output_dim(),
                got: server.output_dim(),
            });
        }
        for m in [&rejector, &server] {
            if m.input_dim() != client.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: client.input_dim(),
                    got: m.input_dim(),
                });
            }
        }
        Ok(HybridSystem {
            client: client.frozen(),
            rejector,
            server,
        })
    }

    pub fn client(&self) -> &ScoreModel {
        &self.client
    }

    pub fn num_classes(&self) -> usize {
        self.client.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.client.input_dim()
    }

    /// Plain routing: the rejector picks the branch, that branch's classifier answers.
    pub fn infer(&self, x: &[f64]) -> Result<(Label, Route)> {
        let route = self.rejector.route(x)?;
        let label = match route {
            Route::Local => self.client.predict(x)?,
            Route::Remote => self.server.predict(x)?,
        };
        Ok((label, route))
    }
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Everything needed to rebuild a model plus the provenance it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: Architecture,
    pub input_dim: usize,
    pub output_dim: usize,
    pub num_classes: usize,
    pub frozen: bool,
    pub seed: Option<RngSeed>,
    pub costs: Option<CostParams>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(
        model: &ScoreModel,
        num_classes: usize,
        seed: Option<RngSeed>,
        costs: Option<CostParams>,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: model.architecture(),
            input_dim: model.input_dim(),
            output_dim: model.output_dim(),
            num_classes,
            frozen: model.is_frozen(),
            seed,
            costs,
            params: model.params().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<ScoreModel> {
        let mut model = ScoreModel::from_parts(
            self.architecture,
            self.input_dim,
            self.output_dim,
            self.params,
        )?;
        if self.frozen {
            model.freeze();
        }
        Ok(model)
    }
}
