//! Labels, routes, costs and the exact (non-differentiable) losses.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Class index, 0-based internally. User-facing I/O is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub usize);

impl Label {
    pub fn index(self) -> usize {
        self.0
    }

    /// Parses a 1-based label as it appears in files and on the command line.
    pub fn from_one_based(value: usize, num_classes: usize) -> Result<Self> {
        if value == 0 || value > num_classes {
            return Err(Error::LabelOutOfRange {
                label: value,
                num_classes,
            });
        }
        Ok(Label(value - 1))
    }

    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature"));
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: FeatureVector,
    pub y: Label,
}

/// A non-empty labelled dataset with fixed feature dimension and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    num_classes: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, num_classes: usize, dim: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if num_classes == 0 {
            return Err(Error::InvalidInput("num_classes must be at least 1"));
        }
        for ex in &examples {
            if ex.x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: ex.x.dim(),
                });
            }
            if ex.y.0 >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: ex.y.0,
                    num_classes,
                });
            }
            if ex.x.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite feature"));
            }
        }
        Ok(Dataset {
            examples,
            num_classes,
            dim,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Keeps the examples selected by `keep`; fails if nothing survives.
    pub fn filter(&self, mut keep: impl FnMut(usize, &LabeledExample) -> bool) -> Result<Self> {
        let examples: Vec<_> = self
            .examples
            .iter()
            .enumerate()
            .filter(|(i, ex)| keep(*i, ex))
            .map(|(_, ex)| ex.clone())
            .collect();
        Dataset::new(examples, self.num_classes, self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Local,
    Remote,
}

impl Route {
    pub fn is_remote(self) -> bool {
        matches!(self, Route::Remote)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Route::Local => "local",
            Route::Remote => "remote",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reject cost `c_e` and server inaccuracy cost `c_1` of the generalized 0-1 loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub c_e: f64,
    pub c_1: f64,
}

impl CostParams {
    pub fn new(c_e: f64, c_1: f64) -> Result<Self> {
        if !(c_e.is_finite() && c_1.is_finite()) {
            return Err(Error::InvalidCosts("costs must be finite"));
        }
        if c_e < 0.0 || c_1 < 0.0 {
            return Err(Error::InvalidCosts("costs must be non-negative"));
        }
        Ok(CostParams { c_e, c_1 })
    }

    /// The four-outcome costs this pair corresponds to: `(0, 1, c_e, c_e + c_1)`.
    pub fn as_general(self) -> GeneralCosts {
        GeneralCosts {
            c_cc: 0.0,
            c_ce: 1.0,
            c_sc: self.c_e,
            c_se: self.c_e + self.c_1,
        }
    }
}

/// Costs for (client correct, client error, server correct, server error).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralCosts {
    pub c_cc: f64,
    pub c_ce: f64,
    pub c_sc: f64,
    pub c_se: f64,
}

impl GeneralCosts {
    pub fn new(c_cc: f64, c_ce: f64, c_sc: f64, c_se: f64) -> Result<Self> {
        if c_cc > c_ce || c_sc > c_se || c_cc > c_sc || c_ce > c_se {
            return Err(Error::InvalidCosts(
                "require c_cc <= c_ce, c_sc <= c_se, c_cc <= c_sc, c_ce <= c_se",
            ));
        }
        Ok(GeneralCosts {
            c_cc,
            c_ce,
            c_sc,
            c_se,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed(pub u64);

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_label(scores: &[f64]) -> Result<Label> {
    let (first, rest) = scores
        .split_first()
        .ok_or(Error::InvalidInput("argmax of empty score vector"))?;
    let mut best = 0;
    let mut best_val = *first;
    for (i, &s) in rest.iter().enumerate() {
        if s > best_val {
            best = i + 1;
            best_val = s;
        }
    }
    Ok(Label(best))
}

/// `LOCAL` iff `r1 > r2`; equality routes remote.
pub fn route_from_scores(r1: f64, r2: f64) -> Route {
    if r1 > r2 {
        Route::Local
    } else {
        Route::Remote
    }
}

pub fn generalized_loss(
    route: Route,
    local_pred: Label,
    remote_pred: Label,
    y: Label,
    costs: CostParams,
) -> f64 {
    match route {
        Route::Local if local_pred == y => 0.0,
        Route::Local => 1.0,
        Route::Remote if remote_pred == y => costs.c_e,
        Route::Remote => costs.c_e + costs.c_1,
    }
}

pub fn general_loss(
    route: Route,
    local_pred: Label,
    remote_pred: Label,
    y: Label,
    costs: GeneralCosts,
) -> f64 {
    match route {
        Route::Local if local_pred == y => costs.c_cc,
        Route::Local => costs.c_ce,
        Route::Remote if remote_pred == y => costs.c_sc,
        Route::Remote => costs.c_se,
    }
}
