//! Gaussian-mixture classification data.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::domain::{Dataset, FeatureVector, Label, LabeledExample, RngSeed};
use crate::error::{Error, Result};
use crate::oracle::DiscreteWorld;

/// Equal-prior mixture with one isotropic Gaussian per class.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub variance: f64,
    pub train: usize,
    pub cali: usize,
    pub test: usize,
}

impl GaussianMixtureSpec {
    /// Class means evenly spaced on a circle of `radius` in the first two coordinates.
    pub fn ring(
        num_classes: usize,
        dim: usize,
        radius: f64,
        variance: f64,
        (train, cali, test): (usize, usize, usize),
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive"));
        }
        let means = (0..num_classes)
            .map(|k| {
                let angle = 2.0 * core::f64::consts::PI * k as f64 / num_classes as f64;
                let mut m = vec![0.0; dim];
                m[0] = radius * libm::cos(angle);
                if dim > 1 {
                    m[1] = radius * libm::sin(angle);
                }
                m
            })
            .collect();
        let spec = GaussianMixtureSpec {
            means,
            variance,
            train,
            cali,
            test,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() < 2 {
            return Err(Error::InvalidInput("mixture needs at least 2 classes"));
        }
        let dim = self.dim();
        if dim == 0 || self.means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidInput(
                "class means must share a positive dimension",
            ));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidInput("variance must be positive"));
        }
        if self.train == 0 || self.cali == 0 || self.test == 0 {
            return Err(Error::InvalidInput("every split needs at least one sample"));
        }
        Ok(())
    }

    /// Exact class posterior at `x` (equal priors, shared variance).
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .means
            .iter()
            .map(|m| {
                let d2: f64 = m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                -d2 / (2.0 * self.variance)
            })
            .collect();
        crate::losses::softmax(&logits)
    }

    /// Grid discretization of the mixture over `[-extent, extent]^dim` (dim <= 2),
    /// with prior proportional to the mixture density at each cell centre.
    pub fn discretize(&self, cells_per_axis: usize, extent: f64) -> Result<DiscreteWorld> {
        let dim = self.dim();
        if dim > 2 || cells_per_axis == 0 {
            return Err(Error::InvalidInput("discretization supports dim <= 2"));
        }
        let step = 2.0 * extent / cells_per_axis as f64;
        let centre = |i: usize| -extent + (i as f64 + 0.5) * step;
        let mut support = Vec::new();
        let mut weights = Vec::new();
        let mut eta = Vec::new();
        let total = if dim == 1 {
            cells_per_axis
        } else {
            cells_per_axis * cells_per_axis
        };
        for idx in 0..total {
            let x: Vec<f64> = if dim == 1 {
                vec![centre(idx)]
            } else {
                vec![centre(idx % cells_per_axis), centre(idx / cells_per_axis)]
            };
            let density: f64 = self
                .means
                .iter()
                .map(|m| {
                    let d2: f64 = m.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                    libm::exp(-d2 / (2.0 * self.variance))
                })
                .sum();
            eta.push(self.posterior(&x));
            weights.push(density);
            support.push(FeatureVector(x));
        }
        let sum: f64 = weights.iter().sum();
        let mut prior: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let head: f64 = prior[..prior.len() - 1].iter().sum();
        let last = prior.len() - 1;
        prior[last] = (1.0 - head).max(0.0);
        DiscreteWorld::new(support, prior, eta)
    }
}

/// Draws the train, calibration and test splits. Each split uses its own
/// stream, so the splits are independent and disjoint by construction.
/// Splits are stratified: class counts differ by at most one, in shuffled order.
pub fn gen_data(spec: &GaussianMixtureSpec, seed: RngSeed) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let sd = libm::sqrt(spec.variance);
    let noise =
        Normal::new(0.0, sd).map_err(|_| Error::InvalidInput("variance must be positive"))?;
    let k = spec.num_classes();
    let dim = spec.dim();
    let split = |n: usize, tag: u64| -> Result<Dataset> {
        let mut rng = seed.derive(tag).rng();
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        labels.shuffle(&mut rng);
        let examples = labels
            .into_iter()
            .map(|y| {
                let x = spec.means[y]
                    .iter()
                    .map(|m| m + noise.sample(&mut rng))
                    .collect();
                LabeledExample {
                    x: FeatureVector(x),
                    y: Label(y),
                }
            })
            .collect();
        Dataset::new(examples, k, dim)
    };
    Ok((
        split(spec.train, 1)?,
        split(spec.cali, 2)?,
        split(spec.test, 3)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_samples_is_an_error() {
        assert!(GaussianMixtureSpec::ring(3, 2, 2.0, 1.0, (0, 10, 10)).is_err());
        assert!(GaussianMixtureSpec::ring(1, 2, 2.0, 1.0, (10, 10, 10)).is_err());
        assert!(GaussianMixtureSpec::ring(3, 2, 2.0, 0.0, (10, 10, 10)).is_err());
    }

    #[test]
    fn gen_data_is_deterministic() {
        let spec = GaussianMixtureSpec::ring(3, 2, 2.0, 1.0, (50, 20, 30)).unwrap();
        let a = gen_data(&spec, RngSeed(4)).unwrap();
        let b = gen_data(&spec, RngSeed(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.0.len(), a.1.len(), a.2.len()), (50, 20, 30));
        assert_ne!(a.0.examples()[0], a.2.examples()[0]);
    }

    #[test]
    fn splits_are_stratified() {
        let spec = GaussianMixtureSpec::ring(3, 2, 2.0, 1.0, (100, 31, 30)).unwrap();
        let (train, cali, _) = gen_data(&spec, RngSeed(8)).unwrap();
        for d in [&train, &cali] {
            let counts: Vec<usize> = (0..3)
                .map(|k| d.examples().iter().filter(|e| e.y.0 == k).count())
                .collect();
            assert!(
                counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn sample_means_match_spec() {
        let spec = GaussianMixtureSpec::ring(2, 2, 3.0, 0.5, (4000, 1, 1)).unwrap();
        let (train, _, _) = gen_data(&spec, RngSeed(1)).unwrap();
        for k in 0..2 {
            let pts: Vec<_> = train.examples().iter().filter(|e| e.y.0 == k).collect();
            let mx = pts.iter().map(|e| e.x.0[0]).sum::<f64>() / pts.len() as f64;
            assert!((mx - spec.means[k][0]).abs() < 0.1);
        }
    }

    #[test]
    fn discretized_world_is_valid() {
        let spec = GaussianMixtureSpec::ring(3, 2, 1.5, 1.0, (1, 1, 1)).unwrap();
        let w = spec.discretize(30, 6.0).unwrap();
        assert_eq!(w.len(), 900);
        assert_eq!(w.num_classes(), 3);
    }
}
