use std::path::Path;

use log::warn;
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::Cell;
use crate::error::{Error, Result};

/// Raw explanatory variables of one parcel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub size_ha: f64,
    pub compactness: f64,
    pub density: f64,
}

impl Features {
    pub fn new(size_ha: f64, compactness: f64, density: f64) -> Self {
        Features {
            size_ha,
            compactness,
            density,
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.size_ha, self.compactness, self.density]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitSample {
    pub features: Features,
    pub urban: bool,
}

/// Mean and standard deviation of one feature at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub mean: f64,
    pub sd: f64,
}

impl Scale {
    pub const IDENTITY: Scale = Scale { mean: 0.0, sd: 1.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub size: Scale,
    pub compactness: Scale,
    pub density: Scale,
}

impl FeatureScaling {
    pub const IDENTITY: FeatureScaling = FeatureScaling {
        size: Scale::IDENTITY,
        compactness: Scale::IDENTITY,
        density: Scale::IDENTITY,
    };

    fn as_array(&self) -> [Scale; 3] {
        [self.size, self.compactness, self.density]
    }

    fn standardize(&self, f: &Features) -> [f64; 3] {
        let x = f.as_array();
        let s = self.as_array();
        [0, 1, 2].map(|j| (x[j] - s[j].mean) / s[j].sd)
    }
}

/// Logistic model of the probability that a parcel is urban. Coefficients
/// apply to standardized features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedLogit {
    pub intercept: f64,
    pub beta_size: f64,
    pub beta_compactness: f64,
    pub beta_density: f64,
    pub scaling: FeatureScaling,
}

impl CalibratedLogit {
    /// Model on unscaled features.
    pub fn unscaled(intercept: f64, beta_size: f64, beta_compactness: f64, beta_density: f64) -> Self {
        CalibratedLogit {
            intercept,
            beta_size,
            beta_compactness,
            beta_density,
            scaling: FeatureScaling::IDENTITY,
        }
    }

    /// Rejects non-finite coefficients and non-positive scales.
    pub fn validate(&self) -> Result<()> {
        let coefficients = [
            self.intercept,
            self.beta_size,
            self.beta_compactness,
            self.beta_density,
        ];
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Calibration("coefficients must be finite".into()));
        }
        for s in self.scaling.as_array() {
            if !(s.mean.is_finite() && s.sd.is_finite() && s.sd > 0.0) {
                return Err(Error::Calibration(format!(
                    "feature scaling needs a finite mean and positive sd, got ({}, {})",
                    s.mean, s.sd
                )));
            }
        }
        Ok(())
    }

    fn standardized(&self) -> [f64; 4] {
        [
            self.intercept,
            self.beta_size,
            self.beta_compactness,
            self.beta_density,
        ]
    }

    pub fn linear_predictor(&self, features: &Features) -> f64 {
        let z = self.scaling.standardize(features);
        self.intercept + self.beta_size * z[0] + self.beta_compactness * z[1] + self.beta_density * z[2]
    }

    pub fn probability(&self, features: &Features) -> f64 {
        sigmoid(self.linear_predictor(features))
    }

    /// `(intercept, size, compactness, density)` on the unscaled features.
    pub fn raw_coefficients(&self) -> [f64; 4] {
        let b = Vector4::from(self.standardized());
        (self.to_raw_matrix() * b).into()
    }

    /// Linear map from standardized to raw coefficients.
    fn to_raw_matrix(self) -> Matrix4<f64> {
        let s = self.scaling.as_array();
        let mut a = Matrix4::identity();
        for j in 0..3 {
            a[(0, j + 1)] = -s[j].mean / s[j].sd;
            a[(j + 1, j + 1)] = 1.0 / s[j].sd;
        }
        a
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plain struct of floats serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: CalibratedLogit =
            toml::from_str(text).map_err(|e| Error::Calibration(e.message().to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::file(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// Logistic function, evaluated without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Probability that `cell` is urban judged by its own attributes.
pub fn attribute_probability(cell: &Cell, model: &CalibratedLogit) -> f64 {
    model.probability(&cell.features())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence when no coefficient moves more than this.
    pub tolerance: f64,
    /// Bound on every standardized coefficient; reached under separation.
    pub coefficient_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            tolerance: 1e-8,
            coefficient_cap: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub model: CalibratedLogit,
    pub iterations: usize,
    pub converged: bool,
    /// Some coefficient hit the cap (the classes are separable).
    pub capped: bool,
    pub log_likelihood: f64,
    /// Inverse observed information on the standardized scale, in
    /// `(intercept, size, compactness, density)` order. Absent when singular.
    pub covariance: Option<[[f64; 4]; 4]>,
}

impl LogitFit {
    /// Covariance of [`CalibratedLogit::raw_coefficients`].
    pub fn raw_covariance(&self) -> Option<[[f64; 4]; 4]> {
        let cov = Matrix4::from(self.covariance?).transpose();
        let a = self.model.to_raw_matrix();
        Some((a * cov * a.transpose()).transpose().into())
    }

    /// Standard errors of the raw coefficients.
    pub fn raw_std_errors(&self) -> Option<[f64; 4]> {
        let cov = self.raw_covariance()?;
        Some([0, 1, 2, 3].map(|i| cov[i][i].sqrt()))
    }
}

/// Maximum-likelihood logistic regression by Newton iterations with step
/// halving. Features are standardized to zero mean and unit sample sd first.
/// Sums run in input order, so the result is a pure function of `samples`.
pub fn fit_logit(samples: &[LogitSample], options: &FitOptions) -> Result<LogitFit> {
    let positives = samples.iter().filter(|s| s.urban).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Calibration("samples contain a single class".into()));
    }
    if positives < 2 || negatives < 2 {
        return Err(Error::Calibration(
            "need at least two samples of each class".into(),
        ));
    }
    if samples
        .iter()
        .any(|s| s.features.as_array().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Calibration("features must be finite".into()));
    }

    let scaling = fit_scaling(samples)?;
    let rows: Vec<(Vector4<f64>, f64)> = samples
        .iter()
        .map(|s| {
            let z = scaling.standardize(&s.features);
            (
                Vector4::new(1.0, z[0], z[1], z[2]),
                if s.urban { 1.0 } else { 0.0 },
            )
        })
        .collect();
    let cap = options.coefficient_cap;

    let mut beta = Vector4::zeros();
    let mut ll = log_likelihood(&rows, &beta);
    let mut converged = false;
    let mut capped = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let (gradient, information) = derivatives(&rows, &beta);
        let Some(delta) = solve(&information, &gradient) else {
            break;
        };
        let mut step = 1.0;
        let mut candidate;
        let mut candidate_ll;
        loop {
            candidate = (beta + delta * step).map(|b: f64| b.clamp(-cap, cap));
            candidate_ll = log_likelihood(&rows, &candidate);
            if candidate_ll >= ll - 1e-12 * ll.abs() || step < 1e-10 {
                break;
            }
            step *= 0.5;
        }
        capped |= candidate.iter().any(|b| b.abs() >= cap);
        let change = (candidate - beta).amax();
        beta = candidate;
        ll = candidate_ll;
        if change < options.tolerance {
            converged = true;
            break;
        }
    }
    if capped {
        warn!("logistic fit hit the coefficient cap of {cap}; the classes look separable");
    }
    if !converged {
        warn!("logistic fit stopped after {iterations} iterations without converging");
    }

    let (_, information) = derivatives(&rows, &beta);
    let covariance = information
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .map(|m| m.transpose().into());
    let model = CalibratedLogit {
        intercept: beta[0],
        beta_size: beta[1],
        beta_compactness: beta[2],
        beta_density: beta[3],
        scaling,
    };
    model.validate()?;
    Ok(LogitFit {
        model,
        iterations,
        converged,
        capped,
        log_likelihood: ll,
        covariance,
    })
}

fn fit_scaling(samples: &[LogitSample]) -> Result<FeatureScaling> {
    let n = samples.len() as f64;
    let mut scales = [Scale::IDENTITY; 3];
    for (j, scale) in scales.iter_mut().enumerate() {
        let mean = samples.iter().map(|s| s.features.as_array()[j]).sum::<f64>() / n;
        let ss: f64 = samples
            .iter()
            .map(|s| (s.features.as_array()[j] - mean).powi(2))
            .sum();
        let sd = (ss / (n - 1.0)).sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            let name = ["size", "compactness", "density"][j];
            return Err(Error::Calibration(format!("feature `{name}` has no variance")));
        }
        *scale = Scale { mean, sd };
    }
    Ok(FeatureScaling {
        size: scales[0],
        compactness: scales[1],
        density: scales[2],
    })
}

fn log_likelihood(rows: &[(Vector4<f64>, f64)], beta: &Vector4<f64>) -> f64 {
    rows.iter()
        .map(|(x, y)| {
            let eta = x.dot(beta);
            y * eta - softplus(eta)
        })
        .sum()
}

/// Score vector and observed information matrix.
fn derivatives(rows: &[(Vector4<f64>, f64)], beta: &Vector4<f64>) -> (Vector4<f64>, Matrix4<f64>) {
    let mut gradient = Vector4::zeros();
    let mut information = Matrix4::zeros();
    for (x, y) in rows {
        let p = sigmoid(x.dot(beta));
        gradient += x * (y - p);
        information += (x * x.transpose()) * (p * (1.0 - p));
    }
    (gradient, information)
}

/// Newton direction; a growing ridge keeps it defined near separation.
fn solve(information: &Matrix4<f64>, gradient: &Vector4<f64>) -> Option<Vector4<f64>> {
    let scale = information.trace().max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let m = information + Matrix4::identity() * ridge;
        if let Some(chol) = m.cholesky() {
            let d = chol.solve(gradient);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge = if ridge == 0.0 {
            scale * 1e-12
        } else {
            ridge * 100.0
        };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-40.0) < 1e-6 && sigmoid(-40.0) > 0.0);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn zero_predictor_scores_one_half() {
        let m = CalibratedLogit::unscaled(0.0, 0.0, 0.0, 0.0);
        assert_eq!(m.probability(&Features::new(3.0, 0.5, 0.2)), 0.5);
    }

    #[test]
    fn toml_round_trip() {
        let m = CalibratedLogit {
            intercept: -0.25,
            beta_size: 1.5,
            beta_compactness: 0.125,
            beta_density: 2.0,
            scaling: FeatureScaling {
                size: Scale { mean: 2.0, sd: 3.0 },
                compactness: Scale { mean: 0.6, sd: 0.1 },
                density: Scale { mean: 0.4, sd: 0.2 },
            },
        };
        let text = m.to_toml_string();
        assert_eq!(CalibratedLogit::from_toml_str(&text).unwrap(), m);
        let bad = text.replace("sd = 3.0", "sd = 0.0");
        assert!(CalibratedLogit::from_toml_str(&bad).is_err());
    }

    #[test]
    fn raw_coefficients_reproduce_the_predictor() {
        let m = CalibratedLogit {
            intercept: 0.3,
            beta_size: -1.0,
            beta_compactness: 0.5,
            beta_density: 2.0,
            scaling: FeatureScaling {
                size: Scale { mean: 2.0, sd: 4.0 },
                compactness: Scale { mean: 0.5, sd: 0.25 },
                density: Scale { mean: 0.1, sd: 0.5 },
            },
        };
        let r = m.raw_coefficients();
        let f = Features::new(7.0, 0.3, 0.9);
        let raw = r[0] + r[1] * f.size_ha + r[2] * f.compactness + r[3] * f.density;
        assert!((raw - m.linear_predictor(&f)).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_an_error() {
        let s: Vec<LogitSample> = (0..10)
            .map(|i| LogitSample {
                features: Features::new(i as f64, 0.5, 0.5),
                urban: true,
            })
            .collect();
        assert!(matches!(
            fit_logit(&s, &FitOptions::default()),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn separable_data_is_capped() {
        let s: Vec<LogitSample> = (0..40)
            .map(|i| LogitSample {
                features: Features::new(i as f64, (i % 7) as f64, (i % 3) as f64),
                urban: i >= 20,
            })
            .collect();
        let fit = fit_logit(&s, &FitOptions::default()).unwrap();
        assert!(fit.capped);
        let b = fit.model;
        for c in [b.intercept, b.beta_size, b.beta_compactness, b.beta_density] {
            assert!(c.abs() <= 25.0);
        }
        assert!(b.beta_size > 0.0);
    }

    #[test]
    fn no_signal_gives_zero_coefficients() {
        // Every feature vector appears once with each label.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = Vec::new();
        for _ in 0..5000 {
            let f = Features::new(rng.gen_range(0.1..50.0), rng.gen(), rng.gen());
            s.push(LogitSample {
                features: f,
                urban: true,
            });
            s.push(LogitSample {
                features: f,
                urban: false,
            });
        }
        let fit = fit_logit(&s, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        for c in fit.model.raw_coefficients() {
            assert!(c.abs() < 0.05, "{c}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<LogitSample> = (0..500)
            .map(|_| {
                let f = Features::new(rng.gen_range(0.0..10.0), rng.gen(), rng.gen());
                LogitSample {
                    features: f,
                    urban: rng.gen::<f64>() < sigmoid(f.size_ha - 5.0),
                }
            })
            .collect();
        let a = fit_logit(&s, &FitOptions::default()).unwrap();
        let b = fit_logit(&s, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a
            .raw_std_errors()
            .unwrap()
            .iter()
            .all(|v| v.is_finite() && *v > 0.0));
    }
}
