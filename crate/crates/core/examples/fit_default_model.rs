//! Regenerates `data/default_logit.toml`, the model used when a run has
//! neither calibration samples nor a model file.
//!
//! Parcels are drawn with log-normal sizes, uniform compactness and a
//! skewed standardized density; labels follow a logistic law in which
//! small, compact, POI-dense parcels are more likely urban.
//!
//! ```sh
//! cargo run -p urban-parcels --example fit_default_model > crates/core/data/default_logit.toml
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use urban_parcels::ca::{fit_logit, sigmoid, Features, FitOptions, LogitSample};

const SAMPLES: usize = 20_000;
const TRUE_RAW: [f64; 4] = [-1.5, -0.08, 2.0, 5.0];

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let size = LogNormal::new(1.0, 1.0).expect("valid parameters");
    let samples: Vec<LogitSample> = (0..SAMPLES)
        .map(|_| {
            let features = Features::new(
                size.sample(&mut rng),
                rng.gen_range(0.2..0.9),
                rng.gen::<f64>().powi(2),
            );
            let z = TRUE_RAW[0]
                + TRUE_RAW[1] * features.size_ha
                + TRUE_RAW[2] * features.compactness
                + TRUE_RAW[3] * features.density;
            let urban = rng.gen::<f64>() < sigmoid(z);
            LogitSample { features, urban }
        })
        .collect();
    let fit = fit_logit(&samples, &FitOptions::default()).expect("synthetic data is fittable");
    eprintln!(
        "converged={} iterations={} raw={:?}",
        fit.converged,
        fit.iterations,
        fit.model.raw_coefficients()
    );
    print!("{}", fit.model.to_toml_string());
}
