use serde::{Deserialize, Serialize};

use crate::model::{CategoricalVar, Cluster, Dataset, ModelSpec};
use crate::rand_dist::RngHandle;

/// Data-generating parameters, `beta` in fitted-layout order
/// `[(Intercept), C1, C2, D[1], C1:D[1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truth {
    pub beta: Vec<f64>,
    pub tau: f64,
    pub sigma2: f64,
}

impl Default for Truth {
    fn default() -> Self {
        Truth { beta: vec![1.0; 5], tau: 4.0, sigma2: 16.0 }
    }
}

impl Truth {
    /// Target values in metric order: β, τ, σ².
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.tau);
        v.push(self.sigma2);
        v
    }
}

/// `E[C2]` under each generator: `0.3 * 0.5 + 0.7 * (-0.5)` and 2.
pub const GENERAL_LOCATION_C2_MEAN: f64 = -0.2;
pub const LATENT_NORMAL_C2_MEAN: f64 = 2.0;

/// Model fitted to simulated data: `C1, C2`, binary `D`, `C1:D` only.
pub fn sim_model_spec() -> ModelSpec {
    ModelSpec::new(
        vec!["C1".into(), "C2".into()],
        vec![CategoricalVar::new("D", &["0", "1"])],
        vec![],
        vec![vec![true], vec![false]],
    )
    .expect("static spec is valid")
}

fn cluster(j: usize, n: usize, c1: f64, c2: f64, d: usize, truth: &Truth, rng: &mut RngHandle) -> Cluster {
    let b = &truth.beta;
    let df = d as f64;
    let mean = b[0] + b[1] * c1 + b[2] * c2 + b[3] * df + b[4] * c1 * df;
    let u = truth.tau.sqrt() * rng.standard_normal();
    let sd = truth.sigma2.sqrt();
    Cluster {
        id: (j + 1).to_string(),
        y: (0..n).map(|_| Some(mean + u + sd * rng.standard_normal())).collect(),
        x: vec![Vec::new(); n],
        c: vec![Some(c1), Some(c2)],
        d: vec![Some(d)],
    }
}

/// `D ~ Bernoulli(0.3)`, `C2 | D ~ N(-0.5 + D, 1)`,
/// `C1 | C2, D ~ N(0.5 - 0.5 C2 + 1.2 D, 1)`, then outcomes with explicit
/// `u_j ~ N(0, τ)` and `e_ij ~ N(0, σ²)`.
pub fn gen_general_location(j: usize, n: usize, truth: &Truth, rng: &mut RngHandle) -> Dataset {
    let clusters = (0..j)
        .map(|jj| {
            let d = (rng.uniform() < 0.3) as usize;
            let c2 = -0.5 + d as f64 + rng.standard_normal();
            let c1 = 0.5 - 0.5 * c2 + 1.2 * d as f64 + rng.standard_normal();
            cluster(jj, n, c1, c2, d, truth, rng)
        })
        .collect();
    Dataset::new(clusters)
}

/// `(C1, C2, D*)` for one cluster: `C2 ~ N(2, 1)` and
/// `(C1, D*) | C2 ~ N((0.75 + 0.7 C2, -0.5 + C2), [[1.25, -0.5], [-0.5, 1]])`.
pub(crate) fn latent_normal_covariates(rng: &mut RngHandle) -> (f64, f64, f64) {
    let c2 = 2.0 + rng.standard_normal();
    let z1 = rng.standard_normal();
    let z2 = rng.standard_normal();
    let s1 = 1.25f64.sqrt();
    let c1 = 0.75 + 0.7 * c2 + s1 * z1;
    let dstar = -0.5 + c2 + (-0.5 / s1) * z1 + (1.0 - 0.25 / 1.25f64).sqrt() * z2;
    (c1, c2, dstar)
}

/// Covariates from the latent-normal model with `D = 1{D* > kappa}`.
pub fn gen_latent_normal(j: usize, n: usize, kappa: f64, truth: &Truth, rng: &mut RngHandle) -> Dataset {
    let clusters = (0..j)
        .map(|jj| {
            let (c1, c2, dstar) = latent_normal_covariates(rng);
            cluster(jj, n, c1, c2, (dstar > kappa) as usize, truth, rng)
        })
        .collect();
    Dataset::new(clusters)
}

/// Dispatches on the mechanism of `scenario`.
pub fn generate(scenario: &super::SimScenario, rng: &mut RngHandle) -> Dataset {
    match scenario.mechanism {
        super::Mechanism::GeneralLocation => {
            gen_general_location(scenario.n_clusters, scenario.cluster_size, &scenario.truth, rng)
        }
        super::Mechanism::LatentNormal => gen_latent_normal(
            scenario.n_clusters,
            scenario.cluster_size,
            scenario.kappa,
            &scenario.truth,
            rng,
        ),
    }
}
