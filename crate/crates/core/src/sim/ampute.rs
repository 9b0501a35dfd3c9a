use serde::{Deserialize, Serialize};

use crate::model::Dataset;
use crate::rand_dist::RngHandle;

/// Logit-scale missingness model for one variable: per cluster,
/// `logit p ~ N(c0 + c1 C2, delta)` with `delta` a variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarCoef {
    pub c0: f64,
    pub c1: f64,
    pub delta: f64,
}

impl MarCoef {
    pub fn new(c0: f64, c1: f64, delta: f64) -> Self {
        MarCoef { c0, c1, delta }
    }

    /// Draws the cluster's missingness probability given its `C2`.
    pub fn probability(&self, c2: f64, rng: &mut RngHandle) -> f64 {
        let logit = self.c0 + self.c1 * c2 + self.delta.sqrt() * rng.standard_normal();
        1.0 / (1.0 + (-logit).exp())
    }
}

/// Missingness models for `Y` (per unit), `C1` and `D` (per cluster).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarSpec {
    pub y: MarCoef,
    pub c1: MarCoef,
    pub d: MarCoef,
}

impl Default for MarSpec {
    fn default() -> Self {
        MarSpec {
            y: MarCoef::new(-1.9, 0.1, 1.0),
            c1: MarCoef::new(-2.2, -1.5, 0.0),
            d: MarCoef::new(-2.0, 1.5, 0.0),
        }
    }
}

impl MarSpec {
    /// Same missingness as `self` after `C2` moves by `c2_shift`:
    /// every `c0` becomes `c0 - c1 * c2_shift`.
    pub fn shifted(&self, c2_shift: f64) -> MarSpec {
        let f = |c: MarCoef| MarCoef::new(c.c0 - c.c1 * c2_shift, c.c1, c.delta);
        MarSpec { y: f(self.y), c1: f(self.c1), d: f(self.d) }
    }
}

/// Deletes `Y`, `C1` and `D` values with probabilities driven by the fully
/// observed `C2`. `C2` and level-1 covariates are never touched.
///
/// # Panics
/// If a cluster lacks an observed `C2` (the second continuous covariate).
pub fn ampute_mar(data: &Dataset, mar: &MarSpec, rng: &mut RngHandle) -> Dataset {
    let mut out = data.clone();
    for cl in &mut out.clusters {
        let c2 = cl.c[1].expect("amputation needs an observed C2");
        let p_y = mar.y.probability(c2, rng);
        let p_c1 = mar.c1.probability(c2, rng);
        let p_d = mar.d.probability(c2, rng);
        for y in &mut cl.y {
            if rng.uniform() < p_y {
                *y = None;
            }
        }
        if rng.uniform() < p_c1 {
            cl.c[0] = None;
        }
        if rng.uniform() < p_d {
            cl.d[0] = None;
        }
    }
    out
}

/// Fractions missing for `Y` (over units), `C1` and `D` (over clusters).
pub fn missing_rates(data: &Dataset) -> [f64; 3] {
    let n = data.n_obs() as f64;
    let j = data.n_clusters() as f64;
    let y = data.clusters.iter().flat_map(|c| &c.y).filter(|v| v.is_none()).count() as f64;
    let c1 = data.clusters.iter().filter(|c| c.c[0].is_none()).count() as f64;
    let d = data.clusters.iter().filter(|c| c.d[0].is_none()).count() as f64;
    [y / n, c1 / j, d / j]
}
