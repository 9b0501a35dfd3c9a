use crate::error::{Error, Result};
use crate::rand_dist::SpdMatrix;

use super::cells::CellIndex;
use super::data::Dataset;
use super::spec::ModelSpec;

/// One Gibbs state: θ = (β, τ, σ², α, T, π), the random intercepts, and the
/// completed data (observed values plus current imputations).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    /// Coefficients in [`DesignLayout`](super::DesignLayout) order.
    pub beta: Vec<f64>,
    pub tau: f64,
    pub sigma2: f64,
    /// Covariate-model fixed effects: `p` blocks of `[intercept, dummy effects]`,
    /// matching `W = I_p ⊗ [1 dummy(D)ᵀ]`.
    pub alpha: Vec<f64>,
    pub t: SpdMatrix,
    /// Cell probabilities in [`CellIndex`] order.
    pub pi: Vec<f64>,
    pub u: Vec<f64>,
    /// Completed outcomes per cluster.
    pub y: Vec<Vec<f64>>,
    /// Completed continuous covariates per cluster.
    pub c: Vec<Vec<f64>>,
    /// Completed categorical levels per cluster.
    pub d: Vec<Vec<usize>>,
}

/// Location of a missing value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Y { cluster: usize, unit: usize },
    C { cluster: usize, var: usize },
    D { cluster: usize, var: usize },
}

impl ParamState {
    /// Current cell of cluster `j`.
    pub fn cell(&self, j: usize, cells: &CellIndex) -> usize {
        cells.encode(&self.d[j]).expect("state levels stay in range")
    }

    /// Covariate-model mean of continuous `k` for a cluster with these dummies.
    pub fn covariate_mean(&self, k: usize, dummies: &[f64]) -> f64 {
        let r = 1 + dummies.len();
        let block = &self.alpha[k * r..(k + 1) * r];
        block[0] + block[1..].iter().zip(dummies).map(|(a, d)| a * d).sum::<f64>()
    }

    /// Current values at every missing slot of `data`, in cluster order
    /// (outcomes, then continuous, then categorical within a cluster).
    pub fn imputations(&self, data: &Dataset) -> Vec<(Slot, f64)> {
        let mut out = Vec::new();
        for (j, cl) in data.clusters.iter().enumerate() {
            for (i, y) in cl.y.iter().enumerate() {
                if y.is_none() {
                    out.push((Slot::Y { cluster: j, unit: i }, self.y[j][i]));
                }
            }
            for (k, c) in cl.c.iter().enumerate() {
                if c.is_none() {
                    out.push((Slot::C { cluster: j, var: k }, self.c[j][k]));
                }
            }
            for (v, d) in cl.d.iter().enumerate() {
                if d.is_none() {
                    out.push((Slot::D { cluster: j, var: v }, self.d[j][v] as f64));
                }
            }
        }
        out
    }

    /// Checks positivity, simplex, masking, and agreement with observed data.
    pub fn check(&self, spec: &ModelSpec, data: &Dataset) -> Result<()> {
        let layout = spec.layout();
        if self.beta.len() != layout.width() {
            return Err(Error::Domain("beta has wrong length".into()));
        }
        if !(self.tau > 0.0) || !(self.sigma2 > 0.0) {
            return Err(Error::Domain(format!(
                "variances must be positive: tau={}, sigma2={}",
                self.tau, self.sigma2
            )));
        }
        if self.pi.len() != spec.n_cells()
            || self.pi.iter().any(|&p| p < 0.0)
            || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Domain("pi is not on the simplex".into()));
        }
        if self.t.dim() != spec.p() || self.alpha.len() != spec.p() * layout.covariate_width() {
            return Err(Error::Domain("covariate-model parameters have wrong shape".into()));
        }
        for (j, cl) in data.clusters.iter().enumerate() {
            let agrees = cl.y.iter().zip(&self.y[j]).all(|(o, v)| o.is_none_or(|o| o == *v))
                && cl.c.iter().zip(&self.c[j]).all(|(o, v)| o.is_none_or(|o| o == *v))
                && cl.d.iter().zip(&self.d[j]).all(|(o, v)| o.is_none_or(|o| o == *v));
            if !agrees {
                return Err(Error::Domain(format!("state overwrote observed data in cluster {j}")));
            }
        }
        Ok(())
    }
}

/// Names of the scalar parameters returned by [`theta_values`], in order:
/// β, τ, σ², α, the upper triangle of T, π.
pub fn theta_names(spec: &ModelSpec) -> Vec<String> {
    let layout = spec.layout();
    let mut names: Vec<String> = layout.names().iter().map(|n| format!("beta[{n}]")).collect();
    names.push("tau".into());
    names.push("sigma2".into());
    let mut cov_terms = vec!["(Intercept)".to_string()];
    cov_terms.extend(layout.dummy_names().iter().cloned());
    for c in &spec.continuous {
        for term in &cov_terms {
            names.push(format!("alpha[{c}|{term}]"));
        }
    }
    for a in 0..spec.p() {
        for b in a..spec.p() {
            names.push(format!("T[{},{}]", spec.continuous[a], spec.continuous[b]));
        }
    }
    let cells = spec.cell_index();
    for cell in 0..cells.n_cells() {
        let label: Vec<&str> = cells
            .decode(cell)
            .iter()
            .zip(&spec.categorical)
            .map(|(&l, var)| var.levels[l].as_str())
            .collect();
        names.push(format!("pi[{}]", label.join(",")));
    }
    names
}

pub fn theta_values(state: &ParamState) -> Vec<f64> {
    let p = state.t.dim();
    let mut out = Vec::with_capacity(state.beta.len() + 2 + state.alpha.len() + p * p + state.pi.len());
    out.extend_from_slice(&state.beta);
    out.push(state.tau);
    out.push(state.sigma2);
    out.extend_from_slice(&state.alpha);
    let t = state.t.matrix();
    for a in 0..p {
        for b in a..p {
            out.push(t[(a, b)]);
        }
    }
    out.extend_from_slice(&state.pi);
    out
}
