//! Complete-data maximum likelihood for the random-intercept model.
//!
//! With `γ = τ/σ²` fixed, `V_j = σ²(I + γ11ᵀ)` and
//! `V_j⁻¹ = σ⁻² H_j`, `H_j = I − γ/(1 + n_jγ) 11ᵀ`, so β is a GLS solve and σ²
//! has a closed form. The profile in γ is maximized on `log(1 + γ)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dataset, DesignLayout, ModelSpec};
use crate::posteriors::{dependent_columns, rank_error};

const LOG_RATIO_MAX: f64 = 14.0;
const GRID_POINTS: usize = 57;
const TOLERANCE: f64 = 1e-8;
const MAX_EVALUATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlFit {
    pub names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub tau_hat: f64,
    pub sigma2_hat: f64,
    pub se_beta: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    /// Profile evaluations used.
    pub iterations: usize,
}

impl MlFit {
    /// 95% Wald interval for coefficient `i`.
    pub fn wald_interval(&self, i: usize) -> (f64, f64) {
        let half = 1.959963984540054 * self.se_beta[i];
        (self.beta_hat[i] - half, self.beta_hat[i] + half)
    }
}

/// Profile at one variance ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    pub loglik: f64,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    /// `(Xᵀ H X)⁻¹`; the GLS covariance is `σ²` times this.
    pub gram_inverse: DMatrix<f64>,
}

struct ClusterSums {
    n: f64,
    xtx: DMatrix<f64>,
    xt1: DVector<f64>,
    xty: DVector<f64>,
    sum_y: f64,
    yty: f64,
}

/// Per-cluster sufficient statistics of a complete dataset.
pub struct MlProblem {
    names: Vec<String>,
    clusters: Vec<ClusterSums>,
    n_total: f64,
}

impl MlProblem {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Result<Self> {
        if !data.is_complete() {
            return Err(Error::Input("maximum likelihood needs complete data".into()));
        }
        data.validate(spec)?;
        let layout: DesignLayout = spec.layout();
        let k = layout.width();
        let mut row = vec![0.0; k];
        let clusters = data
            .clusters
            .iter()
            .map(|cl| {
                let c: Vec<f64> = cl.c.iter().map(|v| v.expect("complete")).collect();
                let d: Vec<usize> = cl.d.iter().map(|v| v.expect("complete")).collect();
                let dummies = layout.dummies(&d);
                let mut s = ClusterSums {
                    n: cl.y.len() as f64,
                    xtx: DMatrix::zeros(k, k),
                    xt1: DVector::zeros(k),
                    xty: DVector::zeros(k),
                    sum_y: 0.0,
                    yty: 0.0,
                };
                for (y, x) in cl.y.iter().zip(&cl.x) {
                    let y = y.expect("complete");
                    layout.fill_row(&c, &dummies, x, &mut row);
                    let xr = DVector::from_column_slice(&row);
                    s.xtx += &xr * xr.transpose();
                    s.xt1 += &xr;
                    s.xty += &xr * y;
                    s.sum_y += y;
                    s.yty += y * y;
                }
                s
            })
            .collect();
        Ok(MlProblem {
            names: layout.names().to_vec(),
            clusters,
            n_total: data.n_obs() as f64,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Profiled log-likelihood, GLS coefficients and σ² at ratio `gamma`.
    pub fn profile(&self, gamma: f64) -> Result<ProfilePoint> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("variance ratio must be finite and >= 0, got {gamma}")));
        }
        let k = self.names.len();
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        let mut yhy = 0.0;
        let mut log_det = 0.0;
        for s in &self.clusters {
            let w = gamma / (1.0 + s.n * gamma);
            gram += &s.xtx - (&s.xt1 * s.xt1.transpose()) * w;
            rhs += &s.xty - &s.xt1 * (w * s.sum_y);
            yhy += s.yty - w * s.sum_y * s.sum_y;
            log_det += (1.0 + s.n * gamma).ln();
        }
        let chol = nalgebra::Cholesky::new(gram.clone()).ok_or_else(|| rank_error(&gram, &self.names))?;
        if !dependent_columns(&gram).is_empty() {
            return Err(rank_error(&gram, &self.names));
        }
        let beta = chol.solve(&rhs);
        let rss = (yhy - beta.dot(&rhs)).max(0.0);
        let n = self.n_total;
        let sigma2 = rss / n;
        if !(sigma2 > 0.0) {
            return Err(Error::Numerical("profiled residual variance is zero".into()));
        }
        let loglik = -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + n * sigma2.ln() + log_det + n);
        Ok(ProfilePoint { loglik, beta, sigma2, gram_inverse: chol.inverse() })
    }

    /// Grid scan on `x = log(1 + γ)` over `[0, 14]` followed by golden-section
    /// refinement inside the best grid bracket.
    pub fn fit(&self) -> Result<MlFit> {
        let evals = std::cell::Cell::new(0usize);
        let eval = |x: f64| -> Result<f64> {
            evals.set(evals.get() + 1);
            Ok(self.profile(x.exp_m1())?.loglik)
        };

        let step = LOG_RATIO_MAX / (GRID_POINTS - 1) as f64;
        let mut grid = Vec::with_capacity(GRID_POINTS);
        for i in 0..GRID_POINTS {
            grid.push(eval(i as f64 * step)?);
        }
        let best = (0..GRID_POINTS)
            .max_by(|&a, &b| grid[a].total_cmp(&grid[b]))
            .expect("non-empty grid");
        let at_upper = best == GRID_POINTS - 1;

        let mut lo = best.saturating_sub(1) as f64 * step;
        let mut hi = (best + 1).min(GRID_POINTS - 1) as f64 * step;
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let mut f1 = eval(x1)?;
        let mut f2 = eval(x2)?;
        let mut within_budget = true;
        while hi - lo > TOLERANCE {
            if evals.get() >= MAX_EVALUATIONS {
                within_budget = false;
                break;
            }
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = eval(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = eval(x2)?;
            }
        }
        let mut candidates = vec![(best as f64 * step, grid[best]), (x1, f1), (x2, f2)];
        if best == 0 {
            candidates.push((0.0, grid[0]));
        }
        let (x_opt, _) = candidates
            .into_iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("candidates");
        let gamma = x_opt.exp_m1();
        let point = self.profile(gamma)?;

        Ok(MlFit {
            names: self.names.clone(),
            beta_hat: point.beta.as_slice().to_vec(),
            tau_hat: gamma * point.sigma2,
            sigma2_hat: point.sigma2,
            se_beta: (0..self.names.len())
                .map(|i| (point.sigma2 * point.gram_inverse[(i, i)]).sqrt())
                .collect(),
            loglik: point.loglik,
            converged: within_budget && !at_upper && self.n_clusters() >= 2,
            iterations: evals.get() + 1,
        })
    }
}

/// Profiled log-likelihood at `gamma = τ/σ²`, returning
/// `(loglik, β_GLS, σ²)`.
pub fn profile_loglik(gamma: f64, data: &Dataset, spec: &ModelSpec) -> Result<(f64, Vec<f64>, f64)> {
    let point = MlProblem::new(data, spec)?.profile(gamma)?;
    Ok((point.loglik, point.beta.as_slice().to_vec(), point.sigma2))
}

/// Maximum-likelihood fit of a complete dataset.
pub fn fit_ml(data: &Dataset, spec: &ModelSpec) -> Result<MlFit> {
    MlProblem::new(data, spec)?.fit()
}
