//! Closed-form full conditional distributions for every unknown of the
//! model: random intercepts, variance components, regression and
//! covariate-model coefficients, cell probabilities, and the missing
//! outcome, continuous, and categorical values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Dataset, DesignLayout, ParamState, Priors};
use crate::rand_dist::{
    sample_dirichlet, sample_inverse_gamma, sample_inverse_wishart, sample_mvnormal,
    sample_normal, RngHandle, SpdMatrix,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn normal_log_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

/// Inverse-gamma parameters; `1/X ~ Gamma(shape, scale_of_reciprocal)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgParams {
    pub shape: f64,
    pub scale_of_reciprocal: f64,
}

impl IgParams {
    pub fn sample(&self, rng: &mut RngHandle) -> Result<f64> {
        sample_inverse_gamma(self.shape, self.scale_of_reciprocal, rng)
    }

    /// `E[X] = 1 / ((shape - 1) · scale)` for shape > 1.
    pub fn mean(&self) -> f64 {
        1.0 / ((self.shape - 1.0) * self.scale_of_reciprocal)
    }
}

/// Inverse-Wishart parameters in the `(dof, scale⁻¹)` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct IwParams {
    pub dof: f64,
    pub scale: SpdMatrix,
    pub scale_inverse: SpdMatrix,
}

impl IwParams {
    pub fn sample(&self, rng: &mut RngHandle) -> Result<SpdMatrix> {
        sample_inverse_wishart(self.dof, &self.scale_inverse, rng)
    }
}

/// Multivariate normal parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

impl GaussianParams {
    pub fn sample(&self, rng: &mut RngHandle) -> Result<DVector<f64>> {
        sample_mvnormal(&self.mean, &self.cov, rng)
    }
}

/// Mean and variance of `C_k` given the other continuous covariates under
/// the covariate model `C | D ~ N(Wα, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub m_cond: f64,
    pub t_cond: f64,
}

/// Regression of `C_k` on `C_(-k)` implied by `T`, computed once per `T`.
#[derive(Debug, Clone)]
pub struct ConditionalRegression {
    k: usize,
    /// `T_{k,-k} T_{-k,-k}⁻¹`, with a zero at position `k`.
    coefs: Vec<f64>,
    t_cond: f64,
}

impl ConditionalRegression {
    /// Factorizes `T_{-k,-k}` (no explicit inverse).
    pub fn new(k: usize, t: &SpdMatrix) -> Result<Self> {
        let p = t.dim();
        let tm = t.matrix();
        if p == 1 {
            return Ok(ConditionalRegression {
                k,
                coefs: vec![0.0],
                t_cond: tm[(0, 0)],
            });
        }
        let rest: Vec<usize> = (0..p).filter(|&l| l != k).collect();
        let sub = DMatrix::from_fn(p - 1, p - 1, |a, b| tm[(rest[a], rest[b])]);
        let cross = DVector::from_fn(p - 1, |a, _| tm[(rest[a], k)]);
        let chol = nalgebra::Cholesky::new(sub).ok_or_else(|| {
            Error::Numerical(format!("covariance sub-block without C{} is singular", k + 1))
        })?;
        let b = chol.solve(&cross);
        let t_cond = tm[(k, k)] - cross.dot(&b);
        if !(t_cond > 0.0) {
            return Err(Error::Numerical(format!(
                "conditional variance of C{} is {t_cond}",
                k + 1
            )));
        }
        let mut coefs = vec![0.0; p];
        for (a, &l) in rest.iter().enumerate() {
            coefs[l] = b[a];
        }
        Ok(ConditionalRegression { k, coefs, t_cond })
    }

    pub fn moments(&self, c: &[f64], means: &[f64]) -> ConditionalMoments {
        let shift: f64 = self
            .coefs
            .iter()
            .zip(c.iter().zip(means))
            .enumerate()
            .filter(|(l, _)| *l != self.k)
            .map(|(_, (b, (x, m)))| b * (x - m))
            .sum();
        ConditionalMoments {
            m_cond: means[self.k] + shift,
            t_cond: self.t_cond,
        }
    }
}

/// Covariate-model means `Wα` for every continuous covariate.
pub fn covariate_means(alpha: &[f64], dummies: &[f64], p: usize) -> Vec<f64> {
    let r = 1 + dummies.len();
    (0..p)
        .map(|k| {
            let block = &alpha[k * r..(k + 1) * r];
            block[0] + block[1..].iter().zip(dummies).map(|(a, d)| a * d).sum::<f64>()
        })
        .collect()
}

/// Gaussian conditional of `C_k` given the other entries of `c` (entry `k`
/// is ignored), with mean shifted by `W α`.
pub fn conditional_c_moments(
    k: usize,
    c: &[f64],
    dummies: &[f64],
    alpha: &[f64],
    t: &SpdMatrix,
) -> Result<ConditionalMoments> {
    let means = covariate_means(alpha, dummies, t.dim());
    Ok(ConditionalRegression::new(k, t)?.moments(c, &means))
}

/// Linear predictor of cluster `j` split into the part free of `C_k` and
/// its slope in `C_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CSlopeSplit {
    /// Per-unit mean excluding `C_k` (includes the categorical main effects
    /// and the random intercept).
    pub mu1: Vec<f64>,
    /// Slope in `C_k`: its main effect plus active interactions.
    pub mu2: f64,
}

pub fn split_mean_for_ck(
    k: usize,
    j: usize,
    state: &ParamState,
    data: &Dataset,
    layout: &DesignLayout,
) -> CSlopeSplit {
    let dummies = layout.dummies(&state.d[j]);
    let c = &state.c[j];
    let mu2 = layout.slope_in_continuous(k, &state.beta, &dummies);
    let base = layout.cluster_linear_part(&state.beta, c, &dummies) + state.u[j] - mu2 * c[k];
    let mu1 = data.clusters[j]
        .x
        .iter()
        .map(|x| base + layout.level1_linear_part(&state.beta, x))
        .collect();
    CSlopeSplit { mu1, mu2 }
}

/// Normal full conditional of a missing `C_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CPosterior {
    pub mean: f64,
    pub precision: f64,
}

impl CPosterior {
    pub fn variance(&self) -> f64 {
        1.0 / self.precision
    }

    pub fn sample(&self, rng: &mut RngHandle) -> Result<f64> {
        sample_normal(self.mean, self.variance(), rng)
    }
}

/// Combines the covariate-model conditional of `C_k` with the outcome
/// likelihood of its cluster:
/// `Δ = 1/t + n μ₂²/σ²`, `M̃ = m + Δ⁻¹ σ⁻² μ₂ Σᵢ (Yᵢ − μ₁ᵢ − μ₂ m)`.
pub fn c_posterior(
    moments: ConditionalMoments,
    split: &CSlopeSplit,
    y: &[f64],
    sigma2: f64,
) -> Result<CPosterior> {
    if !(moments.t_cond > 0.0) {
        return Err(Error::Domain(format!("conditional variance {} not positive", moments.t_cond)));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("sigma2 {sigma2} not positive")));
    }
    let n = y.len() as f64;
    let mu2 = split.mu2;
    let precision = 1.0 / moments.t_cond + n * mu2 * mu2 / sigma2;
    let resid: f64 = y
        .iter()
        .zip(&split.mu1)
        .map(|(yi, m1)| yi - (m1 + mu2 * moments.m_cond))
        .sum();
    let mean = moments.m_cond + mu2 * resid / (sigma2 * precision);
    Ok(CPosterior { mean, precision })
}

/// Full conditional of missing `C_k` in cluster `j` given the current state.
pub fn c_full_conditional(
    k: usize,
    j: usize,
    state: &ParamState,
    data: &Dataset,
    layout: &DesignLayout,
) -> Result<CPosterior> {
    let dummies = layout.dummies(&state.d[j]);
    let moments = conditional_c_moments(k, &state.c[j], &dummies, &state.alpha, &state.t)?;
    let split = split_mean_for_ck(k, j, state, data, layout);
    c_posterior(moments, &split, &state.y[j], state.sigma2)
}

/// Posterior over the admissible cells of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPosterior {
    pub cells: Vec<usize>,
    /// Log unnormalized mass `log h` of each cell.
    pub log_h: Vec<f64>,
    pub probs: Vec<f64>,
}

impl CellPosterior {
    /// Normalizes log masses by log-sum-exp.
    pub fn from_log_mass(cells: Vec<usize>, log_h: Vec<f64>) -> Result<Self> {
        let max = log_h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical(format!(
                "no admissible cell has finite log mass (max {max})"
            )));
        }
        let weights: Vec<f64> = log_h.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(CellPosterior { cells, log_h, probs })
    }
}

/// Log of `h(d) = Πᵢ f(Yᵢ | C, D=d, ·) · f(C | D=d, α, T) · π_d` for one cell.
pub fn cell_log_mass(
    cell: usize,
    j: usize,
    state: &ParamState,
    data: &Dataset,
    layout: &DesignLayout,
    cells: &crate::model::CellIndex,
) -> f64 {
    let pi = state.pi[cell];
    if pi <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let levels = cells.decode(cell);
    let dummies = layout.dummies(&levels);
    let c = &state.c[j];
    let base = layout.cluster_linear_part(&state.beta, c, &dummies) + state.u[j];
    let mut log_h = pi.ln();
    for (y, x) in state.y[j].iter().zip(&data.clusters[j].x) {
        let mean = base + layout.level1_linear_part(&state.beta, x);
        log_h += normal_log_density(*y, mean, state.sigma2);
    }
    let means = DVector::from_vec(covariate_means(&state.alpha, &dummies, c.len()));
    log_h += state.t.mvn_log_density(&DVector::from_column_slice(c), &means);
    log_h
}

/// Posterior probabilities of the cells `S_j` admissible for cluster `j`.
pub fn d_cell_posterior(
    j: usize,
    state: &ParamState,
    data: &Dataset,
    layout: &DesignLayout,
    cells: &crate::model::CellIndex,
) -> Result<CellPosterior> {
    let admissible = cells.admissible(&data.clusters[j].d)?;
    d_cell_posterior_over(admissible, j, state, data, layout, cells)
}

pub(crate) fn d_cell_posterior_over(
    admissible: Vec<usize>,
    j: usize,
    state: &ParamState,
    data: &Dataset,
    layout: &DesignLayout,
    cells: &crate::model::CellIndex,
) -> Result<CellPosterior> {
    if admissible.is_empty() {
        return Err(Error::Domain(format!("cluster {j} has no admissible cells")));
    }
    let log_h = admissible
        .iter()
        .map(|&cell| cell_log_mass(cell, j, state, data, layout, cells))
        .collect();
    CellPosterior::from_log_mass(admissible, log_h)
}

/// `u_j | · ~ N(Δ⁻¹ σ⁻² Σᵢ rᵢ, Δ⁻¹)` with `Δ = n/σ² + 1/τ`, where `rᵢ` are the
/// outcome residuals from the fixed part. Returns `(mean, variance)`.
pub fn u_full_conditional(resid_sum: f64, n: usize, sigma2: f64, tau: f64) -> (f64, f64) {
    let delta = n as f64 / sigma2 + 1.0 / tau;
    (resid_sum / (sigma2 * delta), 1.0 / delta)
}

/// `τ | u ~ IG(J/2 + α₀, [Σⱼ uⱼ²/2 + 1/β₀]⁻¹)`.
pub fn tau_full_conditional(u: &[f64], priors: &Priors) -> IgParams {
    let ss: f64 = u.iter().map(|v| v * v).sum();
    IgParams {
        shape: u.len() as f64 / 2.0 + priors.ig_shape,
        scale_of_reciprocal: 1.0 / (ss / 2.0 + 1.0 / priors.ig_scale),
    }
}

/// `σ² | · ~ IG(N/2 + α₀, [Σ e²/2 + 1/β₀]⁻¹)`.
pub fn sigma2_full_conditional(residuals: &[f64], priors: &Priors) -> IgParams {
    let ss: f64 = residuals.iter().map(|v| v * v).sum();
    IgParams {
        shape: residuals.len() as f64 / 2.0 + priors.ig_shape,
        scale_of_reciprocal: 1.0 / (ss / 2.0 + 1.0 / priors.ig_scale),
    }
}

/// Columns of a Gram matrix that are (numerically) linear combinations of
/// earlier columns.
pub fn dependent_columns(gram: &DMatrix<f64>) -> Vec<usize> {
    let k = gram.nrows();
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for col in 0..k {
        let diag = gram[(col, col)];
        let residual = if kept.is_empty() {
            diag
        } else {
            let sub = DMatrix::from_fn(kept.len(), kept.len(), |a, b| gram[(kept[a], kept[b])]);
            let g = DVector::from_fn(kept.len(), |a, _| gram[(kept[a], col)]);
            match nalgebra::Cholesky::new(sub) {
                Some(ch) => diag - g.dot(&ch.solve(&g)),
                None => 0.0,
            }
        };
        if residual > 1e-10 * diag.abs().max(1e-300) && diag > 0.0 {
            kept.push(col);
        } else {
            bad.push(col);
        }
    }
    bad
}

pub(crate) fn rank_error(gram: &DMatrix<f64>, names: &[String]) -> Error {
    let cols = dependent_columns(gram);
    let columns = if cols.is_empty() {
        vec!["<ill-conditioned>".to_string()]
    } else {
        cols.iter()
            .map(|&c| names.get(c).cloned().unwrap_or_else(|| format!("#{c}")))
            .collect()
    };
    Error::RankDeficient { columns }
}

/// Flat-prior regression posterior `N(G⁻¹ b, σ² G⁻¹)` from normal equations
/// `G = Σ X Xᵀ`, `b = Σ X (Y − u)`.
pub fn beta_from_normal_equations(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    sigma2: f64,
    names: &[String],
) -> Result<GaussianParams> {
    let chol = nalgebra::Cholesky::new(gram.clone()).ok_or_else(|| rank_error(gram, names))?;
    if !dependent_columns(gram).is_empty() {
        return Err(rank_error(gram, names));
    }
    let mean = chol.solve(rhs);
    let cov = SpdMatrix::symmetrized(chol.inverse() * sigma2)
        .map_err(|_| rank_error(gram, names))?;
    Ok(GaussianParams { mean, cov })
}

/// `β | · ~ N((ΣΣ XXᵀ)⁻¹ ΣΣ X(Y − u), σ² (ΣΣ XXᵀ)⁻¹)` from the stacked
/// design (one row per unit) and the outcome net of random intercepts.
pub fn beta_full_conditional(
    design: &DMatrix<f64>,
    y_minus_u: &DVector<f64>,
    sigma2: f64,
    names: &[String],
) -> Result<GaussianParams> {
    let gram = design.tr_mul(design);
    let rhs = design.tr_mul(y_minus_u);
    beta_from_normal_equations(&gram, &rhs, sigma2, names)
}

/// Draws a missing outcome: `mean + e`, `e ~ N(0, σ²)`.
pub fn impute_y(mean: f64, sigma2: f64, rng: &mut RngHandle) -> Result<f64> {
    Ok(mean + sample_normal(0.0, sigma2, rng)?)
}

/// `α | · ~ N((Σ WᵀT⁻¹W)⁻¹ Σ WᵀT⁻¹Cⱼ, (Σ WᵀT⁻¹W)⁻¹)` with
/// `Wⱼ = I_p ⊗ wⱼᵀ`, `wⱼ = [1, dummy(Dⱼ)]`.
pub fn alpha_full_conditional(
    c: &[Vec<f64>],
    w_rows: &[Vec<f64>],
    t: &SpdMatrix,
    names: &[String],
) -> Result<GaussianParams> {
    let p = t.dim();
    let r = w_rows.first().map_or(1, Vec::len);
    let t_inv = t.inverse()?;
    let ti = t_inv.matrix();
    let dim = p * r;
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (cj, w) in c.iter().zip(w_rows) {
        for k in 0..p {
            let tic: f64 = (0..p).map(|l| ti[(k, l)] * cj[l]).sum();
            for a in 0..r {
                rhs[k * r + a] += w[a] * tic;
                for l in 0..p {
                    let tkl = ti[(k, l)];
                    for b in 0..r {
                        info[(k * r + a, l * r + b)] += tkl * w[a] * w[b];
                    }
                }
            }
        }
    }
    let chol = nalgebra::Cholesky::new(info.clone()).ok_or_else(|| rank_error(&info, names))?;
    if !dependent_columns(&info).is_empty() {
        return Err(rank_error(&info, names));
    }
    let mean = chol.solve(&rhs);
    let cov = SpdMatrix::symmetrized(chol.inverse()).map_err(|_| rank_error(&info, names))?;
    Ok(GaussianParams { mean, cov })
}

/// `T | · ~ IW(V₀ + J, (S₀ + Σ (Cⱼ − Wⱼα)(Cⱼ − Wⱼα)ᵀ)⁻¹)`.
pub fn t_full_conditional(
    c: &[Vec<f64>],
    w_rows: &[Vec<f64>],
    alpha: &[f64],
    priors: &Priors,
) -> Result<IwParams> {
    let p = priors.iw_scale.dim();
    let mut scale = priors.iw_scale.matrix().clone();
    for (cj, w) in c.iter().zip(w_rows) {
        let means = covariate_means(alpha, &w[1..], p);
        let resid = DVector::from_fn(p, |k, _| cj[k] - means[k]);
        scale += &resid * resid.transpose();
    }
    let scale = SpdMatrix::symmetrized(scale)
        .map_err(|e| Error::Numerical(format!("inverse-Wishart scale: {e}")))?;
    let scale_inverse = scale.inverse()?;
    Ok(IwParams {
        dof: priors.iw_dof + c.len() as f64,
        scale,
        scale_inverse,
    })
}

/// Dirichlet concentrations `a_d + #{j : cell(j) = d}`.
pub fn pi_full_conditional(cells: &[usize], prior_a: &[f64]) -> Vec<f64> {
    let mut a = prior_a.to_vec();
    for &cell in cells {
        a[cell] += 1.0;
    }
    a
}

pub fn sample_pi(cells: &[usize], prior_a: &[f64], rng: &mut RngHandle) -> Result<Vec<f64>> {
    sample_dirichlet(&pi_full_conditional(cells, prior_a), rng)
}
