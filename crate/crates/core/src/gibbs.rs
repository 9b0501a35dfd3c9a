//! Full Gibbs sweeps, chain initialization, and multi-chain runs.
//!
//! One sweep updates, in order: random intercepts `u`, `τ`, `β`, `σ²`,
//! missing outcomes, `α`, `T`, `π`, missing continuous covariates (index
//! order within a cluster), and missing categorical covariates (one joint
//! draw over the admissible cells of each cluster).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    mean_or_zero, theta_names, theta_values, CellIndex, Dataset, DesignLayout, ModelSpec,
    ParamState, Priors,
};
use crate::posteriors::{
    alpha_full_conditional, beta_from_normal_equations, c_posterior, d_cell_posterior_over,
    impute_y, sample_pi, sigma2_full_conditional, split_mean_for_ck, t_full_conditional,
    tau_full_conditional, u_full_conditional, ConditionalRegression, covariate_means,
};
use crate::rand_dist::{sample_categorical, sample_normal, RngHandle, SpdMatrix};

/// Parameters held fixed at their initial values instead of being drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Clamp {
    pub beta: bool,
    pub tau: bool,
    pub sigma2: bool,
    pub alpha: bool,
    pub t: bool,
    pub pi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub post_burn: usize,
    pub n_chains: usize,
    pub thin: usize,
    pub seed: u64,
    /// Store random intercepts and imputations with every record.
    pub store_latent: bool,
    /// Jitter the starting point of chains after the first.
    pub overdisperse: bool,
    pub clamp: Clamp,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 2500,
            post_burn: 2500,
            n_chains: 2,
            thin: 1,
            seed: 1,
            store_latent: false,
            overdisperse: true,
            clamp: Clamp::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in == 0 || self.post_burn == 0 || self.n_chains == 0 || self.thin == 0 {
            return Err(Error::Config(
                "burn_in, post_burn, n_chains and thin must all be at least 1".into(),
            ));
        }
        if self.thin > self.post_burn {
            return Err(Error::Config("thin exceeds post_burn; no draws would be kept".into()));
        }
        Ok(())
    }

    pub fn records_per_chain(&self) -> usize {
        self.post_burn / self.thin
    }
}

/// Model specification bundled with its derived layouts and resolved priors.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layout: DesignLayout,
    pub cells: CellIndex,
    pub priors: Priors,
}

impl Model {
    /// Validates `data` against `spec` and resolves data-dependent prior
    /// defaults.
    pub fn new(spec: ModelSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        data.validate(&spec)?;
        let (cc_cov, _) = complete_case_covariance(data, spec.p());
        let priors = spec.priors.resolve(&spec, &cc_cov)?;
        Ok(Self::with_priors(spec, priors))
    }

    pub fn with_priors(spec: ModelSpec, priors: Priors) -> Self {
        Model {
            layout: spec.layout(),
            cells: spec.cell_index(),
            spec,
            priors,
        }
    }

    pub fn theta_names(&self) -> Vec<String> {
        theta_names(&self.spec)
    }
}

/// Sample covariance of the continuous covariates over clusters where all of
/// them are observed. Falls back to the identity (flag `true`) with fewer
/// than `p + 2` such clusters or a singular estimate.
pub fn complete_case_covariance(data: &Dataset, p: usize) -> (SpdMatrix, bool) {
    let rows: Vec<Vec<f64>> = data
        .clusters
        .iter()
        .filter_map(|cl| cl.c.iter().copied().collect::<Option<Vec<f64>>>())
        .collect();
    if rows.len() < p + 2 {
        return (SpdMatrix::identity(p), true);
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..p).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(p, p, |a, b| {
        rows.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])).sum::<f64>() / (n - 1.0)
    });
    match SpdMatrix::symmetrized(cov) {
        Ok(m) => (m, false),
        Err(_) => (SpdMatrix::identity(p), true),
    }
}

/// Starting state: observed-mean fills for `Y` and `C`, marginal-frequency
/// draws for `D`, `β = (ȳ, 0, …)`, `τ = σ² = var(Y_obs)/2`, complete-case `α`
/// and `T`, and prior-smoothed complete-case cell frequencies for `π`.
pub fn init_state(data: &Dataset, model: &Model, rng: &mut RngHandle) -> Result<ParamState> {
    let spec = &model.spec;
    let layout = &model.layout;
    let p = spec.p();
    let levels = spec.levels();

    let y_obs: Vec<f64> = data.observed_y().collect();
    if y_obs.is_empty() {
        return Err(Error::Input("no observed outcome values".into()));
    }
    let y_mean = y_obs.iter().sum::<f64>() / y_obs.len() as f64;
    let y_var = if y_obs.len() > 1 {
        y_obs.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (y_obs.len() - 1) as f64
    } else {
        0.0
    };
    let half_var = if y_var > 0.0 { y_var / 2.0 } else { 1.0 };

    let c_means: Vec<f64> = (0..p)
        .map(|k| mean_or_zero(data.clusters.iter().filter_map(|cl| cl.c[k])))
        .collect();
    let level_freqs: Vec<Vec<f64>> = levels
        .iter()
        .enumerate()
        .map(|(v, &l)| {
            let mut counts = vec![0.0; l];
            for cl in &data.clusters {
                if let Some(level) = cl.d[v] {
                    counts[level] += 1.0;
                }
            }
            let total: f64 = counts.iter().sum();
            if total == 0.0 {
                vec![1.0 / l as f64; l]
            } else {
                counts.iter().map(|c| c / total).collect()
            }
        })
        .collect();

    let y: Vec<Vec<f64>> = data
        .clusters
        .iter()
        .map(|cl| cl.y.iter().map(|v| v.unwrap_or(y_mean)).collect())
        .collect();
    let c: Vec<Vec<f64>> = data
        .clusters
        .iter()
        .map(|cl| cl.c.iter().zip(&c_means).map(|(v, m)| v.unwrap_or(*m)).collect())
        .collect();
    let mut d = Vec::with_capacity(data.n_clusters());
    for cl in &data.clusters {
        let mut levels_j = Vec::with_capacity(spec.q());
        for (v, obs) in cl.d.iter().enumerate() {
            levels_j.push(match obs {
                Some(level) => *level,
                None => sample_categorical(&level_freqs[v], rng)?,
            });
        }
        d.push(levels_j);
    }

    let mut beta = vec![0.0; layout.width()];
    beta[0] = y_mean;

    let r = layout.covariate_width();
    let mut alpha = vec![0.0; p * r];
    for k in 0..p {
        let mut gram = DMatrix::<f64>::zeros(r, r);
        let mut rhs = DVector::<f64>::zeros(r);
        for cl in &data.clusters {
            let (Some(ck), Some(levels_j)) = (cl.c[k], cl.d.iter().copied().collect::<Option<Vec<_>>>())
            else {
                continue;
            };
            let mut w = vec![1.0];
            w.extend(layout.dummies(&levels_j));
            let w = DVector::from_vec(w);
            gram += &w * w.transpose();
            rhs += &w * ck;
        }
        let fitted = nalgebra::Cholesky::new(gram.clone())
            .filter(|_| crate::posteriors::dependent_columns(&gram).is_empty())
            .map(|ch| ch.solve(&rhs));
        match fitted {
            Some(coef) => alpha[k * r..(k + 1) * r].copy_from_slice(coef.as_slice()),
            None => alpha[k * r] = c_means[k],
        }
    }

    let (t, _) = complete_case_covariance(data, p);

    let a = &model.priors.dirichlet_a;
    let mut counts = a.clone();
    for cl in &data.clusters {
        if let Some(levels_j) = cl.d.iter().copied().collect::<Option<Vec<_>>>() {
            counts[model.cells.encode(&levels_j)?] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let pi = counts.iter().map(|v| v / total).collect();

    Ok(ParamState {
        beta,
        tau: half_var,
        sigma2: half_var,
        alpha,
        t,
        pi,
        u: vec![0.0; data.n_clusters()],
        y,
        c,
        d,
    })
}

fn overdisperse(state: &mut ParamState, rng: &mut RngHandle) {
    for b in &mut state.beta {
        *b *= 1.0 + (rng.uniform() - 0.5);
    }
    state.tau *= (rng.uniform() - 0.5).exp();
    state.sigma2 *= (rng.uniform() - 0.5).exp();
}

/// Per-dataset bookkeeping reused across sweeps.
pub struct Sampler<'a> {
    data: &'a Dataset,
    model: &'a Model,
    clamp: Clamp,
    /// Admissible cells of clusters with any missing categorical entry.
    missing_d: Vec<(usize, Vec<usize>)>,
    /// Indices of missing continuous covariates per cluster.
    missing_c: Vec<(usize, Vec<usize>)>,
    has_missing_y: bool,
    n_obs: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, model: &'a Model, clamp: Clamp) -> Result<Self> {
        let mut missing_d = Vec::new();
        let mut missing_c = Vec::new();
        for (j, cl) in data.clusters.iter().enumerate() {
            if cl.d.iter().any(Option::is_none) {
                missing_d.push((j, model.cells.admissible(&cl.d)?));
            }
            let ks: Vec<usize> = (0..cl.c.len()).filter(|&k| cl.c[k].is_none()).collect();
            if !ks.is_empty() {
                missing_c.push((j, ks));
            }
        }
        Ok(Sampler {
            data,
            model,
            clamp,
            missing_d,
            missing_c,
            has_missing_y: data.clusters.iter().any(|cl| cl.y.iter().any(Option::is_none)),
            n_obs: data.n_obs(),
        })
    }

    fn design(&self, state: &ParamState) -> DMatrix<f64> {
        let layout = &self.model.layout;
        let k = layout.width();
        let mut design = DMatrix::<f64>::zeros(self.n_obs, k);
        let mut row = vec![0.0; k];
        let mut r = 0;
        for (j, cl) in self.data.clusters.iter().enumerate() {
            let dummies = layout.dummies(&state.d[j]);
            for x in &cl.x {
                layout.fill_row(&state.c[j], &dummies, x, &mut row);
                for (col, v) in row.iter().enumerate() {
                    design[(r, col)] = *v;
                }
                r += 1;
            }
        }
        design
    }

    /// One full cycle of the ten conditional updates.
    pub fn sweep(&self, state: &mut ParamState, rng: &mut RngHandle) -> Result<()> {
        let model = self.model;
        let priors = &model.priors;
        let data = self.data;
        let j_count = data.n_clusters();

        let design = self.design(state);
        let y_flat = DVector::from_iterator(self.n_obs, state.y.iter().flatten().copied());
        let xb = &design * DVector::from_column_slice(&state.beta);

        // 1: random intercepts
        let mut r = 0;
        for j in 0..j_count {
            let n = state.y[j].len();
            let resid: f64 = (r..r + n).map(|i| y_flat[i] - xb[i]).sum();
            let (mean, var) = u_full_conditional(resid, n, state.sigma2, state.tau);
            state.u[j] = sample_normal(mean, var, rng).map_err(|e| e.in_cluster(j, "u"))?;
            r += n;
        }

        // 2: τ
        if !self.clamp.tau {
            state.tau = tau_full_conditional(&state.u, priors).sample(rng)?;
        }

        // 3: β
        let u_flat = DVector::from_iterator(
            self.n_obs,
            state.y.iter().zip(&state.u).flat_map(|(yj, &u)| std::iter::repeat_n(u, yj.len())),
        );
        if !self.clamp.beta {
            let gram = design.tr_mul(&design);
            let rhs = design.tr_mul(&(&y_flat - &u_flat));
            let post = beta_from_normal_equations(&gram, &rhs, state.sigma2, model.layout.names())?;
            state.beta = post.sample(rng)?.as_slice().to_vec();
        }
        let xb = &design * DVector::from_column_slice(&state.beta);

        // 4: σ²
        if !self.clamp.sigma2 {
            let resid: Vec<f64> = (0..self.n_obs).map(|i| y_flat[i] - xb[i] - u_flat[i]).collect();
            state.sigma2 = sigma2_full_conditional(&resid, priors).sample(rng)?;
        }

        // 5: missing outcomes
        if self.has_missing_y {
            let mut r = 0;
            for (j, cl) in data.clusters.iter().enumerate() {
                for (i, obs) in cl.y.iter().enumerate() {
                    if obs.is_none() {
                        state.y[j][i] = impute_y(xb[r] + state.u[j], state.sigma2, rng)?;
                    }
                    r += 1;
                }
            }
        }

        // 6-7: covariate model
        if !(self.clamp.alpha && self.clamp.t) {
            let w_rows: Vec<Vec<f64>> = state
                .d
                .iter()
                .map(|levels| {
                    let mut w = vec![1.0];
                    w.extend(model.layout.dummies(levels));
                    w
                })
                .collect();
            if !self.clamp.alpha {
                let names = alpha_names(&model.spec, &model.layout);
                let post = alpha_full_conditional(&state.c, &w_rows, &state.t, &names)?;
                state.alpha = post.sample(rng)?.as_slice().to_vec();
            }
            if !self.clamp.t {
                state.t = t_full_conditional(&state.c, &w_rows, &state.alpha, priors)?.sample(rng)?;
            }
        }

        // 8: π
        if !self.clamp.pi {
            let cells: Vec<usize> = (0..j_count).map(|j| state.cell(j, &model.cells)).collect();
            state.pi = sample_pi(&cells, &priors.dirichlet_a, rng)?;
        }

        // 9: missing continuous covariates
        if !self.missing_c.is_empty() {
            let regressions = (0..model.spec.p())
                .map(|k| ConditionalRegression::new(k, &state.t))
                .collect::<Result<Vec<_>>>()?;
            for (j, ks) in &self.missing_c {
                let j = *j;
                let dummies = model.layout.dummies(&state.d[j]);
                let means = covariate_means(&state.alpha, &dummies, model.spec.p());
                for &k in ks {
                    let moments = regressions[k].moments(&state.c[j], &means);
                    let split = split_mean_for_ck(k, j, state, data, &model.layout);
                    let post = c_posterior(moments, &split, &state.y[j], state.sigma2)
                        .map_err(|e| e.in_cluster(j, "continuous covariate"))?;
                    state.c[j][k] = post.sample(rng)?;
                }
            }
        }

        // 10: missing categorical covariates
        for (j, admissible) in &self.missing_d {
            let j = *j;
            let post = d_cell_posterior_over(admissible.clone(), j, state, data, &model.layout, &model.cells)
                .map_err(|e| e.in_cluster(j, "categorical covariate"))?;
            let pick = sample_categorical(&post.probs, rng)?;
            model.cells.decode_into(post.cells[pick], &mut state.d[j]);
        }

        Ok(())
    }
}

pub(crate) fn alpha_names(spec: &ModelSpec, layout: &DesignLayout) -> Vec<String> {
    let mut terms = vec!["(Intercept)".to_string()];
    terms.extend(layout.dummy_names().iter().cloned());
    spec.continuous
        .iter()
        .flat_map(|c| terms.iter().map(move |t| format!("alpha[{c}|{t}]")))
        .collect()
}

/// One full sweep of the sampler over `data`.
pub fn sweep(state: &mut ParamState, data: &Dataset, model: &Model, rng: &mut RngHandle) -> Result<()> {
    Sampler::new(data, model, Clamp::default())?.sweep(state, rng)
}

/// Post-burn-in draws of one chain, stored row-major (one row per record).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainDraws {
    pub values: Vec<f64>,
    /// Per record: random intercepts followed by imputations, when stored.
    pub latent: Vec<Vec<f64>>,
}

/// Post-burn-in records of every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    pub names: Vec<String>,
    pub latent_names: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

impl ChainStore {
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_records(&self, chain: usize) -> usize {
        self.chains[chain].values.len() / self.n_params().max(1)
    }

    pub fn record(&self, chain: usize, r: usize) -> &[f64] {
        let n = self.n_params();
        &self.chains[chain].values[r * n..(r + 1) * n]
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of parameter `param` in chain `chain`.
    pub fn series(&self, chain: usize, param: usize) -> Vec<f64> {
        let n = self.n_params();
        self.chains[chain].values.iter().skip(param).step_by(n).copied().collect()
    }

    /// Draws of latent quantity `idx` in chain `chain`.
    pub fn latent_series(&self, chain: usize, idx: usize) -> Vec<f64> {
        self.chains[chain].latent.iter().map(|rec| rec[idx]).collect()
    }
}

/// Names for the latent part of a record: `u[id]` then one per missing slot.
pub fn latent_names(data: &Dataset, model: &Model) -> Vec<String> {
    let mut names: Vec<String> = data.clusters.iter().map(|cl| format!("u[{}]", cl.id)).collect();
    for cl in &data.clusters {
        for (i, y) in cl.y.iter().enumerate() {
            if y.is_none() {
                names.push(format!("y[{},{}]", cl.id, i));
            }
        }
        for (k, c) in cl.c.iter().enumerate() {
            if c.is_none() {
                names.push(format!("{}[{}]", model.spec.continuous[k], cl.id));
            }
        }
        for (v, d) in cl.d.iter().enumerate() {
            if d.is_none() {
                names.push(format!("{}[{}]", model.spec.categorical[v].name, cl.id));
            }
        }
    }
    names
}

fn latent_record(state: &ParamState, data: &Dataset) -> Vec<f64> {
    let mut rec = state.u.clone();
    rec.extend(state.imputations(data).into_iter().map(|(_, v)| v));
    rec
}

/// Runs one chain from a given starting state.
pub fn run_chain(
    data: &Dataset,
    model: &Model,
    config: &SamplerConfig,
    mut state: ParamState,
    chain: usize,
    rng: &mut RngHandle,
) -> Result<ChainDraws> {
    let sampler = Sampler::new(data, model, config.clamp)?;
    let total = config.burn_in + config.post_burn;
    let mut draws = ChainDraws::default();
    draws.values.reserve(config.records_per_chain() * (state.beta.len() + 8));
    for iteration in 0..total {
        sampler.sweep(&mut state, rng).map_err(|e| Error::Sweep {
            chain,
            iteration,
            source: Box::new(e),
        })?;
        if iteration >= config.burn_in && (iteration - config.burn_in + 1).is_multiple_of(config.thin) {
            draws.values.extend(theta_values(&state));
            if config.store_latent {
                draws.latent.push(latent_record(&state, data));
            }
        }
    }
    Ok(draws)
}

/// Runs `config.n_chains` chains on streams derived from `(config.seed,
/// stream_root, chain)`.
pub fn run_model(
    data: &Dataset,
    model: &Model,
    config: &SamplerConfig,
    stream_root: u64,
) -> Result<ChainStore> {
    config.validate()?;
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = RngHandle::derive(config.seed, &[stream_root, chain as u64]);
            let mut state = init_state(data, model, &mut rng)?;
            if chain > 0 && config.overdisperse {
                overdisperse(&mut state, &mut rng);
            }
            run_chain(data, model, config, state, chain, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainStore {
        names: model.theta_names(),
        latent_names: if config.store_latent { latent_names(data, model) } else { Vec::new() },
        chains,
    })
}

/// Validates inputs, resolves priors, and runs all chains.
pub fn run(data: &Dataset, spec: &ModelSpec, config: &SamplerConfig) -> Result<ChainStore> {
    let model = Model::new(spec.clone(), data)?;
    run_model(data, &model, config, 0)
}
