use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::summarize;
use crate::error::{Error, Result};
use crate::gibbs::{run_model, Model, SamplerConfig};
use crate::model::{Dataset, PriorSpec};
use crate::rand_dist::RngHandle;
use crate::reference_ml::fit_ml;

use super::ampute::{ampute_mar, missing_rates, MarSpec};
use super::generate::{generate, sim_model_spec, Truth, GENERAL_LOCATION_C2_MEAN, LATENT_NORMAL_C2_MEAN};

const GENERATE_TAG: u64 = u64::MAX;
const AMPUTE_TAG: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    GeneralLocation,
    LatentNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub mechanism: Mechanism,
    pub n_clusters: usize,
    pub cluster_size: usize,
    /// Threshold on the latent `D*` (latent-normal mechanism only).
    pub kappa: f64,
    pub truth: Truth,
    pub amputate: bool,
    /// Missingness model. Unset: the defaults, re-centred on the mean `C2`
    /// of the mechanism so the latent-normal rates match the
    /// general-location ones.
    pub mar: Option<MarSpec>,
    pub replications: usize,
    pub seed: u64,
    /// Largest tolerated share of failed replications.
    pub max_failure_rate: f64,
    pub psrf_threshold: f64,
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            mechanism: Mechanism::GeneralLocation,
            n_clusters: 200,
            cluster_size: 4,
            kappa: 2.2,
            truth: Truth::default(),
            amputate: true,
            mar: None,
            replications: 200,
            seed: 1,
            max_failure_rate: 0.02,
            psrf_threshold: 1.1,
            priors: PriorSpec::default(),
            sampler: SamplerConfig {
                burn_in: 1000,
                post_burn: 1000,
                ..SamplerConfig::default()
            },
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters < 2 {
            return Err(Error::Config("a scenario needs at least 2 clusters".into()));
        }
        if self.cluster_size == 0 || self.replications == 0 {
            return Err(Error::Config("cluster_size and replications must be positive".into()));
        }
        if self.truth.beta.len() != 5 {
            return Err(Error::Config(format!(
                "truth.beta needs 5 entries (intercept, C1, C2, D, C1:D), got {}",
                self.truth.beta.len()
            )));
        }
        if !(self.truth.tau > 0.0 && self.truth.sigma2 > 0.0) {
            return Err(Error::Config("true variances must be positive".into()));
        }
        if self.kappa.is_nan() {
            return Err(Error::Config("kappa is NaN".into()));
        }
        let mar = self.mar_spec();
        for (name, coef) in [("y", mar.y), ("c1", mar.c1), ("d", mar.d)] {
            if !(coef.delta >= 0.0) || !coef.c0.is_finite() || !coef.c1.is_finite() {
                return Err(Error::Config(format!("invalid MAR coefficients for {name}")));
            }
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::Config("max_failure_rate must lie in [0, 1]".into()));
        }
        self.sampler.validate()
    }

    /// The missingness model in effect.
    pub fn mar_spec(&self) -> MarSpec {
        self.mar.unwrap_or_else(|| match self.mechanism {
            Mechanism::GeneralLocation => MarSpec::default(),
            Mechanism::LatentNormal => MarSpec::default().shifted(LATENT_NORMAL_C2_MEAN - GENERAL_LOCATION_C2_MEAN),
        })
    }

    /// Names of the scored parameters: β in layout order, then τ and σ².
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = sim_model_spec().layout().names().to_vec();
        names.push("tau".into());
        names.push("sigma2".into());
        names
    }
}

/// Point estimate, standard error and 95% interval of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl Estimate {
    pub fn covers(&self, truth: f64) -> Option<bool> {
        Some(self.ci_lo? <= truth && truth <= self.ci_hi?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub gibbs: Vec<Estimate>,
    pub cdml: Vec<Estimate>,
    pub cdml_converged: bool,
    /// Sampler parameters with a PSRF, and how many exceeded the threshold.
    pub psrf_checked: usize,
    pub psrf_over: usize,
    pub psrf_max: f64,
    /// Missing shares of `Y`, `C1`, `D` after amputation.
    pub missing_rates: [f64; 3],
}

/// Complete and amputed data of replication `r`.
pub fn simulate_pair(scenario: &SimScenario, r: usize) -> (Dataset, Dataset) {
    let r64 = r as u64;
    let complete = generate(scenario, &mut RngHandle::derive(scenario.seed, &[r64, GENERATE_TAG]));
    let amputed = if scenario.amputate {
        ampute_mar(&complete, &scenario.mar_spec(), &mut RngHandle::derive(scenario.seed, &[r64, AMPUTE_TAG]))
    } else {
        complete.clone()
    };
    (complete, amputed)
}

/// Generates, fits by ML, amputes and samples replication `r`.
pub fn run_replication(scenario: &SimScenario, r: usize) -> Result<ReplicationResult> {
    let r64 = r as u64;
    let (complete, data) = simulate_pair(scenario, r);
    let spec = sim_model_spec().with_priors(scenario.priors.clone());
    let k = spec.layout().width();

    let ml = fit_ml(&complete, &spec)?;
    let mut cdml: Vec<Estimate> = (0..k)
        .map(|i| {
            let (lo, hi) = ml.wald_interval(i);
            Estimate { estimate: ml.beta_hat[i], se: Some(ml.se_beta[i]), ci_lo: Some(lo), ci_hi: Some(hi) }
        })
        .collect();
    for v in [ml.tau_hat, ml.sigma2_hat] {
        cdml.push(Estimate { estimate: v, se: None, ci_lo: None, ci_hi: None });
    }

    let model = Model::new(spec, &data)?;
    let config = SamplerConfig { seed: scenario.seed, ..scenario.sampler.clone() };
    let store = run_model(&data, &model, &config, r64)?;
    let rows = summarize(&store);

    let gibbs = rows[..k + 2]
        .iter()
        .map(|row| Estimate {
            estimate: row.posterior_mean,
            se: Some(row.posterior_sd),
            ci_lo: Some(row.ci_lo),
            ci_hi: Some(row.ci_hi),
        })
        .collect();
    let psrfs: Vec<f64> = rows.iter().filter_map(|row| row.psrf).collect();
    Ok(ReplicationResult {
        replication: r,
        gibbs,
        cdml,
        cdml_converged: ml.converged,
        psrf_checked: psrfs.len(),
        psrf_over: psrfs.iter().filter(|&&v| !(v <= scenario.psrf_threshold)).count(),
        psrf_max: psrfs.iter().copied().fold(f64::NEG_INFINITY, f64::max).min(f64::MAX),
        missing_rates: missing_rates(&data),
    })
}

/// Runs the listed replications in parallel, keeping per-replication errors.
pub fn run_replications(scenario: &SimScenario, indices: &[usize]) -> Vec<(usize, Result<ReplicationResult>)> {
    indices.par_iter().map(|&r| (r, run_replication(scenario, r))).collect()
}

/// Monte Carlo metrics of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub pct_bias: f64,
    /// Monte Carlo standard error of `pct_bias`.
    pub mc_se_pct_bias: f64,
    /// Mean reported standard error.
    pub ase: Option<f64>,
    /// Standard deviation of the point estimates.
    pub ese: f64,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub estimator: String,
    pub n_replications: usize,
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn row(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Metrics from one estimate vector per replication (same order as
    /// `names` and `truth`).
    pub fn from_estimates(estimator: &str, names: &[String], truth: &[f64], reps: &[&[Estimate]]) -> Self {
        let n = reps.len() as f64;
        let rows = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let est: Vec<f64> = reps.iter().map(|r| r[i].estimate).collect();
                let mean = est.iter().sum::<f64>() / n;
                let ese = if reps.len() > 1 {
                    (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                let ses: Option<Vec<f64>> = reps.iter().map(|r| r[i].se).collect();
                let covers: Option<Vec<bool>> = reps.iter().map(|r| r[i].covers(truth[i])).collect();
                MetricRow {
                    name: name.clone(),
                    truth: truth[i],
                    mean_estimate: mean,
                    pct_bias: 100.0 * (mean - truth[i]) / truth[i],
                    mc_se_pct_bias: 100.0 * ese / n.sqrt() / truth[i].abs(),
                    ase: ses.map(|s| s.iter().sum::<f64>() / n),
                    ese,
                    coverage: covers.map(|c| c.iter().filter(|&&b| b).count() as f64 / n),
                }
            })
            .collect();
        MetricsTable { estimator: estimator.into(), n_replications: reps.len(), rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    /// Successful replications, ordered by index.
    pub results: Vec<ReplicationResult>,
    /// Failed replication indices with their error messages.
    pub failures: Vec<(usize, String)>,
    pub gibbs: MetricsTable,
    pub cdml: MetricsTable,
}

impl StudyResult {
    /// Share of replications where every PSRF was at most the threshold
    /// for at least `min_share` of the parameters.
    pub fn psrf_pass_rate(&self, min_share: f64) -> f64 {
        let ok = self
            .results
            .iter()
            .filter(|r| (r.psrf_checked - r.psrf_over) as f64 >= min_share * r.psrf_checked as f64)
            .count();
        ok as f64 / self.results.len() as f64
    }

    pub fn mean_missing_rates(&self) -> [f64; 3] {
        let n = self.results.len() as f64;
        let mut out = [0.0; 3];
        for r in &self.results {
            for (o, v) in out.iter_mut().zip(r.missing_rates) {
                *o += v / n;
            }
        }
        out
    }
}

/// Builds metric tables from finished replications; independent of the
/// order in which they are supplied.
pub fn summarize_study(
    scenario: &SimScenario,
    mut results: Vec<ReplicationResult>,
    mut failures: Vec<(usize, String)>,
) -> Result<StudyResult> {
    let total = results.len() + failures.len();
    if failures.len() as f64 > scenario.max_failure_rate * total as f64 || results.is_empty() {
        return Err(Error::StudyFailed {
            failed: failures.len(),
            total,
            limit: 100.0 * scenario.max_failure_rate,
        });
    }
    results.sort_by_key(|r| r.replication);
    failures.sort_by_key(|f| f.0);
    let names = scenario.parameter_names();
    let truth = scenario.truth.values();
    let gibbs: Vec<&[Estimate]> = results.iter().map(|r| r.gibbs.as_slice()).collect();
    let cdml: Vec<&[Estimate]> = results.iter().map(|r| r.cdml.as_slice()).collect();
    Ok(StudyResult {
        gibbs: MetricsTable::from_estimates("gibbs", &names, &truth, &gibbs),
        cdml: MetricsTable::from_estimates("cdml", &names, &truth, &cdml),
        results,
        failures,
    })
}

/// Runs every replication of `scenario` and scores both estimators.
pub fn run_study(scenario: &SimScenario) -> Result<StudyResult> {
    scenario.validate()?;
    let indices: Vec<usize> = (0..scenario.replications).collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in run_replications(scenario, &indices) {
        match res {
            Ok(v) => results.push(v),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    summarize_study(scenario, results, failures)
}
