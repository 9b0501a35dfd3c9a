use crate::error::{Error, Result};

use super::spec::ModelSpec;

/// One level-2 unit: its outcomes and level-1 covariates, plus the
/// cluster-level covariates. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: String,
    /// Outcome per level-1 unit.
    pub y: Vec<Option<f64>>,
    /// Level-1 covariates per unit (always observed).
    pub x: Vec<Vec<f64>>,
    /// Continuous cluster-level covariates, length `p`.
    pub c: Vec<Option<f64>>,
    /// Categorical cluster-level covariates as level indices, length `q`.
    pub d: Vec<Option<usize>>,
}

impl Cluster {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn is_complete(&self) -> bool {
        self.y.iter().all(Option::is_some)
            && self.c.iter().all(Option::is_some)
            && self.d.iter().all(Option::is_some)
    }
}

/// Two-level data set with explicit missingness.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub clusters: Vec<Cluster>,
}

impl Dataset {
    pub fn new(clusters: Vec<Cluster>) -> Self {
        Dataset { clusters }
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_obs(&self) -> usize {
        self.clusters.iter().map(Cluster::n).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.clusters.iter().all(Cluster::is_complete)
    }

    pub fn observed_y(&self) -> impl Iterator<Item = f64> + '_ {
        self.clusters.iter().flat_map(|c| c.y.iter().flatten().copied())
    }

    /// Checks shapes and ranges against the model.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::Input("dataset has no clusters".into()));
        }
        let levels = spec.levels();
        for cl in &self.clusters {
            if cl.y.is_empty() {
                return Err(Error::Input(format!("cluster '{}' has no observations", cl.id)));
            }
            if cl.x.len() != cl.y.len() {
                return Err(Error::Input(format!(
                    "cluster '{}': {} outcome rows but {} level-1 covariate rows",
                    cl.id,
                    cl.y.len(),
                    cl.x.len()
                )));
            }
            if let Some(row) = cl.x.iter().find(|r| r.len() != spec.x_dim()) {
                return Err(Error::Input(format!(
                    "cluster '{}': level-1 row has {} entries, expected {}",
                    cl.id,
                    row.len(),
                    spec.x_dim()
                )));
            }
            if cl.x.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "cluster '{}': level-1 covariates must be finite and observed",
                    cl.id
                )));
            }
            if cl.c.len() != spec.p() || cl.d.len() != spec.q() {
                return Err(Error::Input(format!(
                    "cluster '{}': expected {} continuous and {} categorical covariates",
                    cl.id,
                    spec.p(),
                    spec.q()
                )));
            }
            if cl.c.iter().flatten().chain(cl.y.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("cluster '{}': non-finite value", cl.id)));
            }
            for (k, (obs, &n)) in cl.d.iter().zip(&levels).enumerate() {
                if let Some(level) = obs {
                    if *level >= n {
                        return Err(Error::Input(format!(
                            "cluster '{}': level {level} of '{}' out of range",
                            cl.id, spec.categorical[k].name
                        )));
                    }
                }
            }
        }
        if self.observed_y().next().is_none() {
            return Err(Error::Input("no observed outcome values".into()));
        }
        Ok(())
    }

    /// Shifts continuous and level-1 covariates by the given offsets
    /// (observed values only).
    pub fn center(&mut self, c_shift: &[f64], x_shift: &[f64]) {
        for cl in &mut self.clusters {
            for (v, s) in cl.c.iter_mut().zip(c_shift) {
                if let Some(v) = v {
                    *v -= s;
                }
            }
            for row in &mut cl.x {
                for (v, s) in row.iter_mut().zip(x_shift) {
                    *v -= s;
                }
            }
        }
    }

    /// Observed-value means of the continuous covariates (over clusters) and
    /// level-1 covariates (over units). Unobserved variables get 0.
    pub fn observed_means(&self, spec: &ModelSpec) -> (Vec<f64>, Vec<f64>) {
        let c_means = (0..spec.p())
            .map(|k| mean_or_zero(self.clusters.iter().filter_map(|cl| cl.c[k])))
            .collect();
        let x_means = (0..spec.x_dim())
            .map(|m| mean_or_zero(self.clusters.iter().flat_map(|cl| cl.x.iter().map(move |r| r[m]))))
            .collect();
        (c_means, x_means)
    }
}

pub(crate) fn mean_or_zero(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
