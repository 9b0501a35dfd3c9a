use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rand_dist::SpdMatrix;

use super::cells::CellIndex;
use super::design::DesignLayout;

/// A cluster-level categorical covariate and its level labels.
///
/// Level 0 is the reference level of the dummy coding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalVar {
    pub name: String,
    pub levels: Vec<String>,
}

impl CategoricalVar {
    pub fn new(name: impl Into<String>, levels: &[&str]) -> Self {
        CategoricalVar {
            name: name.into(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Levels labelled `"0"`, `"1"`, ...
    pub fn numbered(name: impl Into<String>, n_levels: usize) -> Self {
        CategoricalVar {
            name: name.into(),
            levels: (0..n_levels).map(|l| l.to_string()).collect(),
        }
    }
}

/// Prior hyperparameters. Unset entries take data-dependent defaults when
/// resolved against a dataset (see [`PriorSpec::resolve`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Inverse-gamma shape for both τ and σ².
    pub ig_shape: f64,
    /// Inverse-gamma scale; enters the conditional as `1/ig_scale`.
    pub ig_scale: f64,
    /// Inverse-Wishart degrees of freedom; defaults to `p + 2`.
    pub iw_dof: Option<f64>,
    /// Inverse-Wishart scale `S₀`; defaults to the complete-case covariance.
    pub iw_scale: Option<Vec<Vec<f64>>>,
    /// Dirichlet concentrations over cells; defaults to all ones.
    pub dirichlet_a: Option<Vec<f64>>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            ig_shape: 1.0,
            ig_scale: 0.5,
            iw_dof: None,
            iw_scale: None,
            dirichlet_a: None,
        }
    }
}

/// Fully resolved priors used by the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub ig_shape: f64,
    pub ig_scale: f64,
    pub iw_dof: f64,
    pub iw_scale: SpdMatrix,
    pub dirichlet_a: Vec<f64>,
}

impl PriorSpec {
    /// Fills unset hyperparameters. `complete_case_cov` is used for `S₀`
    /// when no scale was given.
    pub fn resolve(&self, spec: &ModelSpec, complete_case_cov: &SpdMatrix) -> Result<Priors> {
        if !(self.ig_shape > 0.0) || !(self.ig_scale > 0.0) {
            return Err(Error::Config(format!(
                "inverse-gamma prior needs positive shape and scale, got ({}, {})",
                self.ig_shape, self.ig_scale
            )));
        }
        let p = spec.p();
        let iw_dof = self.iw_dof.unwrap_or(p as f64 + 2.0);
        if !(iw_dof > p as f64 - 1.0) {
            return Err(Error::Config(format!(
                "inverse-Wishart prior dof {iw_dof} must exceed p - 1 = {}",
                p as f64 - 1.0
            )));
        }
        let iw_scale = match &self.iw_scale {
            Some(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::Config(format!("iw_scale must be {p}x{p}")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                SpdMatrix::new(DMatrix::from_row_slice(p, p, &flat))
                    .map_err(|e| Error::Config(format!("iw_scale: {e}")))?
            }
            None => complete_case_cov.clone(),
        };
        let n_cells = spec.n_cells();
        let dirichlet_a = match &self.dirichlet_a {
            Some(a) => {
                if a.len() != n_cells || a.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::Config(format!(
                        "dirichlet_a must have {n_cells} positive entries"
                    )));
                }
                a.clone()
            }
            None => vec![1.0; n_cells],
        };
        Ok(Priors {
            ig_shape: self.ig_shape,
            ig_scale: self.ig_scale,
            iw_dof,
            iw_scale,
            dirichlet_a,
        })
    }
}

/// Dimensions, names, and interaction structure of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Names of the `p` cluster-level continuous covariates.
    pub continuous: Vec<String>,
    /// The `q` cluster-level categorical covariates.
    pub categorical: Vec<CategoricalVar>,
    /// Names of the fully observed level-1 covariates.
    pub level1: Vec<String>,
    /// `p × q`; `true` where the interaction of continuous `k` with the
    /// dummies of categorical `v` is estimated.
    pub interaction_mask: Vec<Vec<bool>>,
    #[serde(default)]
    pub priors: PriorSpec,
}

impl ModelSpec {
    pub fn new(
        continuous: Vec<String>,
        categorical: Vec<CategoricalVar>,
        level1: Vec<String>,
        interaction_mask: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            continuous,
            categorical,
            level1,
            interaction_mask,
            priors: PriorSpec::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Auto-named spec: continuous `C1..Cp`, categorical `D1..Dq` with levels
    /// `0..L`, level-1 `X1..`.
    pub fn with_counts(
        p: usize,
        levels: &[usize],
        x_dim: usize,
        interaction_mask: Vec<Vec<bool>>,
    ) -> Result<Self> {
        Self::new(
            (1..=p).map(|k| format!("C{k}")).collect(),
            levels
                .iter()
                .enumerate()
                .map(|(v, &l)| CategoricalVar::numbered(format!("D{}", v + 1), l))
                .collect(),
            (1..=x_dim).map(|k| format!("X{k}")).collect(),
            interaction_mask,
        )
    }

    pub fn with_priors(mut self, priors: PriorSpec) -> Self {
        self.priors = priors;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.categorical.is_empty() {
            return Err(Error::Config("at least one categorical covariate is required".into()));
        }
        if self.continuous.is_empty() {
            return Err(Error::Config("at least one continuous covariate is required".into()));
        }
        for var in &self.categorical {
            if var.levels.len() < 2 {
                return Err(Error::Config(format!(
                    "categorical '{}' needs at least 2 levels",
                    var.name
                )));
            }
        }
        if self.interaction_mask.len() != self.p()
            || self.interaction_mask.iter().any(|r| r.len() != self.q())
        {
            return Err(Error::Config(format!(
                "interaction mask must be {}x{}",
                self.p(),
                self.q()
            )));
        }
        let mut names: Vec<&str> = self
            .continuous
            .iter()
            .chain(self.level1.iter())
            .map(String::as_str)
            .chain(self.categorical.iter().map(|v| v.name.as_str()))
            .collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate covariate name '{}'", w[0])));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.continuous.len()
    }

    pub fn q(&self) -> usize {
        self.categorical.len()
    }

    pub fn x_dim(&self) -> usize {
        self.level1.len()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.categorical.iter().map(|v| v.levels.len()).collect()
    }

    /// Number of cells in the contingency table, `Π L_k`.
    pub fn n_cells(&self) -> usize {
        self.categorical.iter().map(|v| v.levels.len()).product()
    }

    pub fn cell_index(&self) -> CellIndex {
        CellIndex::new(&self.levels()).expect("levels validated")
    }

    pub fn layout(&self) -> DesignLayout {
        DesignLayout::new(self)
    }
}
