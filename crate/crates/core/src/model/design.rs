//! Column layout of the regression design row
//! `[1, Cᵀ, dummy(D)ᵀ, Xᵀ, dummy(D)ᵀ ⊗ Cᵀ]`.
//!
//! Categorical covariates enter as reference-coded dummies (level 0 dropped).
//! The interaction block pairs every dummy with every continuous covariate in
//! Kronecker order (dummy-major), keeping only the pairs the interaction mask
//! allows.

use super::spec::ModelSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignLayout {
    p: usize,
    x_dim: usize,
    /// First dummy column of each categorical variable, relative to the dummy block.
    dummy_offset: Vec<usize>,
    n_dummies: usize,
    /// Retained interaction columns as `(dummy, continuous)` pairs.
    interactions: Vec<(usize, usize)>,
    names: Vec<String>,
    dummy_names: Vec<String>,
}

impl DesignLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let p = spec.p();
        let mut dummy_offset = Vec::with_capacity(spec.q());
        let mut dummy_var = Vec::new();
        let mut dummy_names = Vec::new();
        for (v, var) in spec.categorical.iter().enumerate() {
            dummy_offset.push(dummy_var.len());
            for label in &var.levels[1..] {
                dummy_var.push(v);
                dummy_names.push(format!("{}[{}]", var.name, label));
            }
        }
        let n_dummies = dummy_var.len();
        let mut interactions = Vec::new();
        for (a, &v) in dummy_var.iter().enumerate() {
            for k in 0..p {
                if spec.interaction_mask[k][v] {
                    interactions.push((a, k));
                }
            }
        }
        let mut names = vec!["(Intercept)".to_string()];
        names.extend(spec.continuous.iter().cloned());
        names.extend(dummy_names.iter().cloned());
        names.extend(spec.level1.iter().cloned());
        for &(a, k) in &interactions {
            names.push(format!("{}:{}", spec.continuous[k], dummy_names[a]));
        }
        DesignLayout {
            p,
            x_dim: spec.x_dim(),
            dummy_offset,
            n_dummies,
            interactions,
            names,
            dummy_names,
        }
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dummy_names(&self) -> &[String] {
        &self.dummy_names
    }

    pub fn n_dummies(&self) -> usize {
        self.n_dummies
    }

    pub fn interactions(&self) -> &[(usize, usize)] {
        &self.interactions
    }

    pub fn continuous_col(&self, k: usize) -> usize {
        1 + k
    }

    pub fn dummy_col(&self, a: usize) -> usize {
        1 + self.p + a
    }

    pub fn x_col(&self, m: usize) -> usize {
        1 + self.p + self.n_dummies + m
    }

    pub fn interaction_col(&self, idx: usize) -> usize {
        1 + self.p + self.n_dummies + self.x_dim + idx
    }

    /// Width of the covariate-model row `[1, dummy(D)ᵀ]`.
    pub fn covariate_width(&self) -> usize {
        1 + self.n_dummies
    }

    /// Reference-coded dummies of a level vector.
    pub fn dummies_into(&self, d: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (v, &level) in d.iter().enumerate() {
            if level > 0 {
                out[self.dummy_offset[v] + level - 1] = 1.0;
            }
        }
    }

    pub fn dummies(&self, d: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dummies];
        self.dummies_into(d, &mut out);
        out
    }

    /// Writes the full design row for one observation.
    pub fn fill_row(&self, c: &[f64], dummies: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.width());
        out[0] = 1.0;
        out[1..=self.p].copy_from_slice(c);
        let d0 = 1 + self.p;
        out[d0..d0 + self.n_dummies].copy_from_slice(dummies);
        let x0 = d0 + self.n_dummies;
        out[x0..x0 + self.x_dim].copy_from_slice(x);
        let i0 = x0 + self.x_dim;
        for (slot, &(a, k)) in out[i0..].iter_mut().zip(&self.interactions) {
            *slot = dummies[a] * c[k];
        }
    }

    /// Contribution of the cluster-level columns (everything except X) to
    /// the linear predictor.
    pub fn cluster_linear_part(&self, beta: &[f64], c: &[f64], dummies: &[f64]) -> f64 {
        let mut acc = beta[0];
        for k in 0..self.p {
            acc += beta[1 + k] * c[k];
        }
        let d0 = 1 + self.p;
        for a in 0..self.n_dummies {
            acc += beta[d0 + a] * dummies[a];
        }
        let i0 = d0 + self.n_dummies + self.x_dim;
        for (idx, &(a, k)) in self.interactions.iter().enumerate() {
            acc += beta[i0 + idx] * dummies[a] * c[k];
        }
        acc
    }

    /// Contribution of the level-1 columns to the linear predictor.
    pub fn level1_linear_part(&self, beta: &[f64], x: &[f64]) -> f64 {
        let x0 = 1 + self.p + self.n_dummies;
        x.iter().zip(&beta[x0..x0 + self.x_dim]).map(|(a, b)| a * b).sum()
    }

    /// Total slope of the linear predictor in continuous covariate `k`:
    /// its main effect plus the interactions active under `dummies`.
    pub fn slope_in_continuous(&self, k: usize, beta: &[f64], dummies: &[f64]) -> f64 {
        let i0 = 1 + self.p + self.n_dummies + self.x_dim;
        let mut slope = beta[1 + k];
        for (idx, &(a, kk)) in self.interactions.iter().enumerate() {
            if kk == k {
                slope += beta[i0 + idx] * dummies[a];
            }
        }
        slope
    }
}

/// Design row `[1, Cᵀ, dummy(D)ᵀ, Xᵀ, dummy(D)ᵀ ⊗ Cᵀ]` with masked interaction
/// columns removed.
pub fn build_design_row(c: &[f64], d_levels: &[usize], x: &[f64], spec: &ModelSpec) -> Vec<f64> {
    let layout = spec.layout();
    let dummies = layout.dummies(d_levels);
    let mut row = vec![0.0; layout.width()];
    layout.fill_row(c, &dummies, x, &mut row);
    row
}
