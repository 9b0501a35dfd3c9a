//! Seeded random-number source and the samplers used by the Gibbs steps.
//!
//! Parameterizations follow the conditional formulas of the sampler literally:
//!
//! * `X ~ IG(a, s)` means `1/X ~ Gamma(shape a, scale s)`, so the second
//!   argument is the reciprocal of the usual inverse-gamma rate.
//! * `T ~ IW(v, S⁻¹)` takes the *inverse* of the inverse-Wishart scale `S` as
//!   its second argument; `E[T] = S / (v - dim - 1)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Seeded generator bound to one `(seed, stream)` pair.
///
/// ChaCha20 streams are independent key/nonce pairs with a 2^68-byte period
/// each, so sub-streams derived from distinct paths never overlap in practice.
#[derive(Debug)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngHandle {
            seed,
            stream,
            inner,
        }
    }

    /// Handle for a task identified by a path such as `[replication, chain]`.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let stream = path
            .iter()
            .fold(0x5EED_u64, |acc, &tag| splitmix64(acc ^ splitmix64(tag)));
        Self::with_stream(seed, stream)
    }

    /// Child handle of this one, keyed by `tag`.
    pub fn substream(&self, tag: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(tag.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// Symmetric positive-definite matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    /// Validates symmetry (1e-12 relative) and positive definiteness.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return Err(Error::Domain(format!(
                "SPD matrix must be square and non-empty, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let scale = mat.amax().max(f64::MIN_POSITIVE);
        let n = mat.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Domain(format!(
                        "matrix not symmetric at ({i},{j}): {} vs {}",
                        mat[(i, j)],
                        mat[(j, i)]
                    )));
                }
            }
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix has non-finite entries".into()));
        }
        let chol = Cholesky::new(mat.clone())
            .ok_or_else(|| Error::Domain("matrix is not positive definite".into()))?;
        Ok(SpdMatrix { mat, chol })
    }

    /// Averages `mat` with its transpose before validating; for matrices
    /// produced by inversion, whose asymmetry is pure rounding.
    pub fn symmetrized(mat: DMatrix<f64>) -> Result<Self> {
        let sym = (&mat + mat.transpose()) * 0.5;
        Self::new(sym)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Lower-triangular Cholesky factor `L` with `L Lᵀ = self`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        SpdMatrix::symmetrized(self.chol.inverse())
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Result<SpdMatrix> {
        SpdMatrix::new(&self.mat * c)
    }

    /// Log density of `N(mean, self)` at `x`.
    pub fn mvn_log_density(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let diff = x - mean;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has positive diagonal");
        let k = self.dim() as f64;
        -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + self.ln_det() + z.norm_squared())
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn sample_normal(mean: f64, variance: f64, rng: &mut RngHandle) -> Result<f64> {
    check_positive("variance", variance)?;
    if !mean.is_finite() {
        return Err(Error::Domain(format!("normal mean must be finite, got {mean}")));
    }
    Ok(mean + variance.sqrt() * rng.standard_normal())
}

/// Draws `mean + L z` with `L` the Cholesky factor of `cov`.
pub fn sample_mvnormal(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    rng: &mut RngHandle,
) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::Domain(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let z = DVector::from_fn(mean.len(), |_, _| rng.standard_normal());
    Ok(mean + cov.cholesky().l_dirty().lower_triangle() * z)
}

/// Draws `X` with `1/X ~ Gamma(shape, scale_of_reciprocal)`.
pub fn sample_inverse_gamma(
    shape: f64,
    scale_of_reciprocal: f64,
    rng: &mut RngHandle,
) -> Result<f64> {
    check_positive("inverse-gamma shape", shape)?;
    check_positive("inverse-gamma scale", scale_of_reciprocal)?;
    let gamma = Gamma::new(shape, scale_of_reciprocal)
        .map_err(|e| Error::Domain(format!("gamma({shape}, {scale_of_reciprocal}): {e}")))?;
    let g: f64 = gamma.sample(rng);
    if g <= 0.0 {
        return Err(Error::Numerical(format!(
            "gamma draw underflowed to {g} (shape {shape}, scale {scale_of_reciprocal})"
        )));
    }
    Ok(1.0 / g)
}

fn sample_chi_squared(dof: f64, rng: &mut RngHandle) -> Result<f64> {
    let gamma = Gamma::new(0.5 * dof, 2.0)
        .map_err(|e| Error::Domain(format!("chi-squared({dof}): {e}")))?;
    Ok(gamma.sample(rng))
}

/// Draws `T ~ IW(dof, scale_inverse)`, i.e. `T⁻¹ ~ Wishart(dof, scale_inverse)`.
///
/// The Wishart draw uses the Bartlett decomposition. The result is
/// symmetrized exactly.
pub fn sample_inverse_wishart(
    dof: f64,
    scale_inverse: &SpdMatrix,
    rng: &mut RngHandle,
) -> Result<SpdMatrix> {
    let p = scale_inverse.dim();
    if !(dof > p as f64 + 1.0) {
        return Err(Error::Domain(format!(
            "inverse-Wishart dof {dof} must exceed dim + 1 = {}",
            p + 1
        )));
    }
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = sample_chi_squared(dof - i as f64, rng)?.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
    }
    let la = scale_inverse.lower() * a;
    let wishart = &la * la.transpose();
    let wishart = SpdMatrix::symmetrized(wishart)
        .map_err(|e| Error::Numerical(format!("Wishart draw not SPD: {e}")))?;
    wishart
        .inverse()
        .map_err(|e| Error::Numerical(format!("inverse-Wishart draw not SPD: {e}")))
}

pub fn sample_dirichlet(alphas: &[f64], rng: &mut RngHandle) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(Error::Domain("Dirichlet needs at least one component".into()));
    }
    let mut draws = Vec::with_capacity(alphas.len());
    for &a in alphas {
        check_positive("Dirichlet concentration", a)?;
        let gamma = Gamma::new(a, 1.0).map_err(|e| Error::Domain(format!("gamma({a}, 1): {e}")))?;
        draws.push(gamma.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("all Dirichlet gamma draws underflowed".into()));
    }
    draws.iter_mut().for_each(|g| *g /= total);
    Ok(draws)
}

pub fn sample_categorical(probs: &[f64], rng: &mut RngHandle) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::Domain("categorical needs at least one probability".into()));
    }
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Domain(format!("invalid probabilities {probs:?}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
    }
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // rounding at the upper edge: last cell with positive mass
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1))
}
