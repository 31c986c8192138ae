//! Comparison methods: SPC (L1-constrained rank-1 matrix decomposition),
//! TPower (truncated power iteration) and a rifle-style truncated
//! Rayleigh-quotient ascent.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};

use crate::component::{Method, SparseComponent};
use crate::eespca::{deflate_components, eespca_first_pc};
use crate::error::{Error, Result};
use crate::linalg::{l2_norm, power_iteration, scatter_covariance, DataMatrix, PowerOptions, SymMatrix};

/// `sign(x)·max(0, |x| − delta)` entrywise.
pub fn soft_threshold(x: ArrayView1<f64>, delta: f64) -> Array1<f64> {
    x.mapv(|v| v.signum() * (v.abs() - delta).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpcParams {
    /// Bound on the L1 norm of the unit-norm loadings, in `[1, √p]`.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SpcParams {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITER: usize = 200;

    pub fn new(c: f64) -> Self {
        Self {
            c,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let upper = (p as f64).sqrt();
        if !(self.c >= 1.0 - 1e-12 && self.c <= upper + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "L1 bound {} outside [1, {upper}]",
                self.c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardinalityParams {
    /// Maximum number of nonzero loadings.
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl CardinalityParams {
    pub fn new(k: usize) -> Self {
        let power = PowerOptions::default();
        Self {
            k,
            tol: power.tol,
            max_iter: power.max_iter,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.k == 0 || self.k > p {
            return Err(Error::InvalidParameter(format!(
                "cardinality {} outside [1, {p}]",
                self.k
            )));
        }
        Ok(())
    }
}

fn l1_over_l2(v: &Array1<f64>) -> Option<f64> {
    let l2 = l2_norm(v.view());
    if l2 == 0.0 {
        None
    } else {
        Some(v.iter().map(|x| x.abs()).sum::<f64>() / l2)
    }
}

/// Smallest `delta ≥ 0` such that the normalized soft-thresholded vector
/// `S(a, delta)/‖S(a, delta)‖₂` has L1 norm at most `c`, found by bisection
/// on the monotone map `delta ↦ ‖S‖₁/‖S‖₂`.
pub fn l1_threshold(a: ArrayView1<f64>, c: f64) -> f64 {
    let top = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let feasible = |delta: f64| match l1_over_l2(&soft_threshold(a, delta)) {
        Some(r) => r <= c,
        None => true,
    };
    if feasible(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        if hi - lo <= 1e-13 * top {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn largest_entry_only(a: &Array1<f64>) -> Array1<f64> {
    let mut best = 0;
    for (i, x) in a.iter().enumerate() {
        if x.abs() > a[best].abs() {
            best = i;
        }
    }
    let mut out = Array1::zeros(a.len());
    out[best] = a[best].signum();
    out
}

/// Sparse first component by alternating `u ← Xv/‖Xv‖`,
/// `v ← S(Xᵀu, Δ)/‖S(Xᵀu, Δ)‖` with `Δ` the smallest threshold meeting the
/// L1 bound. Starts from the leading right singular vector of `x`.
pub fn spc_first_pc(x: &DataMatrix, params: &SpcParams) -> Result<SparseComponent> {
    let cov = scatter_covariance(x)?;
    let start = power_iteration(&cov, None, &PowerOptions::default())?.vector;
    spc_first_pc_from(x, params, start.view())
}

/// [`spc_first_pc`] with a caller-supplied starting loadings vector.
pub fn spc_first_pc_from(
    x: &DataMatrix,
    params: &SpcParams,
    v0: ArrayView1<f64>,
) -> Result<SparseComponent> {
    let started = Instant::now();
    let p = x.p();
    params.validate(p)?;
    if v0.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: v0.len(),
        });
    }
    let xv = x.values();
    let mut v = v0.to_owned();
    let norm = l2_norm(v.view());
    if norm == 0.0 {
        return Err(Error::PowerIterationDegenerate);
    }
    v /= norm;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let mut u = xv.dot(&v);
        let un = l2_norm(u.view());
        if un == 0.0 {
            return Err(Error::PowerIterationDegenerate);
        }
        u /= un;
        let a = xv.t().dot(&u);
        let delta = l1_threshold(a.view(), params.c);
        let mut next = soft_threshold(a.view(), delta);
        let nn = l2_norm(next.view());
        if nn == 0.0 {
            next = largest_entry_only(&a);
        } else {
            next /= nn;
        }
        let change = l2_norm((&next - &v).view());
        v = next;
        if change <= params.tol {
            converged = true;
            break;
        }
    }
    let scores = xv.dot(&v);
    let eigenvalue = scores.dot(&scores) / (x.n() - 1) as f64;
    let mut c = SparseComponent::with_eigenvalue(v, eigenvalue, Method::Spc, Some(params.c));
    c.iterations = iterations;
    c.converged = converged;
    c.runtime = started.elapsed().as_secs_f64();
    Ok(c)
}

/// Keeps the `k` largest-magnitude entries of `v`, breaking ties toward the
/// lower index, and zeroes the rest.
pub fn truncate_k(v: ArrayView1<f64>, k: usize) -> Array1<f64> {
    if k >= v.len() {
        return v.to_owned();
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut out = Array1::zeros(v.len());
    for &i in &order[..k] {
        out[i] = v[i];
    }
    out
}

fn dense_start(cov: &SymMatrix) -> Result<Array1<f64>> {
    Ok(power_iteration(cov, None, &PowerOptions::default())?.vector)
}

/// Truncated power iteration for the k-sparse leading eigenvector. Without
/// `v0` the iteration starts from the plain power-iteration eigenvector.
pub fn tpower_first_pc(
    cov: &SymMatrix,
    params: &CardinalityParams,
    v0: Option<ArrayView1<f64>>,
) -> Result<SparseComponent> {
    tpower_traced(cov, params, v0, None)
}

pub(crate) fn tpower_traced(
    cov: &SymMatrix,
    params: &CardinalityParams,
    v0: Option<ArrayView1<f64>>,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SparseComponent> {
    let started = Instant::now();
    let p = cov.dim();
    params.validate(p)?;
    let mut v = match v0 {
        Some(v) if v.len() != p => {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: v.len(),
            })
        }
        Some(v) => v.to_owned(),
        None => dense_start(cov)?,
    };
    let norm = l2_norm(v.view());
    if norm == 0.0 {
        return Err(Error::PowerIterationDegenerate);
    }
    v /= norm;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let mut next = truncate_k(cov.matvec(v.view()).view(), params.k);
        let nn = l2_norm(next.view());
        if nn == 0.0 || !nn.is_finite() {
            return Err(Error::ZeroAfterTruncation { k: params.k });
        }
        next /= nn;
        if next.dot(&v) < 0.0 {
            next.mapv_inplace(|x| -x);
        }
        let change = l2_norm((&next - &v).view());
        v = next;
        if let Some(t) = trace.as_deref_mut() {
            t.push(cov.quadratic_form(v.view()));
        }
        if change <= params.tol {
            converged = true;
            break;
        }
    }
    let mut c = SparseComponent::from_unit_loadings(v, cov, Method::TPower, Some(params.k as f64));
    c.iterations = iterations;
    c.converged = converged;
    c.runtime = started.elapsed().as_secs_f64();
    Ok(c)
}

/// Default ascent step for [`rifle_first_pc`]: `0.01·p`.
pub fn default_rifle_step(p: usize) -> f64 {
    0.01 * p as f64
}

/// Truncated Rayleigh-quotient ascent with `B = I`:
/// `v ← normalize(truncate_k((I + η·Σ/ρ)v))`, `ρ = vᵀΣv`. The step `η` starts
/// at [`default_rifle_step`] and is halved whenever an update would lower the
/// Rayleigh quotient.
pub fn rifle_first_pc(
    cov: &SymMatrix,
    params: &CardinalityParams,
    v0: ArrayView1<f64>,
) -> Result<SparseComponent> {
    rifle_first_pc_with_step(cov, params, v0, default_rifle_step(cov.dim()))
}

pub fn rifle_first_pc_with_step(
    cov: &SymMatrix,
    params: &CardinalityParams,
    v0: ArrayView1<f64>,
    step: f64,
) -> Result<SparseComponent> {
    let started = Instant::now();
    let p = cov.dim();
    params.validate(p)?;
    if v0.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: v0.len(),
        });
    }
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidParameter(format!("rifle step {step} must be positive")));
    }
    let mut v = v0.to_owned();
    let norm = l2_norm(v.view());
    if norm == 0.0 {
        return Err(Error::PowerIterationDegenerate);
    }
    v /= norm;
    let mut eta = step;
    let min_eta = step * 1e-10;
    let mut rho = cov.quadratic_form(v.view());
    let mut converged = false;
    let mut iterations = 0;
    let mut truncated_once = false;
    while iterations < params.max_iter {
        iterations += 1;
        if rho.is_nan() || rho <= 0.0 {
            // Rayleigh quotient is zero: the ascent direction is undefined.
            return Err(Error::ZeroAfterTruncation { k: params.k });
        }
        let av = cov.matvec(v.view());
        let mut next = truncate_k((&v + &(av * (eta / rho))).view(), params.k);
        let nn = l2_norm(next.view());
        if nn == 0.0 || !nn.is_finite() {
            return Err(Error::ZeroAfterTruncation { k: params.k });
        }
        next /= nn;
        if next.dot(&v) < 0.0 {
            next.mapv_inplace(|x| -x);
        }
        let next_rho = cov.quadratic_form(next.view());
        // The first truncation of a dense start may lower the quotient; only
        // later steps are safeguarded.
        if truncated_once && next_rho < rho - 1e-12 * rho.abs() {
            eta *= 0.5;
            if eta < min_eta {
                // No ascent step remains: `v` is a fixed point.
                converged = true;
                break;
            }
            continue;
        }
        truncated_once = true;
        let change = l2_norm((&next - &v).view());
        v = next;
        rho = next_rho;
        if change <= params.tol {
            converged = true;
            break;
        }
    }
    let mut c = SparseComponent::from_unit_loadings(v, cov, Method::Rifle, Some(params.k as f64));
    c.iterations = iterations;
    c.converged = converged;
    c.runtime = started.elapsed().as_secs_f64();
    Ok(c)
}

/// How to fit one component; used by deflation and cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstPcFit {
    Pca(PowerOptions),
    Eespca(PowerOptions),
    Spc(SpcParams),
    TPower(CardinalityParams),
    Rifle(CardinalityParams),
}

impl FirstPcFit {
    pub fn method(&self) -> Method {
        match self {
            FirstPcFit::Pca(_) => Method::Pca,
            FirstPcFit::Eespca(_) => Method::Eespca,
            FirstPcFit::Spc(_) => Method::Spc,
            FirstPcFit::TPower(_) => Method::TPower,
            FirstPcFit::Rifle(_) => Method::Rifle,
        }
    }

    /// Fits the first component of `x`. Covariance-based methods use
    /// `XᵀX/(n−1)` on `x` as given.
    pub fn fit(&self, x: &DataMatrix) -> Result<SparseComponent> {
        match self {
            FirstPcFit::Spc(params) => spc_first_pc(x, params),
            other => other.fit_covariance(&scatter_covariance(x)?),
        }
    }

    fn fit_covariance(&self, cov: &SymMatrix) -> Result<SparseComponent> {
        match self {
            FirstPcFit::Pca(opts) => pca_first_pc(cov, opts),
            FirstPcFit::Eespca(opts) => eespca_first_pc(cov, opts),
            FirstPcFit::TPower(params) => tpower_first_pc(cov, params, None),
            FirstPcFit::Rifle(params) => {
                let start = dense_start(cov)?;
                rifle_first_pc(cov, params, start.view())
            }
            FirstPcFit::Spc(_) => unreachable!("SPC is fitted on the data matrix"),
        }
    }
}

/// Dense leading eigenvector as a component (every loading nonzero).
pub fn pca_first_pc(cov: &SymMatrix, opts: &PowerOptions) -> Result<SparseComponent> {
    let started = Instant::now();
    let pair = power_iteration(cov, None, opts)?;
    let mut c = SparseComponent::with_eigenvalue(pair.vector, pair.value, Method::Pca, None);
    c.iterations = pair.iterations;
    c.converged = pair.converged;
    c.runtime = started.elapsed().as_secs_f64();
    Ok(c)
}

/// One component per entry of `fits`, each computed on the rank-1 residual
/// left by the previous ones.
pub fn multi_pc(x: &DataMatrix, fits: &[FirstPcFit]) -> Result<Vec<SparseComponent>> {
    if !x.is_centered() {
        return Err(Error::NotCentered);
    }
    deflate_components(x, fits.len(), |residual, index| fits[index].fit(residual))
}
