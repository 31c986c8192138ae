//! Sparse principal components from eigenvalue-ratio truncation.
//!
//! The leading eigenvector `v₁` of the covariance is rescaled entrywise by
//! the ratio between the approximate loading `sqrt(1 − λ₁(Σ_j)/λ₁(Σ))` and
//! `|v₁_j|`. Variables carrying true signal keep ratios near 1 while noise
//! variables are shrunk harder, so after renormalization a fixed threshold of
//! `1/√p` (the entry size of a uniform unit vector) separates them. No tuning
//! parameter or cross-validation is involved.

use std::time::Instant;

use ndarray::Array1;

use crate::component::{Method, SparseComponent};
use crate::eevi::{
    approx_squared_loadings, loading_ratios, submatrix_top_eigenvalues, LoadingRatios,
    SquaredLoadings,
};
use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_sq, l2_norm, power_iteration, rank1_residual, sample_covariance, DataMatrix,
    EigenPair, PowerOptions, SymMatrix,
};

/// A residual whose squared Frobenius norm falls below this fraction of the
/// original is treated as exhausted.
pub const RANK_EXHAUSTION_TOL: f64 = 1e-20;

/// Intermediate quantities of a single first-component fit.
#[derive(Debug, Clone)]
pub struct EespcaDetails {
    pub leading: EigenPair,
    pub sub_eigenvalues: Vec<f64>,
    pub approx: SquaredLoadings,
    pub ratios: LoadingRatios,
    /// Ratio-scaled and renormalized loadings, before truncation.
    pub scaled: Array1<f64>,
    pub threshold: f64,
}

/// Sparse first principal component of `cov`.
pub fn eespca_first_pc(cov: &SymMatrix, opts: &PowerOptions) -> Result<SparseComponent> {
    eespca_first_pc_detailed(cov, opts).map(|(c, _)| c)
}

pub fn eespca_first_pc_detailed(
    cov: &SymMatrix,
    opts: &PowerOptions,
) -> Result<(SparseComponent, EespcaDetails)> {
    let started = Instant::now();
    let p = cov.dim();
    if p < 2 {
        return Err(Error::EmptyMatrix { n: p, p });
    }
    let leading = power_iteration(cov, None, opts)?;
    if l2_norm(leading.vector.view()) == 0.0 {
        return Err(Error::PowerIterationDegenerate);
    }
    let subs = submatrix_top_eigenvalues(cov, leading.vector.view(), opts, false)?;
    let sub_eigenvalues: Vec<f64> = subs.iter().map(|s| s.value).collect();
    let approx = approx_squared_loadings(cov, leading.value, &sub_eigenvalues)?;
    let ratios = loading_ratios(&approx, leading.vector.view());

    let mut scaled = &ratios.values * &leading.vector;
    let norm = l2_norm(scaled.view());
    if norm > 0.0 {
        scaled /= norm;
    } else {
        // Every ratio vanished; fall back to the dense eigenvector so the
        // empty-support guard below keeps its largest entry.
        scaled = leading.vector.clone();
    }

    let threshold = 1.0 / (p as f64).sqrt();
    let mut sparse = scaled.mapv(|x| if x.abs() < threshold { 0.0 } else { x });
    if sparse.iter().all(|&x| x == 0.0) {
        let keep = argmax_abs(&scaled);
        sparse[keep] = scaled[keep];
    }
    let norm = l2_norm(sparse.view());
    sparse /= norm;

    let mut component = SparseComponent::from_unit_loadings(sparse, cov, Method::Eespca, None);
    component.iterations = leading.iterations + subs.iter().map(|s| s.iterations).sum::<usize>();
    component.converged = leading.converged && subs.iter().all(|s| s.converged);
    component.runtime = started.elapsed().as_secs_f64();
    Ok((
        component,
        EespcaDetails {
            leading,
            sub_eigenvalues,
            approx,
            ratios,
            scaled,
            threshold,
        },
    ))
}

fn argmax_abs(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Runs `fit` on successive rank-1 residuals of `x`, one call per component.
/// `fit` receives the current residual and the component index.
pub fn deflate_components<F>(x: &DataMatrix, k: usize, mut fit: F) -> Result<Vec<SparseComponent>>
where
    F: FnMut(&DataMatrix, usize) -> Result<SparseComponent>,
{
    if k == 0 {
        return Err(Error::InvalidParameter(
            "at least one component must be requested".into(),
        ));
    }
    let available = (x.n().saturating_sub(1)).min(x.p());
    if k > available {
        return Err(Error::RankExhausted {
            produced: available,
            requested: k,
        });
    }
    let total = frobenius_sq(x);
    let mut residual = x.clone();
    let mut components = Vec::with_capacity(k);
    for index in 0..k {
        if frobenius_sq(&residual) <= RANK_EXHAUSTION_TOL * total || total == 0.0 {
            return Err(Error::RankExhausted {
                produced: index,
                requested: k,
            });
        }
        let component = fit(&residual, index)?;
        residual = rank1_residual(&residual, component.loadings.view())?;
        components.push(component);
    }
    Ok(components)
}

/// `k` sparse components by repeated deflation of a centered `x`. The
/// components are not orthogonal in general.
pub fn eespca_multi(x: &DataMatrix, k: usize, opts: &PowerOptions) -> Result<Vec<SparseComponent>> {
    if !x.is_centered() {
        return Err(Error::NotCentered);
    }
    deflate_components(x, k, |residual, _| {
        let cov = sample_covariance(residual)?;
        eespca_first_pc(&cov, opts)
    })
}

/// Squared Frobenius norm left after sequentially removing the rank-1
/// reconstruction of each component from `x`.
pub fn reconstruction_error(x: &DataMatrix, components: &[SparseComponent]) -> f64 {
    let mut residual = x.values().clone();
    for c in components {
        let v = c.loadings.view();
        let scores = residual.dot(&v);
        for (mut row, s) in residual.rows_mut().into_iter().zip(scores.iter()) {
            row.scaled_add(-s, &v);
        }
    }
    residual.iter().map(|x| x * x).sum()
}
