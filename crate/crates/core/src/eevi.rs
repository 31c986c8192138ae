//! Squared eigenvector loadings from eigenvalues.
//!
//! For a symmetric `A` with eigenvalues `λ_k(A)` and principal submatrices
//! `M_j` (row and column `j` removed), the squared `j`-th entry of the unit
//! eigenvector `v_i` satisfies
//!
//! ```text
//! (v_i)_j² = Π_k (λ_i(A) − λ_k(M_j)) / Π_{k≠i} (λ_i(A) − λ_k(A))
//! ```
//!
//! [`exact_identity_squared_loadings`] evaluates this with a dense solver and
//! serves as an oracle. The sparse-PCA path only needs the leading
//! eigenvalues: keeping the `k = 1` factor of the numerator and dropping the
//! smallest eigenvalue of `A` from the denominator gives
//! `1 − λ_1(M_j) / λ_1(A)`, which [`approx_squared_loadings`] computes.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    default_start, exact_symmetric_eigen, l2_norm, principal_submatrix, submatrix_power_iteration,
    PowerOptions, SymMatrix,
};

/// Below this squared sample loading the approximate-to-sample ratio is
/// defined as 0.
pub const RATIO_DENOMINATOR_FLOOR: f64 = 1e-12;

/// Minimum separation between the target eigenvalue and the rest of the
/// spectrum for the exact identity to be evaluated.
pub const SPECTRAL_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadingKind {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquaredLoadings {
    pub values: Array1<f64>,
    pub kind: LoadingKind,
}

/// Elementwise `sqrt(approx_j / v_j²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingRatios {
    pub values: Array1<f64>,
}

/// Squared entries of the `i`-th eigenvector (descending eigenvalue order)
/// computed from eigenvalues of `a` and of each principal submatrix.
pub fn exact_identity_squared_loadings(a: &SymMatrix, i: usize) -> Result<SquaredLoadings> {
    let p = a.dim();
    if p < 2 {
        return Err(Error::EmptyMatrix { n: p, p });
    }
    let spectrum: Vec<f64> = exact_symmetric_eigen(a)?.iter().map(|e| e.value).collect();
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    let target = spectrum[i];
    let gap = spectrum
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, &l)| (target - l).abs())
        .fold(f64::INFINITY, f64::min);
    if gap <= SPECTRAL_GAP_TOL {
        return Err(Error::DegenerateSpectrum { index: i, gap });
    }
    let denominator: f64 = spectrum
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, &l)| target - l)
        .product();

    let mut values = Array1::zeros(p);
    for j in 0..p {
        let sub = principal_submatrix(a, j)?;
        let numerator: f64 = exact_symmetric_eigen(&sub)?
            .iter()
            .map(|e| target - e.value)
            .product();
        values[j] = (numerator / denominator).clamp(0.0, 1.0);
    }
    Ok(SquaredLoadings {
        values,
        kind: LoadingKind::Exact,
    })
}

/// `1 − sub_lambda1[j] / lambda1` before clamping. Non-negative up to
/// rounding whenever `sub_lambda1` are true leading submatrix eigenvalues of
/// a matrix whose leading eigenvalue is `lambda1` (Cauchy interlacing).
pub fn approx_squared_loadings_unclamped(lambda1: f64, sub_lambda1: &[f64]) -> Array1<f64> {
    sub_lambda1.iter().map(|&s| 1.0 - s / lambda1).collect()
}

/// Approximate squared leading-eigenvector loadings `max(0, 1 − λ_1(M_j)/λ_1(A))`.
pub fn approx_squared_loadings(
    a: &SymMatrix,
    lambda1: f64,
    sub_lambda1: &[f64],
) -> Result<SquaredLoadings> {
    if sub_lambda1.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: sub_lambda1.len(),
        });
    }
    if lambda1.is_nan() || lambda1 <= 0.0 {
        return Err(Error::NonPositiveEigenvalue(lambda1));
    }
    let values = approx_squared_loadings_unclamped(lambda1, sub_lambda1).mapv(|x| x.clamp(0.0, 1.0));
    Ok(SquaredLoadings {
        values,
        kind: LoadingKind::Approximate,
    })
}

/// Ratio of approximate to sample loading magnitudes. Entries whose squared
/// sample loading is below [`RATIO_DENOMINATOR_FLOOR`] get ratio 0.
pub fn loading_ratios(approx: &SquaredLoadings, v1: ArrayView1<f64>) -> LoadingRatios {
    debug_assert_eq!(approx.kind, LoadingKind::Approximate);
    let values = approx
        .values
        .iter()
        .zip(v1.iter())
        .map(|(&a, &v)| {
            let v2 = v * v;
            if v2 < RATIO_DENOMINATOR_FLOOR {
                0.0
            } else {
                (a / v2).sqrt()
            }
        })
        .collect();
    LoadingRatios { values }
}

/// Columns advanced together by one matrix-matrix product.
const BATCH: usize = 64;

/// Leading eigenvalue of every principal submatrix of `a`, by power
/// iteration seeded with `v1` minus the removed coordinate.
///
/// The iterations for up to [`BATCH`] submatrices advance together through
/// one product of `a` with a block of iterates; each column is masked and
/// checked for convergence on its own, so the result matches
/// [`submatrix_power_iteration`] run index by index. Indices the batch cannot
/// settle (zero submatrix, annihilated or non-converged iterate, negative
/// Rayleigh quotient) are rerun through [`submatrix_power_iteration`].
///
/// Batches are fixed by index, so the parallel and sequential paths return
/// bit-identical results.
pub fn submatrix_top_eigenvalues(
    a: &SymMatrix,
    v1: ArrayView1<f64>,
    opts: &PowerOptions,
    parallel: bool,
) -> Result<Vec<SubmatrixEigenvalue>> {
    let p = a.dim();
    if v1.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: v1.len(),
        });
    }
    if p < 2 {
        return Err(Error::EmptyMatrix { n: p, p });
    }
    let row_nonzeros: Vec<usize> = a
        .values()
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|&&x| x != 0.0).count())
        .collect();
    let total: usize = row_nonzeros.iter().sum();
    // Removing row and column j leaves a zero matrix iff every nonzero entry
    // lies in row j or column j.
    let sub_is_zero = |j: usize| {
        let in_cross = 2 * row_nonzeros[j] - usize::from(a.values()[[j, j]] != 0.0);
        total == in_cross
    };
    let indices: Vec<usize> = (0..p).collect();
    let chunks: Vec<&[usize]> = indices.chunks(BATCH).collect();
    let run = |cols: &&[usize]| batched_submatrix_eigenvalues(a, v1, cols, opts, &sub_is_zero);
    let parts: Vec<Vec<SubmatrixEigenvalue>> = if parallel {
        chunks.par_iter().map(run).collect::<Result<_>>()?
    } else {
        chunks.iter().map(run).collect::<Result<_>>()?
    };
    Ok(parts.into_iter().flatten().collect())
}

fn batched_submatrix_eigenvalues(
    a: &SymMatrix,
    v1: ArrayView1<f64>,
    cols: &[usize],
    opts: &PowerOptions,
    sub_is_zero: &dyn Fn(usize) -> bool,
) -> Result<Vec<SubmatrixEigenvalue>> {
    let p = a.dim();
    let m = cols.len();
    let mut scalar = vec![false; m];
    let mut settled_at = vec![0usize; m];
    // Iterates are stored as rows; `a` is symmetric, so `V·A` advances them.
    let mut v = Array2::<f64>::zeros((m, p));
    for (c, &j) in cols.iter().enumerate() {
        if sub_is_zero(j) {
            scalar[c] = true;
            continue;
        }
        let mut start = v1.to_owned();
        start[j] = 0.0;
        if l2_norm(start.view()) <= f64::EPSILON {
            start = default_start(p);
            start[j] = 0.0;
        }
        let norm = l2_norm(start.view());
        v.row_mut(c).assign(&(start / norm));
    }

    let mut active: Vec<usize> = (0..m).filter(|&c| !scalar[c]).collect();
    let mut iterations = 0;
    while !active.is_empty() && iterations < opts.max_iter {
        iterations += 1;
        let current = v.select(Axis(0), &active);
        let mut w = current.dot(a.values());
        let mut remaining = Vec::with_capacity(active.len());
        for (k, &c) in active.iter().enumerate() {
            let mut row = w.row_mut(k);
            row[cols[c]] = 0.0;
            let norm = l2_norm(row.view());
            if norm == 0.0 || !norm.is_finite() {
                scalar[c] = true;
                continue;
            }
            row /= norm;
            let prev = current.row(k);
            if row.dot(&prev) < 0.0 {
                row.mapv_inplace(|x| -x);
            }
            let change = row
                .iter()
                .zip(prev.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            v.row_mut(c).assign(&row);
            if change <= opts.tol {
                settled_at[c] = iterations;
            } else {
                remaining.push(c);
            }
        }
        active = remaining;
    }
    for &c in &active {
        scalar[c] = true;
    }

    let mut out = Vec::with_capacity(m);
    for (c, &j) in cols.iter().enumerate() {
        if !scalar[c] {
            let row = v.row(c);
            let value = row.dot(&a.values().dot(&row));
            if value >= 0.0 {
                out.push(SubmatrixEigenvalue {
                    value,
                    iterations: settled_at[c],
                    converged: true,
                });
                continue;
            }
        }
        let pair = submatrix_power_iteration(a, j, Some(v1), opts)?;
        out.push(SubmatrixEigenvalue {
            value: pair.value,
            iterations: pair.iterations,
            converged: pair.converged,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubmatrixEigenvalue {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mean_center, power_iteration, sample_covariance, DataMatrix};
    use crate::simulation::block_covariance;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn exact_identity_on_diagonal() {
        let a = SymMatrix::from_diag(&[3.0, 2.0, 1.0]);
        let sq = exact_identity_squared_loadings(&a, 0).unwrap();
        assert_eq!(sq.kind, LoadingKind::Exact);
        assert_eq!(sq.values, array![1.0, 0.0, 0.0]);
        let sq = exact_identity_squared_loadings(&a, 2).unwrap();
        assert_eq!(sq.values, array![0.0, 0.0, 1.0]);
    }

    #[test]
    fn exact_identity_on_2x2() {
        let a = SymMatrix::new(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let sq = exact_identity_squared_loadings(&a, 0).unwrap();
        assert_abs_diff_eq!(sq.values[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(sq.values[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn exact_identity_matches_eigenvectors_6x6() {
        let a = SymMatrix::new(Array2::from_shape_fn((6, 6), |(i, j)| {
            let (lo, hi) = (i.min(j) as f64, i.max(j) as f64);
            (1.3 * lo + 0.7 * hi).sin() + if i == j { i as f64 } else { 0.0 }
        }))
        .unwrap();
        let eig = exact_symmetric_eigen(&a).unwrap();
        for (i, pair) in eig.iter().enumerate() {
            let sq = exact_identity_squared_loadings(&a, i).unwrap();
            for j in 0..6 {
                assert_abs_diff_eq!(sq.values[j], pair.vector[j].powi(2), epsilon = 1e-6);
            }
            assert_abs_diff_eq!(sq.values.sum(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn exact_identity_rejects_repeated_eigenvalues() {
        let err = exact_identity_squared_loadings(&SymMatrix::identity(3), 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum { index: 0, .. }));
        let err = exact_identity_squared_loadings(&SymMatrix::identity(65), 0).unwrap_err();
        assert!(matches!(err, Error::DimensionTooLarge { .. }));
    }

    #[test]
    fn approximation_on_population_block() {
        let sigma = block_covariance(10, 4, 0.5).unwrap();
        let lead = power_iteration(&sigma, None, &PowerOptions::default()).unwrap();
        let sub: Vec<f64> = submatrix_top_eigenvalues(&sigma, lead.vector.view(), &PowerOptions::default(), false)
            .unwrap()
            .iter()
            .map(|s| s.value)
            .collect();
        let approx = approx_squared_loadings(&sigma, lead.value, &sub).unwrap();
        for j in 0..10 {
            let expected = if j < 4 { 0.2 } else { 0.0 };
            assert_abs_diff_eq!(approx.values[j], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn uncorrelated_variable_gets_zero() {
        let a = SymMatrix::new(array![[2.0, 0.3, 0.0], [0.3, 1.0, 0.0], [0.0, 0.0, 0.5]]).unwrap();
        let top = exact_symmetric_eigen(&a).unwrap()[0].value;
        let sub: Vec<f64> = (0..3)
            .map(|j| exact_symmetric_eigen(&principal_submatrix(&a, j).unwrap()).unwrap()[0].value)
            .collect();
        let approx = approx_squared_loadings(&a, top, &sub).unwrap();
        assert_eq!(approx.values[2], 0.0);
    }

    #[test]
    fn approximation_underestimates_2x2() {
        let a = SymMatrix::new(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let approx = approx_squared_loadings(&a, 1.5, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(approx.values[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(approx.values[1], 1.0 / 3.0, epsilon = 1e-15);
        assert!(approx.values.iter().all(|&x| x <= 0.5));
    }

    #[test]
    fn approximation_requires_positive_lambda() {
        let a = SymMatrix::identity(2);
        assert_eq!(
            approx_squared_loadings(&a, 0.0, &[0.0, 0.0]).unwrap_err(),
            Error::NonPositiveEigenvalue(0.0)
        );
        assert!(matches!(
            approx_squared_loadings(&a, 1.0, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ratio_rules() {
        let v = array![0.6, 0.8, 0.0];
        let exact = SquaredLoadings {
            values: v.mapv(|x| x * x),
            kind: LoadingKind::Approximate,
        };
        let r = loading_ratios(&exact, v.view());
        assert_abs_diff_eq!(r.values[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.values[1], 1.0, epsilon = 1e-15);
        assert_eq!(r.values[2], 0.0);

        let zero = SquaredLoadings {
            values: array![0.0, 0.3, 0.1],
            kind: LoadingKind::Approximate,
        };
        assert_eq!(loading_ratios(&zero, v.view()).values[0], 0.0);
    }

    #[test]
    fn batched_submatrix_eigenvalues_match_per_index_runs() {
        let x = DataMatrix::new(Array2::from_shape_fn((90, 70), |(i, j)| {
            ((i * 13 + j * 29) % 37) as f64 / 11.0 + if j < 5 { (i % 7) as f64 } else { 0.0 }
        }))
        .unwrap();
        let cov = sample_covariance(&mean_center(&x).unwrap()).unwrap();
        let zero_cross = SymMatrix::new(array![[1.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let indefinite = SymMatrix::from_diag(&[-3.0, 1.0, 0.5, -0.2]);
        let opts = PowerOptions::default();
        for a in [&cov, &zero_cross, &indefinite] {
            let lead = power_iteration(a, None, &opts).unwrap();
            let batched = submatrix_top_eigenvalues(a, lead.vector.view(), &opts, false).unwrap();
            for (j, b) in batched.iter().enumerate() {
                let single = submatrix_power_iteration(a, j, Some(lead.vector.view()), &opts).unwrap();
                assert_abs_diff_eq!(b.value, single.value, epsilon = 1e-10);
                assert_eq!(b.converged, single.converged);
            }
        }
    }

    #[test]
    fn parallel_submatrix_eigenvalues_are_bit_identical() {
        let x = DataMatrix::new(Array2::from_shape_fn((30, 12), |(i, j)| {
            ((i * 31 + j * 17) % 23) as f64 / 7.0 + if j < 3 { (i % 5) as f64 } else { 0.0 }
        }))
        .unwrap();
        let cov = sample_covariance(&mean_center(&x).unwrap()).unwrap();
        let lead = power_iteration(&cov, None, &PowerOptions::default()).unwrap();
        let seq = submatrix_top_eigenvalues(&cov, lead.vector.view(), &PowerOptions::default(), false).unwrap();
        let par = submatrix_top_eigenvalues(&cov, lead.vector.view(), &PowerOptions::default(), true).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn approximation_bounded_by_exact_on_block_grid() {
        for b in 2..=6 {
            for step in 1..=9 {
                let rho = step as f64 / 10.0;
                let sigma = block_covariance(10, b, rho).unwrap();
                let eig = exact_symmetric_eigen(&sigma).unwrap();
                let exact_sq = eig[0].vector.mapv(|x| x * x);
                let sub: Vec<f64> = (0..10)
                    .map(|j| exact_symmetric_eigen(&principal_submatrix(&sigma, j).unwrap()).unwrap()[0].value)
                    .collect();
                let approx = approx_squared_loadings(&sigma, eig[0].value, &sub).unwrap();
                for j in 0..10 {
                    assert!(approx.values[j] <= exact_sq[j] + 1e-10, "b={b} rho={rho} j={j}");
                    if j >= b {
                        assert_eq!(approx.values[j], 0.0, "b={b} rho={rho} j={j}");
                    }
                }
            }
        }
    }

    fn random_sym(p: usize, vals: &[f64]) -> SymMatrix {
        let mut m = Array2::zeros((p, p));
        let mut k = 0;
        for i in 0..p {
            for j in i..p {
                m[[i, j]] = vals[k];
                m[[j, i]] = vals[k];
                k += 1;
            }
        }
        SymMatrix::new(m).unwrap()
    }

    proptest! {
        #[test]
        fn identity_matches_oracle(
            (p, vals) in (3usize..=8).prop_flat_map(|p| (Just(p), proptest::collection::vec(-1.0f64..1.0, p * (p + 1) / 2)))
        ) {
            let a = random_sym(p, &vals);
            let eig = exact_symmetric_eigen(&a).unwrap();
            let min_gap = eig.windows(2).map(|w| w[0].value - w[1].value).fold(f64::INFINITY, f64::min);
            prop_assume!(min_gap > 1e-4);
            for (i, pair) in eig.iter().enumerate() {
                let sq = exact_identity_squared_loadings(&a, i).unwrap();
                for j in 0..p {
                    prop_assert!((sq.values[j] - pair.vector[j].powi(2)).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn clamping_is_numerical_noise_only(
            (n, p, vals) in (3usize..30, 2usize..10).prop_flat_map(|(n, p)| (Just(n), Just(p), proptest::collection::vec(-3.0f64..3.0, n * p)))
        ) {
            let x = mean_center(&DataMatrix::new(Array2::from_shape_vec((n, p), vals).unwrap()).unwrap()).unwrap();
            let cov = sample_covariance(&x).unwrap();
            prop_assume!(!cov.is_zero());
            let eig = exact_symmetric_eigen(&cov).unwrap();
            prop_assume!(eig[0].value > 1e-8);
            let sub: Vec<f64> = (0..p)
                .map(|j| exact_symmetric_eigen(&principal_submatrix(&cov, j).unwrap()).unwrap()[0].value)
                .collect();
            let raw = approx_squared_loadings_unclamped(eig[0].value, &sub);
            prop_assert!(raw.iter().all(|&x| x >= -1e-8));
        }
    }
}
