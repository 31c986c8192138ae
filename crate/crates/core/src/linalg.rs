//! Dense symmetric linear algebra: centering, covariance, power iteration,
//! a cyclic Jacobi eigensolver for small matrices, principal submatrices and
//! rank-1 deflation.

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`exact_symmetric_eigen`].
pub const MAX_EXACT_DIM: usize = 64;

const CENTER_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;
const UNIT_NORM_TOL: f64 = 1e-8;

/// An `n x p` matrix of observations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    centered: bool,
}

impl DataMatrix {
    /// Wraps raw observations. The matrix is flagged as not centered.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, p) = values.dim();
        if n == 0 || p == 0 {
            return Err(Error::EmptyMatrix { n, p });
        }
        Ok(Self {
            values,
            centered: false,
        })
    }

    /// Wraps observations the caller has already centered. Fails with
    /// `NotCentered` if some column mean is not zero relative to the column's
    /// largest magnitude.
    pub fn assume_centered(values: Array2<f64>) -> Result<Self> {
        let mut x = Self::new(values)?;
        if !columns_centered(x.values.view()) {
            return Err(Error::NotCentered);
        }
        x.centered = true;
        Ok(x)
    }

    /// Marks `values` as centered without checking column means. Covariance
    /// routines then work with the raw second-moment matrix `XᵀX/(n−1)`.
    pub fn trusted_centered(values: Array2<f64>) -> Result<Self> {
        let mut x = Self::new(values)?;
        x.centered = true;
        Ok(x)
    }

    pub(crate) fn from_parts(values: Array2<f64>, centered: bool) -> Self {
        Self { values, centered }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Copies the listed rows. The subset is flagged as not centered since a
    /// row subset of centered data generally is not.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        DataMatrix::from_parts(self.values.select(Axis(0), rows), false)
    }
}

fn columns_centered(values: ArrayView2<f64>) -> bool {
    let n = values.nrows() as f64;
    values.axis_iter(Axis(1)).all(|col| {
        let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mean = col.sum() / n;
        mean.abs() <= CENTER_TOL * scale.max(f64::MIN_POSITIVE)
    })
}

/// A symmetric `p x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    values: Array2<f64>,
}

impl SymMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: c,
            });
        }
        if r == 0 {
            return Err(Error::EmptyMatrix { n: 0, p: 0 });
        }
        let scale = max_abs(values.view());
        let mut asym = 0.0f64;
        for i in 0..r {
            for j in (i + 1)..r {
                asym = asym.max((values[[i, j]] - values[[j, i]]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(Self { values })
    }

    /// Builds from a matrix that is symmetric up to rounding by mirroring the
    /// upper triangle onto the lower.
    pub(crate) fn symmetrized(mut values: Array2<f64>) -> Self {
        let p = values.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                values[[j, i]] = values[[i, j]];
            }
        }
        Self { values }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            values: Array2::eye(p),
        }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self {
            values: Array2::from_diag(&Array1::from(diag.to_vec())),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn matvec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.values.dot(&v)
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: ArrayView1<f64>) -> f64 {
        v.dot(&self.values.dot(&v))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&x| x == 0.0)
    }
}

fn max_abs(values: ArrayView2<f64>) -> f64 {
    values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// An eigenvalue estimate and its unit-norm eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Flips `v` so that its largest-magnitude entry (lowest index on ties) is
/// non-negative.
pub fn canonicalize_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best = i;
            best_abs = x.abs();
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

pub fn l2_norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Stopping rule for power-type iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Maximum L2 change between successive (sign-aligned) iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

/// Normalized all-ones vector with a `1e-6 * index` perturbation, so it is
/// never exactly orthogonal to an antisymmetric eigenvector.
pub fn default_start(p: usize) -> Array1<f64> {
    let base = 1.0 / (p as f64).sqrt();
    let mut v = Array1::from_shape_fn(p, |i| base + 1e-6 * i as f64);
    let norm = l2_norm(v.view());
    v /= norm;
    v
}

struct PowerRun {
    vector: Array1<f64>,
    iterations: usize,
    converged: bool,
}

/// Plain power iteration with a user-supplied operator. Returns `None` when
/// the operator maps an iterate to zero.
fn power_core(
    apply: &dyn Fn(ArrayView1<f64>, &mut Array1<f64>),
    mut v: Array1<f64>,
    opts: &PowerOptions,
) -> Option<PowerRun> {
    let p = v.len();
    let norm = l2_norm(v.view());
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v /= norm;
    let mut w = Array1::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        apply(v.view(), &mut w);
        let norm = l2_norm(w.view());
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        w /= norm;
        if w.dot(&v) < 0.0 {
            w.mapv_inplace(|x| -x);
        }
        let change = (&w - &v).mapv(|x| x * x).sum().sqrt();
        std::mem::swap(&mut v, &mut w);
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    Some(PowerRun {
        vector: v,
        iterations,
        converged,
    })
}

/// Runs power iteration, restarting from the strongest column of `a` if the
/// start lies in the null space, and re-running on a shifted operator when
/// the dominant-magnitude eigenvalue is negative so that the returned pair
/// is always the algebraically largest one.
fn dominant_pair(
    a: ArrayView2<f64>,
    mask: Option<usize>,
    v0: Array1<f64>,
    opts: &PowerOptions,
) -> Result<(Array1<f64>, f64, usize, bool)> {
    let p = a.nrows();
    let masked = |v: &mut Array1<f64>| {
        if let Some(j) = mask {
            v[j] = 0.0;
        }
    };
    let apply_shifted = |shift: f64| {
        move |v: ArrayView1<f64>, out: &mut Array1<f64>| {
            general_mat_vec_mul(1.0, &a, &v, 0.0, out);
            if shift != 0.0 {
                out.scaled_add(shift, &v);
            }
            if let Some(j) = mask {
                out[j] = 0.0;
            }
        }
    };

    let mut start = v0;
    masked(&mut start);
    let run = match power_core(&apply_shifted(0.0), start, opts) {
        Some(run) => run,
        None => {
            // Start was annihilated; seed from the column with the largest norm.
            let mut best = None;
            let mut best_norm = 0.0;
            for (j, col) in a.axis_iter(Axis(1)).enumerate() {
                if Some(j) == mask {
                    continue;
                }
                let mut c = col.to_owned();
                masked(&mut c);
                let nrm = l2_norm(c.view());
                if nrm > best_norm {
                    best_norm = nrm;
                    best = Some(c);
                }
            }
            let seed = best.ok_or(Error::PowerIterationDegenerate)?;
            power_core(&apply_shifted(0.0), seed, opts).ok_or(Error::PowerIterationDegenerate)?
        }
    };
    let rayleigh = |v: &Array1<f64>| {
        let mut out = Array1::zeros(p);
        apply_shifted(0.0)(v.view(), &mut out);
        (v.dot(&out), l2_norm(out.view()))
    };
    let (value, magnitude) = rayleigh(&run.vector);
    // A negative Rayleigh quotient means the iterate locked onto a negative
    // eigenvalue of largest magnitude; non-convergence usually means the two
    // largest magnitudes belong to eigenvalues of opposite sign. Shifting by
    // the dominant magnitude makes the spectrum non-negative without changing
    // eigenvectors.
    if value >= 0.0 && run.converged {
        return Ok((run.vector, value, run.iterations, run.converged));
    }
    let shift = magnitude;
    let mut start = if value > 0.0 { run.vector.clone() } else { default_start(p) };
    masked(&mut start);
    match power_core(&apply_shifted(shift), start, opts) {
        Some(shifted) => {
            let (shifted_value, _) = rayleigh(&shifted.vector);
            let iterations = run.iterations + shifted.iterations;
            if shifted.converged || shifted_value >= value || value < 0.0 {
                Ok((shifted.vector, shifted_value, iterations, shifted.converged))
            } else {
                Ok((run.vector, value, iterations, false))
            }
        }
        // A + shift*I vanishes: `a` is a negative multiple of the identity.
        None => Ok((run.vector, value, run.iterations, run.converged)),
    }
}

/// Leading eigenpair of `a` by power iteration. Non-convergence is reported
/// through `converged = false`, not as an error.
pub fn power_iteration(
    a: &SymMatrix,
    v0: Option<ArrayView1<f64>>,
    opts: &PowerOptions,
) -> Result<EigenPair> {
    let p = a.dim();
    if a.is_zero() {
        return Err(Error::ZeroMatrix);
    }
    let start = match v0 {
        Some(v) => {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: v.len(),
                });
            }
            v.to_owned()
        }
        None => default_start(p),
    };
    let (mut vector, value, iterations, converged) =
        dominant_pair(a.values.view(), None, start, opts)?;
    canonicalize_sign(&mut vector);
    Ok(EigenPair {
        value,
        vector,
        iterations,
        converged,
    })
}

/// Leading eigenvalue of the principal submatrix of `a` with row and column
/// `j` removed, computed in place on the full matrix with coordinate `j`
/// masked out. `v0` is a length-`p` start whose entry `j` is ignored.
pub fn submatrix_power_iteration(
    a: &SymMatrix,
    j: usize,
    v0: Option<ArrayView1<f64>>,
    opts: &PowerOptions,
) -> Result<EigenPair> {
    let p = a.dim();
    if j >= p {
        return Err(Error::IndexOutOfRange { index: j, len: p });
    }
    if p < 2 {
        return Err(Error::EmptyMatrix { n: p, p });
    }
    let mut start = match v0 {
        Some(v) if v.len() == p => v.to_owned(),
        Some(v) => {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: v.len(),
            })
        }
        None => default_start(p),
    };
    start[j] = 0.0;
    if l2_norm(start.view()) <= f64::EPSILON {
        start = default_start(p);
        start[j] = 0.0;
    }
    let sub_is_zero = a
        .values
        .indexed_iter()
        .all(|((r, c), &x)| r == j || c == j || x == 0.0);
    if sub_is_zero {
        let mut vector = Array1::zeros(p - 1);
        vector[0] = 1.0;
        return Ok(EigenPair {
            value: 0.0,
            vector,
            iterations: 0,
            converged: true,
        });
    }
    let (full, value, iterations, converged) =
        dominant_pair(a.values.view(), Some(j), start, opts)?;
    let mut vector: Array1<f64> = full
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, &x)| x)
        .collect();
    canonicalize_sign(&mut vector);
    Ok(EigenPair {
        value,
        vector,
        iterations,
        converged,
    })
}

/// Full eigendecomposition by cyclic Jacobi rotations, sorted by descending
/// eigenvalue with sign-canonicalized eigenvectors.
pub fn exact_symmetric_eigen(a: &SymMatrix) -> Result<Vec<EigenPair>> {
    let p = a.dim();
    if p > MAX_EXACT_DIM {
        return Err(Error::DimensionTooLarge {
            p,
            max: MAX_EXACT_DIM,
        });
    }
    let mut m = a.values.clone();
    let mut vecs = Array2::<f64>::eye(p);
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < 100 {
        let off: f64 = (0..p)
            .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off.sqrt() <= f64::EPSILON * frob || frob == 0.0 {
            converged = true;
            break;
        }
        sweeps += 1;
        for i in 0..p {
            for j in (i + 1)..p {
                let apq = m[[i, j]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[j, j]] - m[[i, i]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..p {
                    let mki = m[[k, i]];
                    let mkj = m[[k, j]];
                    m[[k, i]] = c * mki - sn * mkj;
                    m[[k, j]] = sn * mki + c * mkj;
                }
                for k in 0..p {
                    let mik = m[[i, k]];
                    let mjk = m[[j, k]];
                    m[[i, k]] = c * mik - sn * mjk;
                    m[[j, k]] = sn * mik + c * mjk;
                }
                m[[i, j]] = 0.0;
                m[[j, i]] = 0.0;
                for k in 0..p {
                    let vki = vecs[[k, i]];
                    let vkj = vecs[[k, j]];
                    vecs[[k, i]] = c * vki - sn * vkj;
                    vecs[[k, j]] = sn * vki + c * vkj;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| m[[y, y]].total_cmp(&m[[x, x]]));
    Ok(order
        .into_iter()
        .map(|i| {
            let mut vector = vecs.column(i).to_owned();
            canonicalize_sign(&mut vector);
            EigenPair {
                value: m[[i, i]],
                vector,
                iterations: sweeps,
                converged,
            }
        })
        .collect())
}

/// Subtracts each column's mean. Already-centered input is returned as is.
pub fn mean_center(x: &DataMatrix) -> Result<DataMatrix> {
    let (n, p) = x.values.dim();
    if n < 2 || p < 1 {
        return Err(Error::EmptyMatrix { n, p });
    }
    if x.centered {
        return Ok(x.clone());
    }
    let means = x
        .values
        .mean_axis(Axis(0))
        .expect("non-empty matrix has column means");
    let values = &x.values - &means.insert_axis(Axis(0));
    Ok(DataMatrix::from_parts(values, true))
}

/// `XᵀX / (n - 1)` without checking that `x` is centered.
pub fn scatter_covariance(x: &DataMatrix) -> Result<SymMatrix> {
    let (n, p) = x.values.dim();
    if n < 2 {
        return Err(Error::EmptyMatrix { n, p });
    }
    let mut gram = x.values.t().dot(&x.values);
    gram /= (n - 1) as f64;
    Ok(SymMatrix::symmetrized(gram))
}

/// Unbiased sample covariance `XᵀX / (n - 1)` of a centered data matrix.
pub fn sample_covariance(x: &DataMatrix) -> Result<SymMatrix> {
    if !x.centered {
        return Err(Error::NotCentered);
    }
    scatter_covariance(x)
}

/// The `(p-1) x (p-1)` matrix with row and column `j` removed.
pub fn principal_submatrix(a: &SymMatrix, j: usize) -> Result<SymMatrix> {
    let p = a.dim();
    if j >= p {
        return Err(Error::IndexOutOfRange { index: j, len: p });
    }
    if p < 2 {
        return Err(Error::EmptyMatrix { n: p, p });
    }
    let keep: Vec<usize> = (0..p).filter(|&i| i != j).collect();
    let values = a.values.select(Axis(0), &keep).select(Axis(1), &keep);
    Ok(SymMatrix { values })
}

/// `X - (Xv)vᵀ` for a unit vector `v`.
pub fn rank1_residual(x: &DataMatrix, v: ArrayView1<f64>) -> Result<DataMatrix> {
    let p = x.p();
    if v.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: v.len(),
        });
    }
    let norm = l2_norm(v);
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::NormViolation { norm });
    }
    let scores = x.values.dot(&v);
    let outer = scores
        .insert_axis(Axis(1))
        .dot(&v.insert_axis(Axis(0)));
    Ok(DataMatrix::from_parts(&x.values - &outer, x.centered))
}

/// Sum of squared entries.
pub fn frobenius_sq(x: &DataMatrix) -> f64 {
    x.values.iter().map(|v| v * v).sum()
}

/// Squared Frobenius norm of `X` after removing its projection onto `v`,
/// i.e. `‖X‖²_F − ‖Xv‖²₂` computed directly on the residual.
pub(crate) fn rank1_error(x: ArrayView2<f64>, v: ArrayView1<f64>) -> f64 {
    let scores = x.dot(&v);
    let mut total = 0.0;
    for (row, &score) in x.outer_iter().zip(scores.iter()) {
        for (&xi, &vi) in row.iter().zip(v.iter()) {
            let r = xi - score * vi;
            total += r * r;
        }
    }
    total
}
