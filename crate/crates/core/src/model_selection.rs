//! Row-holdout cross-validation of the sparsity parameter.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{rifle_first_pc, spc_first_pc_from, tpower_first_pc, CardinalityParams, SpcParams};
use crate::component::SparseComponent;
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, rank1_error, scatter_covariance, DataMatrix, PowerOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Bound on the L1 norm of the loadings (SPC).
    L1Bound,
    /// Number of nonzero loadings (TPower, rifle).
    Cardinality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    values: Vec<f64>,
    kind: GridKind,
}

const DEFAULT_GRID_LEN: usize = 20;

fn linspace(lo: f64, hi: f64, len: usize) -> impl Iterator<Item = f64> {
    let step = if len > 1 { (hi - lo) / (len - 1) as f64 } else { 0.0 };
    (0..len).map(move |i| if i + 1 == len { hi } else { lo + step * i as f64 })
}

impl CvGrid {
    /// 20 evenly spaced L1 bounds from 1 to `√p`.
    pub fn l1_bound(p: usize) -> Self {
        Self {
            values: linspace(1.0, (p as f64).sqrt(), DEFAULT_GRID_LEN).collect(),
            kind: GridKind::L1Bound,
        }
    }

    /// 20 evenly spaced cardinalities from 1 to `p`, rounded half to even and
    /// deduplicated.
    pub fn cardinality(p: usize) -> Self {
        let mut values: Vec<f64> = linspace(1.0, p as f64, DEFAULT_GRID_LEN)
            .map(f64::round_ties_even)
            .collect();
        values.dedup();
        Self {
            values,
            kind: GridKind::Cardinality,
        }
    }

    /// Custom grid; values are sorted ascending and deduplicated. Cardinality
    /// values must be integers.
    pub fn custom(kind: GridKind, mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty parameter grid".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid value {v} is not finite")));
        }
        if kind == GridKind::Cardinality {
            if let Some(v) = values.iter().find(|v| v.fract() != 0.0 || **v < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "cardinality {v} is not a positive integer"
                )));
            }
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self, p: usize) -> Result<()> {
        for &v in &self.values {
            match self.kind {
                GridKind::L1Bound => SpcParams::new(v).validate(p)?,
                GridKind::Cardinality => CardinalityParams::new(v as usize).validate(p)?,
            }
        }
        Ok(())
    }
}

/// Fold index for each of `n` samples. A seeded shuffle is dealt round-robin
/// so fold sizes differ by at most one.
pub fn make_folds(n: usize, nfolds: usize, seed: u64) -> Result<Vec<usize>> {
    if nfolds < 2 || nfolds > n {
        return Err(Error::TooFewSamples { n, nfolds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (position, &sample) in order.iter().enumerate() {
        folds[sample] = position % nfolds;
    }
    Ok(folds)
}

/// A method whose sparsity parameter is chosen by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvMethod {
    Spc { tol: f64, max_iter: usize },
    TPower { tol: f64, max_iter: usize },
    Rifle { tol: f64, max_iter: usize },
}

impl CvMethod {
    pub fn spc() -> Self {
        CvMethod::Spc {
            tol: SpcParams::DEFAULT_TOL,
            max_iter: SpcParams::DEFAULT_MAX_ITER,
        }
    }

    pub fn tpower() -> Self {
        let d = CardinalityParams::new(1);
        CvMethod::TPower {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }

    pub fn rifle() -> Self {
        let d = CardinalityParams::new(1);
        CvMethod::Rifle {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }

    /// Replaces the convergence settings where given.
    pub fn with_solver(self, tol: Option<f64>, max_iter: Option<usize>) -> Self {
        let pick = |t: f64, m: usize| (tol.unwrap_or(t), max_iter.unwrap_or(m));
        match self {
            CvMethod::Spc { tol: t, max_iter: m } => {
                let (tol, max_iter) = pick(t, m);
                CvMethod::Spc { tol, max_iter }
            }
            CvMethod::TPower { tol: t, max_iter: m } => {
                let (tol, max_iter) = pick(t, m);
                CvMethod::TPower { tol, max_iter }
            }
            CvMethod::Rifle { tol: t, max_iter: m } => {
                let (tol, max_iter) = pick(t, m);
                CvMethod::Rifle { tol, max_iter }
            }
        }
    }

    pub fn grid_kind(&self) -> GridKind {
        match self {
            CvMethod::Spc { .. } => GridKind::L1Bound,
            _ => GridKind::Cardinality,
        }
    }

    /// The default 20-point grid for this method.
    pub fn default_grid(&self, p: usize) -> CvGrid {
        match self.grid_kind() {
            GridKind::L1Bound => CvGrid::l1_bound(p),
            GridKind::Cardinality => CvGrid::cardinality(p),
        }
    }

    /// Fits the first component with parameter `value`.
    pub fn fit(&self, x: &DataMatrix, value: f64) -> Result<SparseComponent> {
        let cov = scatter_covariance(x)?;
        let start = power_iteration(&cov, None, &PowerOptions::default())?.vector;
        self.fit_from(x, value, &Prepared { cov, start })
    }

    fn fit_from(&self, x: &DataMatrix, value: f64, prep: &Prepared) -> Result<SparseComponent> {
        match *self {
            CvMethod::Spc { tol, max_iter } => {
                let params = SpcParams { c: value, tol, max_iter };
                spc_first_pc_from(x, &params, prep.start.view())
            }
            CvMethod::TPower { tol, max_iter } => {
                let params = CardinalityParams { k: value as usize, tol, max_iter };
                tpower_first_pc(&prep.cov, &params, Some(prep.start.view()))
            }
            CvMethod::Rifle { tol, max_iter } => {
                let params = CardinalityParams { k: value as usize, tol, max_iter };
                rifle_first_pc(&prep.cov, &params, prep.start.view())
            }
        }
    }
}

/// Per-fold quantities shared by every candidate.
struct Prepared {
    cov: crate::linalg::SymMatrix,
    start: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub grid: CvGrid,
    pub mean_error: Vec<f64>,
    pub se_error: Vec<f64>,
    /// `fold_errors[candidate][fold]`; `+∞` marks a failed fit.
    pub fold_errors: Vec<Vec<f64>>,
    pub index_min: usize,
    pub index_1se: usize,
    pub chosen_min: f64,
    pub chosen_1se: f64,
    pub nfolds: usize,
}

fn mean_and_se(errors: &[f64]) -> (f64, f64) {
    if errors.iter().any(|e| !e.is_finite()) {
        return (f64::INFINITY, f64::INFINITY);
    }
    let m = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / m;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Index of the smallest finite mean (first on ties) and of the first
/// candidate within one standard error of it. Candidates are ordered from
/// sparsest to densest.
fn select(mean_error: &[f64], se_error: &[f64]) -> Option<(usize, usize)> {
    let mut index_min: Option<usize> = None;
    for (i, &m) in mean_error.iter().enumerate() {
        if m.is_finite() && index_min.is_none_or(|best| m < mean_error[best]) {
            index_min = Some(i);
        }
    }
    let index_min = index_min?;
    let bound = mean_error[index_min] + se_error[index_min];
    let index_1se = mean_error.iter().position(|&m| m <= bound).unwrap_or(index_min);
    Some((index_min, index_1se))
}

/// Cross-validates `method` over `grid`: each fold's rows are held out, the
/// first component is fitted on the remaining rows, and the held-out rows are
/// scored by `‖X_f − X_f v vᵀ‖²_F`.
pub fn cv_select(
    method: &CvMethod,
    x: &DataMatrix,
    grid: &CvGrid,
    nfolds: usize,
    seed: u64,
) -> Result<CvResult> {
    if !x.is_centered() {
        return Err(Error::NotCentered);
    }
    if grid.kind() != method.grid_kind() {
        return Err(Error::InvalidParameter("grid kind does not match the method".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    grid.validate(x.p())?;
    let folds = make_folds(x.n(), nfolds, seed)?;

    let mut fold_errors = vec![vec![f64::INFINITY; nfolds]; grid.len()];
    for fold in 0..nfolds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..x.n()).partition(|&i| folds[i] != fold);
        let train = x.select_rows(&train);
        let held_out = x.select_rows(&test);
        let prepared = scatter_covariance(&train).and_then(|cov| {
            let start = power_iteration(&cov, None, &PowerOptions::default())?.vector;
            Ok(Prepared { cov, start })
        });
        let Ok(prepared) = prepared else { continue };
        for (cell, &value) in fold_errors.iter_mut().zip(grid.values()) {
            if let Ok(c) = method.fit_from(&train, value, &prepared) {
                cell[fold] = rank1_error(held_out.values().view(), c.loadings.view());
            }
        }
    }

    let (mean_error, se_error): (Vec<f64>, Vec<f64>) =
        fold_errors.iter().map(|e| mean_and_se(e)).unzip();
    let (index_min, index_1se) = select(&mean_error, &se_error).ok_or(Error::AllCellsFailed)?;
    Ok(CvResult {
        chosen_min: grid.values()[index_min],
        chosen_1se: grid.values()[index_1se],
        grid: grid.clone(),
        mean_error,
        se_error,
        fold_errors,
        index_min,
        index_1se,
        nfolds,
    })
}
