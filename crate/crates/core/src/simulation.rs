//! Block-covariance simulation study: data generation, support-recovery
//! metrics, reconstruction-error ratios, timing and grid execution.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::baselines::pca_first_pc;
use crate::component::{Method, SparseComponent};
use crate::eespca::eespca_first_pc_detailed;
use crate::error::{Error, Result};
use crate::linalg::{
    exact_symmetric_eigen, mean_center, power_iteration, rank1_error, sample_covariance, DataMatrix,
    PowerOptions, SymMatrix, MAX_EXACT_DIM,
};
use crate::model_selection::{cv_select, CvMethod, CvResult};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_200_611;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    /// Number of leading variables sharing covariance `rho`.
    pub b: usize,
    pub rho: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n: 100,
            p: 10,
            b: 4,
            rho: 0.5,
            reps: 50,
            seed: DEFAULT_SEED,
        }
    }
}

fn check_block(p: usize, b: usize, rho: f64) -> Result<()> {
    if b < 2 || b > p {
        return Err(Error::InvalidBlock(format!("block size {b} outside [2, {p}]")));
    }
    let lower = -1.0 / (b - 1) as f64;
    if !(rho > lower && rho < 1.0) {
        return Err(Error::InvalidBlock(format!(
            "rho {rho} outside ({lower}, 1) for block size {b}"
        )));
    }
    Ok(())
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        check_block(self.p, self.b, self.rho)?;
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be positive".into()));
        }
        Ok(())
    }

    /// Indices of the variables with nonzero population loadings.
    pub fn true_support(&self) -> Vec<usize> {
        (0..self.b).collect()
    }
}

/// Unit variances, covariance `rho` among the first `b` variables and zero
/// elsewhere.
pub fn block_covariance(p: usize, b: usize, rho: f64) -> Result<SymMatrix> {
    check_block(p, b, rho)?;
    let values = Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            1.0
        } else if i < b && j < b {
            rho
        } else {
            0.0
        }
    });
    SymMatrix::new(values)
}

/// Ten variables with covariance 0.5 within {1,2,3,4} and within {9,10}.
/// Population eigenvalues start 2.5, 1.5.
pub fn running_example_covariance() -> SymMatrix {
    let mut values = Array2::eye(10);
    for block in [0..4, 8..10] {
        for i in block.clone() {
            for j in block.clone() {
                if i != j {
                    values[[i, j]] = 0.5;
                }
            }
        }
    }
    SymMatrix::new(values).expect("symmetric by construction")
}

const PIVOT_TOL: f64 = 1e-10;

/// Lower-triangular `L` with `LLᵀ = sigma`. Pivots within `PIVOT_TOL` of zero
/// are treated as exact zeros so singular PSD matrices are accepted.
fn cholesky(sigma: &SymMatrix) -> Result<Array2<f64>> {
    let a = sigma.values();
    let p = sigma.dim();
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d < -PIVOT_TOL {
            return Err(Error::NotPositiveDefinite { pivot: d, index: j });
        }
        if d <= PIVOT_TOL {
            continue;
        }
        let root = d.sqrt();
        l[[j, j]] = root;
        for i in j + 1..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / root;
        }
    }
    Ok(l)
}

/// `n` draws from `N(0, sigma)` as `Z·Lᵀ`, with `Z` filled row by row from a
/// ChaCha8 stream seeded by `seed`. The result is not centered.
pub fn mvn_sample(sigma: &SymMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    let l = cholesky(sigma)?;
    let p = sigma.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(&mut rng));
    DataMatrix::new(z.dot(&l.t()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Fraction of true zero loadings estimated as zero.
    pub sens: f64,
    /// Fraction of true nonzero loadings estimated as nonzero.
    pub spec: f64,
    pub balacc: f64,
}

/// Support-recovery metrics for `estimated` against `true_support`.
pub fn classification_metrics(estimated: &SparseComponent, true_support: &[usize]) -> Result<Metrics> {
    let p = estimated.p();
    let mut truth = vec![false; p];
    for &j in true_support {
        if j >= p {
            return Err(Error::IndexOutOfRange { index: j, len: p });
        }
        truth[j] = true;
    }
    let nonzero = truth.iter().filter(|&&t| t).count();
    if nonzero == 0 || nonzero == p {
        return Err(Error::UndefinedMetric(format!(
            "true support has {nonzero} of {p} variables"
        )));
    }
    let (mut zeros_hit, mut nonzeros_hit) = (0usize, 0usize);
    for (j, &t) in truth.iter().enumerate() {
        let est = estimated.loadings[j] != 0.0;
        match (t, est) {
            (false, false) => zeros_hit += 1,
            (true, true) => nonzeros_hit += 1,
            _ => {}
        }
    }
    let sens = zeros_hit as f64 / (p - nonzero) as f64;
    let spec = nonzeros_hit as f64 / nonzero as f64;
    Ok(Metrics {
        sens,
        spec,
        balacc: (sens + spec) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Ok,
    /// The method failed; holds the error name.
    Failed(&'static str),
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialStatus::Ok => f.write_str("ok"),
            TrialStatus::Failed(name) => f.write_str(name),
        }
    }
}

/// One method on one simulated data set. Metric fields are NaN when the
/// method failed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub spec: SimSpec,
    pub replicate: usize,
    pub method: Method,
    pub sens: f64,
    pub spec_metric: f64,
    pub balacc: f64,
    /// Rank-1 reconstruction error relative to the exact first PC.
    pub recon_ratio: f64,
    /// Seconds, including cross-validation for tuned methods.
    pub wall_time: f64,
    pub chosen_param: Option<f64>,
    pub status: TrialStatus,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub methods: Vec<Method>,
    pub nfolds: usize,
    /// Overrides every method's convergence tolerance.
    pub tol: Option<f64>,
    /// Overrides every method's iteration cap.
    pub max_iter: Option<usize>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            nfolds: 5,
            tol: None,
            max_iter: None,
        }
    }
}

impl TrialConfig {
    pub fn power(&self) -> PowerOptions {
        let d = PowerOptions::default();
        PowerOptions {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
        }
    }

    /// The cross-validated variant of `method`, if it has a tuning parameter.
    pub fn cv_method(&self, method: Method) -> Option<CvMethod> {
        let base = match method {
            Method::Spc | Method::Spc1se => CvMethod::spc(),
            Method::TPower => CvMethod::tpower(),
            Method::Rifle => CvMethod::rifle(),
            Method::Pca | Method::Eespca => return None,
        };
        Some(base.with_solver(self.tol, self.max_iter))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(words: &[u64]) -> u64 {
    words.iter().fold(0u64, |h, &w| splitmix64(h ^ w))
}

/// Seed for replicate `replicate` of the cell `spec`. Depends only on the
/// base seed, the cell coordinates and the replicate index, so any cell can
/// be rerun in isolation.
pub fn trial_seed(spec: &SimSpec, replicate: usize) -> u64 {
    mix(&[
        spec.seed,
        spec.n as u64,
        spec.p as u64,
        spec.b as u64,
        spec.rho.to_bits(),
        replicate as u64,
    ])
}

fn cv_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0xC5C5_C5C5_C5C5_C5C5)
}

/// Draws one centered data set for replicate `replicate` of `spec`.
pub fn draw_replicate(spec: &SimSpec, replicate: usize) -> Result<DataMatrix> {
    spec.validate()?;
    let sigma = block_covariance(spec.p, spec.b, spec.rho)?;
    mean_center(&mvn_sample(&sigma, spec.n, trial_seed(spec, replicate))?)
}

/// Smallest achievable rank-1 reconstruction error of `x`.
pub fn pca_reference_error(x: &DataMatrix) -> Result<f64> {
    let cov = sample_covariance(x)?;
    let tight = PowerOptions {
        tol: 1e-13,
        max_iter: 100_000,
    };
    let mut best = rank1_error(x.values().view(), power_iteration(&cov, None, &tight)?.vector.view());
    if cov.dim() <= MAX_EXACT_DIM {
        let exact = exact_symmetric_eigen(&cov)?;
        best = best.min(rank1_error(x.values().view(), exact[0].vector.view()));
    }
    Ok(best)
}

/// Runs every configured method on one replicate. SPC and SPC.1se share a
/// single cross-validation run; each is charged its full cost.
pub fn run_trial(spec: &SimSpec, replicate: usize, config: &TrialConfig) -> Result<Vec<TrialRecord>> {
    let x = draw_replicate(spec, replicate)?;
    let reference = pca_reference_error(&x)?;
    let truth = spec.true_support();
    let seed = cv_seed(trial_seed(spec, replicate));
    let mut spc_cv: Option<(Result<CvResult>, f64)> = None;
    let power = config.power();

    let mut records = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let started = Instant::now();
        let mut cv_time = 0.0;
        let outcome: Result<SparseComponent> = match config.cv_method(method) {
            None => sample_covariance(&x).and_then(|cov| match method {
                Method::Pca => pca_first_pc(&cov, &power),
                _ => eespca_first_pc_detailed(&cov, &power).map(|(c, _)| c),
            }),
            Some(cvm) => {
                let cv = if matches!(method, Method::Spc | Method::Spc1se) {
                    let (cv, t) = spc_cv.get_or_insert_with(|| {
                        let t0 = Instant::now();
                        let r = cv_select(&cvm, &x, &cvm.default_grid(spec.p), config.nfolds, seed);
                        (r, t0.elapsed().as_secs_f64())
                    });
                    cv_time = *t;
                    cv.clone()
                } else {
                    cv_select(&cvm, &x, &cvm.default_grid(spec.p), config.nfolds, seed)
                };
                let fit_started = Instant::now();
                let fitted = cv.and_then(|r| {
                    let value = if method == Method::Spc1se { r.chosen_1se } else { r.chosen_min };
                    cvm.fit(&x, value)
                });
                if matches!(method, Method::Spc | Method::Spc1se) {
                    cv_time += fit_started.elapsed().as_secs_f64();
                }
                fitted.map(|mut c| {
                    c.method = method;
                    c
                })
            }
        };
        let wall_time = if matches!(method, Method::Spc | Method::Spc1se) {
            cv_time
        } else {
            started.elapsed().as_secs_f64()
        };
        let record = match outcome.and_then(|c| {
            let m = classification_metrics(&c, &truth)?;
            Ok((c, m))
        }) {
            Ok((c, m)) => TrialRecord {
                spec: *spec,
                replicate,
                method,
                sens: m.sens,
                spec_metric: m.spec,
                balacc: m.balacc,
                recon_ratio: rank1_error(x.values().view(), c.loadings.view()) / reference,
                wall_time,
                chosen_param: c.param,
                status: TrialStatus::Ok,
            },
            Err(e) => TrialRecord {
                spec: *spec,
                replicate,
                method,
                sens: f64::NAN,
                spec_metric: f64::NAN,
                balacc: f64::NAN,
                recon_ratio: f64::NAN,
                wall_time,
                chosen_param: None,
                status: TrialStatus::Failed(e.name()),
            },
        };
        records.push(record);
    }
    Ok(records)
}

/// Simulation parameter that a grid can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridParam {
    N,
    P,
    B,
    Rho,
}

impl GridParam {
    pub fn name(&self) -> &'static str {
        match self {
            GridParam::N => "n",
            GridParam::P => "p",
            GridParam::B => "b",
            GridParam::Rho => "rho",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(&self, base: &SimSpec, value: f64) -> Result<SimSpec> {
        let mut spec = *base;
        let count = || {
            if value.fract() == 0.0 && value >= 0.0 && value.is_finite() {
                Ok(value as usize)
            } else {
                Err(Error::InvalidParameter(format!(
                    "{} must be a non-negative integer, got {value}",
                    self.name()
                )))
            }
        };
        match self {
            GridParam::N => spec.n = count()?,
            GridParam::P => spec.p = count()?,
            GridParam::B => spec.b = count()?,
            GridParam::Rho => spec.rho = value,
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl FromStr for GridParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" => Ok(GridParam::N),
            "p" => Ok(GridParam::P),
            "b" => Ok(GridParam::B),
            "rho" => Ok(GridParam::Rho),
            other => Err(Error::InvalidParameter(format!("unknown grid parameter {other:?}"))),
        }
    }
}

/// The cells of a grid: `base` alone, or `base` with one parameter varied.
pub fn grid_cells(base: &SimSpec, vary: Option<(GridParam, &[f64])>) -> Result<Vec<SimSpec>> {
    match vary {
        None => {
            base.validate()?;
            Ok(vec![*base])
        }
        Some((param, values)) => {
            if values.is_empty() {
                return Err(Error::InvalidParameter("empty list of grid values".into()));
            }
            values.iter().map(|&v| param.apply(base, v)).collect()
        }
    }
}

/// Runs every replicate of every cell, in parallel. Records come back
/// ordered by cell, then replicate, then method.
pub fn run_grid(
    base: &SimSpec,
    vary: Option<(GridParam, &[f64])>,
    config: &TrialConfig,
) -> Result<Vec<TrialRecord>> {
    if config.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods requested".into()));
    }
    let cells = grid_cells(base, vary)?;
    let jobs: Vec<(SimSpec, usize)> = cells
        .iter()
        .flat_map(|c| (0..c.reps).map(move |r| (*c, r)))
        .collect();
    let per_job: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|(spec, r)| {
            run_trial(spec, *r, config).unwrap_or_else(|e| {
                config
                    .methods
                    .iter()
                    .map(|&method| TrialRecord {
                        spec: *spec,
                        replicate: *r,
                        method,
                        sens: f64::NAN,
                        spec_metric: f64::NAN,
                        balacc: f64::NAN,
                        recon_ratio: f64::NAN,
                        wall_time: 0.0,
                        chosen_param: None,
                        status: TrialStatus::Failed(e.name()),
                    })
                    .collect()
            })
        })
        .collect();
    Ok(per_job.into_iter().flatten().collect())
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let m = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / m;
        let se = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub spec: SimSpec,
    pub method: Method,
    pub trials: usize,
    pub failed: usize,
    pub sens: Summary,
    pub spec_metric: Summary,
    pub balacc: Summary,
    pub recon_ratio: Summary,
    pub wall_time: Summary,
}

fn same_cell(a: &SimSpec, b: &SimSpec) -> bool {
    a.n == b.n && a.p == b.p && a.b == b.b && a.rho.to_bits() == b.rho.to_bits()
}

/// Per cell and method summaries over the successful trials, in order of
/// first appearance.
pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRecord> {
    let mut keys: Vec<(SimSpec, Method)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(s, m)| same_cell(s, &r.spec) && *m == r.method) {
            keys.push((r.spec, r.method));
        }
    }
    keys.into_iter()
        .map(|(spec, method)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| same_cell(&r.spec, &spec) && r.method == method)
                .collect();
            let ok: Vec<&&TrialRecord> = group.iter().filter(|r| r.is_ok()).collect();
            let summary = |f: fn(&TrialRecord) -> f64| {
                Summary::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            AggregateRecord {
                spec,
                method,
                trials: group.len(),
                failed: group.len() - ok.len(),
                sens: summary(|r| r.sens),
                spec_metric: summary(|r| r.spec_metric),
                balacc: summary(|r| r.balacc),
                recon_ratio: summary(|r| r.recon_ratio),
                wall_time: summary(|r| r.wall_time),
            }
        })
        .collect()
}

/// One entry of the loading-ratio distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSample {
    pub replicate: usize,
    pub variable: usize,
    /// Whether the variable has a nonzero population loading.
    pub in_support: bool,
    pub ratio: f64,
}

/// Ratios of approximate to PCA squared loadings for the first component,
/// over `spec.reps` simulated data sets.
pub fn ratio_distribution(spec: &SimSpec, power: &PowerOptions) -> Result<Vec<RatioSample>> {
    spec.validate()?;
    let per_rep: Vec<Result<Vec<RatioSample>>> = (0..spec.reps)
        .into_par_iter()
        .map(|r| {
            let x = draw_replicate(spec, r)?;
            let (_, details) = eespca_first_pc_detailed(&sample_covariance(&x)?, power)?;
            Ok(details
                .ratios
                .values
                .iter()
                .enumerate()
                .map(|(j, &ratio)| RatioSample {
                    replicate: r,
                    variable: j,
                    in_support: j < spec.b,
                    ratio,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for rep in per_rep {
        out.extend(rep?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn component(loadings: Vec<f64>) -> SparseComponent {
        SparseComponent::with_eigenvalue(Array1::from(loadings), 1.0, Method::Eespca, None)
    }

    #[test]
    fn block_covariance_examples() {
        let id = block_covariance(5, 3, 0.0).unwrap();
        assert_eq!(id.values(), &Array2::<f64>::eye(5));
        let s = block_covariance(10, 4, 0.5).unwrap();
        assert_eq!(s.values()[[0, 1]], 0.5);
        assert_eq!(s.values()[[0, 5]], 0.0);
        assert_eq!(s.values()[[4, 5]], 0.0);
        let top = exact_symmetric_eigen(&s).unwrap();
        assert_abs_diff_eq!(top[0].value, 2.5, epsilon = 1e-10);
        let neg = block_covariance(2, 2, -0.9).unwrap();
        let e = exact_symmetric_eigen(&neg).unwrap();
        assert_abs_diff_eq!(e[1].value, 0.1, epsilon = 1e-12);
        assert!(matches!(block_covariance(10, 1, 0.5), Err(Error::InvalidBlock(_))));
        assert!(matches!(block_covariance(10, 11, 0.5), Err(Error::InvalidBlock(_))));
        assert!(matches!(block_covariance(10, 4, 1.0), Err(Error::InvalidBlock(_))));
        assert!(matches!(block_covariance(10, 4, -1.0 / 3.0), Err(Error::InvalidBlock(_))));
    }

    #[test]
    fn block_spectrum_matches_equicorrelation() {
        for b in 2..7 {
            for rho in [-0.15, 0.1, 0.5, 0.9] {
                if rho <= -1.0 / (b - 1) as f64 {
                    continue;
                }
                let s = block_covariance(8, b, rho).unwrap();
                let mut values: Vec<f64> =
                    exact_symmetric_eigen(&s).unwrap().iter().map(|e| e.value).collect();
                let mut expected = vec![1.0 + (b - 1) as f64 * rho];
                expected.extend(std::iter::repeat_n(1.0 - rho, b - 1));
                expected.extend(std::iter::repeat_n(1.0, 8 - b));
                values.sort_by(f64::total_cmp);
                expected.sort_by(f64::total_cmp);
                for (v, e) in values.iter().zip(&expected) {
                    assert_abs_diff_eq!(v, e, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn running_example_spectrum() {
        let e = exact_symmetric_eigen(&running_example_covariance()).unwrap();
        assert_abs_diff_eq!(e[0].value, 2.5, epsilon = 1e-10);
        assert_abs_diff_eq!(e[1].value, 1.5, epsilon = 1e-10);
        for j in 0..4 {
            assert_abs_diff_eq!(e[0].vector[j].abs(), 0.5, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(e[1].vector[8].abs(), 0.5f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn cholesky_reconstructs() {
        let s = running_example_covariance();
        let l = cholesky(&s).unwrap();
        let back = l.dot(&l.t());
        for (a, b) in back.iter().zip(s.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let singular = SymMatrix::new(ndarray::array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let l = cholesky(&singular).unwrap();
        assert_abs_diff_eq!(l.dot(&l.t())[[1, 1]], 1.0, epsilon = 1e-14);
        let bad = SymMatrix::new(ndarray::array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&bad), Err(Error::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn mvn_sample_examples() {
        let id = SymMatrix::identity(3);
        let x = mvn_sample(&id, 100_000, 5).unwrap();
        assert!(!x.is_centered());
        let cov = sample_covariance(&mean_center(&x).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov.values()[[i, j]] - target).abs() < 0.02);
            }
        }
        let s = running_example_covariance();
        assert_eq!(mvn_sample(&s, 20, 3).unwrap(), mvn_sample(&s, 20, 3).unwrap());
        assert_ne!(mvn_sample(&s, 20, 3).unwrap(), mvn_sample(&s, 20, 4).unwrap());
        let one = mvn_sample(&s, 1, 3).unwrap();
        assert_eq!(one.n(), 1);
        assert_eq!(mean_center(&one).unwrap_err(), Error::EmptyMatrix { n: 1, p: 10 });
    }

    #[test]
    fn metric_examples() {
        let truth = [0, 1, 2, 3];
        let exact = component(vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let m = classification_metrics(&exact, &truth).unwrap();
        assert_eq!((m.sens, m.spec, m.balacc), (1.0, 1.0, 1.0));
        let dense = component(vec![0.1; 10]);
        let m = classification_metrics(&dense, &truth).unwrap();
        assert_eq!((m.sens, m.spec, m.balacc), (0.0, 1.0, 0.5));
        let partial = component(vec![0.5, 0.5, 0.5, 0.5, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0]);
        let m = classification_metrics(&partial, &truth).unwrap();
        assert_abs_diff_eq!(m.sens, 4.0 / 6.0, epsilon = 1e-15);
        assert!(matches!(classification_metrics(&dense, &[]), Err(Error::UndefinedMetric(_))));
        let all: Vec<usize> = (0..10).collect();
        assert!(matches!(classification_metrics(&dense, &all), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn seeds_depend_on_cell_and_replicate() {
        let s = SimSpec::default();
        assert_eq!(trial_seed(&s, 3), trial_seed(&s, 3));
        assert_ne!(trial_seed(&s, 3), trial_seed(&s, 4));
        let t = SimSpec { rho: 0.3, ..s };
        assert_ne!(trial_seed(&s, 3), trial_seed(&t, 3));
        let u = SimSpec { reps: 7, ..s };
        assert_eq!(trial_seed(&s, 3), trial_seed(&u, 3));
    }

    #[test]
    fn single_record_grid() {
        let base = SimSpec {
            reps: 1,
            ..SimSpec::default()
        };
        let config = TrialConfig {
            methods: vec![Method::Eespca],
            ..TrialConfig::default()
        };
        let records = run_grid(&base, None, &config).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].is_ok());
        assert_eq!(records[0].chosen_param, None);
        let agg = aggregate(&records);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].trials, 1);
    }

    #[test]
    fn varied_grid_shape_and_isolation() {
        let base = SimSpec {
            reps: 2,
            n: 40,
            ..SimSpec::default()
        };
        let config = TrialConfig {
            methods: vec![Method::Eespca, Method::TPower],
            ..TrialConfig::default()
        };
        let values = [0.1, 0.3, 0.5];
        let records = run_grid(&base, Some((GridParam::Rho, &values)), &config).unwrap();
        assert_eq!(records.len(), 3 * 2 * 2);
        let agg = aggregate(&records);
        assert_eq!(agg.len(), 6);
        assert_eq!(agg.iter().filter(|a| a.method == Method::Eespca).count(), 3);

        let alone = run_grid(&SimSpec { rho: 0.3, ..base }, None, &config).unwrap();
        let from_grid: Vec<_> = records.iter().filter(|r| r.spec.rho == 0.3).collect();
        for (a, b) in alone.iter().zip(from_grid) {
            assert_eq!(a.sens, b.sens);
            assert_eq!(a.recon_ratio, b.recon_ratio);
            assert_eq!(a.chosen_param, b.chosen_param);
        }
    }

    #[test]
    fn records_satisfy_bounds() {
        let base = SimSpec {
            reps: 3,
            n: 50,
            ..SimSpec::default()
        };
        let records = run_grid(&base, None, &TrialConfig::default()).unwrap();
        assert_eq!(records.len(), 3 * Method::ALL.len());
        for r in &records {
            assert!(r.is_ok(), "{r:?}");
            for v in [r.sens, r.spec_metric, r.balacc] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert_eq!(r.balacc, (r.sens + r.spec_metric) / 2.0);
            assert!(r.recon_ratio >= 1.0 - 1e-9, "{r:?}");
            assert!(r.wall_time >= 0.0);
            assert_eq!(r.chosen_param.is_some(), r.method.is_tuned());
        }
    }

    #[test]
    fn failed_trials_are_recorded() {
        // Two samples cannot be split into five folds; EESPCA still runs.
        let base = SimSpec {
            n: 3,
            reps: 1,
            ..SimSpec::default()
        };
        let config = TrialConfig {
            methods: vec![Method::Eespca, Method::TPower],
            ..TrialConfig::default()
        };
        let records = run_grid(&base, None, &config).unwrap();
        assert!(records[0].is_ok());
        assert_eq!(records[1].status, TrialStatus::Failed("TooFewSamples"));
        assert!(records[1].balacc.is_nan());
        let agg = aggregate(&records);
        assert_eq!(agg[1].failed, 1);
        assert!(agg[1].balacc.mean.is_nan());
    }

    #[test]
    fn grid_param_parsing() {
        assert_eq!("RHO".parse::<GridParam>().unwrap(), GridParam::Rho);
        assert!("q".parse::<GridParam>().is_err());
        let base = SimSpec::default();
        assert_eq!(GridParam::P.apply(&base, 20.0).unwrap().p, 20);
        assert!(GridParam::P.apply(&base, 2.5).is_err());
        assert!(GridParam::B.apply(&base, 11.0).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_abs_diff_eq!(s.se, (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(Summary::of(&[4.0]).se, 0.0);
    }

    #[test]
    fn ratio_distribution_shape() {
        let spec = SimSpec {
            reps: 4,
            ..SimSpec::default()
        };
        let ratios = ratio_distribution(&spec, &PowerOptions::default()).unwrap();
        assert_eq!(ratios.len(), 40);
        assert_eq!(ratios.iter().filter(|r| r.in_support).count(), 16);
        assert!(ratios.iter().all(|r| r.ratio >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn metrics_in_unit_interval(mask in proptest::collection::vec(any::<bool>(), 10), b in 1usize..10) {
            let loadings: Vec<f64> = mask.iter().map(|&m| if m { 0.3 } else { 0.0 }).collect();
            let truth: Vec<usize> = (0..b).collect();
            let m = classification_metrics(&component(loadings), &truth).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.sens));
            prop_assert!((0.0..=1.0).contains(&m.spec));
            prop_assert_eq!(m.balacc, (m.sens + m.spec) / 2.0);
        }
    }
}
