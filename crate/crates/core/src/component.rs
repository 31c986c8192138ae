//! The sparse component type shared by every method.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};

use crate::error::Error;
use crate::linalg::{canonicalize_sign, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pca,
    Eespca,
    Spc,
    Spc1se,
    TPower,
    Rifle,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Pca,
        Method::Eespca,
        Method::Spc,
        Method::Spc1se,
        Method::TPower,
        Method::Rifle,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Eespca => "eespca",
            Method::Spc => "spc",
            Method::Spc1se => "spc1se",
            Method::TPower => "tpower",
            Method::Rifle => "rifle",
        }
    }

    /// Whether the method needs a cross-validated sparsity parameter.
    pub fn is_tuned(self) -> bool {
        matches!(
            self,
            Method::Spc | Method::Spc1se | Method::TPower | Method::Rifle
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Unit-norm loadings with their support, Rayleigh-quotient eigenvalue and
/// fit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComponent {
    pub loadings: Array1<f64>,
    /// Indices of the nonzero loadings, ascending.
    pub support: Vec<usize>,
    /// `vᵀ Σ v` on the covariance the component was fitted to.
    pub eigenvalue: f64,
    pub method: Method,
    /// Sparsity parameter (L1 bound or cardinality); `None` for untuned methods.
    pub param: Option<f64>,
    /// Wall-clock seconds spent fitting.
    pub runtime: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SparseComponent {
    /// Canonicalizes the sign of unit-norm `loadings` and derives the support
    /// and eigenvalue.
    pub(crate) fn from_unit_loadings(
        loadings: Array1<f64>,
        cov: &SymMatrix,
        method: Method,
        param: Option<f64>,
    ) -> Self {
        let eigenvalue = cov.quadratic_form(loadings.view());
        Self::with_eigenvalue(loadings, eigenvalue, method, param)
    }

    pub(crate) fn with_eigenvalue(
        mut loadings: Array1<f64>,
        eigenvalue: f64,
        method: Method,
        param: Option<f64>,
    ) -> Self {
        canonicalize_sign(&mut loadings);
        let support = support_of(loadings.view());
        Self {
            loadings,
            support,
            eigenvalue,
            method,
            param,
            runtime: 0.0,
            iterations: 0,
            converged: true,
        }
    }

    pub fn p(&self) -> usize {
        self.loadings.len()
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }
}

pub fn support_of(v: ArrayView1<f64>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, _)| i)
        .collect()
}
