//! Regularized kernel estimators ("support vector machines" in the broad
//! sense) with smooth losses, together with the first-order machinery that
//! describes their sampling behaviour: the derivative of the
//! measure-to-estimator map, influence functions, the plug-in covariance of
//! the Gaussian limit of `√n (f_n - f₀)`, the scale of the risk limit, and a
//! seeded Monte Carlo harness that checks these limits empirically.
//!
//! All distributions are finite-support measures ([`measures::FiniteMeasure`]),
//! which makes the population estimator and every population integral exact.
//!
//! The accompanying guide lives in `book/` at the repository root; its code
//! listings are compiled and run as doctests of this crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod derivative;
pub mod error;
pub mod kernels;
pub mod losses;
pub mod measures;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod solver;

pub use derivative::{CovarianceEstimate, DegeneracyReport, DerivativeContext, FdReport};
pub use error::{Error, Result};
pub use kernels::{DomainBox, KernelFamily, KernelSpec, Point, RkhsFunction};
pub use losses::{LipschitzLoss, LossSpec, SmoothLoss};
pub use measures::{Atom, FiniteMeasure};
pub use montecarlo::{run_clt_experiment, CltReport, ExperimentConfig, LambdaRule};
pub use solver::{SolveReport, SolverOptions, Svm};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/derivatives.md")]
    mod derivatives {}
    #[doc = include_str!("../../../book/src/clt.md")]
    mod clt {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
