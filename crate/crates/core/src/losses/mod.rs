//! Convex losses `L(x, y, t)` with their first two `t`-derivatives.
//!
//! [`SmoothLoss`] is what the solver and the derivative machinery consume.
//! Lipschitz losses with kinks (hinge, ε-insensitive) implement
//! [`LipschitzLoss`] and become smooth through [`mollify`].

mod builtin;
mod mollify;

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use builtin::{EpsInsensitive, Hinge, Huber, LeastSquares, Logistic};
pub use mollify::{mollifier, mollifier_constant, mollify, Mollified, DEFAULT_NODES};

/// A convex loss that is twice differentiable in `t`.
///
/// Besides the value and derivatives, a loss exposes the envelopes used to
/// bound solutions and derivatives:
/// `|L(x, y, t)| ≤ envelope_b(x, y) + growth · |t|^p`,
/// `sup_{|t| ≤ a} |L'(x, y, t)| ≤ envelope_b1(a, x, y)` and
/// `sup_{|t| ≤ a} |L''(x, y, t)| ≤ envelope_b2(a)`.
pub trait SmoothLoss: Send + Sync + Debug {
    fn name(&self) -> String;
    fn value(&self, x: &[f64], y: f64, t: f64) -> f64;
    fn d1(&self, x: &[f64], y: f64, t: f64) -> f64;
    fn d2(&self, x: &[f64], y: f64, t: f64) -> f64;
    /// `(L, L', L'')` at once.
    fn derivatives(&self, x: &[f64], y: f64, t: f64) -> (f64, f64, f64) {
        (self.value(x, y, t), self.d1(x, y, t), self.d2(x, y, t))
    }
    /// Nemitski order `p`.
    fn nemitski_order(&self) -> f64;
    /// Multiplier of `|t|^p` in the Nemitski bound.
    fn growth(&self) -> f64 {
        1.0
    }
    fn envelope_b(&self, x: &[f64], y: f64) -> f64;
    fn envelope_b1(&self, a: f64, x: &[f64], y: f64) -> f64;
    fn envelope_b2(&self, a: f64) -> f64;
    /// Whether the loss is meant for labels in `{-1, 1}`.
    fn binary_labels(&self) -> bool {
        false
    }
}

/// A convex loss that is Lipschitz in `t`, uniformly in `(x, y)`.
pub trait LipschitzLoss: Send + Sync + Debug {
    fn name(&self) -> String;
    fn value(&self, x: &[f64], y: f64, t: f64) -> f64;
    /// The constant `b'` with `|L(x,y,t₁) - L(x,y,t₂)| ≤ b'|t₁ - t₂|`.
    fn lipschitz_constant(&self) -> f64;
    /// Points `t` where `t ↦ L(x, y, t)` is not differentiable.
    fn kinks(&self, x: &[f64], y: f64) -> Vec<f64>;
    fn nemitski_order(&self) -> f64 {
        1.0
    }
    /// `b(x, y)` with `L(x, y, t) ≤ b(x, y) + |t|^p`.
    fn envelope_b(&self, x: &[f64], y: f64) -> f64;
    fn binary_labels(&self) -> bool {
        false
    }
}

/// Serializable description of a loss, as used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    LeastSquares,
    Logistic,
    Huber {
        delta: f64,
    },
    MollifiedHinge {
        eps: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    MollifiedEpsInsensitive {
        eps: f64,
        eps_ins: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

impl LossSpec {
    pub fn build(&self) -> Result<Arc<dyn SmoothLoss>> {
        Ok(match *self {
            LossSpec::LeastSquares => Arc::new(LeastSquares),
            LossSpec::Logistic => Arc::new(Logistic),
            LossSpec::Huber { delta } => Arc::new(Huber::new(delta)?),
            LossSpec::MollifiedHinge { eps, nodes } => Arc::new(mollify(Hinge, eps, nodes)?),
            LossSpec::MollifiedEpsInsensitive {
                eps,
                eps_ins,
                nodes,
            } => Arc::new(mollify(EpsInsensitive::new(eps_ins)?, eps, nodes)?),
        })
    }
}

/// Outcome of [`check_smoothness`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub samples: usize,
    pub step: f64,
    /// `max |d1 - Δvalue| / (1 + |value|)` over the samples.
    pub max_rel_error_d1: f64,
    /// `max |d2 - Δd1| / (1 + |value|)` over the samples.
    pub max_rel_error_d2: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SmoothnessReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_d1.max(self.max_rel_error_d2)
    }
}

/// Central-difference step used by [`check_smoothness`].
pub const SMOOTHNESS_STEP: f64 = 1e-5;
/// Default pass threshold of [`check_smoothness`].
pub const SMOOTHNESS_TOLERANCE: f64 = 1e-5;

/// Validates `d1` against central differences of `value`, and `d2` against
/// central differences of `d1`, at `samples` random triples.
///
/// Labels are drawn from `{-1, 1}` for classification losses and from
/// `[-2, 2]` otherwise; `t` is uniform on `[-3, 3]`.
pub fn check_smoothness(
    loss: &dyn SmoothLoss,
    samples: usize,
    seed: u64,
    tolerance: f64,
) -> SmoothnessReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = SMOOTHNESS_STEP;
    let x: [f64; 0] = [];
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let y = if loss.binary_labels() {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        } else {
            rng.random_range(-2.0..2.0)
        };
        let t = rng.random_range(-3.0..3.0);
        let scale = 1.0 + loss.value(&x, y, t).abs();
        let fd1 = (loss.value(&x, y, t + h) - loss.value(&x, y, t - h)) / (2.0 * h);
        let fd2 = (loss.d1(&x, y, t + h) - loss.d1(&x, y, t - h)) / (2.0 * h);
        e1 = e1.max((loss.d1(&x, y, t) - fd1).abs() / scale);
        e2 = e2.max((loss.d2(&x, y, t) - fd2).abs() / scale);
    }
    SmoothnessReport {
        samples,
        step: h,
        max_rel_error_d1: e1,
        max_rel_error_d2: e2,
        tolerance,
        passed: e1.max(e2) <= tolerance,
    }
}
