//! Smoothing of Lipschitz losses by convolution with a compactly supported
//! bump function.
//!
//! With `φ(u) = γ⁻¹ exp(-1 / (1 - u²))` on `(-1, 1)` and window half-width
//! `h = ε / b'`, the smoothed loss is
//!
//! ```text
//! L_ε(x, y, t) = (b'/ε) ∫ φ(s b'/ε) L(x, y, t - s) ds = ∫ φ(u) L(x, y, t - h u) du
//! ```
//!
//! and its `t`-derivatives move onto the bump:
//! `L_ε^{(m)}(t) = h^{-m} ∫ φ^{(m)}(u) L(x, y, t - h u) du`.
//!
//! The integrals are evaluated with a Gauss–Legendre rule on panels of
//! `[-1, 1]` split at `0`, `±1/2` and at the preimages of the kinks of `L`, so
//! every panel carries a smooth integrand.

use std::sync::OnceLock;

use super::{LipschitzLoss, SmoothLoss};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

pub const DEFAULT_NODES: usize = 64;
const MIN_NODES: usize = 32;
const SELF_CHECK_TOL: f64 = 1e-8;

fn bump(u: f64) -> f64 {
    let q = 1.0 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// `γ = ∫_{-1}^{1} exp(-1 / (1 - u²)) du ≈ 0.443994`.
pub fn mollifier_constant() -> f64 {
    static GAMMA: OnceLock<f64> = OnceLock::new();
    *GAMMA.get_or_init(|| {
        let q = GaussLegendre::new(256);
        q.integrate(-1.0, 0.0, bump) + q.integrate(0.0, 1.0, bump)
    })
}

/// The normalized mollifier `φ(u)` and its first two derivatives.
pub fn mollifier(u: f64) -> (f64, f64, f64) {
    let q = 1.0 - u * u;
    if q <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let phi = (-1.0 / q).exp() / mollifier_constant();
    if phi == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    // φ' = φ·g with g = -2u/q², φ'' = φ·(g² + g'), g' = -2/q² - 8u²/q³
    let g = -2.0 * u / (q * q);
    let dg = -2.0 / (q * q) - 8.0 * u * u / (q * q * q);
    (phi, phi * g, phi * (g * g + dg))
}

/// The ε-smoothed version of a Lipschitz loss.
#[derive(Debug, Clone)]
pub struct Mollified<L> {
    base: L,
    eps: f64,
    half_width: f64,
    rule: GaussLegendre,
    b2: f64,
}

/// Builds `L_ε` from a Lipschitz loss.
///
/// Fails with an input error for `eps ≤ 0` or fewer than 32 nodes, and with
/// an internal error when the node table does not integrate `φ` to one
/// within `1e-8`.
pub fn mollify<L: LipschitzLoss>(base: L, eps: f64, nodes: usize) -> Result<Mollified<L>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::input(format!(
            "mollifier eps must be positive, got {eps}"
        )));
    }
    if nodes < MIN_NODES {
        return Err(Error::input(format!(
            "mollifier needs at least {MIN_NODES} quadrature nodes, got {nodes}"
        )));
    }
    let lip = base.lipschitz_constant();
    if !(lip > 0.0 && lip.is_finite()) {
        return Err(Error::input(format!(
            "Lipschitz constant must be positive, got {lip}"
        )));
    }
    let rule = GaussLegendre::new(nodes);
    let mass = rule.integrate(-1.0, 0.0, |u| mollifier(u).0)
        + rule.integrate(0.0, 1.0, |u| mollifier(u).0);
    if (mass - 1.0).abs() > SELF_CHECK_TOL {
        return Err(Error::internal(format!(
            "mollifier quadrature self-check failed: mass {mass}"
        )));
    }
    let abs_slope = rule.integrate(-1.0, 0.0, |u| mollifier(u).1.abs())
        + rule.integrate(0.0, 1.0, |u| mollifier(u).1.abs());
    // ∫|∂φ_ε/∂s| ds = ∫|φ'(u)| du, so b'' = b'·(b'/ε)·∫|φ'|.
    let b2 = lip * (lip / eps) * abs_slope;
    Ok(Mollified {
        base,
        eps,
        half_width: eps / lip,
        rule,
        b2,
    })
}

impl<L: LipschitzLoss> Mollified<L> {
    pub fn base(&self) -> &L {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `ε / b'`: `L_ε` and `L` agree wherever the nearest kink is farther away than this.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    /// `(L_ε, L_ε', L_ε'')` in one pass over the quadrature nodes.
    pub fn value_and_derivatives(&self, x: &[f64], y: f64, t: f64) -> (f64, f64, f64) {
        let h = self.half_width;
        let mut cuts = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
        for k in self.base.kinks(x, y) {
            let u = (t - k) / h;
            if u > -1.0 && u < 1.0 {
                cuts.push(u);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        // Integrate L(t - hu) - L(t): the constant integrates to 1 against φ
        // and to 0 against φ', φ'', and the remainder is odd in affine regions.
        let center = self.base.value(x, y, t);
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (node, weight) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let u = mid + half * node;
                let (p0, p1, p2) = mollifier(u);
                let diff = self.base.value(x, y, t - h * u) - center;
                let wt = weight * half;
                v += wt * p0 * diff;
                d1 += wt * p1 * diff;
                d2 += wt * p2 * diff;
            }
        }
        (center + v, d1 / h, d2 / (h * h))
    }

    /// Bound on `|L_ε''|`.
    pub fn second_derivative_bound(&self) -> f64 {
        self.b2
    }
}

impl<L: LipschitzLoss> SmoothLoss for Mollified<L> {
    fn name(&self) -> String {
        format!("mollified_{}(eps={})", self.base.name(), self.eps)
    }

    fn value(&self, x: &[f64], y: f64, t: f64) -> f64 {
        self.value_and_derivatives(x, y, t).0
    }

    fn d1(&self, x: &[f64], y: f64, t: f64) -> f64 {
        self.value_and_derivatives(x, y, t).1
    }

    fn d2(&self, x: &[f64], y: f64, t: f64) -> f64 {
        self.value_and_derivatives(x, y, t).2
    }

    fn derivatives(&self, x: &[f64], y: f64, t: f64) -> (f64, f64, f64) {
        self.value_and_derivatives(x, y, t)
    }

    fn nemitski_order(&self) -> f64 {
        self.base.nemitski_order()
    }

    fn envelope_b(&self, x: &[f64], y: f64) -> f64 {
        self.base.envelope_b(x, y) + self.eps
    }

    fn envelope_b1(&self, _a: f64, _x: &[f64], _y: f64) -> f64 {
        self.base.lipschitz_constant()
    }

    fn envelope_b2(&self, _a: f64) -> f64 {
        self.b2
    }

    fn binary_labels(&self) -> bool {
        self.base.binary_labels()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{EpsInsensitive, Hinge};
    use proptest::prelude::*;

    // mpmath quad of exp(-1/(1-t^2)) over [-1, 0, 1] at 30 digits
    const GAMMA_ORACLE: f64 = 0.443_993_816_168_079_4;

    #[test]
    fn constant_matches_high_precision_oracle() {
        assert!((mollifier_constant() - GAMMA_ORACLE).abs() < 1e-14);
        assert!((mollifier_constant() - 0.443994).abs() < 1e-6);
    }

    #[test]
    fn mollifier_shape() {
        assert_eq!(mollifier(1.0).0, 0.0);
        assert_eq!(mollifier(-1.0).0, 0.0);
        let want = (-1.0f64).exp() / GAMMA_ORACLE;
        assert!((mollifier(0.0).0 - want).abs() < 1e-14);
        let q = GaussLegendre::new(DEFAULT_NODES);
        let mass =
            q.integrate(-1.0, 0.0, |u| mollifier(u).0) + q.integrate(0.0, 1.0, |u| mollifier(u).0);
        assert!((mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mollifier_derivatives_match_differences() {
        let h = 1e-6;
        for u in [-0.9, -0.5, -0.1, 0.0, 0.3, 0.7, 0.95] {
            let (_, d1, d2) = mollifier(u);
            let fd1 = (mollifier(u + h).0 - mollifier(u - h).0) / (2.0 * h);
            let fd2 = (mollifier(u + h).1 - mollifier(u - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()), "u={u}");
            assert!((d2 - fd2).abs() < 1e-5 * (1.0 + d2.abs()), "u={u}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(mollify(Hinge, 0.0, 64), Err(Error::Input(_))));
        assert!(matches!(mollify(Hinge, -1.0, 64), Err(Error::Input(_))));
        assert!(matches!(mollify(Hinge, 0.1, 16), Err(Error::Input(_))));
        assert!(mollify(Hinge, 0.1, 32).is_ok());
    }

    #[test]
    fn hinge_far_from_kink_is_reproduced() {
        let m = mollify(Hinge, 0.1, DEFAULT_NODES).unwrap();
        assert_eq!(m.value(&[], 1.0, -2.0), 3.0);
        assert_eq!(m.value(&[], 1.0, 2.0), 0.0);
        assert!((m.d1(&[], 1.0, -2.0) + 1.0).abs() < 1e-12);
        assert!(m.d2(&[], 1.0, -2.0).abs() < 1e-9);
    }

    #[test]
    fn hinge_at_kink_matches_quadrature_oracle() {
        // mpmath: ∫_0^1 φ(u)·0.1u du / γ
        let oracle = 0.016_722_699_885_498_77;
        let m = mollify(Hinge, 0.1, DEFAULT_NODES).unwrap();
        let v = m.value(&[], 1.0, 1.0);
        assert!(v > 0.0 && v <= 0.1);
        assert!((v - oracle).abs() < 1e-12, "{v}");
        // the 10x node-count rule agrees
        let fine = mollify(Hinge, 0.1, 640).unwrap();
        assert!((fine.value(&[], 1.0, 1.0) - v).abs() < 1e-13);
    }

    #[test]
    fn second_derivative_bound_closed_form() {
        // ∫|φ'| = 2φ(0)
        let m = mollify(Hinge, 0.1, DEFAULT_NODES).unwrap();
        let want = 1.0 * (1.0 / 0.1) * 2.0 * (-1.0f64).exp() / GAMMA_ORACLE;
        assert!((m.second_derivative_bound() - want).abs() < 1e-10 * want);
    }

    #[test]
    fn hinge_second_derivative_is_scaled_bump() {
        // L'' of the hinge is the unit mass at the kink, so L_ε''(t) = φ((t - 1)/h)/h.
        let m = mollify(Hinge, 0.1, DEFAULT_NODES).unwrap();
        for t in [0.93, 0.97, 1.0, 1.04, 1.08] {
            let want = mollifier((t - 1.0) / 0.1).0 / 0.1;
            assert!((m.d2(&[], 1.0, t) - want).abs() < 1e-9, "t={t}");
        }
    }

    proptest! {
        #[test]
        fn smoothing_error_and_derivative_bounds(y in -1.0f64..1.0, yb in any::<bool>(), t in -4.0f64..4.0) {
            let yc = if yb { 1.0 } else { -1.0 };
            for eps in [0.5, 0.1, 0.02] {
                let mh = mollify(Hinge, eps, DEFAULT_NODES).unwrap();
                let me = mollify(EpsInsensitive::new(0.3).unwrap(), eps, DEFAULT_NODES).unwrap();
                let (v, d1, d2) = mh.value_and_derivatives(&[], yc, t);
                prop_assert!((v - Hinge.value(&[], yc, t)).abs() <= eps);
                prop_assert!(d1.abs() <= 1.0 + 1e-9);
                prop_assert!(d2 >= -1e-9);
                prop_assert!(d2 <= mh.second_derivative_bound() + 1e-9);
                let base = EpsInsensitive::new(0.3).unwrap();
                let (v, d1, d2) = me.value_and_derivatives(&[], y, t);
                prop_assert!((v - base.value(&[], y, t)).abs() <= eps);
                prop_assert!(d1.abs() <= 1.0 + 1e-9);
                prop_assert!(d2 >= -1e-9);
            }
        }
    }
}
