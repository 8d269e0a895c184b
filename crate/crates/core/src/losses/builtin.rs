use super::{LipschitzLoss, SmoothLoss};
use crate::error::{Error, Result};

/// `L(x, y, t) = (y - t)²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LeastSquares;

impl SmoothLoss for LeastSquares {
    fn name(&self) -> String {
        "least_squares".into()
    }

    fn value(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        (y - t) * (y - t)
    }

    fn d1(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        -2.0 * (y - t)
    }

    fn d2(&self, _x: &[f64], _y: f64, _t: f64) -> f64 {
        2.0
    }

    fn nemitski_order(&self) -> f64 {
        2.0
    }

    // (y - t)² ≤ 2y² + 2t²
    fn growth(&self) -> f64 {
        2.0
    }

    fn envelope_b(&self, _x: &[f64], y: f64) -> f64 {
        2.0 * y * y
    }

    fn envelope_b1(&self, a: f64, _x: &[f64], y: f64) -> f64 {
        2.0 * (y.abs() + a)
    }

    fn envelope_b2(&self, _a: f64) -> f64 {
        2.0
    }
}

/// `L(x, y, t) = ln(1 + e^{-yt})` for labels `y ∈ {-1, 1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Logistic;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SmoothLoss for Logistic {
    fn name(&self) -> String {
        "logistic".into()
    }

    fn value(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        softplus(-y * t)
    }

    fn d1(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        -y * sigmoid(-y * t)
    }

    fn d2(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        y * y * sigmoid(y * t) * sigmoid(-y * t)
    }

    fn nemitski_order(&self) -> f64 {
        1.0
    }

    fn envelope_b(&self, _x: &[f64], _y: f64) -> f64 {
        std::f64::consts::LN_2
    }

    fn envelope_b1(&self, _a: f64, _x: &[f64], y: f64) -> f64 {
        y.abs()
    }

    fn envelope_b2(&self, _a: f64) -> f64 {
        0.25
    }

    fn binary_labels(&self) -> bool {
        true
    }
}

/// Huber loss with threshold `delta` on the residual `r = y - t`.
///
/// Only once continuously differentiable: `L''` jumps at `|r| = delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Huber {
    delta: f64,
}

impl Huber {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::input(format!(
                "huber delta must be positive, got {delta}"
            )));
        }
        Ok(Huber { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl SmoothLoss for Huber {
    fn name(&self) -> String {
        format!("huber(delta={})", self.delta)
    }

    fn value(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        let r = (y - t).abs();
        if r <= self.delta {
            0.5 * r * r
        } else {
            self.delta * (r - 0.5 * self.delta)
        }
    }

    fn d1(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        -(y - t).clamp(-self.delta, self.delta)
    }

    fn d2(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        if (y - t).abs() <= self.delta {
            1.0
        } else {
            0.0
        }
    }

    // δ|y - t| ≤ δ|y| + δ²/4 + t²
    fn nemitski_order(&self) -> f64 {
        2.0
    }

    fn envelope_b(&self, _x: &[f64], y: f64) -> f64 {
        self.delta * y.abs() + 0.25 * self.delta * self.delta
    }

    fn envelope_b1(&self, a: f64, _x: &[f64], y: f64) -> f64 {
        self.delta.min(y.abs() + a)
    }

    fn envelope_b2(&self, _a: f64) -> f64 {
        1.0
    }
}

/// `L(x, y, t) = max(0, 1 - yt)` for labels `y ∈ {-1, 1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Hinge;

impl LipschitzLoss for Hinge {
    fn name(&self) -> String {
        "hinge".into()
    }

    fn value(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        (1.0 - y * t).max(0.0)
    }

    fn lipschitz_constant(&self) -> f64 {
        1.0
    }

    fn kinks(&self, _x: &[f64], y: f64) -> Vec<f64> {
        if y == 0.0 {
            Vec::new()
        } else {
            vec![1.0 / y]
        }
    }

    fn envelope_b(&self, _x: &[f64], _y: f64) -> f64 {
        1.0
    }

    fn binary_labels(&self) -> bool {
        true
    }
}

/// `L(x, y, t) = max(0, |y - t| - eps_ins)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsInsensitive {
    eps_ins: f64,
}

impl EpsInsensitive {
    pub fn new(eps_ins: f64) -> Result<Self> {
        if !(eps_ins >= 0.0 && eps_ins.is_finite()) {
            return Err(Error::input(format!("eps_ins must be >= 0, got {eps_ins}")));
        }
        Ok(EpsInsensitive { eps_ins })
    }

    pub fn eps_ins(&self) -> f64 {
        self.eps_ins
    }
}

impl LipschitzLoss for EpsInsensitive {
    fn name(&self) -> String {
        format!("eps_insensitive(eps_ins={})", self.eps_ins)
    }

    fn value(&self, _x: &[f64], y: f64, t: f64) -> f64 {
        ((y - t).abs() - self.eps_ins).max(0.0)
    }

    fn lipschitz_constant(&self) -> f64 {
        1.0
    }

    fn kinks(&self, _x: &[f64], y: f64) -> Vec<f64> {
        if self.eps_ins == 0.0 {
            vec![y]
        } else {
            vec![y - self.eps_ins, y + self.eps_ins]
        }
    }

    fn envelope_b(&self, _x: &[f64], y: f64) -> f64 {
        y.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logistic_slope_at_origin() {
        assert_eq!(Logistic.d1(&[], 1.0, 0.0), -0.5);
        assert_eq!(Logistic.d2(&[], -1.0, 0.0), 0.25);
        assert!((Logistic.value(&[], 1.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        // no overflow far in the tails
        assert!(Logistic.value(&[], 1.0, -800.0).is_finite());
        assert_eq!(Logistic.d1(&[], 1.0, 800.0), -0.0);
    }

    #[test]
    fn huber_pieces() {
        let h = Huber::new(1.0).unwrap();
        assert_eq!(h.value(&[], 0.0, 0.5), 0.125);
        assert_eq!(h.value(&[], 0.0, 3.0), 2.5);
        assert_eq!(h.d1(&[], 0.0, 3.0), 1.0);
        assert_eq!(h.d2(&[], 0.0, 3.0), 0.0);
    }

    #[test]
    fn kink_locations() {
        assert_eq!(Hinge.kinks(&[], 1.0), vec![1.0]);
        assert_eq!(Hinge.kinks(&[], -1.0), vec![-1.0]);
        let e = EpsInsensitive::new(0.25).unwrap();
        assert_eq!(e.kinks(&[], 1.0), vec![0.75, 1.25]);
    }

    proptest! {
        #[test]
        fn least_squares_nemitski(y in -10.0f64..10.0, t in -10.0f64..10.0) {
            let l = LeastSquares;
            prop_assert!(l.value(&[], y, t) <= l.envelope_b(&[], y) + l.growth() * t * t + 1e-12);
        }

        #[test]
        fn smooth_losses_are_convex_and_enveloped(y in -3.0f64..3.0, yb in any::<bool>(), t in -5.0f64..5.0) {
            let yc = if yb { 1.0 } else { -1.0 };
            let h = Huber::new(0.8).unwrap();
            let cases: [(&dyn SmoothLoss, f64); 3] = [(&LeastSquares, y), (&Logistic, yc), (&h, y)];
            for (l, y) in cases {
                prop_assert!(l.d2(&[], y, t) >= 0.0);
                let p = l.nemitski_order();
                prop_assert!(l.value(&[], y, t) <= l.envelope_b(&[], y) + l.growth() * t.abs().powf(p) + 1e-12);
                let a = t.abs();
                prop_assert!(l.d1(&[], y, t).abs() <= l.envelope_b1(a, &[], y) + 1e-12);
                prop_assert!(l.d2(&[], y, t).abs() <= l.envelope_b2(a) + 1e-12);
            }
        }

        #[test]
        fn lipschitz_losses_respect_their_constant(y in -1.0f64..1.0, t1 in -4.0f64..4.0, t2 in -4.0f64..4.0) {
            let e = EpsInsensitive::new(0.3).unwrap();
            let cases: [&dyn LipschitzLoss; 2] = [&Hinge, &e];
            for l in cases {
                let diff = (l.value(&[], y, t1) - l.value(&[], y, t2)).abs();
                prop_assert!(diff <= l.lipschitz_constant() * (t1 - t2).abs() + 1e-12);
            }
        }
    }
}
