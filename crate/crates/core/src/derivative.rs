//! Derivative of the measure-to-estimator map and the objects built on it.
//!
//! For a nonnegative base measure `F` with solution `f_F = S(F)`, the
//! linear operator
//!
//! ```text
//! K_F h = 2λ₀ h + ∫ L''(x, y, f_F(x)) h(x) Φ(x) dF(x, y)
//! ```
//!
//! is self-adjoint and bounded below by `2λ₀`, hence invertible, and the
//! derivative of `S` at `F` in a (signed) direction `G` is
//!
//! ```text
//! S'_F(G) = -K_F⁻¹ ∫ L'(x, y, f_F(x)) Φ(x) dG(x, y).
//! ```
//!
//! Influence functions, the plug-in covariance of the Gaussian limit and
//! the degeneracy test all reduce to applications of `K_F⁻¹`.
//!
//! In the coefficient basis of the distinct inputs `a_j` of `F`, `K_F`
//! acts as `β ↦ 2λ₀ β + D G β`, with `G` the Gram matrix and
//! `D = diag(Σ_{x_i = a_j} w_i L''_i)`. Functions with anchors outside
//! `F` only see the `2λ₀` part, so inverses on the enlarged span are
//! solved blockwise with one factorization of the `F` block.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{AnchorIndex, Point, RkhsFunction};
use crate::measures::{Atom, FiniteMeasure};
use crate::solver::{Design, SolverOptions, Svm};

/// `K_F` at a fixed base measure, with its factorization.
pub struct DerivativeContext {
    svm: Svm,
    base: FiniteMeasure,
    lambda0: f64,
    solution: RkhsFunction,
    anchors: Vec<Point>,
    gram: DMatrix<f64>,
    curvature: DVector<f64>,
    k_matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl std::fmt::Debug for DerivativeContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DerivativeContext")
            .field("lambda0", &self.lambda0)
            .field("anchors", &self.anchors.len())
            .field("loss", &self.svm.loss.name())
            .finish()
    }
}

impl DerivativeContext {
    /// Solves for `f_F` and assembles `K_F` on the distinct inputs of `F`.
    pub fn build(svm: &Svm, base: &FiniteMeasure, lambda0: f64) -> Result<Self> {
        let solution = svm.s_functional(base, lambda0)?;
        let design = Design::new(&svm.kernel, base)?;
        let t = DVector::from_iterator(
            design.anchors.len(),
            design.anchors.iter().map(|a| solution.eval_unchecked(a)),
        );
        let (_, _, curvature) = design.loss_terms(svm.loss.as_ref(), &t);
        let m = design.anchors.len();
        let mut k_matrix = DMatrix::from_diagonal(&curvature) * &design.gram;
        for j in 0..m {
            k_matrix[(j, j)] += 2.0 * lambda0;
        }
        let lu = k_matrix.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::internal("K_F is singular"));
        }
        Ok(DerivativeContext {
            svm: svm.clone(),
            base: base.clone(),
            lambda0,
            solution,
            anchors: design.anchors,
            gram: design.gram,
            curvature,
            k_matrix,
            lu,
        })
    }

    pub fn svm(&self) -> &Svm {
        &self.svm
    }

    pub fn base(&self) -> &FiniteMeasure {
        &self.base
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// `f_F = S(F)`.
    pub fn solution(&self) -> &RkhsFunction {
        &self.solution
    }

    /// Distinct inputs of `F`, the basis of [`k_matrix`](Self::k_matrix).
    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `K_F` in the coefficient basis of [`anchors`](Self::anchors).
    pub fn k_matrix(&self) -> &DMatrix<f64> {
        &self.k_matrix
    }

    /// `Σ_{x_i = a_j} w_i L''(x_i, y_i, f_F(a_j))` per anchor.
    pub fn curvature(&self) -> &DVector<f64> {
        &self.curvature
    }

    /// 1-norm condition number of the `F` block.
    pub fn condition_estimate(&self) -> f64 {
        let inv = self
            .lu
            .try_inverse()
            .unwrap_or_else(|| DMatrix::zeros(0, 0));
        one_norm(&self.k_matrix) * one_norm(&inv)
    }

    fn check_function(&self, h: &RkhsFunction) -> Result<()> {
        if h.kernel != self.svm.kernel {
            return Err(Error::input(
                "function kernel differs from the context kernel",
            ));
        }
        Ok(())
    }

    /// Splits `h` into coefficients on the `F` anchors and on extra anchors.
    fn split(&self, h: &RkhsFunction) -> (DVector<f64>, Vec<Point>, DVector<f64>) {
        let mut index = AnchorIndex::default();
        for a in &self.anchors {
            index.insert(a);
        }
        let mut coef = vec![0.0; self.anchors.len()];
        for (a, c) in h.anchors.iter().zip(&h.coefficients) {
            let j = index.insert(a);
            if j == coef.len() {
                coef.push(0.0);
            }
            coef[j] += c;
        }
        let m = self.anchors.len();
        let extra = index.into_points().split_off(m);
        let cf = DVector::from_column_slice(&coef[..m]);
        let cn = DVector::from_column_slice(&coef[m..]);
        (cf, extra, cn)
    }

    /// `K_F h`.
    pub fn apply(&self, h: &RkhsFunction) -> Result<RkhsFunction> {
        self.check_function(h)?;
        let on_anchors = DVector::from_iterator(
            self.anchors.len(),
            self.anchors.iter().map(|a| h.eval_unchecked(a)),
        );
        let weighted = on_anchors.component_mul(&self.curvature);
        let second = RkhsFunction {
            kernel: self.svm.kernel,
            anchors: self.anchors.clone(),
            coefficients: weighted.iter().copied().collect(),
        };
        h.combine(&second, 2.0 * self.lambda0, 1.0)
    }

    /// `K_F⁻¹ h`, exact on `span{Φ(a) : a ∈ anchors(F) ∪ anchors(h)}`.
    pub fn apply_inverse(&self, h: &RkhsFunction) -> Result<RkhsFunction> {
        self.check_function(h)?;
        let (cf, extra, cn) = self.split(h);
        let two_lambda = 2.0 * self.lambda0;
        let beta_n = &cn / two_lambda;
        let mut rhs = cf;
        if !extra.is_empty() {
            let cross = self.svm.kernel.cross_gram(&self.anchors, &extra);
            rhs -= (&cross * &beta_n).component_mul(&self.curvature);
        }
        let beta_f = if self.anchors.is_empty() {
            rhs
        } else {
            self.lu
                .solve(&rhs)
                .ok_or_else(|| Error::internal("K_F solve failed"))?
        };
        let mut anchors = self.anchors.clone();
        anchors.extend(extra);
        let coefficients = beta_f.iter().chain(beta_n.iter()).copied().collect();
        Ok(RkhsFunction {
            kernel: self.svm.kernel,
            anchors,
            coefficients,
        })
    }

    /// `L'(x, y, f_F(x))`.
    fn slope_at(&self, atom: &Atom) -> f64 {
        self.svm
            .loss
            .d1(&atom.x, atom.y, self.solution.eval_unchecked(&atom.x))
    }

    /// `∫ L'(x, y, f_F(x)) Φ(x) dG`.
    fn gradient_embedding(&self, g: &FiniteMeasure) -> Result<RkhsFunction> {
        if g.dim() != self.svm.kernel.input_dim {
            return Err(Error::input(format!(
                "direction has dimension {}, kernel expects {}",
                g.dim(),
                self.svm.kernel.input_dim
            )));
        }
        let mut index = AnchorIndex::default();
        let mut coef = Vec::new();
        for (atom, v) in g.iter() {
            let j = index.insert(&atom.x);
            if j == coef.len() {
                coef.push(0.0);
            }
            coef[j] += v * self.slope_at(atom);
        }
        Ok(RkhsFunction {
            kernel: self.svm.kernel,
            anchors: index.into_points(),
            coefficients: coef,
        })
    }

    /// `S'_F(G) = -K_F⁻¹ ∫ L'_{f_F} Φ dG`.
    pub fn s_prime(&self, g: &FiniteMeasure) -> Result<RkhsFunction> {
        let u = self.gradient_embedding(g)?;
        Ok(self.apply_inverse(&u)?.scale(-1.0))
    }

    /// `IF(z) = S'_P(δ_z - P)`; the base measure must be a probability measure.
    pub fn influence_function(&self, z: &Atom) -> Result<RkhsFunction> {
        self.require_probability()?;
        let dz = FiniteMeasure::dirac(z.x.clone(), z.y)?;
        self.s_prime(&dz.combine(&self.base, 1.0, -1.0)?)
    }

    fn require_probability(&self) -> Result<()> {
        if !self.base.is_probability() {
            return Err(Error::input("base measure must be a probability measure"));
        }
        Ok(())
    }

    /// Finite-difference check of the Gâteaux derivative in direction `G`.
    pub fn gateaux_fd_check(&self, g: &FiniteMeasure, ts: &[f64]) -> Result<FdReport> {
        self.fd_check(g, None, ts)
    }

    /// Hadamard variant: the direction drifts as `G_t = G + t·drift → G`.
    pub fn hadamard_fd_check(
        &self,
        g: &FiniteMeasure,
        drift: &FiniteMeasure,
        ts: &[f64],
    ) -> Result<FdReport> {
        self.fd_check(g, Some(drift), ts)
    }

    fn fd_check(
        &self,
        g: &FiniteMeasure,
        drift: Option<&FiniteMeasure>,
        ts: &[f64],
    ) -> Result<FdReport> {
        let derivative = self.s_prime(g)?;
        let tight = self.svm.clone().with_options(SolverOptions {
            tol_grad: 1e-14,
            ..self.svm.options.clone()
        });
        let mut errors = Vec::with_capacity(ts.len());
        let mut max_grad = 0.0f64;
        for &t in ts {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::input(format!("step t = {t} must be positive")));
            }
            let dir = match drift {
                Some(h) => g.combine(h, 1.0, t)?,
                None => g.clone(),
            };
            let perturbed = self.base.combine(&dir, 1.0, t)?;
            if !perturbed.is_nonnegative() {
                return Err(Error::input(format!(
                    "F + t·G is not a nonnegative measure at t = {t}"
                )));
            }
            let rep = tight.solve(&perturbed, self.lambda0)?;
            max_grad = max_grad.max(rep.grad_norm_h);
            let quotient = rep.solution.combine(&self.solution, 1.0 / t, -1.0 / t)?;
            errors.push(quotient.distance(&derivative)?);
        }
        let slope = log_log_slope(ts, &errors);
        Ok(FdReport {
            ts: ts.to_vec(),
            errors,
            slope,
            derivative_norm: derivative.norm(),
            max_solver_grad_norm: max_grad,
        })
    }

    /// Plug-in covariance of the Gaussian limit evaluated on `grid`, and
    /// optionally the scale of the risk limit.
    ///
    /// With `h_i = K_P⁻¹ Φ(x_i)` and `g_i = L'_{f_P} · h_i`,
    /// `Σ_ij = Cov_P(g_i, g_j)`. For the risk, `h_u = K_P⁻¹ ∫L'_{f_P}Φ dP`
    /// and `σ² = Var_P(L'_{f_P} · h_u)`.
    pub fn plugin_covariance(&self, grid: &[Point], also_risk: bool) -> Result<CovarianceEstimate> {
        self.require_probability()?;
        for x in grid {
            self.svm.kernel.check_point(x)?;
        }
        let slopes: Vec<f64> = self.base.atoms().iter().map(|a| self.slope_at(a)).collect();
        let features = grid
            .iter()
            .map(|x| {
                let h = self.apply_inverse(&RkhsFunction::feature(self.svm.kernel, x.clone())?)?;
                Ok(self.transported(&h, &slopes))
            })
            .collect::<Result<Vec<_>>>()?;
        let m = grid.len();
        let mut sigma = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let c = self.covariance(&features[i], &features[j]);
                sigma[i][j] = c;
                sigma[j][i] = c;
            }
        }
        let risk_sigma = if also_risk {
            let u = self.gradient_embedding(&self.base)?;
            let h = self.apply_inverse(&u)?;
            let g = self.transported(&h, &slopes);
            Some(self.covariance(&g, &g).max(0.0).sqrt())
        } else {
            None
        };
        let f0_on_grid = grid
            .iter()
            .map(|x| self.solution.eval_unchecked(x))
            .collect();
        Ok(CovarianceEstimate {
            grid: grid.to_vec(),
            f0_on_grid,
            sigma_matrix: sigma,
            risk_sigma,
        })
    }

    /// `(L'_{f_P} · h)(atom)` for every atom of the base measure.
    fn transported(&self, h: &RkhsFunction, slopes: &[f64]) -> Vec<f64> {
        self.base
            .atoms()
            .iter()
            .zip(slopes)
            .map(|(a, s)| s * h.eval_unchecked(&a.x))
            .collect()
    }

    /// Covariance of two atom-indexed values under the base probability measure.
    fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.base.weights();
        let ma: f64 = a.iter().zip(w).map(|(v, w)| v * w).sum();
        let mb: f64 = b.iter().zip(w).map(|(v, w)| v * w).sum();
        a.iter()
            .zip(b)
            .zip(w)
            .map(|((x, y), w)| w * (x - ma) * (y - mb))
            .sum()
    }

    /// Tests whether `L'_{f_P} · h` is `P`-a.s. constant for `h = Φ(a_j)`
    /// over all anchors and for `basis_size` random unit-norm `h`.
    pub fn degeneracy_check(&self, basis_size: usize, seed: u64) -> Result<DegeneracyReport> {
        self.require_probability()?;
        let slopes: Vec<f64> = self.base.atoms().iter().map(|a| self.slope_at(a)).collect();
        let mut candidates: Vec<(String, RkhsFunction)> = self
            .anchors
            .iter()
            .map(|a| {
                (
                    format!("feature{a:?}"),
                    RkhsFunction::feature(self.svm.kernel, a.clone()),
                )
            })
            .map(|(l, f)| f.map(|f| (l, f)))
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for r in 0..basis_size {
            let coef: Vec<f64> = (0..self.anchors.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let f = RkhsFunction {
                kernel: self.svm.kernel,
                anchors: self.anchors.clone(),
                coefficients: coef,
            };
            let n = f.norm();
            if n > 0.0 {
                candidates.push((format!("random#{r}"), f.scale(1.0 / n)));
            }
        }
        let (mut max_variance, mut argmax) = (0.0f64, String::new());
        for (label, h) in &candidates {
            let g = self.transported(h, &slopes);
            let v = self.covariance(&g, &g).max(0.0);
            if v > max_variance || argmax.is_empty() {
                max_variance = v;
                argmax = label.clone();
            }
        }
        let max_slope = slopes.iter().map(|s| s.abs()).fold(0.0, f64::max);
        let k_sup = self.svm.kernel.sup_norm_on(&self.anchors);
        let threshold = 1e-12 * (1.0 + max_slope * max_slope * k_sup * k_sup);
        Ok(DegeneracyReport {
            directions: candidates.len(),
            max_variance,
            argmax,
            threshold,
            degenerate: max_variance <= threshold,
        })
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Least-squares slope of `log e` against `log t` over the positive errors.
fn log_log_slope(ts: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(t, e)| (t.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Result of a finite-difference derivative check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub ts: Vec<f64>,
    /// `‖(S(F + tG) - S(F))/t - S'_F(G)‖_H` per step.
    pub errors: Vec<f64>,
    /// Slope of `log e` against `log t`; `None` when fewer than two errors are positive.
    pub slope: Option<f64>,
    pub derivative_norm: f64,
    pub max_solver_grad_norm: f64,
}

impl FdReport {
    /// Errors strictly decrease along the step sequence.
    pub fn decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0)
    }
}

/// Plug-in covariance of `√n (f_n - f_0)` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub grid: Vec<Point>,
    pub f0_on_grid: Vec<f64>,
    pub sigma_matrix: Vec<Vec<f64>>,
    pub risk_sigma: Option<f64>,
}

impl CovarianceEstimate {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.sigma_matrix[i][i])
            .collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let m = self.grid.len();
        DMatrix::from_fn(m, m, |i, j| self.sigma_matrix[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub directions: usize,
    pub max_variance: f64,
    pub argmax: String,
    pub threshold: f64,
    pub degenerate: bool,
}
