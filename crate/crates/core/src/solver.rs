//! Regularized kernel estimation on finite measures.
//!
//! For a nonnegative finite measure `μ = Σ_i w_i δ_(x_i, y_i)` the estimator
//!
//! ```text
//! f_{μ,λ} = argmin_{f ∈ H}  Σ_i w_i L(x_i, y_i, f(x_i)) + λ ‖f‖²_H
//! ```
//!
//! lies in the span of `Φ(a_1), …, Φ(a_m)` over the distinct inputs `a_j` of
//! the atoms. Writing `f = Σ_j α_j Φ(a_j)` with Gram matrix `K`, the
//! H-gradient of the objective is `Σ_j g_j Φ(a_j)` with
//! `g = 2λα + r`, `r_j = Σ_{i: x_i = a_j} w_i L'(x_i, y_i, f(a_j))`, and a
//! Newton step `δ` solves `(diag(d) K + 2λ I) δ = -g` where `d_j` collects
//! `w_i L''` the same way. That system is nonsingular for `λ > 0` even when
//! `K` is not, so `K` is never inverted.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{AnchorIndex, KernelSpec, Point, RkhsFunction};
use crate::losses::SmoothLoss;
use crate::measures::FiniteMeasure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative tolerance: stop once `‖∇‖_H ≤ tol_grad · max(1, |objective|)`.
    pub tol_grad: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            tol_grad: 1e-10,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solution: RkhsFunction,
    pub objective: f64,
    pub grad_norm_h: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at every accepted iterate, starting with the initial point.
    /// Non-increasing up to `ROUNDING_SLACK · max(1, |objective|)` per step.
    pub objective_trace: Vec<f64>,
}

/// A kernel together with a loss: everything needed to define `f_{μ,λ}`.
#[derive(Debug, Clone)]
pub struct Svm {
    pub kernel: KernelSpec,
    pub loss: Arc<dyn SmoothLoss>,
    pub options: SolverOptions,
}

/// The atoms of a measure mapped onto their distinct inputs.
pub(crate) struct Design<'a> {
    pub(crate) mu: &'a FiniteMeasure,
    pub(crate) anchors: Vec<Point>,
    pub(crate) atom_anchor: Vec<usize>,
    pub(crate) gram: DMatrix<f64>,
}

impl<'a> Design<'a> {
    pub(crate) fn new(kernel: &KernelSpec, mu: &'a FiniteMeasure) -> Result<Self> {
        if mu.dim() != kernel.input_dim {
            return Err(Error::input(format!(
                "measure dimension {} does not match kernel input_dim {}",
                mu.dim(),
                kernel.input_dim
            )));
        }
        let mut index = AnchorIndex::default();
        let atom_anchor = mu.atoms().iter().map(|a| index.insert(&a.x)).collect();
        let anchors = index.into_points();
        let gram = kernel.gram_unchecked(&anchors);
        Ok(Design {
            mu,
            anchors,
            atom_anchor,
            gram,
        })
    }

    /// Per-anchor sums of `w·L`, `w·L'`, `w·L''` at anchor values `t`.
    pub(crate) fn loss_terms(
        &self,
        loss: &dyn SmoothLoss,
        t: &DVector<f64>,
    ) -> (f64, DVector<f64>, DVector<f64>) {
        let m = self.anchors.len();
        let mut value = 0.0;
        let mut r = DVector::zeros(m);
        let mut d = DVector::zeros(m);
        for ((atom, w), &j) in self.mu.iter().zip(&self.atom_anchor) {
            let (l0, l1, l2) = loss.derivatives(&atom.x, atom.y, t[j]);
            value += w * l0;
            r[j] += w * l1;
            d[j] += w * l2;
        }
        (value, r, d)
    }
}

/// Relative size of objective changes treated as rounding noise.
pub const ROUNDING_SLACK: f64 = 64.0 * f64::EPSILON;

struct State {
    alpha: DVector<f64>,
    objective: f64,
    grad: DVector<f64>,
    curvature: DVector<f64>,
    grad_norm: f64,
}

impl Svm {
    pub fn new(kernel: KernelSpec, loss: Arc<dyn SmoothLoss>) -> Self {
        Svm {
            kernel,
            loss,
            options: SolverOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    /// `f_{μ,λ}` by damped Newton from `α = 0`.
    pub fn solve(&self, mu: &FiniteMeasure, lambda: f64) -> Result<SolveReport> {
        self.solve_from(mu, lambda, None)
    }

    /// Same as [`solve`](Self::solve) but starting from the given coefficients
    /// on the distinct atom inputs (in order of first appearance).
    pub fn solve_from(
        &self,
        mu: &FiniteMeasure,
        lambda: f64,
        initial: Option<&[f64]>,
    ) -> Result<SolveReport> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::input(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !mu.is_nonnegative() {
            return Err(Error::input(
                "solver needs a nonnegative measure with positive mass",
            ));
        }
        let design = Design::new(&self.kernel, mu)?;
        let m = design.anchors.len();
        let alpha = match initial {
            Some(a) if a.len() != m => {
                return Err(Error::input(format!(
                    "initial point has {} entries, expected {m}",
                    a.len()
                )))
            }
            Some(a) => DVector::from_column_slice(a),
            None => DVector::zeros(m),
        };

        let eval = |alpha: DVector<f64>| -> State {
            let t = &design.gram * &alpha;
            let (value, r, d) = design.loss_terms(self.loss.as_ref(), &t);
            let objective = value + lambda * alpha.dot(&t);
            let grad = &alpha * (2.0 * lambda) + r;
            let grad_norm = grad.dot(&(&design.gram * &grad)).max(0.0).sqrt();
            State {
                alpha,
                objective,
                grad,
                curvature: d,
                grad_norm,
            }
        };

        let opts = &self.options;
        let mut state = eval(alpha);
        let mut trace = vec![state.objective];
        let mut iterations = 0;
        let tol = |s: &State| opts.tol_grad * s.objective.abs().max(1.0);
        while state.grad_norm > tol(&state) && iterations < opts.max_iter {
            if !state.objective.is_finite() {
                return Err(Error::numeric("objective became non-finite"));
            }
            let mut system = DMatrix::from_diagonal(&state.curvature) * &design.gram;
            for j in 0..m {
                system[(j, j)] += 2.0 * lambda;
            }
            let step = system
                .lu()
                .solve(&(-&state.grad))
                .ok_or_else(|| Error::numeric("singular Newton system"))?;
            let slope = state.grad.dot(&(&design.gram * &step));
            // Once the predicted decrease is below the rounding level of the
            // objective, only the gradient can tell progress apart.
            let full = eval(&state.alpha + &step);
            let noise = ROUNDING_SLACK * state.objective.abs().max(1.0);
            let flat = -slope <= noise
                && full.objective <= state.objective + noise
                && full.grad_norm < state.grad_norm;
            let mut accepted = None;
            if full.objective <= state.objective + opts.armijo * slope || flat {
                accepted = Some(full);
            } else {
                let mut s = 0.5;
                for _ in 0..60 {
                    let cand = eval(&state.alpha + &step * s);
                    if cand.objective <= state.objective + opts.armijo * s * slope {
                        accepted = Some(cand);
                        break;
                    }
                    s *= 0.5;
                }
            }
            match accepted {
                Some(next) => {
                    state = next;
                    trace.push(state.objective);
                    iterations += 1;
                }
                None => break,
            }
        }
        let converged = state.grad_norm <= tol(&state);
        let solution = RkhsFunction {
            kernel: self.kernel,
            anchors: design.anchors,
            coefficients: state.alpha.iter().copied().collect(),
        };
        Ok(SolveReport {
            solution,
            objective: state.objective,
            grad_norm_h: state.grad_norm,
            iterations,
            converged,
            objective_trace: trace,
        })
    }

    /// Like [`solve`](Self::solve) but turns non-convergence into a numeric error.
    pub fn solve_converged(&self, mu: &FiniteMeasure, lambda: f64) -> Result<SolveReport> {
        let report = self.solve(mu, lambda)?;
        if !report.converged {
            return Err(Error::numeric(format!(
                "solver did not converge: grad norm {:e} after {} iterations",
                report.grad_norm_h, report.iterations
            )));
        }
        Ok(report)
    }

    /// The standardized map `S(F) = f_{F,λ₀}`; then `f_{μ,λ} = S((λ₀/λ)·μ)`.
    pub fn s_functional(&self, f: &FiniteMeasure, lambda0: f64) -> Result<RkhsFunction> {
        Ok(self.solve_converged(f, lambda0)?.solution)
    }

    /// `ℛ_{L,μ}(f) = ∫ L(x, y, f(x)) dμ`.
    pub fn risk(&self, mu: &FiniteMeasure, f: &RkhsFunction) -> Result<f64> {
        if f.kernel != self.kernel {
            return Err(Error::input(
                "function kernel differs from the estimator kernel",
            ));
        }
        self.kernel.check_point(&vec![0.0; mu.dim()])?;
        mu.integrate(|a| self.loss.value(&a.x, a.y, f.eval_unchecked(&a.x)))
    }

    /// `ℛ_{L,μ}(f) + λ‖f‖²_H`.
    pub fn regularized_risk(
        &self,
        mu: &FiniteMeasure,
        f: &RkhsFunction,
        lambda: f64,
    ) -> Result<f64> {
        Ok(self.risk(mu, f)? + lambda * f.norm_sq())
    }

    /// Checks `‖f‖_H ≤ √(∫b dF / λ₀)` and `|f(x_i)| ≤ ‖k‖_∞ ‖f‖_H` on the atoms.
    pub fn norm_bound_check(&self, f: &FiniteMeasure, lambda0: f64) -> Result<NormBoundReport> {
        let sol = self.solve(f, lambda0)?.solution;
        let norm_h = sol.norm();
        let envelope = f.integrate(|a| self.loss.envelope_b(&a.x, a.y))?;
        let bound_h = (envelope / lambda0).sqrt();
        let xs = f.distinct_x();
        let sup_on_atoms = xs
            .iter()
            .map(|x| sol.eval_unchecked(x).abs())
            .fold(0.0, f64::max);
        let sup_bound = self.kernel.sup_norm_on(&xs) * norm_h;
        let holds = norm_h <= bound_h + 1e-9 && sup_on_atoms <= sup_bound + 1e-9;
        Ok(NormBoundReport {
            norm_h,
            bound_h,
            sup_on_atoms,
            sup_bound,
            holds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBoundReport {
    pub norm_h: f64,
    pub bound_h: f64,
    pub sup_on_atoms: f64,
    pub sup_bound: f64,
    pub holds: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LeastSquares, Logistic};
    use crate::measures::Atom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(d: usize) -> KernelSpec {
        KernelSpec::gaussian(1.0, d).unwrap()
    }

    #[test]
    fn one_atom_ridge_closed_form() {
        // α = y / (k(x,x) + λ) solves the stationarity equation 2λα - 2(y - kα) = 0
        let svm = Svm::new(gauss(2), Arc::new(LeastSquares));
        let mu = FiniteMeasure::dirac(vec![0.2, -0.4], 1.0).unwrap();
        let rep = svm.solve(&mu, 1.0).unwrap();
        assert!(rep.converged);
        assert!((rep.solution.eval(&[0.2, -0.4]).unwrap() - 0.5).abs() < 1e-12);
        assert!((rep.solution.norm() - 0.5).abs() < 1e-12);
        assert!(rep.grad_norm_h <= 1e-10);
    }

    #[test]
    fn zero_labels_give_zero_function() {
        let svm = Svm::new(gauss(1), Arc::new(LeastSquares));
        let atoms = vec![Atom::new(vec![0.0], 0.0), Atom::new(vec![1.0], 0.0)];
        let mu = FiniteMeasure::new(1, atoms, vec![0.3, 0.9]).unwrap();
        let rep = svm.solve(&mu, 0.5).unwrap();
        assert_eq!(rep.objective, 0.0);
        assert!(rep.solution.coefficients.iter().all(|c| *c == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let svm = Svm::new(gauss(1), Arc::new(LeastSquares));
        let mu = FiniteMeasure::dirac(vec![0.0], 1.0).unwrap();
        assert!(matches!(svm.solve(&mu, 0.0), Err(Error::Input(_))));
        assert!(matches!(svm.solve(&mu, -1.0), Err(Error::Input(_))));
        let signed = mu.scale(-1.0);
        assert!(matches!(svm.solve(&signed, 1.0), Err(Error::Input(_))));
        let wrong_dim = FiniteMeasure::dirac(vec![0.0, 1.0], 1.0).unwrap();
        assert!(matches!(svm.solve(&wrong_dim, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn logistic_random_measure_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let atoms: Vec<Atom> = (0..10)
            .map(|_| {
                Atom::new(
                    vec![rng.random_range(-1.0..1.0)],
                    if rng.random::<bool>() { 1.0 } else { -1.0 },
                )
            })
            .collect();
        let weights: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..1.0)).collect();
        let mu = FiniteMeasure::new(1, atoms, weights).unwrap();
        let svm = Svm::new(gauss(1), Arc::new(Logistic));
        let rep = svm.solve(&mu, 0.1).unwrap();
        assert!(rep.converged);
        assert!(rep.grad_norm_h <= 1e-10 * rep.objective.abs().max(1.0));
        let zero = RkhsFunction::zero(svm.kernel);
        assert!(rep.objective <= svm.regularized_risk(&mu, &zero, 0.1).unwrap());
        assert!(monotone(&rep.objective_trace));

        // Independent oracle: fixed-step descent on α along the H-gradient.
        let design = Design::new(&svm.kernel, &mu).unwrap();
        let mut alpha = DVector::zeros(design.anchors.len());
        let mut obj = f64::INFINITY;
        for _ in 0..200_000 {
            let t = &design.gram * &alpha;
            let (v, r, _) = design.loss_terms(svm.loss.as_ref(), &t);
            obj = v + 0.1 * alpha.dot(&t);
            let g = &alpha * 0.2 + r;
            if g.dot(&(&design.gram * &g)).sqrt() < 1e-12 {
                break;
            }
            alpha -= g * 0.5;
        }
        assert!(
            (obj - rep.objective).abs() < 1e-10,
            "{obj} vs {}",
            rep.objective
        );
    }

    #[test]
    fn risk_examples() {
        let svm = Svm::new(gauss(1), Arc::new(LeastSquares));
        let mu = FiniteMeasure::dirac(vec![0.0], 1.0).unwrap();
        let zero = RkhsFunction::zero(svm.kernel);
        assert_eq!(svm.risk(&mu, &zero).unwrap(), 1.0);
        let f = RkhsFunction::feature(svm.kernel, vec![0.0]).unwrap();
        assert_eq!(svm.risk(&mu, &f).unwrap(), 0.0);
    }

    #[test]
    fn norm_bound_examples() {
        let svm = Svm::new(gauss(1), Arc::new(LeastSquares));
        let mu = FiniteMeasure::dirac(vec![0.0], 1.0).unwrap();
        let r = svm.norm_bound_check(&mu, 1.0).unwrap();
        assert!(r.holds);
        assert!((r.bound_h - 2f64.sqrt()).abs() < 1e-15);
        assert!((r.norm_h - 0.5).abs() < 1e-12);
        let zeros = FiniteMeasure::dirac(vec![0.0], 0.0).unwrap();
        assert!(svm.norm_bound_check(&zeros, 1.0).unwrap().holds);
    }

    fn monotone(trace: &[f64]) -> bool {
        trace
            .windows(2)
            .all(|w| w[1] <= w[0] + ROUNDING_SLACK * w[0].abs().max(1.0))
    }

    fn random_measure(seed: u64, atoms: usize, dim: usize, binary: bool) -> FiniteMeasure {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Atom> = (0..atoms)
            .map(|_| {
                let x = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = if binary {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.random_range(-2.0..2.0)
                };
                Atom::new(x, y)
            })
            .collect();
        let w = (0..atoms).map(|_| rng.random_range(0.05..1.0)).collect();
        FiniteMeasure::new(dim, data, w).unwrap()
    }

    fn losses() -> Vec<(Arc<dyn SmoothLoss>, bool)> {
        use crate::losses::LossSpec;
        let specs = [
            (LossSpec::LeastSquares, false),
            (LossSpec::Logistic, true),
            (LossSpec::Huber { delta: 0.5 }, false),
            (
                LossSpec::MollifiedHinge {
                    eps: 0.1,
                    nodes: 64,
                },
                true,
            ),
            (
                LossSpec::MollifiedEpsInsensitive {
                    eps: 0.1,
                    eps_ins: 0.3,
                    nodes: 64,
                },
                false,
            ),
        ];
        specs
            .into_iter()
            .map(|(s, b)| (s.build().unwrap(), b))
            .collect()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn standardization_identity(seed in proptest::prelude::any::<u64>(), which in 0usize..5, atoms in 1usize..15) {
            let (loss, binary) = losses().swap_remove(which);
            let svm = Svm::new(gauss(2), loss);
            let mu = random_measure(seed, atoms, 2, binary);
            let lambda0 = 0.3;
            for lambda in [lambda0 / 4.0, lambda0, 3.0 * lambda0] {
                let direct = svm.solve_converged(&mu, lambda).unwrap().solution;
                let standard = svm.s_functional(&mu.scale(lambda0 / lambda), lambda0).unwrap();
                proptest::prop_assert!(direct.distance(&standard).unwrap() <= 1e-9);
            }
            let m = mu.total_mass();
            let a = svm.solve_converged(&mu, 0.2).unwrap().solution;
            let b = svm.solve_converged(&mu.scale(1.0 / m), 0.2 / m).unwrap().solution;
            proptest::prop_assert!(a.distance(&b).unwrap() <= 1e-9);
        }

        #[test]
        fn unique_minimizer_and_monotone_trace(seed in proptest::prelude::any::<u64>(), which in 0usize..5, atoms in 1usize..20) {
            let (loss, binary) = losses().swap_remove(which);
            let svm = Svm::new(gauss(3), loss);
            let mu = random_measure(seed, atoms, 3, binary);
            let rep = svm.solve(&mu, 0.1).unwrap();
            proptest::prop_assert!(rep.converged);
            proptest::prop_assert!(rep.grad_norm_h <= 1e-10 * rep.objective.abs().max(1.0));
            proptest::prop_assert!(monotone(&rep.objective_trace));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let init: Vec<f64> = (0..rep.solution.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let other = svm.solve_from(&mu, 0.1, Some(&init)).unwrap();
            proptest::prop_assert!(other.converged);
            proptest::prop_assert!(rep.solution.distance(&other.solution).unwrap() <= 1e-8);
            proptest::prop_assert!(svm.norm_bound_check(&mu, 0.1).unwrap().holds);
        }
    }
}
