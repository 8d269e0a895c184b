//! Kernels, Gram matrices and RKHS elements in representer form.
//!
//! Every element of the RKHS handled by this crate is a finite expansion
//! `f = Σ_j c_j Φ(a_j)` over anchor points `a_j`, where `Φ(a) = k(·, a)` is
//! the canonical feature map. Evaluation, inner products and norms then
//! reduce to kernel evaluations thanks to the reproducing property
//! `⟨Φ(x), f⟩ = f(x)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the input space.
pub type Point = Vec<f64>;

/// Built-in positive-definite kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-‖x - x'‖² / width²)`
    GaussianRbf { width: f64 },
    /// `(scale·⟨x, x'⟩ + offset)^degree`
    Polynomial {
        degree: u32,
        offset: f64,
        scale: f64,
    },
    /// `⟨x, x'⟩`
    Linear,
    /// `exp(scale·⟨x, x'⟩)`
    Exponential { scale: f64 },
}

/// A kernel family together with the input dimension it acts on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub input_dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, input_dim: usize) -> Result<Self> {
        let spec = KernelSpec { family, input_dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(width: f64, input_dim: usize) -> Result<Self> {
        Self::new(KernelFamily::GaussianRbf { width }, input_dim)
    }

    pub fn linear(input_dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Linear, input_dim)
    }

    pub fn polynomial(degree: u32, offset: f64, scale: f64, input_dim: usize) -> Result<Self> {
        Self::new(
            KernelFamily::Polynomial {
                degree,
                offset,
                scale,
            },
            input_dim,
        )
    }

    pub fn exponential(scale: f64, input_dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Exponential { scale }, input_dim)
    }

    /// Checks the parameter ranges of the family.
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::input("kernel input_dim must be positive"));
        }
        match self.family {
            KernelFamily::GaussianRbf { width } if !(width > 0.0 && width.is_finite()) => Err(
                Error::input(format!("gaussian width must be positive, got {width}")),
            ),
            KernelFamily::Polynomial {
                degree,
                offset,
                scale,
            } => {
                if degree < 1 {
                    Err(Error::input("polynomial degree must be at least 1"))
                } else if !(offset >= 0.0 && offset.is_finite()) {
                    Err(Error::input(format!(
                        "polynomial offset must be >= 0, got {offset}"
                    )))
                } else if !(scale > 0.0 && scale.is_finite()) {
                    Err(Error::input(format!(
                        "polynomial scale must be > 0, got {scale}"
                    )))
                } else {
                    Ok(())
                }
            }
            KernelFamily::Exponential { scale } if !(scale > 0.0 && scale.is_finite()) => Err(
                Error::input(format!("exponential scale must be > 0, got {scale}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::input(format!(
                "point has {} coordinates, kernel expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Kernel value without dimension checks; callers validate points once up front.
    pub(crate) fn k(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::GaussianRbf { width } => {
                let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (width * width)).exp()
            }
            KernelFamily::Polynomial {
                degree,
                offset,
                scale,
            } => (scale * dot(x, x2) + offset).powi(degree as i32),
            KernelFamily::Linear => dot(x, x2),
            KernelFamily::Exponential { scale } => (scale * dot(x, x2)).exp(),
        }
    }

    /// `k(x, x2)`.
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(x2)?;
        Ok(self.k(x, x2))
    }

    /// Gram matrix `K_ij = k(p_i, p_j)`.
    pub fn gram(&self, points: &[Point]) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return Err(Error::input("gram matrix of an empty point set"));
        }
        for p in points {
            self.check_point(p)?;
        }
        Ok(self.gram_unchecked(points))
    }

    pub(crate) fn gram_unchecked(&self, points: &[Point]) -> DMatrix<f64> {
        let m = points.len();
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = self.k(&points[i], &points[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `K_ij = k(rows_i, cols_j)`.
    pub(crate) fn cross_gram(&self, rows: &[Point], cols: &[Point]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.k(&rows[i], &cols[j]))
    }

    /// `‖k‖_∞ = sup_{x ∈ box} √k(x, x)`.
    ///
    /// For the dot-product families `k(x, x)` is increasing in `‖x‖²`, so the
    /// supremum sits at the corner of maximal norm.
    pub fn sup_norm(&self, domain: &DomainBox) -> Result<f64> {
        domain.validate()?;
        if domain.dim() != self.input_dim {
            return Err(Error::input(format!(
                "box has dimension {}, kernel expects {}",
                domain.dim(),
                self.input_dim
            )));
        }
        if let KernelFamily::GaussianRbf { .. } = self.family {
            return Ok(1.0);
        }
        let corner = domain.max_norm_corner();
        Ok(self.k(&corner, &corner).max(0.0).sqrt())
    }

    /// `max_i √k(p_i, p_i)`, the sup-norm of the kernel restricted to a finite set.
    pub fn sup_norm_on(&self, points: &[Point]) -> f64 {
        points
            .iter()
            .map(|p| self.k(p, p).max(0.0).sqrt())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Axis-aligned box `[lower_1, upper_1] × … × [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = DomainBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::input(
                "box bounds must be nonempty and of equal length",
            ));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::input("box must be bounded"));
            }
            if lo > hi {
                return Err(Error::input(format!("empty box side [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn max_norm_corner(&self) -> Point {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| if lo.abs() > hi.abs() { *lo } else { *hi })
            .collect()
    }
}

/// An RKHS element `f = Σ_j coefficients[j] · k(·, anchors[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkhsFunction {
    pub kernel: KernelSpec,
    pub anchors: Vec<Point>,
    pub coefficients: Vec<f64>,
}

impl RkhsFunction {
    pub fn new(kernel: KernelSpec, anchors: Vec<Point>, coefficients: Vec<f64>) -> Result<Self> {
        if anchors.len() != coefficients.len() {
            return Err(Error::input(format!(
                "{} anchors but {} coefficients",
                anchors.len(),
                coefficients.len()
            )));
        }
        for a in &anchors {
            kernel.check_point(a)?;
        }
        Ok(RkhsFunction {
            kernel,
            anchors,
            coefficients,
        })
    }

    pub fn zero(kernel: KernelSpec) -> Self {
        RkhsFunction {
            kernel,
            anchors: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    /// The feature map `Φ(x) = k(·, x)`.
    pub fn feature(kernel: KernelSpec, x: Point) -> Result<Self> {
        Self::new(kernel, vec![x], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.anchors
            .iter()
            .zip(&self.coefficients)
            .map(|(a, c)| c * self.kernel.k(x, a))
            .sum()
    }

    /// `⟨f, g⟩_H = Σ_i Σ_j f.c_i g.c_j k(f.a_i, g.a_j)`.
    pub fn inner(&self, other: &RkhsFunction) -> Result<f64> {
        if self.kernel != other.kernel {
            return Err(Error::input(
                "inner product of functions from different kernels",
            ));
        }
        let mut s = 0.0;
        for (a, c) in self.anchors.iter().zip(&self.coefficients) {
            for (b, d) in other.anchors.iter().zip(&other.coefficients) {
                s += c * d * self.kernel.k(a, b);
            }
        }
        Ok(s)
    }

    /// `‖f‖²_H = cᵀ K c`, clamped at zero against rounding.
    pub fn norm_sq(&self) -> f64 {
        let g = self.kernel.gram_unchecked_or_empty(&self.anchors);
        let c = DVector::from_column_slice(&self.coefficients);
        c.dot(&(&g * &c)).max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, c: f64) -> RkhsFunction {
        RkhsFunction {
            kernel: self.kernel,
            anchors: self.anchors.clone(),
            coefficients: self.coefficients.iter().map(|v| c * v).collect(),
        }
    }

    /// `a·f + b·g`, merging anchors that coincide bitwise.
    pub fn combine(&self, other: &RkhsFunction, a: f64, b: f64) -> Result<RkhsFunction> {
        if self.kernel != other.kernel {
            return Err(Error::input("combining functions from different kernels"));
        }
        let mut index = AnchorIndex::default();
        let mut coefficients = Vec::new();
        for (f, w) in [(self, a), (other, b)] {
            for (x, c) in f.anchors.iter().zip(&f.coefficients) {
                let j = index.insert(x);
                if j == coefficients.len() {
                    coefficients.push(0.0);
                }
                coefficients[j] += w * c;
            }
        }
        Ok(RkhsFunction {
            kernel: self.kernel,
            anchors: index.into_points(),
            coefficients,
        })
    }

    /// `‖f - g‖_H`.
    pub fn distance(&self, other: &RkhsFunction) -> Result<f64> {
        Ok(self.combine(other, 1.0, -1.0)?.norm())
    }
}

impl KernelSpec {
    fn gram_unchecked_or_empty(&self, points: &[Point]) -> DMatrix<f64> {
        if points.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            self.gram_unchecked(points)
        }
    }
}

/// Bitwise key of a point, used wherever equal points must be merged.
pub(crate) fn point_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Insertion-ordered set of distinct points.
#[derive(Debug, Default, Clone)]
pub(crate) struct AnchorIndex {
    lookup: std::collections::HashMap<Vec<u64>, usize>,
    points: Vec<Point>,
}

impl AnchorIndex {
    /// Returns the index of `x`, appending it if new.
    pub(crate) fn insert(&mut self, x: &[f64]) -> usize {
        let key = point_key(x);
        if let Some(&j) = self.lookup.get(&key) {
            return j;
        }
        let j = self.points.len();
        self.lookup.insert(key, j);
        self.points.push(x.to_vec());
        j
    }

    pub(crate) fn into_points(self) -> Vec<Point> {
        self.points
    }
}
