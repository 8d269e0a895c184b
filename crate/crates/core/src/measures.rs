//! Finite signed measures on `X × Y` represented as weighted atoms.
//!
//! Probability measures, empirical measures and the signed directions used
//! for derivatives (`δ_z - P` and friends) all share this representation.
//! Atoms with bitwise-equal `(x, y)` are merged at construction and atoms
//! whose weights cancel to exactly zero are dropped.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Point;
use crate::rng;

/// One support point `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub y: f64,
}

impl Atom {
    pub fn new(x: Point, y: f64) -> Self {
        Atom { x, y }
    }

    fn key(&self) -> (Vec<u64>, u64) {
        (crate::kernels::point_key(&self.x), self.y.to_bits())
    }
}

const PROBABILITY_TOL: f64 = 1e-12;

/// `Σ_i weights[i] · δ_{atoms[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    weights: Vec<f64>,
}

impl FiniteMeasure {
    /// Builds a measure from atoms and (possibly signed) weights.
    pub fn new(dim: usize, atoms: Vec<Atom>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("measure dimension must be positive"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::input(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let mut out = FiniteMeasure {
            dim,
            atoms: Vec::new(),
            weights: Vec::new(),
        };
        let mut index = HashMap::new();
        for (atom, w) in atoms.into_iter().zip(weights) {
            if atom.x.len() != dim {
                return Err(Error::input(format!(
                    "atom has {} coordinates, measure dimension is {dim}",
                    atom.x.len()
                )));
            }
            if !w.is_finite() || !atom.y.is_finite() || atom.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("non-finite atom coordinate or weight"));
            }
            out.push(&mut index, atom, w);
        }
        out.drop_zeros();
        Ok(out)
    }

    /// The zero measure.
    pub fn zero(dim: usize) -> Self {
        FiniteMeasure {
            dim,
            atoms: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// `δ_(x, y)`.
    pub fn dirac(x: Point, y: f64) -> Result<Self> {
        Self::new(x.len(), vec![Atom::new(x, y)], vec![1.0])
    }

    /// Uniform weights `1/n` on the data, duplicates merged.
    pub fn empirical(data: &[Atom]) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| Error::input("empirical measure of empty data"))?;
        let n = data.len() as f64;
        let dim = first.x.len();
        // Merge by counting so every weight is exactly count/n.
        let mut counts: Vec<(Atom, usize)> = Vec::new();
        let mut index: HashMap<_, usize> = HashMap::new();
        for a in data {
            if a.x.len() != dim {
                return Err(Error::input("data points of differing dimension"));
            }
            match index.get(&a.key()) {
                Some(&j) => counts[j].1 += 1,
                None => {
                    index.insert(a.key(), counts.len());
                    counts.push((a.clone(), 1));
                }
            }
        }
        let (atoms, weights) = counts.into_iter().map(|(a, c)| (a, c as f64 / n)).unzip();
        Self::new(dim, atoms, weights)
    }

    fn push(&mut self, index: &mut HashMap<(Vec<u64>, u64), usize>, atom: Atom, w: f64) {
        match index.get(&atom.key()) {
            Some(&j) => self.weights[j] += w,
            None => {
                index.insert(atom.key(), self.atoms.len());
                self.atoms.push(atom);
                self.weights.push(w);
            }
        }
    }

    fn drop_zeros(&mut self) {
        if self.weights.iter().all(|w| *w != 0.0) {
            return;
        }
        let (atoms, weights) = self
            .atoms
            .drain(..)
            .zip(self.weights.drain(..))
            .filter(|(_, w)| *w != 0.0)
            .unzip();
        self.atoms = atoms;
        self.weights = weights;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn total_variation(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// All weights nonnegative and positive total mass.
    pub fn is_nonnegative(&self) -> bool {
        !self.is_empty() && self.weights.iter().all(|w| *w >= 0.0) && self.total_mass() > 0.0
    }

    pub fn is_probability(&self) -> bool {
        self.is_nonnegative() && (self.total_mass() - 1.0).abs() <= PROBABILITY_TOL
    }

    /// `c · μ`.
    pub fn scale(&self, c: f64) -> FiniteMeasure {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= c);
        out.drop_zeros();
        out
    }

    /// `a · μ + b · ν`.
    pub fn combine(&self, other: &FiniteMeasure, a: f64, b: f64) -> Result<FiniteMeasure> {
        if self.dim != other.dim {
            return Err(Error::input(format!(
                "combining measures of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut out = FiniteMeasure::zero(self.dim);
        let mut index = HashMap::new();
        for (m, c) in [(self, a), (other, b)] {
            for (atom, w) in m.iter() {
                out.push(&mut index, atom.clone(), c * w);
            }
        }
        out.drop_zeros();
        Ok(out)
    }

    /// `∫ g dμ = Σ_i w_i g(atom_i)`.
    pub fn integrate<G: FnMut(&Atom) -> f64>(&self, mut g: G) -> Result<f64> {
        let mut s = 0.0;
        for (atom, w) in self.iter() {
            let v = g(atom);
            if !v.is_finite() {
                return Err(Error::numeric(format!("integrand is {v} at atom {atom:?}")));
            }
            s += w * v;
        }
        Ok(s)
    }

    /// Draws `n` i.i.d. atoms by inverse CDF over the weights in atom order.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Atom>> {
        if !self.is_probability() {
            return Err(Error::input("sampling requires a probability measure"));
        }
        let mut cum = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cum.push(acc);
        }
        let last = self.len() - 1;
        Ok((0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let i = cum.partition_point(|c| *c <= u).min(last);
                self.atoms[i].clone()
            })
            .collect())
    }

    /// [`sample`](Self::sample) with a generator derived from `seed` via [`rng::stream`].
    pub fn sample_seeded(&self, n: usize, seed: u64) -> Result<Vec<Atom>> {
        self.sample(n, &mut rng::stream(seed, &[]))
    }

    /// Distinct `x` values in order of first appearance.
    pub fn distinct_x(&self) -> Vec<Point> {
        let mut idx = crate::kernels::AnchorIndex::default();
        for a in &self.atoms {
            idx.insert(&a.x);
        }
        idx.into_points()
    }

    /// Writes the atom table `x1,…,xd,y,weight` with round-trip precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        header.push("weight".into());
        wr.write_record(&header).map_err(csv_err)?;
        for (a, wgt) in self.iter() {
            let row: Vec<String> =
                a.x.iter()
                    .chain([a.y, wgt].iter())
                    .map(|v| format!("{v:?}"))
                    .collect();
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()
            .map_err(|e| Error::input(format!("writing measure: {e}")))?;
        Ok(())
    }

    /// Parses an atom table with header `x1,…,xd,y,weight`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let header = rd.headers().map_err(csv_err)?.clone();
        let cols = header.len();
        if cols < 3 {
            return Err(Error::input("measure CSV needs columns x1..xd,y,weight"));
        }
        let dim = cols - 2;
        for (i, name) in header.iter().enumerate() {
            let want = match i {
                i if i < dim => format!("x{}", i + 1),
                i if i == dim => "y".to_string(),
                _ => "weight".to_string(),
            };
            if name != want {
                return Err(Error::input(format!(
                    "measure CSV column {} is '{name}', expected '{want}'",
                    i + 1
                )));
            }
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        Error::input(format!("measure CSV row {}: cannot parse '{s}'", line + 2))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            atoms.push(Atom::new(vals[..dim].to_vec(), vals[dim]));
            weights.push(vals[dim + 1]);
        }
        Self::new(dim, atoms, weights)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::input(format!("measure CSV: {e}"))
}
