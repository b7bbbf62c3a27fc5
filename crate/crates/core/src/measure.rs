//! Atoms, atomic measures, dual variables and the weighted total-variation functional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// How the weight `V(a, b)` of an atom is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    /// `V = 1 + |a| + |b|`.
    #[default]
    WithConstant,
    /// `V = |a| + |b|`, the positively homogeneous weight used for ReLU networks.
    ReluHomogeneous,
}

/// A single neuron parameter `(a, b)` with inner weight `a` and bias `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Atom {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Atom { a, b }
    }

    /// Input dimension `d`.
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.a.iter().all(|v| v.is_finite())
    }

    /// The point `(a_1, ..., a_d, b)` in parameter space.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut out = self.a.clone();
        out.push(self.b);
        out
    }

    pub fn from_coordinates(coords: &[f64]) -> Self {
        let (b, a) = coords
            .split_last()
            .expect("atom coordinates must be nonempty");
        Atom::new(a.to_vec(), *b)
    }

    /// `a^T x + b`.
    pub fn preactivation(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (ai, xi) in self.a.iter().zip(x) {
            s += ai * xi;
        }
        s + self.b
    }
}

/// Euclidean norm.
pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Weight `V(a, b)` of a single atom.
pub fn weight_of(atom: &Atom, variant: WeightVariant) -> f64 {
    let base = norm2(&atom.a) + atom.b.abs();
    match variant {
        WeightVariant::WithConstant => 1.0 + base,
        WeightVariant::ReluHomogeneous => base,
    }
}

/// Axis-aligned box in parameter space `R^{d+1}`; the last axis is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("domain box", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidInput("domain box has no axes".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("domain box".into()));
            }
            if lo > hi {
                return Err(Error::InvalidInput(format!(
                    "domain box lower bound {lo} exceeds upper bound {hi}"
                )));
            }
        }
        Ok(DomainBox { lower, upper })
    }

    /// The cube `[-r, r]^{axes}`.
    pub fn symmetric(axes: usize, r: f64) -> Result<Self> {
        DomainBox::new(vec![-r; axes], vec![r; axes])
    }

    pub fn axes(&self) -> usize {
        self.lower.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(lo, hi)| hi <= lo)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.axes()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        let d: Vec<f64> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .collect();
        norm2(&d)
    }

    /// Smallest box containing all points.
    pub fn bounding(points: &[Vec<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot bound an empty point set".into()))?;
        let mut lower = first.clone();
        let mut upper = first.clone();
        for p in points {
            check_len("bounding box", lower.len(), p.len())?;
            for k in 0..p.len() {
                lower[k] = lower[k].min(p[k]);
                upper[k] = upper[k].max(p[k]);
            }
        }
        DomainBox::new(lower, upper)
    }
}

/// Ordered, validated collection of atoms together with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    atoms: Vec<Atom>,
    variant: WeightVariant,
    domain: DomainBox,
    weights: Vec<f64>,
}

impl AtomSet {
    /// Validates that atoms are finite, pairwise distinct, inside `domain`, and
    /// carry a strictly positive weight.
    pub fn new(atoms: Vec<Atom>, variant: WeightVariant, domain: DomainBox) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput(
                "atom set must contain at least one atom".into(),
            ));
        }
        let d = atoms[0].dim();
        check_len("domain box axes", d + 1, domain.axes())?;
        for (n, atom) in atoms.iter().enumerate() {
            check_len("atom dimension", d, atom.dim())?;
            if !atom.is_finite() {
                return Err(Error::NonFinite(format!("atom {n}")));
            }
            if !domain.contains(&atom.coordinates()) {
                return Err(Error::InvalidInput(format!(
                    "atom {n} lies outside the domain box"
                )));
            }
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| {
            let (x, y) = (atoms[i].coordinates(), atoms[j].coordinates());
            x.iter()
                .zip(&y)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if atoms[w[0]] == atoms[w[1]] {
                return Err(Error::InvalidInput(format!(
                    "atoms {} and {} coincide",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        let weights: Vec<f64> = atoms.iter().map(|a| weight_of(a, variant)).collect();
        if let Some(n) = weights.iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "atom {n} has zero weight under the homogeneous variant"
            )));
        }
        Ok(AtomSet {
            atoms,
            variant,
            domain,
            weights,
        })
    }

    /// Like [`AtomSet::new`] with the bounding box of the atoms as domain.
    pub fn with_bounding_box(atoms: Vec<Atom>, variant: WeightVariant) -> Result<Self> {
        let coords: Vec<Vec<f64>> = atoms.iter().map(Atom::coordinates).collect();
        let domain = DomainBox::bounding(&coords)?;
        AtomSet::new(atoms, variant, domain)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Input dimension `d` (parameter space has dimension `d + 1`).
    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, n: usize) -> &Atom {
        &self.atoms[n]
    }

    pub fn variant(&self) -> WeightVariant {
        self.variant
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// `V(omega_n)` for every atom.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Reads `a_1,...,a_d,b` rows; the domain is the bounding box of the atoms.
    pub fn from_csv(path: impl AsRef<Path>, variant: WeightVariant) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let cols = headers.len();
        if cols < 2 || &headers[cols - 1] != "b" {
            return Err(Error::InvalidInput(
                "atom csv header must be a_1,...,a_d,b".into(),
            ));
        }
        for (k, h) in headers.iter().take(cols - 1).enumerate() {
            if h != format!("a_{}", k + 1) {
                return Err(Error::InvalidInput(format!(
                    "unexpected atom csv column '{h}', expected a_{}",
                    k + 1
                )));
            }
        }
        let mut atoms = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut coords = Vec::with_capacity(cols);
            for field in record.iter() {
                coords.push(parse_float(field)?);
            }
            check_len("atom csv row", cols, coords.len())?;
            atoms.push(Atom::from_coordinates(&coords));
        }
        AtomSet::with_bounding_box(atoms, variant)
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim()).map(|k| format!("a_{k}")).collect();
        header.push("b".into());
        writer.write_record(&header)?;
        for atom in &self.atoms {
            writer.write_record(atom.coordinates().iter().map(|v| v.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub(crate) fn parse_float(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("cannot parse '{field}' as a number")))
}

/// Atomic measure `sum_n c_n delta_{omega_n}` over an [`AtomSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMeasure {
    pub coefficients: Vec<f64>,
}

impl SparseMeasure {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("measure coefficients".into()));
        }
        Ok(SparseMeasure { coefficients })
    }

    pub fn zeros(n: usize) -> Self {
        SparseMeasure {
            coefficients: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Indices with nonzero mass.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SparseMeasure {
            coefficients: self.coefficients.iter().map(|c| s * c).collect(),
        }
    }

    /// `<p, mu> = sum_n p_n c_n`.
    pub fn pair(&self, p: &[f64]) -> f64 {
        self.coefficients.iter().zip(p).map(|(c, q)| c * q).sum()
    }
}

/// Dual variable `p(omega_n)` at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVariable {
    pub values: Vec<f64>,
    pub time: f64,
}

impl DualVariable {
    pub fn new(values: Vec<f64>, time: f64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) || !time.is_finite() || time < 0.0 {
            return Err(Error::NonFinite("dual variable".into()));
        }
        Ok(DualVariable { values, time })
    }

    pub fn zeros(n: usize) -> Self {
        DualVariable {
            values: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `J(mu) = sum_n V_n |c_n|`.
pub fn j_norm(mu: &SparseMeasure, atoms: &AtomSet) -> Result<f64> {
    check_len("j_norm", atoms.len(), mu.len())?;
    Ok(weighted_l1(&mu.coefficients, atoms.weights()))
}

pub(crate) fn weighted_l1(c: &[f64], v: &[f64]) -> f64 {
    c.iter().zip(v).map(|(c, v)| v * c.abs()).sum()
}

/// Total variation `sum_n |c_n|`.
pub fn total_variation(mu: &SparseMeasure) -> f64 {
    mu.coefficients.iter().map(|c| c.abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `max_n (|p_n| - V_n)`.
    pub max_violation: f64,
    pub feasible: bool,
}

/// Checks `|p_n| <= V_n + tol` for every atom.
pub fn dual_feasibility(p: &DualVariable, atoms: &AtomSet, tol: f64) -> Result<FeasibilityReport> {
    check_len("dual_feasibility", atoms.len(), p.len())?;
    let max_violation = p
        .values
        .iter()
        .zip(atoms.weights())
        .map(|(p, v)| p.abs() - v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(FeasibilityReport {
        max_violation,
        feasible: max_violation <= tol,
    })
}

/// True when every atom carrying mass sits on the boundary `|p_n| >= V_n - tol`
/// with `sign(c_n) = sign(p_n)`.
pub fn subgradient_consistency(
    mu: &SparseMeasure,
    p: &DualVariable,
    atoms: &AtomSet,
    tol: f64,
) -> Result<bool> {
    check_len("subgradient_consistency", atoms.len(), mu.len())?;
    check_len("subgradient_consistency", atoms.len(), p.len())?;
    Ok(consistent(
        &mu.coefficients,
        &p.values,
        atoms.weights(),
        tol,
    ))
}

pub(crate) fn consistent(c: &[f64], p: &[f64], v: &[f64], tol: f64) -> bool {
    c.iter()
        .zip(p)
        .zip(v)
        .all(|((&c, &p), &v)| c == 0.0 || (p.abs() >= v - tol && c.signum() == p.signum()))
}
