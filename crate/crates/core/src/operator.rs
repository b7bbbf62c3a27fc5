//! Empirical data model and the forward map `K`, its adjoint `L_rho`, and the loss.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::measure::{parse_float, AtomSet, SparseMeasure};

/// Activation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Tanh,
    Sigmoid,
    Custom,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A Lipschitz activation `sigma` together with its Lipschitz constant.
#[derive(Clone)]
pub struct Activation {
    kind: ActivationKind,
    lipschitz: f64,
    custom: Option<ScalarFn>,
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Activation")
            .field("kind", &self.kind)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Activation {
    pub fn relu() -> Self {
        Activation {
            kind: ActivationKind::Relu,
            lipschitz: 1.0,
            custom: None,
        }
    }

    pub fn tanh() -> Self {
        Activation {
            kind: ActivationKind::Tanh,
            lipschitz: 1.0,
            custom: None,
        }
    }

    pub fn sigmoid() -> Self {
        Activation {
            kind: ActivationKind::Sigmoid,
            lipschitz: 0.25,
            custom: None,
        }
    }

    /// User-supplied activation; `lipschitz` must bound its slope.
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::InvalidInput(
                "lipschitz constant must be positive".into(),
            ));
        }
        Ok(Activation {
            kind: ActivationKind::Custom,
            lipschitz,
            custom: Some(Arc::new(f)),
        })
    }

    /// Built-in activation by kind; `Custom` has no built-in definition.
    pub fn from_kind(kind: ActivationKind) -> Result<Self> {
        match kind {
            ActivationKind::Relu => Ok(Activation::relu()),
            ActivationKind::Tanh => Ok(Activation::tanh()),
            ActivationKind::Sigmoid => Ok(Activation::sigmoid()),
            ActivationKind::Custom => Err(Error::InvalidInput(
                "custom activations must be constructed in code".into(),
            )),
        }
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => s.max(0.0),
            ActivationKind::Tanh => s.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-s).exp()),
            ActivationKind::Custom => (self.custom.as_ref().expect("custom activation"))(s),
        }
    }
}

/// Weighted point cloud `(x_i, w_i, f_i)` representing `rho` and `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    /// Validates shapes, finiteness, nonnegativity and `sum w = 1` (to 1e-12).
    /// `weights = None` gives the uniform measure.
    pub fn new(
        points: Vec<Vec<f64>>,
        targets: Vec<f64>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let m = points.len();
        if m == 0 {
            return Err(Error::InvalidInput(
                "dataset must contain at least one sample".into(),
            ));
        }
        let dim = points[0].len();
        let mut flat = Vec::with_capacity(m * dim);
        for p in &points {
            check_len("dataset point dimension", dim, p.len())?;
            flat.extend_from_slice(p);
        }
        let weights = weights.unwrap_or_else(|| vec![1.0 / m as f64; m]);
        Dataset::from_flat(dim, flat, weights, targets)
    }

    pub(crate) fn from_flat(
        dim: usize,
        points: Vec<f64>,
        weights: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::InvalidInput(
                "dataset must contain at least one sample".into(),
            ));
        }
        check_len("dataset points", m * dim, points.len())?;
        check_len("dataset targets", m, targets.len())?;
        if points
            .iter()
            .chain(&weights)
            .chain(&targets)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("dataset".into()));
        }
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidInput(
                "sample weights must be nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "sample weights sum to {total}, expected 1"
            )));
        }
        Ok(Dataset {
            dim,
            points,
            weights,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i).to_vec()).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        Dataset::from_flat(self.dim, self.points.clone(), self.weights.clone(), targets)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Dataset::from_flat(self.dim, self.points.clone(), weights, self.targets.clone())
    }

    pub fn with_points(&self, points: Vec<Vec<f64>>) -> Result<Self> {
        Dataset::new(points, self.targets.clone(), Some(self.weights.clone()))
    }

    /// `<u, v>_{L^2(rho)}`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_inner(&self.weights, u, v)
    }

    /// `||u||^2_{L^2(rho)}`.
    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.inner(u, u)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.norm_sq(u).sqrt()
    }

    /// Reads `x_1,...,x_d,f[,w]`. Given weights are normalized by their sum.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let has_w = names.last() == Some(&"w");
        let f_col = if has_w {
            names.len().checked_sub(2)
        } else {
            names.len().checked_sub(1)
        };
        let f_col = match f_col {
            Some(k) if k >= 1 && names[k] == "f" => k,
            _ => {
                return Err(Error::InvalidInput(
                    "dataset csv header must be x_1,...,x_d,f[,w]".into(),
                ))
            }
        };
        for (k, name) in names.iter().take(f_col).enumerate() {
            if *name != format!("x_{}", k + 1) {
                return Err(Error::InvalidInput(format!(
                    "unexpected dataset csv column '{name}', expected x_{}",
                    k + 1
                )));
            }
        }
        let mut points = Vec::new();
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for record in reader.records() {
            let record = record?;
            check_len("dataset csv row", names.len(), record.len())?;
            let row: Vec<f64> = record.iter().map(parse_float).collect::<Result<_>>()?;
            points.push(row[..f_col].to_vec());
            targets.push(row[f_col]);
            if has_w {
                weights.push(row[f_col + 1]);
            }
        }
        let weights = if has_w {
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidInput(
                    "dataset weights must have positive sum".into(),
                ));
            }
            Some(weights.iter().map(|w| w / total).collect())
        } else {
            None
        };
        Dataset::new(points, targets, weights)
    }

    /// Writes `x_1,...,x_d,f,w`.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x_{k}")).collect();
        header.push("f".into());
        header.push("w".into());
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| v.to_string()).collect();
            row.push(self.targets[i].to_string());
            row.push(self.weights[i].to_string());
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub(crate) fn weighted_inner(w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..w.len() {
        s += w[i] * u[i] * v[i];
    }
    s
}

/// Number of entries above which the design matrix is evaluated on the fly.
pub const DEFAULT_DENSE_LIMIT: usize = 50_000_000;

#[derive(Debug, Clone)]
enum Storage {
    Dense(DMatrix<f64>),
    MatrixFree {
        points: Vec<f64>,
        dim: usize,
        atoms: Vec<f64>,
        activation: Activation,
    },
}

/// `A[i, n] = sigma(a_n^T x_i + b_n)`, stored densely or evaluated on demand.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    storage: Storage,
}

impl DesignMatrix {
    pub fn from_dense(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        Ok(DesignMatrix {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            storage: Storage::Dense(matrix),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn entry(&self, i: usize, n: usize) -> f64 {
        match &self.storage {
            Storage::Dense(a) => a[(i, n)],
            Storage::MatrixFree {
                points,
                dim,
                atoms,
                activation,
            } => {
                let x = &points[i * dim..(i + 1) * dim];
                let w = &atoms[n * (dim + 1)..(n + 1) * (dim + 1)];
                let mut s = 0.0;
                for k in 0..*dim {
                    s += w[k] * x[k];
                }
                activation.eval(s + w[*dim])
            }
        }
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(a) => a.column(n).iter().copied().collect(),
            Storage::MatrixFree { .. } => (0..self.rows).map(|i| self.entry(i, n)).collect(),
        }
    }

    /// Dense copy of the selected columns.
    pub fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, idx.len(), |i, k| self.entry(i, idx[k]))
    }

    /// Dense copy of the whole matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(a) => a.clone(),
            Storage::MatrixFree { .. } => {
                DMatrix::from_fn(self.rows, self.cols, |i, n| self.entry(i, n))
            }
        }
    }
}

/// Builds the design matrix, dense unless `m * N` exceeds [`DEFAULT_DENSE_LIMIT`].
pub fn build_design_matrix(
    dataset: &Dataset,
    atoms: &AtomSet,
    activation: &Activation,
) -> Result<DesignMatrix> {
    build_design_matrix_with_limit(dataset, atoms, activation, DEFAULT_DENSE_LIMIT)
}

pub fn build_design_matrix_with_limit(
    dataset: &Dataset,
    atoms: &AtomSet,
    activation: &Activation,
    dense_limit: usize,
) -> Result<DesignMatrix> {
    check_len("design matrix input dimension", dataset.dim(), atoms.dim())?;
    let (m, n_atoms) = (dataset.len(), atoms.len());
    let packed: Vec<f64> = atoms.atoms().iter().flat_map(|a| a.coordinates()).collect();
    let free = DesignMatrix {
        rows: m,
        cols: n_atoms,
        storage: Storage::MatrixFree {
            points: dataset.points.clone(),
            dim: dataset.dim(),
            atoms: packed,
            activation: activation.clone(),
        },
    };
    if m.saturating_mul(n_atoms) > dense_limit {
        return Ok(free);
    }
    DesignMatrix::from_dense(free.to_dense())
}

/// `(K mu)_i = sum_n A[i, n] c_n`, summed in index order.
pub fn predict(mu: &SparseMeasure, a: &DesignMatrix) -> Result<Vec<f64>> {
    check_len("predict", a.cols(), mu.len())?;
    Ok(predict_coefficients(&mu.coefficients, a))
}

pub(crate) fn predict_coefficients(c: &[f64], a: &DesignMatrix) -> Vec<f64> {
    let mut out = vec![0.0; a.rows()];
    for (n, &cn) in c.iter().enumerate() {
        if cn == 0.0 {
            continue;
        }
        match &a.storage {
            Storage::Dense(mat) => {
                for (o, v) in out.iter_mut().zip(mat.column(n).iter()) {
                    *o += v * cn;
                }
            }
            Storage::MatrixFree { .. } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += a.entry(i, n) * cn;
                }
            }
        }
    }
    out
}

/// `(L_rho phi)_n = sum_i w_i phi_i A[i, n]`.
pub fn backproject(residual: &[f64], a: &DesignMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    check_len("backproject residual", a.rows(), residual.len())?;
    check_len("backproject weights", a.rows(), weights.len())?;
    let wr: Vec<f64> = weights.iter().zip(residual).map(|(w, r)| w * r).collect();
    let mut out = vec![0.0; a.cols()];
    for (n, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        match &a.storage {
            Storage::Dense(mat) => {
                for (x, v) in wr.iter().zip(mat.column(n).iter()) {
                    s += x * v;
                }
            }
            Storage::MatrixFree { .. } => {
                for (i, x) in wr.iter().enumerate() {
                    s += x * a.entry(i, n);
                }
            }
        }
        *o = s;
    }
    Ok(out)
}

/// `R_f(mu) = 1/2 sum_i w_i (K mu - f)_i^2`.
pub fn loss_rf(mu: &SparseMeasure, a: &DesignMatrix, dataset: &Dataset) -> Result<f64> {
    check_len("loss rows", a.rows(), dataset.len())?;
    let pred = predict(mu, a)?;
    Ok(half_sq_residual(&pred, dataset))
}

pub(crate) fn half_sq_residual(pred: &[f64], dataset: &Dataset) -> f64 {
    let r: Vec<f64> = pred
        .iter()
        .zip(dataset.targets())
        .map(|(p, f)| p - f)
        .collect();
    0.5 * dataset.norm_sq(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, WeightVariant};

    fn toy() -> (Dataset, AtomSet) {
        let ds = Dataset::new(
            vec![vec![1.0, 0.5], vec![-1.0, 2.0], vec![0.0, 0.0]],
            vec![1.0, 2.0, 3.0],
            None,
        )
        .unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![
                Atom::new(vec![1.0, 0.0], 1.0),
                Atom::new(vec![-0.5, 1.0], 0.0),
            ],
            WeightVariant::WithConstant,
        )
        .unwrap();
        (ds, atoms)
    }

    #[test]
    fn relu_entry_and_prediction() {
        let (ds, atoms) = toy();
        let a = build_design_matrix(&ds, &atoms, &Activation::relu()).unwrap();
        // a^T x + b = 1 + 1 = 2 at the first point
        assert_eq!(a.entry(0, 0), 2.0);
        assert_eq!(a.entry(1, 0), 0.0);
        let pred = predict(&SparseMeasure::new(vec![1.0, 0.0]).unwrap(), &a).unwrap();
        assert_eq!(pred[0], 2.0);
        assert_eq!(predict(&SparseMeasure::zeros(2), &a).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn tanh_zero_atom_column() {
        let (ds, _) = toy();
        let atoms = AtomSet::with_bounding_box(
            vec![Atom::new(vec![0.0, 0.0], 0.0)],
            WeightVariant::WithConstant,
        )
        .unwrap();
        let a = build_design_matrix(&ds, &atoms, &Activation::tanh()).unwrap();
        assert_eq!(a.column(0), vec![0.0; 3]);
    }

    #[test]
    fn matrix_free_matches_dense() {
        let (ds, atoms) = toy();
        let act = Activation::sigmoid();
        let dense = build_design_matrix(&ds, &atoms, &act).unwrap();
        let free = build_design_matrix_with_limit(&ds, &atoms, &act, 0).unwrap();
        assert!(!free.is_dense());
        let mu = SparseMeasure::new(vec![0.3, -1.2]).unwrap();
        assert_eq!(predict(&mu, &dense).unwrap(), predict(&mu, &free).unwrap());
        let phi = [0.1, -0.2, 0.7];
        assert_eq!(
            backproject(&phi, &dense, ds.weights()).unwrap(),
            backproject(&phi, &free, ds.weights()).unwrap()
        );
    }

    #[test]
    fn single_sample_backprojection() {
        let ds = Dataset::new(vec![vec![0.5]], vec![1.0], None).unwrap();
        let atoms = AtomSet::with_bounding_box(
            vec![Atom::new(vec![2.0], -0.5), Atom::new(vec![-1.0], 0.0)],
            WeightVariant::WithConstant,
        )
        .unwrap();
        let a = build_design_matrix(&ds, &atoms, &Activation::tanh()).unwrap();
        let g = backproject(&[3.0], &a, ds.weights()).unwrap();
        assert_eq!(g, vec![3.0 * 0.5f64.tanh(), 3.0 * (-0.5f64).tanh()]);
        assert_eq!(
            backproject(&[0.0], &a, ds.weights()).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn loss_of_zero_measure() {
        let (ds, atoms) = toy();
        let a = build_design_matrix(&ds, &atoms, &Activation::relu()).unwrap();
        let l = loss_rf(&SparseMeasure::zeros(2), &a, &ds).unwrap();
        assert!((l - 0.5 * (1.0 + 4.0 + 9.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(Dataset::new(
            vec![vec![0.0], vec![1.0]],
            vec![0.0, 0.0],
            Some(vec![0.5, 0.6])
        )
        .is_err());
        assert!(Dataset::new(vec![vec![0.0]], vec![f64::NAN], None).is_err());
    }

    #[test]
    fn csv_roundtrip_and_uniform_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "x_1,f\n0.0,1.0\n1.0,2.0\n").unwrap();
        let ds = Dataset::from_csv(&path).unwrap();
        assert_eq!(ds.weights(), &[0.5, 0.5]);
        let out = dir.path().join("out.csv");
        ds.to_csv(&out).unwrap();
        assert_eq!(Dataset::from_csv(&out).unwrap(), ds);
        std::fs::write(&path, "y,f\n0.0,1.0\n").unwrap();
        assert!(Dataset::from_csv(&path).is_err());
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(Activation::relu().lipschitz_constant(), 1.0);
        assert_eq!(Activation::sigmoid().lipschitz_constant(), 0.25);
        let c = Activation::custom(|s| 0.5 * s.sin(), 0.5).unwrap();
        assert_eq!(c.eval(0.0), 0.0);
        assert!(Activation::custom(|s| s, 0.0).is_err());
    }
}
