//! Nearest-atom cells over the parameter box: refinement sequences, measure
//! projection, convergence of the discretized objective and the discretization bound.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::lab::BoundReport;
use crate::measure::{
    norm2, total_variation, weighted_l1, Atom, AtomSet, DomainBox, SparseMeasure, WeightVariant,
};
use crate::operator::{Activation, Dataset};
use crate::oracle::minimal_norm_minimizer;
use crate::solver::{weighted_lasso, FlowTrajectory, LassoOptions, Problem};

/// How the atoms of each level are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    /// Cell centres of a tensor grid with `2^level` cells per axis.
    RegularGrid,
    /// Vertices of a tensor grid with `2^level` intervals per axis; levels are nested.
    NestedGrid,
    /// `2^(level * axes)` i.i.d. uniform atoms.
    RandomIid { seed: u64 },
}

/// Atom set with per-atom upper bounds on the diameter of its cell.
#[derive(Debug, Clone)]
pub struct Tessellation {
    pub atoms: AtomSet,
    pub cell_diameters: Vec<f64>,
    pub construction: Construction,
    pub level: usize,
    /// True when the diameters are sampled estimates rather than exact.
    pub estimated: bool,
}

impl Tessellation {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn max_diameter(&self) -> f64 {
        self.cell_diameters.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the nearest atom, lowest index on ties.
    pub fn nearest(&self, point: &[f64]) -> usize {
        nearest_index(&self.coordinates(), point)
    }

    fn coordinates(&self) -> Vec<Vec<f64>> {
        self.atoms.atoms().iter().map(Atom::coordinates).collect()
    }
}

fn nearest_index(coords: &[Vec<f64>], point: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in coords.iter().enumerate() {
        let d: f64 = c.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Tessellations with increasing atom counts.
#[derive(Debug, Clone)]
pub struct RefinementSequence {
    pub levels: Vec<Tessellation>,
}

impl RefinementSequence {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

const PROBES_PER_ATOM: usize = 64;
const MAX_PROBES: usize = 20_000;
const SAFETY: f64 = 1.1;

/// Builds levels `1..=levels` of the construction on `domain`. Atoms with
/// zero weight (possible under `ReluHomogeneous`) are left out.
pub fn build_refinement(
    domain: &DomainBox,
    construction: Construction,
    levels: usize,
    variant: WeightVariant,
) -> Result<RefinementSequence> {
    if domain.is_degenerate() {
        return Err(Error::InvalidInput(
            "tessellation needs a box with positive side lengths".into(),
        ));
    }
    let levels = (1..=levels)
        .map(|l| build_level(domain, construction, l, variant))
        .collect::<Result<Vec<_>>>()?;
    Ok(RefinementSequence { levels })
}

/// A single level of [`build_refinement`].
pub fn build_level(
    domain: &DomainBox,
    construction: Construction,
    level: usize,
    variant: WeightVariant,
) -> Result<Tessellation> {
    let axes = domain.axes();
    let side: Vec<f64> = (0..axes)
        .map(|k| domain.upper[k] - domain.lower[k])
        .collect();
    let cells = 1usize << level;
    let (points, diameters, estimated): (Vec<Vec<f64>>, Vec<f64>, bool) = match construction {
        Construction::RegularGrid => {
            let h: Vec<f64> = side.iter().map(|s| s / cells as f64).collect();
            let diag = norm2(&h);
            let pts = tensor_points(axes, cells, |k, i| {
                domain.lower[k] + (i as f64 + 0.5) * h[k]
            });
            let n = pts.len();
            (pts, vec![diag; n], false)
        }
        Construction::NestedGrid => {
            let h: Vec<f64> = side.iter().map(|s| s / cells as f64).collect();
            let pts = tensor_points(axes, cells + 1, |k, i| domain.lower[k] + i as f64 * h[k]);
            // vertex cell = box of half-width h/2 around the vertex, clipped to the domain
            let diams = pts
                .iter()
                .map(|p| {
                    let ext: Vec<f64> = (0..axes)
                        .map(|k| {
                            (p[k] + h[k] / 2.0).min(domain.upper[k])
                                - (p[k] - h[k] / 2.0).max(domain.lower[k])
                        })
                        .collect();
                    norm2(&ext)
                })
                .collect();
            (pts, diams, false)
        }
        Construction::RandomIid { seed } => {
            let n = cells.pow(axes as u32);
            let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(level as u64));
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..axes)
                        .map(|k| r.random_range(domain.lower[k]..=domain.upper[k]))
                        .collect()
                })
                .collect();
            let diams = sampled_diameters(domain, &pts, &mut r);
            (pts, diams, true)
        }
    };
    let mut atoms = Vec::with_capacity(points.len());
    let mut cell_diameters = Vec::with_capacity(points.len());
    for (p, d) in points.iter().zip(diameters) {
        let atom = Atom::from_coordinates(p);
        if variant == WeightVariant::ReluHomogeneous
            && crate::measure::weight_of(&atom, variant) == 0.0
        {
            continue;
        }
        atoms.push(atom);
        cell_diameters.push(d);
    }
    Ok(Tessellation {
        atoms: AtomSet::new(atoms, variant, domain.clone())?,
        cell_diameters,
        construction,
        level,
        estimated,
    })
}

fn tensor_points(
    axes: usize,
    per_axis: usize,
    coord: impl Fn(usize, usize) -> f64,
) -> Vec<Vec<f64>> {
    let total = per_axis.pow(axes as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; axes];
            for (k, slot) in p.iter_mut().enumerate() {
                *slot = coord(k, idx % per_axis);
                idx /= per_axis;
            }
            p
        })
        .collect()
}

// twice the largest probe distance seen by each atom, times a safety factor
fn sampled_diameters(domain: &DomainBox, pts: &[Vec<f64>], r: &mut ChaCha8Rng) -> Vec<f64> {
    let axes = domain.axes();
    let probes = (PROBES_PER_ATOM * pts.len()).min(MAX_PROBES).max(pts.len());
    let mut radius = vec![0.0f64; pts.len()];
    for _ in 0..probes {
        let q: Vec<f64> = (0..axes)
            .map(|k| r.random_range(domain.lower[k]..=domain.upper[k]))
            .collect();
        let k = nearest_index(pts, &q);
        let d = pts[k]
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        radius[k] = radius[k].max(d);
    }
    let fallback = radius.iter().copied().fold(0.0, f64::max);
    radius
        .iter()
        .map(|&rad| 2.0 * SAFETY * if rad > 0.0 { rad } else { fallback })
        .collect()
}

/// Moves the mass of every fine atom to its nearest coarse atom (lowest index on ties).
pub fn project_measure(
    mu_fine: &SparseMeasure,
    fine: &AtomSet,
    coarse: &Tessellation,
) -> Result<SparseMeasure> {
    check_len("project_measure", fine.len(), mu_fine.len())?;
    check_len("project_measure dimension", coarse.atoms.dim(), fine.dim())?;
    let coords = coarse.coordinates();
    let mut out = vec![0.0; coarse.len()];
    for (k, atom) in fine.atoms().iter().enumerate() {
        let c = mu_fine.coefficients[k];
        if c == 0.0 {
            continue;
        }
        let p = atom.coordinates();
        if !coarse.atoms.domain().contains(&p) {
            return Err(Error::InvalidInput(format!(
                "fine atom {k} lies outside the coarse domain"
            )));
        }
        out[nearest_index(&coords, &p)] += c;
    }
    Ok(SparseMeasure { coefficients: out })
}

/// Continuous function on the parameter box paired against minimizers.
pub type TestFunction = fn(&[f64]) -> f64;

/// `1`, the coordinate sum, `exp(-|w|^2)` and `cos(w_1)`.
pub fn default_panel() -> Vec<TestFunction> {
    fn one(_: &[f64]) -> f64 {
        1.0
    }
    fn sum(w: &[f64]) -> f64 {
        w.iter().sum()
    }
    fn bump(w: &[f64]) -> f64 {
        (-w.iter().map(|x| x * x).sum::<f64>()).exp()
    }
    fn wave(w: &[f64]) -> f64 {
        w[0].cos()
    }
    vec![one, sum, bump, wave]
}

/// `<g, mu> = sum c_n g(w_n)`.
pub fn pairing(g: TestFunction, mu: &SparseMeasure, atoms: &AtomSet) -> f64 {
    atoms
        .atoms()
        .iter()
        .zip(&mu.coefficients)
        .map(|(a, c)| c * g(&a.coordinates()))
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub n: usize,
    pub max_diameter: f64,
    pub f_min: f64,
    pub loss_min: f64,
    pub j_min: f64,
    pub pairings: Vec<f64>,
    /// Optimality residual of the inner solve.
    pub residual: f64,
    /// Set when the inner solve missed its tolerance.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaExperiment {
    pub lambda: f64,
    pub rows: Vec<GammaRow>,
    /// Largest increase of `f_min` from one level to the next (nonpositive when monotone).
    pub max_increase: f64,
    /// `|f_min|` difference of the last two levels.
    pub cauchy_gap: f64,
    /// Largest pairing difference of the last two levels.
    pub pairing_gap: f64,
}

impl GammaExperiment {
    /// Non-increasing within `tol` at every level.
    pub fn monotone(&self, tol: f64) -> bool {
        self.max_increase <= tol
    }

    /// Writes `N,maxdiam,F_min,loss_min,j_min,pairing_g1,...`.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let panel = self.rows.first().map_or(0, |r| r.pairings.len());
        let mut header: Vec<String> = ["N", "maxdiam", "F_min", "loss_min", "j_min"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=panel).map(|k| format!("pairing_g{k}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![
                r.n.to_string(),
                r.max_diameter.to_string(),
                r.f_min.to_string(),
                r.loss_min.to_string(),
                r.j_min.to_string(),
            ];
            row.extend(r.pairings.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimizes `J + lambda R_f` on every level with the default panel and solver options.
pub fn gamma_convergence_experiment(
    dataset: &Dataset,
    activation: &Activation,
    refinement: &RefinementSequence,
    lambda: f64,
) -> Result<GammaExperiment> {
    gamma_convergence_experiment_with(
        dataset,
        activation,
        refinement,
        lambda,
        &default_panel(),
        LassoOptions::default(),
    )
}

pub fn gamma_convergence_experiment_with(
    dataset: &Dataset,
    activation: &Activation,
    refinement: &RefinementSequence,
    lambda: f64,
    panel: &[TestFunction],
    opts: LassoOptions,
) -> Result<GammaExperiment> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let mut rows = Vec::with_capacity(refinement.len());
    for tess in &refinement.levels {
        let prob = Problem::new(dataset.clone(), tess.atoms.clone(), activation.clone())?;
        let zero = vec![0.0; prob.n_atoms()];
        let sol = weighted_lasso(&prob, &zero, lambda, opts, None)?;
        let loss = prob.loss(&sol.coefficients);
        let j = weighted_l1(&sol.coefficients, prob.atoms().weights());
        let mu = SparseMeasure {
            coefficients: sol.coefficients,
        };
        rows.push(GammaRow {
            n: tess.len(),
            max_diameter: tess.max_diameter(),
            f_min: j + lambda * loss,
            loss_min: loss,
            j_min: j,
            pairings: panel
                .iter()
                .map(|g| pairing(*g, &mu, &tess.atoms))
                .collect(),
            residual: sol.residual,
            flagged: !(sol.residual <= opts.tol),
        });
    }
    let max_increase = rows
        .windows(2)
        .map(|w| w[1].f_min - w[0].f_min)
        .fold(f64::NEG_INFINITY, f64::max);
    let (cauchy_gap, pairing_gap) = match rows.as_slice() {
        [.., a, b] => (
            (a.f_min - b.f_min).abs(),
            a.pairings
                .iter()
                .zip(&b.pairings)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        ),
        _ => (f64::NAN, f64::NAN),
    };
    Ok(GammaExperiment {
        lambda,
        rows,
        max_increase,
        cauchy_gap,
        pairing_gap,
    })
}

/// `2 ||mu||_TV^2 maxdiam^2 Lip(sigma)^2 sum_i w_i max(1, |x_i|)^2`.
pub fn discretization_term(
    tv_norm: f64,
    max_diameter: f64,
    lipschitz: f64,
    dataset: &Dataset,
) -> f64 {
    let moment: f64 = (0..dataset.len())
        .map(|i| dataset.weights()[i] * norm2(dataset.point(i)).max(1.0).powi(2))
        .sum();
    2.0 * tv_norm * tv_norm * max_diameter * max_diameter * lipschitz * lipschitz * moment
}

/// Compares `||K nu_t - f||^2` of a flow on the coarse atoms with
/// `2 ||K mu_ref - f||^2 + 2 J(nu_dagger) / t + discretization_term`, where
/// `mu_ref` lives on `fine` and `nu_dagger` is the coarse minimal-`J` minimizer
/// (computed when not given).
pub fn discretization_bound_report(
    trajectory: &FlowTrajectory,
    coarse: &Problem,
    tessellation: &Tessellation,
    fine: &Problem,
    mu_ref: &SparseMeasure,
    nu_dagger: Option<&SparseMeasure>,
) -> Result<BoundReport> {
    check_len("discretization reference", fine.n_atoms(), mu_ref.len())?;
    check_len(
        "discretization tessellation",
        tessellation.len(),
        coarse.n_atoms(),
    )?;
    if coarse.dataset() != fine.dataset() {
        return Err(Error::InvalidInput(
            "coarse and fine problems must share the dataset".into(),
        ));
    }
    let j_nu = match nu_dagger {
        Some(nu) => weighted_l1(&nu.coefficients, coarse.atoms().weights()),
        None => minimal_norm_minimizer(coarse)?.j_value,
    };
    let ref_term = 2.0 * 2.0 * fine.loss(&mu_ref.coefficients);
    let diam_term = discretization_term(
        total_variation(mu_ref),
        tessellation.max_diameter(),
        coarse.activation().lipschitz_constant(),
        coarse.dataset(),
    );
    let mut times = Vec::new();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for b in trajectory.breakpoints.iter().filter(|b| b.t > 0.0) {
        times.push(b.t);
        lhs.push(2.0 * b.loss);
        rhs.push(ref_term + 2.0 * j_nu / b.t + diam_term);
    }
    let mut report = BoundReport::from_parts("discretization", times, lhs, rhs, true);
    if tessellation.estimated {
        report.estimate = true;
        report
            .notes
            .push("cell diameters are sampled estimates".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval() -> DomainBox {
        DomainBox::new(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn first_grid_level_on_unit_interval() {
        let t = build_level(
            &unit_interval(),
            Construction::RegularGrid,
            1,
            WeightVariant::WithConstant,
        )
        .unwrap();
        let coords: Vec<f64> = t.atoms.atoms().iter().map(|a| a.b).collect();
        assert_eq!(coords, vec![0.25, 0.75]);
        assert_eq!(t.cell_diameters, vec![0.5, 0.5]);
    }

    #[test]
    fn grid_diameters_halve() {
        let dom = DomainBox::symmetric(2, 1.0).unwrap();
        let seq = build_refinement(
            &dom,
            Construction::RegularGrid,
            3,
            WeightVariant::WithConstant,
        )
        .unwrap();
        for w in seq.levels.windows(2) {
            assert!((w[0].max_diameter() / w[1].max_diameter() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_levels_contain_previous_atoms() {
        let dom = DomainBox::symmetric(2, 1.0).unwrap();
        let seq = build_refinement(
            &dom,
            Construction::NestedGrid,
            3,
            WeightVariant::WithConstant,
        )
        .unwrap();
        for w in seq.levels.windows(2) {
            for a in w[0].atoms.atoms() {
                assert!(w[1].atoms.atoms().contains(a));
            }
        }
    }

    #[test]
    fn homogeneous_weights_drop_the_origin() {
        let dom = DomainBox::symmetric(2, 1.0).unwrap();
        let t = build_level(
            &dom,
            Construction::NestedGrid,
            1,
            WeightVariant::ReluHomogeneous,
        )
        .unwrap();
        assert_eq!(t.len(), 8);
    }

    #[test]
    fn projection_onto_itself_is_identity() {
        let dom = DomainBox::symmetric(2, 1.0).unwrap();
        let t = build_level(
            &dom,
            Construction::RegularGrid,
            2,
            WeightVariant::WithConstant,
        )
        .unwrap();
        let mu = SparseMeasure::new((0..t.len()).map(|k| (k as f64).sin()).collect()).unwrap();
        assert_eq!(project_measure(&mu, &t.atoms, &t).unwrap(), mu);
    }

    #[test]
    fn opposite_masses_in_one_cell_cancel() {
        let dom = unit_interval();
        let coarse = build_level(
            &dom,
            Construction::RegularGrid,
            1,
            WeightVariant::WithConstant,
        )
        .unwrap();
        let fine = AtomSet::new(
            vec![Atom::new(vec![], 0.1), Atom::new(vec![], 0.2)],
            WeightVariant::WithConstant,
            dom,
        )
        .unwrap();
        let mu = SparseMeasure::new(vec![1.0, -1.0]).unwrap();
        let p = project_measure(&mu, &fine, &coarse).unwrap();
        assert_eq!(p.coefficients, vec![0.0, 0.0]);
    }

    #[test]
    fn random_diameters_are_flagged() {
        let dom = DomainBox::symmetric(2, 1.0).unwrap();
        let t = build_level(
            &dom,
            Construction::RandomIid { seed: 3 },
            2,
            WeightVariant::WithConstant,
        )
        .unwrap();
        assert!(t.estimated);
        assert!(t.cell_diameters.iter().all(|d| *d > 0.0 && d.is_finite()));
    }

    #[test]
    fn diameter_term_is_quadratic() {
        let ds = Dataset::new(vec![vec![0.5], vec![2.0]], vec![0.0, 0.0], None).unwrap();
        let a = discretization_term(1.5, 0.2, 1.0, &ds);
        let b = discretization_term(1.5, 0.1, 1.0, &ds);
        assert!((a / b - 4.0).abs() < 1e-12);
        assert_eq!(discretization_term(1.5, 0.0, 1.0, &ds), 0.0);
    }
}
