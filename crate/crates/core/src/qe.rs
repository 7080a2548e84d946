//! Quantum-ergodicity diagnostics for random sections: the mass-measure
//! defect against `μ_eq`, the L¹ distance of `(1/N) log|s|²` to `φ_eq`, the
//! pair-moment law of complex Gaussians, and second moments of the mass
//! statistics `X_N^a = ∫ a |s|²_{h^N} dν`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dictionary::{max_of, mean_of, TestDictionary, TestFunction};
use crate::ensembles::{complex_gaussian, mean_stderr, task_rng, Ensemble, RandomSection};
use crate::equilibrium::{EquilibriumMeasure, Envelope};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PotentialGrid};
use crate::hilb::WeightedSpace;
use crate::model::SupportMeasure;
use crate::onbstats::{toeplitz, ToeplitzMatrix};
use crate::zeros::{log_modulus_potential, sample_stream};

/// Operation cap for the direct double quadrature.
pub const DOUBLE_SUM_CAP: f64 = 4e8;

/// Node data shared by every section of one space.
pub struct QeContext<'a> {
    pub space: &'a WeightedSpace,
    /// `A_{ij} = sqrt(w_i) S_j(z_i) e^{-Nφ(z_i)/2}`.
    pub node_table: DMatrix<Complex64>,
    /// Dictionary values at the nodes, one column per function.
    pub dict_values: DMatrix<f64>,
    /// `∫ a dμ_eq` per dictionary function.
    pub target: Vec<f64>,
}

impl<'a> QeContext<'a> {
    pub fn new(space: &'a WeightedSpace, measure: &SupportMeasure, dict: &TestDictionary, mu: &EquilibriumMeasure) -> Self {
        let nodes = measure.nodes();
        let dict_values = DMatrix::from_fn(nodes.len(), dict.len(), |i, k| dict.functions[k].eval(nodes[i]));
        let target = dict.functions.iter().map(|f| mu.pair(|z| f.eval(z))).collect();
        Self { space, node_table: space.node_table(measure), dict_values, target }
    }

    /// Node masses `w_i |s(z_i)|²_{h^N} / ||s||²`.
    pub fn node_masses(&self, section: &RandomSection) -> Vec<f64> {
        let norm = section.norm_sqr();
        let c = DMatrix::from_column_slice(section.coeffs.len(), 1, &section.coeffs);
        let v = &self.node_table * c;
        v.iter().map(|x| x.norm_sqr() / norm).collect()
    }

    /// `X_N^a = ∫ a |s|²/||s||² dν` for every dictionary function.
    pub fn mass_statistics(&self, section: &RandomSection) -> Vec<f64> {
        let m = self.node_masses(section);
        let mv = DMatrix::from_column_slice(m.len(), 1, &m);
        (self.dict_values.transpose() * mv).iter().cloned().collect()
    }

    /// `|X_N^a - ∫ a dμ_eq|` per dictionary function.
    pub fn defects(&self, section: &RandomSection) -> Vec<f64> {
        self.mass_statistics(section).iter().zip(&self.target).map(|(x, t)| (x - t).abs()).collect()
    }

    /// Max over the dictionary of the defect.
    pub fn qe_defect(&self, section: &RandomSection) -> f64 {
        max_of(&self.defects(section))
    }
}

/// `max_a |∫ a |s|²/||s||² dν - ∫ a dμ_eq|` over the dictionary.
pub fn qe_defect(
    space: &WeightedSpace,
    measure: &SupportMeasure,
    section: &RandomSection,
    dict: &TestDictionary,
    mu: &EquilibriumMeasure,
) -> f64 {
    QeContext::new(space, measure, dict, mu).qe_defect(section)
}

/// L¹ distance on the box, normalized by its area.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct L1Error {
    pub error: f64,
    /// Grid points where `s` vanishes exactly, left out of the mean.
    pub excluded: usize,
}

/// `(1/|box|) ∫_box |u_N - φ_eq| dA` with `u_N = (1/N) log|f|²` and
/// `||s|| = 1`, evaluated on `grid` (the envelope is interpolated there).
pub fn l1_potential_error(
    space: &WeightedSpace,
    section: &RandomSection,
    envelope: &Envelope,
    grid: &GridSpec,
) -> Result<L1Error> {
    let norm = section.norm_sqr().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Config("section has zero norm".into()));
    }
    let unit = RandomSection::fixed(section.degree, section.coeffs.iter().map(|c| c / norm).collect());
    let u = log_modulus_potential(space, &unit, grid)?;
    let eq = if envelope.potential.spec == *grid {
        envelope.potential.clone()
    } else {
        envelope.potential.resample(*grid)
    };
    Ok(l1_mean(&u, &eq))
}

fn l1_mean(u: &PotentialGrid, eq: &PotentialGrid) -> L1Error {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut excluded = 0usize;
    for (a, b) in u.values.iter().zip(&eq.values) {
        if a.is_finite() {
            sum += (a - b).abs();
            count += 1;
        } else {
            excluded += 1;
        }
    }
    L1Error { error: if count > 0 { sum / count as f64 } else { f64::NAN }, excluded }
}

/// Monte Carlo estimate with its target.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub target: f64,
}

impl MomentEstimate {
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            (self.mean - self.target) / self.stderr
        } else if self.mean == self.target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// `G(c) = β + (α - β) c²` with `α = A/6`, `β = A(1/4 - 1/6)`, `A = 2·3!`.
pub fn pair_moment_law(cos_theta: f64) -> f64 {
    let a = 2.0 * 6.0;
    let alpha = a / 6.0;
    let beta = a * (0.25 - 1.0 / 6.0);
    beta + (alpha - beta) * cos_theta * cos_theta
}

/// Empirical `E|Y₁|²|Y₂|²` with `Y₁ = Ξ₁`, `Y₂ = cosθ Ξ₁ + sinθ Ξ₂`.
pub fn g_moment_mc<R: Rng + ?Sized>(cos_theta: f64, n_samples: usize, rng: &mut R) -> Result<MomentEstimate> {
    if !(0.0..=1.0).contains(&cos_theta) {
        return Err(Error::Config(format!("cos θ must lie in [0, 1], got {cos_theta}")));
    }
    let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
    let (mean, stderr) = mean_stderr((0..n_samples).map(|_| {
        let x1 = complex_gaussian(rng);
        let x2 = complex_gaussian(rng);
        let y2 = x1 * cos_theta + x2 * sin_theta;
        x1.norm_sqr() * y2.norm_sqr()
    }));
    Ok(MomentEstimate { mean, stderr, target: pair_moment_law(cos_theta) })
}

/// Report of the `X_N^a` moment experiment for spherical sections.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceReport {
    pub degree: usize,
    pub function: String,
    pub convention: &'static str,
    pub n_samples: usize,
    /// MC mean of `X_N^a` vs `∫ a Π_N/d_N dν`.
    pub first: MomentEstimate,
    /// `∫ a dμ_eq`, the large-N limit of the mean.
    pub limit_mean: Option<f64>,
    /// MC mean of `(X_N^a)²` vs `[(Tr T)² + Tr T²] / (d(d+1))`.
    pub second: MomentEstimate,
    pub variance_mc: f64,
    pub variance_exact: f64,
}

/// Mean and second moment of `X_N^a` over spherical sections against the
/// exact quadrature values.
///
/// With `T` the Toeplitz matrix of `a`, `X_N^a = c† T c` for the unit
/// coefficient vector `c`, so `E X = Tr T/d` and
/// `E X² = [(Tr T)² + Tr T²] / (d(d+1))`, where
/// `Tr T = ∫ a Π_N dν` and `Tr T² = ∬ a(z)a(w)|Π_N(z,w)|² dν dν`.
pub fn variance_xn_experiment(
    space: &WeightedSpace,
    measure: &SupportMeasure,
    a: &TestFunction,
    n_samples: usize,
    master_seed: u64,
    mu: Option<&EquilibriumMeasure>,
) -> Result<VarianceReport> {
    let t = toeplitz(space, measure, &a.name, |z| a.eval(z));
    let d = space.dim() as f64;
    let tr = integrate_density(space, measure, a);
    let tr2 = offdiag_double_sum(space, measure, a, &t)?.0;
    let first_exact = tr / d;
    let second_exact = (tr * tr + tr2) / (d * (d + 1.0));
    let draws: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let s = RandomSection::draw(space, Ensemble::Spherical, master_seed, sample_stream(space.degree(), k));
            t.quadratic_form(&s.coeffs)
        })
        .collect();
    let (m1, se1) = mean_stderr(draws.iter().cloned());
    let (m2, se2) = mean_stderr(draws.iter().map(|x| x * x));
    Ok(VarianceReport {
        degree: space.degree(),
        function: a.name.clone(),
        convention: "spherical: E|c_j|^2 = 1/d_N",
        n_samples,
        first: MomentEstimate { mean: m1, stderr: se1, target: first_exact },
        limit_mean: mu.map(|m| m.pair(|z| a.eval(z))),
        second: MomentEstimate { mean: m2, stderr: se2, target: second_exact },
        variance_mc: m2 - m1 * m1,
        variance_exact: second_exact - first_exact * first_exact,
    })
}

/// `∫ a Π_N dν` by quadrature.
pub fn integrate_density(space: &WeightedSpace, measure: &SupportMeasure, a: &TestFunction) -> f64 {
    measure
        .nodes()
        .par_iter()
        .zip(measure.weights().par_iter())
        .map(|(z, w)| w * a.eval(*z) * space.bergman_density(*z))
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondMomentRoute {
    /// Direct `ΣΣ` over node pairs.
    DoubleSum,
    /// `Tr T²` of the Toeplitz matrix, identical in exact arithmetic.
    Trace,
}

/// `ΣΣ w_i w_j a_i a_j |Π_N(z_i, z_j)|²`; falls back to `Tr T²` when the
/// direct sum exceeds [`DOUBLE_SUM_CAP`] operations.
fn offdiag_double_sum(
    space: &WeightedSpace,
    measure: &SupportMeasure,
    a: &TestFunction,
    t: &ToeplitzMatrix,
) -> Result<(f64, SecondMomentRoute)> {
    let n = measure.len() as f64;
    let cost = n * n * space.dim() as f64;
    if cost > DOUBLE_SUM_CAP {
        return Ok((t.trace_sq(), SecondMomentRoute::Trace));
    }
    let rows: Vec<Vec<Complex64>> = measure
        .nodes()
        .iter()
        .zip(measure.weights())
        .map(|(z, w)| {
            let s = (w * a.eval(*z).abs()).sqrt();
            space.unitary_values(*z).into_iter().map(|u| u * s).collect()
        })
        .collect();
    let signs: Vec<f64> = measure.nodes().iter().map(|z| a.eval(*z).signum()).collect();
    let total: f64 = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..rows.len() {
                let k: Complex64 = rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y.conj()).sum();
                acc += signs[i] * signs[j] * k.norm_sqr();
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok((total, SecondMomentRoute::DoubleSum))
}

#[derive(Clone, Debug, Serialize)]
pub struct OffDiagonal {
    pub degree: usize,
    pub function: String,
    /// `N^{-1} ΣΣ w w a a |B_N|² e^{-N(φ+φ)}`.
    pub value: f64,
    /// `∫ a² dμ_eq` when a measure was supplied.
    pub limit: Option<f64>,
    pub route: SecondMomentRoute,
}

/// Diagonal concentration of `N^{-1}|B_N(z,w)|² e^{-N(φ(z)+φ(w))}`.
pub fn offdiag_second_moment(
    space: &WeightedSpace,
    measure: &SupportMeasure,
    a: &TestFunction,
    mu: Option<&EquilibriumMeasure>,
) -> Result<OffDiagonal> {
    if space.degree() == 0 {
        return Err(Error::Config("off-diagonal moment needs degree >= 1".into()));
    }
    let t = toeplitz(space, measure, &a.name, |z| a.eval(z));
    let (sum, route) = offdiag_double_sum(space, measure, a, &t)?;
    Ok(OffDiagonal {
        degree: space.degree(),
        function: a.name.clone(),
        value: sum / space.degree() as f64,
        limit: mu.map(|m| m.pair(|z| a.eval(z) * a.eval(z))),
        route,
    })
}

/// `(1/K) Σ_{k ≤ K} y_k` for every prefix.
pub fn cesaro_averages(seq: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    seq.iter()
        .enumerate()
        .map(|(k, y)| {
            acc += y;
            acc / (k + 1) as f64
        })
        .collect()
}

/// One row of a QE report.
#[derive(Clone, Debug, Serialize)]
pub struct QeRow {
    pub model: String,
    pub degree: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub convention: &'static str,
    pub volume_form: &'static str,
    pub mean_defect: f64,
    pub stderr_defect: f64,
    pub mean_l1: f64,
    pub excluded_points: usize,
    /// Defect and L¹ error of the top basis element.
    pub control_defect: f64,
    pub control_l1: f64,
}

/// QE defects and L¹ errors of spherical sections, with the top basis
/// element as a negative control.
#[allow(clippy::too_many_arguments)]
pub fn qe_experiment(
    model: &str,
    spaces: &[(&WeightedSpace, &SupportMeasure)],
    dict: &TestDictionary,
    mu: &EquilibriumMeasure,
    envelope: &Envelope,
    l1_grid: &GridSpec,
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<QeRow>> {
    let eq = envelope.potential.resample(*l1_grid);
    spaces
        .iter()
        .map(|(space, measure)| {
            let ctx = QeContext::new(space, measure, dict, mu);
            let n = space.degree();
            let per: Vec<(f64, L1Error)> = (0..n_samples as u64)
                .into_par_iter()
                .map(|k| {
                    let s = RandomSection::draw(space, Ensemble::Spherical, master_seed, sample_stream(n, k));
                    let u = log_modulus_potential(space, &s, l1_grid)?;
                    Ok((ctx.qe_defect(&s), l1_mean(&u, &eq)))
                })
                .collect::<Result<_>>()?;
            let defects: Vec<f64> = per.iter().map(|p| p.0).collect();
            let (mean_defect, stderr_defect) = mean_stderr(defects.iter().cloned());
            let l1s: Vec<f64> = per.iter().map(|p| p.1.error).collect();
            let control = RandomSection::basis_element(n, n);
            let cu = log_modulus_potential(space, &control, l1_grid)?;
            Ok(QeRow {
                model: model.to_string(),
                degree: n,
                n_samples,
                master_seed,
                convention: "spherical sections, unit norm",
                volume_form: "flat area on the working box, normalized",
                mean_defect,
                stderr_defect,
                mean_l1: mean_of(&l1s),
                excluded_points: per.iter().map(|p| p.1.excluded).sum(),
                control_defect: ctx.qe_defect(&control),
                control_l1: l1_mean(&cu, &eq).error,
            })
        })
        .collect()
}

/// Empirical `E|s(z)|²|s(w)|²` for Gaussian sections divided by
/// `Π_N(z)Π_N(w)`, with target `G(|P_N(z,w)|)`.
pub fn gaussian_pair_moment(
    space: &WeightedSpace,
    z: Complex64,
    w: Complex64,
    n_samples: usize,
    master_seed: u64,
) -> MomentEstimate {
    let uz = space.unitary_values(z);
    let uw = space.unitary_values(w);
    let norm = space.bergman_density(z) * space.bergman_density(w);
    let vals: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = task_rng(master_seed, k);
            let c: Vec<Complex64> = (0..space.dim()).map(|_| complex_gaussian(&mut rng)).collect();
            let sz: Complex64 = uz.iter().zip(&c).map(|(a, b)| a * b).sum();
            let sw: Complex64 = uw.iter().zip(&c).map(|(a, b)| a * b).sum();
            sz.norm_sqr() * sw.norm_sqr() / norm
        })
        .collect();
    let (mean, stderr) = mean_stderr(vals);
    MomentEstimate { mean, stderr, target: pair_moment_law(space.normalized_kernel(z, w)) }
}
