//! Zeros of random sections, their empirical measures, the expected zero
//! current, and convergence of zeros to the equilibrium measure.

use std::path::Path;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dictionary::{defects, max_of, mean_of, TestDictionary};
use crate::ensembles::{Ensemble, RandomSection};
use crate::equilibrium::EquilibriumMeasure;
use crate::error::{Error, Result};
use crate::grid::{laplacian_at, GridKind, GridSpec, PotentialGrid};
use crate::hilb::{log_bergman_potential, WeightedSpace};
use crate::model::fmt_f64;

/// Relative size below which a leading coefficient counts as zero.
pub const LEADING_TRIM: f64 = 1e-13;
/// Backward-error bound accepted for a computed root.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Roots of a polynomial together with the number of roots sent to infinity.
#[derive(Clone, Debug, Serialize)]
pub struct RootSet {
    pub roots: Vec<Complex64>,
    /// Nominal degree minus the degree after trimming the leading end.
    pub degree_drop: usize,
    pub nominal_degree: usize,
    /// Largest backward residual `|p(ζ)| / Σ|a_k||ζ|^k`.
    pub max_residual: f64,
}

/// Roots of `Σ a_k z^k` from the eigenvalues of a balanced companion matrix.
///
/// Leading coefficients below `LEADING_TRIM·max|a|` are dropped and counted
/// as roots at infinity. Exact trailing zeros are counted as roots at the
/// origin. The remaining polynomial is rescaled so that its constant and
/// leading coefficients have equal modulus.
pub fn roots(coeffs: &[Complex64]) -> Result<RootSet> {
    let nominal = coeffs.len().saturating_sub(1);
    let amax = coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if !(amax > 0.0) || !amax.is_finite() {
        return Err(Error::Roots("polynomial is identically zero or non-finite".into()));
    }
    let mut hi = coeffs.len() - 1;
    while coeffs[hi].norm() <= LEADING_TRIM * amax {
        hi -= 1;
    }
    let degree_drop = nominal - hi;
    let lo = coeffs.iter().position(|a| *a != Complex64::new(0.0, 0.0)).expect("nonzero entry exists");
    let mut out = vec![Complex64::new(0.0, 0.0); lo];
    let core = &coeffs[lo..=hi];
    let n = core.len() - 1;
    let mut max_residual: f64 = 0.0;
    if n > 0 {
        let ln_rho = (core[0].norm().ln() - core[n].norm().ln()) / n as f64;
        let rho = ln_rho.exp();
        // monic coefficients of q(w) = p(ρw) / (a_n ρ^n)
        let lead = core[n];
        let b: Vec<Complex64> = (0..n)
            .map(|k| core[k] / lead * ((k as f64 - n as f64) * ln_rho).exp())
            .collect();
        let mut comp = DMatrix::<Complex64>::zeros(n, n);
        for k in 0..n {
            comp[(0, k)] = -b[n - 1 - k];
        }
        for k in 1..n {
            comp[(k, k - 1)] = Complex64::new(1.0, 0.0);
        }
        balance(&mut comp);
        let schur = Schur::try_new(comp, f64::EPSILON, 100 * n.max(10))
            .ok_or_else(|| Error::Roots(format!("Schur iteration failed at degree {n}")))?;
        let (_, t) = schur.unpack();
        for i in 0..n {
            let mut w = t[(i, i)];
            let mut res = backward_residual(&b, w);
            if !(res <= RESIDUAL_TOL) {
                for _ in 0..3 {
                    let (p, dp) = horner_with_derivative(&b, w);
                    if dp.norm() == 0.0 {
                        break;
                    }
                    w -= p / dp;
                }
                res = backward_residual(&b, w);
                if !(res <= RESIDUAL_TOL) {
                    return Err(Error::Roots(format!("root {w} fails the residual check ({res:.3e})")));
                }
            }
            max_residual = max_residual.max(res);
            out.push(w * rho);
        }
    }
    Ok(RootSet { roots: out, degree_drop, nominal_degree: nominal, max_residual })
}

/// Monic `q(w) = w^n + Σ_{k<n} b_k w^k` and its derivative by Horner.
fn horner_with_derivative(b: &[Complex64], w: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for bk in b.iter().rev() {
        dp = dp * w + p;
        p = p * w + bk;
    }
    (p, dp)
}

fn backward_residual(b: &[Complex64], w: Complex64) -> f64 {
    let (p, _) = horner_with_derivative(b, w);
    let r = w.norm();
    let scale = b.iter().rev().fold(1.0, |acc, bk| acc * r + bk.norm());
    p.norm() / scale
}

/// Parlett–Reinsch balancing by powers of two; similarity-preserving.
fn balance(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    let l1 = |z: Complex64| z.re.abs() + z.im.abs();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += l1(m[(j, i)]);
                    r += l1(m[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / 2.0;
            while c < g {
                f *= 2.0;
                c *= 4.0;
            }
            g = r * 2.0;
            while c > g {
                f /= 2.0;
                c /= 4.0;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Weighted atoms `(1/N) Σ δ_ζ`.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Complex64>,
    pub masses: Vec<f64>,
    pub degree: usize,
    pub degree_drop: usize,
    /// Atoms outside the working box, kept but flagged.
    pub outside_box: Vec<bool>,
}

impl EmpiricalMeasure {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn pair<F: Fn(Complex64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().zip(&self.masses).map(|(z, m)| m * f(*z)).sum()
    }

    pub fn pair_dictionary(&self, dict: &TestDictionary) -> Vec<f64> {
        dict.pair_atoms(&self.atoms, &self.masses)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["re", "im", "mass", "outside_box"])?;
        for ((z, m), o) in self.atoms.iter().zip(&self.masses).zip(&self.outside_box) {
            w.write_record([fmt_f64(z.re), fmt_f64(z.im), fmt_f64(*m), (*o as u8).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Zeros of `s = Σ c_j S_j` as atoms of mass `1/N`.
pub fn empirical_zero_measure(
    space: &WeightedSpace,
    section: &RandomSection,
    working_box: Option<&GridSpec>,
) -> Result<EmpiricalMeasure> {
    if section.degree != space.degree() {
        return Err(Error::DegreeMismatch { space: space.degree(), requested: section.degree });
    }
    if space.degree() == 0 {
        return Err(Error::Config("degree-0 sections have no zeros".into()));
    }
    let a = space.polynomial_coeffs(&section.coeffs);
    let rs = roots(&a)?;
    let mass = 1.0 / space.degree() as f64;
    let outside_box = rs.roots.iter().map(|z| working_box.is_some_and(|b| !b.contains(*z))).collect();
    Ok(EmpiricalMeasure {
        masses: vec![mass; rs.roots.len()],
        atoms: rs.roots,
        degree: space.degree(),
        degree_drop: rs.degree_drop,
        outside_box,
    })
}

/// Grid density of a current, with the outer band left at zero.
#[derive(Clone, Debug)]
pub struct CurrentDensity {
    pub density: PotentialGrid,
    pub band: usize,
}

impl CurrentDensity {
    pub fn pair<F: Fn(Complex64) -> f64>(&self, f: F) -> f64 {
        let s = &self.density.spec;
        self.density
            .values
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(i, d)| d * f(s.point_at(i)))
            .sum::<f64>()
            * s.cell_area()
    }

    pub fn total_mass(&self) -> f64 {
        self.pair(|_| 1.0)
    }

    pub fn pair_dictionary(&self, dict: &TestDictionary) -> Vec<f64> {
        dict.functions.iter().map(|f| self.pair(|z| f.eval(z))).collect()
    }
}

/// Excluded boundary band, in cells.
pub const CURRENT_BAND: usize = 2;

fn laplacian_density(field: &PotentialGrid, kappa: f64) -> Result<CurrentDensity> {
    let s = field.spec;
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Roots("potential is -inf at a grid point".into()));
    }
    let mut values = vec![0.0; s.len()];
    for iy in 0..s.ny {
        for ix in 0..s.nx {
            if s.edge_distance(ix, iy) >= CURRENT_BAND {
                values[s.index(ix, iy)] = kappa * laplacian_at(&field.values, &s, ix, iy);
            }
        }
    }
    Ok(CurrentDensity { density: PotentialGrid { spec: s, values, kind: GridKind::Density }, band: CURRENT_BAND })
}

/// `E[(1/N) Z_s] = κ Δ((1/N) log B_N(z,z))` as a grid density.
pub fn expected_zero_current(space: &WeightedSpace, grid: &GridSpec, kappa: f64) -> Result<CurrentDensity> {
    let u = log_bergman_potential(space, grid)?;
    laplacian_density(&u, kappa)
}

/// `(1/N) log|f|²` of a section in the affine frame.
pub fn log_modulus_potential(space: &WeightedSpace, section: &RandomSection, grid: &GridSpec) -> Result<PotentialGrid> {
    grid.validate()?;
    if section.degree != space.degree() {
        return Err(Error::DegreeMismatch { space: space.degree(), requested: section.degree });
    }
    let inv_n = 1.0 / space.degree().max(1) as f64;
    let values: Vec<f64> = (0..grid.ny)
        .into_par_iter()
        .flat_map_iter(|iy| {
            (0..grid.nx).map(move |ix| {
                let (v, shift) = space.scaled_basis(grid.point(ix, iy));
                let f: Complex64 = v.iter().zip(&section.coeffs).map(|(a, b)| a * b).sum();
                let m = f.norm_sqr();
                if m > 0.0 {
                    inv_n * (2.0 * shift + m.ln())
                } else {
                    f64::NEG_INFINITY
                }
            })
        })
        .collect();
    Ok(PotentialGrid { spec: *grid, values, kind: GridKind::UN })
}

/// One row of the Poincaré–Lelong comparison.
#[derive(Clone, Debug, Serialize)]
pub struct LelongRow {
    pub name: String,
    pub grid_pairing: f64,
    pub zero_pairing: f64,
    pub tolerance: f64,
}

/// Pair `κ Δ_h (1/N) log|f|²` and the empirical zero measure with every
/// dictionary element. The tolerance per element is
/// `5·h·Lip + cluster_tol`.
pub fn poincare_lelong_check(
    space: &WeightedSpace,
    section: &RandomSection,
    grid: &GridSpec,
    kappa: f64,
    dict: &TestDictionary,
    cluster_tol: f64,
) -> Result<Vec<LelongRow>> {
    let u = log_modulus_potential(space, section, grid)?;
    let current = laplacian_density(&u, kappa)?;
    let zeros = empirical_zero_measure(space, section, Some(grid))?;
    let h = grid.spacing();
    Ok(dict
        .functions
        .iter()
        .map(|f| LelongRow {
            name: f.name.clone(),
            grid_pairing: current.pair(|z| f.eval(z)),
            zero_pairing: zeros.pair(|z| f.eval(z)),
            tolerance: 5.0 * h * f.lipschitz + cluster_tol,
        })
        .collect())
}

/// Dictionary comparison of one N in the zero experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroConvergenceRow {
    pub model: String,
    pub degree: usize,
    pub n_samples: usize,
    pub ensemble: Ensemble,
    pub master_seed: u64,
    pub mean_defect: f64,
    pub max_defect: f64,
    pub per_function: Vec<f64>,
    pub mean_degree_drop: f64,
}

/// Stream index of sample `k` at degree `n`.
pub fn sample_stream(degree: usize, k: u64) -> u64 {
    ((degree as u64) << 32) | k
}

/// Average the zero measures of `n_samples` Gaussian sections and compare
/// with `μ_eq` over the dictionary.
pub fn zero_convergence_experiment(
    model: &str,
    spaces: &[&WeightedSpace],
    n_samples: usize,
    master_seed: u64,
    dict: &TestDictionary,
    mu: &EquilibriumMeasure,
) -> Result<Vec<ZeroConvergenceRow>> {
    let target: Vec<f64> = dict.functions.iter().map(|f| mu.pair(|z| f.eval(z))).collect();
    spaces
        .iter()
        .map(|space| {
            let n = space.degree();
            let per_sample: Vec<(Vec<f64>, usize)> = (0..n_samples as u64)
                .into_par_iter()
                .map(|k| {
                    let s = RandomSection::draw(space, Ensemble::Gaussian, master_seed, sample_stream(n, k));
                    let z = empirical_zero_measure(space, &s, None)?;
                    Ok((z.pair_dictionary(dict), z.degree_drop))
                })
                .collect::<Result<_>>()?;
            let mut mean = vec![0.0; dict.len()];
            let mut drops = 0.0;
            for (p, d) in &per_sample {
                mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
                drops += *d as f64;
            }
            let inv = 1.0 / n_samples as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
            let per_function = defects(&mean, &target);
            Ok(ZeroConvergenceRow {
                model: model.to_string(),
                degree: n,
                n_samples,
                ensemble: Ensemble::Gaussian,
                master_seed,
                mean_defect: mean_of(&per_function),
                max_defect: max_of(&per_function),
                per_function,
                mean_degree_drop: drops * inv,
            })
        })
        .collect()
}

/// Radius of the most populated bin of `|ζ|` with the given bin width.
pub fn radial_mode(atoms: &[Complex64], bin_width: f64) -> f64 {
    let mut counts = std::collections::BTreeMap::new();
    for z in atoms {
        *counts.entry((z.norm() / bin_width).floor() as i64).or_insert(0usize) += 1;
    }
    let (bin, _) = counts.iter().max_by_key(|(b, c)| (**c, -**b)).expect("at least one atom");
    (*bin as f64 + 0.5) * bin_width
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::task_rng;
    use crate::model::{build_measure, build_weight, MeasureSpec, WeightSpec};
    use rand::Rng;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn quadratic() {
        let r = roots(&[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let r = sorted(r.roots);
        assert!((r[0] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((r[1] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn pure_power_has_root_at_origin() {
        let mut a = vec![c(0.0, 0.0); 21];
        a[20] = c(1.0, 0.0);
        let r = roots(&a).unwrap();
        assert_eq!(r.roots.len(), 20);
        assert!(r.roots.iter().all(|z| z.norm() < 1e-4));
    }

    #[test]
    fn zero_polynomial_is_an_error() {
        assert!(matches!(roots(&[c(0.0, 0.0); 4]), Err(Error::Roots(_))));
    }

    #[test]
    fn leading_underflow_is_a_degree_drop() {
        let r = roots(&[c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(1e-20, 0.0)]).unwrap();
        assert_eq!(r.degree_drop, 1);
        assert_eq!(r.roots.len(), 2);
    }

    #[test]
    fn random_polynomials_reexpand() {
        let mut rng = task_rng(2, 0);
        for _ in 0..20 {
            let a: Vec<Complex64> = (0..13).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let r = roots(&a).unwrap();
            assert_eq!(r.roots.len(), 12);
            let mut p = vec![a[12]];
            for z in &r.roots {
                let mut q = vec![c(0.0, 0.0); p.len() + 1];
                for (k, pk) in p.iter().enumerate() {
                    q[k + 1] += pk;
                    q[k] -= pk * z;
                }
                p = q;
            }
            let scale = a.iter().map(|x| x.norm()).fold(0.0, f64::max);
            for (x, y) in p.iter().zip(&a) {
                assert!((x - y).norm() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn widely_scaled_coefficients() {
        // roots 1e-3, 1, 1e3
        let z = [c(1e-3, 0.0), c(1.0, 0.0), c(1e3, 0.0)];
        let a = [-(z[0] * z[1] * z[2]), z[0] * z[1] + z[0] * z[2] + z[1] * z[2], -(z[0] + z[1] + z[2]), c(1.0, 0.0)];
        let r = sorted(roots(&a).unwrap().roots);
        for (x, y) in r.iter().zip(&z) {
            assert!((x - y).norm() <= 1e-9 * y.norm(), "{x} vs {y}");
        }
    }

    fn gaussian_space(n: usize) -> WeightedSpace {
        let w = Arc::new(build_weight(&WeightSpec::abs_squared(1.0)).unwrap());
        let m = build_measure(&MeasureSpec::disk(3.0, n + 16)).unwrap();
        WeightedSpace::build(n, &w, &m).unwrap()
    }

    #[test]
    fn empirical_measure_mass() {
        let space = gaussian_space(20);
        let s = RandomSection::draw(&space, Ensemble::Gaussian, 1, 0);
        let grid = GridSpec::square(2.5, 101);
        let z = empirical_zero_measure(&space, &s, Some(&grid)).unwrap();
        assert!((z.total_mass() + z.degree_drop as f64 / 20.0 - 1.0).abs() < 1e-12);
        let dict = TestDictionary::default();
        assert!((z.pair_dictionary(&dict)[0] - z.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn rotation_equivariance() {
        let space = gaussian_space(15);
        let s = RandomSection::draw(&space, Ensemble::Gaussian, 4, 0);
        let theta = 0.7;
        let rotated = RandomSection::fixed(
            15,
            s.coeffs.iter().enumerate().map(|(j, c)| c * Complex64::from_polar(1.0, -(j as f64) * theta)).collect(),
        );
        let a = empirical_zero_measure(&space, &s, None).unwrap();
        let b = empirical_zero_measure(&space, &rotated, None).unwrap();
        for z in &a.atoms {
            let target = z * Complex64::from_polar(1.0, theta);
            let d = b.atoms.iter().map(|w| (w - target).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-8 * (1.0 + z.norm()), "missing rotated root {target}");
        }
    }

    #[test]
    fn flat_circle_expected_current_has_unit_mass() {
        let w = Arc::new(build_weight(&WeightSpec::zero()).unwrap());
        let m = build_measure(&MeasureSpec::circle(1.0, 128)).unwrap();
        let space = WeightedSpace::build(32, &w, &m).unwrap();
        let grid = GridSpec::square(2.5, 201);
        let cur = expected_zero_current(&space, &grid, 1.0 / (4.0 * std::f64::consts::PI)).unwrap();
        assert!((cur.total_mass() - 1.0).abs() < 2e-2, "mass {}", cur.total_mass());
        let r = cur.pair(|z| z.norm());
        assert!((r - 1.0).abs() < 0.05, "mean radius {r}");
    }
}
