//! Weighted equilibrium potential by a grid obstacle problem, the
//! equilibrium measure, the sup-norm extremal function, and the comparison
//! with the log-Bergman route.
//!
//! The envelope is computed in the affine frame: the largest discretely
//! subharmonic grid function `v` with `v ≤ φ` on `K` and growth
//! `v = 2 log|z| + O(1)` at infinity. The growth condition is imposed on
//! the outer edge of the box through the exterior harmonic expansion of `v`
//! read off a circle inside the box.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian_at, GridKind, GridSpec, PotentialGrid};
use crate::hilb::{log_bergman_potential, WeightedSpace};
use crate::model::{SupportKind, Weight};

/// Solver controls for [`envelope_oracle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeOptions {
    /// Stop when the largest update of a sweep falls below this.
    pub tol: f64,
    /// Sweep cap per cascade level.
    pub max_iter: usize,
    /// Fourier modes in the far-field closure.
    pub closure_modes: usize,
    /// Closure circle radius as a fraction of the inscribed radius of the box.
    pub closure_fraction: f64,
    /// Number of coarser levels solved first.
    pub cascade_levels: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 50_000, closure_modes: 16, closure_fraction: 0.9, cascade_levels: 3 }
    }
}

/// Output of the obstacle solver.
#[derive(Clone, Debug)]
pub struct Envelope {
    /// `φ_eq` on the grid.
    pub potential: PotentialGrid,
    /// `φ` on the grid.
    pub obstacle: PotentialGrid,
    /// Grid points treated as belonging to `K`.
    pub support: Vec<bool>,
    pub sweeps: usize,
    pub residual: f64,
    /// False when the coincidence set reached the closure circle and the
    /// outer edge fell back to the obstacle values.
    pub far_field_closure: bool,
    pub closure_radius: f64,
}

impl Envelope {
    pub fn spec(&self) -> &GridSpec {
        &self.potential.spec
    }

    /// Oscillation of `φ` over the grid points of `K`.
    pub fn obstacle_oscillation(&self) -> f64 {
        let (lo, hi) = self
            .obstacle
            .values
            .iter()
            .zip(&self.support)
            .filter(|(_, k)| **k)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
        hi - lo
    }

    /// Default coincidence tolerance `1e-6·max(1, osc φ)`.
    pub fn default_coincidence_tol(&self) -> f64 {
        1e-6 * self.obstacle_oscillation().max(1.0)
    }

    /// `{z ∈ K : |φ - φ_eq| < tol}`.
    pub fn coincidence_mask(&self, tol: f64) -> Vec<bool> {
        self.potential
            .values
            .iter()
            .zip(&self.obstacle.values)
            .zip(&self.support)
            .map(|((v, p), k)| *k && (p - v).abs() < tol)
            .collect()
    }

    /// Largest `|z|` in the coincidence set.
    pub fn coincidence_radius(&self, tol: f64) -> f64 {
        self.coincidence_mask(tol)
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| self.spec().point_at(i).norm())
            .fold(0.0, f64::max)
    }

    /// Largest violation of `v ≤ avg(neighbours)` over interior points.
    pub fn subharmonicity_defect(&self) -> f64 {
        let s = self.spec();
        let v = &self.potential.values;
        let mut worst: f64 = 0.0;
        for iy in 1..s.ny - 1 {
            for ix in 1..s.nx - 1 {
                worst = worst.max(-laplacian_at(v, s, ix, iy) * s.hx() * s.hx() / 4.0);
            }
        }
        worst
    }

    /// Largest violation of `v ≤ φ` on `K`.
    pub fn obstacle_violation(&self) -> f64 {
        self.potential
            .values
            .iter()
            .zip(&self.obstacle.values)
            .zip(&self.support)
            .filter(|(_, k)| **k)
            .map(|((v, p), _)| v - p)
            .fold(0.0, f64::max)
    }
}

/// Grid points treated as members of `K`.
///
/// Curves are thickened by half a cell diagonal so that every grid
/// crossing is caught; solid sets by half a cell.
pub fn support_mask(kind: &SupportKind, spec: &GridSpec) -> Vec<bool> {
    let tol = match kind {
        SupportKind::Circle { .. } => spec.spacing() * std::f64::consts::FRAC_1_SQRT_2,
        _ => 0.5 * spec.spacing(),
    };
    (0..spec.len()).map(|i| kind.contains(spec.point_at(i), tol)).collect()
}

/// Largest discretely subharmonic grid function below `φ` on `K` with
/// logarithmic growth at infinity.
pub fn envelope_oracle(
    weight: &Weight,
    support: &SupportKind,
    grid: &GridSpec,
    opts: &EnvelopeOptions,
) -> Result<Envelope> {
    grid.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::Config("envelope tolerance must be positive".into()));
    }
    let mut levels = vec![*grid];
    for _ in 0..opts.cascade_levels {
        let last = *levels.last().unwrap();
        if (last.nx - 1) % 2 != 0 || (last.ny - 1) % 2 != 0 || last.nx < 41 || last.ny < 41 {
            break;
        }
        levels.push(last.coarsened(2));
    }
    levels.reverse();
    let mut guess: Option<PotentialGrid> = None;
    let mut total = 0;
    let mut out = None;
    for spec in levels {
        let init = guess.as_ref().map(|g| g.resample(spec));
        let env = solve_level(weight, support, &spec, opts, init)?;
        total += env.sweeps;
        guess = Some(env.potential.clone());
        out = Some(env);
    }
    let mut env = out.expect("at least one level");
    env.sweeps = total;
    Ok(env)
}

struct Closure {
    rho: f64,
    center: Complex64,
    samples: usize,
    modes: usize,
    /// For each boundary index: (grid index, ln(r/ρ), ρ/r, θ).
    boundary: Vec<(usize, f64, f64, f64)>,
}

impl Closure {
    fn new(spec: &GridSpec, fraction: f64, modes: usize) -> Self {
        let center = spec.center();
        let rho = fraction * spec.inscribed_radius();
        let mut boundary = Vec::new();
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                if spec.is_boundary(ix, iy) {
                    let z = spec.point(ix, iy) - center;
                    let r = z.norm();
                    boundary.push((spec.index(ix, iy), (r / rho).ln(), rho / r, z.arg()));
                }
            }
        }
        Self { rho, center, samples: 4 * modes.max(8), modes, boundary }
    }

    /// Fourier data `(a_0, a_k, b_k)` of `v` on the closure circle.
    fn coefficients(&self, v: &PotentialGrid) -> (f64, Vec<f64>, Vec<f64>) {
        let m = self.samples;
        let vals: Vec<(f64, f64)> = (0..m)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / m as f64;
                (t, v.interpolate(self.center + Complex64::from_polar(self.rho, t)))
            })
            .collect();
        let a0 = vals.iter().map(|(_, x)| x).sum::<f64>() / m as f64;
        let mut a = vec![0.0; self.modes];
        let mut b = vec![0.0; self.modes];
        for k in 1..=self.modes {
            for (t, x) in &vals {
                a[k - 1] += x * (k as f64 * t).cos();
                b[k - 1] += x * (k as f64 * t).sin();
            }
            a[k - 1] *= 2.0 / m as f64;
            b[k - 1] *= 2.0 / m as f64;
        }
        (a0, a, b)
    }
}

fn solve_level(
    weight: &Weight,
    support: &SupportKind,
    spec: &GridSpec,
    opts: &EnvelopeOptions,
    init: Option<PotentialGrid>,
) -> Result<Envelope> {
    let (nx, ny) = (spec.nx, spec.ny);
    let obstacle = PotentialGrid::from_fn(*spec, GridKind::Weight, |z| weight.eval(z));
    let in_k = support_mask(support, spec);
    if !in_k.iter().any(|k| *k) {
        return Err(Error::Config(format!("support {} has no points on the grid", support.label())));
    }
    let cap: Vec<f64> = obstacle
        .values
        .iter()
        .zip(&in_k)
        .map(|(p, k)| if *k { *p } else { f64::INFINITY })
        .collect();
    let mut v = match init {
        Some(g) => g.values,
        None => {
            let top = cap.iter().cloned().filter(|c| c.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            let r_k = support.outer_radius();
            (0..spec.len())
                .map(|i| {
                    let r = (spec.point_at(i) - spec.center()).norm();
                    top + 2.0 * (r / r_k).ln().max(0.0)
                })
                .collect()
        }
    };
    for (x, c) in v.iter_mut().zip(&cap) {
        *x = x.min(*c);
    }

    let hx2 = spec.hx() * spec.hx();
    let hy2 = spec.hy() * spec.hy();
    let cx = hy2 / (2.0 * (hx2 + hy2));
    let cy = hx2 / (2.0 * (hx2 + hy2));
    let n_max = nx.max(ny) as f64;
    let omega = 2.0 / (1.0 + (PI / (n_max - 1.0)).sin());

    let mut closure = Closure::new(spec, opts.closure_fraction, opts.closure_modes);
    let mut far_field = true;
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    let coincidence_tol = 1e-6;

    loop {
        while sweeps < opts.max_iter {
            sweeps += 1;
            let mut delta: f64 = 0.0;
            // outer edge
            if far_field {
                let field = PotentialGrid { spec: *spec, values: v.clone(), kind: GridKind::Envelope };
                let (a0, a, b) = closure.coefficients(&field);
                for &(idx, log_ratio, inv, theta) in &closure.boundary {
                    let mut val = 2.0 * log_ratio + a0;
                    let mut p = 1.0;
                    for k in 1..=closure.modes {
                        p *= inv;
                        let kt = k as f64 * theta;
                        val += p * (a[k - 1] * kt.cos() + b[k - 1] * kt.sin());
                    }
                    let new = val.min(cap[idx]);
                    delta = delta.max((new - v[idx]).abs());
                    v[idx] = new;
                }
            }
            for color in 0..2 {
                for iy in 1..ny - 1 {
                    let start = 1 + (iy + 1 + color) % 2;
                    let row = iy * nx;
                    let mut ix = start;
                    while ix < nx - 1 {
                        let i = row + ix;
                        let avg = cx * (v[i - 1] + v[i + 1]) + cy * (v[i - nx] + v[i + nx]);
                        let new = (v[i] + omega * (avg - v[i])).min(cap[i]);
                        delta = delta.max((new - v[i]).abs());
                        v[i] = new;
                        ix += 2;
                    }
                }
            }
            residual = delta;
            if !delta.is_finite() {
                return Err(Error::NonConvergence { iterations: sweeps, residual: delta });
            }
            if delta < opts.tol {
                break;
            }
        }
        if residual >= opts.tol {
            return Err(Error::NonConvergence { iterations: sweeps, residual });
        }
        if !far_field {
            break;
        }
        // The expansion is valid only where v is harmonic; if the contact set
        // reaches the closure circle, pin the edge to the obstacle instead.
        let touches = (0..closure.samples).any(|j| {
            let z = closure.center + Complex64::from_polar(closure.rho, 2.0 * PI * j as f64 / closure.samples as f64);
            let k = nearest(spec, z);
            in_k[k] && (obstacle.values[k] - v[k]).abs() < coincidence_tol * (1.0 + obstacle.values[k].abs())
        });
        if !touches {
            break;
        }
        far_field = false;
        closure.boundary.retain(|_| false);
        for iy in 0..ny {
            for ix in 0..nx {
                if spec.is_boundary(ix, iy) {
                    let i = spec.index(ix, iy);
                    if cap[i].is_finite() {
                        v[i] = cap[i];
                    }
                }
            }
        }
    }

    Ok(Envelope {
        potential: PotentialGrid { spec: *spec, values: v, kind: GridKind::Envelope },
        obstacle,
        support: in_k,
        sweeps,
        residual,
        far_field_closure: far_field,
        closure_radius: closure.rho,
    })
}

fn nearest(spec: &GridSpec, z: Complex64) -> usize {
    let ix = ((z.re - spec.x_min) / spec.hx()).round().clamp(0.0, (spec.nx - 1) as f64) as usize;
    let iy = ((z.im - spec.y_min) / spec.hy()).round().clamp(0.0, (spec.ny - 1) as f64) as usize;
    spec.index(ix, iy)
}

/// `κ` fixed so that the flat-circle equilibrium measure has mass one on
/// `grid`. The continuum value is `1/(4π)`.
pub fn calibrate_kappa(grid: &GridSpec, opts: &EnvelopeOptions) -> Result<f64> {
    let flat = crate::model::build_weight(&crate::model::WeightSpec::zero())?;
    let env = envelope_oracle(&flat, &SupportKind::Circle { radius: 1.0 }, grid, opts)?;
    let mask = env.coincidence_mask(env.default_coincidence_tol());
    let raw = masked_laplacian_mass(&env.potential, &mask);
    if !(raw > 0.0) {
        return Err(Error::SolverQuality("flat-circle calibration produced no mass".into()));
    }
    Ok(1.0 / raw)
}

fn masked_laplacian_mass(v: &PotentialGrid, mask: &[bool]) -> f64 {
    let s = &v.spec;
    let mut m = 0.0;
    for iy in 1..s.ny - 1 {
        for ix in 1..s.nx - 1 {
            let i = s.index(ix, iy);
            if mask[i] {
                m += laplacian_at(&v.values, s, ix, iy) * s.cell_area();
            }
        }
    }
    m
}

/// Grid density of `μ_eq` with respect to area.
#[derive(Clone, Debug)]
pub struct EquilibriumMeasure {
    pub density: PotentialGrid,
    pub coincidence: Vec<bool>,
    /// Mass before renormalization.
    pub raw_mass: f64,
    pub kappa: f64,
    /// `κ ∫ |Δ_h φ_eq|` over interior points outside the mask.
    pub off_mask_mass: f64,
}

impl EquilibriumMeasure {
    /// `∫ f dμ_eq`.
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

    pub fn mask_grid(&self) -> PotentialGrid {
        PotentialGrid {
            spec: self.density.spec,
            values: self.coincidence.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect(),
            kind: GridKind::Mask,
        }
    }
}

/// `κ·Δ_h φ_eq` on the coincidence set, renormalized to mass one.
pub fn equilibrium_measure(env: &Envelope, kappa: f64, coincidence_tol: Option<f64>) -> Result<EquilibriumMeasure> {
    let tol = coincidence_tol.unwrap_or_else(|| env.default_coincidence_tol());
    let mask = env.coincidence_mask(tol);
    let s = *env.spec();
    let mut density = vec![0.0; s.len()];
    let mut off = 0.0;
    for iy in 1..s.ny - 1 {
        for ix in 1..s.nx - 1 {
            let i = s.index(ix, iy);
            let d = kappa * laplacian_at(&env.potential.values, &s, ix, iy);
            if mask[i] {
                density[i] = d;
            } else {
                off += d.abs() * s.cell_area();
            }
        }
    }
    let max = density.iter().cloned().fold(0.0, f64::max);
    let min = density.iter().cloned().fold(0.0, f64::min);
    if min < -1e-3 * max {
        return Err(Error::SolverQuality(format!(
            "equilibrium density has negative values down to {min:.3e} (max {max:.3e})"
        )));
    }
    let raw: f64 = density.iter().sum::<f64>() * s.cell_area();
    if !(raw > 0.0) {
        return Err(Error::SolverQuality("equilibrium measure has no mass".into()));
    }
    density.iter_mut().for_each(|d| *d = d.max(0.0) / raw);
    Ok(EquilibriumMeasure {
        density: PotentialGrid { spec: s, values: density, kind: GridKind::Density },
        coincidence: mask,
        raw_mass: raw,
        kappa,
        off_mask_mass: off,
    })
}

/// Result of the sup-norm extremal problem at one point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PhiExtremal {
    /// Attained by a feasible section, hence a lower bound for `Φ_N^K(z)`.
    pub value: f64,
    /// Dual bound: `Φ_N^K(z) ≤ upper`.
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `Φ_N^K(z) = sup{ |s(z)|² : max_{K-nodes} |s|² ≤ 1 }` via Lawson's
/// reweighted least squares on the dual problem
/// `1/Φ = min_{s(z)=1} max_i |s(z_i)|²`.
pub fn phi_extremal_sup(
    space: &WeightedSpace,
    k_nodes: &[Complex64],
    z: Complex64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<PhiExtremal> {
    if k_nodes.is_empty() {
        return Err(Error::Config("extremal problem needs at least one node".into()));
    }
    let d = space.dim();
    let n = k_nodes.len();
    let rows: Vec<Vec<Complex64>> = k_nodes.iter().map(|w| space.unitary_values(*w)).collect();
    let target = space.unitary_values(z);
    let mut lambda = vec![1.0 / n as f64; n];
    let mut best_primal = f64::INFINITY;
    let mut best_dual: f64 = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for (l, r) in lambda.iter().zip(&rows) {
            if *l == 0.0 {
                continue;
            }
            for j in 0..d {
                let a = r[j].conj() * *l;
                for k in j..d {
                    m[(j, k)] += a * r[k];
                }
            }
        }
        let trace: f64 = (0..d).map(|j| m[(j, j)].re).sum();
        for j in 0..d {
            m[(j, j)] += Complex64::new(1e-14 * trace / d as f64, 0.0);
            for k in 0..j {
                m[(j, k)] = m[(k, j)].conj();
            }
        }
        let chol = nalgebra::Cholesky::new(m)
            .ok_or_else(|| Error::SolverQuality("extremal problem weight matrix is singular".into()))?;
        let rhs = DMatrix::from_fn(d, 1, |j, _| target[j].conj());
        let x = chol.solve(&rhs);
        let denom: Complex64 = (0..d).map(|j| target[j] * x[(j, 0)]).sum();
        let dual = 1.0 / denom.re;
        let c: Vec<Complex64> = (0..d).map(|j| x[(j, 0)] / denom).collect();
        let resid: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&c).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
            .collect();
        let primal = resid.iter().cloned().fold(0.0, f64::max);
        best_primal = best_primal.min(primal);
        best_dual = best_dual.max(dual);
        if best_primal - best_dual <= rel_tol * best_primal {
            converged = true;
            break;
        }
        let mut total = 0.0;
        for (l, e) in lambda.iter_mut().zip(&resid) {
            *l *= e.sqrt();
            total += *l;
        }
        lambda.iter_mut().for_each(|l| *l /= total);
    }
    Ok(PhiExtremal { value: 1.0 / best_primal, upper: 1.0 / best_dual, iterations, converged })
}

/// One row of the route comparison.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RouteError {
    pub degree: usize,
    pub sup_error: f64,
}

/// `sup |(1/N) log B_N - φ_eq|` over grid points accepted by `region`.
pub fn compare_routes<F: Fn(Complex64) -> bool + Sync>(
    spaces: &[&WeightedSpace],
    envelope: &Envelope,
    region: F,
) -> Result<Vec<RouteError>> {
    spaces
        .iter()
        .map(|s| {
            let u = log_bergman_potential(s, envelope.spec())?;
            Ok(RouteError { degree: s.degree(), sup_error: u.sup_distance(&envelope.potential, &region) })
        })
        .collect()
}

/// `e_{k+1} ≤ (1 + jitter)·e_k` for every consecutive pair.
pub fn is_decreasing(seq: &[f64], jitter: f64) -> bool {
    seq.windows(2).all(|w| w[1] <= (1.0 + jitter) * w[0])
}
