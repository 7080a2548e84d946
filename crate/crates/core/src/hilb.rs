//! The weighted inner product `Hilb_N(φ, ν)` on degree-`N` polynomials,
//! its orthonormal basis and the Bergman kernel.
//!
//! The Gram matrix is built in the monomial basis. Since monomial norms span
//! hundreds of orders of magnitude for Gaussian-type weights, every
//! computation goes through the Jacobi-scaled Gram `D^{-1/2} G D^{-1/2}`
//! and every pointwise evaluation carries an explicit log-scale.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridKind, GridSpec, PotentialGrid};
use crate::model::{fmt_f64, SupportMeasure, Weight};

const SINGULAR_FACTOR: f64 = 1e3;

/// Monomial Gram matrix `G_{jk} = Σ_i w_i z_i^j conj(z_i)^k e^{-Nφ(z_i)}`.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    degree: usize,
    matrix: DMatrix<Complex64>,
    condition: f64,
    weight: Arc<Weight>,
    measure_label: String,
}

impl GramMatrix {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// 2-norm condition number of the Jacobi-scaled Gram.
    pub fn condition(&self) -> f64 {
        self.condition
    }
}

/// Log-magnitude and phase of `z`, with `z = 0` mapped to `-∞`.
#[inline]
fn polar_log(z: Complex64) -> (f64, f64) {
    let r = z.norm();
    if r == 0.0 {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (r.ln(), z.arg())
    }
}

/// `exp(k·ln|z| + shift) e^{ikθ}`, treating `0^0 = 1`.
#[inline]
fn scaled_power(k: usize, log_r: f64, theta: f64, shift: f64) -> Complex64 {
    let mag = if k == 0 { shift.exp() } else { (k as f64 * log_r + shift).exp() };
    Complex64::from_polar(mag, k as f64 * theta)
}

/// Assemble the Gram matrix of degree `degree`.
pub fn gram(degree: usize, weight: &Arc<Weight>, measure: &SupportMeasure) -> Result<GramMatrix> {
    let d = degree + 1;
    let n = measure.len();
    let nf = degree as f64;
    // Column j holds sqrt(w_i) z_i^j e^{-Nφ(z_i)/2}.
    let polar: Vec<(f64, f64, f64)> = measure
        .nodes()
        .iter()
        .zip(measure.weights())
        .map(|(z, w)| {
            let (lr, th) = polar_log(*z);
            (lr, th, 0.5 * w.ln() - 0.5 * nf * weight.eval(*z))
        })
        .collect();
    let columns: Vec<Vec<Complex64>> = (0..d)
        .into_par_iter()
        .map(|j| polar.iter().map(|(lr, th, shift)| scaled_power(j, *lr, *th, *shift)).collect())
        .collect();
    let table = DMatrix::<Complex64>::from_fn(n, d, |i, j| columns[j][i]);
    let rows: Vec<Vec<Complex64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let cj = table.column(j);
            (0..d)
                .map(|k| {
                    let ck = table.column(k);
                    cj.iter().zip(ck.iter()).map(|(a, b)| a * b.conj()).sum()
                })
                .collect()
        })
        .collect();
    let mut matrix = DMatrix::<Complex64>::from_fn(d, d, |j, k| rows[j][k]);
    // enforce exact Hermitian symmetry of the computed sums
    for j in 0..d {
        matrix[(j, j)] = Complex64::new(matrix[(j, j)].re, 0.0);
        for k in (j + 1)..d {
            let avg = 0.5 * (matrix[(j, k)] + matrix[(k, j)].conj());
            matrix[(j, k)] = avg;
            matrix[(k, j)] = avg.conj();
        }
    }
    let condition = scaled_condition(&matrix);
    if !condition.is_finite() || 1.0 / condition <= SINGULAR_FACTOR * f64::EPSILON {
        return Err(Error::Conditioning { degree, condition });
    }
    Ok(GramMatrix {
        degree,
        matrix,
        condition,
        weight: Arc::clone(weight),
        measure_label: measure.label(),
    })
}

fn jacobi_scaled(g: &DMatrix<Complex64>) -> Option<(DMatrix<Complex64>, Vec<f64>)> {
    let diag: Vec<f64> = (0..g.nrows()).map(|j| g[(j, j)].re).collect();
    if diag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let inv_sqrt: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    let s = DMatrix::from_fn(g.nrows(), g.ncols(), |j, k| g[(j, k)] * (inv_sqrt[j] * inv_sqrt[k]));
    Some((s, diag))
}

fn scaled_condition(g: &DMatrix<Complex64>) -> f64 {
    let Some((s, _)) = jacobi_scaled(g) else {
        return f64::INFINITY;
    };
    if s.nrows() == 1 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(s).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormalized weighted space with Bergman evaluators.
///
/// The orthonormal basis is `f_j(z) = Σ_k C_{kj} z^k` with
/// `C = D^{-1/2} U`, where `U = L_s^{-†}` and `L_s` is the Cholesky factor
/// of the Jacobi-scaled Gram. `C` is upper triangular.
#[derive(Clone, Debug)]
pub struct WeightedSpace {
    gram: GramMatrix,
    /// `-½ ln G_kk`
    log_scale: Vec<f64>,
    unit: DMatrix<Complex64>,
}

/// Cholesky-based orthonormalization, `C = L^{-†}`.
pub fn orthonormalize(gram: GramMatrix) -> Result<WeightedSpace> {
    let degree = gram.degree;
    let breakdown = || Error::Conditioning { degree, condition: gram.condition };
    let (scaled, diag) = jacobi_scaled(&gram.matrix).ok_or_else(breakdown)?;
    let chol = nalgebra::Cholesky::new(scaled).ok_or_else(breakdown)?;
    let l = chol.l();
    let d = l.nrows();
    let lh = l.adjoint();
    let unit = lh.solve_upper_triangular(&DMatrix::identity(d, d)).ok_or_else(breakdown)?;
    let log_scale = diag.iter().map(|g| -0.5 * g.ln()).collect();
    let space = WeightedSpace { gram, log_scale, unit };
    let err = space.orthonormality_error();
    if !(err <= 1e-8) {
        return Err(Error::Conditioning { degree, condition: space.gram.condition });
    }
    Ok(space)
}

impl WeightedSpace {
    /// Gram assembly followed by orthonormalization.
    pub fn build(degree: usize, weight: &Arc<Weight>, measure: &SupportMeasure) -> Result<Self> {
        orthonormalize(gram(degree, weight, measure)?)
    }

    pub fn degree(&self) -> usize {
        self.gram.degree
    }

    /// `d_N = N + 1`.
    pub fn dim(&self) -> usize {
        self.gram.degree + 1
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn condition(&self) -> f64 {
        self.gram.condition
    }

    pub fn weight(&self) -> &Weight {
        &self.gram.weight
    }

    pub fn measure_label(&self) -> &str {
        &self.gram.measure_label
    }

    /// Upper-triangular `C` with orthonormal columns `(z^k)·C`.
    pub fn onb_coeffs(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |k, j| self.unit[(k, j)] * self.log_scale[k].exp())
    }

    /// `max |C† G C - I|`, computed in scaled form.
    pub fn orthonormality_error(&self) -> f64 {
        let (s, _) = jacobi_scaled(&self.gram.matrix).expect("validated at construction");
        let prod = self.unit.adjoint() * s * &self.unit;
        let d = self.dim();
        let mut err: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                let target = if j == k { 1.0 } else { 0.0 };
                err = err.max((prod[(j, k)] - target).norm());
            }
        }
        err
    }

    /// `(v, shift)` with `f_j(z) = e^{shift} v_j`.
    pub fn scaled_basis(&self, z: Complex64) -> (Vec<Complex64>, f64) {
        let d = self.dim();
        let (lr, th) = polar_log(z);
        let logs: Vec<f64> = (0..d)
            .map(|k| if k == 0 { self.log_scale[0] } else { k as f64 * lr + self.log_scale[k] })
            .collect();
        let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let m: Vec<Complex64> = (0..d)
            .map(|k| Complex64::from_polar((logs[k] - shift).exp(), k as f64 * th))
            .collect();
        let v = (0..d)
            .map(|j| (0..=j).map(|k| self.unit[(k, j)] * m[k]).sum())
            .collect();
        (v, shift)
    }

    /// ONB polynomials `f_j(z)` in the affine frame.
    pub fn onb_values(&self, z: Complex64) -> Vec<Complex64> {
        let (v, s) = self.scaled_basis(z);
        let e = s.exp();
        v.into_iter().map(|x| x * e).collect()
    }

    /// `S_j(z) e^{-Nφ(z)/2}`: values whose squared moduli are pointwise norms.
    pub fn unitary_values(&self, z: Complex64) -> Vec<Complex64> {
        let (v, s) = self.scaled_basis(z);
        let e = (s - 0.5 * self.degree() as f64 * self.weight().eval(z)).exp();
        v.into_iter().map(|x| x * e).collect()
    }

    /// `ln B_N(z, z)` with `B_N(z,z) = Σ_j |f_j(z)|²` in the frame.
    pub fn log_bergman_diag(&self, z: Complex64) -> f64 {
        let (v, s) = self.scaled_basis(z);
        let sum: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        if sum > 0.0 {
            2.0 * s + sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `ln Π_N(z)`.
    pub fn log_density(&self, z: Complex64) -> f64 {
        self.log_bergman_diag(z) - self.degree() as f64 * self.weight().eval(z)
    }

    /// Density of states `Π_N(z) = B_N(z,z) e^{-Nφ(z)}`.
    pub fn bergman_density(&self, z: Complex64) -> f64 {
        self.log_density(z).exp()
    }

    /// Frame Bergman kernel `B_N(z, w) = Σ_j f_j(z) conj(f_j(w))`.
    pub fn bergman_kernel(&self, z: Complex64, w: Complex64) -> Complex64 {
        let (vz, sz) = self.scaled_basis(z);
        let (vw, sw) = self.scaled_basis(w);
        let dot: Complex64 = vz.iter().zip(&vw).map(|(a, b)| a * b.conj()).sum();
        dot * (sz + sw).exp()
    }

    /// Normalized kernel `|Π_N(z,w)| / (Π_N(z) Π_N(w))^{1/2}`, a number in `[0, 1]`.
    pub fn normalized_kernel(&self, z: Complex64, w: Complex64) -> f64 {
        let (vz, _) = self.scaled_basis(z);
        let (vw, _) = self.scaled_basis(w);
        let dot: Complex64 = vz.iter().zip(&vw).map(|(a, b)| a * b.conj()).sum();
        let nz: f64 = vz.iter().map(|x| x.norm_sqr()).sum();
        let nw: f64 = vw.iter().map(|x| x.norm_sqr()).sum();
        dot.norm() / (nz * nw).sqrt()
    }

    /// Polynomial coefficients `a_k` of the section `Σ_j c_j f_j`.
    pub fn polynomial_coeffs(&self, onb_coeffs: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim();
        assert_eq!(onb_coeffs.len(), d, "coefficient vector has wrong length");
        (0..d)
            .map(|k| {
                let s: Complex64 = (k..d).map(|j| self.unit[(k, j)] * onb_coeffs[j]).sum();
                s * self.log_scale[k].exp()
            })
            .collect()
    }

    /// Node table `A_{ij} = sqrt(w_i) S_j(z_i) e^{-Nφ(z_i)/2}`, so that
    /// `||Σ c_j S_j||² = |A c|²` under the quadrature rule.
    pub fn node_table(&self, measure: &SupportMeasure) -> DMatrix<Complex64> {
        let n = measure.len();
        let d = self.dim();
        let rows: Vec<Vec<Complex64>> = measure
            .nodes()
            .par_iter()
            .zip(measure.weights().par_iter())
            .map(|(z, w)| {
                let sw = w.sqrt();
                self.unitary_values(*z).into_iter().map(|x| x * sw).collect()
            })
            .collect();
        DMatrix::from_fn(n, d, |i, j| rows[i][j])
    }

    /// Write `G` (or `C` when `onb` is set) as CSV with interleaved real and
    /// imaginary parts.
    pub fn write_matrix_csv<P: AsRef<Path>>(&self, path: P, onb: bool) -> Result<()> {
        let m = if onb { self.onb_coeffs() } else { self.gram.matrix.clone() };
        write_complex_matrix_csv(&m, path)
    }
}

pub fn write_complex_matrix_csv<P: AsRef<Path>>(m: &DMatrix<Complex64>, path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (0..m.ncols()).flat_map(|k| [format!("re{k}"), format!("im{k}")]).collect();
    w.write_record(&header)?;
    for j in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|k| [fmt_f64(m[(j, k)].re), fmt_f64(m[(j, k)].im)])
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `u(z) = (1/N) ln B_N(z, z)` on a grid, evaluated in log-scaled form.
///
/// Points where every basis polynomial vanishes carry `-∞`.
pub fn log_bergman_potential(space: &WeightedSpace, grid: &GridSpec) -> Result<PotentialGrid> {
    grid.validate()?;
    if space.degree() == 0 {
        return Err(Error::Config("log-Bergman potential needs degree >= 1".into()));
    }
    let inv_n = 1.0 / space.degree() as f64;
    let values: Vec<f64> = (0..grid.ny)
        .into_par_iter()
        .flat_map_iter(|iy| {
            (0..grid.nx).map(move |ix| inv_n * space.log_bergman_diag(grid.point(ix, iy)))
        })
        .collect();
    Ok(PotentialGrid { spec: *grid, values, kind: GridKind::LogBergman })
}
