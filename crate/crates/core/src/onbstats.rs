//! Toeplitz matrices of symbols, Szegő trace limits, and the diagonal
//! statistic of Haar-rotated orthonormal bases.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{mean_stderr, sample_haar, task_rng, HaarFrame};
use crate::error::{Error, Result};
use crate::hilb::WeightedSpace;
use crate::model::SupportMeasure;
use crate::qe::cesaro_averages;

/// Matrix of the compressed multiplication operator in the orthonormal basis.
///
/// Entries are `T_{jk} = ⟨g S_k, S_j⟩ = Σ_i w_i g(z_i) conj(S_j(z_i)) S_k(z_i) e^{-Nφ(z_i)}`.
#[derive(Clone, Debug)]
pub struct ToeplitzMatrix {
    pub degree: usize,
    pub label: String,
    pub matrix: DMatrix<Complex64>,
}

impl ToeplitzMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|j| self.matrix[(j, j)].re).sum()
    }

    /// `Tr T²` (equal to the squared Frobenius norm for Hermitian `T`).
    pub fn trace_sq(&self) -> f64 {
        self.matrix.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn hermitian_error(&self) -> f64 {
        let d = self.dim();
        let mut e: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                e = e.max((self.matrix[(j, k)] - self.matrix[(k, j)].conj()).norm());
            }
        }
        e
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `c† T c`.
    pub fn quadratic_form(&self, c: &[Complex64]) -> f64 {
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..d {
            let row: Complex64 = (0..d).map(|k| self.matrix[(j, k)] * c[k]).sum();
            acc += c[j].conj() * row;
        }
        acc.re
    }
}

/// `T = A† diag(g) A` with `A` the node table of the space.
pub fn toeplitz<G: Fn(Complex64) -> f64 + Sync>(
    space: &WeightedSpace,
    measure: &SupportMeasure,
    label: &str,
    g: G,
) -> ToeplitzMatrix {
    let a = space.node_table(measure);
    let gv: Vec<f64> = measure.nodes().par_iter().map(|z| g(*z)).collect();
    let mut ga = a.clone();
    for (i, gi) in gv.iter().enumerate() {
        ga.row_mut(i).scale_mut(*gi);
    }
    let mut m = a.adjoint() * ga;
    let d = m.nrows();
    for j in 0..d {
        m[(j, j)] = Complex64::new(m[(j, j)].re, 0.0);
        for k in (j + 1)..d {
            let avg = 0.5 * (m[(j, k)] + m[(k, j)].conj());
            m[(j, k)] = avg;
            m[(k, j)] = avg.conj();
        }
    }
    ToeplitzMatrix { degree: space.degree(), label: label.to_string(), matrix: m }
}

/// Normalized traces against their limits.
#[derive(Clone, Debug, Serialize)]
pub struct SzegoRow {
    pub degree: usize,
    pub symbol: String,
    pub trace: f64,
    pub trace_sq: f64,
    pub tau: f64,
    pub tau_sq: f64,
    /// `|Tr T/d - τ(g)| / |τ(g)|`.
    pub error: f64,
    /// `|Tr T²/d - τ(g²)| / |τ(g²)|`.
    pub error_sq: f64,
}

/// `((1/d)Tr T, (1/d)Tr T²)` against `(τ(g), τ(g²))` with relative errors.
pub fn szego_traces(t: &ToeplitzMatrix, tau: f64, tau_sq: f64) -> SzegoRow {
    let d = t.dim() as f64;
    let trace = t.trace() / d;
    let trace_sq = t.trace_sq() / d;
    let rel = |x: f64, y: f64| if y != 0.0 { (x - y).abs() / y.abs() } else { (x - y).abs() };
    SzegoRow {
        degree: t.degree,
        symbol: t.label.clone(),
        trace,
        trace_sq,
        tau,
        tau_sq,
        error: rel(trace, tau),
        error_sq: rel(trace_sq, tau_sq),
    }
}

/// Diagonal of `U† T U`.
fn rotated_diagonal(u: &HaarFrame, t: &ToeplitzMatrix) -> Vec<f64> {
    let tu = &t.matrix * &u.u;
    (0..u.dim())
        .map(|j| u.u.column(j).iter().zip(tu.column(j).iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>().re)
        .collect()
}

/// `Σ_j |(U†TU)_{jj} - Tr T / d|²`.
pub fn y_statistic(u: &HaarFrame, t: &ToeplitzMatrix) -> Result<f64> {
    if u.dim() != t.dim() {
        return Err(Error::DimensionMismatch { expected: t.dim(), got: u.dim() });
    }
    let mean = t.trace() / t.dim() as f64;
    Ok(rotated_diagonal(u, t).iter().map(|x| (x - mean).powi(2)).sum())
}

/// `S₂/(d+1) - S₁²/(d(d+1))` with `S_k = Σ λ^k`.
pub fn orbit_closed_form(lambda: &[f64]) -> f64 {
    let d = lambda.len() as f64;
    let s1: f64 = lambda.iter().sum();
    let s2: f64 = lambda.iter().map(|x| x * x).sum();
    s2 / (d + 1.0) - s1 * s1 / (d * (d + 1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitReport {
    pub lambda: Vec<f64>,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub master_seed: u64,
}

impl OrbitReport {
    pub fn relative_error(&self) -> f64 {
        if self.closed_form != 0.0 {
            (self.mc_mean - self.closed_form).abs() / self.closed_form.abs()
        } else {
            (self.mc_mean - self.closed_form).abs()
        }
    }

    pub fn z_score(&self) -> f64 {
        let diff = self.mc_mean - self.closed_form;
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Monte Carlo Haar average of `||J(U†DU) - J̄(D)||²` for `D = diag(λ)`.
pub fn orbit_integral_check(lambda: &[f64], n_samples: usize, master_seed: u64) -> Result<OrbitReport> {
    if lambda.is_empty() {
        return Err(Error::Config("spectrum must have at least one entry".into()));
    }
    let d = lambda.len();
    let t = ToeplitzMatrix {
        degree: d - 1,
        label: "diag".into(),
        matrix: DMatrix::from_fn(d, d, |j, k| if j == k { Complex64::new(lambda[j], 0.0) } else { Complex64::new(0.0, 0.0) }),
    };
    let draws: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = task_rng(master_seed, k);
            y_statistic(&sample_haar(d, &mut rng), &t).expect("dimensions agree")
        })
        .collect();
    let (mc_mean, stderr) = mean_stderr(draws);
    Ok(OrbitReport {
        lambda: lambda.to_vec(),
        closed_form: orbit_closed_form(lambda),
        mc_mean,
        stderr,
        n_samples,
        master_seed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicRow {
    pub model: String,
    pub degree: usize,
    pub symbol: String,
    pub n_draws: usize,
    pub master_seed: u64,
    pub mean_y: f64,
    pub stderr_y: f64,
    /// `τ(g²) - τ(g)²`.
    pub target: f64,
    pub mean_y_over_d: f64,
    /// Mean over draws and `j` of `|(U†TU)_{jj} - τ(g)|²`.
    pub mean_a: f64,
    /// Fraction of `(draw, j)` with that quantity below `eps`.
    pub fraction_a_below: f64,
    pub eps: f64,
    /// Cesàro average of `mean_y_over_d` up to this row.
    pub cesaro: f64,
}

/// Haar-rotated bases at each degree: Y statistic, its expectation, the
/// per-element quantities, and the Cesàro average over the list.
#[allow(clippy::too_many_arguments)]
pub fn ergodic_property_experiment<G: Fn(Complex64) -> f64 + Sync>(
    model: &str,
    spaces: &[(&WeightedSpace, &SupportMeasure)],
    symbol: &str,
    g: G,
    tau: f64,
    tau_sq: f64,
    n_draws: usize,
    master_seed: u64,
    eps: f64,
) -> Result<Vec<ErgodicRow>> {
    let mut rows: Vec<ErgodicRow> = spaces
        .iter()
        .map(|(space, measure)| {
            let t = toeplitz(space, measure, symbol, &g);
            let d = t.dim();
            let stream_base = (space.degree() as u64) << 32;
            let per: Vec<(f64, f64, usize)> = (0..n_draws as u64)
                .into_par_iter()
                .map(|k| {
                    let mut rng = task_rng(master_seed, stream_base | k);
                    let u = sample_haar(d, &mut rng);
                    let diag = rotated_diagonal(&u, &t);
                    let mean = t.trace() / d as f64;
                    let y = diag.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
                    let a: Vec<f64> = diag.iter().map(|x| (x - tau).powi(2)).collect();
                    (y, a.iter().sum::<f64>() / d as f64, a.iter().filter(|v| **v < eps).count())
                })
                .collect();
            let (mean_y, stderr_y) = mean_stderr(per.iter().map(|p| p.0));
            Ok(ErgodicRow {
                model: model.to_string(),
                degree: space.degree(),
                symbol: symbol.to_string(),
                n_draws,
                master_seed,
                mean_y,
                stderr_y,
                target: tau_sq - tau * tau,
                mean_y_over_d: mean_y / d as f64,
                mean_a: per.iter().map(|p| p.1).sum::<f64>() / n_draws as f64,
                fraction_a_below: per.iter().map(|p| p.2).sum::<usize>() as f64 / (n_draws * d) as f64,
                eps,
                cesaro: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let ces = cesaro_averages(&rows.iter().map(|r| r.mean_y_over_d).collect::<Vec<_>>());
    rows.iter_mut().zip(ces).for_each(|(r, c)| r.cesaro = c);
    Ok(rows)
}
