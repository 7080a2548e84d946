//! Gaussian and spherical random sections, Haar-random unitary frames, and
//! the expected-mass identity.
//!
//! Every random quantity is a pure function of `(master_seed, stream)`:
//! the generator is ChaCha8 keyed by the master seed, with the stream
//! number selecting an independent keystream.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hilb::WeightedSpace;
use crate::model::fmt_f64;

pub const GENERATOR: &str = "ChaCha8Rng";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SeedProvenance {
    pub generator: &'static str,
    pub master_seed: u64,
    pub stream: u64,
}

/// Generator for task `stream` under `master_seed`.
pub fn task_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// i.i.d. standard complex Gaussian coefficients.
    Gaussian,
    /// Gaussian draw normalized to unit norm.
    Spherical,
}

impl Ensemble {
    pub fn name(&self) -> &'static str {
        match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Spherical => "spherical",
        }
    }
}

/// Standard complex Gaussian: real and imaginary parts independent with
/// variance 1/2 each.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Complex64> {
    (0..d).map(|_| complex_gaussian(rng)).collect()
}

/// Uniform point on the unit sphere of `ℂ^d`.
pub fn spherical_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Complex64> {
    loop {
        let mut c = gaussian_vector(d, rng);
        let norm = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            c.iter_mut().for_each(|x| *x /= norm);
            return c;
        }
    }
}

/// Coefficients of a random section in the orthonormal basis.
#[derive(Clone, Debug, Serialize)]
pub struct RandomSection {
    pub degree: usize,
    pub coeffs: Vec<Complex64>,
    pub ensemble: Ensemble,
    pub provenance: Option<SeedProvenance>,
}

impl RandomSection {
    /// Draw from the stream `(master_seed, stream)`.
    pub fn draw(space: &WeightedSpace, ensemble: Ensemble, master_seed: u64, stream: u64) -> Self {
        let mut rng = task_rng(master_seed, stream);
        let mut s = match ensemble {
            Ensemble::Gaussian => sample_gaussian(space, &mut rng),
            Ensemble::Spherical => sample_spherical(space, &mut rng),
        };
        s.provenance = Some(SeedProvenance { generator: GENERATOR, master_seed, stream });
        s
    }

    /// A fixed coefficient vector, e.g. a single basis element.
    pub fn fixed(degree: usize, coeffs: Vec<Complex64>) -> Self {
        Self { degree, coeffs, ensemble: Ensemble::Spherical, provenance: None }
    }

    /// The basis element `S_j`.
    pub fn basis_element(degree: usize, j: usize) -> Self {
        let mut c = vec![Complex64::new(0.0, 0.0); degree + 1];
        c[j] = Complex64::new(1.0, 0.0);
        Self::fixed(degree, c)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `|s(z)|²_{h^N}`.
    pub fn pointwise_norm_sqr(&self, space: &WeightedSpace, z: Complex64) -> f64 {
        let u = space.unitary_values(z);
        u.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr()
    }
}

pub fn sample_gaussian<R: Rng + ?Sized>(space: &WeightedSpace, rng: &mut R) -> RandomSection {
    RandomSection {
        degree: space.degree(),
        coeffs: gaussian_vector(space.dim(), rng),
        ensemble: Ensemble::Gaussian,
        provenance: None,
    }
}

pub fn sample_spherical<R: Rng + ?Sized>(space: &WeightedSpace, rng: &mut R) -> RandomSection {
    RandomSection {
        degree: space.degree(),
        coeffs: spherical_vector(space.dim(), rng),
        ensemble: Ensemble::Spherical,
        provenance: None,
    }
}

/// A `d × d` unitary matrix.
#[derive(Clone, Debug)]
pub struct HaarFrame {
    pub u: DMatrix<Complex64>,
}

impl HaarFrame {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `max |U†U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.u.adjoint() * &self.u;
        let d = self.dim();
        let mut e: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                let t = if j == k { 1.0 } else { 0.0 };
                e = e.max((p[(j, k)] - t).norm());
            }
        }
        e
    }
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the
/// column phases fixed so that `R` has a positive diagonal.
pub fn sample_haar<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HaarFrame {
    assert!(d >= 1, "Haar frame needs d >= 1");
    let g = DMatrix::from_fn(d, d, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { Complex64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    HaarFrame { u: q }
}

/// One row of the expected-mass comparison.
#[derive(Clone, Debug, Serialize)]
pub struct MassRow {
    pub re: f64,
    pub im: f64,
    pub target: f64,
    pub mean: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MassReport {
    pub degree: usize,
    pub ensemble: Ensemble,
    pub n_samples: usize,
    pub master_seed: u64,
    pub rows: Vec<MassRow>,
}

impl MassReport {
    pub fn all_within(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged)
    }
}

/// Empirical `E|s(z)|²_{h^N}` against `Π_N(z)/d_N` (spherical) or `Π_N(z)`
/// (Gaussian); rows beyond 4 standard errors are flagged.
pub fn expected_mass_check(
    space: &WeightedSpace,
    points: &[Complex64],
    n_samples: usize,
    ensemble: Ensemble,
    master_seed: u64,
) -> MassReport {
    let values: Vec<Vec<Complex64>> = points.iter().map(|z| space.unitary_values(*z)).collect();
    let draws: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let s = RandomSection::draw(space, ensemble, master_seed, k);
            values
                .iter()
                .map(|u| u.iter().zip(&s.coeffs).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
                .collect()
        })
        .collect();
    let d = space.dim() as f64;
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let (mean, stderr) = mean_stderr(draws.iter().map(|row| row[i]));
            let pi = space.bergman_density(*z);
            let target = match ensemble {
                Ensemble::Spherical => pi / d,
                Ensemble::Gaussian => pi,
            };
            let z_score = if stderr > 0.0 { (mean - target) / stderr } else { 0.0 };
            MassRow { re: z.re, im: z.im, target, mean, stderr, z_score, flagged: z_score.abs() > 4.0 }
        })
        .collect();
    MassReport { degree: space.degree(), ensemble, n_samples, master_seed, rows }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr<I: IntoIterator<Item = f64>>(xs: I) -> (f64, f64) {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in xs {
        n += 1.0;
        let delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }
    if n < 2.0 {
        return (mean, 0.0);
    }
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

/// One row per draw: stream index, then interleaved real and imaginary parts.
pub fn write_samples_csv<P: AsRef<Path>>(samples: &[RandomSection], path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(first) = samples.first() {
        let mut header = vec!["stream".to_string()];
        for j in 0..first.coeffs.len() {
            header.push(format!("re{j}"));
            header.push(format!("im{j}"));
        }
        w.write_record(&header)?;
    }
    for s in samples {
        let mut row = vec![s.provenance.map(|p| p.stream.to_string()).unwrap_or_default()];
        for c in &s.coeffs {
            row.push(fmt_f64(c.re));
            row.push(fmt_f64(c.im));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_measure, build_weight, MeasureSpec, WeightSpec};
    use std::sync::Arc;

    fn flat_space(n: usize) -> WeightedSpace {
        let w = Arc::new(build_weight(&WeightSpec::zero()).unwrap());
        let m = build_measure(&MeasureSpec::circle(1.0, 64)).unwrap();
        WeightedSpace::build(n, &w, &m).unwrap()
    }

    #[test]
    fn gaussian_second_moments() {
        let d = 4;
        let mut rng = task_rng(7, 0);
        let n = 100_000;
        let mut herm = vec![vec![(0.0, 0.0, 0.0); d]; d];
        let mut sym = vec![vec![Complex64::new(0.0, 0.0); d]; d];
        for _ in 0..n {
            let c = gaussian_vector(d, &mut rng);
            for j in 0..d {
                for k in 0..d {
                    let p = c[j] * c[k].conj();
                    let e = &mut herm[j][k];
                    e.0 += p.re;
                    e.1 += p.im;
                    e.2 += p.norm_sqr();
                    sym[j][k] += c[j] * c[k];
                }
            }
        }
        let nf = n as f64;
        for j in 0..d {
            for k in 0..d {
                let (re, im, sq) = herm[j][k];
                let mean = Complex64::new(re / nf, im / nf);
                let se = (sq / nf / nf).sqrt();
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((mean - target).norm() <= 3.0 * se, "E c{j} c̄{k} = {mean}");
                assert!((sym[j][k] / nf).norm() <= 4.0 * se, "E c{j} c{k}");
            }
        }
    }

    #[test]
    fn spherical_draws() {
        let space = flat_space(20);
        let mut rng = task_rng(3, 1);
        let n = 100_000;
        let mut acc = vec![Vec::with_capacity(n); 21];
        for _ in 0..n {
            let s = sample_spherical(&space, &mut rng);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            for (j, c) in s.coeffs.iter().enumerate() {
                acc[j].push(c.norm_sqr());
            }
        }
        for a in acc {
            let (m, se) = mean_stderr(a);
            assert!((m - 1.0 / 21.0).abs() <= 3.0 * se, "{m} ± {se}");
        }
        let one = spherical_vector(1, &mut rng);
        assert!((one[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seeding_is_deterministic_and_streams_differ() {
        let space = flat_space(5);
        let a = RandomSection::draw(&space, Ensemble::Gaussian, 42, 3);
        let b = RandomSection::draw(&space, Ensemble::Gaussian, 42, 3);
        let c = RandomSection::draw(&space, Ensemble::Gaussian, 42, 4);
        assert_eq!(a.coeffs, b.coeffs);
        assert_ne!(a.coeffs, c.coeffs);
        assert_eq!(a.provenance.unwrap().stream, 3);
    }

    #[test]
    fn haar_frames() {
        let mut rng = task_rng(5, 0);
        let mut mean = Complex64::new(0.0, 0.0);
        let n = 10_000;
        for _ in 0..n {
            let h = sample_haar(1, &mut rng);
            assert!((h.u[(0, 0)].norm() - 1.0).abs() < 1e-12);
            mean += h.u[(0, 0)];
        }
        mean /= n as f64;
        // each component has variance 1/2
        assert!(mean.norm() <= 3.0 * (0.5 / n as f64).sqrt());

        let d = 4;
        let mut first = Vec::new();
        for _ in 0..n {
            let h = sample_haar(d, &mut rng);
            assert!(h.unitarity_error() < 1e-10);
            first.push(h.u[(0, 0)].norm_sqr());
        }
        let (m, se) = mean_stderr(first);
        assert!((m - 0.25).abs() <= 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn haar_left_invariance() {
        // |U₁₁| under U and V·U for a fixed unitary V: compare empirical CDFs.
        let d = 3;
        let mut rng = task_rng(9, 0);
        let v = sample_haar(d, &mut rng).u;
        let n = 10_000;
        let mut a: Vec<f64> = (0..n).map(|_| sample_haar(d, &mut rng).u[(0, 0)].norm()).collect();
        let mut b: Vec<f64> = (0..n).map(|_| (&v * sample_haar(d, &mut rng).u)[(0, 0)].norm()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ks = ks_statistic(&a, &b);
        // two-sample critical value at level 1e-3
        let crit = 1.95 * (2.0 / n as f64).sqrt();
        assert!(ks < crit, "KS {ks} ≥ {crit}");
    }

    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn expected_mass_flat_circle() {
        let space = flat_space(10);
        let pts = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, 2.0)];
        let rep = expected_mass_check(&space, &pts, 10_000, Ensemble::Spherical, 11);
        assert!(rep.all_within());
        assert!((rep.rows[0].target - 1.0).abs() < 1e-12);
        assert!((rep.rows[1].target - 1.0 / 11.0).abs() < 1e-12);
        let rep = expected_mass_check(&space, &pts, 10_000, Ensemble::Gaussian, 11);
        assert!(rep.all_within());
        assert!((rep.rows[0].target - 11.0).abs() < 1e-10);
    }

    #[test]
    fn expected_mass_is_worker_count_independent() {
        let space = flat_space(6);
        let pts = [Complex64::new(0.3, 0.1)];
        let a = expected_mass_check(&space, &pts, 500, Ensemble::Spherical, 1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| expected_mass_check(&space, &pts, 500, Ensemble::Spherical, 1));
        assert_eq!(a.rows[0].mean.to_bits(), b.rows[0].mean.to_bits());
    }
}
