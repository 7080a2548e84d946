//! A finite family of bounded test functions used as a proxy for weak-*
//! convergence of measures on a compact part of the plane.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictionarySpec {
    /// Bump centres are the tensor grid `centers × centers`.
    pub bump_centers: Vec<f64>,
    pub bump_widths: Vec<f64>,
    /// `re(z^k)`, `im(z^k)` for `1 ≤ k ≤ max_harmonic`.
    pub max_harmonic: usize,
    /// Scale `s` of the cutoff `exp(-|z|²/(2s²))`.
    pub cutoff_scale: f64,
    pub hat_radii: Vec<f64>,
    pub hat_width: f64,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self {
            bump_centers: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            bump_widths: vec![0.25, 0.5],
            max_harmonic: 4,
            cutoff_scale: 1.0,
            hat_radii: vec![0.5, 1.0, 1.5],
            hat_width: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestShape {
    Constant,
    Bump { center: [f64; 2], width: f64 },
    /// `re(z^k)` or `im(z^k)` times the Gaussian cutoff, divided by its sup.
    Harmonic { order: u32, imaginary: bool, scale: f64, norm: f64 },
    RadialHat { radius: f64, width: f64 },
}

/// A named test function with sup norm at most one.
#[derive(Clone, Debug, Serialize)]
pub struct TestFunction {
    pub name: String,
    pub shape: TestShape,
    pub lipschitz: f64,
}

impl TestFunction {
    pub fn constant() -> Self {
        Self { name: "one".into(), shape: TestShape::Constant, lipschitz: 0.0 }
    }

    pub fn bump(center: Complex64, width: f64) -> Self {
        Self {
            name: format!("bump({:+.2},{:+.2};{})", center.re, center.im, width),
            shape: TestShape::Bump { center: [center.re, center.im], width },
            lipschitz: (-0.5f64).exp() / width,
        }
    }

    pub fn harmonic(order: u32, imaginary: bool, scale: f64) -> Self {
        let k = order as f64;
        // sup of r^k e^{-r²/(2s²)} is attained at r² = k s²
        let norm = (k * scale * scale).powf(0.5 * k) * (-0.5 * k).exp();
        let part = if imaginary { "im" } else { "re" };
        Self {
            name: format!("{part}(z^{order})*cutoff"),
            shape: TestShape::Harmonic { order, imaginary, scale, norm },
            lipschitz: harmonic_lipschitz(k, scale) / norm,
        }
    }

    pub fn radial_hat(radius: f64, width: f64) -> Self {
        Self {
            name: format!("hat({radius};{width})"),
            shape: TestShape::RadialHat { radius, width },
            lipschitz: 1.0 / width,
        }
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        match self.shape {
            TestShape::Constant => 1.0,
            TestShape::Bump { center, width } => {
                let d = z - Complex64::new(center[0], center[1]);
                (-d.norm_sqr() / (2.0 * width * width)).exp()
            }
            TestShape::Harmonic { order, imaginary, scale, norm } => {
                let p = z.powu(order);
                let part = if imaginary { p.im } else { p.re };
                part * (-z.norm_sqr() / (2.0 * scale * scale)).exp() / norm
            }
            TestShape::RadialHat { radius, width } => (1.0 - (z.norm() - radius).abs() / width).max(0.0),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, TestShape::Constant)
    }
}

/// Upper bound for the gradient of `r^k cos(kθ) e^{-r²/(2s²)}`:
/// `max_r r^{k-1} e^{-r²/(2s²)} max(k, |k - r²/s²|)`.
fn harmonic_lipschitz(k: f64, s: f64) -> f64 {
    let r_max = 10.0 * s * (1.0 + k.sqrt());
    (0..=20_000)
        .map(|i| {
            let r = r_max * i as f64 / 20_000.0;
            let radial = if k == 1.0 { 1.0 } else { r.powf(k - 1.0) };
            radial * (-r * r / (2.0 * s * s)).exp() * k.max((k - r * r / (s * s)).abs())
        })
        .fold(0.0, f64::max)
}

/// Ordered collection of test functions.
#[derive(Clone, Debug, Serialize)]
pub struct TestDictionary {
    pub functions: Vec<TestFunction>,
}

impl Default for TestDictionary {
    fn default() -> Self {
        Self::build(&DictionarySpec::default()).expect("default dictionary is valid")
    }
}

impl TestDictionary {
    pub fn build(spec: &DictionarySpec) -> Result<Self> {
        if spec.bump_widths.iter().chain([&spec.cutoff_scale, &spec.hat_width]).any(|w| !(*w > 0.0)) {
            return Err(Error::Config("dictionary widths and scales must be positive".into()));
        }
        let mut functions = vec![TestFunction::constant()];
        for &w in &spec.bump_widths {
            for &y in &spec.bump_centers {
                for &x in &spec.bump_centers {
                    functions.push(TestFunction::bump(Complex64::new(x, y), w));
                }
            }
        }
        for k in 1..=spec.max_harmonic as u32 {
            functions.push(TestFunction::harmonic(k, false, spec.cutoff_scale));
            functions.push(TestFunction::harmonic(k, true, spec.cutoff_scale));
        }
        for &r in &spec.hat_radii {
            functions.push(TestFunction::radial_hat(r, spec.hat_width));
        }
        Ok(Self { functions })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.name.clone()).collect()
    }

    /// Pair every function with a measure given as a linear functional.
    pub fn pairings<P: Fn(&dyn Fn(Complex64) -> f64) -> f64>(&self, pair: P) -> Vec<f64> {
        self.functions.iter().map(|f| pair(&|z| f.eval(z))).collect()
    }

    /// Pair every function with a weighted point set in one pass.
    pub fn pair_atoms(&self, points: &[Complex64], masses: &[f64]) -> Vec<f64> {
        self.functions
            .iter()
            .map(|f| points.iter().zip(masses).map(|(z, m)| m * f.eval(*z)).sum())
            .collect()
    }
}

/// Entrywise `|a - b|`.
pub fn defects(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "pairing vectors differ in length");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()
}

pub fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

pub fn mean_of(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_layout() {
        let d = TestDictionary::default();
        assert_eq!(d.len(), 1 + 50 + 8 + 3);
        assert!(d.functions[0].is_constant());
    }

    #[test]
    fn sup_norm_at_most_one_and_lipschitz_holds() {
        let d = TestDictionary::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sup = vec![0.0f64; d.len()];
        for _ in 0..20_000 {
            let z = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let dz = Complex64::from_polar(1e-3, rng.random_range(0.0..6.3));
            for (i, f) in d.functions.iter().enumerate() {
                let v = f.eval(z);
                sup[i] = sup[i].max(v.abs());
                let slope = (f.eval(z + dz) - v).abs() / 1e-3;
                assert!(slope <= f.lipschitz * (1.0 + 1e-2) + 1e-9, "{}: {slope} > {}", f.name, f.lipschitz);
            }
        }
        for (s, f) in sup.iter().zip(&d.functions) {
            assert!(*s <= 1.0 + 1e-12, "{} sup {s}", f.name);
            assert!(*s > 0.9, "{} sup {s} far from one", f.name);
        }
    }

    #[test]
    fn rejects_nonpositive_width() {
        let spec = DictionarySpec { hat_width: 0.0, ..Default::default() };
        assert!(TestDictionary::build(&spec).is_err());
    }
}
