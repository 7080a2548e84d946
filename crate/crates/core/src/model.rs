//! Weights, compact supports and quadrature discretizations of the
//! reference measure.
//!
//! A [`Weight`] is the local potential `φ` of the Hermitian metric
//! `h = e^{-φ}` in the affine frame of `O(1) → ℂP¹`, so that a degree-`N`
//! section `s = f e^N` has pointwise norm `|s(z)|² = |f(z)|² e^{-Nφ(z)}`.
//! A [`SupportMeasure`] is a normalized quadrature rule for the probability
//! measure `ν` whose support is the compact set `K`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilb::WeightedSpace;
use crate::quadrature::gauss_legendre_on;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Smooth,
    C2,
}

/// Tabulated weight on a rectangular grid, interpolated by cubic convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major values, `values[iy * nx + ix]`.
    pub values: Vec<f64>,
}

/// Declarative description of a weight, as read from a configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableSpec>,
}

impl WeightSpec {
    pub fn zero() -> Self {
        Self { kind: "zero".into(), ..Default::default() }
    }

    pub fn abs_squared(c: f64) -> Self {
        Self { kind: "abs_squared".into(), c: Some(c), ..Default::default() }
    }

    pub fn radial_power(p: f64) -> Self {
        Self { kind: "radial_power".into(), p: Some(p), ..Default::default() }
    }

    pub fn fubini_study(c: f64) -> Self {
        Self { kind: "fubini_study".into(), c: Some(c), ..Default::default() }
    }
}

#[derive(Clone, Debug)]
enum WeightKind {
    Zero,
    AbsSquared(f64),
    RadialPower(f64),
    FubiniStudy(f64),
    Table(TableSpec),
}

/// The metric potential `φ` together with its flat Laplacian `Δφ`.
#[derive(Clone, Debug)]
pub struct Weight {
    kind: WeightKind,
    label: String,
    smoothness: Smoothness,
}

/// Build a [`Weight`] from its declarative description.
pub fn build_weight(spec: &WeightSpec) -> Result<Weight> {
    let positive = |name: &str, v: Option<f64>| -> Result<f64> {
        match v {
            Some(x) if x.is_finite() && x > 0.0 => Ok(x),
            Some(x) => Err(Error::Config(format!(
                "weight `{}` needs a positive `{name}`, got {x}",
                spec.kind
            ))),
            None => Err(Error::Config(format!("weight `{}` needs parameter `{name}`", spec.kind))),
        }
    };
    let (kind, label, smoothness) = match spec.kind.as_str() {
        "zero" => (WeightKind::Zero, "zero".to_string(), Smoothness::Smooth),
        "abs_squared" => {
            let c = positive("c", spec.c)?;
            (WeightKind::AbsSquared(c), format!("abs_squared({c})"), Smoothness::Smooth)
        }
        "radial_power" => {
            let p = positive("p", spec.p)?;
            if p < 2.0 {
                return Err(Error::Config(format!(
                    "radial_power needs p >= 2 for a finite Laplacian, got {p}"
                )));
            }
            let smooth = if p.fract() == 0.0 && (p as i64) % 2 == 0 {
                Smoothness::Smooth
            } else {
                Smoothness::C2
            };
            (WeightKind::RadialPower(p), format!("radial_power({p})"), smooth)
        }
        "fubini_study" => {
            let c = positive("c", spec.c)?;
            (WeightKind::FubiniStudy(c), format!("fubini_study({c})"), Smoothness::Smooth)
        }
        "custom_table" => {
            let t = spec
                .table
                .clone()
                .ok_or_else(|| Error::Config("custom_table needs a `table` section".into()))?;
            if t.nx < 4 || t.ny < 4 {
                return Err(Error::Config("custom_table needs at least 4x4 samples".into()));
            }
            if t.values.len() != t.nx * t.ny {
                return Err(Error::Config(format!(
                    "custom_table has {} values, expected {}",
                    t.values.len(),
                    t.nx * t.ny
                )));
            }
            if !(t.x_max > t.x_min && t.y_max > t.y_min) {
                return Err(Error::Config("custom_table box is empty".into()));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("custom_table contains non-finite values".into()));
            }
            (WeightKind::Table(t), "custom_table".to_string(), Smoothness::C2)
        }
        other => return Err(Error::Config(format!("unknown weight kind `{other}`"))),
    };
    Ok(Weight { kind, label, smoothness })
}

impl Weight {
    pub fn eval(&self, z: Complex64) -> f64 {
        match &self.kind {
            WeightKind::Zero => 0.0,
            WeightKind::AbsSquared(c) => c * z.norm_sqr(),
            WeightKind::RadialPower(p) => z.norm().powf(*p),
            WeightKind::FubiniStudy(c) => c * z.norm_sqr().ln_1p(),
            WeightKind::Table(t) => table_eval(t, z).0,
        }
    }

    /// Flat Laplacian `∂²φ/∂x² + ∂²φ/∂y²`.
    pub fn laplacian(&self, z: Complex64) -> f64 {
        match &self.kind {
            WeightKind::Zero => 0.0,
            WeightKind::AbsSquared(c) => 4.0 * c,
            // r^p has Laplacian p² r^{p-2}
            WeightKind::RadialPower(p) => p * p * z.norm().powf(p - 2.0),
            WeightKind::FubiniStudy(c) => {
                let q = 1.0 + z.norm_sqr();
                4.0 * c / (q * q)
            }
            WeightKind::Table(t) => table_eval(t, z).1,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// True when `φ(e^{iθ} z) = φ(z)` for all θ.
    pub fn is_radial(&self) -> bool {
        !matches!(self.kind, WeightKind::Table(_))
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [2.0 - 3.0 * t, 9.0 * t - 5.0, 4.0 - 9.0 * t, 3.0 * t - 1.0],
    )
}

fn table_eval(t: &TableSpec, z: Complex64) -> (f64, f64) {
    let hx = (t.x_max - t.x_min) / (t.nx - 1) as f64;
    let hy = (t.y_max - t.y_min) / (t.ny - 1) as f64;
    let locate = |v: f64, lo: f64, h: f64, n: usize| -> (isize, f64) {
        let s = ((v - lo) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as isize).min(n as isize - 2);
        (i, s - i as f64)
    };
    let (ix, tx) = locate(z.re, t.x_min, hx, t.nx);
    let (iy, ty) = locate(z.im, t.y_min, hy, t.ny);
    let (wx, dwx) = cubic_weights(tx);
    let (wy, dwy) = cubic_weights(ty);
    let sample = |i: isize, j: isize| -> f64 {
        let i = i.clamp(0, t.nx as isize - 1) as usize;
        let j = j.clamp(0, t.ny as isize - 1) as usize;
        t.values[j * t.nx + i]
    };
    let mut val = 0.0;
    let mut lap = 0.0;
    for (b, (wyb, dwyb)) in wy.iter().zip(&dwy).enumerate() {
        for (a, (wxa, dwxa)) in wx.iter().zip(&dwx).enumerate() {
            let f = sample(ix + a as isize - 1, iy + b as isize - 1);
            val += wxa * wyb * f;
            lap += (dwxa * wyb / (hx * hx) + wxa * dwyb / (hy * hy)) * f;
        }
    }
    (val, lap)
}

/// Geometric description of the compact set `K = supp ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportKind {
    Disk { radius: f64 },
    Circle { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    TruncatedPlane { radius: f64 },
}

impl SupportKind {
    /// Membership with distance tolerance `tol`.
    pub fn contains(&self, z: Complex64, tol: f64) -> bool {
        let r = z.norm();
        match *self {
            SupportKind::Disk { radius } | SupportKind::TruncatedPlane { radius } => r <= radius + tol,
            SupportKind::Circle { radius } => (r - radius).abs() <= tol,
            SupportKind::Annulus { inner, outer } => r >= inner - tol && r <= outer + tol,
        }
    }

    pub fn outer_radius(&self) -> f64 {
        match *self {
            SupportKind::Disk { radius }
            | SupportKind::TruncatedPlane { radius }
            | SupportKind::Circle { radius } => radius,
            SupportKind::Annulus { outer, .. } => outer,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SupportKind::Disk { radius } => format!("disk({radius})"),
            SupportKind::Circle { radius } => format!("circle({radius})"),
            SupportKind::Annulus { inner, outer } => format!("annulus({inner},{outer})"),
            SupportKind::TruncatedPlane { radius } => format!("truncated_plane({radius})"),
        }
    }
}

/// Declarative description of a measure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<f64>,
    pub resolution: usize,
}

impl MeasureSpec {
    pub fn circle(radius: f64, resolution: usize) -> Self {
        Self { kind: "circle".into(), radius: Some(radius), resolution, ..Default::default() }
    }

    pub fn disk(radius: f64, resolution: usize) -> Self {
        Self { kind: "disk".into(), radius: Some(radius), resolution, ..Default::default() }
    }

    pub fn annulus(inner: f64, outer: f64, resolution: usize) -> Self {
        Self {
            kind: "annulus".into(),
            inner: Some(inner),
            outer: Some(outer),
            resolution,
            ..Default::default()
        }
    }

    pub fn truncated_plane(radius: f64, resolution: usize) -> Self {
        Self { kind: "truncated_plane".into(), radius: Some(radius), resolution, ..Default::default() }
    }
}

/// Normalized quadrature rule for `ν`.
#[derive(Clone, Debug)]
pub struct SupportMeasure {
    nodes: Vec<Complex64>,
    weights: Vec<f64>,
    kind: SupportKind,
    total_mass: f64,
    angular_nodes: usize,
    radial_nodes: usize,
}

/// Build the quadrature rule.
///
/// Circles use `resolution` equispaced nodes. Disks and annuli use a tensor
/// rule with `resolution` Gauss–Legendre radii (weight `r dr`) and
/// `2·resolution` equispaced angles.
pub fn build_measure(spec: &MeasureSpec) -> Result<SupportMeasure> {
    if spec.resolution < 4 {
        return Err(Error::Config(format!("measure resolution must be >= 4, got {}", spec.resolution)));
    }
    let radius = |name: &str, v: Option<f64>| -> Result<f64> {
        match v {
            Some(r) if r.is_finite() && r > 0.0 => Ok(r),
            Some(r) => Err(Error::Config(format!("measure `{}`: non-positive {name} {r}", spec.kind))),
            None => Err(Error::Config(format!("measure `{}` needs `{name}`", spec.kind))),
        }
    };
    let n = spec.resolution;
    match spec.kind.as_str() {
        "circle" => {
            let r = radius("radius", spec.radius)?;
            let nodes = (0..n)
                .map(|k| Complex64::from_polar(r, 2.0 * PI * k as f64 / n as f64))
                .collect();
            Ok(SupportMeasure::normalized(
                nodes,
                vec![1.0; n],
                SupportKind::Circle { radius: r },
                n,
                0,
            ))
        }
        "disk" | "truncated_plane" => {
            let r = radius("radius", spec.radius)?;
            let kind = if spec.kind == "disk" {
                SupportKind::Disk { radius: r }
            } else {
                SupportKind::TruncatedPlane { radius: r }
            };
            Ok(tensor_rule(0.0, r, n, kind))
        }
        "annulus" => {
            let inner = radius("inner", spec.inner)?;
            let outer = radius("outer", spec.outer)?;
            if inner >= outer {
                return Err(Error::Config(format!("annulus needs inner < outer, got {inner} >= {outer}")));
            }
            Ok(tensor_rule(inner, outer, n, SupportKind::Annulus { inner, outer }))
        }
        other => Err(Error::Config(format!("unknown measure kind `{other}`"))),
    }
}

fn tensor_rule(r_in: f64, r_out: f64, n: usize, kind: SupportKind) -> SupportMeasure {
    let (radii, rw) = gauss_legendre_on(n, r_in, r_out);
    let n_theta = 2 * n;
    let mut nodes = Vec::with_capacity(n * n_theta);
    let mut weights = Vec::with_capacity(n * n_theta);
    for (r, w) in radii.iter().zip(&rw) {
        for k in 0..n_theta {
            nodes.push(Complex64::from_polar(*r, 2.0 * PI * k as f64 / n_theta as f64));
            weights.push(w * r);
        }
    }
    SupportMeasure::normalized(nodes, weights, kind, n_theta, n)
}

impl SupportMeasure {
    fn normalized(
        nodes: Vec<Complex64>,
        mut weights: Vec<f64>,
        kind: SupportKind,
        angular_nodes: usize,
        radial_nodes: usize,
    ) -> Self {
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        let total_mass = weights.iter().sum();
        Self { nodes, weights, kind, total_mass, angular_nodes, radial_nodes }
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> SupportKind {
        self.kind
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn label(&self) -> String {
        format!("{}[{}]", self.kind.label(), self.nodes.len())
    }

    /// Moments `∫ z^j z̄^k dν` are exact for `|j - k| < angular_exactness()`.
    pub fn angular_exactness(&self) -> usize {
        self.angular_nodes
    }

    /// Largest `j + k` for which radial moments are exact; `None` for circles
    /// (exact in the radial variable for every degree).
    pub fn radial_exactness(&self) -> Option<usize> {
        (self.radial_nodes > 0).then(|| 2 * self.radial_nodes - 2)
    }

    /// Highest section degree whose Gram matrix this rule integrates exactly
    /// in the angular variable.
    pub fn max_exact_degree(&self) -> usize {
        (self.angular_nodes - 1) / 2
    }

    /// Integrate `f` against `ν`.
    pub fn integrate<F: Fn(Complex64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }

    /// The same rule with every node multiplied by `e^{iθ}`.
    pub fn rotated(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        Self { nodes: self.nodes.iter().map(|z| z * phase).collect(), ..self.clone() }
    }

    /// Export the node table with columns `re`, `im`, `weight`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["re", "im", "weight"])?;
        for (z, wt) in self.nodes.iter().zip(&self.weights) {
            w.write_record([fmt_f64(z.re), fmt_f64(z.im), fmt_f64(*wt)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

/// The `N`-th term of the Bernstein–Markov sequence: `max_{z ∈ K} Π_N(z)^{1/2}`,
/// which by the extremal property is the supremum of `sup_K |s|_{h^N}` over
/// unit-norm sections.
pub fn bernstein_markov_ratio(space: &WeightedSpace, measure: &SupportMeasure) -> Result<f64> {
    if space.measure_label() != measure.label() {
        return Err(Error::Config(format!(
            "space was built over `{}`, not `{}`",
            space.measure_label(),
            measure.label()
        )));
    }
    let max_log = measure
        .nodes()
        .iter()
        .map(|z| space.log_density(*z))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((0.5 * max_log).exp())
}

/// A weight paired with a measure: the data `(h, ν)`.
#[derive(Clone, Debug)]
pub struct Model {
    pub label: String,
    pub weight: Arc<Weight>,
    pub measure: Arc<SupportMeasure>,
}

/// The two reference models used throughout the test-suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinModel {
    /// `φ = 0`, `ν` uniform on the unit circle.
    FlatCircle,
    /// `φ = |z|²`, `ν` normalized area on the disk of radius 3.
    GaussianDisk,
}

/// Default truncation radius for the Gaussian weight.
pub const GAUSSIAN_R_CUT: f64 = 3.0;

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 2] = [BuiltinModel::FlatCircle, BuiltinModel::GaussianDisk];

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinModel::FlatCircle => "flat_circle",
            BuiltinModel::GaussianDisk => "gaussian_disk",
        }
    }

    pub fn weight_spec(&self) -> WeightSpec {
        match self {
            BuiltinModel::FlatCircle => WeightSpec::zero(),
            BuiltinModel::GaussianDisk => WeightSpec::abs_squared(1.0),
        }
    }

    /// Measure whose quadrature integrates the Gram matrix of every degree
    /// up to `max_degree` exactly in the angular variable.
    pub fn measure_spec(&self, max_degree: usize) -> MeasureSpec {
        match self {
            BuiltinModel::FlatCircle => MeasureSpec::circle(1.0, (2 * max_degree + 2).max(64)),
            BuiltinModel::GaussianDisk => MeasureSpec::disk(GAUSSIAN_R_CUT, (max_degree + 16).max(32)),
        }
    }

    pub fn build(&self, max_degree: usize) -> Result<Model> {
        Model::new(self.name(), &self.weight_spec(), &self.measure_spec(max_degree))
    }
}

impl Model {
    pub fn new(label: &str, weight: &WeightSpec, measure: &MeasureSpec) -> Result<Self> {
        Ok(Self {
            label: label.to_string(),
            weight: Arc::new(build_weight(weight)?),
            measure: Arc::new(build_measure(measure)?),
        })
    }

    pub fn support(&self) -> SupportKind {
        self.measure.kind()
    }

    pub fn is_rotation_invariant(&self) -> bool {
        self.weight.is_radial()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_laplacian(w: &Weight, z: Complex64, h: f64) -> f64 {
        let c = w.eval(z);
        let sum = w.eval(z + h) + w.eval(z - h) + w.eval(z + Complex64::i() * h) + w.eval(z - Complex64::i() * h);
        (sum - 4.0 * c) / (h * h)
    }

    #[test]
    fn builtin_weight_values() {
        let zero = build_weight(&WeightSpec::zero()).unwrap();
        assert_eq!(zero.eval(Complex64::new(1.3, -0.2)), 0.0);
        assert_eq!(zero.laplacian(Complex64::new(1.3, -0.2)), 0.0);

        let g = build_weight(&WeightSpec::abs_squared(1.0)).unwrap();
        assert!((g.eval(Complex64::new(1.0, 2.0)) - 5.0).abs() < 1e-15);
        assert_eq!(g.laplacian(Complex64::new(0.3, 0.1)), 4.0);

        let p4 = build_weight(&WeightSpec::radial_power(4.0)).unwrap();
        let one = Complex64::new(1.0, 0.0);
        assert!((p4.eval(one) - 1.0).abs() < 1e-15);
        assert!((p4.laplacian(one) - 16.0).abs() < 1e-12);
        assert!((fd_laplacian(&p4, one, 1e-4) - 16.0).abs() / 16.0 < 1e-4);
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let specs = [
            WeightSpec::zero(),
            WeightSpec::abs_squared(1.0),
            WeightSpec::abs_squared(0.5),
            WeightSpec::radial_power(4.0),
            WeightSpec::radial_power(3.0),
            WeightSpec::fubini_study(1.0),
        ];
        for spec in &specs {
            let w = build_weight(spec).unwrap();
            for _ in 0..100 {
                let z = Complex64::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
                let exact = w.laplacian(z);
                let fd = fd_laplacian(&w, z, 1e-4);
                assert!(w.eval(z).is_finite());
                assert!(
                    (fd - exact).abs() <= 1e-4 * exact.abs().max(1e-2),
                    "{}: z={z} fd={fd} exact={exact}",
                    w.label()
                );
            }
        }
    }

    #[test]
    fn table_weight_reproduces_quadratic() {
        // Cubic convolution reproduces quadratics exactly away from the edges.
        let (nx, ny) = (41, 41);
        let mut values = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let x = -2.0 + 4.0 * i as f64 / 40.0;
                let y = -2.0 + 4.0 * j as f64 / 40.0;
                values.push(x * x + y * y);
            }
        }
        let spec = WeightSpec {
            kind: "custom_table".into(),
            table: Some(TableSpec { x_min: -2.0, x_max: 2.0, y_min: -2.0, y_max: 2.0, nx, ny, values }),
            ..Default::default()
        };
        let w = build_weight(&spec).unwrap();
        let z = Complex64::new(0.337, -0.712);
        assert!((w.eval(z) - z.norm_sqr()).abs() < 1e-12);
        assert!((w.laplacian(z) - 4.0).abs() < 1e-9);
        assert!(!w.is_radial());
    }

    #[test]
    fn weight_errors() {
        let bad = WeightSpec { kind: "triangle".into(), ..Default::default() };
        assert!(matches!(build_weight(&bad), Err(Error::Config(_))));
        assert!(build_weight(&WeightSpec::abs_squared(-1.0)).is_err());
        assert!(build_weight(&WeightSpec { kind: "abs_squared".into(), ..Default::default() }).is_err());
        assert!(build_weight(&WeightSpec::radial_power(1.0)).is_err());
    }

    #[test]
    fn circle_rule_is_uniform() {
        let m = build_measure(&MeasureSpec::circle(1.0, 64)).unwrap();
        assert_eq!(m.len(), 64);
        for (k, (z, w)) in m.nodes().iter().zip(m.weights()).enumerate() {
            let expect = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / 64.0);
            assert!((z - expect).norm() < 1e-15);
            assert!((w - 1.0 / 64.0).abs() < 1e-17);
        }
        // exact for |j - k| < n
        for (j, k) in [(3usize, 3usize), (10, 2), (0, 63), (40, 0)] {
            let q: Complex64 = m
                .nodes()
                .iter()
                .zip(m.weights())
                .map(|(z, w)| z.powu(j as u32) * z.conj().powu(k as u32) * *w)
                .sum();
            let exact = if j == k { 1.0 } else { 0.0 };
            assert!((q - exact).norm() < 1e-13, "j={j} k={k} q={q}");
        }
    }

    #[test]
    fn disk_and_annulus_moments() {
        let disk = build_measure(&MeasureSpec::disk(1.0, 32)).unwrap();
        assert!((disk.integrate(|z| z.norm_sqr()) - 0.5).abs() < 1e-10);
        assert!((disk.total_mass() - 1.0).abs() < 1e-10);
        // ∫|z|^{2j} dν = 1/(j+1) on the unit disk
        for j in 0..=20 {
            let q = disk.integrate(|z| z.norm_sqr().powi(j));
            assert!((q - 1.0 / (j as f64 + 1.0)).abs() < 1e-10, "j={j}");
        }
        // off-diagonal moment vanishes
        let q: Complex64 = disk
            .nodes()
            .iter()
            .zip(disk.weights())
            .map(|(z, w)| z.powu(5) * z.conj().powu(2) * *w)
            .sum();
        assert!(q.norm() < 1e-12);

        let ann = build_measure(&MeasureSpec::annulus(1.0, 2.0, 32)).unwrap();
        assert!((ann.total_mass() - 1.0).abs() < 1e-10);
        // ∫|z|² dν for normalized area on 1<r<2: (2/(R²-r²))·(R⁴-r⁴)/4 = 5/2
        assert!((ann.integrate(|z| z.norm_sqr()) - 2.5).abs() < 1e-10);
    }

    #[test]
    fn nodes_lie_in_support() {
        for spec in [
            MeasureSpec::circle(1.5, 16),
            MeasureSpec::disk(3.0, 20),
            MeasureSpec::annulus(0.5, 2.0, 12),
            MeasureSpec::truncated_plane(3.0, 8),
        ] {
            let m = build_measure(&spec).unwrap();
            assert!(m.weights().iter().all(|w| *w > 0.0));
            assert!(m.nodes().iter().all(|z| m.kind().contains(*z, 1e-12)), "{}", m.label());
        }
    }

    #[test]
    fn measure_errors() {
        assert!(build_measure(&MeasureSpec::circle(1.0, 3)).is_err());
        assert!(build_measure(&MeasureSpec::disk(-1.0, 8)).is_err());
        assert!(build_measure(&MeasureSpec::annulus(2.0, 1.0, 8)).is_err());
        assert!(build_measure(&MeasureSpec { kind: "square".into(), resolution: 8, ..Default::default() }).is_err());
    }

    #[test]
    fn truncated_plane_is_relabeled_disk() {
        let a = build_measure(&MeasureSpec::disk(3.0, 10)).unwrap();
        let b = build_measure(&MeasureSpec::truncated_plane(3.0, 10)).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.kind(), b.kind());
    }
}
