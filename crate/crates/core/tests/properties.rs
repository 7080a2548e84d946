use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use qelab::dictionary::TestDictionary;
use qelab::ensembles::{sample_haar, spherical_vector, task_rng, Ensemble, HaarFrame, RandomSection};
use qelab::equilibrium::is_decreasing;
use qelab::onbstats::{orbit_closed_form, toeplitz, y_statistic, ToeplitzMatrix};
use qelab::qe::cesaro_averages;
use qelab::zeros::roots;
use qelab::{build_measure, build_weight, MeasureSpec, WeightSpec, WeightedSpace};

fn point(r: f64, t: f64) -> Complex64 {
    Complex64::from_polar(r, t)
}

fn gaussian_space(n: usize, c: f64) -> (WeightedSpace, qelab::SupportMeasure) {
    let w = Arc::new(build_weight(&WeightSpec::abs_squared(c)).unwrap());
    let m = build_measure(&MeasureSpec::disk(3.0, n + 16)).unwrap();
    (WeightedSpace::build(n, &w, &m).unwrap(), m)
}

fn hermitian(d: usize, seed: u64) -> ToeplitzMatrix {
    let mut rng = task_rng(seed, 0);
    let u = sample_haar(d, &mut rng);
    let lambda: Vec<f64> = (0..d).map(|j| (j as f64 * 0.7).sin() * 3.0).collect();
    let diag = DMatrix::from_fn(d, d, |j, k| if j == k { Complex64::new(lambda[j], 0.0) } else { Complex64::new(0.0, 0.0) });
    ToeplitzMatrix { degree: d - 1, label: "h".into(), matrix: &u.u * diag * u.u.adjoint() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn orthonormal_basis_for_any_gaussian_strength(n in 1usize..20, c in 0.3f64..2.0) {
        let (space, _) = gaussian_space(n, c);
        prop_assert!(space.orthonormality_error() <= 1e-8);
    }

    #[test]
    fn kernel_is_hermitian_and_cauchy_schwarz(n in 1usize..16, r1 in 0.0f64..2.0, t1 in 0.0f64..6.3, r2 in 0.0f64..2.0, t2 in 0.0f64..6.3) {
        let (space, _) = gaussian_space(n, 1.0);
        let (z, w) = (point(r1, t1), point(r2, t2));
        let a = space.bergman_kernel(z, w);
        let b = space.bergman_kernel(w, z).conj();
        let scale = (space.bergman_kernel(z, z).re * space.bergman_kernel(w, w).re).sqrt();
        prop_assert!((a - b).norm() <= 1e-10 * scale);
        prop_assert!(a.norm() <= scale * (1.0 + 1e-10));
        let p = space.normalized_kernel(z, w);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
    }

    #[test]
    fn pointwise_mass_is_bounded_by_density(n in 1usize..16, seed in any::<u64>(), r in 0.0f64..2.5, t in 0.0f64..6.3) {
        let (space, _) = gaussian_space(n, 1.0);
        let s = RandomSection::draw(&space, Ensemble::Gaussian, seed, 0);
        let z = point(r, t);
        prop_assert!(s.pointwise_norm_sqr(&space, z) <= space.bergman_density(z) * s.norm_sqr() * (1.0 + 1e-9));
    }

    #[test]
    fn roots_reexpand(seed in any::<u64>(), n in 1usize..25) {
        let mut rng = task_rng(seed, 0);
        let zs: Vec<Complex64> = (0..n).map(|_| qelab::ensembles::complex_gaussian(&mut rng)).collect();
        let mut coeffs = vec![Complex64::new(1.0, 0.0)];
        for z in &zs {
            let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
            for (k, a) in coeffs.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= a * z;
            }
            coeffs = next;
        }
        let found = roots(&coeffs).unwrap();
        prop_assert_eq!(found.roots.len(), n);
        prop_assert_eq!(found.degree_drop, 0);
        prop_assert!(found.max_residual <= 1e-10);
    }

    #[test]
    fn spherical_vectors_are_unit(d in 1usize..64, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 1);
        let v = spherical_vector(d, &mut rng);
        let n: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        prop_assert!((n - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn haar_frames_are_unitary(d in 1usize..24, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 2);
        prop_assert!(sample_haar(d, &mut rng).unitarity_error() <= 1e-12);
    }

    #[test]
    fn y_statistic_is_bounded_by_frobenius_defect(d in 1usize..16, seed in any::<u64>()) {
        let t = hermitian(d, seed);
        let mut rng = task_rng(seed, 3);
        let u = sample_haar(d, &mut rng);
        let r = u.u.adjoint() * &t.matrix * &u.u;
        let mean = t.trace() / d as f64;
        let frob: f64 = (0..d)
            .flat_map(|j| (0..d).map(move |k| (j, k)))
            .map(|(j, k)| (r[(j, k)] - if j == k { Complex64::new(mean, 0.0) } else { Complex64::new(0.0, 0.0) }).norm_sqr())
            .sum();
        let y = y_statistic(&u, &t).unwrap();
        prop_assert!(y >= 0.0 && y <= frob + 1e-10);
        let rotated = ToeplitzMatrix { matrix: r, ..t.clone() };
        prop_assert!((rotated.trace() - t.trace()).abs() <= 1e-10);
        prop_assert!((rotated.trace_sq() - t.trace_sq()).abs() <= 1e-9 * t.trace_sq().max(1.0));
    }

    #[test]
    fn orbit_form_is_shift_invariant_and_quadratic(lambda in prop::collection::vec(-5.0f64..5.0, 1..8), c in -3.0f64..3.0, s in 0.1f64..3.0) {
        let base = orbit_closed_form(&lambda);
        let shifted: Vec<f64> = lambda.iter().map(|x| x + c).collect();
        let scaled: Vec<f64> = lambda.iter().map(|x| x * s).collect();
        prop_assert!(base >= -1e-12);
        prop_assert!((orbit_closed_form(&shifted) - base).abs() <= 1e-9 * (1.0 + base));
        prop_assert!((orbit_closed_form(&scaled) - s * s * base).abs() <= 1e-9 * (1.0 + s * s * base));
    }

    #[test]
    fn nonnegative_symbols_give_psd_toeplitz(n in 1usize..14, cx in -1.0f64..1.0, cy in -1.0f64..1.0, w in 0.2f64..1.0) {
        let (space, m) = gaussian_space(n, 1.0);
        let c = Complex64::new(cx, cy);
        let t = toeplitz(&space, &m, "bump", |z| (-(z - c).norm_sqr() / (2.0 * w * w)).exp());
        prop_assert!(t.hermitian_error() <= 1e-12);
        let ev = t.eigenvalues();
        prop_assert!(ev[0] >= -1e-10);
        prop_assert!(*ev.last().unwrap() <= 1.0 + 1e-10);
    }

    #[test]
    fn dictionary_is_bounded_by_one(r in 0.0f64..4.0, t in 0.0f64..6.3) {
        let d = TestDictionary::default();
        let z = point(r, t);
        for f in &d.functions {
            prop_assert!(f.eval(z).abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn cesaro_of_sorted_sequence_is_sorted(mut v in prop::collection::vec(0.0f64..1.0, 1..20)) {
        v.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(is_decreasing(&v, 0.0));
        prop_assert!(is_decreasing(&cesaro_averages(&v), 1e-12));
    }

    #[test]
    fn draws_are_deterministic_per_stream(seed in any::<u64>(), stream in any::<u64>()) {
        let (space, _) = gaussian_space(6, 1.0);
        let a = RandomSection::draw(&space, Ensemble::Spherical, seed, stream);
        let b = RandomSection::draw(&space, Ensemble::Spherical, seed, stream);
        prop_assert_eq!(a.coeffs, b.coeffs);
    }
}

#[test]
fn y_statistic_rejects_mismatched_dimensions() {
    let t = hermitian(4, 1);
    let u = HaarFrame { u: DMatrix::identity(3, 3) };
    assert!(matches!(y_statistic(&u, &t), Err(qelab::Error::DimensionMismatch { expected: 4, got: 3 })));
}
