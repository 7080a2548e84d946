use std::path::PathBuf;

use num_complex::Complex64;

use qelab::dictionary::TestDictionary;
use qelab::ensembles::{Ensemble, RandomSection};
use qelab::equilibrium::{calibrate_kappa, envelope_oracle, equilibrium_measure, EnvelopeOptions};
use qelab::zeros::{empirical_zero_measure, expected_zero_current, poincare_lelong_check};
use qelab::{BuiltinModel, GridKind, GridSpec, PotentialGrid, WeightedSpace};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qelab-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn envelope_csv_round_trip_is_exact() {
    let grid = GridSpec::square(2.5, 81);
    let m = BuiltinModel::GaussianDisk.build(1).unwrap();
    let env = envelope_oracle(&m.weight, &m.support(), &grid, &EnvelopeOptions::default()).unwrap();
    let path = scratch("envelope.csv");
    env.potential.write_csv(&path).unwrap();
    let back = PotentialGrid::read_csv(&path, GridKind::Envelope).unwrap();
    assert_eq!(back.spec, grid);
    assert!(back.values.iter().zip(&env.potential.values).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn malformed_grid_csv_is_rejected() {
    let path = scratch("bad.csv");
    std::fs::write(&path, "x_min,x_max,y_min,y_max,nx,ny\n0,1,0,1,3,3\n1,2,3\n").unwrap();
    assert!(matches!(PotentialGrid::read_csv(&path, GridKind::Envelope), Err(qelab::Error::Config(_))));
}

#[test]
fn expected_zero_current_matches_equilibrium_measure() {
    let grid = GridSpec::square(2.5, 201);
    let opts = EnvelopeOptions::default();
    let kappa = calibrate_kappa(&grid, &opts).unwrap();
    let model = BuiltinModel::GaussianDisk.build(40).unwrap();
    let env = envelope_oracle(&model.weight, &model.support(), &grid, &opts).unwrap();
    let mu = equilibrium_measure(&env, kappa, None).unwrap();
    let space = WeightedSpace::build(40, &model.weight, &model.measure).unwrap();
    let current = expected_zero_current(&space, &grid, kappa).unwrap();
    // the current of degree-N sections has mass one, minus what escapes the box
    assert!((current.total_mass() - 1.0).abs() < 0.05, "mass {}", current.total_mass());
    let dict = TestDictionary::default();
    let a = current.pair_dictionary(&dict);
    let b: Vec<f64> = dict.functions.iter().map(|f| mu.pair(|z| f.eval(z))).collect();
    let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 0.08, "worst {worst}");
}

#[test]
fn poincare_lelong_on_both_models() {
    let grid = GridSpec::square(2.5, 401);
    let kappa = calibrate_kappa(&grid, &EnvelopeOptions::default()).unwrap();
    let dict = TestDictionary::default();
    for bm in BuiltinModel::ALL {
        let model = bm.build(12).unwrap();
        let space = WeightedSpace::build(12, &model.weight, &model.measure).unwrap();
        let s = RandomSection::draw(&space, Ensemble::Gaussian, 5, 0);
        let rows = poincare_lelong_check(&space, &s, &grid, kappa, &dict, 2e-2).unwrap();
        for r in rows {
            assert!((r.grid_pairing - r.zero_pairing).abs() <= r.tolerance, "{}: {r:?}", bm.name());
        }
    }
}

#[test]
fn zero_measure_export_lists_every_root() {
    let model = BuiltinModel::FlatCircle.build(10).unwrap();
    let space = WeightedSpace::build(10, &model.weight, &model.measure).unwrap();
    let s = RandomSection::draw(&space, Ensemble::Gaussian, 9, 1);
    let z = empirical_zero_measure(&space, &s, None).unwrap();
    assert_eq!(z.atoms.len() + z.degree_drop, 10);
    assert!((z.total_mass() - z.atoms.len() as f64 / 10.0).abs() < 1e-15);
    let path = scratch("zeros.csv");
    z.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + z.atoms.len());
    let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').take(2).map(|v| v.parse().unwrap()).collect();
    assert_eq!(Complex64::new(first[0], first[1]), z.atoms[0]);
}
