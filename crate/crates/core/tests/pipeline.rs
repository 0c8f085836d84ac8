use num_complex::Complex64;
use proptest::prelude::*;

use dirac_rls::cli_io::{run_subcommand, RunConfig, Subcommand};
use dirac_rls::dirac_algebra::MassCharge;
use dirac_rls::dynamics::free_propagate;
use dirac_rls::green_kernel::{DiracCoeffs, Branch};
use dirac_rls::grid::{GridSpec, SpinorField};
use dirac_rls::linalg::{c, Spinor, Vec3, I};
use dirac_rls::potential::{eval_v, factorize_coeffs, factorize_v, PotentialSpec};
use dirac_rls::rls_solver::{read_field_binary, recover_phi, solve_modified, write_field_files, ScatterChannel, SolveMethod, SolverConfig};
use dirac_rls::scattering::{amplitude, born_result, AmplitudeForm, DirectionSet};

fn mc1() -> MassCharge {
    MassCharge::new(1.0, 1.0).unwrap()
}

fn packet(g: GridSpec) -> SpinorField {
    SpinorField::from_fn(g, |r| Spinor::new(c(1.0), I * r.x, c(0.3), Complex64::new(0.1, -0.2)) * c((-0.4 * r.norm_squared()).exp()))
}

#[test]
fn direct_and_born_paths_give_the_same_amplitude() {
    let mc = mc1();
    let ch = ScatterChannel::new(Vec3::new(0.3, 0.0, 1.0), 3, Branch::Plus, &mc).unwrap();
    let grid = GridSpec::new(8, 0.6, [-2.1; 3]).unwrap();
    let spec = PotentialSpec::gaussian(0.05, 1.0, 1.0);
    let dirs = DirectionSet::dodecahedron();
    let mut results = Vec::new();
    for method in [SolveMethod::Direct, SolveMethod::Born] {
        let cfg = SolverConfig { method, ..Default::default() };
        let sol = solve_modified(&ch, &grid, &spec, &mc, &cfg).unwrap();
        let phi = recover_phi(&sol.psi, &ch, &spec, &mc, &cfg.quad).unwrap();
        results.push(amplitude(&phi, &ch, &spec, &mc, &dirs, AmplitudeForm::FarField).unwrap().amplitudes());
    }
    for (a, b) in results[0].iter().zip(&results[1]) {
        assert!((a - b).norm() < 1e-6 * b.norm(), "{} vs {}", a.norm(), b.norm());
    }
    let born = born_result(&spec, &ch, &mc, &dirs, AmplitudeForm::FarField).unwrap().amplitudes();
    for (a, b) in results[0].iter().zip(&born) {
        assert!((a - b).norm() < 0.1 * b.norm());
    }
}

#[test]
fn field_dump_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let f = packet(GridSpec::new(8, 0.5, [-1.0, 0.5, -2.0]).unwrap());
    let (csv, bin) = (dir.path().join("f.csv"), dir.path().join("f.bin"));
    write_field_files(&f, Some(&csv), Some(&bin)).unwrap();
    let back = read_field_binary(std::fs::File::open(&bin).unwrap()).unwrap();
    assert_eq!(back, f);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 513);
}

#[test]
fn in_process_solve_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[particle]\nmass = 1.0\n\n[potential]\nscalar = {{ family = \"gaussian\", g = 0.02, a = 1.0 }}\n\n[grid]\nn = 8\nh = 0.6\n\n[channel]\nk = [0.0, 0.0, 1.0]\nn = 3\n\n[output]\ndir = \"{}\"\n",
        dir.path().join("o").display()
    );
    let cfg = RunConfig::from_toml(&text).unwrap();
    let summary = run_subcommand(Subcommand::Solve, &cfg).unwrap();
    assert_eq!(summary.manifest.status, "ok");
    assert_eq!(summary.manifest.outputs.len(), 1);
    assert!(dir.path().join("o/manifest.json").exists());
    assert!(!dir.path().join("o/manifest.json.tmp").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn free_propagation_is_unitary_and_composes(t1 in -5.0..5.0f64, t2 in -5.0..5.0f64) {
        let mc = mc1();
        let f = packet(GridSpec::centered(8, 0.7).unwrap());
        let a = free_propagate(&free_propagate(&f, t1, &mc), t2, &mc);
        let b = free_propagate(&f, t1 + t2, &mc);
        prop_assert!((a.norm() - f.norm()).abs() < 1e-12 * f.norm());
        prop_assert!(a.sub(&b).norm() < 1e-12 * f.norm());
    }

    #[test]
    fn closed_form_factors_match_eigendecomposition(nu in -3.0..3.0f64, a in prop::array::uniform3(-3.0..3.0f64), e in -2.0..2.0f64) {
        let mut spec = PotentialSpec::zero().with_charge(e);
        spec.scalar = dirac_rls::potential::Profile::Constant { value: nu };
        spec.vector = a.map(|x| dirac_rls::potential::Profile::Constant { value: x });
        let r = Vec3::zeros();
        let v = eval_v(&r, &spec);
        let fc = factorize_coeffs(&spec.coeffs(&r));
        let fm = factorize_v(&v).unwrap();
        let scale = v.norm().max(1.0);
        prop_assert!((fc.v1.to_matrix() - fm.v1).norm() < 1e-10 * scale);
        prop_assert!((fc.v1.to_matrix() * fc.w1.to_matrix() * fc.v1.to_matrix() - v).norm() < 1e-12 * scale);
    }

    #[test]
    fn dirac_coeffs_apply_matches_matrix(re in prop::array::uniform5(-2.0..2.0f64), im in prop::array::uniform5(-2.0..2.0f64)) {
        let z: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let d = DiracCoeffs { id: z[0], beta: z[1], alpha: [z[2], z[3], z[4]] };
        let s = Spinor::new(z[4], z[0], z[2], z[1]);
        prop_assert!((d.apply(&s) - d.to_matrix() * s).norm() < 1e-13);
    }
}
