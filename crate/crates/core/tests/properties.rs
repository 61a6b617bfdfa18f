use endopop::analysis::moments;
use endopop::grid::{make_grid2d, Field2D};
use endopop::rates::{build_kernel_table, KernelForm, RateSet};
use endopop::stepper::{run, Scheme2D, SimConfig, SimState};
use proptest::prelude::*;

fn setup(nr: usize, na: usize, k0: f64, k1: f64, values: Vec<f64>, steps: usize) -> (Scheme2D, SimState) {
    let grid = make_grid2d(2.0, 1.0, nr, na).unwrap();
    let kernel = build_kernel_table(KernelForm::Affine { k0, k1 }, &grid.size).unwrap();
    let cfg = SimConfig::new(1e-3, steps as f64 * 1e-3);
    let scheme = Scheme2D::new(grid, &RateSet::default(), kernel, cfg).unwrap();
    let f = Field2D::from_values(grid, values[..nr * na].to_vec()).unwrap();
    (scheme, SimState::initial(f, 1.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pure_coagulation_runs_keep_first_moments_and_shed_count(
        nr in 2usize..10,
        na in 1usize..8,
        k0 in 0.0f64..2.0,
        k1 in 0.0f64..1.0,
        values in prop::collection::vec(0.0f64..3.0, 80),
        steps in 1usize..30,
    ) {
        let (mut scheme, state) = setup(nr, na, k0, k1, values, steps);
        let out = run(&mut scheme, state, |_| {}).unwrap();
        let d = &out.diagnostics;
        let scale = d[0].h0 * 2.0 + 1e-300;
        for w in d.windows(2) {
            prop_assert!((w[1].h1r - d[0].h1r).abs() <= 1e-12 * scale);
            prop_assert!((w[1].h1a - d[0].h1a).abs() <= 1e-12 * scale);
            prop_assert!(w[1].h0 <= w[0].h0);
            prop_assert_eq!(w[1].m, 1.0);
        }
        prop_assert_eq!(moments(&out.final_state.f).h0, d.last().unwrap().h0);
    }

    #[test]
    fn small_steps_keep_densities_nonnegative(
        nr in 2usize..8,
        na in 1usize..6,
        values in prop::collection::vec(0.0f64..1.0, 48),
    ) {
        // dt * kappa * H0 well below one keeps the explicit loss term from overshooting
        let (mut scheme, state) = setup(nr, na, 0.5, 0.1, values, 20);
        let out = run(&mut scheme, state, |_| {}).unwrap();
        prop_assert!(out.warnings.is_empty());
        prop_assert!(out.final_state.f.values().iter().all(|v| *v >= 0.0));
    }
}
