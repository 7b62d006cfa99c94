use sqha::config::SimConfig;
use sqha::diagnostics::{
    classical_decomposition, ensemble_energy_variance, ClassicalDecomposition,
};
use sqha::dynamics::{
    classical_reference, run_ensemble, Formulation, InitialState, PotentialSpec, TrajectoryEnsemble,
};
use sqha::grid::Grid1D;

fn decompose(c: &SimConfig) -> ClassicalDecomposition {
    let runs = run_ensemble(c, false).unwrap();
    assert!(runs.iter().all(|r| r.completed()));
    let init = c
        .initial
        .prepare(&c.grid, &c.potential, &c.constants)
        .unwrap();
    let start = TrajectoryEnsemble::from_quantiles(&init, c.trajectories, &c.constants);
    let reference = classical_reference(
        &c.potential,
        &c.grid,
        &c.constants,
        &start,
        c.dt,
        c.steps,
        c.output_every,
    )
    .unwrap();
    let noisy: Vec<_> = runs.into_iter().map(|r| r.trajectories).collect();
    classical_decomposition(
        &noisy,
        &reference,
        c.noise.theta,
        c.grid.length(),
        &c.constants,
    )
    .unwrap()
}

#[test]
fn broad_free_packet_is_classical() {
    let mut c = SimConfig::new(Grid1D::new(200.0, 512).unwrap());
    c.potential = PotentialSpec::Free;
    c.initial = InitialState::Gaussian {
        sigma: 10.0,
        center: 0.0,
        momentum: 1.0,
    };
    c.steps = (2.0 / c.dt).round() as usize;
    c.output_every = 10;
    c.trajectories = 11;
    let d = decompose(&c);
    assert!(d.relative_fluctuation < 1e-3, "{}", d.relative_fluctuation);
    assert!(d.p_cl.iter().all(|p| (p - 1.0).abs() < 1e-12));
    assert!(d.scale_ratio == 0.0);
}

#[test]
fn quadratic_confinement_is_not_classical() {
    let mut c = SimConfig::new(Grid1D::new(20.0, 128).unwrap());
    c.initial = InitialState::GroundState;
    c.steps = (3.0 / c.dt).round() as usize;
    c.output_every = 20;
    c.trajectories = 8;
    let d = decompose(&c);
    // Tracers in the ground state never move; their Newtonian twins fall
    // toward the origin, so δp = −p_cl is of order one.
    assert!(d.relative_fluctuation > 0.5, "{}", d.relative_fluctuation);
    let last = d.times.len() - 1;
    assert!(
        d.delta_p[0][last].abs() < 1e-9,
        "mean over symmetric tracers"
    );
    assert!(d.delta_s.iter().any(|s| s.abs() > 1e-3));
}

#[test]
fn classical_reference_ignores_noise() {
    let mut c = SimConfig::new(Grid1D::new(20.0, 128).unwrap());
    c.initial = InitialState::Gaussian {
        sigma: 0.7,
        center: 1.0,
        momentum: 0.0,
    };
    c.steps = 400;
    c.output_every = 40;
    c.trajectories = 6;
    c.ensemble = 4;
    let quiet = decompose(&c);
    c.noise.theta = 0.1;
    let noisy = decompose(&c);
    assert_eq!(quiet.p_cl, noisy.p_cl);
    assert_eq!(quiet.s_cl, noisy.s_cl);
    assert!(noisy.scale_ratio > 0.0 && noisy.scale_ratio.is_finite());
}

#[test]
fn sub_quadratic_noisy_ensemble_has_unbiased_momentum() {
    let mut c = SimConfig::new(Grid1D::new(40.0, 128).unwrap());
    c.potential = PotentialSpec::PowerLaw {
        strength: 1.0,
        exponent: 1.5,
    };
    c.initial = InitialState::Gaussian {
        sigma: 1.0,
        center: 0.0,
        momentum: 0.0,
    };
    c.noise.theta = 0.1;
    c.noise.seed = 31;
    c.steps = 1000;
    c.output_every = 100;
    c.trajectories = 8;
    c.ensemble = 64;
    let d = decompose(&c);
    let last = d.times.len() - 1;
    let (mean, se) = (d.delta_p_mean[last], d.delta_p_standard_error[last]);
    assert!(se > 0.0);
    assert!(
        mean.abs() <= 2.0 * se,
        "mean δp {mean}, standard error {se}"
    );
}

#[test]
fn standard_error_shrinks_with_ensemble_size() {
    let mut c = SimConfig::new(Grid1D::new(20.0, 64).unwrap());
    c.initial = InitialState::GroundState;
    c.formulation = Formulation::Schrodinger;
    c.noise.theta = 0.1;
    c.noise.seed = 5;
    c.steps = 600;
    c.output_every = 10;
    let mut stats = |members: usize| {
        c.ensemble = members;
        let records: Vec<_> = run_ensemble(&c, false)
            .unwrap()
            .into_iter()
            .map(|r| r.diagnostics)
            .collect();
        ensemble_energy_variance(&records).unwrap()
    };
    let (small, large) = (stats(64), stats(128));
    assert!(small.sigma > 0.0);
    let ratio = small.standard_error / large.standard_error;
    assert!((1.1..1.8).contains(&ratio), "ratio {ratio}");
}
