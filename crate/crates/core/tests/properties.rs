use std::f64::consts::PI;

use proptest::prelude::*;
use sqha::config::{parse_config, SimConfig};
use sqha::dynamics::{Formulation, InitialState, PotentialSpec};
use sqha::grid::{derivative, from_polar, integrate, to_polar, Grid1D, RealField, WaveState};
use sqha::noise::{NoiseSampler, NoiseSpec};
use sqha::quantum_potential::vqu;
use sqha::PhysicalConstants;

/// Band-limited periodic function `Σ a_k cos(κk q) + b_k sin(κk q)` with its
/// first two derivatives in closed form.
#[derive(Debug, Clone)]
struct Series {
    kappa: f64,
    terms: Vec<(f64, f64)>,
}

impl Series {
    fn eval(&self, q: f64, order: u32) -> f64 {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let w = self.kappa * (i + 1) as f64;
                let (c, s) = ((w * q).cos(), (w * q).sin());
                match order {
                    0 => a * c + b * s,
                    1 => w * (-a * s + b * c),
                    _ => -w * w * (a * c + b * s),
                }
            })
            .sum()
    }
}

fn series(length: f64, max_terms: usize, amplitude: f64) -> impl Strategy<Value = Series> {
    prop::collection::vec(
        (-amplitude..amplitude, -amplitude..amplitude),
        1..=max_terms,
    )
    .prop_map(move |terms| Series {
        kappa: 2.0 * PI / length,
        terms,
    })
}

const L: f64 = 10.0;

fn grid() -> Grid1D {
    Grid1D::new(L, 128).unwrap()
}

proptest! {
    #[test]
    fn derivative_is_linear(f in series(L, 6, 1.0), g in series(L, 6, 1.0), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let ff = RealField::from_fn(grid(), |q| f.eval(q, 0)).unwrap();
        let gf = RealField::from_fn(grid(), |q| g.eval(q, 0)).unwrap();
        let combo = RealField::from_fn(grid(), |q| a * f.eval(q, 0) + b * g.eval(q, 0)).unwrap();
        for order in [1, 2] {
            let lhs = derivative(&combo, order).unwrap();
            let (df, dg) = (derivative(&ff, order).unwrap(), derivative(&gf, order).unwrap());
            for j in 0..128 {
                let rhs = a * df.values()[j] + b * dg.values()[j];
                prop_assert!((lhs.values()[j] - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn derivative_matches_closed_form(f in series(L, 8, 1.0)) {
        let field = RealField::from_fn(grid(), |q| f.eval(q, 0)).unwrap();
        for order in [1, 2] {
            let d = derivative(&field, order).unwrap();
            for j in 0..128 {
                prop_assert!((d.values()[j] - f.eval(grid().point(j), order)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn derivative_integrates_to_zero(f in series(L, 8, 2.0)) {
        let field = RealField::from_fn(grid(), |q| f.eval(q, 0)).unwrap();
        let d = derivative(&field, 1).unwrap();
        prop_assert!(integrate(&d).abs() < 1e-11);
    }

    #[test]
    fn polar_round_trip(u in series(L, 5, 0.4), phase in series(L, 3, 1.0), hbar in 0.5..2.0f64) {
        let g = grid();
        let a = RealField::from_fn(g, |q| u.eval(q, 0).exp()).unwrap();
        let s = RealField::from_fn(g, |q| hbar * phase.eval(q, 0)).unwrap();
        let state = WaveState::new(a.clone(), s.clone(), 0.0).unwrap();
        let back = to_polar(&from_polar(&state, hbar), hbar);
        prop_assert!(back.is_clean());
        let back = back.value;
        let offset = back.action().values()[0] - s.values()[0];
        let turns = offset / (2.0 * PI * hbar);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
        for j in 0..128 {
            prop_assert!((back.amplitude().values()[j] - a.values()[j]).abs() < 1e-13);
            prop_assert!((back.action().values()[j] - s.values()[j] - offset).abs() < 1e-9);
        }
    }

    #[test]
    fn quantum_potential_matches_log_amplitude_form(u in series(L, 4, 0.3), c in 0.01..100.0f64) {
        // With A = c·exp(u): V_qu = −(ħ²/2m)(u'' + u'²), independent of c.
        let consts = PhysicalConstants::default();
        let g = grid();
        let a = RealField::from_fn(g, |q| c * u.eval(q, 0).exp()).unwrap();
        let state = WaveState::new(a, RealField::zeros(g), 0.0).unwrap();
        let v = vqu(&state, &consts);
        prop_assert!(v.is_clean());
        for j in 0..128 {
            let q = g.point(j);
            let expected = -0.5 * (u.eval(q, 2) + u.eval(q, 1).powi(2));
            prop_assert!((v.value.values()[j] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn quantum_potential_ignores_the_action(u in series(L, 4, 0.3), phase in series(L, 4, 2.0)) {
        let consts = PhysicalConstants::default();
        let g = grid();
        let a = RealField::from_fn(g, |q| u.eval(q, 0).exp()).unwrap();
        let still = WaveState::new(a.clone(), RealField::zeros(g), 0.0).unwrap();
        let moving = WaveState::new(a, RealField::from_fn(g, |q| phase.eval(q, 0)).unwrap(), 0.0).unwrap();
        prop_assert_eq!(vqu(&still, &consts).value, vqu(&moving, &consts).value);
    }

    #[test]
    fn projected_noise_has_zero_mean(seed in any::<u64>(), member in 0u64..64, theta in 0.05..2.0f64) {
        let consts = PhysicalConstants::default();
        let spec = NoiseSpec { theta, seed, ..NoiseSpec::default() };
        let mut sampler = NoiseSampler::new(Grid1D::new(40.0, 128).unwrap(), spec, &consts, member).unwrap();
        let eta = sampler.sample(0.0, 0.01).unwrap();
        let scale = eta.values().max_abs();
        prop_assert!(integrate(eta.values()).abs() < 1e-12 * scale * 40.0);
    }

    #[test]
    fn config_text_round_trips(
        length in 5.0..80.0f64,
        points in prop::sample::select(vec![32usize, 64, 100, 128]),
        potential in 0usize..3,
        omega in 0.1..3.0f64,
        sigma in 0.3..3.0f64,
        center in -1.0..1.0f64,
        theta in prop::sample::select(vec![0.0, 0.01, 0.1]),
        seed in any::<u64>(),
        steps in 0usize..1000,
        ensemble in 1usize..40,
        both in any::<bool>(),
    ) {
        let g = Grid1D::new(length, points).unwrap();
        let mut c = SimConfig::new(g);
        c.potential = match potential {
            0 => PotentialSpec::Free,
            1 => PotentialSpec::Harmonic { omega },
            _ => PotentialSpec::PowerLaw { strength: omega, exponent: 1.5 },
        };
        c.initial = InitialState::Gaussian { sigma, center, momentum: -center };
        c.noise.theta = theta;
        c.noise.seed = seed;
        c.noise.zero_mean_projection = !both;
        c.steps = steps;
        c.output_every = 1 + steps / 7;
        c.ensemble = ensemble;
        c.formulation = if both { Formulation::Both } else { Formulation::Schrodinger };
        c.dt *= 0.37;
        if theta > 0.0 && c.validate().is_err() {
            c.noise.theta = 0.0;
        }
        prop_assume!(c.validate().is_ok());
        let text = c.to_text();
        let parsed = parse_config(&text).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(parsed.to_text(), text);
    }
}
