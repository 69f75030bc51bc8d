use pnp_core::diagnostics::{dissipation_rate, free_energy, tau_star, total_mass, EnergyCounting};
use pnp_core::grid::{mean, CellField, GridSpec};
use pnp_core::mobility::MeanKind;
use pnp_core::oracle::{dense_step, random_neutral_pair, random_smooth_potential};
use pnp_core::presets::monovalent_pair;
use pnp_core::transport::{charge_density, initial_state, step, SchemeConfig, State};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_kind() -> impl Strategy<Value = MeanKind> {
    prop::sample::select(MeanKind::ALL.to_vec())
}

fn random_state(seed: u64, dim: usize, n: usize, amp: f64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GridSpec::unit(dim, n).unwrap();
    State {
        psi: random_smooth_potential(&mut rng, &spec, amp),
        conc: random_neutral_pair(&mut rng, &spec, 0.01, 2.0),
        time: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_conserves_mass_and_positivity(
        seed in any::<u64>(),
        dim in 1usize..=3,
        kind in mean_kind(),
        log_dt in -4.0f64..0.0,
        amp in 0.0f64..6.0,
    ) {
        let n = [16, 8, 4][dim - 1];
        let state = random_state(seed, dim, n, amp);
        let cfg = SchemeConfig::new(0.1, 10f64.powf(log_dt), kind, monovalent_pair()).unwrap();
        let next = step(&state, &cfg, None).unwrap().state;
        for (a, b) in state.conc.iter().zip(&next.conc) {
            let (ma, mb) = (total_mass(a), total_mass(b));
            prop_assert!((ma - mb).abs() <= 1e-13 * ma);
            prop_assert!(b.min() > 0.0);
        }
        prop_assert!(mean(&next.psi).abs() <= 1e-13);
        prop_assert!((next.time - cfg.dt).abs() <= 1e-15);
    }

    #[test]
    fn matrix_free_step_matches_dense(
        seed in any::<u64>(),
        dim in 1usize..=3,
        kind in mean_kind(),
        log_dt in -3.0f64..-1.0,
    ) {
        let n = [8, 8, 4][dim - 1];
        let state = random_state(seed, dim, n, 2.0);
        let mut cfg = SchemeConfig::new(0.5, 10f64.powf(log_dt), kind, monovalent_pair()).unwrap();
        cfg.transport_tol = 1e-13;
        cfg.poisson.tol = 1e-13;
        let fast = step(&state, &cfg, None).unwrap().state;
        let dense = dense_step(&state, &cfg, None).unwrap();
        for (a, b) in fast.conc.iter().zip(&dense.conc).chain([(&fast.psi, &dense.psi)]) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn dissipation_inequality_below_tau_star(
        seed in any::<u64>(),
        kind in mean_kind(),
        log_kappa in -1.0f64..1.0,
    ) {
        // the potential must be the Poisson solution of the concentrations
        let cfg = SchemeConfig::new(10f64.powf(log_kappa), 1e-5, kind, monovalent_pair()).unwrap();
        let state = initial_state(random_state(seed, 2, 8, 0.0).conc, &cfg, 0.0).unwrap();
        let next = step(&state, &cfg, None).unwrap().state;
        let tau = tau_star(&next.conc, &state.psi, &cfg.species, cfg.kappa);
        prop_assume!(cfg.dt <= tau);
        let rho = CellField::zeros(*state.spec());
        let f0 = free_energy(&state, &cfg.species, &rho, EnergyCounting::Once).unwrap();
        let f1 = free_energy(&next, &cfg.species, &rho, EnergyCounting::Once).unwrap();
        let i_n = dissipation_rate(&next.conc, &state.psi, &cfg.species, kind).unwrap();
        prop_assert!(i_n >= 0.0);
        prop_assert!(f1 - f0 <= -0.5 * cfg.dt * i_n + 1e-10 * (1.0 + f0.abs()));
    }
}

#[test]
fn species_valences_enter_charge_density() {
    let spec = GridSpec::unit(2, 4).unwrap();
    let cfg = SchemeConfig::new(1.0, 0.1, MeanKind::Harmonic, monovalent_pair()).unwrap();
    let conc = vec![CellField::constant(spec, 0.3), CellField::constant(spec, 0.1)];
    let rho = charge_density(&conc, &cfg, 0.0).unwrap();
    assert!(rho.values().iter().all(|v| (v - 0.2).abs() < 1e-15));
}

#[test]
fn uniform_neutral_state_is_steady() {
    let spec = GridSpec::unit(2, 10).unwrap();
    for kind in MeanKind::ALL {
        let cfg = SchemeConfig::new(1.0, 0.05, kind, monovalent_pair()).unwrap();
        let mut state = State {
            psi: CellField::zeros(spec),
            conc: vec![CellField::constant(spec, 0.1); 2],
            time: 0.0,
        };
        for _ in 0..5 {
            state = step(&state, &cfg, None).unwrap().state;
        }
        for c in &state.conc {
            assert!(c.values().iter().all(|&v| (v - 0.1).abs() < 1e-15));
        }
        assert!(state.psi.values().iter().all(|&v| v.abs() < 1e-15));
    }
}
