use gfx_core::homogeneous::{extinction_stats, iterate_offspring_pgf, Simulator};
use gfx_core::rng;
use gfx_core::selfsimilar::{check_inclusion, coupled_truncations, lamperti, Resolution};
use gfx_core::stats::MeanAcc;
use gfx_core::{Caps, Characteristics, JumpMeasure};

const LN2: f64 = std::f64::consts::LN_2;

fn halving(k: f64, rate: f64, b: f64, alpha: f64) -> Characteristics {
    let births = JumpMeasure::atoms(vec![(-LN2, rate)]).unwrap();
    Characteristics::new(k, 0.0, b, births, JumpMeasure::zero(), alpha).unwrap()
}

fn config_d() -> Characteristics {
    Characteristics::new(0.0, 1.0, 0.0, JumpMeasure::power(1.0, 0.5, 1.0).unwrap(), JumpMeasure::zero(), 0.0).unwrap()
}

#[test]
fn early_generations_follow_the_offspring_law() {
    let sim = Simulator::new(&halving(1.0, 2.0, 0.0, 0.0), Caps::default()).unwrap();
    let est = extinction_stats(&sim, 2, 40_000, 7).unwrap();
    for (e, target) in est.iter().zip([1.0 / 3.0, 11.0 / 27.0]) {
        assert!(e.z(target).abs() <= 3.0, "{e:?} vs {target}");
    }
    let pgf = iterate_offspring_pgf(1.0, 2.0, 2);
    assert!((pgf[0] - 1.0 / 3.0).abs() < 1e-15 && (pgf[1] - 11.0 / 27.0).abs() < 1e-15);
}

#[test]
fn subcritical_lines_die_out() {
    let sim = Simulator::new(&halving(2.0, 1.0, 0.0, 0.0), Caps::default()).unwrap();
    let est = extinction_stats(&sim, 60, 2_000, 8).unwrap();
    assert_eq!(est[59].mean, 1.0);
}

#[test]
fn additive_martingale_has_unit_mean() {
    let ch = halving(0.0, 1.0, 0.0, 0.0);
    let sim = Simulator::new(&ch, Caps::default()).unwrap();
    for q in [0.5, 2.0] {
        let kappa = 2f64.powf(1.0 - q) - 1.0 + q / 2.0;
        let mut acc = MeanAcc::new();
        for r in 0..20_000 {
            let pop = sim.run(1.0, 1.0, rng::derive(9, rng::domain::REPLICA, r)).unwrap();
            acc.push(pop.additive_martingale(1.0, q, kappa).unwrap());
        }
        let z = acc.summary().z(1.0);
        assert!(z.abs() <= 3.0, "q={q}: mean {} z {z}", acc.mean());
    }
}

#[test]
fn truncation_levels_are_nested() {
    let ch = config_d();
    let times = [0.25, 0.5, 1.0];
    let res = Resolution { path_eps: 1e-4, step: 1e-3 };
    for r in 0..30 {
        let pops = coupled_truncations(&ch, &[0.2, 0.1, 0.05], 1.0, 1.0, Caps::default(), res, 100 + r).unwrap();
        assert_eq!(check_inclusion(&pops, &times), None, "replica {r}");
    }
}

#[test]
fn lamperti_of_pure_drift_is_linear() {
    // With χ = e^{-s} and α = -1 the clock solves t = 1 - e^{-τ}, so the
    // self-similar mass is 1 - t. Births are negligibly rare.
    let ch = halving(0.0, 1e-12, -1.0, -1.0);
    let sim = Simulator::new(&ch, Caps::default()).unwrap();
    let pop = sim.run(1.0, 30.0, 1).unwrap();
    let c = lamperti(pop, -1.0);
    for t in [0.1, 0.5, 0.9] {
        let m = c.mass_at(0, t).unwrap();
        assert!((m - (1.0 - t)).abs() < 1e-6, "t={t}: {m}");
    }
}
