//! Lamperti time-change of homogeneous populations, interval counts and the
//! truncation coupling.
//!
//! The log-mass is piecewise linear between knots, so the clock
//! `∫ exp(-α·ξ)` is integrated exactly on each piece and inverted in closed
//! form. Clock values are absolute: a child starts from its parent's final
//! clock value, and a merged chain accumulates the same pieces in the same
//! order, which keeps coupled levels bit-identical.

use serde::Serialize;

use crate::cumulant::Characteristics;
use crate::error::{domain, Error, Result};
use crate::homogeneous::{Caps, DeathCause, Label, Simulator, TreePopulation};

/// `∫_0^h exp(-α(x0 + (x1-x0)s/h)) ds`.
pub fn segment_clock(alpha: f64, x0: f64, x1: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let base = h * (-alpha * x0).exp();
    let z = -alpha * (x1 - x0);
    if z == 0.0 {
        base
    } else if z.abs() < 1e-8 {
        base * (1.0 + 0.5 * z)
    } else {
        base * z.exp_m1() / z
    }
}

/// Solves `segment_clock(α, x0, x(τ), τ) = delta` for the log-mass `x(τ)`
/// on a piece with slope `g`.
pub(crate) fn invert_segment(alpha: f64, x0: f64, g: f64, delta: f64) -> f64 {
    let ag = alpha * g;
    if ag == 0.0 {
        return x0 + g * delta * (alpha * x0).exp();
    }
    // e^{-αgτ} = 1 - αgΔe^{αx0}
    let arg = (-ag * delta * (alpha * x0).exp()).max(-1.0 + f64::EPSILON);
    let tau = -arg.ln_1p() / ag;
    x0 + g * tau
}

#[derive(Clone, Debug)]
pub struct ParticleClock {
    /// Clock value at every knot of the particle's path.
    pub knots: Vec<f64>,
}

impl ParticleClock {
    pub fn birth(&self) -> f64 {
        self.knots[0]
    }

    pub fn death(&self) -> f64 {
        *self.knots.last().unwrap()
    }
}

/// A homogeneous population together with its Lamperti clocks.
#[derive(Clone, Debug)]
pub struct ClockedPopulation {
    pub pop: TreePopulation,
    pub alpha: f64,
    pub clocks: Vec<ParticleClock>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfSimilarSnapshot {
    pub t: f64,
    pub entries: Vec<(String, f64)>,
    /// Particles whose path was cut by the horizon before `t`: they may be
    /// alive at `t` but cannot be resolved.
    pub censored: usize,
    pub capped: bool,
}

/// Clocks every particle; the root starts at X-time `origin`.
pub fn lamperti_from(pop: TreePopulation, alpha: f64, origin: f64) -> ClockedPopulation {
    let mut clocks: Vec<ParticleClock> = Vec::with_capacity(pop.particles.len());
    // particles are stored in birth order, so parents precede children
    for p in &pop.particles {
        let start = match p.parent {
            Some(i) => clocks[i].death(),
            None => origin,
        };
        let (ts, xs) = (&p.path.times, &p.path.values);
        let mut knots = Vec::with_capacity(ts.len());
        let mut a = start;
        knots.push(a);
        for i in 1..ts.len() {
            a += segment_clock(alpha, xs[i - 1], xs[i], ts[i] - ts[i - 1]);
            knots.push(a);
        }
        clocks.push(ParticleClock { knots });
    }
    ClockedPopulation { pop, alpha, clocks }
}

/// Clocks every particle starting from the population's own start time.
pub fn lamperti(pop: TreePopulation, alpha: f64) -> ClockedPopulation {
    let origin = pop.start_time;
    lamperti_from(pop, alpha, origin)
}

impl ClockedPopulation {
    /// `X_u(t)` when `b_u ≤ t < d_u`.
    pub fn mass_at(&self, i: usize, t: f64) -> Option<f64> {
        let c = &self.clocks[i].knots;
        if !(c[0] <= t && t < *c.last().unwrap()) {
            return None;
        }
        let path = &self.pop.particles[i].path;
        let j = c.partition_point(|&a| a <= t) - 1;
        let (x0, x1) = (path.values[j], path.values[j + 1]);
        let h = path.times[j + 1] - path.times[j];
        let g = (x1 - x0) / h;
        Some(invert_segment(self.alpha, x0, g, t - c[j]).exp())
    }

    /// Homogeneous time `τ_u(t)` of particle `i` at X-time `t`.
    pub fn chi_time(&self, i: usize, t: f64) -> Option<f64> {
        let c = &self.clocks[i].knots;
        if !(c[0] <= t && t < *c.last().unwrap()) {
            return None;
        }
        let path = &self.pop.particles[i].path;
        let j = c.partition_point(|&a| a <= t) - 1;
        let (x0, x1) = (path.values[j], path.values[j + 1]);
        let h = path.times[j + 1] - path.times[j];
        let g = (x1 - x0) / h;
        let x = invert_segment(self.alpha, x0, g, t - c[j]);
        let tau = if g == 0.0 { (t - c[j]) * (self.alpha * x0).exp() } else { (x - x0) / g };
        Some(path.times[j] + tau.clamp(0.0, h))
    }

    /// Clock value at homogeneous time `s` along particle `i`.
    pub fn clock_at(&self, i: usize, s: f64) -> Option<f64> {
        let path = &self.pop.particles[i].path;
        if s < path.start_time() || s > path.end_time() {
            return None;
        }
        let c = &self.clocks[i].knots;
        let j = path.times.partition_point(|&r| r <= s) - 1;
        if j + 1 >= path.times.len() {
            return Some(c[j]);
        }
        let x = path.log_mass_at(s)?;
        Some(c[j] + segment_clock(self.alpha, path.values[j], x, s - path.times[j]))
    }

    fn censored_at(&self, t: f64) -> usize {
        self.pop
            .particles
            .iter()
            .zip(&self.clocks)
            .filter(|(p, c)| p.cause == DeathCause::Horizon && c.death() <= t)
            .count()
    }

    pub fn snapshot(&self, t: f64) -> SelfSimilarSnapshot {
        let entries = (0..self.clocks.len())
            .filter_map(|i| self.mass_at(i, t).map(|m| (self.pop.particles[i].label.to_string(), m)))
            .collect();
        SelfSimilarSnapshot { t, entries, censored: self.censored_at(t), capped: self.pop.capped.is_some() }
    }

    /// Masses alive at X-time `t`, sorted.
    pub fn masses(&self, t: f64) -> Vec<f64> {
        let mut m: Vec<f64> = (0..self.clocks.len()).filter_map(|i| self.mass_at(i, t)).collect();
        m.sort_by(f64::total_cmp);
        m
    }

    /// Number of particles alive at `t` with mass in `(a, a_prime)`, and
    /// whether unresolved particles could change it.
    pub fn interval_count(&self, t: f64, a: f64, a_prime: f64) -> Result<(usize, bool)> {
        if !(0.0 < a && a < a_prime) {
            return Err(domain(format!("need 0 < a < a', got ({a}, {a_prime})")));
        }
        let n = (0..self.clocks.len())
            .filter_map(|i| self.mass_at(i, t))
            .filter(|&m| a < m && m < a_prime)
            .count();
        Ok((n, self.censored_at(t) > 0 || self.pop.capped.is_some()))
    }

    /// Whether the homogeneous process had no particle left at its horizon.
    pub fn sudden_death_indicator(&self) -> bool {
        self.pop.extinct()
    }

    pub fn label(&self, i: usize) -> Label {
        self.pop.particles[i].label
    }
}

/// Whether the sorted multiset `small` is contained in the sorted multiset
/// `big`, comparing values exactly.
pub fn is_submultiset(small: &[f64], big: &[f64]) -> bool {
    let mut j = 0;
    for &x in small {
        while j < big.len() && big[j].total_cmp(&x).is_lt() {
            j += 1;
        }
        if j == big.len() || big[j].to_bits() != x.to_bits() {
            return false;
        }
        j += 1;
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolution {
    pub path_eps: f64,
    pub step: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { path_eps: crate::levy_path::DEFAULT_PATH_EPS, step: crate::levy_path::DEFAULT_STEP }
    }
}

/// Simulates at the finest level and derives every coarser level by
/// reclassifying small splits; returns one clocked population per level, in
/// the given (strictly decreasing) order.
pub fn coupled_truncations(
    ch: &Characteristics,
    eps_levels: &[f64],
    x0: f64,
    horizon: f64,
    caps: Caps,
    resolution: Resolution,
    seed: u64,
) -> Result<Vec<ClockedPopulation>> {
    if eps_levels.is_empty() || eps_levels.iter().any(|&e| !(e > 0.0)) {
        return Err(domain("eps levels must be positive and non-empty".to_string()));
    }
    if eps_levels.windows(2).any(|w| w[0] <= w[1]) {
        return Err(domain("eps levels must be strictly decreasing".to_string()));
    }
    let finest = *eps_levels.last().unwrap();
    let sim = Simulator::new(&ch.truncated(finest)?, caps)?.with_resolution(resolution.path_eps, resolution.step)?;
    let fine = sim.run(x0, horizon, seed)?;
    Ok(eps_levels
        .iter()
        .map(|&eps| {
            let pop = if eps == finest { fine.clone() } else { fine.coarsen(eps) };
            lamperti(pop, ch.alpha)
        })
        .collect())
}

/// Checks the coupling inclusion at every query time; returns the first
/// violating `(level index, t)` if any.
pub fn check_inclusion(levels: &[ClockedPopulation], times: &[f64]) -> Option<(usize, f64)> {
    for &t in times {
        let snaps: Vec<Vec<f64>> = levels.iter().map(|l| l.masses(t)).collect();
        for i in 1..snaps.len() {
            if !is_submultiset(&snaps[i - 1], &snaps[i]) {
                return Some((i, t));
            }
        }
    }
    None
}

/// Largest interval count over a set of probe times.
pub fn max_probe_count(c: &ClockedPopulation, probes: &[f64], a: f64, a_prime: f64) -> Result<(usize, f64, bool)> {
    let mut best = (0usize, f64::NAN, false);
    for &t in probes {
        let (n, cens) = c.interval_count(t, a, a_prime)?;
        if n > best.0 || best.1.is_nan() {
            best = (n, t, cens);
        }
    }
    Ok(best)
}

/// For each χ-horizon budget, the best interval count over the probe grid of
/// one replica; budgets reuse the same particle streams, so larger budgets
/// extend smaller ones.
#[allow(clippy::too_many_arguments)]
pub fn budget_counts(
    sim: &Simulator,
    alpha: f64,
    x0: f64,
    budgets: &[f64],
    probes: &[f64],
    a: f64,
    a_prime: f64,
    seed: u64,
) -> Result<Vec<(usize, bool)>> {
    budgets
        .iter()
        .map(|&h| {
            let pop = sim.run(x0, h, seed)?;
            if pop.capped.is_some() {
                return Err(Error::Precondition(format!("population capped at chi-horizon {h}")));
            }
            let c = lamperti(pop, alpha);
            let (n, _, cens) = max_probe_count(&c, probes, a, a_prime)?;
            Ok((n, cens))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_measure::JumpMeasure;
    use crate::levy_path::{EndCause, PathRecord};

    const LN2: f64 = std::f64::consts::LN_2;

    fn single(values: Vec<f64>, times: Vec<f64>, end: EndCause) -> TreePopulation {
        use crate::homogeneous::{Counters, HomogeneousParticle};
        let horizon = *times.last().unwrap();
        let path = PathRecord { times, values, events: vec![], kill_time: None, split: None, end, horizon };
        TreePopulation {
            particles: vec![HomogeneousParticle {
                label: Label::ROOT,
                parent: None,
                children: None,
                birth: 0.0,
                death: horizon,
                initial_mass: path.values[0].exp(),
                path,
                cause: if end == EndCause::Killed { DeathCause::Killed } else { DeathCause::Horizon },
            }],
            x0: 1.0,
            start_time: 0.0,
            horizon,
            capped: None,
            complete_until: horizon,
            counters: Counters::default(),
        }
    }

    #[test]
    fn constant_mass_clock() {
        let c: f64 = 3.0;
        for alpha in [-1.0, 0.5, 2.0] {
            let cp = lamperti(single(vec![c.ln(), c.ln()], vec![0.0, 2.0], EndCause::Killed), alpha);
            assert!((cp.clocks[0].death() - 2.0 * c.powf(-alpha)).abs() < 1e-12);
            let t = 0.7 * cp.clocks[0].death();
            assert!((cp.chi_time(0, t).unwrap() - t * c.powf(alpha)).abs() < 1e-12);
            assert!((cp.mass_at(0, t).unwrap() - c).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_growth_alpha_minus_one() {
        // χ(t) = e^t: A(s) = e^s - 1, X(t) = 1 + t
        let cp = lamperti(single(vec![0.0, 5.0], vec![0.0, 5.0], EndCause::Horizon), -1.0);
        assert!((cp.clocks[0].death() - 5f64.exp_m1()).abs() < 1e-10);
        for t in [0.0, 0.3, 1.0, 10.0, 100.0] {
            assert!((cp.mass_at(0, t).unwrap() - (1.0 + t)).abs() < 1e-12 * (1.0 + t));
            assert!((cp.chi_time(0, t).unwrap() - t.ln_1p()).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_decay_finite_lifetime() {
        // χ(t) = e^{-t}: A(∞) = 1 and X(t) = 1 - t
        let h = 40.0;
        let cp = lamperti(single(vec![0.0, -h], vec![0.0, h], EndCause::Horizon), -1.0);
        assert!((cp.clocks[0].death() - 1.0).abs() < 1e-15);
        for t in [0.0, 0.25, 0.9, 0.999] {
            assert!((cp.mass_at(0, t).unwrap() - (1.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_is_identity() {
        let ch = Characteristics::new(0.2, 0.5, 0.0, JumpMeasure::atoms(vec![(-0.5, 1.0)]).unwrap(), JumpMeasure::zero(), 0.0)
            .unwrap();
        let sim = Simulator::new(&ch, Caps::default()).unwrap();
        let pop = sim.run(2.0, 3.0, 4).unwrap();
        let cp = lamperti(pop.clone(), 0.0);
        for (p, c) in pop.particles.iter().zip(&cp.clocks) {
            assert!((c.birth() - p.birth).abs() < 1e-12);
            assert!((c.death() - p.death).abs() < 1e-12);
        }
        for t in [0.0, 1.1, 2.5] {
            let mut a: Vec<f64> = pop.snapshot(t).unwrap().iter().map(|x| x.1).collect();
            a.sort_by(f64::total_cmp);
            let b = cp.masses(t);
            assert_eq!(a.len(), b.len());
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12 * x));
        }
    }

    #[test]
    fn clock_inversion_round_trip() {
        let ch = Characteristics::new(0.0, 1.0, -0.3, JumpMeasure::atoms(vec![(-0.4, 1.5)]).unwrap(), JumpMeasure::zero(), -1.0)
            .unwrap();
        let sim = Simulator::new(&ch, Caps::default()).unwrap();
        let cp = lamperti(sim.run(1.0, 2.0, 8).unwrap(), -1.0);
        for i in 0..cp.clocks.len().min(20) {
            let (b, d) = (cp.clocks[i].birth(), cp.clocks[i].death());
            for k in 0..100 {
                let t = b + (d - b) * (k as f64 + 0.5) / 100.0;
                let s = cp.chi_time(i, t).unwrap();
                let back = cp.clock_at(i, s).unwrap();
                assert!((back - t).abs() < 1e-8, "{back} vs {t}");
            }
        }
    }

    #[test]
    fn interval_count_basics() {
        let ch = Characteristics::new(0.0, 0.0, 0.0, JumpMeasure::atoms(vec![(-LN2, 1.0)]).unwrap(), JumpMeasure::zero(), -1.0)
            .unwrap();
        let sim = Simulator::new(&ch, Caps::default()).unwrap();
        let cp = lamperti(sim.run(1.0, 2.0, 1).unwrap(), -1.0);
        assert_eq!(cp.interval_count(0.0, 0.5, 2.0).unwrap().0, 1);
        assert_eq!(cp.interval_count(0.0, 2.0, 3.0).unwrap().0, 0);
        assert!(cp.interval_count(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn hand_enumerated_two_particles() {
        // Config A, α = -1, one split at χ-time s, horizon h: the root has
        // X(t) = 1 + t/2 up to A = 2(e^{s/2} - 1); each child then starts
        // at mass m/2 with m = e^{s/2} and grows as m/2 + t'/2.
        let ch = Characteristics::new(0.0, 0.0, 0.0, JumpMeasure::atoms(vec![(-LN2, 1.0)]).unwrap(), JumpMeasure::zero(), -1.0)
            .unwrap();
        let sim = Simulator::new(&ch, Caps::default()).unwrap();
        let pop = (0..).map(|s| sim.run(1.0, 1.5, s).unwrap()).find(|p| p.particles.len() == 3).unwrap();
        let s = pop.particles[0].death;
        let cp = lamperti(pop, -1.0);
        let m = (s / 2.0).exp();
        let split_x = 2.0 * (m - 1.0);
        assert!((cp.clocks[0].death() - split_x).abs() < 1e-12);
        let t = 0.5 * (split_x + cp.clocks[1].death());
        let expected = m / 2.0 + (t - split_x) / 2.0;
        let masses = cp.masses(t);
        assert_eq!(masses.len(), 2);
        assert!(masses.iter().all(|x| (x - expected).abs() < 1e-12));
        let (n, _) = cp.interval_count(t, 0.5, 2.0).unwrap();
        assert_eq!(n, if expected > 0.5 && expected < 2.0 { 2 } else { 0 });
    }

    #[test]
    fn submultiset() {
        assert!(is_submultiset(&[1.0, 2.0], &[0.5, 1.0, 2.0, 2.0]));
        assert!(is_submultiset(&[2.0, 2.0], &[1.0, 2.0, 2.0]));
        assert!(!is_submultiset(&[2.0, 2.0], &[1.0, 2.0]));
        assert!(is_submultiset(&[], &[]));
    }

    #[test]
    fn atomic_levels_identical() {
        let ch = Characteristics::new(0.0, 0.0, 0.0, JumpMeasure::atoms(vec![(-LN2, 1.0)]).unwrap(), JumpMeasure::zero(), -1.0)
            .unwrap();
        let levels = coupled_truncations(&ch, &[0.5, 0.3, 0.1], 1.0, 3.0, Caps::default(), Resolution::default(), 2).unwrap();
        for t in [0.0, 0.5, 1.0, 2.0] {
            assert_eq!(levels[0].masses(t), levels[2].masses(t));
        }
    }

    #[test]
    fn coupling_inclusion_power_density() {
        let ch = Characteristics::new(0.0, 1.0, 0.0, JumpMeasure::power(1.0, 0.5, 1.0).unwrap(), JumpMeasure::zero(), -1.0)
            .unwrap();
        for seed in 0..5 {
            let levels = coupled_truncations(
                &ch,
                &[0.2, 0.1, 0.05],
                1.0,
                0.6,
                Caps::default(),
                Resolution { path_eps: 1e-3, step: 1e-2 },
                seed,
            )
            .unwrap();
            let times: Vec<f64> = (0..12).map(|i| 0.05 * i as f64).collect();
            assert_eq!(check_inclusion(&levels, &times), None);
            let n: Vec<usize> = levels.iter().map(|l| l.pop.particles.len()).collect();
            assert!(n.windows(2).all(|w| w[0] <= w[1]), "{n:?}");
        }
    }
}
