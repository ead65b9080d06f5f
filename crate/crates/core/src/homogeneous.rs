//! The homogeneous growth-fragmentation on the binary tree.
//!
//! Particles are simulated in order of birth time. Each particle owns a
//! random stream keyed by its label, so its path does not depend on the
//! order in which the tree is explored.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cumulant::Characteristics;
use crate::error::{domain, precondition, Error, Result};
use crate::jump_measure::JumpMeasure;
use crate::levy_path::{sample_path, Births, EndCause, JumpEvent, Origin, PathRecord, PathSpec};
use crate::rng;
use crate::stats::{Estimate, MeanAcc};

/// Largest depth representable by [`Label`].
pub const MAX_DEPTH: u8 = 127;

/// A word over `{0, 1}`; the root is the empty word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    depth: u8,
    bits: u128,
}

impl Label {
    pub const ROOT: Label = Label { depth: 0, bits: 0 };

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn child(&self, i: u8) -> Label {
        assert!(self.depth < MAX_DEPTH, "label depth overflow");
        Label { depth: self.depth + 1, bits: (self.bits << 1) | (i & 1) as u128 }
    }

    pub fn parent(&self) -> Option<Label> {
        (self.depth > 0).then(|| Label { depth: self.depth - 1, bits: self.bits >> 1 })
    }

    pub fn last(&self) -> Option<u8> {
        (self.depth > 0).then_some((self.bits & 1) as u8)
    }

    /// Injective key `1·u` used to derive random streams.
    pub fn key(&self) -> u128 {
        (1u128 << self.depth) | self.bits
    }

    pub fn is_leftmost(&self) -> bool {
        self.bits == 0
    }
}

impl Ord for Label {
    /// Lexicographic order on words.
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.bits << (MAX_DEPTH - self.depth);
        let b = other.bits << (MAX_DEPTH - other.depth);
        a.cmp(&b).then(self.depth.cmp(&other.depth))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u")?;
        for i in (0..self.depth).rev() {
            write!(f, "{}", (self.bits >> i) & 1)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DeathCause {
    Split { mark: f64 },
    Killed,
    Horizon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousParticle {
    pub label: Label,
    pub parent: Option<usize>,
    /// Indices of `u0`, `u1` once materialised.
    pub children: Option<[usize; 2]>,
    pub birth: f64,
    /// End of the path: split or kill time, or the horizon.
    pub death: f64,
    pub initial_mass: f64,
    pub path: PathRecord,
    pub cause: DeathCause,
}

impl HomogeneousParticle {
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && (t < self.death || (self.cause == DeathCause::Horizon && t == self.death))
    }

    pub fn mass_at(&self, t: f64) -> Option<f64> {
        if self.alive_at(t) {
            self.path.log_mass_at(t).map(f64::exp)
        } else {
            None
        }
    }

    pub fn generation(&self) -> u8 {
        self.label.depth()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Caps {
    pub max_particles: usize,
    pub max_generation: u8,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_particles: 1_000_000, max_generation: 60 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CapKind {
    Particles,
    Generation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub splits: usize,
    pub kills: usize,
    pub max_generation: u8,
    pub peak_alive: usize,
}

#[derive(Clone, Debug)]
pub struct TreePopulation {
    pub particles: Vec<HomogeneousParticle>,
    pub x0: f64,
    pub start_time: f64,
    pub horizon: f64,
    pub capped: Option<CapKind>,
    /// The population is exact on `[start_time, complete_until)`.
    pub complete_until: f64,
    pub counters: Counters,
}

/// Child masses `m·e^J` and `m·(1-e^J)` of a particle with log-mass `log_m`.
pub fn split_masses(log_m: f64, mark: f64) -> (f64, f64) {
    let m = log_m.exp();
    (m * mark.exp(), m * -mark.exp_m1())
}

struct Pending {
    birth: f64,
    label: Label,
    parent: Option<usize>,
    mass: f64,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    /// Reversed so that the heap pops the earliest birth, then the smallest label.
    fn cmp(&self, o: &Self) -> Ordering {
        o.birth.total_cmp(&self.birth).then_with(|| o.label.cmp(&self.label))
    }
}

/// Simulates homogeneous populations for fixed characteristics with finite
/// birth measure.
#[derive(Clone, Debug)]
pub struct Simulator {
    births: JumpMeasure,
    spec: PathSpec,
    pub caps: Caps,
}

impl Simulator {
    pub fn new(ch: &Characteristics, caps: Caps) -> Result<Self> {
        let mass = ch.lambda1.total_mass();
        if !mass.is_finite() {
            return Err(precondition("birth measure has infinite mass; truncate it first".to_string()));
        }
        if !(mass > 0.0) {
            return Err(precondition("birth measure is zero (degenerate case)".to_string()));
        }
        if caps.max_generation > MAX_DEPTH || caps.max_particles == 0 {
            return Err(domain(format!("caps out of range: {caps:?}")));
        }
        Ok(Simulator { births: ch.lambda1.clone(), spec: PathSpec::particle(ch)?, caps })
    }

    pub fn with_resolution(mut self, path_eps: f64, step: f64) -> Result<Self> {
        self.spec = self.spec.resolution(path_eps, step)?;
        Ok(self)
    }

    pub fn spec(&self) -> &PathSpec {
        &self.spec
    }

    pub fn births(&self) -> &JumpMeasure {
        &self.births
    }

    /// Path of the particle `label` born at `start_time` with `log_mass`.
    pub fn sample_particle(&self, label: Label, start_time: f64, log_mass: f64, horizon: f64, seed: u64) -> Result<PathRecord> {
        let mut r = rng::stream(seed, rng::domain::PARTICLE, label.key());
        sample_path(&self.spec, &Births::Split(&self.births), start_time, log_mass, horizon, &mut r)
    }

    pub fn run(&self, x0: f64, horizon: f64, seed: u64) -> Result<TreePopulation> {
        self.run_from(x0, 0.0, horizon, seed)
    }

    /// Starts one particle of mass `x0` at time `start_time`.
    pub fn run_from(&self, x0: f64, start_time: f64, horizon: f64, seed: u64) -> Result<TreePopulation> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(domain(format!("initial mass {x0} must be positive")));
        }
        if !(horizon > start_time) {
            return Err(domain(format!("horizon {horizon} must exceed start {start_time}")));
        }
        let mut particles: Vec<HomogeneousParticle> = Vec::new();
        let mut queue = BinaryHeap::new();
        queue.push(Pending { birth: start_time, label: Label::ROOT, parent: None, mass: x0 });
        let mut capped = None;
        let mut complete_until = horizon;
        let mut counters = Counters::default();

        while let Some(p) = queue.pop() {
            if particles.len() >= self.caps.max_particles {
                capped = Some(CapKind::Particles);
                complete_until = complete_until.min(p.birth);
                break;
            }
            let path = self.sample_particle(p.label, p.birth, p.mass.ln(), horizon, seed)?;
            let idx = particles.len();
            let cause = match (path.end, path.split) {
                (EndCause::Split, Some((_, mark))) => DeathCause::Split { mark },
                (EndCause::Killed, _) => DeathCause::Killed,
                _ => DeathCause::Horizon,
            };
            counters.max_generation = counters.max_generation.max(p.label.depth());
            let death = path.end_time();
            if let DeathCause::Split { mark } = cause {
                counters.splits += 1;
                if p.label.depth() >= self.caps.max_generation {
                    capped.get_or_insert(CapKind::Generation);
                    complete_until = complete_until.min(death);
                } else {
                    let (m0, m1) = split_masses(path.end_log_mass(), mark);
                    for (i, m) in [(0u8, m0), (1u8, m1)] {
                        queue.push(Pending { birth: death, label: p.label.child(i), parent: Some(idx), mass: m });
                    }
                }
            } else if cause == DeathCause::Killed {
                counters.kills += 1;
            }
            if let Some(parent) = p.parent {
                let slot = p.label.last().unwrap() as usize;
                let children = particles[parent].children.get_or_insert([usize::MAX; 2]);
                children[slot] = idx;
            }
            particles.push(HomogeneousParticle {
                label: p.label,
                parent: p.parent,
                children: None,
                birth: p.birth,
                death,
                initial_mass: p.mass,
                path,
                cause,
            });
        }
        // a split whose second child was never materialised keeps a
        // placeholder; drop it so `children` only holds complete pairs
        for p in particles.iter_mut() {
            if matches!(p.children, Some(c) if c.contains(&usize::MAX)) {
                p.children = None;
            }
        }
        counters.peak_alive = peak_alive(&particles);
        Ok(TreePopulation { particles, x0, start_time, horizon, capped, complete_until, counters })
    }
}

fn peak_alive(particles: &[HomogeneousParticle]) -> usize {
    // births sort before deaths at equal times: a split replaces one by two
    let mut ev: Vec<(f64, i8)> = Vec::with_capacity(2 * particles.len());
    for p in particles {
        ev.push((p.birth, 1));
        if p.cause != DeathCause::Horizon {
            ev.push((p.death, -1));
        }
    }
    ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut cur, mut best) = (0i64, 0i64);
    for (_, d) in ev {
        cur += d as i64;
        best = best.max(cur);
    }
    best as usize
}

impl TreePopulation {
    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.start_time && t <= self.horizon) {
            return Err(domain(format!("time {t} outside [{}, {}]", self.start_time, self.horizon)));
        }
        if self.capped.is_some() && t >= self.complete_until {
            return Err(Error::Precondition(format!(
                "population capped ({:?}); exact only before {}",
                self.capped, self.complete_until
            )));
        }
        Ok(())
    }

    /// `(label, mass)` of every particle alive at `t`.
    pub fn snapshot(&self, t: f64) -> Result<Vec<(Label, f64)>> {
        self.check_time(t)?;
        Ok(self.particles.iter().filter_map(|p| p.mass_at(t).map(|m| (p.label, m))).collect())
    }

    pub fn alive_count(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        Ok(self.particles.iter().filter(|p| p.alive_at(t)).count())
    }

    /// `Σ (χ_u(t)/x0)^q`.
    pub fn power_sum(&self, t: f64, q: f64) -> Result<f64> {
        let inv = 1.0 / self.x0;
        Ok(self.snapshot(t)?.iter().map(|&(_, m)| (m * inv).powf(q)).sum())
    }

    /// `e^{-tκ(q)} Σ (χ_u(t)/x0)^q`, with `t` measured from the start.
    pub fn additive_martingale(&self, t: f64, q: f64, kappa_q: f64) -> Result<f64> {
        if self.capped.is_some() {
            return Err(Error::Precondition("capped populations are excluded from martingale estimates".into()));
        }
        if !kappa_q.is_finite() {
            return Err(domain("kappa(q) must be finite".to_string()));
        }
        Ok((-(t - self.start_time) * kappa_q).exp() * self.power_sum(t, q)?)
    }

    /// Whether no particle is alive at the horizon.
    pub fn extinct(&self) -> bool {
        self.capped.is_none() && !self.particles.iter().any(|p| p.cause == DeathCause::Horizon)
    }

    /// Number of materialised particles in each generation.
    pub fn generation_sizes(&self) -> Vec<usize> {
        let mut z = vec![0usize; self.counters.max_generation as usize + 1];
        for p in &self.particles {
            z[p.generation() as usize] += 1;
        }
        z
    }

    /// Indices along the left-most line of descent `∅, 0, 00, …`.
    pub fn eve_line(&self) -> Vec<usize> {
        let mut line = vec![0];
        while let Some(c) = self.particles[*line.last().unwrap()].children {
            line.push(c[0]);
        }
        line
    }

    /// The population at a coarser truncation: splits with mark in
    /// `[-eps, 0)` become non-birth jumps of the same particle, which then
    /// continues as its `0` child, and the `1` child's subtree is erased.
    pub fn coarsen(&self, eps: f64) -> TreePopulation {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Label::ROOT, None::<usize>)];
        while let Some((head, label, parent)) = stack.pop() {
            let mut chain = vec![head];
            loop {
                let tail = &self.particles[*chain.last().unwrap()];
                match (tail.cause, tail.children) {
                    (DeathCause::Split { mark }, Some(c)) if -mark <= eps => chain.push(c[0]),
                    _ => break,
                }
            }
            let first = &self.particles[head];
            let last = &self.particles[*chain.last().unwrap()];
            let path = if chain.len() == 1 {
                first.path.clone()
            } else {
                merge_paths(chain.iter().map(|&i| &self.particles[i].path))
            };
            let idx = out.len();
            if let Some(pi) = parent {
                let pp: &mut HomogeneousParticle = &mut out[pi];
                let slot = label.last().unwrap() as usize;
                pp.children.get_or_insert([usize::MAX; 2])[slot] = idx;
            }
            out.push(HomogeneousParticle {
                label,
                parent,
                children: None,
                birth: first.birth,
                death: last.death,
                initial_mass: first.initial_mass,
                path,
                cause: last.cause,
            });
            if let Some(c) = last.children {
                // pushed in reverse so that `0` subtrees are emitted first
                stack.push((c[1], label.child(1), Some(idx)));
                stack.push((c[0], label.child(0), Some(idx)));
            }
        }
        let mut counters = Counters {
            splits: out.iter().filter(|p| matches!(p.cause, DeathCause::Split { .. })).count(),
            kills: out.iter().filter(|p| p.cause == DeathCause::Killed).count(),
            max_generation: out.iter().map(|p| p.label.depth()).max().unwrap_or(0),
            peak_alive: 0,
        };
        counters.peak_alive = peak_alive(&out);
        TreePopulation {
            particles: out,
            x0: self.x0,
            start_time: self.start_time,
            horizon: self.horizon,
            capped: self.capped,
            complete_until: self.complete_until,
            counters,
        }
    }
}

/// Concatenates the paths of a chain of `0` children into one path whose
/// splits have become non-birth jumps.
fn merge_paths<'a>(paths: impl Iterator<Item = &'a PathRecord>) -> PathRecord {
    let mut out: Option<PathRecord> = None;
    for p in paths {
        match out.as_mut() {
            None => out = Some(PathRecord { split: None, ..p.clone() }),
            Some(acc) => {
                let t = p.start_time();
                let size = p.start_log_mass() - acc.end_log_mass();
                acc.events.push(JumpEvent {
                    time: t,
                    size,
                    origin: Origin::NonBirth,
                    branch: None,
                    mark: None,
                    sibling_log_mass: None,
                });
                acc.times.extend_from_slice(&p.times);
                acc.values.extend_from_slice(&p.values);
                acc.events.extend_from_slice(&p.events);
                acc.kill_time = p.kill_time;
                acc.split = p.split;
                acc.end = p.end;
            }
        }
    }
    out.expect("non-empty chain")
}

/// `p_g = F(p_{g-1})`, `p_0 = 0`, for the offspring law of split-or-die
/// competition: `F(s) = (k + m s²)/(k + m)`. Returns `p_1, …, p_n`.
pub fn iterate_offspring_pgf(k: f64, m: f64, n: usize) -> Vec<f64> {
    let mut p = 0.0;
    (0..n)
        .map(|_| {
            p = (k + m * p * p) / (k + m);
            p
        })
        .collect()
}

/// Fraction of runs with an empty generation `g`, for `g = 1..=n`.
pub fn extinction_stats(sim: &Simulator, n_generations: u8, n_runs: usize, seed: u64) -> Result<Vec<Estimate>> {
    let sim = Simulator { caps: Caps { max_generation: n_generations, ..sim.caps }, ..sim.clone() };
    let mut acc = vec![MeanAcc::new(); n_generations as usize];
    for r in 0..n_runs {
        let pop = sim.run(1.0, f64::INFINITY, rng::derive(seed, rng::domain::REPLICA, r as u64))?;
        if pop.capped == Some(CapKind::Particles) {
            return Err(Error::Precondition("particle cap reached in extinction run".into()));
        }
        let z = pop.generation_sizes();
        for g in 1..=n_generations as usize {
            acc[g - 1].push(if z.get(g).copied().unwrap_or(0) == 0 { 1.0 } else { 0.0 });
        }
    }
    Ok(acc.iter().map(MeanAcc::summary).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn config_a() -> Characteristics {
        Characteristics::new(0.0, 0.0, 0.0, JumpMeasure::atoms(vec![(-LN2, 1.0)]).unwrap(), JumpMeasure::zero(), 0.0)
            .unwrap()
    }

    fn config_c() -> Characteristics {
        Characteristics::new(1.0, 0.0, 0.0, JumpMeasure::atoms(vec![(-LN2, 2.0)]).unwrap(), JumpMeasure::zero(), 0.0)
            .unwrap()
    }

    #[test]
    fn label_basics() {
        let u = Label::ROOT.child(0).child(1).child(1);
        assert_eq!(u.to_string(), "u011");
        assert_eq!(u.parent().unwrap().to_string(), "u01");
        assert_eq!(Label::ROOT.to_string(), "u");
        assert!(Label::ROOT.child(0).child(1) < Label::ROOT.child(1));
        assert!(Label::ROOT < Label::ROOT.child(0));
        assert_ne!(Label::ROOT.child(0).key(), Label::ROOT.key());
        assert!(Label::ROOT.child(0).child(0).is_leftmost());
    }

    #[test]
    fn config_a_masses_are_closed_form() {
        let sim = Simulator::new(&config_a(), Caps::default()).unwrap();
        let pop = sim.run(1.0, 3.0, 17).unwrap();
        assert!(pop.capped.is_none());
        for t in [0.0, 0.5, 1.3, 2.9, 3.0] {
            let snap = pop.snapshot(t).unwrap();
            let mut total = 0.0;
            for (label, m) in &snap {
                let g = label.depth() as i32;
                let exact = 2f64.powi(-g) * (t / 2.0).exp();
                assert!((m - exact).abs() <= 1e-12 * exact, "{label} {m} {exact}");
                total += 2f64.powi(-g);
            }
            // conservation: Σ 2^{-g} = 1 with no killing
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(pop.snapshot(0.0).unwrap(), vec![(Label::ROOT, 1.0)]);
    }

    #[test]
    fn split_conservation() {
        let ch = Characteristics::new(
            0.0,
            0.3,
            -0.1,
            JumpMeasure::atoms(vec![(-0.2, 0.5), (-1.7, 1.0)]).unwrap(),
            JumpMeasure::zero(),
            0.0,
        )
        .unwrap();
        let sim = Simulator::new(&ch, Caps::default()).unwrap();
        let pop = sim.run(3.0, 4.0, 5).unwrap();
        let mut checked = 0;
        for p in &pop.particles {
            if let Some([c0, c1]) = p.children {
                let m = p.path.end_log_mass().exp();
                let s = pop.particles[c0].initial_mass + pop.particles[c1].initial_mass;
                assert!((s - m).abs() <= 4.0 * f64::EPSILON * m);
                assert_eq!(pop.particles[c0].birth, p.death);
                checked += 1;
            }
        }
        assert!(checked > 5);
    }

    #[test]
    fn root_splits_before_dying_two_thirds() {
        let sim = Simulator::new(&config_c(), Caps { max_particles: 1, max_generation: 60 }).unwrap();
        let n = 30_000;
        let acc: MeanAcc = (0..n)
            .map(|i| {
                let pop = sim.run(1.0, f64::INFINITY, i).unwrap();
                f64::from(matches!(pop.particles[0].cause, DeathCause::Split { .. }) as u8)
            })
            .collect();
        assert!((acc.mean() - 2.0 / 3.0).abs() < 3.0 * acc.se(), "{}", acc.mean());
    }

    #[test]
    fn killed_root_leaves_empty_snapshot() {
        let sim = Simulator::new(&config_c(), Caps::default()).unwrap();
        let pop = (0..).map(|s| sim.run(1.0, 50.0, s).unwrap()).find(|p| p.particles[0].cause == DeathCause::Killed).unwrap();
        assert_eq!(pop.particles.len(), 1);
        let d = pop.particles[0].death;
        assert!(pop.snapshot(d).unwrap().is_empty());
        assert!(pop.snapshot(d + 1.0).unwrap().is_empty());
        assert!(pop.extinct());
    }

    #[test]
    fn martingale_hand_enumerated_one_split() {
        // Config A: one split at s before t gives two particles of mass e^{t/2}/2
        let sim = Simulator::new(&config_a(), Caps::default()).unwrap();
        let pop = (0..).map(|s| sim.run(1.0, 1.0, s).unwrap()).find(|p| p.particles.len() == 3).unwrap();
        let kappa2 = 0.5;
        let m = pop.additive_martingale(1.0, 2.0, kappa2).unwrap();
        let hand = (-kappa2).exp() * 2.0 * (0.5f64 * 0.5f64.exp()).powi(2);
        assert!((m - hand).abs() < 1e-14);
        assert_eq!(pop.additive_martingale(0.0, 2.0, kappa2).unwrap(), 1.0);
    }

    #[test]
    fn caps_flag_population() {
        let sim = Simulator::new(&config_a(), Caps { max_particles: 50, max_generation: 60 }).unwrap();
        let pop = sim.run(1.0, 20.0, 3).unwrap();
        assert_eq!(pop.capped, Some(CapKind::Particles));
        assert!(pop.complete_until < 20.0);
        assert!(pop.snapshot(pop.complete_until * 0.5).is_ok());
        assert!(pop.snapshot(pop.complete_until).is_err());
        assert!(pop.additive_martingale(0.1, 1.0, 0.5).is_err());
        let sim = Simulator::new(&config_a(), Caps { max_particles: 1000, max_generation: 2 }).unwrap();
        let pop = sim.run(1.0, 20.0, 3).unwrap();
        assert_eq!(pop.capped, Some(CapKind::Generation));
    }

    #[test]
    fn pgf_iteration() {
        let p = iterate_offspring_pgf(1.0, 2.0, 200);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 11.0 / 27.0).abs() < 1e-15);
        assert!((p[199] - 0.5).abs() < 1e-12);
        let sub = iterate_offspring_pgf(2.0, 1.0, 400);
        assert!((sub[399] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn no_killing_never_extinct() {
        let sim = Simulator::new(&config_a(), Caps::default()).unwrap();
        let est = extinction_stats(&sim, 8, 200, 1).unwrap();
        assert!(est.iter().all(|e| e.mean == 0.0));
    }

    #[test]
    fn coarsen_keeps_atoms_above_level() {
        let sim = Simulator::new(&config_a(), Caps::default()).unwrap();
        let pop = sim.run(1.0, 3.0, 9).unwrap();
        let same = pop.coarsen(0.5);
        assert_eq!(same.particles.len(), pop.particles.len());
        let root_only = pop.coarsen(1.0);
        assert_eq!(root_only.particles.len(), 1);
        // the merged path follows the 0 children, so mass is e^{t/2} 2^{-splits}
        let eve = pop.eve_line();
        for t in [0.5, 1.5, 2.99] {
            let m = root_only.snapshot(t).unwrap()[0].1;
            let fine = eve.iter().find_map(|&i| pop.particles[i].mass_at(t)).unwrap();
            assert_eq!(m, fine);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let sim = Simulator::new(&config_c(), Caps::default()).unwrap();
        let a = sim.run(1.0, 5.0, 77).unwrap();
        let b = sim.run(1.0, 5.0, 77).unwrap();
        assert_eq!(a.particles, b.particles);
    }
}
