//! The population seen from a size-biased line of descent.
//!
//! Tilting by the additive martingale `M_q` turns the selected particle into
//! a Lévy process with exponent `Φ(p) = κ(q+p) - κ(q)`. It is simulated
//! directly: the non-birth part is Esscher-tilted by `e^{qy}`, and at a birth
//! event with mark `J` the line either stays with the `e^J` child (weight
//! `e^{qJ}`) or moves to the `1-e^J` child (weight `(1-e^J)^q`). The child
//! that is left behind starts an untilted sub-population.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cumulant::Characteristics;
use crate::error::{domain, precondition, Error, Result};
use crate::homogeneous::{split_masses, Caps, Label, Simulator, MAX_DEPTH};
use crate::levy_path::{sample_path, Births, Branch, EndCause, Origin, PathRecord, PathSpec, DEFAULT_PATH_EPS, DEFAULT_STEP};
use crate::rng;
use crate::selfsimilar::{invert_segment, segment_clock};
use crate::stats::{ols, wilson, Estimate, MeanAcc, Slope};

/// Points at which the simulated generator is compared with `Φ`.
pub const GATE_POINTS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 3.0];
/// Largest accepted `|exponent(p) - Φ(p)| / max(1, |Φ(p)|)`.
pub const GATE_TOL: f64 = 1e-9;

/// Spine dynamics for one tilt.
#[derive(Clone, Debug)]
pub struct SpineSpec {
    pub ch: Characteristics,
    pub q: f64,
    pub kappa_q: f64,
    /// `Φ̇(0) = κ̇(q)`.
    pub mean_drift: f64,
    /// Largest relative residual of the exponent identity on [`GATE_POINTS`].
    pub gate_residual: f64,
    path: PathSpec,
}

impl SpineSpec {
    pub fn new(ch: &Characteristics, q: f64) -> Result<Self> {
        Self::with_resolution(ch, q, DEFAULT_PATH_EPS, DEFAULT_STEP)
    }

    pub fn with_resolution(ch: &Characteristics, q: f64, path_eps: f64, step: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(domain(format!("tilt {q} must be positive")));
        }
        let mass = ch.lambda1.total_mass();
        if !mass.is_finite() {
            return Err(precondition("birth measure has infinite mass; truncate it first"));
        }
        if !(mass > 0.0) {
            return Err(Error::Degenerate);
        }
        let kappa_q = ch.kappa(q)?;
        if !kappa_q.is_finite() {
            return Err(domain(format!("kappa({q}) is infinite")));
        }
        let mean_drift = ch.kappa_dot(q)?;
        let compensation = ch.lambda2.integrate(&|y: f64| -y.exp_m1() * -(q * y).exp_m1(), 2.0);
        let drift = ch.sigma2 * q + ch.b + ch.birth_drift_shift()? + compensation;
        let path = PathSpec::with_resolution(0.0, ch.sigma2, drift, ch.lambda2.clone(), q, path_eps, step)?;
        let mut spec = SpineSpec { ch: ch.clone(), q, kappa_q, mean_drift, gate_residual: 0.0, path };
        let mut worst = 0.0f64;
        for p in GATE_POINTS {
            let phi = ch.phi(q, p)?;
            let r = (spec.implied_exponent(p) - phi).abs() / phi.abs().max(1.0);
            worst = worst.max(r);
        }
        if !(worst <= GATE_TOL) {
            return Err(precondition(format!("spine exponent differs from phi by {worst:.3e}")));
        }
        spec.gate_residual = worst;
        Ok(spec)
    }

    pub fn path_spec(&self) -> &PathSpec {
        &self.path
    }

    pub fn births(&self) -> Births<'_> {
        Births::Tilted { measure: &self.ch.lambda1, tilt: self.q }
    }

    /// Laplace exponent of the simulated generator, assembled term by term.
    pub fn implied_exponent(&self, p: f64) -> f64 {
        let q = self.q;
        let births = self.ch.lambda1.integrate(
            &|y: f64| {
                let keep = -y.exp_m1();
                (q * y).exp() * (p * y).exp_m1() + keep.powf(q) * (keep.powf(p) - 1.0)
            },
            2.0,
        );
        self.path.exponent(p) + births
    }

    /// Total rate of birth events seen by the spine, `∫(e^{qy} + (1-e^y)^q) Λ₁`.
    pub fn birth_event_rate(&self) -> f64 {
        let q = self.q;
        self.ch.lambda1.integrate(&|y: f64| (q * y).exp() + (-y.exp_m1()).powf(q), 2.0)
    }

    /// Spine path from mass `x0` over `[0, chi_horizon]`.
    pub fn simulate<R: Rng + ?Sized>(&self, x0: f64, chi_horizon: f64, rng: &mut R) -> Result<SpineRealization> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(domain(format!("initial mass {x0} must be positive")));
        }
        if !(chi_horizon > 0.0 && chi_horizon.is_finite()) {
            return Err(domain(format!("spine horizon {chi_horizon} must be positive and finite")));
        }
        let path = sample_path(&self.path, &self.births(), 0.0, x0.ln(), chi_horizon, rng)?;
        let siblings = path
            .events
            .iter()
            .filter(|e| e.origin == Origin::Birth)
            .enumerate()
            .map(|(index, e)| SiblingBirth {
                index,
                chi_time: e.time,
                log_mass: e.sibling_log_mass.expect("birth events carry the sibling mass"),
                stayed: e.branch == Some(Branch::Stay),
            })
            .collect();
        Ok(SpineRealization { path, siblings })
    }

    /// Rejects pairings for which the spine clock diverges.
    pub fn check_pairing(&self, alpha: f64) -> Result<()> {
        if alpha * self.mean_drift > 0.0 {
            Ok(())
        } else {
            Err(precondition(format!(
                "alpha = {alpha} with spine drift {:.4} has an infinite lifetime; use q- for alpha < 0 and q+ for alpha > 0",
                self.mean_drift
            )))
        }
    }

    pub fn lifetime(&self, real: &SpineRealization, alpha: f64) -> Result<Lifetime> {
        self.check_pairing(alpha)?;
        spine_lifetime(real, alpha, self.mean_drift)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiblingBirth {
    /// Position among the spine's birth events, in time order.
    pub index: usize,
    pub chi_time: f64,
    pub log_mass: f64,
    /// The spine kept the `e^J` child.
    pub stayed: bool,
}

#[derive(Clone, Debug)]
pub struct SpineRealization {
    pub path: PathRecord,
    pub siblings: Vec<SiblingBirth>,
}

impl SpineRealization {
    /// Lamperti clock at every knot of the spine path.
    pub fn clock(&self, alpha: f64) -> Vec<f64> {
        let (ts, xs) = (&self.path.times, &self.path.values);
        let mut a = 0.0;
        let mut out = Vec::with_capacity(ts.len());
        out.push(a);
        for i in 1..ts.len() {
            a += segment_clock(alpha, xs[i - 1], xs[i], ts[i] - ts[i - 1]);
            out.push(a);
        }
        out
    }

    /// Clock value at χ-time `s`.
    pub fn clock_at(&self, alpha: f64, s: f64) -> Option<f64> {
        let (ts, xs) = (&self.path.times, &self.path.values);
        if !(s >= ts[0] && s <= *ts.last().unwrap()) {
            return None;
        }
        let knots = self.clock(alpha);
        let j = ts.partition_point(|&t| t <= s) - 1;
        if j + 1 >= ts.len() || ts[j + 1] == ts[j] {
            return Some(knots[j]);
        }
        let h = ts[j + 1] - ts[j];
        let g = (xs[j + 1] - xs[j]) / h;
        Some(knots[j] + segment_clock(alpha, xs[j], xs[j] + g * (s - ts[j]), s - ts[j]))
    }

    /// `X*(t)` for `t` below the clocked part of the lifetime.
    pub fn self_similar_mass(&self, alpha: f64, t: f64) -> Option<f64> {
        let knots = self.clock(alpha);
        if !(t >= 0.0 && t < *knots.last().unwrap()) {
            return None;
        }
        let (ts, xs) = (&self.path.times, &self.path.values);
        let j = knots.partition_point(|&a| a <= t) - 1;
        let g = (xs[j + 1] - xs[j]) / (ts[j + 1] - ts[j]);
        Some(invert_segment(alpha, xs[j], g, t - knots[j]).exp())
    }

    pub fn min_log_mass(&self) -> f64 {
        self.path.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_log_mass(&self) -> f64 {
        self.path.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Untilted sub-population of sibling `i`, from its birth to `horizon`.
    pub fn sibling_population(&self, sim: &Simulator, i: usize, horizon: f64, seed: u64) -> Result<crate::TreePopulation> {
        let s = &self.siblings[i];
        sim.run_from(s.log_mass.exp(), s.chi_time, horizon, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Lifetime {
    /// `∫ χ*^{-α}` over the simulated horizon plus the tail estimate.
    pub estimate: f64,
    pub integral: f64,
    /// `e^{-αξ*(H)} / (α·drift)`: the tail contribution of a spine that keeps
    /// its mean drift after the horizon.
    pub tail: f64,
}

/// Lifetime of the self-similar spine, given the spine's mean drift.
pub fn spine_lifetime(real: &SpineRealization, alpha: f64, mean_drift: f64) -> Result<Lifetime> {
    if !(alpha * mean_drift > 0.0) {
        return Err(precondition(format!("alpha = {alpha} and drift = {mean_drift} do not give a finite lifetime")));
    }
    let integral = *real.clock(alpha).last().unwrap();
    let tail = (-alpha * real.path.end_log_mass()).exp() / (alpha * mean_drift);
    Ok(Lifetime { estimate: integral + tail, integral, tail })
}

/// Monte Carlo mean of `e^{p ξ*(t)}` from `n` spine paths started at 1.
pub fn spine_moment(spec: &SpineSpec, p: f64, t: f64, n: usize, seed: u64) -> Result<Estimate> {
    let mut acc = MeanAcc::new();
    for r in 0..n {
        let mut g = rng::stream(seed, rng::domain::SPINE, r as u128);
        let real = spec.simulate(1.0, t, &mut g)?;
        acc.push((p * real.path.end_log_mass()).exp());
    }
    Ok(acc.summary())
}

/// Bounded statistics of the population at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "n")]
pub enum Statistic {
    One,
    AliveCount(usize),
    Extinct,
}

impl Statistic {
    fn eval(&self, alive: usize) -> f64 {
        let hit = match *self {
            Statistic::One => true,
            Statistic::AliveCount(n) => alive == n,
            Statistic::Extinct => alive == 0,
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChangeOfMeasure {
    /// `E_P[M_q(t) f]` from untilted runs.
    pub p_side: Estimate,
    /// `E_Q[f]` from spine runs with expanded siblings.
    pub q_side: Estimate,
    /// `(p - q) / sqrt(se_p² + se_q²)`.
    pub z: f64,
    pub excluded_p: usize,
    pub excluded_q: usize,
}

/// Compares both sides of the change of measure for `f` at time `t`.
pub fn change_of_measure_check(
    ch: &Characteristics,
    q: f64,
    t: f64,
    statistic: Statistic,
    n_runs: usize,
    caps: Caps,
    seed: u64,
) -> Result<ChangeOfMeasure> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain(format!("time {t} must be positive")));
    }
    let spec = SpineSpec::new(ch, q)?;
    let sim = Simulator::new(ch, caps)?;
    let p_seed = rng::derive(seed, rng::domain::AUX, 0);
    let q_seed = rng::derive(seed, rng::domain::AUX, 1);

    let mut p_acc = MeanAcc::new();
    let mut excluded_p = 0;
    for r in 0..n_runs {
        let pop = sim.run(1.0, t, rng::derive(p_seed, rng::domain::REPLICA, r as u64))?;
        if pop.capped.is_some() {
            excluded_p += 1;
            continue;
        }
        let m = pop.additive_martingale(t, q, spec.kappa_q)?;
        p_acc.push(m * statistic.eval(pop.alive_count(t)?));
    }

    let mut q_acc = MeanAcc::new();
    let mut excluded_q = 0;
    'runs: for r in 0..n_runs {
        let mut g = rng::stream(q_seed, rng::domain::SPINE, r as u128);
        let real = spec.simulate(1.0, t, &mut g)?;
        let mut alive = 1usize;
        if statistic != Statistic::One {
            for (i, s) in real.siblings.iter().enumerate() {
                let sub_seed = rng::derive(q_seed, rng::domain::SIBLING, ((r as u64) << 32) | s.index as u64);
                let pop = real.sibling_population(&sim, i, t, sub_seed)?;
                if pop.capped.is_some() {
                    excluded_q += 1;
                    continue 'runs;
                }
                alive += pop.alive_count(t)?;
            }
        }
        q_acc.push(statistic.eval(alive));
    }

    let (p_side, q_side) = (p_acc.summary(), q_acc.summary());
    let se = (p_side.se * p_side.se + q_side.se * q_side.se).sqrt();
    let d = p_side.mean - q_side.mean;
    let z = if se > 0.0 { d / se } else if d == 0.0 { 0.0 } else { d.signum() * f64::INFINITY };
    Ok(ChangeOfMeasure { p_side, q_side, z, excluded_p, excluded_q })
}

/// Budget of the explosion experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplosionBudget {
    /// Nested prefixes of the sibling list; the largest is the total.
    pub n_siblings: Vec<usize>,
    /// χ-horizon of each spine run.
    pub spine_horizon: f64,
    /// Extra χ-time given to each sibling beyond the time its front needs.
    pub sibling_horizon: f64,
    /// Birth sizes kept for expansion.
    pub min_birth_size: f64,
    pub max_birth_size: f64,
    pub max_spines: usize,
    /// Particles sampled per sibling before it is marked capped.
    pub max_particles: usize,
    /// Once a sibling has a hit, its search stops after this many particles.
    pub settle_particles: usize,
    /// Probe offsets after the estimated lifetime, geometric grid.
    pub probe_min: f64,
    pub probe_max: f64,
    pub n_probes: usize,
    /// The spine is said to reach zero when its mass drops below this.
    pub reach_threshold: f64,
}

impl Default for ExplosionBudget {
    fn default() -> Self {
        ExplosionBudget {
            n_siblings: vec![100, 1000, 10000],
            spine_horizon: 160.0,
            sibling_horizon: 2.0,
            min_birth_size: 1e-4,
            max_birth_size: 0.05,
            max_spines: 100_000,
            max_particles: 1_000_000,
            settle_particles: 50_000,
            probe_min: 0.25,
            probe_max: 4.0,
            n_probes: 9,
            reach_threshold: 1e-3,
        }
    }
}

impl ExplosionBudget {
    pub fn validate(&self) -> Result<()> {
        let ok = !self.n_siblings.is_empty()
            && self.n_siblings.iter().all(|&n| n > 0)
            && self.n_siblings.windows(2).all(|w| w[0] < w[1])
            && self.spine_horizon > 0.0
            && self.spine_horizon.is_finite()
            && self.sibling_horizon >= 0.0
            && self.min_birth_size > 0.0
            && self.max_birth_size > self.min_birth_size
            && self.max_spines > 0
            && self.max_particles > 0
            && self.settle_particles > 0
            && self.probe_min > 0.0
            && self.probe_max >= self.probe_min
            && self.n_probes > 0
            && self.reach_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid explosion budget {self:?}")))
        }
    }

    /// Offsets `t_k` of the probe times `ζ̂* + t_k`.
    pub fn probe_offsets(&self) -> Vec<f64> {
        if self.n_probes == 1 {
            return vec![self.probe_min];
        }
        let r = (self.probe_max / self.probe_min).ln() / (self.n_probes - 1) as f64;
        (0..self.n_probes).map(|k| self.probe_min * (r * k as f64).exp()).collect()
    }

    pub fn total(&self) -> usize {
        *self.n_siblings.last().unwrap()
    }
}

/// Everything needed to expand one sibling, independently of the others.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiblingTask {
    pub spine: usize,
    pub sibling_index: usize,
    pub birth_size: f64,
    pub birth_chi: f64,
    pub birth_xtime: f64,
    /// Estimated lifetime of this task's spine.
    pub zeta: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpineSummary {
    pub spine: usize,
    pub zeta: f64,
    pub tail: f64,
    pub births: usize,
    pub eligible: usize,
    pub reached: bool,
}

#[derive(Clone, Debug)]
pub struct SiblingPlan {
    pub tasks: Vec<SiblingTask>,
    pub spines: Vec<SpineSummary>,
    /// Fewer eligible siblings than requested before `max_spines`.
    pub short: bool,
}

#[derive(Clone, Debug)]
pub struct ExplosionSetup {
    pub spine: SpineSpec,
    pub sim: Simulator,
    pub alpha: f64,
    pub a: f64,
    pub a_prime: f64,
    /// Growth rate of the fastest line and the minimiser of `κ`, used to
    /// size sibling horizons.
    pub front_speed: f64,
    pub q_m: f64,
    pub budget: ExplosionBudget,
}

impl ExplosionSetup {
    /// Requires (H) and picks `q-` for `α < 0`, `q+` for `α > 0`.
    pub fn new(ch: &Characteristics, alpha: f64, a: f64, a_prime: f64, budget: ExplosionBudget) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(domain(format!("alpha = {alpha} must be nonzero")));
        }
        if !(0.0 < a && a < a_prime && a_prime.is_finite()) {
            return Err(domain(format!("need 0 < a < a' < inf, got ({a}, {a_prime})")));
        }
        budget.validate()?;
        let profile = ch.classify()?;
        let tilts = profile.require_tilts()?;
        let q_m = profile.q_m.expect("tilts imply a minimiser");
        let q = if alpha < 0.0 { tilts.q_minus } else { tilts.q_plus };
        let spine = SpineSpec::new(ch, q)?;
        spine.check_pairing(alpha)?;
        let caps = Caps { max_particles: budget.max_particles, ..Caps::default() };
        let sim = Simulator::new(ch, caps)?;
        let front_speed = ch.front_speed().filter(|v| *v > 0.0).unwrap_or(spine.mean_drift.abs());
        Ok(ExplosionSetup { spine, sim, alpha, a, a_prime, front_speed, q_m, budget })
    }

    /// Runs spines until enough eligible siblings are found, latest first
    /// within each spine.
    pub fn plan(&self, seed: u64) -> Result<SiblingPlan> {
        let b = &self.budget;
        let want = b.total();
        let mut tasks = Vec::with_capacity(want);
        let mut spines = Vec::new();
        let log_lo = b.min_birth_size.ln();
        let log_hi = b.max_birth_size.ln();
        let threshold = b.reach_threshold.ln();
        let spine_seed = rng::derive(seed, rng::domain::SPINE, 0);
        let sibling_seed = rng::derive(seed, rng::domain::SIBLING, 0);
        let mut id = 0usize;
        while tasks.len() < want && id < b.max_spines {
            let mut g = rng::stream(spine_seed, rng::domain::SPINE, id as u128);
            let real = self.spine.simulate(1.0, b.spine_horizon, &mut g)?;
            let life = self.spine.lifetime(&real, self.alpha)?;
            let reached = if self.alpha < 0.0 {
                real.min_log_mass() < threshold
            } else {
                real.max_log_mass() > -threshold
            };
            let knots = real.clock(self.alpha);
            let mut eligible = 0;
            for s in real.siblings.iter().rev() {
                if tasks.len() >= want {
                    break;
                }
                if !(log_lo <= s.log_mass && s.log_mass <= log_hi) {
                    continue;
                }
                // the spine's clock is continuous, so the knot at the
                // event time gives the birth X-time
                let k = real.path.times.partition_point(|&t| t < s.chi_time);
                let birth_xtime = knots[k.min(knots.len() - 1)];
                tasks.push(SiblingTask {
                    spine: id,
                    sibling_index: s.index,
                    birth_size: s.log_mass.exp(),
                    birth_chi: s.chi_time,
                    birth_xtime,
                    zeta: life.estimate,
                    seed: rng::derive(sibling_seed, rng::domain::SIBLING, ((id as u64) << 32) | s.index as u64),
                });
                eligible += 1;
            }
            spines.push(SpineSummary {
                spine: id,
                zeta: life.estimate,
                tail: life.tail,
                births: real.siblings.len(),
                eligible,
                reached,
            });
            id += 1;
        }
        let short = tasks.len() < want;
        Ok(SiblingPlan { tasks, spines, short })
    }

    /// χ-horizon of a sibling: the time the maximal mass needs to cover
    /// `ln(a/x)` including its logarithmic lag, the χ-time a mass in
    /// `(a, a')` needs to run its clock from the birth to the last probe,
    /// and the budget's margin.
    pub fn sibling_chi_horizon(&self, task: &SiblingTask) -> f64 {
        let v = self.front_speed;
        let run = (self.a / task.birth_size).ln().abs() / v;
        let lag = 1.5 / self.q_m * (1.0 + run).ln() / v;
        let slowest = self.a.powf(-self.alpha).min(self.a_prime.powf(-self.alpha));
        let gap = (task.zeta + self.budget.probe_max - task.birth_xtime).max(0.0) / slowest;
        task.birth_chi + self.budget.sibling_horizon + run + lag + gap
    }

    /// Expands one sibling and records at which probes one of its particles
    /// lies in `(a, a')`.
    pub fn expand(&self, task: &SiblingTask) -> Result<SiblingRow> {
        let offsets = self.budget.probe_offsets();
        let probes: Vec<f64> = offsets.iter().map(|t| task.zeta + t).collect();
        let horizon = self.sibling_chi_horizon(task);
        let out = search_sibling(
            &self.sim,
            self.alpha,
            task.birth_size,
            task.birth_chi,
            task.birth_xtime,
            horizon,
            &probes,
            self.a,
            self.a_prime,
            self.budget.settle_particles,
            task.seed,
        )?;
        Ok(SiblingRow {
            spine: task.spine,
            sibling_index: task.sibling_index,
            birth_size: task.birth_size,
            birth_xtime: task.birth_xtime,
            hits: out.hits,
            expanded: out.expanded,
            capped: out.capped,
            censored: out.censored,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiblingRow {
    pub spine: usize,
    pub sibling_index: usize,
    pub birth_size: f64,
    pub birth_xtime: f64,
    /// One flag per probe offset.
    pub hits: Vec<bool>,
    pub expanded: usize,
    pub capped: bool,
    /// The χ-horizon cut off a line that could still have reached an
    /// unresolved probe.
    pub censored: bool,
}

impl SiblingRow {
    pub fn success(&self) -> bool {
        self.hits.iter().any(|&h| h)
    }

    pub fn hit_count(&self) -> usize {
        self.hits.iter().filter(|&&h| h).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiblingOutcome {
    pub hits: Vec<bool>,
    pub expanded: usize,
    pub capped: bool,
    pub censored: bool,
}

struct Node {
    log_mass: f64,
    chi: f64,
    clock: f64,
    label: Label,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    /// Heaviest first, then the smallest label.
    fn cmp(&self, o: &Self) -> Ordering {
        self.log_mass.total_cmp(&o.log_mass).then_with(|| o.label.cmp(&self.label))
    }
}

/// Largest mass reachable from `m` after the clock advanced by `dx`, for a
/// log-mass growing at most at rate `d`.
fn reach(alpha: f64, d: f64, m: f64, dx: f64) -> f64 {
    if d == 0.0 {
        return m;
    }
    let base = m.powf(-alpha) - alpha * d * dx;
    if alpha > 0.0 && base <= 0.0 {
        return f64::INFINITY;
    }
    base.powf(-1.0 / alpha)
}

/// Best-first search of a sibling's sub-population, sampling the same
/// particle streams as [`Simulator::run_from`] with `seed`. A subtree is
/// skipped once none of its particles can reach `a` by an unresolved probe;
/// the bound is exact when there is no Gaussian part and is not applied
/// otherwise. After the first hit the search ends at `settle` particles.
#[allow(clippy::too_many_arguments)]
pub fn search_sibling(
    sim: &Simulator,
    alpha: f64,
    x: f64,
    chi_birth: f64,
    clock_birth: f64,
    chi_horizon: f64,
    probes: &[f64],
    a: f64,
    a_prime: f64,
    settle: usize,
    seed: u64,
) -> Result<SiblingOutcome> {
    let n = probes.len();
    let mut hits = vec![false; n];
    let mut expanded = 0usize;
    let mut capped = false;
    let mut censored = false;
    let spec = sim.spec();
    let prune = spec.sigma2 == 0.0;
    let d = spec.max_log_growth();
    let ln_a = a.ln();

    // `Some(true)`: explore; `Some(false)`: only the horizon rules it out;
    // `None`: no unresolved probe is reachable at all
    let useful = |hits: &[bool], log_m: f64, chi: f64, clock: f64| -> Option<bool> {
        if !prune {
            return Some(true);
        }
        let m = log_m.exp();
        let open = probes.iter().zip(hits).any(|(&p, &h)| !h && p >= clock && reach(alpha, d, m, p - clock) > a);
        if !open {
            return None;
        }
        Some(log_m + d * (chi_horizon - chi) >= ln_a)
    };

    let mut heap = BinaryHeap::new();
    if chi_horizon > chi_birth {
        heap.push(Node { log_mass: x.ln(), chi: chi_birth, clock: clock_birth, label: Label::ROOT });
    }
    while let Some(node) = heap.pop() {
        match useful(&hits, node.log_mass, node.chi, node.clock) {
            None => continue,
            Some(false) => {
                censored = true;
                continue;
            }
            Some(true) => {}
        }
        if expanded >= sim.caps.max_particles || (expanded >= settle && hits.contains(&true)) {
            capped = true;
            break;
        }
        expanded += 1;
        let path = sim.sample_particle(node.label, node.chi, node.log_mass, chi_horizon, seed)?;
        let (ts, xs) = (&path.times, &path.values);
        let mut knots = Vec::with_capacity(ts.len());
        let mut c = node.clock;
        knots.push(c);
        for i in 1..ts.len() {
            c += segment_clock(alpha, xs[i - 1], xs[i], ts[i] - ts[i - 1]);
            knots.push(c);
        }
        let end_clock = c;
        for k in 0..n {
            let p = probes[k];
            if hits[k] || p < node.clock {
                continue;
            }
            if p >= end_clock {
                let last = xs[xs.len() - 1].exp();
                if path.end == EndCause::Horizon && (!prune || reach(alpha, d, last, p - end_clock) > a) {
                    censored = true;
                }
                continue;
            }
            let j = knots.partition_point(|&v| v <= p) - 1;
            let g = (xs[j + 1] - xs[j]) / (ts[j + 1] - ts[j]);
            let m = invert_segment(alpha, xs[j], g, p - knots[j]).exp();
            if a < m && m < a_prime {
                hits[k] = true;
            }
        }
        if hits.iter().all(|&h| h) {
            break;
        }
        if let (EndCause::Split, Some((t, mark))) = (path.end, path.split) {
            if node.label.depth() >= MAX_DEPTH - 1 {
                capped = true;
                continue;
            }
            let (m0, m1) = split_masses(path.end_log_mass(), mark);
            for (i, m) in [(0u8, m0), (1u8, m1)] {
                let lm = m.ln();
                match useful(&hits, lm, t, end_clock) {
                    Some(true) => heap.push(Node { log_mass: lm, chi: t, clock: end_clock, label: node.label.child(i) }),
                    Some(false) => censored = true,
                    None => {}
                }
            }
        }
    }
    Ok(SiblingOutcome { hits, expanded, capped, censored })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthPoint {
    pub n_siblings: usize,
    /// Siblings with a particle in `(a, a')` at the best common probe.
    pub contributing: usize,
    pub best_probe: f64,
    /// Siblings with a particle in `(a, a')` at some probe.
    pub successes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecadeRow {
    /// `floor(log10(birth size))`.
    pub decade: i32,
    pub n: usize,
    pub successes: usize,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplosionSummary {
    pub q: f64,
    pub alpha: f64,
    pub a: f64,
    pub a_prime: f64,
    pub probe_offsets: Vec<f64>,
    pub spines: usize,
    pub spines_reached: usize,
    pub reach_fraction: f64,
    pub growth: Vec<GrowthPoint>,
    /// Contributing fraction at the largest budget, its standard error and
    /// `z = rate / se`.
    pub rate: f64,
    pub rate_se: f64,
    pub rate_z: f64,
    /// Success indicator regressed on `log10(1/birth size)`.
    pub size_trend: Option<Slope>,
    pub size_trend_z: f64,
    pub decades: Vec<DecadeRow>,
    pub capped: usize,
    /// Capped rows without any hit; counted as failures.
    pub undetermined: usize,
    pub censored: usize,
    pub short: bool,
}

/// Critical value of a one-sided 99% test.
pub const Z99: f64 = 2.326_347_874_040_841;

impl ExplosionSummary {
    pub fn build(setup: &ExplosionSetup, plan: &SiblingPlan, rows: &[SiblingRow]) -> Self {
        let offsets = setup.budget.probe_offsets();
        let mut growth = Vec::new();
        for &n in &setup.budget.n_siblings {
            let part = &rows[..n.min(rows.len())];
            let (best, count) = best_probe(part, offsets.len());
            growth.push(GrowthPoint {
                n_siblings: part.len(),
                contributing: count,
                best_probe: offsets[best],
                successes: part.iter().filter(|r| r.success()).count(),
            });
        }
        let last = growth.last().copied().unwrap();
        let n = last.n_siblings.max(1) as f64;
        let rate = last.contributing as f64 / n;
        let rate_se = (rate * (1.0 - rate) / n).sqrt();
        let rate_z = if rate_se > 0.0 { rate / rate_se } else if rate > 0.0 { f64::INFINITY } else { 0.0 };

        let xs: Vec<f64> = rows.iter().map(|r| -r.birth_size.log10()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| if r.success() { 1.0 } else { 0.0 }).collect();
        let size_trend = ols(&xs, &ys);
        let size_trend_z = match size_trend {
            Some(s) if s.se > 0.0 => s.slope / s.se,
            Some(s) if s.slope == 0.0 => 0.0,
            Some(s) => s.slope.signum() * f64::INFINITY,
            None => 0.0,
        };

        let mut decades: Vec<DecadeRow> = Vec::new();
        let mut keyed: Vec<(i32, bool)> =
            rows.iter().map(|r| (r.birth_size.log10().floor() as i32, r.success())).collect();
        keyed.sort_by_key(|k| k.0);
        for chunk in keyed.chunk_by(|x, y| x.0 == y.0) {
            let k = chunk.iter().filter(|c| c.1).count();
            let (lo, hi) = wilson(k as u64, chunk.len() as u64, 2.575_829_303_548_901);
            decades.push(DecadeRow {
                decade: chunk[0].0,
                n: chunk.len(),
                successes: k,
                rate: k as f64 / chunk.len() as f64,
                wilson_low: lo,
                wilson_high: hi,
            });
        }

        let spines_reached = plan.spines.iter().filter(|s| s.reached).count();
        ExplosionSummary {
            q: setup.spine.q,
            alpha: setup.alpha,
            a: setup.a,
            a_prime: setup.a_prime,
            probe_offsets: offsets,
            spines: plan.spines.len(),
            spines_reached,
            reach_fraction: spines_reached as f64 / plan.spines.len().max(1) as f64,
            growth,
            rate,
            rate_se,
            rate_z,
            size_trend,
            size_trend_z,
            decades,
            capped: rows.iter().filter(|r| r.capped).count(),
            undetermined: rows.iter().filter(|r| r.capped && !r.success()).count(),
            censored: rows.iter().filter(|r| r.censored).count(),
            short: plan.short,
        }
    }

    /// Contributing count grows with the budget at 99% confidence.
    pub fn grows(&self) -> bool {
        self.rate_z > Z99 && self.growth.windows(2).all(|w| w[0].contributing < w[1].contributing)
    }

    /// No significant decay of the success rate as birth sizes shrink.
    pub fn no_decay(&self) -> bool {
        self.size_trend_z > -Z99
    }
}

/// Probe index with the most contributing rows; ties go to the earliest.
pub fn best_probe(rows: &[SiblingRow], n_probes: usize) -> (usize, usize) {
    let mut best = (0, 0);
    for k in 0..n_probes {
        let c = rows.iter().filter(|r| r.hits[k]).count();
        if c > best.1 {
            best = (k, c);
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct ExplosionResult {
    pub plan: SiblingPlan,
    pub rows: Vec<SiblingRow>,
    pub summary: ExplosionSummary,
}

/// Sequential driver: plan, expand every sibling, summarise.
pub fn explosion_experiment(
    ch: &Characteristics,
    alpha: f64,
    a: f64,
    a_prime: f64,
    budget: ExplosionBudget,
    seed: u64,
) -> Result<ExplosionResult> {
    let setup = ExplosionSetup::new(ch, alpha, a, a_prime, budget)?;
    let plan = setup.plan(seed)?;
    let rows = plan.tasks.iter().map(|t| setup.expand(t)).collect::<Result<Vec<_>>>()?;
    let summary = ExplosionSummary::build(&setup, &plan, &rows);
    Ok(ExplosionResult { plan, rows, summary })
}
