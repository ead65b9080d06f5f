//! Paths of spectrally negative Lévy processes with killing.
//!
//! A path is stored as knots `(time, log-mass)` joined linearly; a jump is two
//! knots at the same time. Jumps of the non-birth measure smaller than
//! `path_eps` are replaced by their mean drift, bigger ones arrive as compound
//! Poisson. The Gaussian part is sampled exactly at grid times
//! `start + i·step`.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::Serialize;

use crate::cumulant::Characteristics;
use crate::error::{domain, precondition, Result};
use crate::jump_measure::{psi_kernel, JumpMeasure};
use crate::stats::{Estimate, MeanAcc};

pub const DEFAULT_PATH_EPS: f64 = 1e-4;
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub kill_rate: f64,
    pub sigma2: f64,
    /// Drift in the compensated form `-k + σ²q²/2 + drift·q + ∫(e^{qy}-1+q(1-e^y)) ν(dy)`.
    pub drift: f64,
    pub jumps: JumpMeasure,
    /// Jumps follow `ν(dy) = e^{jump_tilt·y} jumps(dy)`.
    pub jump_tilt: f64,
    pub path_eps: f64,
    pub step: f64,
    big: JumpMeasure,
    big_rate: f64,
    effective_drift: f64,
    small_second_moment: f64,
}

impl PathSpec {
    pub fn new(kill_rate: f64, sigma2: f64, drift: f64, jumps: JumpMeasure, jump_tilt: f64) -> Result<Self> {
        Self::with_resolution(kill_rate, sigma2, drift, jumps, jump_tilt, DEFAULT_PATH_EPS, DEFAULT_STEP)
    }

    pub fn with_resolution(
        kill_rate: f64,
        sigma2: f64,
        drift: f64,
        jumps: JumpMeasure,
        jump_tilt: f64,
        path_eps: f64,
        step: f64,
    ) -> Result<Self> {
        if !(kill_rate >= 0.0 && sigma2 >= 0.0 && drift.is_finite()) {
            return Err(domain(format!("bad path coefficients k={kill_rate} sigma2={sigma2} drift={drift}")));
        }
        if !(path_eps > 0.0 && step > 0.0 && jump_tilt >= 0.0) {
            return Err(domain(format!(
                "path_eps = {path_eps}, step = {step} must be positive and jump_tilt = {jump_tilt} nonnegative"
            )));
        }
        jumps.validate()?;
        let big = jumps.restrict_below(path_eps);
        let small = jumps.restrict_above(path_eps);
        let tilt = |y: f64| (jump_tilt * y).exp();
        let big_rate = big.total_mass();
        let big_comp = big.integrate(&|y: f64| tilt(y) * -(y.exp_m1()), 1.0);
        let small_drift = small.integrate(&|y: f64| tilt(y) * (y - y.exp_m1()), 2.0);
        let small_second_moment = small.integrate(&|y: f64| tilt(y) * y * y, 2.0);
        Ok(PathSpec {
            kill_rate,
            sigma2,
            drift,
            jumps,
            jump_tilt,
            path_eps,
            step,
            big,
            big_rate,
            effective_drift: drift + big_comp + small_drift,
            small_second_moment,
        })
    }

    /// A particle's mass between splits: exponent `Ψ₂`.
    pub fn particle(ch: &Characteristics) -> Result<Self> {
        Self::new(ch.k, ch.sigma2, ch.b + ch.birth_drift_shift()?, ch.lambda2.clone(), 0.0)
    }

    pub fn resolution(mut self, path_eps: f64, step: f64) -> Result<Self> {
        self = Self::with_resolution(self.kill_rate, self.sigma2, self.drift, self.jumps, self.jump_tilt, path_eps, step)?;
        Ok(self)
    }

    /// Drift actually simulated between compound-Poisson jumps.
    pub fn effective_drift(&self) -> f64 {
        self.effective_drift
    }

    /// Upper bound on the exponent error at `p` caused by replacing small
    /// jumps with drift: `(p²/2) ∫_{[-path_eps,0)} y² ν(dy)`.
    pub fn small_jump_bias(&self, p: f64) -> f64 {
        0.5 * p * p * self.small_second_moment
    }

    /// Laplace exponent of the exact (untruncated) process.
    pub fn exponent(&self, q: f64) -> f64 {
        let tilt = self.jump_tilt;
        -self.kill_rate
            + 0.5 * self.sigma2 * q * q
            + self.drift * q
            + self.jumps.integrate(&|y: f64| (tilt * y).exp() * psi_kernel(q, -y), 2.0)
    }

    /// Largest possible growth rate of the log-mass when there is no
    /// Gaussian part.
    pub fn max_log_growth(&self) -> f64 {
        self.effective_drift.max(0.0)
    }
}

/// How birth events enter a path.
#[derive(Clone, Copy, Debug)]
pub enum Births<'a> {
    None,
    /// The path ends at the first event, at rate `|m|`, with a mark drawn from `m`.
    Split(&'a JumpMeasure),
    /// Size-biased selection along a spine: proposals at rate `2|m|`, kept
    /// with probability `e^{qJ}/2` (stay, log-jump `J`) or
    /// `(1-e^J)^q/2` (switch, log-jump `ln(1-e^J)`).
    Tilted { measure: &'a JumpMeasure, tilt: f64 },
}

impl Births<'_> {
    fn rate(&self) -> f64 {
        match self {
            Births::None => 0.0,
            Births::Split(m) => m.total_mass(),
            Births::Tilted { measure, .. } => 2.0 * measure.total_mass(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Origin {
    Birth,
    NonBirth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    Stay,
    Switch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    /// Log-jump of the path itself.
    pub size: f64,
    pub origin: Origin,
    pub branch: Option<Branch>,
    /// Birth mark `J`; for a switch the path jumps by `ln(1-e^J)`.
    pub mark: Option<f64>,
    /// Log-mass of the sibling left behind at a birth event.
    pub sibling_log_mass: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EndCause {
    Split,
    Killed,
    Horizon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub events: Vec<JumpEvent>,
    pub kill_time: Option<f64>,
    /// `(time, mark J)` when the path ended in a split.
    pub split: Option<(f64, f64)>,
    pub end: EndCause,
    pub horizon: f64,
}

impl PathRecord {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn start_log_mass(&self) -> f64 {
        self.values[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Left limit of the log-mass at the end of the path.
    pub fn end_log_mass(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Right-continuous log-mass at `t` in `[start, end]`.
    pub fn log_mass_at(&self, t: f64) -> Option<f64> {
        if t < self.start_time() || t > self.end_time() {
            return None;
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        if i + 1 >= self.times.len() || self.times[i + 1] == self.times[i] {
            return Some(self.values[i]);
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }
}

fn exp_time<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        Exp::new(rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}

/// Appends the continuous part on `(t, until]`.
#[allow(clippy::too_many_arguments)]
fn advance<R: Rng + ?Sized>(
    spec: &PathSpec,
    grid_origin: f64,
    grid_index: &mut u64,
    t: f64,
    until: f64,
    times: &mut Vec<f64>,
    values: &mut Vec<f64>,
    rng: &mut R,
) {
    let mut now = t;
    let mut x = *values.last().unwrap();
    if spec.sigma2 > 0.0 {
        let sd = spec.sigma2.sqrt();
        loop {
            let g = grid_origin + *grid_index as f64 * spec.step;
            if g <= now {
                *grid_index += 1;
                continue;
            }
            if g >= until {
                break;
            }
            let h = g - now;
            let z: f64 = StandardNormal.sample(rng);
            x += spec.effective_drift * h + sd * h.sqrt() * z;
            times.push(g);
            values.push(x);
            now = g;
            *grid_index += 1;
        }
        let h = until - now;
        if h > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            x += spec.effective_drift * h + sd * h.sqrt() * z;
        }
    } else {
        x += spec.effective_drift * (until - now);
    }
    times.push(until);
    values.push(x);
}

/// Samples one path from `start_time` until a split, the kill time or the
/// absolute `horizon`, whichever comes first.
pub fn sample_path<R: Rng + ?Sized>(
    spec: &PathSpec,
    births: &Births,
    start_time: f64,
    start_log: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    if !(horizon > start_time) {
        return Err(domain(format!("horizon {horizon} must exceed the start time {start_time}")));
    }
    let birth_rate = births.rate();
    if !birth_rate.is_finite() {
        return Err(precondition("birth measure must have finite mass".to_string()));
    }
    let stops = spec.kill_rate > 0.0 || matches!(births, Births::Split(_)) && birth_rate > 0.0;
    if horizon.is_infinite() && !stops {
        return Err(domain("an infinite horizon needs killing or splitting".to_string()));
    }
    let kill = start_time + exp_time(spec.kill_rate, rng);
    let total_rate = birth_rate + spec.big_rate;
    let limit = kill.min(horizon);

    let mut times = vec![start_time];
    let mut values = vec![start_log];
    let mut events = Vec::new();
    let mut grid_index = 0u64;
    let mut t = start_time;
    let mut split = None;
    let end = loop {
        let next = t + exp_time(total_rate, rng);
        let seg_end = next.min(limit);
        advance(spec, start_time, &mut grid_index, t, seg_end, &mut times, &mut values, rng);
        t = seg_end;
        if next >= limit {
            break if kill <= horizon { EndCause::Killed } else { EndCause::Horizon };
        }
        let x = *values.last().unwrap();
        if rng.random::<f64>() * total_rate < birth_rate {
            match *births {
                Births::None => unreachable!("zero birth rate"),
                Births::Split(m) => {
                    split = Some((t, m.sample(rng)?));
                    break EndCause::Split;
                }
                Births::Tilted { measure, tilt } => {
                    let j = measure.sample(rng)?;
                    let u: f64 = rng.random();
                    let stay = 0.5 * (tilt * j).exp();
                    let log_other = (-j.exp_m1()).ln();
                    let switch = 0.5 * (tilt * log_other).exp();
                    let (size, sib, branch) = if u < stay {
                        (j, log_other, Branch::Stay)
                    } else if (0.5..0.5 + switch).contains(&u) {
                        (log_other, j, Branch::Switch)
                    } else {
                        continue;
                    };
                    times.push(t);
                    values.push(x + size);
                    events.push(JumpEvent {
                        time: t,
                        size,
                        origin: Origin::Birth,
                        branch: Some(branch),
                        mark: Some(j),
                        sibling_log_mass: Some(x + sib),
                    });
                }
            }
        } else {
            let y = spec.big.sample(rng)?;
            if spec.jump_tilt > 0.0 && rng.random::<f64>() >= (spec.jump_tilt * y).exp() {
                continue;
            }
            times.push(t);
            values.push(x + y);
            events.push(JumpEvent {
                time: t,
                size: y,
                origin: Origin::NonBirth,
                branch: None,
                mark: None,
                sibling_log_mass: None,
            });
        }
    };
    Ok(PathRecord {
        times,
        values,
        events,
        kill_time: (kill <= horizon && end == EndCause::Killed).then_some(kill),
        split,
        end,
        horizon,
    })
}

/// Monte-Carlo estimate of `E[e^{qξ(t)} 1{t < kill}]`, to be compared with
/// `e^{t·exponent(q)}`.
pub fn exponent_check<R: Rng + ?Sized>(spec: &PathSpec, q: f64, t: f64, n: usize, rng: &mut R) -> Result<Estimate> {
    if !(t > 0.0 && q >= 0.0) {
        return Err(domain(format!("need t > 0 and q >= 0, got t={t} q={q}")));
    }
    let mut acc = MeanAcc::new();
    for _ in 0..n {
        let p = sample_path(spec, &Births::None, 0.0, 0.0, t, rng)?;
        acc.push(if p.end == EndCause::Killed { 0.0 } else { (q * p.end_log_mass()).exp() });
    }
    Ok(acc.summary())
}

/// Inserts Brownian-bridge midpoints between consecutive knots, halving the
/// grid while keeping every existing knot.
pub fn refine<R: Rng + ?Sized>(record: &PathRecord, sigma2: f64, rng: &mut R) -> PathRecord {
    let mut times = Vec::with_capacity(2 * record.times.len());
    let mut values = Vec::with_capacity(2 * record.times.len());
    let sd = sigma2.sqrt();
    for i in 0..record.times.len() {
        if i > 0 {
            let (t0, t1) = (record.times[i - 1], record.times[i]);
            if t1 > t0 {
                let (v0, v1) = (record.values[i - 1], record.values[i]);
                let z: f64 = StandardNormal.sample(rng);
                times.push(0.5 * (t0 + t1));
                values.push(0.5 * (v0 + v1) + sd * (0.25 * (t1 - t0)).sqrt() * z);
            }
        }
        times.push(record.times[i]);
        values.push(record.values[i]);
    }
    PathRecord { times, values, ..record.clone() }
}
