//! One function per subcommand. Each returns its results, tables and checks;
//! the caller adds provenance and writes files.

use gfx_core::homogeneous::{iterate_offspring_pgf, Simulator};
use gfx_core::selfsimilar::{budget_counts, check_inclusion, coupled_truncations, lamperti, Resolution};
use gfx_core::spine::{
    best_probe, change_of_measure_check, ExplosionSetup, ExplosionSummary, SpineSpec, Statistic, Z99,
};
use gfx_core::stats::{ols, Estimate, MeanAcc};
use gfx_core::{rng, Caps, Characteristics, Error as CoreError};
use rayon::ThreadPool;
use serde_json::{json, Value};

use crate::config::{ExplosionMode, RunConfig};
use crate::error::Result;
use crate::replicate::{map_ordered, replicate};
use crate::report::{num, Check, Counters, Table};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub seed: u64,
    pub pool: &'a ThreadPool,
}

#[derive(Default)]
pub struct Output {
    pub results: Value,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub counters: Counters,
}

/// Characteristics with a finite birth measure: the input itself, or its
/// truncation at the finest configured level.
fn finite(cfg: &RunConfig) -> Result<(Characteristics, Option<f64>)> {
    let ch = &cfg.characteristics;
    if ch.lambda1.is_finite() {
        Ok((ch.clone(), None))
    } else {
        let eps = *cfg.simulation.eps_levels.last().unwrap();
        Ok((ch.truncated(eps)?, Some(eps)))
    }
}

fn simulator(cfg: &RunConfig, ch: &Characteristics, caps: Caps) -> Result<Simulator> {
    let s = &cfg.simulation;
    Ok(Simulator::new(ch, caps)?.with_resolution(s.path_eps, s.step)?)
}

fn exclusion_check(cfg: &RunConfig, excluded: usize, total: usize) -> Check {
    let rate = if total == 0 { 0.0 } else { excluded as f64 / total as f64 };
    let max = cfg.statistics.max_excluded;
    Check::tolerance("exclusions", rate <= max, format!("{excluded} of {total} excluded (rate {rate:.2e}, limit {max:.1e})"))
}

fn est_json(e: &Estimate) -> Value {
    json!({"mean": e.mean, "se": e.se, "n": e.n})
}

/// z-score with a rounding floor on the standard error, so estimators
/// that are exactly constant do not fail on the last bit.
fn z_of(est: &Estimate, target: f64) -> f64 {
    let floor = 1e-12 * target.abs().max(1.0);
    Estimate { se: est.se.max(floor), ..*est }.z(target)
}

pub fn cumulant(ctx: &Ctx) -> Result<Output> {
    let ch = &ctx.cfg.characteristics;
    let profile = ch.classify()?;
    let mut grid: Vec<f64> = (0..=16).map(|i| i as f64 * 0.25).collect();
    grid.extend(ctx.cfg.statistics.q.iter().copied());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut table = Table::new("cumulant", &["q", "kappa", "kappa_dot", "psi"]);
    for &q in &grid {
        let k = ch.kappa(q).unwrap_or(f64::NAN);
        let kd = if k.is_finite() { ch.kappa_dot(q).unwrap_or(f64::NAN) } else { f64::NAN };
        let p = ch.psi(q).unwrap_or(f64::NAN);
        table.push(vec![num(q), num(k), num(kd), num(p)]);
    }
    let mut checks = vec![Check::tolerance(
        "classification determinate",
        !profile.indeterminate,
        format!("inf kappa = {:e}", profile.kappa_min),
    )];
    if let Some(qm) = profile.q_m {
        let r = ch.kappa_dot(qm)?;
        checks.push(Check::assertion("first-order condition at q_m", r.abs() <= 1e-7, format!("kappa_dot(q_m) = {r:e}")));
    }
    let results = json!({
        "profile": profile,
        "front_speed": ch.front_speed(),
        "kappa_at_q_m": profile.q_m.map(|q| ch.kappa(q).ok()),
    });
    Ok(Output { results, tables: vec![table], checks, counters: Counters::default() })
}

/// Observation times: χ-times when `alpha = 0`, X-times otherwise.
pub fn simulate(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let (ch, truncated_at) = finite(cfg)?;
    let sim = simulator(cfg, &ch, cfg.simulation.caps)?;
    let times = cfg.statistics.t.clone();
    let alpha = ch.alpha;
    let horizon = cfg.simulation.chi_horizon;
    let x0 = cfg.simulation.x0;
    if alpha == 0.0 && times.iter().any(|&t| t > horizon) {
        return Err(crate::error::CliError::Config("statistics.t exceeds simulation.chi_horizon".into()));
    }
    type Snap = Option<Vec<(f64, Vec<(String, f64)>, usize)>>;
    let runs: Vec<Snap> = replicate(ctx.pool, cfg.statistics.replicas, ctx.seed, |_, seed| {
        let pop = sim.run(x0, horizon, seed)?;
        if pop.capped.is_some() {
            return Ok(None);
        }
        let mut out = Vec::new();
        if alpha == 0.0 {
            for &t in &times {
                let snap = pop.snapshot(t)?;
                out.push((t, snap.iter().map(|(l, m)| (l.to_string(), *m)).collect(), 0));
            }
        } else {
            let c = lamperti(pop, alpha);
            for &t in &times {
                let s = c.snapshot(t);
                out.push((t, s.entries, s.censored));
            }
        }
        Ok(Some(out))
    })?;
    let mut table = Table::new("snapshot", &["replica_id", "t", "label", "mass"]);
    let mut alive: Vec<MeanAcc> = vec![MeanAcc::new(); times.len()];
    let mut mass: Vec<MeanAcc> = vec![MeanAcc::new(); times.len()];
    let (mut excluded, mut censored) = (0, 0);
    for (r, run) in runs.iter().enumerate() {
        let Some(snaps) = run else {
            excluded += 1;
            continue;
        };
        for (k, (t, entries, cens)) in snaps.iter().enumerate() {
            censored += cens;
            alive[k].push(entries.len() as f64);
            mass[k].push(entries.iter().map(|e| e.1).sum());
            for (label, m) in entries {
                table.push(vec![r.to_string(), num(*t), label.clone(), num(*m)]);
            }
        }
    }
    let per_time: Vec<Value> = times
        .iter()
        .enumerate()
        .map(|(k, t)| json!({"t": t, "alive": est_json(&alive[k].summary()), "total_mass": est_json(&mass[k].summary())}))
        .collect();
    let n = cfg.statistics.replicas;
    Ok(Output {
        results: json!({
            "truncated_at": truncated_at,
            "small_jump_bias": sim.spec().small_jump_bias(1.0),
            "time_scale": if alpha == 0.0 { "chi" } else { "X" },
            "per_time": per_time,
        }),
        tables: vec![table],
        checks: vec![exclusion_check(cfg, excluded, n)],
        counters: Counters { replicas: n, excluded, censored },
    })
}

pub fn martingale_check(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let (ch, truncated_at) = finite(cfg)?;
    let sim = simulator(cfg, &ch, cfg.simulation.caps)?;
    let qs = cfg.statistics.q.clone();
    let ts = cfg.statistics.t.clone();
    let kappas: Vec<f64> = qs.iter().map(|&q| ch.kappa(q)).collect::<std::result::Result<_, _>>()?;
    if let Some(i) = kappas.iter().position(|k| !k.is_finite()) {
        return Err(CoreError::Domain(format!("kappa({}) is infinite", qs[i])).into());
    }
    let horizon = ts.iter().copied().fold(0.0, f64::max);
    let x0 = cfg.simulation.x0;
    let runs: Vec<Option<Vec<f64>>> = replicate(ctx.pool, cfg.statistics.replicas, ctx.seed, |_, seed| {
        let pop = sim.run(x0, horizon, seed)?;
        if pop.capped.is_some() {
            return Ok(None);
        }
        let mut v = Vec::with_capacity(qs.len() * ts.len());
        for (i, &q) in qs.iter().enumerate() {
            for &t in &ts {
                v.push(pop.additive_martingale(t, q, kappas[i])?);
            }
        }
        Ok(Some(v))
    })?;
    let mut accs = vec![MeanAcc::new(); qs.len() * ts.len()];
    let mut excluded = 0;
    for run in &runs {
        match run {
            Some(v) => v.iter().zip(accs.iter_mut()).for_each(|(x, a)| a.push(*x)),
            None => excluded += 1,
        }
    }
    let z_max = cfg.statistics.z_max;
    let mut table = Table::new("martingale", &["q", "t", "mean", "se", "z", "n"]);
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (i, &q) in qs.iter().enumerate() {
        for (j, &t) in ts.iter().enumerate() {
            let e = accs[i * ts.len() + j].summary();
            let z = z_of(&e, 1.0);
            table.push(vec![num(q), num(t), num(e.mean), num(e.se), num(z), e.n.to_string()]);
            checks.push(Check::assertion(
                format!("mean of M_q(t) = 1 at q={q}, t={t}"),
                z.abs() <= z_max,
                format!("mean {:.6} se {:.2e} z {z:.2}", e.mean, e.se),
            ));
            rows.push(json!({"q": q, "t": t, "estimate": est_json(&e), "z": z}));
        }
    }
    let n = cfg.statistics.replicas;
    checks.push(exclusion_check(cfg, excluded, n));
    Ok(Output {
        results: json!({
            "truncated_at": truncated_at,
            "kappa": qs.iter().zip(&kappas).map(|(q, k)| json!({"q": q, "kappa": k, "small_jump_bias": sim.spec().small_jump_bias(*q)})).collect::<Vec<_>>(),
            "estimates": rows,
        }),
        tables: vec![table],
        checks,
        counters: Counters { replicas: n, excluded, censored: 0 },
    })
}

pub fn extinction(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let (ch, truncated_at) = finite(cfg)?;
    let g = cfg.extinction.generations;
    let caps = Caps { max_generation: g, ..cfg.simulation.caps };
    let sim = simulator(cfg, &ch, caps)?;
    let x0 = cfg.simulation.x0;
    let runs: Vec<Option<Vec<usize>>> = replicate(ctx.pool, cfg.statistics.replicas, ctx.seed, |_, seed| {
        let pop = sim.run(x0, f64::INFINITY, seed)?;
        if pop.capped == Some(gfx_core::homogeneous::CapKind::Particles) {
            return Ok(None);
        }
        Ok(Some(pop.generation_sizes()))
    })?;
    let oracle = iterate_offspring_pgf(ch.k, ch.lambda1.total_mass(), g as usize);
    let mut accs = vec![MeanAcc::new(); g as usize];
    let mut excluded = 0;
    for run in &runs {
        let Some(z) = run else {
            excluded += 1;
            continue;
        };
        for gen in 1..=g as usize {
            accs[gen - 1].push(if z.get(gen).copied().unwrap_or(0) == 0 { 1.0 } else { 0.0 });
        }
    }
    let mut table = Table::new("extinction", &["generation", "estimate", "se", "oracle", "z"]);
    let mut rows = Vec::new();
    let mut zs = Vec::new();
    for gen in 1..=g as usize {
        let e = accs[gen - 1].summary();
        let p = oracle[gen - 1];
        // binomial standard error under the oracle value
        let se0 = (p * (1.0 - p) / e.n.max(1) as f64).sqrt();
        let d = e.mean - p;
        let z = if se0 > 0.0 { d / se0 } else if d.abs() < 1e-12 { 0.0 } else { d.signum() * f64::INFINITY };
        table.push(vec![gen.to_string(), num(e.mean), num(e.se), num(p), num(z)]);
        rows.push(json!({"generation": gen, "estimate": est_json(&e), "oracle": p, "z": z}));
        zs.push(z);
    }
    let last = accs[g as usize - 1].summary();
    let z_max = cfg.statistics.z_max;
    let n = cfg.statistics.replicas;
    let checks = vec![
        Check::assertion(
            format!("extinction by generation {g} matches the offspring pgf"),
            zs[g as usize - 1].abs() <= z_max,
            format!("estimate {:.5} oracle {:.5} z {:.2}", last.mean, oracle[g as usize - 1], zs[g as usize - 1]),
        ),
        exclusion_check(cfg, excluded, n),
    ];
    Ok(Output {
        results: json!({"truncated_at": truncated_at, "offspring": {"kill_rate": ch.k, "split_rate": ch.lambda1.total_mass()}, "generations": rows, "all_extinct": last.mean == 1.0}),
        tables: vec![table],
        checks,
        counters: Counters { replicas: n, excluded, censored: 0 },
    })
}

pub fn couple(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let s = &cfg.simulation;
    let ch = &cfg.characteristics;
    let times = cfg.statistics.t.clone();
    let levels = s.eps_levels.clone();
    let res = Resolution { path_eps: s.path_eps, step: s.step };
    type Run = Option<(Vec<(usize, usize)>, bool)>;
    let runs: Vec<Run> = replicate(ctx.pool, cfg.statistics.replicas, ctx.seed, |_, seed| {
        let pops = coupled_truncations(ch, &levels, s.x0, s.chi_horizon, s.caps, res, seed)?;
        if pops.iter().any(|p| p.pop.capped.is_some()) {
            return Ok(None);
        }
        let mut counts = Vec::new();
        for p in &pops {
            for &t in &times {
                let snap = p.snapshot(t);
                counts.push((snap.entries.len(), snap.censored));
            }
        }
        Ok(Some((counts, check_inclusion(&pops, &times).is_none())))
    })?;
    let mut table = Table::new("couple", &["replica", "level_eps", "t", "count", "censored"]);
    let (mut excluded, mut holds, mut censored) = (0, 0, 0);
    for (r, run) in runs.iter().enumerate() {
        let Some((counts, ok)) = run else {
            excluded += 1;
            continue;
        };
        holds += *ok as usize;
        for (li, eps) in levels.iter().enumerate() {
            for (ti, t) in times.iter().enumerate() {
                let (c, cens) = counts[li * times.len() + ti];
                censored += cens;
                table.push(vec![r.to_string(), num(*eps), num(*t), c.to_string(), cens.to_string()]);
            }
        }
    }
    let n = cfg.statistics.replicas;
    let kept = n - excluded;
    let checks = vec![
        Check::assertion(
            "coarser snapshots are sub-multisets of finer ones",
            holds == kept,
            format!("inclusion held in {holds} of {kept} replicas"),
        ),
        exclusion_check(cfg, excluded, n),
    ];
    Ok(Output {
        results: json!({"eps_levels": levels, "times": times, "time_scale": if ch.alpha == 0.0 { "chi" } else { "X" }, "inclusion_holds": holds, "replicas_kept": kept}),
        tables: vec![table],
        checks,
        counters: Counters { replicas: n, excluded, censored },
    })
}

pub fn spine(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let (ch, truncated_at) = finite(cfg)?;
    let sp = &cfg.spine;
    let tilts: Vec<f64> = if sp.q.is_empty() {
        let t = ch.classify()?.require_tilts()?;
        vec![t.q_minus, t.q_plus]
    } else {
        sp.q.clone()
    };
    let t_max = sp.t.iter().copied().fold(0.0, f64::max);
    let n = cfg.statistics.replicas;
    let z_max = cfg.statistics.z_max;
    let mut table = Table::new("spine_moments", &["q", "t", "p", "mean", "se", "target", "z"]);
    let mut life_table = Table::new("spine_lifetime", &["q", "alpha", "chi_horizon", "mean_tail", "mean_estimate", "reached_fraction"]);
    let mut checks = Vec::new();
    let mut per_tilt = Vec::new();
    for (qi, &q) in tilts.iter().enumerate() {
        let spec = SpineSpec::with_resolution(&ch, q, cfg.simulation.path_eps, cfg.simulation.step)?;
        checks.push(Check::assertion(
            format!("exponent identity at q={q}"),
            spec.gate_residual <= 1e-12,
            format!("max relative residual {:.3e}", spec.gate_residual),
        ));
        let seed = rng::derive(ctx.seed, rng::domain::SPINE, qi as u64);
        let ends: Vec<Vec<f64>> = replicate(ctx.pool, n, seed, |_, s| {
            let mut g = rng::stream(s, rng::domain::SPINE, 0);
            let real = spec.simulate(1.0, t_max, &mut g)?;
            Ok(sp.t.iter().map(|&t| real.path.log_mass_at(t).unwrap()).collect())
        })?;
        let mut moments = Vec::new();
        for (ti, &t) in sp.t.iter().enumerate() {
            for &p in &sp.p {
                let e: Estimate = ends.iter().map(|v| (p * v[ti]).exp()).collect::<MeanAcc>().summary();
                let target = (t * ch.phi(q, p)?).exp();
                let z = z_of(&e, target);
                table.push(vec![num(q), num(t), num(p), num(e.mean), num(e.se), num(target), num(z)]);
                checks.push(Check::assertion(
                    format!("spine moment q={q} t={t} p={p}"),
                    z.abs() <= z_max,
                    format!("mean {:.6} target {target:.6} z {z:.2}", e.mean),
                ));
                moments.push(json!({"t": t, "p": p, "estimate": est_json(&e), "target": target, "z": z}));
            }
        }
        let slope = ends.iter().map(|v| v[sp.t.len() - 1] / sp.t[sp.t.len() - 1]).collect::<MeanAcc>().summary();
        let slope_z = z_of(&slope, spec.mean_drift);
        checks.push(Check::assertion(
            format!("spine mean slope at q={q}"),
            slope_z.abs() <= z_max,
            format!("slope {:.5} drift {:.5} z {slope_z:.2}", slope.mean, spec.mean_drift),
        ));
        let mut lifetimes = Vec::new();
        let alpha = ch.alpha;
        if alpha != 0.0 && spec.check_pairing(alpha).is_ok() {
            let mut prev = f64::INFINITY;
            let mut shrinking = true;
            for (hi, &h) in sp.lifetime_horizons.iter().enumerate() {
                let lseed = rng::derive(seed, rng::domain::AUX, hi as u64);
                let lives: Vec<(f64, f64, bool)> = replicate(ctx.pool, n, lseed, |_, s| {
                    let mut g = rng::stream(s, rng::domain::SPINE, 0);
                    let real = spec.simulate(1.0, h, &mut g)?;
                    let life = spec.lifetime(&real, alpha)?;
                    let reached = if alpha < 0.0 { real.min_log_mass() < 1e-3f64.ln() } else { real.max_log_mass() > 1e3f64.ln() };
                    Ok((life.tail, life.estimate, reached))
                })?;
                let tail = lives.iter().map(|l| l.0).collect::<MeanAcc>().mean();
                let est = lives.iter().map(|l| l.1).collect::<MeanAcc>().mean();
                let reached = lives.iter().filter(|l| l.2).count() as f64 / n as f64;
                let finite = lives.iter().all(|l| l.1.is_finite());
                shrinking &= tail < prev;
                prev = tail;
                life_table.push(vec![num(q), num(alpha), num(h), num(tail), num(est), num(reached)]);
                lifetimes.push(json!({"chi_horizon": h, "mean_tail": tail, "mean_estimate": est, "reached_fraction": reached, "all_finite": finite}));
            }
            checks.push(Check::assertion(
                format!("lifetime tail shrinks with the horizon at q={q}"),
                shrinking,
                "mean tail decreases over spine.lifetime_horizons",
            ));
        }
        per_tilt.push(json!({
            "q": q,
            "kappa_q": spec.kappa_q,
            "mean_drift": spec.mean_drift,
            "gate_residual": spec.gate_residual,
            "birth_event_rate": spec.birth_event_rate(),
            "moments": moments,
            "slope": est_json(&slope),
            "lifetimes": lifetimes,
        }));
    }
    let mut tables = vec![table];
    if !life_table.rows.is_empty() {
        tables.push(life_table);
    }
    Ok(Output {
        results: json!({"truncated_at": truncated_at, "tilts": per_tilt}),
        tables,
        checks,
        counters: Counters { replicas: n, excluded: 0, censored: 0 },
    })
}

pub fn explode(ctx: &Ctx) -> Result<Output> {
    match ctx.cfg.explosion.mode {
        ExplosionMode::Spine => explode_spine(ctx),
        ExplosionMode::Control => explode_control(ctx),
    }
}

fn explode_spine(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let (ch, truncated_at) = finite(cfg)?;
    let st = &cfg.statistics;
    let setup = ExplosionSetup::new(&ch, ch.alpha, st.a, st.a_prime, cfg.explosion.budget.clone())?;
    let plan = setup.plan(ctx.seed)?;
    let rows = map_ordered(ctx.pool, &plan.tasks, |t| Ok(setup.expand(t)?))?;
    let summary = ExplosionSummary::build(&setup, &plan, &rows);
    let offsets = setup.budget.probe_offsets();
    let (best, _) = best_probe(&rows, offsets.len());

    let mut table = Table::new(
        "explode",
        &["run", "sibling_index", "birth_size", "birth_Xtime", "contributed_flag", "best_probe_time", "count"],
    );
    for (row, task) in rows.iter().zip(&plan.tasks) {
        table.push(vec![
            row.spine.to_string(),
            row.sibling_index.to_string(),
            num(row.birth_size),
            num(row.birth_xtime),
            (row.hits.get(best).copied().unwrap_or(false) as u8).to_string(),
            num(task.zeta + offsets[best]),
            row.hit_count().to_string(),
        ]);
    }
    let mut growth = Table::new("growth", &["n_siblings", "contributing", "best_probe_offset", "successes"]);
    for g in &summary.growth {
        growth.push(vec![g.n_siblings.to_string(), g.contributing.to_string(), num(g.best_probe), g.successes.to_string()]);
    }
    let mut decades = Table::new("decades", &["decade", "n", "successes", "rate", "wilson_low", "wilson_high"]);
    for d in &summary.decades {
        decades.push(vec![
            d.decade.to_string(),
            d.n.to_string(),
            d.successes.to_string(),
            num(d.rate),
            num(d.wilson_low),
            num(d.wilson_high),
        ]);
    }
    let mut spines = Table::new("spines", &["run", "zeta", "tail", "births", "eligible", "reached"]);
    for s in &plan.spines {
        spines.push(vec![
            s.spine.to_string(),
            num(s.zeta),
            num(s.tail),
            s.births.to_string(),
            s.eligible.to_string(),
            (s.reached as u8).to_string(),
        ]);
    }
    let n = rows.len();
    let checks = vec![
        Check::assertion(
            "spine reaches the threshold in at least 95% of runs",
            summary.reach_fraction >= 0.95,
            format!("{} of {} spines", summary.spines_reached, summary.spines),
        ),
        Check::assertion(
            "no decay of sibling success as birth sizes shrink",
            summary.no_decay(),
            format!("slope z = {:.2} (fails below {:.3})", summary.size_trend_z, -Z99),
        ),
        Check::assertion(
            "contributing siblings grow with the budget",
            summary.grows(),
            format!(
                "counts {:?}, rate {:.4} z {:.2}",
                summary.growth.iter().map(|g| g.contributing).collect::<Vec<_>>(),
                summary.rate,
                summary.rate_z
            ),
        ),
        Check::tolerance(
            "enough eligible siblings",
            !summary.short,
            format!("{n} of {} requested", setup.budget.total()),
        ),
    ];
    Ok(Output {
        results: json!({"truncated_at": truncated_at, "q_m": setup.q_m, "front_speed": setup.front_speed, "summary": summary}),
        tables: vec![table, growth, decades, spines],
        checks,
        counters: Counters { replicas: n, excluded: 0, censored: summary.censored },
    })
}

/// Best interval count of untilted populations as the χ-horizon grows.
fn explode_control(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let (ch, truncated_at) = finite(cfg)?;
    if ch.alpha == 0.0 {
        return Err(CoreError::Domain("the control run needs alpha != 0".into()).into());
    }
    let sim = simulator(cfg, &ch, cfg.simulation.caps)?;
    let ex = &cfg.explosion;
    let st = &cfg.statistics;
    let x0 = cfg.simulation.x0;
    let runs: Vec<Option<Vec<(usize, bool)>>> = replicate(ctx.pool, st.replicas, ctx.seed, |_, seed| {
        match budget_counts(&sim, ch.alpha, x0, &ex.control_horizons, &ex.control_probes, st.a, st.a_prime, seed) {
            Ok(v) => Ok(Some(v)),
            Err(CoreError::Precondition(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    })?;
    let mut table = Table::new("control", &["replica", "chi_horizon", "max_count", "censored"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut means = vec![MeanAcc::new(); ex.control_horizons.len()];
    let (mut excluded, mut censored) = (0, 0);
    for (r, run) in runs.iter().enumerate() {
        let Some(v) = run else {
            excluded += 1;
            continue;
        };
        for (k, &(c, cens)) in v.iter().enumerate() {
            let h = ex.control_horizons[k];
            censored += cens as usize;
            table.push(vec![r.to_string(), num(h), c.to_string(), cens.to_string()]);
            xs.push(h.log2());
            ys.push(c as f64);
            means[k].push(c as f64);
        }
    }
    let fit = ols(&xs, &ys);
    let z = match fit {
        Some(f) if f.se > 0.0 => f.slope / f.se,
        Some(f) if f.slope == 0.0 => 0.0,
        Some(f) => f.slope.signum() * f64::INFINITY,
        None => 0.0,
    };
    let checks = vec![
        Check::assertion(
            "interval count is flat in the budget",
            z < Z99,
            format!("slope z = {z:.2} (fails above {Z99:.3})"),
        ),
        exclusion_check(cfg, excluded, st.replicas),
    ];
    let per_budget: Vec<Value> = ex
        .control_horizons
        .iter()
        .zip(&means)
        .map(|(h, m)| json!({"chi_horizon": h, "mean_max_count": est_json(&m.summary())}))
        .collect();
    Ok(Output {
        results: json!({"truncated_at": truncated_at, "per_budget": per_budget, "slope": fit, "slope_z": z}),
        tables: vec![table],
        checks,
        counters: Counters { replicas: st.replicas, excluded, censored },
    })
}

pub fn change_of_measure(ctx: &Ctx) -> Result<Output> {
    let cfg = ctx.cfg;
    let (ch, truncated_at) = finite(cfg)?;
    let st = &cfg.statistics;
    let statistic = cfg.change_of_measure.statistic;
    let mut table = Table::new(
        "change_of_measure",
        &["q", "t", "p_mean", "p_se", "q_mean", "q_se", "z", "analytic", "z_p", "z_q"],
    );
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let (mut excluded, mut total) = (0, 0);
    let mut idx = 0u64;
    for &q in &st.q {
        for &t in &st.t {
            let seed = rng::derive(ctx.seed, rng::domain::AUX, idx);
            idx += 1;
            let c = change_of_measure_check(&ch, q, t, statistic, st.replicas, cfg.simulation.caps, seed)?;
            excluded += c.excluded_p + c.excluded_q;
            total += 2 * st.replicas;
            let analytic = match statistic {
                Statistic::One => Some((1.0, 1.0)),
                Statistic::AliveCount(1) => {
                    let spec = SpineSpec::new(&ch, q)?;
                    let p_side = (t * (ch.psi2(q)? - ch.kappa(q)? - ch.lambda1.total_mass())).exp();
                    let q_side = (-t * spec.birth_event_rate()).exp();
                    Some((p_side, q_side))
                }
                _ => None,
            };
            let (zp, zq) = match analytic {
                Some((pa, qa)) => (c.p_side.z(pa), c.q_side.z(qa)),
                None => (f64::NAN, f64::NAN),
            };
            table.push(vec![
                num(q),
                num(t),
                num(c.p_side.mean),
                num(c.p_side.se),
                num(c.q_side.mean),
                num(c.q_side.se),
                num(c.z),
                num(analytic.map_or(f64::NAN, |a| a.1)),
                num(zp),
                num(zq),
            ]);
            checks.push(Check::assertion(
                format!("both sides agree at q={q}, t={t}"),
                c.z.abs() <= st.z_max,
                format!("P {:.5} Q {:.5} z {:.2}", c.p_side.mean, c.q_side.mean, c.z),
            ));
            if let Some((pa, qa)) = analytic {
                checks.push(Check::assertion(
                    format!("closed forms coincide at q={q}, t={t}"),
                    (pa - qa).abs() <= 1e-12 * qa.abs().max(1.0),
                    format!("P-side {pa:.15} Q-side {qa:.15}"),
                ));
                checks.push(Check::assertion(
                    format!("estimates match the closed form at q={q}, t={t}"),
                    zp.abs() <= st.z_max && zq.abs() <= st.z_max,
                    format!("z_P {zp:.2} z_Q {zq:.2}"),
                ));
            }
            rows.push(json!({"q": q, "t": t, "result": c, "analytic": analytic.map(|a| json!({"p_side": a.0, "q_side": a.1}))}));
        }
    }
    checks.push(exclusion_check(cfg, excluded, total));
    Ok(Output {
        results: json!({"truncated_at": truncated_at, "statistic": statistic, "rows": rows}),
        tables: vec![table],
        checks,
        counters: Counters { replicas: total, excluded, censored: 0 },
    })
}
