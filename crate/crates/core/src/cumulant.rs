//! Laplace exponents, the cumulant `κ` and its calculus.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::jump_measure::{JumpMeasure, TruncatedPair};

/// Threshold below which `inf κ` is treated as indistinguishable from zero.
pub const TOL_POS: f64 = 1e-12;
/// Upper end of the classification grid.
pub const Q_MAX: f64 = 64.0;
const GRID_POINTS: usize = 512;
const GRID_FLOOR: f64 = 1e-3;
const QM_TOL: f64 = 1e-9;
const QM_AGREEMENT: f64 = 1e-6;
const TILT_DELTA_START: f64 = 0.5;
const TILT_DELTA_MIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCharacteristics {
    #[serde(default)]
    k: f64,
    #[serde(default)]
    sigma2: f64,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    lambda1: JumpMeasure,
    #[serde(default)]
    lambda2: JumpMeasure,
    #[serde(default)]
    alpha: f64,
}

/// Killing rate, Gaussian coefficient, drift, birth and non-birth jump
/// measures, and the self-similarity index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCharacteristics")]
pub struct Characteristics {
    pub k: f64,
    pub sigma2: f64,
    pub b: f64,
    pub lambda1: JumpMeasure,
    pub lambda2: JumpMeasure,
    pub alpha: f64,
}

impl TryFrom<RawCharacteristics> for Characteristics {
    type Error = Error;

    fn try_from(r: RawCharacteristics) -> Result<Self> {
        Characteristics::new(r.k, r.sigma2, r.b, r.lambda1, r.lambda2, r.alpha)
    }
}

/// Exponents `q∓` on either side of `q_m` with the derivative data used to
/// accept them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tilts {
    pub q_minus: f64,
    pub q_plus: f64,
    pub delta: f64,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    pub kappa_dot_minus: f64,
    pub kappa_dot_plus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CumulantProfile {
    pub q_bar: f64,
    pub q_m: Option<f64>,
    /// `κ(q_m)` when the minimum exists, otherwise the smallest value seen.
    pub kappa_min: f64,
    pub hypothesis_h: bool,
    /// `|κ_min| ≤ TOL_POS`: neither (H) nor a reliable witness.
    pub indeterminate: bool,
    pub technical_condition: bool,
    pub malthusian_witness: Option<f64>,
    pub degenerate: bool,
    pub tilts: Option<Tilts>,
    pub tilt_error: Option<String>,
}

impl CumulantProfile {
    /// Ready for spine experiments: (H) holds and tilts were found.
    pub fn require_tilts(&self) -> Result<Tilts> {
        if !self.hypothesis_h {
            return Err(Error::HypothesisFails(format!(
                "inf kappa = {:.6e}{}",
                self.kappa_min,
                if self.indeterminate { " (indeterminate)" } else { "" }
            )));
        }
        self.tilts.ok_or_else(|| {
            Error::TiltSelection(self.tilt_error.clone().unwrap_or_else(|| "no tilts".into()))
        })
    }
}

impl Characteristics {
    pub fn new(
        k: f64,
        sigma2: f64,
        b: f64,
        lambda1: JumpMeasure,
        lambda2: JumpMeasure,
        alpha: f64,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidCharacteristics(m));
        if !(k >= 0.0 && k.is_finite()) {
            return bad(format!("killing rate k = {k} must be finite and nonnegative"));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return bad(format!("sigma2 = {sigma2} must be finite and nonnegative"));
        }
        if !b.is_finite() || !alpha.is_finite() {
            return bad("b and alpha must be finite".into());
        }
        lambda1.validate()?;
        lambda2.validate()?;
        let ch = Characteristics { k, sigma2, b, lambda1, lambda2, alpha };
        if !(k > 0.0 || ch.psi_dot_unchecked(0.0) < 0.0) {
            return bad(format!(
                "need k > 0 or psi'(0+) < 0, got k = {k}, psi'(0+) = {}",
                ch.psi_dot_unchecked(0.0)
            ));
        }
        Ok(ch)
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Characteristics { alpha, ..self.clone() }
    }

    fn check_q(q: f64) -> Result<()> {
        if q >= 0.0 && q.is_finite() {
            Ok(())
        } else {
            Err(domain(format!("exponent q = {q} must be finite and nonnegative")))
        }
    }

    fn psi_unchecked(&self, q: f64) -> f64 {
        -self.k
            + 0.5 * self.sigma2 * q * q
            + self.b * q
            + self.lambda1.laplace_integral(q)
            + self.lambda2.laplace_integral(q)
    }

    fn psi_dot_unchecked(&self, q: f64) -> f64 {
        self.sigma2 * q
            + self.b
            + self.lambda1.laplace_integral_dot(q)
            + self.lambda2.laplace_integral_dot(q)
    }

    /// `Ψ(q)`.
    pub fn psi(&self, q: f64) -> Result<f64> {
        Self::check_q(q)?;
        Ok(self.psi_unchecked(q))
    }

    /// `Ψ̇(q)`.
    pub fn psi_dot(&self, q: f64) -> Result<f64> {
        Self::check_q(q)?;
        Ok(self.psi_dot_unchecked(q))
    }

    /// `∫(1-e^y) Λ₁(dy)`, the drift shift seen by a particle between splits.
    pub fn birth_drift_shift(&self) -> Result<f64> {
        let s = self.lambda1.frac_moment(1.0)?;
        if s.is_finite() {
            Ok(s)
        } else {
            Err(domain("integral of (1 - e^y) against lambda1 diverges".to_string()))
        }
    }

    /// `Ψ₂(q)`, the exponent of a particle's mass between splits.
    pub fn psi2(&self, q: f64) -> Result<f64> {
        Self::check_q(q)?;
        let drift = self.b + self.birth_drift_shift()?;
        Ok(-self.k + 0.5 * self.sigma2 * q * q + drift * q + self.lambda2.laplace_integral(q))
    }

    /// Whether `κ(q) < ∞`.
    pub fn kappa_finite(&self, q: f64) -> bool {
        q >= 0.0 && self.lambda1.frac_moment_finite(q)
    }

    fn kappa_unchecked(&self, q: f64) -> f64 {
        if !self.kappa_finite(q) {
            return f64::INFINITY;
        }
        self.psi_unchecked(q) + self.lambda1.frac_moment(q).unwrap_or(f64::INFINITY)
    }

    fn kappa_dot_unchecked(&self, q: f64) -> f64 {
        self.psi_dot_unchecked(q) + self.lambda1.frac_moment_log(q).unwrap_or(f64::NEG_INFINITY)
    }

    /// `κ(q)`, possibly `+∞`.
    pub fn kappa(&self, q: f64) -> Result<f64> {
        Self::check_q(q)?;
        Ok(self.kappa_unchecked(q))
    }

    /// Right derivative `κ̇(q)`, computed analytically.
    pub fn kappa_dot(&self, q: f64) -> Result<f64> {
        Self::check_q(q)?;
        if !self.kappa_finite(q) {
            return Err(domain(format!(
                "kappa is infinite at q = {q} (q_bar = {})",
                self.q_bar()
            )));
        }
        Ok(self.kappa_dot_unchecked(q))
    }

    /// `inf {q : κ(q) < ∞}`.
    pub fn q_bar(&self) -> f64 {
        self.lambda1.q_bar()
    }

    pub fn truncation(&self, eps: f64) -> Result<TruncatedPair> {
        TruncatedPair::new(&self.lambda1, &self.lambda2, eps)
    }

    /// Characteristics with `Λ₁^(ε)` as birth measure and `Λ₂^(ε)` as
    /// non-birth measure; `Ψ` is unchanged.
    pub fn truncated(&self, eps: f64) -> Result<Characteristics> {
        let tp = self.truncation(eps)?;
        Ok(Characteristics {
            lambda1: tp.lambda1_eps,
            lambda2: tp.lambda2_eps,
            ..self.clone()
        })
    }

    /// `κ^(ε)(q)`; finite for every `q ≥ 0`.
    pub fn kappa_truncated(&self, eps: f64, q: f64) -> Result<f64> {
        Self::check_q(q)?;
        let tp = self.truncation(eps)?;
        Ok(self.psi_unchecked(q) + tp.lambda1_eps.frac_moment(q)?)
    }

    /// `Φ(p) = κ(q_tilt + p) - κ(q_tilt)`.
    pub fn phi(&self, q_tilt: f64, p: f64) -> Result<f64> {
        let base = self.kappa(q_tilt)?;
        if !base.is_finite() {
            return Err(domain(format!("kappa is infinite at the tilt {q_tilt}")));
        }
        let q = q_tilt + p;
        Self::check_q(q)?;
        Ok(self.kappa_unchecked(q) - base)
    }

    /// Whether `κ̇(q) < κ(q)/q`.
    pub fn biggins_inequality(&self, q: f64) -> Result<bool> {
        if !(q > 0.0) {
            return Err(domain(format!("need q > 0, got {q}")));
        }
        Ok(self.kappa_dot(q)? < self.kappa(q)? / q)
    }

    fn grid(&self) -> Vec<f64> {
        let lo = self.q_bar().max(GRID_FLOOR);
        let r = (Q_MAX / lo).powf(1.0 / GRID_POINTS as f64);
        (1..=GRID_POINTS).map(|i| if i == GRID_POINTS { Q_MAX } else { lo * r.powi(i as i32) }).collect()
    }

    /// Minimiser of `κ` on `[q_bar, ∞)`, or `None` when `κ` keeps decreasing.
    ///
    /// The returned value comes from bisection on `κ̇`; a golden-section
    /// search on `κ` alone cross-checks it.
    pub fn find_qm(&self) -> Result<Option<f64>> {
        let q_bar = self.q_bar();
        if self.kappa_finite(q_bar) && self.kappa_dot_unchecked(q_bar) >= 0.0 {
            return Ok(Some(q_bar));
        }
        let grid = self.grid();
        let mut left = q_bar;
        let mut right = None;
        for &q in &grid {
            if self.kappa_dot_unchecked(q) >= 0.0 {
                right = Some(q);
                break;
            }
            left = q;
        }
        let mut right = match right {
            Some(r) => r,
            None => {
                let mut q = Q_MAX;
                loop {
                    q *= 2.0;
                    if q > 1e6 {
                        return Ok(None);
                    }
                    if self.kappa_dot_unchecked(q) >= 0.0 {
                        break q;
                    }
                    left = q;
                }
            }
        };
        let (a0, b0) = (left, right);
        // bisection on the derivative; endpoints are never evaluated at q_bar
        while right - left > 1e-3 * QM_TOL * right.max(1.0) {
            let mid = 0.5 * (left + right);
            if mid <= left || mid >= right {
                break;
            }
            if self.kappa_dot_unchecked(mid) >= 0.0 {
                right = mid;
            } else {
                left = mid;
            }
        }
        let q_bis = 0.5 * (left + right);
        let q_gs = golden_section(|q| self.kappa_unchecked(q), a0, b0, 1e-10);
        if (q_gs - q_bis).abs() > QM_AGREEMENT {
            return Err(Error::MinimiserMismatch { golden: q_gs, bisection: q_bis });
        }
        Ok(Some(q_bis))
    }

    /// `inf_q κ(q)/q`, the asymptotic speed of the largest log-mass under
    /// (H). `None` if the infimum is not attained on the search range.
    pub fn front_speed(&self) -> Option<f64> {
        // h(q) = q κ̇(q) - κ(q) is nondecreasing, and κ/q is minimal at its root
        let h = |q: f64| q * self.kappa_dot_unchecked(q) - self.kappa_unchecked(q);
        let grid = self.grid();
        let mut left = self.q_bar();
        let mut right = None;
        for &q in &grid {
            if h(q) >= 0.0 {
                right = Some(q);
                break;
            }
            left = q;
        }
        let mut right = right?;
        for _ in 0..200 {
            let mid = 0.5 * (left + right);
            if mid <= left || mid >= right {
                break;
            }
            if h(mid) >= 0.0 {
                right = mid;
            } else {
                left = mid;
            }
        }
        let q = 0.5 * (left + right);
        Some(self.kappa_unchecked(q) / q)
    }

    /// `q_m ∓ δ` for the largest `δ` in `0.5, 0.25, …` passing both the
    /// sign conditions on `κ̇` and `κ̇(q) < κ(q)/q`.
    pub fn select_tilts(&self, q_m: f64) -> Result<Tilts> {
        let mut delta = TILT_DELTA_START;
        while delta >= TILT_DELTA_MIN {
            let (qm, qp) = (q_m - delta, q_m + delta);
            if qm > 0.0 && self.kappa_finite(qm) {
                let (km, kp) = (self.kappa_unchecked(qm), self.kappa_unchecked(qp));
                let (dm, dp) = (self.kappa_dot_unchecked(qm), self.kappa_dot_unchecked(qp));
                if dm < 0.0 && dp > 0.0 && dm < km / qm && dp < kp / qp {
                    return Ok(Tilts {
                        q_minus: qm,
                        q_plus: qp,
                        delta,
                        kappa_minus: km,
                        kappa_plus: kp,
                        kappa_dot_minus: dm,
                        kappa_dot_plus: dp,
                    });
                }
            }
            delta *= 0.5;
        }
        Err(Error::TiltSelection(format!("no admissible delta down to {TILT_DELTA_MIN} around q_m = {q_m}")))
    }

    /// Fills every field of [`CumulantProfile`].
    pub fn classify(&self) -> Result<CumulantProfile> {
        let q_bar = self.q_bar();
        let degenerate = self.lambda1.is_zero();
        let technical_condition = q_bar > 0.0 || self.kappa_dot_unchecked(0.0) < 0.0;

        let mut points = Vec::with_capacity(GRID_POINTS + 1);
        if self.kappa_finite(0.0) {
            points.push(0.0);
        }
        points.extend(self.grid());
        let values: Vec<f64> = points.iter().map(|&q| self.kappa_unchecked(q)).collect();
        let witness = match values.iter().position(|&v| v <= 0.0) {
            None => None,
            Some(0) => Some(points[0]),
            Some(i) => {
                let (mut lo, mut hi) = (points[i - 1], points[i]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.kappa_unchecked(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some(hi)
            }
        };

        let q_m = self.find_qm()?;
        let grid_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let kappa_min = match q_m {
            Some(q) => self.kappa_unchecked(q).min(grid_min),
            None => grid_min,
        };
        let indeterminate = kappa_min.abs() <= TOL_POS;
        let hypothesis_h = q_m.is_some() && kappa_min > TOL_POS && witness.is_none() && !degenerate;
        let (tilts, tilt_error) = if hypothesis_h {
            match self.select_tilts(q_m.unwrap()) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, None)
        };
        Ok(CumulantProfile {
            q_bar,
            q_m,
            kappa_min,
            hypothesis_h,
            indeterminate,
            technical_condition,
            malthusian_witness: witness,
            degenerate,
            tilts,
            tilt_error,
        })
    }
}

/// Golden-section search for the minimiser of a unimodal `f` on `(a, b)`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn config_a() -> Characteristics {
        Characteristics::new(0.0, 0.0, 0.0, JumpMeasure::atoms(vec![(-LN2, 1.0)]).unwrap(), JumpMeasure::zero(), 0.0)
            .unwrap()
    }

    fn config_b() -> Characteristics {
        Characteristics { b: -2.0, ..config_a() }
    }

    fn config_d() -> Characteristics {
        Characteristics::new(0.0, 1.0, 0.0, JumpMeasure::power(1.0, 0.5, 1.0).unwrap(), JumpMeasure::zero(), 0.0)
            .unwrap()
    }

    fn kappa_a(q: f64) -> f64 {
        2f64.powf(1.0 - q) - 1.0 + q / 2.0
    }

    #[test]
    fn psi_examples() {
        let g = Characteristics::new(0.0, 2.0, -1.0, JumpMeasure::zero(), JumpMeasure::zero(), 0.0).unwrap();
        assert!((g.psi(2.0).unwrap() - 2.0).abs() < 1e-15);
        let kill = Characteristics::new(1.0, 0.0, 0.0, JumpMeasure::zero(), JumpMeasure::zero(), 0.0).unwrap();
        for q in [0.0, 1.0, 3.3] {
            assert_eq!(kill.psi(q).unwrap(), -1.0);
        }
        assert!((config_a().psi(2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(config_a().psi(-1.0).is_err());
    }

    #[test]
    fn pure_gaussian_psi_is_q_squared() {
        // the validity gate needs k > 0 or a negative slope at 0; pure σ² has
        // neither, so build it unchecked
        let g = Characteristics {
            k: 0.0,
            sigma2: 2.0,
            b: 0.0,
            lambda1: JumpMeasure::zero(),
            lambda2: JumpMeasure::zero(),
            alpha: 0.0,
        };
        assert!((g.psi(2.0).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn validity_gate() {
        let r = Characteristics::new(0.0, 1.0, 0.5, JumpMeasure::zero(), JumpMeasure::zero(), 0.0);
        assert!(matches!(r, Err(Error::InvalidCharacteristics(_))));
        assert!(Characteristics::new(-1.0, 0.0, -1.0, JumpMeasure::zero(), JumpMeasure::zero(), 0.0).is_err());
    }

    #[test]
    fn psi2_examples() {
        let a = config_a();
        assert!((a.psi2(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(a.psi2(0.0).unwrap(), 0.0);
        let no_births =
            Characteristics::new(0.5, 1.0, -0.3, JumpMeasure::zero(), JumpMeasure::atoms(vec![(-0.4, 2.0)]).unwrap(), 0.0)
                .unwrap();
        for q in [0.0, 0.7, 2.0] {
            assert_eq!(no_births.psi2(q).unwrap(), no_births.psi(q).unwrap());
        }
    }

    #[test]
    fn kappa_examples() {
        let a = config_a();
        assert!((a.kappa(2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((a.kappa(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((a.kappa(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(config_d().kappa(0.25).unwrap(), f64::INFINITY);
        assert_eq!(config_d().kappa(0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kappa_dot_examples() {
        let a = config_a();
        assert!((a.kappa_dot(0.0).unwrap() - (-2.0 * LN2 + 0.5)).abs() < 1e-14);
        assert!((a.kappa_dot(2.0).unwrap() - (-LN2 / 2.0 + 0.5)).abs() < 1e-14);
        assert!(matches!(config_d().kappa_dot(0.3), Err(Error::Domain(_))));
    }

    #[test]
    fn kappa_dot_matches_finite_difference() {
        let mixed = Characteristics::new(
            0.3,
            0.4,
            -0.2,
            JumpMeasure::sum(vec![
                JumpMeasure::power(0.7, 0.3, 2.0).unwrap(),
                JumpMeasure::atoms(vec![(-1.0, 0.5)]).unwrap(),
            ]),
            JumpMeasure::atoms(vec![(-0.2, 1.5)]).unwrap(),
            0.0,
        )
        .unwrap();
        for ch in [config_a(), config_b(), config_d(), mixed] {
            let lo = ch.q_bar() + 0.05;
            for q in [lo, lo + 0.3, 1.0, 1.9, 3.0, 6.0] {
                let h = 1e-6;
                let fd = (ch.kappa(q + h).unwrap() - ch.kappa(q - h).unwrap()) / (2.0 * h);
                let an = ch.kappa_dot(q).unwrap();
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "q={q}: {fd} vs {an}");
            }
        }
    }

    /// Independent oracle: scan κ̇ on a grid of step 1e-4, then bisect.
    fn qm_oracle(kd: impl Fn(f64) -> f64, lo: f64) -> f64 {
        let mut q = lo;
        while kd(q + 1e-4) < 0.0 {
            q += 1e-4;
        }
        let (mut a, mut b) = (q, q + 1e-4);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if kd(m) < 0.0 {
                a = m
            } else {
                b = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn find_qm_config_a() {
        let q = config_a().find_qm().unwrap().unwrap();
        let kd = |q: f64| -LN2 * 2f64.powf(1.0 - q) + 0.5;
        let oracle = qm_oracle(kd, 0.0);
        assert!((q - oracle).abs() < 1e-9, "{q} vs {oracle}");
        assert!((q - (1.0 + (2.0 * LN2).log2())).abs() < 1e-9);
        assert!((q - 1.471233).abs() < 1e-6);
        assert!((kappa_a(q) - 0.456965).abs() < 1e-6);
    }

    #[test]
    fn find_qm_config_d_first_order_condition() {
        let d = config_d();
        let q = d.find_qm().unwrap().unwrap();
        assert!(q > 0.5);
        assert!(d.kappa_dot(q).unwrap().abs() < 1e-7);
    }

    #[test]
    fn find_qm_reports_no_minimum_for_config_b() {
        assert_eq!(config_b().find_qm().unwrap(), None);
    }

    #[test]
    fn find_qm_returns_q_bar_when_increasing() {
        // κ = -1 + 2^{1-q}... shifted up with large positive drift: κ̇(0) > 0
        let ch = Characteristics::new(1.0, 0.0, 3.0, JumpMeasure::atoms(vec![(-LN2, 1.0)]).unwrap(), JumpMeasure::zero(), 0.0)
            .unwrap();
        assert_eq!(ch.find_qm().unwrap(), Some(0.0));
    }

    #[test]
    fn classify_configs() {
        let a = config_a().classify().unwrap();
        assert!(a.hypothesis_h && a.technical_condition && !a.indeterminate && !a.degenerate);
        assert!(a.malthusian_witness.is_none());
        assert!((a.kappa_min - 0.456965).abs() < 1e-6);

        let b = config_b().classify().unwrap();
        assert!(!b.hypothesis_h);
        let w = b.malthusian_witness.unwrap();
        assert!(config_b().kappa(w).unwrap() <= 0.0);
        assert!(config_b().kappa(1.0).unwrap() == -1.5);

        let d = config_d().classify().unwrap();
        assert!(d.technical_condition);
        assert_eq!(d.q_bar, 0.5);

        let c = Characteristics::new(1.0, 0.0, 0.0, JumpMeasure::atoms(vec![(-LN2, 2.0)]).unwrap(), JumpMeasure::zero(), 0.0)
            .unwrap()
            .classify()
            .unwrap();
        assert!(!c.hypothesis_h && c.malthusian_witness.is_some());
        let exact = -1.0 + 1.0 / LN2 + LN2.log2();
        assert!((c.kappa_min - exact).abs() < 1e-9, "{} vs {exact}", c.kappa_min);

        let degenerate =
            Characteristics::new(0.0, 0.0, -1.0, JumpMeasure::zero(), JumpMeasure::atoms(vec![(-1.0, 1.0)]).unwrap(), 0.0)
                .unwrap()
                .classify()
                .unwrap();
        assert!(degenerate.degenerate && !degenerate.hypothesis_h);
    }

    #[test]
    fn select_tilts_config_a() {
        let a = config_a();
        let t = a.classify().unwrap().require_tilts().unwrap();
        assert!((t.q_minus - 0.971233).abs() < 1e-6);
        assert!((t.q_plus - 1.971233).abs() < 1e-6);
        assert!(t.kappa_dot_minus < 0.0 && t.kappa_dot_plus > 0.0);
        assert!(a.biggins_inequality(1.0).unwrap());
        assert!(a.biggins_inequality(2.0).unwrap());
        assert!((a.kappa_dot(1.0).unwrap() + 0.193147).abs() < 1e-6);
        assert!(config_b().classify().unwrap().require_tilts().is_err());
    }

    #[test]
    fn phi_examples() {
        let a = config_a();
        assert_eq!(a.phi(1.3, 0.0).unwrap(), 0.0);
        for p in [-0.5, 0.0, 0.5, 1.0, 2.5] {
            let exact = 2f64.powf(-p) - 1.0 + p / 2.0;
            assert!((a.phi(1.0, p).unwrap() - exact).abs() < 1e-14);
            assert!((a.phi(1.0, p).unwrap() + a.kappa(1.0).unwrap() - a.kappa(1.0 + p).unwrap()).abs() < 1e-15);
        }
        let h = 1e-6;
        let slope = (a.phi(1.0, h).unwrap() - a.phi(1.0, -h).unwrap()) / (2.0 * h);
        assert!((slope - a.kappa_dot(1.0).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn kappa_truncated_examples() {
        let a = config_a();
        for q in [0.0, 1.0, 2.5] {
            assert_eq!(a.kappa_truncated(0.5, q).unwrap(), a.kappa(q).unwrap());
            assert!((a.kappa_truncated(0.8, q).unwrap() - a.psi(q).unwrap()).abs() < 1e-15);
        }
        assert_eq!(a.kappa_truncated(0.8, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn truncation_uniform_bound_config_d() {
        let d = config_d();
        for eps in [0.1, 0.01] {
            let small = d.lambda1.restrict_above(eps).frac_moment(0.75).unwrap();
            for q in [0.75, 1.0, 1.5, 2.0, 4.0] {
                let full = d.kappa(q).unwrap();
                let tr = d.kappa_truncated(eps, q).unwrap();
                assert!(tr <= full);
                assert!((full - tr) <= small * (1.0 + 1e-10));
            }
        }
        // truncated values increase as eps decreases
        for q in [0.0, 0.6, 1.0, 3.0] {
            let v: Vec<f64> = [0.3, 0.1, 0.03, 0.01].iter().map(|&e| d.kappa_truncated(e, q).unwrap()).collect();
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{v:?}");
        }
    }

    #[test]
    fn convexity_on_grid() {
        for ch in [config_a(), config_b(), config_d()] {
            let lo = ch.q_bar() + 0.01;
            let qs: Vec<f64> = (0..60).map(|i| lo + 0.1 * i as f64).collect();
            for w in qs.windows(3) {
                let (k1, k2, k3) = (ch.kappa(w[0]).unwrap(), ch.kappa(w[1]).unwrap(), ch.kappa(w[2]).unwrap());
                assert!(k2 <= 0.5 * (k1 + k3) + 1e-10);
            }
        }
    }

    #[test]
    fn front_speed_config_a() {
        let v = config_a().front_speed().unwrap();
        // brute force minimum of κ(q)/q
        let brute = (1..200_000).map(|i| i as f64 * 1e-4).map(|q| kappa_a(q) / q).fold(f64::INFINITY, f64::min);
        assert!((v - brute).abs() < 1e-7, "{v} vs {brute}");
    }

    #[test]
    fn config_json() {
        let json = r#"{"k":0,"sigma2":0,"b":-2,"lambda1":{"type":"atoms","atoms":[[-0.6931471805599453,1.0]]},"alpha":-1}"#;
        let ch: Characteristics = serde_json::from_str(json).unwrap();
        assert_eq!(ch.b, -2.0);
        assert_eq!(ch.alpha, -1.0);
        assert!(ch.lambda2.is_zero());
        let bad = r#"{"k":0,"sigma2":1,"b":1}"#;
        assert!(serde_json::from_str::<Characteristics>(bad).is_err());
        let unknown = r#"{"k":1,"gamma":1}"#;
        assert!(serde_json::from_str::<Characteristics>(unknown).is_err());
    }
}
