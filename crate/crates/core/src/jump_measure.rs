//! Lévy measures on `(-∞, 0)`.
//!
//! The family is closed on purpose: every variant has an exact tail mass and
//! an exact restricted sampler, which the truncation coupling relies on. A
//! power density `c·|y|^{-1-β}` on `(-L, -lower)` covers both the infinite
//! activity case (`lower = 0`) and its restrictions away from the origin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Error, Result};
use crate::quad;

/// Width of the interval `(0, δ)` (in `u = -y`) integrated analytically.
pub const NEAR_ZERO: f64 = 1e-6;

const QUAD_REL_TOL: f64 = 1e-13;
const QUAD_ABS_TOL: f64 = 1e-16;

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum JumpMeasure {
    /// Point masses `(location y < 0, weight w > 0)`.
    Atoms { atoms: Vec<(f64, f64)> },
    /// Density `c·|y|^{-1-β}` on `(-cutoff, -lower)`.
    Power {
        c: f64,
        beta: f64,
        #[serde(rename = "L")]
        cutoff: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        lower: f64,
    },
    Scaled { factor: f64, inner: Box<JumpMeasure> },
    Sum { parts: Vec<JumpMeasure> },
}

impl Default for JumpMeasure {
    fn default() -> Self {
        JumpMeasure::zero()
    }
}

/// `e^{-qu} - 1 + q(1 - e^{-u})`, the compensated Laplace kernel at `y = -u`.
pub(crate) fn psi_kernel(q: f64, u: f64) -> f64 {
    if u * q.max(1.0) < 0.1 {
        // Σ_{n≥2} (-u)^n (q^n - q) / n!
        let mut sum = 0.0;
        let mut upow = -u; // (-u)^n / n! built incrementally
        let mut qpow = q;
        for n in 2..=12 {
            upow *= -u / n as f64;
            qpow *= q;
            sum += upow * (qpow - q);
        }
        sum
    } else {
        (-q * u).exp_m1() - q * (-u).exp_m1()
    }
}

/// `∂/∂q` of [`psi_kernel`]: `-u e^{-qu} + 1 - e^{-u}`.
pub(crate) fn psi_dot_kernel(q: f64, u: f64) -> f64 {
    if u * q.max(1.0) < 0.1 {
        // Σ_{m≥2} (-1)^m u^m (m q^{m-1} - 1) / m!
        let mut sum = 0.0;
        let mut upow = -u; // (-u)^m / m!
        let mut qpow = 1.0; // q^{m-1}
        for m in 2..=12 {
            upow *= -u / m as f64;
            qpow *= q;
            sum += upow * (m as f64 * qpow - 1.0);
        }
        sum
    } else {
        -u * (-q * u).exp() - (-u).exp_m1()
    }
}

/// `1 - e^{-u}` without cancellation.
fn one_minus_exp(u: f64) -> f64 {
    -(-u).exp_m1()
}

fn power_mass(c: f64, beta: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        0.0
    } else {
        c / beta * (a.powf(-beta) - b.powf(-beta))
    }
}

/// `∫_a^b g(u) c u^{-1-β} du` computed in the variable `v = ln u`.
fn power_far<G: Fn(f64) -> f64>(c: f64, beta: f64, a: f64, b: f64, g: G) -> f64 {
    if b <= a {
        return 0.0;
    }
    quad::integrate(
        |v: f64| {
            let u = v.exp();
            g(u) * c * (-beta * v).exp()
        },
        a.ln(),
        b.ln(),
        QUAD_ABS_TOL * c,
        QUAD_REL_TOL,
    )
}

impl JumpMeasure {
    pub fn zero() -> Self {
        JumpMeasure::Atoms { atoms: Vec::new() }
    }

    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let m = JumpMeasure::Atoms { atoms };
        m.validate()?;
        Ok(m)
    }

    /// Density `c·|y|^{-1-β}` on `(-cutoff, 0)`.
    pub fn power(c: f64, beta: f64, cutoff: f64) -> Result<Self> {
        let m = JumpMeasure::Power { c, beta, cutoff, lower: 0.0 };
        m.validate()?;
        Ok(m)
    }

    pub fn sum(parts: Vec<JumpMeasure>) -> Self {
        JumpMeasure::Sum { parts }
    }

    pub fn scaled(factor: f64, inner: JumpMeasure) -> Self {
        JumpMeasure::Scaled { factor, inner: Box::new(inner) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMeasure(msg));
        match self {
            JumpMeasure::Atoms { atoms } => {
                for &(y, w) in atoms {
                    if !(y.is_finite() && y < 0.0) {
                        return bad(format!("atom location {y} must be finite and negative"));
                    }
                    if !(w.is_finite() && w > 0.0) {
                        return bad(format!("atom weight {w} must be finite and positive"));
                    }
                }
                Ok(())
            }
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                if !(c.is_finite() && c > 0.0) {
                    return bad(format!("amplitude c = {c} must be positive"));
                }
                if !(beta > 0.0 && beta < 2.0) {
                    return bad(format!("exponent beta = {beta} must lie in (0, 2)"));
                }
                if !(cutoff.is_finite() && cutoff > 0.0) {
                    return bad(format!("cutoff L = {cutoff} must be positive"));
                }
                if !(lower >= 0.0 && lower < cutoff) {
                    return bad(format!("lower bound {lower} must lie in [0, L)"));
                }
                Ok(())
            }
            JumpMeasure::Scaled { factor, inner } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return bad(format!("scale factor {factor} must be positive"));
                }
                inner.validate()
            }
            JumpMeasure::Sum { parts } => parts.iter().try_for_each(|p| p.validate()),
        }
    }

    /// Total mass, possibly `+∞`.
    pub fn total_mass(&self) -> f64 {
        match self {
            JumpMeasure::Atoms { atoms } => atoms.iter().map(|a| a.1).sum(),
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                if lower == 0.0 {
                    f64::INFINITY
                } else {
                    power_mass(c, beta, lower, cutoff)
                }
            }
            JumpMeasure::Scaled { factor, inner } => factor * inner.total_mass(),
            JumpMeasure::Sum { parts } => parts.iter().map(|p| p.total_mass()).sum(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total_mass().is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.total_mass() == 0.0
    }

    /// `m((-∞, -eps))`.
    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(domain(format!("tail_mass needs eps > 0, got {eps}")));
        }
        Ok(self.tail_mass_from(eps))
    }

    /// Mass of `(-∞, -a)` for `a >= 0`.
    fn tail_mass_from(&self, a: f64) -> f64 {
        match self {
            JumpMeasure::Atoms { atoms } => atoms.iter().filter(|p| p.0 < -a).map(|p| p.1).sum(),
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                let from = a.max(lower);
                if from == 0.0 {
                    f64::INFINITY
                } else {
                    power_mass(c, beta, from, cutoff)
                }
            }
            JumpMeasure::Scaled { factor, inner } => factor * inner.tail_mass_from(a),
            JumpMeasure::Sum { parts } => parts.iter().map(|p| p.tail_mass_from(a)).sum(),
        }
    }

    /// The restriction to `(-∞, -eps)`.
    pub fn restrict_below(&self, eps: f64) -> JumpMeasure {
        match self {
            JumpMeasure::Atoms { atoms } => JumpMeasure::Atoms {
                atoms: atoms.iter().copied().filter(|p| p.0 < -eps).collect(),
            },
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                if eps >= cutoff {
                    JumpMeasure::zero()
                } else {
                    JumpMeasure::Power { c, beta, cutoff, lower: lower.max(eps) }
                }
            }
            JumpMeasure::Scaled { factor, inner } => {
                JumpMeasure::scaled(*factor, inner.restrict_below(eps))
            }
            JumpMeasure::Sum { parts } => {
                JumpMeasure::sum(parts.iter().map(|p| p.restrict_below(eps)).collect())
            }
        }
    }

    /// The restriction to `[-eps, 0)`.
    pub fn restrict_above(&self, eps: f64) -> JumpMeasure {
        match self {
            JumpMeasure::Atoms { atoms } => JumpMeasure::Atoms {
                atoms: atoms.iter().copied().filter(|p| p.0 >= -eps).collect(),
            },
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                if eps <= lower {
                    JumpMeasure::zero()
                } else {
                    JumpMeasure::Power { c, beta, cutoff: cutoff.min(eps), lower }
                }
            }
            JumpMeasure::Scaled { factor, inner } => {
                JumpMeasure::scaled(*factor, inner.restrict_above(eps))
            }
            JumpMeasure::Sum { parts } => {
                JumpMeasure::sum(parts.iter().map(|p| p.restrict_above(eps)).collect())
            }
        }
    }

    /// `inf {q ≥ 0 : ∫(1-e^y)^q m(dy) < ∞}`, read off symbolically.
    pub fn q_bar(&self) -> f64 {
        match self {
            JumpMeasure::Atoms { .. } => 0.0,
            &JumpMeasure::Power { beta, lower, .. } => {
                if lower == 0.0 {
                    beta
                } else {
                    0.0
                }
            }
            JumpMeasure::Scaled { inner, .. } => inner.q_bar(),
            JumpMeasure::Sum { parts } => parts.iter().map(|p| p.q_bar()).fold(0.0, f64::max),
        }
    }

    /// Whether `∫(1-e^y)^q m(dy)` is finite. At `q = q_bar` an infinite
    /// power density diverges logarithmically.
    pub fn frac_moment_finite(&self, q: f64) -> bool {
        match self {
            JumpMeasure::Atoms { .. } => true,
            &JumpMeasure::Power { beta, lower, .. } => lower > 0.0 || q > beta,
            JumpMeasure::Scaled { inner, .. } => inner.frac_moment_finite(q),
            JumpMeasure::Sum { parts } => parts.iter().all(|p| p.frac_moment_finite(q)),
        }
    }

    /// `∫(1-e^y)^q m(dy)`, returning `+∞` when divergent. Divergence is
    /// decided from `(q, β)`, never from the quadrature.
    pub fn frac_moment(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(domain(format!("frac_moment needs q >= 0, got {q}")));
        }
        Ok(self.frac_moment_unchecked(q))
    }

    fn frac_moment_unchecked(&self, q: f64) -> f64 {
        match self {
            JumpMeasure::Atoms { atoms } => {
                atoms.iter().map(|&(y, w)| w * one_minus_exp(-y).powf(q)).sum()
            }
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                if !self.frac_moment_finite(q) {
                    return f64::INFINITY;
                }
                let g = |u: f64| one_minus_exp(u).powf(q);
                if lower > 0.0 {
                    return power_far(c, beta, lower, cutoff, g);
                }
                let delta = NEAR_ZERO.min(0.5 * cutoff);
                // (1-e^{-u})^q = u^q (1 - q u / 2 + O(u²)) on (0, δ)
                let s = q - beta;
                let near = c * (delta.powf(s) / s - 0.5 * q * delta.powf(s + 1.0) / (s + 1.0));
                near + power_far(c, beta, delta, cutoff, g)
            }
            JumpMeasure::Scaled { factor, inner } => factor * inner.frac_moment_unchecked(q),
            JumpMeasure::Sum { parts } => parts.iter().map(|p| p.frac_moment_unchecked(q)).sum(),
        }
    }

    /// `∫ ln(1-e^y) (1-e^y)^q m(dy)`, the `q`-derivative of the fractional
    /// moment. Returns `-∞` where the moment itself diverges.
    pub fn frac_moment_log(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(domain(format!("frac_moment_log needs q >= 0, got {q}")));
        }
        Ok(self.frac_moment_log_unchecked(q))
    }

    fn frac_moment_log_unchecked(&self, q: f64) -> f64 {
        match self {
            JumpMeasure::Atoms { atoms } => atoms
                .iter()
                .map(|&(y, w)| {
                    let f = one_minus_exp(-y);
                    w * f.ln() * f.powf(q)
                })
                .sum(),
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                if !self.frac_moment_finite(q) {
                    return f64::NEG_INFINITY;
                }
                let g = |u: f64| {
                    let f = one_minus_exp(u);
                    f.ln() * f.powf(q)
                };
                if lower > 0.0 {
                    return power_far(c, beta, lower, cutoff, g);
                }
                let d = NEAR_ZERO.min(0.5 * cutoff);
                // u^q [ln u - u/2 - (q/2) u ln u] u^{-1-β} integrated on (0, δ)
                let s = q - beta;
                let ld = d.ln();
                let lead = d.powf(s) * (ld / s - 1.0 / (s * s));
                let lin = -0.5 * d.powf(s + 1.0) / (s + 1.0);
                let lin_log =
                    -0.5 * q * d.powf(s + 1.0) * (ld / (s + 1.0) - 1.0 / ((s + 1.0) * (s + 1.0)));
                c * (lead + lin + lin_log) + power_far(c, beta, d, cutoff, g)
            }
            JumpMeasure::Scaled { factor, inner } => factor * inner.frac_moment_log_unchecked(q),
            JumpMeasure::Sum { parts } => {
                parts.iter().map(|p| p.frac_moment_log_unchecked(q)).sum()
            }
        }
    }

    /// `∫ g(y) m(dy)` for a function with `|g(y)| = O(|y|^order)` at the
    /// origin; `order` must exceed the density exponent for infinite
    /// activity parts. The slice `(-δ, 0)` uses the power-law approximation
    /// `g(-u) ≈ g(-δ)(u/δ)^order`.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: &G, order: f64) -> f64 {
        match self {
            JumpMeasure::Atoms { atoms } => atoms.iter().map(|&(y, w)| w * g(y)).sum(),
            &JumpMeasure::Power { c, beta, cutoff, lower } => {
                let gu = |u: f64| g(-u);
                if lower > 0.0 {
                    return power_far(c, beta, lower, cutoff, gu);
                }
                assert!(order > beta, "integrand order {order} too low for beta {beta}");
                let d = NEAR_ZERO.min(0.5 * cutoff);
                c * g(-d) * d.powf(-beta) / (order - beta) + power_far(c, beta, d, cutoff, gu)
            }
            JumpMeasure::Scaled { factor, inner } => factor * inner.integrate(g, order),
            JumpMeasure::Sum { parts } => parts.iter().map(|p| p.integrate(g, order)).sum(),
        }
    }

    /// `∫(e^{qy} - 1 + q(1-e^y)) m(dy)`; always finite.
    pub fn laplace_integral(&self, q: f64) -> f64 {
        self.integrate(&|y: f64| psi_kernel(q, -y), 2.0)
    }

    /// `∫(y e^{qy} + 1 - e^y) m(dy)`, the `q`-derivative of
    /// [`laplace_integral`](Self::laplace_integral).
    pub fn laplace_integral_dot(&self, q: f64) -> f64 {
        self.integrate(&|y: f64| psi_dot_kernel(q, -y), 2.0)
    }

    /// `∫(1 ∧ y²) m(dy)`.
    pub fn levy_integrability(&self) -> f64 {
        self.integrate(&|y: f64| (y * y).min(1.0), 2.0)
    }

    /// Draws `y < -eps` from the normalised restriction of `m` to `(-∞, -eps)`.
    pub fn sample_restricted<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> Result<f64> {
        let mass = self.tail_mass(eps)?;
        if !(mass > 0.0) {
            return Err(precondition(format!("no mass below -{eps}")));
        }
        Ok(self.sample_from(eps, mass, rng))
    }

    /// Draws from the normalised measure; the total mass must be finite.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let mass = self.total_mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(precondition(format!("cannot normalise a measure of mass {mass}")));
        }
        Ok(self.sample_from(0.0, mass, rng))
    }

    fn sample_from<R: Rng + ?Sized>(&self, a: f64, mass: f64, rng: &mut R) -> f64 {
        match self {
            JumpMeasure::Atoms { atoms } => {
                let mut target = rng.random::<f64>() * mass;
                let mut last = None;
                for &(y, w) in atoms.iter().filter(|p| p.0 < -a) {
                    last = Some(y);
                    if target < w {
                        return y;
                    }
                    target -= w;
                }
                last.expect("positive tail mass implies an eligible atom")
            }
            &JumpMeasure::Power { beta, cutoff, lower, .. } => {
                let from = a.max(lower);
                let top = from.powf(-beta);
                let bottom = cutoff.powf(-beta);
                let v: f64 = rng.random();
                let u = (top - v * (top - bottom)).powf(-1.0 / beta);
                // guard the open endpoint against rounding
                -u.clamp(from * (1.0 + f64::EPSILON), cutoff)
            }
            JumpMeasure::Scaled { inner, factor } => inner.sample_from(a, mass / factor, rng),
            JumpMeasure::Sum { parts } => {
                let masses: Vec<f64> = parts.iter().map(|p| p.tail_mass_from(a)).collect();
                let mut target = rng.random::<f64>() * mass;
                let mut chosen = None;
                for (i, &m) in masses.iter().enumerate() {
                    if m > 0.0 {
                        chosen = Some(i);
                        if target < m {
                            break;
                        }
                        target -= m;
                    }
                }
                let i = chosen.expect("positive tail mass implies an eligible part");
                parts[i].sample_from(a, masses[i], rng)
            }
        }
    }
}

/// The truncation `Λ₁^(ε) = Λ₁|(-∞,-ε)`, `Λ₂^(ε) = Λ₂ + Λ₁|[-ε,0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedPair {
    pub eps: f64,
    pub lambda1_eps: JumpMeasure,
    pub lambda2_eps: JumpMeasure,
}

impl TruncatedPair {
    pub fn new(lambda1: &JumpMeasure, lambda2: &JumpMeasure, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(domain(format!("truncation level must be positive, got {eps}")));
        }
        let lambda1_eps = lambda1.restrict_below(eps);
        let small = lambda1.restrict_above(eps);
        let lambda2_eps = if small.is_zero() {
            lambda2.clone()
        } else if lambda2.is_zero() {
            small
        } else {
            JumpMeasure::sum(vec![lambda2.clone(), small])
        };
        Ok(TruncatedPair { eps, lambda1_eps, lambda2_eps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn power_d() -> JumpMeasure {
        JumpMeasure::power(1.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn tail_mass_examples() {
        let m = JumpMeasure::atoms(vec![(-1.0, 2.0)]).unwrap();
        assert_eq!(m.tail_mass(0.5).unwrap(), 2.0);
        assert_eq!(m.tail_mass(1.5).unwrap(), 0.0);
        let p = power_d();
        assert!((p.tail_mass(0.25).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(p.tail_mass(0.0), Err(Error::Domain(_))));
        assert!(matches!(p.tail_mass(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn frac_moment_examples() {
        let m = JumpMeasure::atoms(vec![(-LN2, 3.0)]).unwrap();
        assert!((m.frac_moment(2.0).unwrap() - 0.75).abs() < 1e-15);
        assert!((m.frac_moment(0.0).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(power_d().frac_moment(0.25).unwrap(), f64::INFINITY);
        assert_eq!(power_d().frac_moment(0.5).unwrap(), f64::INFINITY);
        assert!(power_d().frac_moment(-0.1).is_err());
    }

    /// Midpoint Riemann sum of `(1-e^{-u})^q u^{-1-β}` on `(0, 1)`.
    fn riemann_power(q: f64, beta: f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                (1.0 - (-u).exp()).powf(q) * u.powf(-1.0 - beta)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn frac_moment_power_matches_riemann_oracle() {
        let coarse = riemann_power(2.0, 0.5, 1_000_000);
        let fine = riemann_power(2.0, 0.5, 4_000_000);
        assert!((coarse - fine).abs() / fine < 1e-6);
        let v = power_d().frac_moment(2.0).unwrap();
        assert!((v - fine).abs() / fine < 1e-6, "{v} vs {fine}");
    }

    #[test]
    fn frac_moment_log_matches_finite_difference() {
        for m in [power_d(), JumpMeasure::atoms(vec![(-0.3, 1.0), (-2.0, 0.5)]).unwrap()] {
            for q in [0.75, 1.0, 2.0, 3.5] {
                let h = 1e-6;
                let fd = (m.frac_moment(q + h).unwrap() - m.frac_moment(q - h).unwrap()) / (2.0 * h);
                let an = m.frac_moment_log(q).unwrap();
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "q={q}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn laplace_integral_closed_forms() {
        // single atom at -ln 2: 2^{-q} - 1 + q/2
        let m = JumpMeasure::atoms(vec![(-LN2, 1.0)]).unwrap();
        for q in [0.0, 0.5, 1.0, 2.0, 7.0] {
            let exact = 2f64.powf(-q) - 1.0 + q / 2.0;
            assert!((m.laplace_integral(q) - exact).abs() < 1e-14);
        }
        // series branch agrees with the direct formula at the switch point
        for q in [0.3, 1.0, 2.5] {
            let u = 0.1 / f64::max(q, 1.0) * 0.999;
            let direct = (-q * u).exp_m1() - q * (-u).exp_m1();
            assert!((psi_kernel(q, u) - direct).abs() < 1e-15);
            let direct_dot = -u * (-q * u).exp() - (-u).exp_m1();
            assert!((psi_dot_kernel(q, u) - direct_dot).abs() < 1e-15, "{q}");
        }
    }

    #[test]
    fn power_laplace_integral_matches_riemann() {
        let q = 1.7;
        let n = 2_000_000;
        let h = 1.0 / n as f64;
        let oracle: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                ((-q * u).exp() - 1.0 + q * (1.0 - (-u).exp())) * u.powf(-1.5)
            })
            .sum::<f64>()
            * h;
        let v = power_d().laplace_integral(q);
        assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
    }

    #[test]
    fn sample_single_atom() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = JumpMeasure::atoms(vec![(-1.0, 2.0)]).unwrap();
        for _ in 0..100 {
            assert_eq!(m.sample_restricted(0.5, &mut rng).unwrap(), -1.0);
        }
        assert!(m.sample_restricted(1.5, &mut rng).is_err());
    }

    #[test]
    fn sample_atom_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = JumpMeasure::atoms(vec![(-1.0, 1.0), (-2.0, 3.0)]).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| m.sample_restricted(0.5, &mut rng).unwrap() == -2.0).count();
        let p = hits as f64 / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn sample_power_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = power_d();
        let eps = 0.25;
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| -m.sample_restricted(eps, &mut rng).unwrap()).collect();
        xs.sort_by(f64::total_cmp);
        // P(|Y| <= u) for u in (eps, 1): (eps^{-1/2} - u^{-1/2}) / (eps^{-1/2} - 1)
        let cdf = |u: f64| (eps.powf(-0.5) - u.powf(-0.5)) / (eps.powf(-0.5) - 1.0);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let f = cdf(u);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(xs.iter().all(|&u| u > eps && u <= 1.0));
        assert!(d < 1.628 / (n as f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn truncated_pair_conserves_measure() {
        let l1 = power_d();
        let l2 = JumpMeasure::atoms(vec![(-0.05, 1.0)]).unwrap();
        for eps in [0.3, 0.1, 0.01] {
            let tp = TruncatedPair::new(&l1, &l2, eps).unwrap();
            assert!(tp.lambda1_eps.is_finite());
            assert_eq!(tp.lambda1_eps.tail_mass(eps).unwrap(), tp.lambda1_eps.total_mass());
            for t in [0.005, 0.05, 0.2, 0.5] {
                let lhs = tp.lambda1_eps.tail_mass(t).unwrap() + tp.lambda2_eps.tail_mass(t).unwrap();
                let rhs = l1.tail_mass(t).unwrap() + l2.tail_mass(t).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * rhs, "eps={eps} t={t}");
            }
            for q in [1.0, 2.0, 3.0] {
                let lhs = tp.lambda1_eps.frac_moment(q).unwrap() + tp.lambda2_eps.frac_moment(q).unwrap();
                let rhs = l1.frac_moment(q).unwrap() + l2.frac_moment(q).unwrap();
                assert!((lhs - rhs).abs() <= 1e-10 * rhs, "eps={eps} q={q}: {lhs} {rhs}");
            }
        }
    }

    #[test]
    fn power_integrability_is_finite() {
        let v = power_d().levy_integrability();
        // ∫_0^1 u^{2} u^{-3/2} du = 2/3
        assert!((v - 2.0 / 3.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn invalid_measures_rejected() {
        assert!(JumpMeasure::atoms(vec![(0.5, 1.0)]).is_err());
        assert!(JumpMeasure::atoms(vec![(-0.5, 0.0)]).is_err());
        assert!(JumpMeasure::power(1.0, 2.0, 1.0).is_err());
        assert!(JumpMeasure::power(-1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn config_format_round_trip() {
        let json = r#"{"type":"power","c":1.0,"beta":0.5,"L":1.0}"#;
        let m: JumpMeasure = serde_json::from_str(json).unwrap();
        assert_eq!(m, power_d());
        let json = r#"{"type":"atoms","atoms":[[-0.5,2.0]]}"#;
        let m: JumpMeasure = serde_json::from_str(json).unwrap();
        assert_eq!(m, JumpMeasure::atoms(vec![(-0.5, 2.0)]).unwrap());
        assert!(serde_json::from_str::<JumpMeasure>(r#"{"type":"atoms","atoms":[],"x":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn tail_mass_monotone_and_coupled(e1 in 1e-4f64..0.9, e2 in 1e-4f64..0.9, t in 1e-4f64..1.2) {
            let (fine, coarse) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let m = JumpMeasure::sum(vec![power_d(), JumpMeasure::atoms(vec![(-0.2, 1.0), (-0.7, 0.3)]).unwrap()]);
            prop_assert!(m.tail_mass(fine).unwrap() >= m.tail_mass(coarse).unwrap());
            let lf = m.restrict_below(fine);
            let lc = m.restrict_below(coarse);
            prop_assert!(lf.tail_mass(t).unwrap() >= lc.tail_mass(t).unwrap());
        }

        #[test]
        fn frac_moment_nonincreasing_in_q(q1 in 0.55f64..6.0, dq in 0.0f64..3.0) {
            let m = JumpMeasure::sum(vec![power_d(), JumpMeasure::atoms(vec![(-0.4, 2.0)]).unwrap()]);
            let a = m.frac_moment(q1).unwrap();
            let b = m.frac_moment(q1 + dq).unwrap();
            prop_assert!(b <= a * (1.0 + 1e-12));
        }

        #[test]
        fn decomposition_conservation(eps in 0.005f64..0.8, q in 0.6f64..5.0) {
            let m = power_d();
            let whole = m.frac_moment(q).unwrap();
            let split = m.restrict_below(eps).frac_moment(q).unwrap()
                + m.restrict_above(eps).frac_moment(q).unwrap();
            prop_assert!((whole - split).abs() <= 1e-9 * whole, "{} vs {}", whole, split);
        }
    }
}
