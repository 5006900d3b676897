//! Dimensionless model: parameters, reaction terms, slow manifolds and
//! the equilibria of the spatially uniform system.
//!
//! The four-component system evolves `(M, I, rho, B)` (mutant density,
//! immune density, barrier permeability, bacterial density). For small
//! `epsilon` the fast pair `(rho, B)` collapses onto the graph
//! `rho = B = B_i(M, I)` and the dynamics reduce to the two-component
//! system
//!
//! ```text
//! M_t = M_xx + I M (1 - M)
//! I_t = D I_xx + f(M, I) / delta
//! ```
//!
//! with `f(M, I) = a I (b (sigma - 1) + b M - I) / (alpha2 I + beta2 (1 - M))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking that a state lies in the unit box.
pub const BOX_TOL: f64 = 1e-12;

/// Dimensionless rate and diffusion constants.
///
/// `sigma` is always derived from `alpha2 / (beta1 * beta2)` and never
/// stored, so the derived coefficients can't drift out of sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    /// Immune diffusivity relative to the mutant diffusivity.
    #[serde(rename = "D")]
    pub d: f64,
    /// Fast time scale of the barrier/bacteria pair (four-component model only).
    pub epsilon: f64,
    pub d_rho: f64,
    pub d_b: f64,
}

impl ModelParams {
    pub fn new(alpha2: f64, beta1: f64, beta2: f64, delta: f64, d: f64) -> Result<Self> {
        let p = ModelParams {
            alpha2,
            beta1,
            beta2,
            delta,
            d,
            epsilon: delta * 0.02,
            d_rho: 1.0,
            d_b: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// `alpha2 = beta2 = 1`, `beta1 = 1 / sigma`, `D = 1`; this gives
    /// `b(sigma) = 1 / (1 + sigma)` and `a(sigma) b(sigma) = 1 / sigma`.
    pub fn unit_rates(sigma: f64, delta: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Self::new(1.0, 1.0 / sigma, 1.0, delta, 1.0)
    }

    /// Same rates with `beta1` re-derived so that `alpha2 / (beta1 beta2) = sigma`.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        let p = ModelParams { beta1: self.alpha2 / (self.beta2 * sigma), ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let p = ModelParams { delta, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_diffusivity(&self, d: f64) -> Result<Self> {
        let p = ModelParams { d, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let p = ModelParams { epsilon, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("delta", self.delta),
            ("D", self.d),
            ("epsilon", self.epsilon),
            ("D_rho", self.d_rho),
            ("D_B", self.d_b),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        // relative slack so that sigma == delta survives the division round trip
        if self.sigma() < self.delta * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "sigma = {} must not be smaller than delta = {}",
                self.sigma(),
                self.delta
            )));
        }
        Ok(())
    }

    /// The four-component model additionally needs `epsilon < delta`.
    pub fn validate_full_model(&self) -> Result<()> {
        self.validate()?;
        if self.epsilon >= self.delta {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must be smaller than delta = {}",
                self.epsilon, self.delta
            )));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.alpha2 / (self.beta1 * self.beta2)
    }

    /// `a(sigma) = beta1 (beta2 sigma + alpha2)`.
    pub fn a(&self) -> f64 {
        self.beta1 * (self.beta2 * self.sigma() + self.alpha2)
    }

    /// `b(sigma) = beta2 / (beta2 sigma + alpha2)`.
    pub fn b(&self) -> f64 {
        self.beta2 / (self.beta2 * self.sigma() + self.alpha2)
    }

    /// `D * delta`, the effective immune diffusion scale in the wave frame.
    pub fn delta_bar(&self) -> f64 {
        self.d * self.delta
    }

    pub fn derived(&self) -> DerivedCoeffs {
        let sigma = self.sigma();
        let a = self.a();
        let b = self.b();
        let (gamma, c_scale) = if sigma > 1.0 {
            (
                Some(self.alpha2 * b * (sigma - 1.0) / self.beta2),
                Some((a * b * (sigma - 1.0) / (self.beta2 * self.delta_bar())).sqrt()),
            )
        } else {
            (None, None)
        };
        DerivedCoeffs { sigma, a_sigma: a, b_sigma: b, gamma_sigma: gamma, c_sigma_delta: c_scale }
    }

    /// Immune reaction `f(M, I)` without domain checks. Used inside Newton
    /// iterations where iterates may briefly leave the unit box.
    #[inline]
    pub fn immune_rate(&self, m: f64, i: f64) -> f64 {
        let b = self.b();
        let g = b * (self.sigma() - 1.0) + b * m - i;
        let h = self.alpha2 * i + self.beta2 * (1.0 - m);
        self.a() * i * g / h
    }

    /// Partial derivatives `(f_M, f_I)`.
    #[inline]
    pub fn immune_rate_grad(&self, m: f64, i: f64) -> (f64, f64) {
        let a = self.a();
        let b = self.b();
        let g = b * (self.sigma() - 1.0) + b * m - i;
        let h = self.alpha2 * i + self.beta2 * (1.0 - m);
        let h2 = h * h;
        let f_m = a * i * (b * h + self.beta2 * g) / h2;
        let f_i = a * ((g - i) * h - self.alpha2 * i * g) / h2;
        (f_m, f_i)
    }

    /// Reaction of the reduced two-component system: `(I M (1 - M), f(M, I) / delta)`.
    pub fn reaction_lds(&self, m: f64, i: f64) -> Result<(f64, f64)> {
        check_unit("M", m)?;
        check_unit("I", i)?;
        let h = self.alpha2 * i + self.beta2 * (1.0 - m);
        if h <= 0.0 {
            return Err(Error::Singularity(format!(
                "denominator alpha2 I + beta2 (1 - M) vanishes at (M, I) = ({m}, {i})"
            )));
        }
        Ok((i * m * (1.0 - m), self.immune_rate(m, i) / self.delta))
    }

    /// Reaction of the full four-component system.
    pub fn reaction_rds(&self, state: [f64; 4]) -> Result<[f64; 4]> {
        for (name, v) in ["M", "I", "rho", "B"].iter().zip(state) {
            check_unit(name, v)?;
        }
        Ok(self.reaction_rds_unchecked(state))
    }

    #[inline]
    pub fn reaction_rds_unchecked(&self, [m, i, rho, bac]: [f64; 4]) -> [f64; 4] {
        [
            i * m * (1.0 - m),
            (bac - (bac + self.beta1) * i) / self.delta,
            (self.alpha2 * i - (self.alpha2 * i + self.beta2 * (1.0 - m)) * rho) / self.epsilon,
            (rho - bac) / self.epsilon,
        ]
    }

    /// Value of `rho = B` on the slow invariant manifold of the four-component system.
    pub fn slow_manifold_b(&self, m: f64, i: f64) -> Result<f64> {
        check_unit("M", m)?;
        check_unit("I", i)?;
        let num = self.alpha2 * i;
        let den = num + self.beta2 * (1.0 - m);
        if den <= 0.0 {
            return Err(Error::Singularity(format!(
                "slow manifold undefined at the corner (M, I) = ({m}, {i})"
            )));
        }
        Ok(num / den)
    }

    /// Stable slow manifold of the temporal system: `i = max(0, b (m + sigma - 1))`.
    pub fn slow_manifold_s(&self, m: f64) -> f64 {
        (self.b() * (m + self.sigma() - 1.0)).max(0.0)
    }

    /// Cut-off reaction `X H0(X) (1 - X)` of the leading-order mutant
    /// equation for `sigma < 1`.
    pub fn cutoff_reaction(&self, x: f64) -> Result<f64> {
        let sigma = self.sigma();
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::Domain(format!("cut-off reaction needs sigma in (0, 1), got {sigma}")));
        }
        check_unit("X", x)?;
        Ok(cutoff_reaction_unchecked(x, sigma, self.b()))
    }

    /// Leading-order immune level `H0(M)` for `sigma < 1`.
    pub fn h0(&self, m: f64) -> f64 {
        let sigma = self.sigma();
        (self.b() * (m - (1.0 - sigma))).max(0.0)
    }

    /// Fully saturated state `(1, b sigma)`.
    pub fn e_full(&self) -> (f64, f64) {
        (1.0, self.b() * self.sigma())
    }

    /// Transitional state `(0, b (sigma - 1))`, present only for `sigma > 1`.
    pub fn e_transition(&self) -> Option<(f64, f64)> {
        let sigma = self.sigma();
        (sigma > 1.0).then(|| (0.0, self.b() * (sigma - 1.0)))
    }

    /// Constant of the sub-threshold decay bound,
    /// `a b ((1 - sigma) - M0) / (2 (alpha2 + beta2))`, evaluated with `a b = beta1 beta2`.
    pub fn decay_constant(&self, m0: f64) -> f64 {
        self.beta1 * self.beta2 * ((1.0 - self.sigma()) - m0) / (2.0 * (self.alpha2 + self.beta2))
    }

    /// Whether `(m, i)` lies in the clipped rectangle `R(delta)`.
    pub fn in_region(&self, m: f64, i: f64, tol: f64) -> bool {
        if m < -tol || m > 1.0 + tol || i < -tol || i > 1.0 + tol {
            return false;
        }
        // notch: 1 - delta < M <= 1 with 0 <= I < M - (1 - delta)
        !(m > 1.0 - self.delta && i < m - (1.0 - self.delta) - tol)
    }

    /// Nearest-point projection onto `R(delta)`. Returns the projected point
    /// and whether it moved.
    pub fn project_to_region(&self, m: f64, i: f64) -> (f64, f64, bool) {
        let mut pm = m.clamp(0.0, 1.0);
        let mut pi = i.clamp(0.0, 1.0);
        let edge = 1.0 - self.delta;
        if pm > edge && pi < pm - edge {
            // project onto the diagonal edge I = M - (1 - delta)
            let s = 0.5 * (pm + pi - edge);
            pm = (s + 0.5 * edge).clamp(edge, 1.0);
            pi = (pm - edge).max(0.0);
        }
        let moved = pm != m || pi != i;
        (pm, pi, moved)
    }
}

#[inline]
pub(crate) fn cutoff_reaction_unchecked(x: f64, sigma: f64, b: f64) -> f64 {
    let cut = 1.0 - sigma;
    if x <= cut {
        0.0
    } else {
        b * (x - cut) * x * (1.0 - x)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(-BOX_TOL..=1.0 + BOX_TOL).contains(&v) {
        return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

/// Coefficients derived from the rate constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoeffs {
    pub sigma: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// `alpha2 b (sigma - 1) / beta2`; only for `sigma > 1`.
    pub gamma_sigma: Option<f64>,
    /// Length rescaling of the lower-transition wave; only for `sigma > 1`.
    pub c_sigma_delta: Option<f64>,
}

impl DerivedCoeffs {
    /// Coefficient of the transition-layer problem,
    /// `a / (beta2 sigma (1 - sigma)^2 v*^2)`, for `sigma < 1`.
    pub fn c_transition(&self, p: &ModelParams, v_star: f64) -> Result<f64> {
        let s = self.sigma;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("transition coefficient needs sigma in (0, 1), got {s}")));
        }
        if !(v_star > 0.0) {
            return Err(Error::Domain(format!("v* must be positive, got {v_star}")));
        }
        Ok(self.a_sigma / (p.beta2 * s * (1.0 - s).powi(2) * v_star * v_star))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    DegenerateStableNode,
    DegenerateUnstableNode,
    /// The continuum point `m_e = 1 - sigma`, where the non-zero eigenvalue vanishes.
    DegenerateTransition,
    HyperbolicStableNode,
    HyperbolicSaddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Continuum { m_e: f64 },
    FullySaturated,
    Transitional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub coords: (f64, f64),
    pub kind: EquilibriumKind,
    pub stability: Stability,
}

/// A segment `{(m, 0) : m in [lo, hi]}` of the equilibrium continuum sharing one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumSegment {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub continuum: Vec<ContinuumSegment>,
    pub isolated: Vec<Equilibrium>,
}

impl EquilibriumSet {
    /// Every isolated equilibrium plus the end points of each continuum segment.
    pub fn sample_points(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.isolated.iter().map(|e| e.coords).collect();
        for seg in &self.continuum {
            pts.push((seg.lo, 0.0));
            pts.push((seg.hi, 0.0));
            pts.push((0.5 * (seg.lo + seg.hi), 0.0));
        }
        pts
    }
}

/// Equilibria of the temporal system inside `R(delta)`.
pub fn equilibria(p: &ModelParams) -> Result<EquilibriumSet> {
    p.validate()?;
    let sigma = p.sigma();
    let top = 1.0 - p.delta;
    let mut continuum = Vec::new();
    if sigma < 1.0 {
        let cut = 1.0 - sigma;
        continuum.push(ContinuumSegment {
            lo: 0.0,
            hi: cut,
            lo_closed: true,
            hi_closed: false,
            stability: Stability::DegenerateStableNode,
        });
        continuum.push(ContinuumSegment {
            lo: cut,
            hi: cut,
            lo_closed: true,
            hi_closed: true,
            stability: Stability::DegenerateTransition,
        });
        if cut < top {
            continuum.push(ContinuumSegment {
                lo: cut,
                hi: top,
                lo_closed: false,
                hi_closed: true,
                stability: Stability::DegenerateUnstableNode,
            });
        }
    } else if sigma == 1.0 {
        continuum.push(ContinuumSegment {
            lo: 0.0,
            hi: 0.0,
            lo_closed: true,
            hi_closed: true,
            stability: Stability::DegenerateTransition,
        });
        continuum.push(ContinuumSegment {
            lo: 0.0,
            hi: top,
            lo_closed: false,
            hi_closed: true,
            stability: Stability::DegenerateUnstableNode,
        });
    } else {
        continuum.push(ContinuumSegment {
            lo: 0.0,
            hi: top,
            lo_closed: true,
            hi_closed: true,
            stability: Stability::DegenerateUnstableNode,
        });
    }

    let mut isolated = vec![Equilibrium {
        coords: p.e_full(),
        kind: EquilibriumKind::FullySaturated,
        stability: Stability::HyperbolicStableNode,
    }];
    if let Some(e_t) = p.e_transition() {
        isolated.push(Equilibrium {
            coords: e_t,
            kind: EquilibriumKind::Transitional,
            stability: Stability::HyperbolicSaddle,
        });
    }
    Ok(EquilibriumSet { continuum, isolated })
}

/// Label of the continuum equilibrium `(m_e, 0)`.
pub fn continuum_equilibrium(p: &ModelParams, m_e: f64) -> Result<Equilibrium> {
    if !(0.0..=1.0 - p.delta).contains(&m_e) {
        return Err(Error::Domain(format!(
            "continuum equilibria need m_e in [0, {}], got {m_e}",
            1.0 - p.delta
        )));
    }
    let cut = 1.0 - p.sigma();
    let stability = if m_e < cut {
        Stability::DegenerateStableNode
    } else if m_e > cut {
        Stability::DegenerateUnstableNode
    } else {
        Stability::DegenerateTransition
    };
    Ok(Equilibrium { coords: (m_e, 0.0), kind: EquilibriumKind::Continuum { m_e }, stability })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(sigma: f64, delta: f64) -> ModelParams {
        ModelParams::unit_rates(sigma, delta).unwrap()
    }

    #[test]
    fn lds_reaction_hand_values() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.05, 1.0).unwrap();
        assert_relative_eq!(p.a(), 2.0);
        assert_relative_eq!(p.b(), 0.5);
        let (fm, fi) = p.reaction_lds(0.5, 0.5).unwrap();
        assert_relative_eq!(fm, 0.125, epsilon = 1e-15);
        assert_relative_eq!(fi, -5.0, epsilon = 1e-13);
        assert_eq!(p.reaction_lds(0.0, 0.0).unwrap(), (0.0, 0.0));
        let (m, i) = p.e_full();
        let (fm, fi) = p.reaction_lds(m, i).unwrap();
        assert_eq!((fm, fi), (0.0, 0.0));
    }

    #[test]
    fn lds_reaction_errors() {
        let p = unit(0.5, 0.05);
        assert!(matches!(p.reaction_lds(1.2, 0.1), Err(Error::Domain(_))));
        assert!(matches!(p.reaction_lds(1.0, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn rds_reaction_hand_values() {
        let mut p = ModelParams::new(1.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        p.epsilon = 0.01;
        let r = p.reaction_rds([0.0, 0.5, 0.5, 0.5]).unwrap();
        assert_relative_eq!(r[0], 0.0);
        assert_relative_eq!(r[1], -2.5, epsilon = 1e-13);
        assert_relative_eq!(r[2], -25.0, epsilon = 1e-12);
        assert_relative_eq!(r[3], 0.0);
        assert_eq!(p.reaction_rds([0.0; 4]).unwrap(), [0.0; 4]);
        assert!(p.reaction_rds([0.0, 0.0, 1.5, 0.0]).is_err());
    }

    #[test]
    fn fast_reactions_vanish_on_slow_manifold() {
        let p = unit(1.7, 0.05).with_epsilon(1e-3).unwrap();
        for &(m, i) in &[(0.1, 0.2), (0.5, 0.5), (0.9, 0.05), (0.0, 1.0)] {
            let bi = p.slow_manifold_b(m, i).unwrap();
            let r = p.reaction_rds([m, i, bi, bi]).unwrap();
            assert!(r[2].abs() < 1e-10 && r[3].abs() < 1e-10, "{r:?}");
        }
    }

    #[test]
    fn slow_manifold_b_values() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.05, 1.0).unwrap();
        assert_eq!(p.slow_manifold_b(0.3, 0.0).unwrap(), 0.0);
        assert_relative_eq!(p.slow_manifold_b(0.5, 0.5).unwrap(), 0.5);
        assert_relative_eq!(p.slow_manifold_b(1.0, 0.3).unwrap(), 1.0);
        assert!(matches!(p.slow_manifold_b(1.0, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn cutoff_reaction_values() {
        let p = unit(0.75, 0.05);
        assert_relative_eq!(p.b(), 4.0 / 7.0, epsilon = 1e-15);
        assert_eq!(p.cutoff_reaction(0.25).unwrap(), 0.0);
        assert_eq!(p.cutoff_reaction(1.0).unwrap(), 0.0);
        assert_relative_eq!(p.cutoff_reaction(0.5).unwrap(), 1.0 / 28.0, epsilon = 1e-15);
        assert!(p.cutoff_reaction(1.1).is_err());
        assert!(unit(1.5, 0.05).cutoff_reaction(0.5).is_err());
    }

    #[test]
    fn slow_manifold_s_values() {
        let p = unit(1.25, 0.05);
        assert_relative_eq!(p.slow_manifold_s(0.5), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p.slow_manifold_s(1.0), p.b() * 1.25, epsilon = 1e-15);
        assert_eq!(unit(0.5, 0.05).slow_manifold_s(0.0), 0.0);
    }

    #[test]
    fn equilibria_labels() {
        let p = unit(0.5, 0.05);
        let e = continuum_equilibrium(&p, 0.2).unwrap();
        assert_eq!(e.stability, Stability::DegenerateStableNode);
        assert_eq!(continuum_equilibrium(&p, 0.5).unwrap().stability, Stability::DegenerateTransition);
        assert_eq!(continuum_equilibrium(&p, 0.7).unwrap().stability, Stability::DegenerateUnstableNode);

        let p = unit(4.0, 0.05);
        let set = equilibria(&p).unwrap();
        let e_t = set.isolated.iter().find(|e| e.kind == EquilibriumKind::Transitional).unwrap();
        assert_relative_eq!(e_t.coords.1, 0.6, epsilon = 1e-15);
        assert_eq!(e_t.stability, Stability::HyperbolicSaddle);
        let e_f = set.isolated.iter().find(|e| e.kind == EquilibriumKind::FullySaturated).unwrap();
        assert_relative_eq!(e_f.coords.1, 0.8, epsilon = 1e-15);
        assert_eq!(e_f.stability, Stability::HyperbolicStableNode);
        assert_eq!(set.continuum.len(), 1);
        assert!(equilibria(&unit(0.9, 0.05)).unwrap().isolated.len() == 1);
    }

    #[test]
    fn reaction_vanishes_at_equilibria() {
        for sigma in [0.3, 0.75, 1.0, 1.25, 4.0] {
            let p = unit(sigma, 0.05);
            for (m, i) in equilibria(&p).unwrap().sample_points() {
                let (fm, fi) = p.reaction_lds(m, i).unwrap();
                assert!(fm.abs() < 1e-14 && fi.abs() < 1e-12, "sigma {sigma} at ({m}, {i})");
            }
        }
    }

    #[test]
    fn derived_coefficients() {
        let p = unit(4.0, 0.05).with_diffusivity(4.0).unwrap();
        let d = p.derived();
        assert_relative_eq!(d.a_sigma * d.b_sigma, p.beta1 * p.beta2, epsilon = 1e-15);
        assert_relative_eq!(d.gamma_sigma.unwrap(), 0.6, epsilon = 1e-15);
        assert_relative_eq!(d.c_sigma_delta.unwrap(), (0.75f64 / 0.2).sqrt(), epsilon = 1e-14);
        assert!(unit(0.5, 0.05).derived().gamma_sigma.is_none());
        assert!(d.c_transition(&p, 0.3).is_err());
        let q = unit(0.5, 0.05);
        let c = q.derived().c_transition(&q, 0.2).unwrap();
        assert_relative_eq!(c, q.a() / (0.5 * 0.25 * 0.04), epsilon = 1e-12);
    }

    #[test]
    fn decay_constant_simplification() {
        // ab = 1 and alpha2 + beta2 = 2 with sigma = 0.5
        let p = ModelParams::new(0.5, 2.0 / 3.0, 1.5, 0.05, 1.0).unwrap();
        assert_relative_eq!(p.sigma(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(p.decay_constant(0.1), 0.1, epsilon = 1e-15);
        let direct = p.a() * p.b() * (0.5 - 0.1) / (2.0 * (p.alpha2 + p.beta2));
        assert_relative_eq!(p.decay_constant(0.1), direct, epsilon = 1e-15);
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(1.0, -1.0, 1.0, 0.05, 1.0).is_err());
        assert!(ModelParams::new(0.01, 1.0, 1.0, 0.05, 1.0).is_err());
        assert!(ModelParams::new(0.05, 1.0, 1.0, 0.05, 1.0).is_ok());
        let p = unit(0.5, 0.05);
        assert!(p.with_epsilon(0.1).unwrap().validate_full_model().is_err());
        assert!(p.with_epsilon(0.001).unwrap().validate_full_model().is_ok());
    }

    #[test]
    fn region_projection() {
        let p = unit(0.5, 0.1);
        assert!(p.in_region(0.5, 0.5, 0.0));
        assert!(!p.in_region(0.95, 0.0, 0.0));
        let (m, i, moved) = p.project_to_region(0.95, 0.0);
        assert!(moved);
        assert!(p.in_region(m, i, 1e-12));
        let (_, _, moved) = p.project_to_region(0.3, 0.2);
        assert!(!moved);
        let (m, i, _) = p.project_to_region(-0.1, 1.3);
        assert_eq!((m, i), (0.0, 1.0));
    }

    #[test]
    fn immune_gradient_matches_differences() {
        let p = unit(0.8, 0.05);
        let h = 1e-6;
        for &(m, i) in &[(0.3, 0.2), (0.7, 0.05), (0.95, 0.3)] {
            let (fm, fi) = p.immune_rate_grad(m, i);
            let dm = (p.immune_rate(m + h, i) - p.immune_rate(m - h, i)) / (2.0 * h);
            let di = (p.immune_rate(m, i + h) - p.immune_rate(m, i - h)) / (2.0 * h);
            assert_relative_eq!(fm, dm, epsilon = 1e-7);
            assert_relative_eq!(fi, di, epsilon = 1e-7);
        }
    }
}
