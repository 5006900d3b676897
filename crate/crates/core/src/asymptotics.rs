//! Closed-form and asymptotic speed formulas, tail exponents and the
//! leading-order small-`sigma` phase path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scalarwaves;

/// Leading-order rescaled speed of the small-`sigma` phase path, `sqrt(1/3)`.
pub const V0: f64 = 0.577_350_269_189_625_8;

/// Speeds below this `sigma` use the small-`sigma` expansion in [`best_vstar`].
pub const SMALL_SIGMA_THRESHOLD: f64 = 0.3;
/// Speeds above this `sigma` use the near-one expansion in [`best_vstar`].
pub const NEAR_ONE_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    SmallSigma,
    NearOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpeedMethod {
    NumericShooting,
    NumericBvp { delta: f64 },
    AsymSmallSigma,
    AsymNearOne,
    ExactFamilyMin,
}

impl SpeedMethod {
    pub fn label(&self) -> String {
        match self {
            SpeedMethod::NumericShooting => "shoot".into(),
            SpeedMethod::NumericBvp { .. } => "bvp".into(),
            SpeedMethod::AsymSmallSigma => "asym-small".into(),
            SpeedMethod::AsymNearOne => "asym-near-one".into(),
            SpeedMethod::ExactFamilyMin => "exact".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedCurve {
    pub sigma_values: Vec<f64>,
    pub speeds: Vec<f64>,
    pub method: SpeedMethod,
}

impl SpeedCurve {
    pub fn new(sigma_values: Vec<f64>, speeds: Vec<f64>, method: SpeedMethod) -> Result<Self> {
        if sigma_values.len() != speeds.len() {
            return Err(Error::InvalidParameter("sigma and speed arrays differ in length".into()));
        }
        if sigma_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("sigma values must increase".into()));
        }
        if speeds.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("speeds must be positive".into()));
        }
        Ok(SpeedCurve { sigma_values, speeds, method })
    }
}

/// `b(sigma)` for the rates `alpha2`, `beta2` of `p`.
pub fn b_of(p: &ModelParams, sigma: f64) -> f64 {
    p.beta2 / (p.beta2 * sigma + p.alpha2)
}

fn check_open_unit(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Domain(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    Ok(())
}

/// Small-`sigma` and near-one expansions of the cut-off front speed `v*(sigma)`.
pub fn vstar_asym(sigma: f64, p: &ModelParams, branch: Branch) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::Domain(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    let b = b_of(p, sigma);
    Ok(match branch {
        Branch::SmallSigma => (b / 3.0).sqrt() * sigma.powf(1.5),
        Branch::NearOne => b.sqrt() * (std::f64::consts::FRAC_1_SQRT_2 - std::f64::consts::SQRT_2 * (1.0 - sigma)),
    })
}

/// Minimum speed `sqrt(b(1) / 2)` of the front family at `sigma = 1`.
pub fn vstar_sigma_one(p: &ModelParams) -> f64 {
    (b_of(p, 1.0) / 2.0).sqrt()
}

/// One value of `v*(sigma)`: expansions near the ends, shooting in between.
pub fn best_vstar(sigma: f64, p: &ModelParams) -> Result<(f64, SpeedMethod)> {
    check_open_unit(sigma)?;
    if sigma < SMALL_SIGMA_THRESHOLD {
        Ok((vstar_asym(sigma, p, Branch::SmallSigma)?, SpeedMethod::AsymSmallSigma))
    } else if sigma > NEAR_ONE_THRESHOLD {
        Ok((vstar_asym(sigma, p, Branch::NearOne)?, SpeedMethod::AsymNearOne))
    } else {
        let r = scalarwaves::solve_mvp1_speed(sigma, p, 1e-10)?;
        Ok((r.speed, SpeedMethod::NumericShooting))
    }
}

/// Minimum speed of the upper-transition rescaled problem
/// `X'' + V X' + X (1 + X/(sigma-1)) (1 - X) = 0`.
pub fn uptw_rescaled_min(sigma: f64) -> Result<f64> {
    if !(sigma > 1.0) {
        return Err(Error::Domain(format!("upper transition waves need sigma > 1, got {sigma}")));
    }
    if sigma < 1.5 {
        let s = (2.0 * (sigma - 1.0)).sqrt();
        Ok(s + 1.0 / s)
    } else {
        Ok(2.0)
    }
}

/// Minimum speed of the upper-transition wave in the original frame.
pub fn uptw_min_speed(sigma: f64, p: &ModelParams) -> Result<f64> {
    if !(sigma > 1.0) {
        return Err(Error::Domain(format!("upper transition waves need sigma > 1, got {sigma}")));
    }
    let b = b_of(p, sigma);
    if sigma < 1.5 {
        Ok((2.0 * b).sqrt() * ((sigma - 1.0) + 0.5))
    } else {
        Ok(2.0 * (b * (sigma - 1.0)).sqrt())
    }
}

/// Minimum speed of the lower-transition wave, `2 sqrt(a b (sigma-1)/beta2) sqrt(D/delta)`.
///
/// `p` supplies `alpha2`, `beta2`, `D`; `beta1` follows from `sigma`.
pub fn lptw_min_speed(sigma: f64, delta: f64, p: &ModelParams) -> Result<f64> {
    if !(sigma > 1.0) {
        return Err(Error::Domain(format!("lower transition waves need sigma > 1, got {sigma}")));
    }
    let q = p.with_sigma(sigma)?.with_delta(delta)?;
    Ok(2.0 * (q.a() * q.b() * (sigma - 1.0) / q.beta2).sqrt() * (q.d / delta).sqrt())
}

/// Plateau ratio of the upper to the lower transition wave.
pub fn wave_height_ratio(sigma: f64) -> Result<f64> {
    if !(sigma > 1.0) {
        return Err(Error::Domain(format!("height ratio needs sigma > 1, got {sigma}")));
    }
    Ok(sigma / (sigma - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpeed {
    pub speed: f64,
    /// Whether the value comes from a numerical solve rather than a closed form.
    pub numeric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FamilySpeeds {
    pub fptw: Option<FamilySpeed>,
    pub uptw: Option<FamilySpeed>,
    pub lptw: Option<FamilySpeed>,
}

/// Minimum (or unique) speeds of the wave families present at `sigma`.
pub fn family_min_speeds(sigma: f64, delta: f64, p: &ModelParams) -> Result<FamilySpeeds> {
    let q = p.with_sigma(sigma)?.with_delta(delta)?;
    let mut out = FamilySpeeds::default();
    if sigma < 1.0 {
        let r = scalarwaves::solve_mvp1_speed(sigma, &q, 1e-10)?;
        out.fptw = Some(FamilySpeed { speed: r.speed, numeric: true });
    } else if sigma == 1.0 {
        out.fptw = Some(FamilySpeed { speed: vstar_sigma_one(&q), numeric: false });
    } else {
        out.uptw = Some(FamilySpeed { speed: uptw_min_speed(sigma, &q)?, numeric: false });
        out.lptw = Some(FamilySpeed { speed: lptw_min_speed(sigma, delta, &q)?, numeric: false });
    }
    Ok(out)
}

/// Leading-order rescaled phase path `Y0(X) = -X sqrt(1 - 2X/3)`.
pub fn appendix_c_leading(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("X must lie in [0, 1], got {x}")));
    }
    Ok(-x * (1.0 - 2.0 * x / 3.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailShape {
    Exponential,
    /// `z exp(-rate z)`, the critical pulled case.
    LinearExponential,
    /// `rate / z`; `rate` holds the coefficient, not an exponent.
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    pub rate: f64,
    pub shape: TailShape,
}

/// Growth rate as `z -> -infinity` and decay rate as `z -> +infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRates {
    pub left: Tail,
    pub right: Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarKind {
    /// Cut-off front for `sigma < 1`.
    Mvp1,
    /// Cubic front at `sigma = 1`.
    Mvp2,
    /// Lower-transition immune front, rescaled.
    Mvp3,
    /// Upper-transition front, rescaled.
    Mvp4,
}

/// Tail exponents of the reduced scalar wave problems. `v` is in the native
/// (possibly rescaled) units of `kind`.
pub fn tail_rates(kind: ScalarKind, v: f64, sigma: f64, p: &ModelParams) -> Result<TailRates> {
    let exp = |rate| Tail { rate, shape: TailShape::Exponential };
    let growth = |v: f64, slope: f64| (-v + (v * v + 4.0 * slope).sqrt()) / 2.0;
    match kind {
        ScalarKind::Mvp1 => {
            check_open_unit(sigma)?;
            if !(v > 0.0) {
                return Err(Error::Domain("speed must be positive".into()));
            }
            let b = b_of(p, sigma);
            Ok(TailRates { left: exp(growth(v, b * sigma)), right: exp(v) })
        }
        ScalarKind::Mvp2 => {
            let b1 = b_of(p, 1.0);
            let vm = (b1 / 2.0).sqrt();
            if v < vm * (1.0 - 1e-12) {
                return Err(Error::Nonexistence(format!("speed {v} below the family minimum {vm}")));
            }
            let right = if (v - vm).abs() <= 1e-12 * vm {
                exp(v)
            } else {
                Tail { rate: v / b1, shape: TailShape::Algebraic }
            };
            Ok(TailRates { left: exp(growth(v, b1)), right })
        }
        ScalarKind::Mvp3 => {
            if !(sigma > 1.0) {
                return Err(Error::Domain(format!("sigma must exceed 1, got {sigma}")));
            }
            if v < 2.0 * (1.0 - 1e-12) {
                return Err(Error::Nonexistence(format!("rescaled speed {v} below 2")));
            }
            let gamma = p.alpha2 * b_of(p, sigma) * (sigma - 1.0) / p.beta2;
            let disc = (v * v - 4.0).max(0.0).sqrt();
            let right = if disc == 0.0 {
                Tail { rate: v / 2.0, shape: TailShape::LinearExponential }
            } else {
                exp((v - disc) / 2.0)
            };
            let left = exp(((v * v + 4.0 / (1.0 + gamma)).sqrt() - v) / 2.0);
            Ok(TailRates { left, right })
        }
        ScalarKind::Mvp4 => {
            let vm = uptw_rescaled_min(sigma)?;
            if v < vm * (1.0 - 1e-12) {
                return Err(Error::Nonexistence(format!("rescaled speed {v} below the minimum {vm}")));
            }
            let disc = (v * v - 4.0).max(0.0).sqrt();
            // the pushed minimum-speed front decays on the fast root
            let right = if sigma < 1.5 && (v - vm).abs() <= 1e-12 * vm {
                exp((v + disc) / 2.0)
            } else if disc == 0.0 {
                Tail { rate: 1.0, shape: TailShape::LinearExponential }
            } else {
                exp((v - disc) / 2.0)
            };
            let left = exp(((v * v + 4.0 * (1.0 + 1.0 / (sigma - 1.0))).sqrt() - v) / 2.0);
            Ok(TailRates { left, right })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> ModelParams {
        ModelParams::unit_rates(1.0, 0.01).unwrap()
    }

    #[test]
    fn asymptotic_branches() {
        let p = unit();
        let small = vstar_asym(0.1, &p, Branch::SmallSigma).unwrap();
        assert_relative_eq!(small, (1.0 / 1.1 / 3.0f64).sqrt() * 0.1f64.powf(1.5), epsilon = 1e-15);
        assert!((small - 0.017408).abs() < 1e-6);
        let near = vstar_asym(0.9, &p, Branch::NearOne).unwrap();
        assert_relative_eq!(near, (1.0 / 1.9f64).sqrt() * (0.5f64.sqrt() - 0.02f64.sqrt()), epsilon = 1e-15);
        assert!((near - 0.41039).abs() < 1e-5);
        assert_relative_eq!(vstar_asym(1.0, &p, Branch::NearOne).unwrap(), vstar_sigma_one(&p), epsilon = 1e-15);
        assert!(vstar_asym(1.2, &p, Branch::SmallSigma).is_err());
    }

    #[test]
    fn family_speeds_at_sigma_four() {
        let p = ModelParams::unit_rates(4.0, 0.05).unwrap().with_diffusivity(4.0).unwrap();
        let f = family_min_speeds(4.0, 0.05, &p).unwrap();
        assert!(f.fptw.is_none());
        let u = f.uptw.unwrap().speed;
        let l = f.lptw.unwrap().speed;
        assert!((u - 2.0 * 0.6f64.sqrt()).abs() < 1e-12);
        assert!((l - 2.0 * 3.0f64.sqrt() / 0.05f64.sqrt()).abs() < 1e-10);
        assert_relative_eq!(l / u, 10.0, epsilon = 1e-12);
        let one = family_min_speeds(1.0, 0.05, &p).unwrap();
        assert_relative_eq!(one.fptw.unwrap().speed, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn piecewise_speed_is_continuous_at_three_halves() {
        let p = unit();
        let b = b_of(&p, 1.5);
        let left = (2.0 * b).sqrt() * 1.0;
        let right = 2.0 * (b * 0.5).sqrt();
        assert_eq!(left, right);
        assert!((uptw_rescaled_min(1.5 - 1e-12).unwrap() - 2.0).abs() < 1e-10);
        assert_relative_eq!(uptw_min_speed(1.4, &p).unwrap(), (2.0 * b_of(&p, 1.4)).sqrt() * 0.9, epsilon = 1e-15);
    }

    #[test]
    fn speed_map_continuity_at_one() {
        let p = unit();
        let v1 = vstar_sigma_one(&p);
        let mut prev = f64::INFINITY;
        for eps in [0.1, 0.01] {
            let below = vstar_asym(1.0 - eps, &p, Branch::NearOne).unwrap();
            let above = uptw_min_speed(1.0 + eps, &p).unwrap();
            let gap = (below - v1).abs().max((above - v1).abs());
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn height_ratio() {
        assert_relative_eq!(wave_height_ratio(4.0).unwrap(), 4.0 / 3.0);
        assert_relative_eq!(wave_height_ratio(2.0).unwrap(), 2.0);
        assert!((wave_height_ratio(200.0).unwrap() - 1.0).abs() < 0.01);
        assert!(wave_height_ratio(1.0).is_err());
    }

    #[test]
    fn leading_phase_path() {
        assert_eq!(appendix_c_leading(0.0).unwrap(), 0.0);
        assert_relative_eq!(appendix_c_leading(1.0).unwrap(), -V0, epsilon = 1e-15);
        assert!((appendix_c_leading(0.5).unwrap() + 0.40825).abs() < 1e-5);
    }

    #[test]
    fn tails() {
        let p = ModelParams::unit_rates(1.25, 0.05).unwrap();
        let t = tail_rates(ScalarKind::Mvp3, 2.0, 1.25, &p).unwrap();
        assert_eq!(t.right.shape, TailShape::LinearExponential);
        assert_relative_eq!(t.right.rate, 1.0);
        let t = tail_rates(ScalarKind::Mvp2, 0.7, 1.0, &p).unwrap();
        assert_eq!(t.right.shape, TailShape::Algebraic);
        let t = tail_rates(ScalarKind::Mvp1, 0.2, 0.5, &p).unwrap();
        assert_eq!(t.right.rate, 0.2);
        let vm = uptw_rescaled_min(1.25).unwrap();
        let t = tail_rates(ScalarKind::Mvp4, vm, 1.25, &p).unwrap();
        // the exact minimum-speed waveform is a symmetric logistic
        assert_relative_eq!(t.right.rate, 1.0 / 0.5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(t.left.rate, 1.0 / 0.5f64.sqrt(), epsilon = 1e-12);
        assert!(tail_rates(ScalarKind::Mvp3, 1.5, 1.25, &p).is_err());
    }
}
