//! Stationary points, saddle-node location, genericity checks, and the two
//! bifurcation numbers.
//!
//! For a generic fold of ẋ = f(x, μ) the local dynamics are pinned down by
//!
//! - the speed coefficient `p0² = ½|f_μ f_xx|`, which sets the leading growth
//!   rate of the multipliers past the fold, and
//! - Takens' coefficient `a0 = 2 f_xxx / (3 f_xx²)`, the cubic coefficient
//!   that survives all normal-form transformations.
//!
//! Both formulas are sign-robust: they apply without first transforming the
//! model into the reference orientation (f_μ > 0, f_xx < 0). Where a formula
//! does depend on orientation (the asymptotic equilibrium positions), the
//! sign folding is handled internally and documented on [`orientation`].

use crate::exprlang::EvalError;
use crate::models::{DerivativeBundle, ModelError, ScalarModel1P};
use crate::numerics::{damped_newton, NewtonError};
use serde::Serialize;
use thiserror::Error;

/// Residual tolerance for stationary-point refinement.
pub const STATIONARY_TOL: f64 = 1e-12;
/// Residual tolerance for the 2x2 fold solve.
pub const SADDLE_NODE_TOL: f64 = 1e-10;
/// |f_μ| and |f_xx| below this are treated as genericity failures; the point
/// is then cusp-suspect rather than a clean fold.
pub const GENERICITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SnError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error("no sign change of f on [{lo}, {hi}] at mu = {mu}")]
    NoBracket { lo: f64, hi: f64, mu: f64 },
    #[error("genericity violation: |f_mu| = {f_mu:.3e}, |f_xx| = {f_xx:.3e} (tol {tol:e})")]
    GenericityViolation { f_mu: f64, f_xx: f64, tol: f64 },
    #[error(
        "cusp-suspect point at (x, mu) = ({x}, {mu}): |f_xx| = {f_xx:.3e} below {tol:e}"
    )]
    CuspSuspect { x: f64, mu: f64, f_xx: f64, tol: f64 },
}

/// A refined equilibrium of ẋ = f(x, μ) at fixed μ.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StationaryPoint {
    pub x: f64,
    pub mu: f64,
    /// f_x at the point; the stability coefficient.
    pub multiplier: f64,
}

/// A located degenerate equilibrium with its derivative bundle and the
/// bifurcation numbers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SaddleNodePoint {
    pub x: f64,
    pub mu: f64,
    pub bundle: DerivativeBundle,
    pub p0sq: f64,
    pub a0: f64,
    pub sign_fmu: i8,
    pub sign_fxx: i8,
    pub generic: bool,
}

/// Newton refinement of a stationary point from a guess at fixed μ.
pub fn find_stationary(
    model: &ScalarModel1P,
    mu: f64,
    x_guess: f64,
) -> Result<StationaryPoint, SnError> {
    let out = damped_newton(
        |z: &[f64; 1]| {
            let jet = model.jet_at(z[0], mu, 1)?;
            Ok(([jet.partial(0, 0)?], [[jet.partial(1, 0)?]]))
        },
        [x_guess],
        STATIONARY_TOL,
        50,
    )?;
    let multiplier = model.multiplier(out.x[0], mu)?;
    Ok(StationaryPoint {
        x: out.x[0],
        mu,
        multiplier,
    })
}

/// Bisection-safeguarded refinement on a bracketing interval; falls back to
/// plain bisection wherever the derivative misbehaves.
pub fn find_stationary_bracketed(
    model: &ScalarModel1P,
    mu: f64,
    lo: f64,
    hi: f64,
) -> Result<StationaryPoint, SnError> {
    let mut a = lo;
    let mut b = hi;
    let fa = model.eval(a, mu)?;
    let fb = model.eval(b, mu)?;
    if fa == 0.0 {
        return find_stationary(model, mu, a);
    }
    if fb == 0.0 {
        return find_stationary(model, mu, b);
    }
    if fa * fb > 0.0 {
        return Err(SnError::NoBracket { lo, hi, mu });
    }
    let mut flo = fa;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = model.eval(mid, mu)?;
        if fm.abs() < STATIONARY_TOL || (b - a).abs() < 1e-15 * mid.abs().max(1.0) {
            // Polish with Newton from inside the bracket.
            return find_stationary(model, mu, mid);
        }
        if flo * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            flo = fm;
        }
    }
    find_stationary(model, mu, 0.5 * (a + b))
}

/// Scans [lo, hi] with `n` samples and refines every bracketed root.
pub fn scan_stationary(
    model: &ScalarModel1P,
    mu: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<StationaryPoint>, SnError> {
    let mut roots: Vec<StationaryPoint> = Vec::new();
    let mut prev_x = lo;
    let mut prev_f = model.eval(lo, mu)?;
    for k in 1..=n {
        let x = lo + (hi - lo) * k as f64 / n as f64;
        let f = model.eval(x, mu)?;
        if prev_f == 0.0 || prev_f * f < 0.0 {
            let root = find_stationary_bracketed(model, mu, prev_x, x)?;
            if !roots
                .iter()
                .any(|r| (r.x - root.x).abs() < 1e-9 * root.x.abs().max(1.0))
            {
                roots.push(root);
            }
        }
        prev_x = x;
        prev_f = f;
    }
    Ok(roots)
}

/// 2x2 Newton on (f, f_x)(x, μ) = 0. On success the genericity flags are set
/// and the bifurcation numbers filled via [`takens_numbers`]; a point with
/// |f_xx| below tolerance is reported as cusp-suspect instead of being
/// accepted silently.
pub fn locate_saddle_node(
    model: &ScalarModel1P,
    x_guess: f64,
    mu_guess: f64,
) -> Result<SaddleNodePoint, SnError> {
    let out = damped_newton(
        |z: &[f64; 2]| {
            let jet = model.jet_at(z[0], z[1], 2)?;
            let res = [jet.partial(0, 0)?, jet.partial(1, 0)?];
            let jac = [
                [jet.partial(1, 0)?, jet.partial(0, 1)?],
                [jet.partial(2, 0)?, jet.partial(1, 1)?],
            ];
            Ok((res, jac))
        },
        [x_guess, mu_guess],
        SADDLE_NODE_TOL,
        50,
    )?;
    let (x, mu) = (out.x[0], out.x[1]);
    let bundle = model.bundle(x, mu)?;
    if bundle.f_xx.abs() < GENERICITY_TOL {
        return Err(SnError::CuspSuspect {
            x,
            mu,
            f_xx: bundle.f_xx,
            tol: GENERICITY_TOL,
        });
    }
    let (p0sq, a0) = takens_numbers(&bundle)?;
    Ok(SaddleNodePoint {
        x,
        mu,
        bundle,
        p0sq,
        a0,
        sign_fmu: if bundle.f_mu >= 0.0 { 1 } else { -1 },
        sign_fxx: if bundle.f_xx >= 0.0 { 1 } else { -1 },
        generic: true,
    })
}

/// The bifurcation numbers from a derivative bundle:
/// `p0² = ½|f_μ f_xx|`, `a0 = 2 f_xxx / (3 f_xx²)`. No sign normalisation of
/// the model is performed (both quantities are invariant under x → −x).
pub fn takens_numbers(bundle: &DerivativeBundle) -> Result<(f64, f64), SnError> {
    if bundle.f_mu.abs() < GENERICITY_TOL || bundle.f_xx.abs() < GENERICITY_TOL {
        return Err(SnError::GenericityViolation {
            f_mu: bundle.f_mu,
            f_xx: bundle.f_xx,
            tol: GENERICITY_TOL,
        });
    }
    let p0sq = 0.5 * (bundle.f_mu * bundle.f_xx).abs();
    let a0 = 2.0 * bundle.f_xxx / (3.0 * bundle.f_xx * bundle.f_xx);
    Ok((p0sq, a0))
}

/// Sign folding onto the reference orientation (f_μ > 0, f_xx < 0).
///
/// Returns (σ, τ) such that the recoded family
/// f̃(x̃, μ̃) = σ·f(σ·x̃, τ·μ̃) has f̃_μ > 0 and f̃_xx < 0. Equilibria of the
/// original family exist on the side μ − μ* = τ·m², and a state offset ξ̃ in
/// the reference frame corresponds to σ·ξ̃ in model coordinates.
pub fn orientation(sn: &SaddleNodePoint) -> (f64, f64) {
    let sigma = -(sn.sign_fxx as f64);
    let tau = sigma * sn.sign_fmu as f64;
    (sigma, tau)
}

/// Leading-order predictions near a fold at distance μ̃ = m² on the
/// two-equilibria side, in the fold's reference orientation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymptoticPrediction {
    /// Signed parameter offset in model coordinates (μ = μ* + mu_offset).
    pub mu_offset: f64,
    /// The two predicted equilibria in model coordinates, ordered by the
    /// reference frame (index 0 continues from the repelling side).
    pub x: [f64; 2],
    /// Predicted multipliers f_x at the two equilibria (index-matched).
    pub multiplier: [f64; 2],
    /// Quadratic coefficient of the local stationary branch
    /// μ − μ* = locus_coeff·(x − x*)² + O(|x − x*|³).
    pub locus_coeff: f64,
}

/// Power-series predictions of the equilibrium pair and its multipliers at
/// m = √μ̃ past the fold:
/// x_r = (−1)^r √(−2 f_μ / f_xx) m + ((f_μ f_xxx − 3 f_xμ f_xx)/(3 f_xx²)) m²
/// and f'(x_r) = (−1)^{r+1} √(−2 f_μ f_xx) m − ⅔ (f_μ f_xxx / f_xx) m², both
/// in the reference orientation, folded back to model coordinates.
pub fn asymptotic_predictions(
    sn: &SaddleNodePoint,
    m: f64,
) -> Result<AsymptoticPrediction, SnError> {
    if !sn.generic {
        return Err(SnError::GenericityViolation {
            f_mu: sn.bundle.f_mu,
            f_xx: sn.bundle.f_xx,
            tol: GENERICITY_TOL,
        });
    }
    let (sigma, tau) = orientation(sn);
    // Derivatives of the recoded family f̃(x̃, μ̃) = σ f(σ x̃, τ μ̃).
    let f_mu = sigma * tau * sn.bundle.f_mu;
    let f_xx = sigma * sn.bundle.f_xx;
    let f_xmu = tau * sn.bundle.f_xmu;
    let f_xxx = sn.bundle.f_xxx;
    debug_assert!(f_mu > 0.0 && f_xx < 0.0);

    let lead = (-2.0 * f_mu / f_xx).sqrt();
    let x2_coeff = (f_mu * f_xxx - 3.0 * f_xmu * f_xx) / (3.0 * f_xx * f_xx);
    let mult_lead = (-2.0 * f_mu * f_xx).sqrt();
    let mult_quad = -(2.0 / 3.0) * f_mu * f_xxx / f_xx;

    let mut x = [0.0; 2];
    let mut multiplier = [0.0; 2];
    for r in 1..=2usize {
        let sign = if r % 2 == 1 { -1.0 } else { 1.0 };
        let xi = sign * lead * m + x2_coeff * m * m;
        x[r - 1] = sn.x + sigma * xi;
        multiplier[r - 1] = -sign * mult_lead * m + mult_quad * m * m;
    }
    Ok(AsymptoticPrediction {
        mu_offset: tau * m * m,
        x,
        multiplier,
        locus_coeff: -sn.bundle.f_xx / (2.0 * sn.bundle.f_mu),
    })
}
