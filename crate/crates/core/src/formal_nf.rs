//! Formal reduction of a degenerate polynomial vector field to the truncated
//! normal form −y² + a·y³.
//!
//! Works on finite truncations ẋ = Σ_{i≥2} c_i x^i with c₂ ≠ 0. A linear
//! scaling makes the quadratic monic (coefficient −1); near-identity
//! transforms z = y + β y^{k−1} with β = b/(k−3) then remove the order-k term
//! for every k ≥ 4 in turn. The cubic coefficient that remains is
//! a = c₃/c₂², and no such transform can touch it.
//!
//! The reduction is performed on truncations of order ≤ 16 by default;
//! convergence of the infinite sequence of transforms is a separate analytic
//! fact and out of scope here. Every applied transform is recorded in a
//! [`ReductionLog`] so the reduction can be replayed and checked against the
//! generic composition machinery in [`crate::jets`].

use crate::jets::{jet_compose, Jet1, JetError};
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_REDUCTION_ORDER: usize = 16;
/// Removed orders whose residual magnitude falls below this are snapped to
/// exactly zero.
pub const CLEANUP_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FormalNfError {
    #[error("the quadratic coefficient c2 is zero; not a saddle-node jet")]
    ZeroQuadratic,
    #[error("series order {0} is too small (need at least 2)")]
    OrderTooSmall(usize),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Polynomial vector field ẋ = Σ_{i=2}^{K} c_i x^i. The constant and linear
/// coefficients are identically zero by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolySeries {
    /// coeffs[i] is the coefficient of x^i; entries 0 and 1 are zero.
    coeffs: Vec<f64>,
}

impl PolySeries {
    /// Builds from coefficients (c₂, c₃, ..) padded or truncated to `order`.
    pub fn from_coeffs(order: usize, from_quadratic: &[f64]) -> Result<PolySeries, FormalNfError> {
        if order < 2 {
            return Err(FormalNfError::OrderTooSmall(order));
        }
        let mut coeffs = vec![0.0; order + 1];
        for (k, &c) in from_quadratic.iter().enumerate() {
            if 2 + k <= order {
                coeffs[2 + k] = c;
            }
        }
        Ok(PolySeries { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, i: usize) -> f64 {
        if i < self.coeffs.len() {
            self.coeffs[i]
        } else {
            0.0
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// One applied coordinate change.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum Transform {
    /// y = α·x.
    Scale { alpha: f64 },
    /// z = y + β·y^{k−1}, removing the order-k term.
    Removal { k: usize, beta: f64 },
}

/// The list of transforms applied by [`reduce_to_takens`], with the final
/// cubic coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionLog {
    pub transforms: Vec<Transform>,
    pub a: f64,
}

// Truncated polynomial helpers on raw coefficient vectors (index = power).

fn poly_mul_trunc(a: &[f64], b: &[f64], order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    for (i, &ai) in a.iter().enumerate().take(order + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(order + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Substitutes `inner` (zero constant term) into `outer`, truncating.
fn poly_compose_trunc(outer: &[f64], inner: &[f64], order: usize) -> Vec<f64> {
    debug_assert!(inner.first().copied().unwrap_or(0.0) == 0.0);
    let mut acc = vec![0.0; order + 1];
    for k in (0..outer.len().min(order + 1)).rev() {
        acc = poly_mul_trunc(&acc, inner, order);
        acc[0] += outer[k];
    }
    acc
}

/// Inverts z = y + β y^{k-1} to y(z) as a truncated series, by fixed-point
/// iteration y ← z − β y^{k-1}; each sweep gains k−2 orders.
fn invert_near_identity(beta: f64, k: usize, order: usize) -> Vec<f64> {
    let mut y = vec![0.0; order + 1];
    if order >= 1 {
        y[1] = 1.0;
    }
    let sweeps = order / (k - 2).max(1) + 2;
    for _ in 0..sweeps {
        // y_pow = y^{k-1} truncated.
        let mut y_pow = vec![0.0; order + 1];
        y_pow[0] = 1.0;
        for _ in 0..(k - 1) {
            y_pow = poly_mul_trunc(&y_pow, &y, order);
        }
        let mut next = vec![0.0; order + 1];
        if order >= 1 {
            next[1] = 1.0;
        }
        for i in 0..=order {
            next[i] -= beta * y_pow[i];
        }
        y = next;
    }
    y
}

/// Applies z = y + β y^{k−1} to ẏ = s(y): ż = (1 + β(k−1) y^{k−2})·s(y)
/// expressed in z.
fn apply_removal(s: &[f64], k: usize, beta: f64, order: usize) -> Vec<f64> {
    let mut jac = vec![0.0; order + 1];
    jac[0] = 1.0;
    if k >= 2 && k - 2 <= order {
        jac[k - 2] += beta * (k as f64 - 1.0);
    }
    let numer = poly_mul_trunc(s, &jac, order);
    let y_of_z = invert_near_identity(beta, k, order);
    poly_compose_trunc(&numer, &y_of_z, order)
}

/// Linear scaling y = αx with α = −c₂, making the quadratic coefficient −1.
/// The cubic coefficient of the result is c₃/c₂².
pub fn scale_quadratic(s: &PolySeries) -> Result<(PolySeries, f64), FormalNfError> {
    let c2 = s.coeff(2);
    if c2 == 0.0 {
        return Err(FormalNfError::ZeroQuadratic);
    }
    let alpha = -c2;
    // y = αx transforms c_i into c_i α^{1-i}.
    let mut coeffs = vec![0.0; s.order() + 1];
    for i in 2..=s.order() {
        coeffs[i] = s.coeff(i) * alpha.powi(1 - i as i32);
    }
    Ok((PolySeries { coeffs }, alpha))
}

/// Full reduction: scale the quadratic, then remove each order k = 4..K.
/// The output is exactly −y² + a y³ (removed orders snapped to zero when
/// below [`CLEANUP_TOL`]); the log replays to the same series.
pub fn reduce_to_takens(s: &PolySeries) -> Result<(PolySeries, ReductionLog), FormalNfError> {
    let order = s.order();
    let (mut cur, alpha) = scale_quadratic(s)?;
    let mut transforms = Vec::new();
    if alpha != 1.0 {
        transforms.push(Transform::Scale { alpha });
    }
    for k in 4..=order {
        let b = cur.coeff(k);
        if b == 0.0 {
            continue;
        }
        let beta = b / (k as f64 - 3.0);
        let new_coeffs = apply_removal(&cur.coeffs, k, beta, order);
        cur = PolySeries { coeffs: new_coeffs };
        transforms.push(Transform::Removal { k, beta });
    }
    let mut coeffs = cur.coeffs;
    for (i, c) in coeffs.iter_mut().enumerate() {
        if i >= 4 && c.abs() < CLEANUP_TOL {
            *c = 0.0;
        }
    }
    let a = coeffs.get(3).copied().unwrap_or(0.0);
    Ok((PolySeries { coeffs }, ReductionLog { transforms, a }))
}

/// Replays a reduction log on a series using the generic jet-composition
/// machinery. Independent of the coefficient arithmetic in
/// [`reduce_to_takens`]; used to validate logs.
pub fn replay(s: &PolySeries, log: &ReductionLog) -> Result<PolySeries, FormalNfError> {
    let order = s.order();
    let mut cur = Jet1::from_coeffs(s.coeffs.clone());
    for t in &log.transforms {
        match *t {
            Transform::Scale { alpha } => {
                // ẏ = α s(y/α): compose s with y/α, then scale by α.
                let inner = {
                    let mut c = vec![0.0; order + 1];
                    if order >= 1 {
                        c[1] = 1.0 / alpha;
                    }
                    Jet1::from_coeffs(c)
                };
                cur = jet_compose(&cur, &inner)?.scale(alpha);
            }
            Transform::Removal { k, beta } => {
                // ż = (1 + β(k−1)y^{k−2})·s(y) with y = y(z).
                let mut jac_c = vec![0.0; order + 1];
                jac_c[0] = 1.0;
                if k - 2 <= order {
                    jac_c[k - 2] += beta * (k as f64 - 1.0);
                }
                let numer = cur.mul(&Jet1::from_coeffs(jac_c));
                let y_of_z = Jet1::from_coeffs(invert_near_identity(beta, k, order));
                cur = jet_compose(&numer, &y_of_z)?;
            }
        }
    }
    Ok(PolySeries {
        coeffs: cur.coeffs().to_vec(),
    })
}

/// Applies the quadratic near-identity change z = y + β y² to a series and
/// returns the resulting cubic coefficient. Such transforms generate new
/// quartic-and-higher terms but cannot move the cubic one.
pub fn cubic_after_quadratic_transform(s: &PolySeries, beta: f64) -> f64 {
    let out = apply_removal(&s.coeffs, 3, beta, s.order().max(3));
    out[3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monic_input_unchanged() {
        let s = PolySeries::from_coeffs(6, &[-1.0, 0.8]).unwrap();
        let (scaled, alpha) = scale_quadratic(&s).unwrap();
        assert_eq!(alpha, 1.0);
        assert_eq!(scaled, s);
    }

    #[test]
    fn scale_produces_takens_cubic() {
        // c₂ = ½ f_xx, c₃ = ⅙ f_xxx with f_xx = −2, f_xxx = 6: a = 1.
        let s = PolySeries::from_coeffs(4, &[-1.0, 1.0]).unwrap();
        let (scaled, _) = scale_quadratic(&s).unwrap();
        assert_eq!(scaled.coeff(2), -1.0);
        assert!((scaled.coeff(3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scaled_cubic_is_c3_over_c2_squared() {
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let c2 = -5.0 + next() * 4.9; // [-5, -0.1]
            let c3 = -5.0 + next() * 10.0;
            let s = PolySeries::from_coeffs(5, &[c2, c3]).unwrap();
            let (scaled, _) = scale_quadratic(&s).unwrap();
            let expect = c3 / (c2 * c2);
            assert!(
                (scaled.coeff(3) - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                "c2={c2} c3={c3}"
            );
        }
    }

    #[test]
    fn already_reduced_series_passes_through() {
        let s = PolySeries::from_coeffs(6, &[-1.0, 1.0]).unwrap();
        let (out, log) = reduce_to_takens(&s).unwrap();
        assert!(log.transforms.is_empty());
        assert_eq!(out, s);
        assert_eq!(log.a, 1.0);
    }

    #[test]
    fn single_quartic_removal_uses_beta_one() {
        // −x² + x³ + x⁴ at K = 5: first removal has β = 1/(4−3) = 1.
        let s = PolySeries::from_coeffs(5, &[-1.0, 1.0, 1.0]).unwrap();
        let (out, log) = reduce_to_takens(&s).unwrap();
        let beta4 = log
            .transforms
            .iter()
            .find_map(|t| match t {
                Transform::Removal { k: 4, beta } => Some(*beta),
                _ => None,
            })
            .expect("a k=4 removal");
        assert_eq!(beta4, 1.0);
        assert_eq!(out.coeff(4), 0.0);
        assert!((out.coeff(3) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_degree_eight_reduction() {
        let mut state = 0xdeadbeefcafef00du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(99);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..50 {
            let coeffs: Vec<f64> = std::iter::once(-1.0)
                .chain((0..6).map(|_| next()))
                .collect();
            let s = PolySeries::from_coeffs(8, &coeffs).unwrap();
            let (out, log) = reduce_to_takens(&s).unwrap();
            for k in 4..=8 {
                assert!(out.coeff(k).abs() < 1e-10, "order {k}: {}", out.coeff(k));
            }
            assert!((out.coeff(3) - coeffs[1]).abs() < 1e-10);
            assert!((log.a - coeffs[1]).abs() < 1e-10);

            // Replay through the jet-composition route.
            let replayed = replay(&s, &log).unwrap();
            for k in 0..=8 {
                let d = (replayed.coeff(k) - out.coeff(k)).abs();
                assert!(d < 1e-10 + CLEANUP_TOL, "replay differs at order {k}: {d}");
            }
        }
    }

    #[test]
    fn cubic_persistence_under_quadratic_transforms() {
        let s = PolySeries::from_coeffs(6, &[-1.0, 0.625]).unwrap();
        // Dyadic βs keep the float arithmetic exact.
        for beta in [-0.5, -0.25, 0.25, 0.5, 1.0, 2.0] {
            let cubic = cubic_after_quadratic_transform(&s, beta);
            assert_eq!(cubic, 0.625, "beta = {beta}");
        }
    }

    #[test]
    fn zero_quadratic_rejected() {
        let s = PolySeries::from_coeffs(4, &[0.0, 1.0]).unwrap();
        assert!(matches!(
            scale_quadratic(&s),
            Err(FormalNfError::ZeroQuadratic)
        ));
        assert!(matches!(
            reduce_to_takens(&s),
            Err(FormalNfError::ZeroQuadratic)
        ));
    }
}
