//! Small dense linear algebra and a damped Newton iteration, shared by the
//! solver-flavoured modules. Everything here is sized for systems of at most
//! four unknowns.

use crate::exprlang::EvalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NewtonError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("singular Jacobian in Newton iteration")]
    SingularJacobian,
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let mut pivot = col;
        for row in (col + 1)..N {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..N {
            let factor = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for col in (0..N).rev() {
        let mut acc = b[col];
        for k in (col + 1)..N {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

pub struct NewtonOutcome<const N: usize> {
    pub x: [f64; N],
    pub iterations: usize,
    pub residual: f64,
}

fn inf_norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on `f(x) = 0` with a user-supplied residual/Jacobian
/// callback. A full step is halved (up to 20 times) whenever it fails to
/// decrease the residual norm. Converges when the residual infinity norm
/// drops below `tol`.
pub fn damped_newton<const N: usize>(
    mut eval: impl FnMut(&[f64; N]) -> Result<([f64; N], [[f64; N]; N]), EvalError>,
    x0: [f64; N],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome<N>, NewtonError> {
    let mut x = x0;
    let (mut res, mut jac) = eval(&x)?;
    let mut res_norm = inf_norm(&res);
    for iter in 1..=max_iter {
        if res_norm < tol {
            return Ok(NewtonOutcome {
                x,
                iterations: iter - 1,
                residual: res_norm,
            });
        }
        let neg = {
            let mut n = res;
            for v in n.iter_mut() {
                *v = -*v;
            }
            n
        };
        let step = solve_linear(jac, neg).ok_or(NewtonError::SingularJacobian)?;
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..=20 {
            let mut trial = x;
            for k in 0..N {
                trial[k] += damping * step[k];
            }
            let (tres, tjac) = eval(&trial)?;
            let tnorm = inf_norm(&tres);
            if tnorm < res_norm || tnorm < tol {
                accepted = Some((trial, tres, tjac, tnorm));
                break;
            }
            damping *= 0.5;
        }
        match accepted {
            Some((trial, tres, tjac, tnorm)) => {
                x = trial;
                res = tres;
                jac = tjac;
                res_norm = tnorm;
            }
            None => {
                return Err(NewtonError::NoConvergence {
                    iterations: iter,
                    residual: res_norm,
                })
            }
        }
    }
    if res_norm < tol {
        Ok(NewtonOutcome {
            x,
            iterations: max_iter,
            residual: res_norm,
        })
    } else {
        Err(NewtonError::NoConvergence {
            iterations: max_iter,
            residual: res_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_3x3() {
        let a = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        let b = [8.0, -11.0, -3.0];
        let x = solve_linear(a, b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        assert!((x[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = [[1.0, 2.0], [2.0, 4.0]];
        assert!(solve_linear(a, [1.0, 2.0]).is_none());
    }

    #[test]
    fn newton_on_a_scalar_root() {
        let out = damped_newton(
            |x: &[f64; 1]| Ok(([x[0] * x[0] - 2.0], [[2.0 * x[0]]])),
            [1.0],
            1e-14,
            50,
        )
        .unwrap();
        assert!((out.x[0] - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn newton_reports_nonconvergence() {
        // Gradient never points at a root: f = 1 + x², always positive.
        let res = damped_newton(
            |x: &[f64; 1]| Ok(([1.0 + x[0] * x[0]], [[2.0 * x[0]]])),
            [1.0],
            1e-12,
            30,
        );
        assert!(res.is_err());
    }
}
