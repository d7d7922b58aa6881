//! Truncated Taylor-series (jet) arithmetic in one and two variables.
//!
//! A [`Jet2`] stores the scaled coefficients `1/(i! j!) · ∂^{i+j}f/∂x^i ∂μ^j`
//! of a quantity with respect to a state variable and a parameter, truncated
//! at a total order. Arithmetic on jets yields the exact coefficients of the
//! corresponding operation on functions, so higher derivatives fall out of
//! ordinary expression evaluation; no finite differencing is involved.
//! [`Jet1`] is the univariate version, used by the formal normal-form
//! reduction and for series composition.
//!
//! Coefficients are stored factorial-scaled to keep magnitudes tame; raw
//! partial derivatives are reconstructed on extraction ([`Jet2::partial`]).

use thiserror::Error;

/// Default truncation order. High enough for `f_xxx` plus one spare order,
/// which is what the bifurcation formulas consume.
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("division by a jet whose constant term is zero")]
    SingularDivision,
    #[error("{func}: constant term {value} is outside the domain of the series expansion")]
    Domain { func: &'static str, value: f64 },
    #[error("jet order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("partial derivative index ({i},{j}) exceeds truncation order {order}")]
    PartialOutOfRange { i: usize, j: usize, order: usize },
    #[error("composition requires an inner series with zero constant term (got {0})")]
    InnerConstantTerm(f64),
    #[error("abs is not differentiable at zero (constant term {0})")]
    AbsAtZero(f64),
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Bivariate jet: triangular coefficient table over (state, parameter).
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    order: usize,
    /// Graded layout: entry (i,j) with d = i+j lives at d(d+1)/2 + j.
    coeffs: Vec<f64>,
}

fn tri_len(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

fn tri_idx(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

impl Jet2 {
    /// Jet of the constant function `v`.
    pub fn constant(v: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; tri_len(order)];
        coeffs[0] = v;
        Jet2 { order, coeffs }
    }

    /// Jet of the state variable itself at expansion point `x0`.
    pub fn state_var(x0: f64, order: usize) -> Self {
        let mut j = Jet2::constant(x0, order);
        if order >= 1 {
            j.coeffs[tri_idx(1, 0)] = 1.0;
        }
        j
    }

    /// Jet of the parameter itself at expansion point `mu0`.
    pub fn param_var(mu0: f64, order: usize) -> Self {
        let mut j = Jet2::constant(mu0, order);
        if order >= 1 {
            j.coeffs[tri_idx(0, 1)] = 1.0;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Constant term, i.e. the plain value at the expansion point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Scaled coefficient `1/(i! j!) ∂^{i+j}f/∂x^i∂μ^j`. Panics out of range.
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        assert!(i + j <= self.order, "coefficient ({i},{j}) out of range");
        self.coeffs[tri_idx(i, j)]
    }

    /// Raw partial derivative `∂^{i+j}f/∂x^i∂μ^j = i!·j!·coeff(i,j)`.
    pub fn partial(&self, i: usize, j: usize) -> Result<f64, JetError> {
        if i + j > self.order {
            return Err(JetError::PartialOutOfRange {
                i,
                j,
                order: self.order,
            });
        }
        Ok(factorial(i) * factorial(j) * self.coeffs[tri_idx(i, j)])
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn check_order(&self, other: &Jet2) -> Result<(), JetError> {
        if self.order != other.order {
            return Err(JetError::OrderMismatch(self.order, other.order));
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Jet2 {
        Jet2 {
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn neg(&self) -> Jet2 {
        self.scale(-1.0)
    }

    pub fn add(&self, rhs: &Jet2) -> Jet2 {
        self.check_order(rhs).expect("jet order mismatch in add");
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Jet2 {
            order: self.order,
            coeffs,
        }
    }

    pub fn sub(&self, rhs: &Jet2) -> Jet2 {
        self.check_order(rhs).expect("jet order mismatch in sub");
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Jet2 {
            order: self.order,
            coeffs,
        }
    }

    /// Truncated product: coefficient convolution over the triangle.
    pub fn mul(&self, rhs: &Jet2) -> Jet2 {
        self.check_order(rhs).expect("jet order mismatch in mul");
        let k = self.order;
        let mut out = vec![0.0; tri_len(k)];
        for i1 in 0..=k {
            for j1 in 0..=(k - i1) {
                let a = self.coeffs[tri_idx(i1, j1)];
                if a == 0.0 {
                    continue;
                }
                for i2 in 0..=(k - i1 - j1) {
                    for j2 in 0..=(k - i1 - j1 - i2) {
                        let b = rhs.coeffs[tri_idx(i2, j2)];
                        if b != 0.0 {
                            out[tri_idx(i1 + i2, j1 + j2)] += a * b;
                        }
                    }
                }
            }
        }
        Jet2 {
            order: k,
            coeffs: out,
        }
    }

    /// Truncated quotient, solved coefficient-by-coefficient in graded order.
    pub fn checked_div(&self, rhs: &Jet2) -> Result<Jet2, JetError> {
        self.check_order(rhs)?;
        let b0 = rhs.coeffs[0];
        if b0 == 0.0 {
            return Err(JetError::SingularDivision);
        }
        let k = self.order;
        let mut out = vec![0.0; tri_len(k)];
        for d in 0..=k {
            for j in 0..=d {
                let i = d - j;
                // a[i][j] = sum_{p<=i, q<=j} r[i-p][j-q] * b[p][q]
                let mut acc = self.coeffs[tri_idx(i, j)];
                for p in 0..=i {
                    for q in 0..=j {
                        if p == 0 && q == 0 {
                            continue;
                        }
                        acc -= out[tri_idx(i - p, j - q)] * rhs.coeffs[tri_idx(p, q)];
                    }
                }
                out[tri_idx(i, j)] = acc / b0;
            }
        }
        Ok(Jet2 {
            order: k,
            coeffs: out,
        })
    }

    /// Integer power by repeated multiplication; negative exponents go
    /// through the quotient and require a nonzero constant term.
    pub fn powi(&self, n: i32) -> Result<Jet2, JetError> {
        if n < 0 {
            let pos = self.powi(-n)?;
            return Jet2::constant(1.0, self.order).checked_div(&pos);
        }
        let mut acc = Jet2::constant(1.0, self.order);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        Ok(acc)
    }

    /// Applies a univariate analytic function given its Taylor coefficients
    /// about this jet's constant term: with `w = self − value()`, returns
    /// `Σ series[k] · w^k` truncated. Horner evaluation over the jet ring.
    fn apply_univariate(&self, series: &[f64]) -> Jet2 {
        debug_assert_eq!(series.len(), self.order + 1);
        let mut w = self.clone();
        w.coeffs[0] = 0.0;
        let mut acc = Jet2::constant(series[self.order], self.order);
        for k in (0..self.order).rev() {
            acc = acc.mul(&w);
            acc.coeffs[0] += series[k];
        }
        acc
    }

    pub fn exp(&self) -> Result<Jet2, JetError> {
        let v = self.value();
        let mut series = vec![0.0; self.order + 1];
        series[0] = v.exp();
        for k in 1..=self.order {
            series[k] = series[k - 1] / k as f64;
        }
        Ok(self.apply_univariate(&series))
    }

    /// Natural logarithm; the constant term must be strictly positive.
    pub fn ln(&self) -> Result<Jet2, JetError> {
        let v = self.value();
        if v <= 0.0 {
            return Err(JetError::Domain {
                func: "log",
                value: v,
            });
        }
        let mut series = vec![0.0; self.order + 1];
        series[0] = v.ln();
        if self.order >= 1 {
            series[1] = 1.0 / v;
            for k in 2..=self.order {
                series[k] = -series[k - 1] * (k as f64 - 1.0) / (k as f64 * v);
            }
        }
        Ok(self.apply_univariate(&series))
    }

    /// Real power; the constant term must be strictly positive.
    pub fn powf(&self, r: f64) -> Result<Jet2, JetError> {
        let v = self.value();
        if v <= 0.0 {
            return Err(JetError::Domain {
                func: "pow",
                value: v,
            });
        }
        // Binomial series: c_k = C(r,k) v^{r-k}.
        let mut series = vec![0.0; self.order + 1];
        series[0] = v.powf(r);
        for k in 1..=self.order {
            series[k] = series[k - 1] * (r - (k as f64 - 1.0)) / (k as f64 * v);
        }
        Ok(self.apply_univariate(&series))
    }

    /// Square root; errors at a nonpositive constant term (0 is a branch
    /// point, not a smooth one).
    pub fn sqrt(&self) -> Result<Jet2, JetError> {
        let v = self.value();
        if v <= 0.0 {
            return Err(JetError::Domain {
                func: "sqrt",
                value: v,
            });
        }
        self.powf(0.5)
    }

    pub fn sin(&self) -> Result<Jet2, JetError> {
        Ok(self.apply_univariate(&trig_series(self.value(), self.order, 0)))
    }

    pub fn cos(&self) -> Result<Jet2, JetError> {
        Ok(self.apply_univariate(&trig_series(self.value(), self.order, 1)))
    }

    pub fn tanh(&self) -> Result<Jet2, JetError> {
        // d/dh tanh(v+h) = 1 - tanh² gives (k+1) t_{k+1} = [k=0] - Σ t_i t_{k-i}.
        let k = self.order;
        let mut t = vec![0.0; k + 1];
        t[0] = self.value().tanh();
        for n in 0..k {
            let mut conv = 0.0;
            for i in 0..=n {
                conv += t[i] * t[n - i];
            }
            let delta = if n == 0 { 1.0 } else { 0.0 };
            t[n + 1] = (delta - conv) / (n as f64 + 1.0);
        }
        Ok(self.apply_univariate(&t))
    }

    /// Absolute value. Smooth only away from zero; a constant term within
    /// 1e-12 of zero is rejected rather than silently producing a wrong
    /// derivative.
    pub fn abs(&self) -> Result<Jet2, JetError> {
        let v = self.value();
        if v.abs() < 1e-12 {
            return Err(JetError::AbsAtZero(v));
        }
        Ok(if v < 0.0 { self.neg() } else { self.clone() })
    }
}

/// Taylor coefficients of sin (phase 0) or cos (phase 1) about `v`.
fn trig_series(v: f64, order: usize, phase: usize) -> Vec<f64> {
    let derivs = [v.sin(), v.cos(), -v.sin(), -v.cos()];
    let mut series = vec![0.0; order + 1];
    let mut fact = 1.0;
    for (k, s) in series.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        *s = derivs[(k + phase) % 4] / fact;
    }
    series
}

/// Univariate jet: dense coefficient vector `c[i] = f^{(i)}/i!`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet1 {
    coeffs: Vec<f64>,
}

impl Jet1 {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = v;
        Jet1 { coeffs }
    }

    /// Jet of the variable itself at expansion point `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut j = Jet1::constant(x0, order);
        if order >= 1 {
            j.coeffs[1] = 1.0;
        }
        j
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least a constant term");
        Jet1 { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeff(&self, i: usize) -> f64 {
        assert!(i <= self.order(), "coefficient {i} out of range");
        self.coeffs[i]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Raw derivative `f^{(i)} = i!·coeff(i)`.
    pub fn partial(&self, i: usize) -> Result<f64, JetError> {
        if i > self.order() {
            return Err(JetError::PartialOutOfRange {
                i,
                j: 0,
                order: self.order(),
            });
        }
        Ok(factorial(i) * self.coeffs[i])
    }

    pub fn add(&self, rhs: &Jet1) -> Jet1 {
        assert_eq!(self.order(), rhs.order(), "jet order mismatch in add");
        Jet1 {
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet1 {
        Jet1 {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn mul(&self, rhs: &Jet1) -> Jet1 {
        assert_eq!(self.order(), rhs.order(), "jet order mismatch in mul");
        let k = self.order();
        let mut out = vec![0.0; k + 1];
        for i in 0..=k {
            if self.coeffs[i] == 0.0 {
                continue;
            }
            for j in 0..=(k - i) {
                out[i + j] += self.coeffs[i] * rhs.coeffs[j];
            }
        }
        Jet1 { coeffs: out }
    }
}

/// Composition `outer ∘ inner` of truncated series about the origin.
///
/// The inner series must have zero constant term so that truncation orders
/// line up; both series must share one order.
pub fn jet_compose(outer: &Jet1, inner: &Jet1) -> Result<Jet1, JetError> {
    if outer.order() != inner.order() {
        return Err(JetError::OrderMismatch(outer.order(), inner.order()));
    }
    if inner.value() != 0.0 {
        return Err(JetError::InnerConstantTerm(inner.value()));
    }
    let k = outer.order();
    let mut acc = Jet1::constant(outer.coeffs[k], k);
    for i in (0..k).rev() {
        acc = acc.mul(inner);
        acc.coeffs[0] += outer.coeffs[i];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol * f64::max(1.0, b.abs()),
            "{a} != {b} (tol {tol})"
        );
    }

    #[test]
    fn square_of_state_variable() {
        // x at x0=3, K=2, squared: value 9, ∂x 6, ∂xx 2.
        let x = Jet2::state_var(3.0, 2);
        let sq = x.mul(&x);
        assert_eq!(sq.partial(0, 0).unwrap(), 9.0);
        assert_eq!(sq.partial(1, 0).unwrap(), 6.0);
        assert_eq!(sq.partial(2, 0).unwrap(), 2.0);
    }

    #[test]
    fn additive_identity() {
        let x = Jet2::state_var(1.5, 3);
        let a = x.powi(3).unwrap();
        let sum = a.add(&Jet2::constant(0.0, 3));
        assert_eq!(sum, a);
    }

    #[test]
    fn constant_jet_partials() {
        let c = Jet2::constant(7.0, 4);
        assert_eq!(c.partial(0, 0).unwrap(), 7.0);
        assert_eq!(c.partial(1, 0).unwrap(), 0.0);
        assert_eq!(c.partial(0, 2).unwrap(), 0.0);
    }

    #[test]
    fn x_squared_second_partial() {
        let x = Jet2::state_var(0.0, 4);
        let sq = x.mul(&x);
        assert_eq!(sq.partial(2, 0).unwrap(), 2.0);
    }

    #[test]
    fn mixed_partial_of_mu_times_x() {
        let x = Jet2::state_var(1.0, 3);
        let mu = Jet2::param_var(2.0, 3);
        let prod = mu.mul(&x);
        assert_eq!(prod.partial(1, 1).unwrap(), 1.0);
        assert_eq!(prod.partial(0, 0).unwrap(), 2.0);
    }

    #[test]
    fn partial_out_of_range() {
        let x = Jet2::state_var(0.0, 2);
        assert!(matches!(
            x.partial(2, 1),
            Err(JetError::PartialOutOfRange { .. })
        ));
    }

    #[test]
    fn division_by_singular_jet() {
        let x = Jet2::state_var(0.0, 3);
        let one = Jet2::constant(1.0, 3);
        assert_eq!(one.checked_div(&x), Err(JetError::SingularDivision));
    }

    #[test]
    fn division_roundtrip() {
        let x = Jet2::state_var(0.7, 4);
        let mu = Jet2::param_var(-0.3, 4);
        let a = x.mul(&mu).add(&Jet2::constant(2.0, 4));
        let b = x.add(&Jet2::constant(1.5, 4));
        let q = a.checked_div(&b).unwrap();
        let back = q.mul(&b);
        for i in 0..=4usize {
            for j in 0..=(4 - i) {
                assert_close(back.coeff(i, j), a.coeff(i, j), 1e-14);
            }
        }
    }

    #[test]
    fn x_exp_x_third_derivative_vs_finite_differences() {
        // (x·exp(x)) at x0=0.5: third derivative from the jet against a
        // 5-point central stencil.
        let x0 = 0.5;
        let x = Jet2::state_var(x0, 3);
        let f = x.mul(&x.exp().unwrap());
        let jet_d3 = f.partial(3, 0).unwrap();

        let g = |x: f64| x * x.exp();
        let h = 1e-2;
        let fd = (g(x0 + 2.0 * h) - 2.0 * g(x0 + h) + 2.0 * g(x0 - h) - g(x0 - 2.0 * h))
            / (2.0 * h * h * h);
        assert_close(jet_d3, fd, 1e-6);
    }

    #[test]
    fn compose_identity() {
        let inner = Jet1::from_coeffs(vec![0.0, 1.0, 0.5, -0.25, 0.0]);
        let id = Jet1::variable(0.0, 4);
        assert_eq!(jet_compose(&id, &inner).unwrap(), inner);
    }

    #[test]
    fn compose_square_of_y_plus_y_squared() {
        // outer y², inner y + y²: (y+y²)² = y² + 2y³ + y⁴.
        let outer = Jet1::from_coeffs(vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let inner = Jet1::from_coeffs(vec![0.0, 1.0, 1.0, 0.0, 0.0]);
        let got = jet_compose(&outer, &inner).unwrap();
        assert_eq!(got.coeffs(), &[0.0, 0.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn compose_rejects_nonzero_inner_constant() {
        let outer = Jet1::variable(0.0, 3);
        let inner = Jet1::from_coeffs(vec![0.1, 1.0, 0.0, 0.0]);
        assert!(matches!(
            jet_compose(&outer, &inner),
            Err(JetError::InnerConstantTerm(_))
        ));
    }

    #[test]
    fn compose_random_pairs_vs_symbolic_expansion() {
        // Brute-force oracle: expand outer(inner(y)) by naive polynomial
        // powers without truncating intermediates below full degree.
        fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, &ai) in a.iter().enumerate() {
                for (j, &bj) in b.iter().enumerate() {
                    out[i + j] += ai * bj;
                }
            }
            out
        }
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for _ in 0..20 {
            let order = 6;
            let outer: Vec<f64> = (0..=order).map(|_| next()).collect();
            let mut inner: Vec<f64> = (0..=order).map(|_| next()).collect();
            inner[0] = 0.0;

            let got = jet_compose(
                &Jet1::from_coeffs(outer.clone()),
                &Jet1::from_coeffs(inner.clone()),
            )
            .unwrap();

            let mut expect = vec![0.0; 1];
            expect[0] = outer[0];
            let mut power = vec![1.0];
            for &ck in outer.iter().skip(1) {
                power = poly_mul(&power, &inner);
                for (d, &p) in power.iter().enumerate() {
                    if d >= expect.len() {
                        expect.resize(d + 1, 0.0);
                    }
                    expect[d] += ck * p;
                }
            }
            for d in 0..=order {
                let e = if d < expect.len() { expect[d] } else { 0.0 };
                assert_close(got.coeff(d), e, 1e-12);
            }
        }
    }

    #[test]
    fn log_of_nonpositive_constant_is_an_error() {
        let x = Jet2::state_var(-1.0, 3);
        assert!(matches!(x.ln(), Err(JetError::Domain { func: "log", .. })));
        let z = Jet2::state_var(0.0, 3);
        assert!(matches!(z.sqrt(), Err(JetError::Domain { .. })));
    }

    #[test]
    fn abs_near_zero_is_rejected() {
        let x = Jet2::state_var(1e-13, 3);
        assert!(matches!(x.abs(), Err(JetError::AbsAtZero(_))));
        let y = Jet2::state_var(-2.0, 3);
        let a = y.abs().unwrap();
        assert_eq!(a.value(), 2.0);
        assert_eq!(a.partial(1, 0).unwrap(), -1.0);
    }

    #[test]
    fn leibniz_rule_for_products() {
        // ∂^{i+j}(ab) = Σ C(i,p) C(j,q) ∂^{p+q}a · ∂^{(i-p)+(j-q)}b.
        fn binom(n: usize, k: usize) -> f64 {
            (0..k).fold(1.0, |acc, l| acc * (n - l) as f64 / (l + 1) as f64)
        }
        let x = Jet2::state_var(0.4, 4);
        let mu = Jet2::param_var(1.3, 4);
        let a = x.mul(&x).add(&mu.scale(2.0));
        let b = x.mul(&mu).add(&Jet2::constant(0.5, 4)).mul(&x);
        let prod = a.mul(&b);
        for i in 0..=4usize {
            for j in 0..=(4 - i) {
                let mut expect = 0.0;
                for p in 0..=i {
                    for q in 0..=j {
                        expect += binom(i, p)
                            * binom(j, q)
                            * a.partial(p, q).unwrap()
                            * b.partial(i - p, j - q).unwrap();
                    }
                }
                assert_close(prod.partial(i, j).unwrap(), expect, 1e-13);
            }
        }
    }

    #[test]
    fn tanh_series_matches_closed_forms() {
        let x = Jet2::state_var(0.3, 3);
        let t = x.tanh().unwrap();
        let v: f64 = 0.3f64.tanh();
        assert_close(t.value(), v, 1e-15);
        assert_close(t.partial(1, 0).unwrap(), 1.0 - v * v, 1e-14);
        assert_close(t.partial(2, 0).unwrap(), -2.0 * v * (1.0 - v * v), 1e-13);
    }

    #[test]
    fn powi_negative_exponent() {
        let x = Jet2::state_var(2.0, 3);
        let inv2 = x.powi(-2).unwrap();
        assert_close(inv2.value(), 0.25, 1e-15);
        assert_close(inv2.partial(1, 0).unwrap(), -2.0 / 8.0, 1e-14);
        let z = Jet2::state_var(0.0, 3);
        assert_eq!(z.powi(-1), Err(JetError::SingularDivision));
    }
}
