//! Chebyshev polynomial arithmetic and the boundary-adapted Galerkin basis.
//!
//! Everything lives on the reference interval [-1, 1] with the Chebyshev
//! weight w(x) = (1 - x^2)^(-1/2). The basis functions `phi_k` are the
//! three-term combinations of Chebyshev polynomials that vanish together
//! with their first derivative at both endpoints, so they satisfy the
//! clamped-clamped boundary conditions exactly.

use crate::error::{KvError, Result};

/// Dense Chebyshev series: `coeffs[k]` multiplies `T_k(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebSeries {
    pub coeffs: Vec<f64>,
}

impl ChebSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a Chebyshev series needs at least one coefficient");
        ChebSeries { coeffs }
    }

    /// Index of the last stored coefficient.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `T_k`, zero beyond the stored range.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Evaluate the series at `x` via the Clenshaw recurrence.
    ///
    /// Rejects points outside [-1, 1].
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(KvError::invalid(format!(
                "Chebyshev evaluation point {x} outside [-1, 1]"
            )));
        }
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        Ok(self.coeffs[0] + x * b1 - b2)
    }

    /// Exact Chebyshev coefficients of the derivative.
    ///
    /// Uses the recurrence d_{k-1} = d_{k+1} + 2k c_k, with the final
    /// halving of the T_0 coefficient.
    pub fn differentiate(&self) -> ChebSeries {
        let n = self.degree();
        if n == 0 {
            return ChebSeries::new(vec![0.0]);
        }
        let mut d = vec![0.0; n];
        // two seed values beyond the derivative's degree are implicitly zero
        for k in (1..=n).rev() {
            let upper = if k + 1 < n { d[k + 1] } else { 0.0 };
            d[k - 1] = upper + 2.0 * (k as f64) * self.coeffs[k];
        }
        d[0] *= 0.5;
        ChebSeries::new(d)
    }

    /// n-fold derivative.
    pub fn differentiate_n(&self, times: usize) -> ChebSeries {
        let mut s = self.clone();
        for _ in 0..times {
            s = s.differentiate();
        }
        s
    }
}

/// Boundary-adapted basis function of index `k`:
/// `phi_k = T_k - 2(k+2)/(k+3) T_{k+2} + (k+1)/(k+3) T_{k+4}`.
///
/// `phi_k` and its first derivative vanish at both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisFunction {
    pub k: usize,
}

impl BasisFunction {
    pub fn series(&self) -> ChebSeries {
        phi_series(self.k)
    }
}

/// Chebyshev series of the boundary-adapted basis function `phi_k`.
pub fn phi_series(k: usize) -> ChebSeries {
    let kf = k as f64;
    let mut coeffs = vec![0.0; k + 5];
    coeffs[k] = 1.0;
    coeffs[k + 2] = -2.0 * (kf + 2.0) / (kf + 3.0);
    coeffs[k + 4] = (kf + 1.0) / (kf + 3.0);
    ChebSeries::new(coeffs)
}

/// Degree-`n` Chebyshev interpolant of `f` through the n+1 Chebyshev-Gauss
/// points (roots of `T_{n+1}`). Exact (to roundoff) for polynomials of
/// degree at most `n`.
pub fn cheb_interpolate(f: impl Fn(f64) -> f64, n: usize) -> ChebSeries {
    let m = n + 1;
    let mf = m as f64;
    let mut thetas = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    for j in 0..m {
        let theta = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / (2.0 * mf);
        thetas.push(theta);
        values.push(f(theta.cos()));
    }
    let mut coeffs = vec![0.0; m];
    for (k, c) in coeffs.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..m {
            acc += values[j] * (k as f64 * thetas[j]).cos();
        }
        let scale = if k == 0 { 1.0 / mf } else { 2.0 / mf };
        *c = acc * scale;
    }
    ChebSeries::new(coeffs)
}

/// Weighted inner product <f, g>_w from Chebyshev orthogonality:
/// `pi * c0(f) c0(g) + (pi/2) * sum_{k>=1} ck(f) ck(g)`.
pub fn weighted_inner_product(f: &ChebSeries, g: &ChebSeries) -> f64 {
    let mut acc = std::f64::consts::PI * f.coeff(0) * g.coeff(0);
    let upto = f.coeffs.len().min(g.coeffs.len());
    for k in 1..upto {
        acc += 0.5 * std::f64::consts::PI * f.coeffs[k] * g.coeffs[k];
    }
    acc
}

/// Squared weighted norm of `T_k`: pi for k = 0, pi/2 otherwise.
pub fn cheb_norm_sq(k: usize) -> f64 {
    if k == 0 {
        std::f64::consts::PI
    } else {
        0.5 * std::f64::consts::PI
    }
}

/// Chebyshev-Gauss quadrature: integrates `f(x) w(x)` over [-1, 1] exactly
/// for polynomial `f` of degree <= 2 * node_count - 1.
#[derive(Debug, Clone)]
pub struct ChebGaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ChebGaussRule {
    pub fn new(node_count: usize) -> Self {
        assert!(node_count > 0);
        let m = node_count as f64;
        let w = std::f64::consts::PI / m;
        let mut nodes = Vec::with_capacity(node_count);
        let mut weights = Vec::with_capacity(node_count);
        for j in 0..node_count {
            let theta = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / (2.0 * m);
            nodes.push(theta.cos());
            weights.push(w);
        }
        ChebGaussRule { nodes, weights }
    }

    /// Rule with exactness headroom for integrands up to `max_degree`:
    /// 2 * max_degree + 16 nodes.
    pub fn for_degree(max_degree: usize) -> Self {
        ChebGaussRule::new(2 * max_degree + 16)
    }

    /// Integral of `f(x) w(x)` over [-1, 1].
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Evaluate `T_0 .. T_max` at `x` by the three-term recurrence.
pub fn cheb_t_values(max: usize, x: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(max + 1);
    t.push(1.0);
    if max >= 1 {
        t.push(x);
    }
    for k in 2..=max {
        t.push(2.0 * x * t[k - 1] - t[k - 2]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t_k(k: usize) -> ChebSeries {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        ChebSeries::new(c)
    }

    #[test]
    fn eval_t2_at_zero() {
        assert_relative_eq!(t_k(2).eval(0.0).unwrap(), -1.0, max_relative = 1e-15);
    }

    #[test]
    fn eval_endpoint_identity() {
        for k in 0..30 {
            assert_relative_eq!(t_k(k).eval(1.0).unwrap(), 1.0, max_relative = 1e-12);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert_relative_eq!(t_k(k).eval(-1.0).unwrap(), sign, max_relative = 1e-12);
        }
    }

    #[test]
    fn eval_series_endpoint_sums() {
        // sum of coefficients at x = 1, alternating sum at x = -1
        let s = ChebSeries::new(vec![0.3, -1.2, 0.5, 2.0, -0.7]);
        let sum: f64 = s.coeffs.iter().sum();
        let alt: f64 = s
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| if k % 2 == 0 { *c } else { -*c })
            .sum();
        assert_relative_eq!(s.eval(1.0).unwrap(), sum, max_relative = 1e-14);
        assert_relative_eq!(s.eval(-1.0).unwrap(), alt, max_relative = 1e-14);
    }

    #[test]
    fn eval_rejects_outside_interval() {
        assert!(t_k(3).eval(1.0 + 1e-9).is_err());
        assert!(t_k(3).eval(-1.5).is_err());
    }

    #[test]
    fn phi0_at_zero() {
        // phi_0 = T_0 - (4/3) T_2 + (1/3) T_4, termwise at 0: 1 + 4/3 + 1/3
        let phi0 = phi_series(0);
        assert_relative_eq!(phi0.eval(0.0).unwrap(), 8.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn phi_series_low_orders() {
        let p0 = phi_series(0);
        assert_relative_eq!(p0.coeff(0), 1.0);
        assert_relative_eq!(p0.coeff(2), -4.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(p0.coeff(4), 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(p0.coeff(1), 0.0);
        assert_eq!(p0.coeff(3), 0.0);

        let p1 = phi_series(1);
        assert_relative_eq!(p1.coeff(1), 1.0);
        assert_relative_eq!(p1.coeff(3), -1.5, max_relative = 1e-15);
        assert_relative_eq!(p1.coeff(5), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn phi_boundary_conditions() {
        for k in 0..=40 {
            let phi = phi_series(k);
            let dphi = phi.differentiate();
            for x in [-1.0, 1.0] {
                assert!(phi.eval(x).unwrap().abs() <= 1e-12, "phi_{k}({x})");
                assert!(dphi.eval(x).unwrap().abs() <= 1e-10, "phi_{k}'({x})");
            }
        }
    }

    #[test]
    fn differentiate_t1_t2() {
        let d1 = t_k(1).differentiate();
        assert_eq!(d1.coeffs, vec![1.0]);
        let d2 = t_k(2).differentiate();
        assert_eq!(d2.coeffs, vec![0.0, 4.0]);
    }

    #[test]
    fn fourth_derivative_matches_finite_differences() {
        // central 5-point stencil for the 4th derivative of phi_0 via eval
        let phi0 = phi_series(0);
        let d4 = phi0.differentiate_n(4);
        let h = 1e-2;
        for i in 0..20 {
            let x = -0.85 + 1.7 * (i as f64) / 19.0;
            let f = |y: f64| phi0.eval(y).unwrap();
            let fd = (f(x + 2.0 * h) - 4.0 * f(x + h) + 6.0 * f(x) - 4.0 * f(x - h)
                + f(x - 2.0 * h))
                / h.powi(4);
            let exact = d4.eval(x).unwrap();
            let denom = exact.abs().max(1.0);
            assert!(
                ((fd - exact) / denom).abs() <= 1e-6,
                "x={x}: fd={fd}, exact={exact}"
            );
        }
    }

    #[test]
    fn interpolate_constant() {
        let s = cheb_interpolate(|_| 1.0, 4);
        assert_relative_eq!(s.coeff(0), 1.0, max_relative = 1e-14);
        for k in 1..=4 {
            assert!(s.coeff(k).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolate_x_squared() {
        // x^2 = (T_0 + T_2) / 2
        let s = cheb_interpolate(|x| x * x, 2);
        assert_relative_eq!(s.coeff(0), 0.5, max_relative = 1e-14);
        assert!(s.coeff(1).abs() < 1e-14);
        assert_relative_eq!(s.coeff(2), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn interpolate_paper_b1_profile() {
        // degree-8 control profile: interpolation reproduces it pointwise
        let b1 = |x: f64| (x + 1.0).powi(2) * (1.0 - x).powi(6) / 3.0;
        let s = cheb_interpolate(b1, 10);
        for i in 0..=100 {
            let x = -1.0 + 2.0 * (i as f64) / 100.0;
            assert!((s.eval(x).unwrap() - b1(x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn interpolate_eval_identity_on_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let deg = rng.gen_range(0..=12);
            let coeffs: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = ChebSeries::new(coeffs.clone());
            let q = cheb_interpolate(|x| p.eval(x).unwrap(), deg);
            for k in 0..=deg {
                assert!(
                    (p.coeff(k) - q.coeff(k)).abs() <= 1e-12,
                    "deg {deg} coeff {k}"
                );
            }
        }
    }

    #[test]
    fn inner_product_t0_t0() {
        let v = weighted_inner_product(&t_k(0), &t_k(0));
        assert_relative_eq!(v, std::f64::consts::PI, max_relative = 1e-15);
    }

    #[test]
    fn inner_product_orthogonality() {
        assert_eq!(weighted_inner_product(&t_k(1), &t_k(2)), 0.0);
    }

    #[test]
    fn inner_product_phi0_phi0() {
        let v = weighted_inner_product(&phi_series(0), &phi_series(0));
        assert_relative_eq!(v, 35.0 * std::f64::consts::PI / 18.0, max_relative = 1e-14);
    }

    #[test]
    fn quadrature_matches_orthogonality_sums() {
        // random polynomial pairs of degree <= 40
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rule = ChebGaussRule::for_degree(40);
        for _ in 0..30 {
            let df = rng.gen_range(0..=40usize);
            let dg = rng.gen_range(0..=40usize);
            let f = ChebSeries::new((0..=df).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let g = ChebSeries::new((0..=dg).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let exact = weighted_inner_product(&f, &g);
            let quad = rule.integrate(|x| f.eval(x).unwrap() * g.eval(x).unwrap());
            let denom = exact.abs().max(1.0);
            assert!(
                ((exact - quad) / denom).abs() <= 1e-10,
                "df={df} dg={dg}: {exact} vs {quad}"
            );
        }
    }

    #[test]
    fn quadrature_polynomial_exactness() {
        // degree 2m-1 against the weight, checked on pure Chebyshev modes
        let rule = ChebGaussRule::new(12);
        for k in 0..=23 {
            let expected = if k == 0 { std::f64::consts::PI } else { 0.0 };
            let got = rule.integrate(|x| t_k(k).eval(x).unwrap());
            assert!((got - expected).abs() <= 1e-12, "T_{k}: {got}");
        }
    }

    #[test]
    fn t_values_match_series_eval() {
        let vals = cheb_t_values(20, 0.37);
        for (k, v) in vals.iter().enumerate() {
            assert_relative_eq!(*v, t_k(k).eval(0.37).unwrap(), max_relative = 1e-13);
        }
    }
}
