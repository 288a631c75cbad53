//! Spectral-Galerkin discretization of the damped beam.
//!
//! Assembles the second-order system `M a'' + E I F a + (d_kv I F + d_v M) a' = B0 u`
//! over the boundary-adapted Chebyshev basis and its first-order state-space
//! form, together with the Gram matrices of the energy norms and the
//! sesquilinear form used by the coercivity/boundedness checks.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{KvError, Result};
use crate::spectral::{
    cheb_interpolate, cheb_norm_sq, cheb_t_values, phi_series, weighted_inner_product,
    ChebGaussRule, ChebSeries,
};

/// Spatial profile of a control or disturbance input.
#[derive(Clone)]
pub enum Profile {
    /// Polynomial in the monomial basis: `coeffs[i] * x^i`.
    Poly(Vec<f64>),
    /// Arbitrary (smooth) function of the spatial coordinate.
    Func(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Poly(c) => write!(f, "Profile::Poly({c:?})"),
            Profile::Func(_) => write!(f, "Profile::Func(..)"),
        }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `(1 + x)^p (1 - x)^q / 3` expanded in the monomial basis.
fn clamped_bump(p: usize, q: usize) -> Vec<f64> {
    let mut acc = vec![1.0 / 3.0];
    for _ in 0..p {
        acc = poly_mul(&acc, &[1.0, 1.0]);
    }
    for _ in 0..q {
        acc = poly_mul(&acc, &[1.0, -1.0]);
    }
    acc
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Poly(c) => {
                // Horner
                c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
            }
            Profile::Func(f) => f(x),
        }
    }

    /// First control profile of the reference experiment:
    /// `(1+x)^2 (1-x)^6 / 3`.
    pub fn paper_b1() -> Self {
        Profile::Poly(clamped_bump(2, 6))
    }

    /// Second control profile: `(1+x)^6 (1-x)^2 / 3`.
    pub fn paper_b2() -> Self {
        Profile::Poly(clamped_bump(6, 2))
    }

    /// Disturbance profile: `(1+x)^2 (1-x)^2 / 3`.
    pub fn paper_bd() -> Self {
        Profile::Poly(clamped_bump(2, 2))
    }

    fn known_degree(&self) -> Option<usize> {
        match self {
            Profile::Poly(c) => Some(c.len().saturating_sub(1)),
            Profile::Func(_) => None,
        }
    }

    /// Chebyshev coefficients through degree `deg` (exact for polynomials
    /// of degree at most `deg`).
    pub fn cheb_coeffs(&self, deg: usize) -> ChebSeries {
        let target = match self.known_degree() {
            Some(d) => deg.max(d),
            None => deg + 64,
        };
        let mut s = cheb_interpolate(|x| self.eval(x), target);
        s.coeffs.truncate(deg + 1);
        if s.coeffs.is_empty() {
            s.coeffs.push(0.0);
        }
        s
    }

    /// Max of |b(+-1)| and |b'(+-1)|, measured on a Chebyshev interpolant.
    pub fn boundary_defect(&self) -> f64 {
        let interp_deg = self.known_degree().unwrap_or(0).max(48);
        let s = cheb_interpolate(|x| self.eval(x), interp_deg);
        let ds = s.differentiate();
        let mut worst: f64 = 0.0;
        for x in [-1.0, 1.0] {
            worst = worst.max(s.eval(x).unwrap().abs());
            worst = worst.max(ds.eval(x).unwrap().abs());
        }
        worst
    }
}

const BOUNDARY_TOL: f64 = 1e-8;

/// Physical constants and input/output geometry of the beam model.
#[derive(Debug, Clone)]
pub struct BeamParameters {
    pub e_modulus: f64,
    pub i_mom: f64,
    pub d_kv: f64,
    pub d_v: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub b1: Profile,
    pub b2: Profile,
    pub b_dist: Vec<Profile>,
}

impl BeamParameters {
    pub fn new(
        e_modulus: f64,
        i_mom: f64,
        d_kv: f64,
        d_v: f64,
        xi1: f64,
        xi2: f64,
        b1: Profile,
        b2: Profile,
        b_dist: Vec<Profile>,
    ) -> Result<Self> {
        if !(e_modulus > 0.0) || !(i_mom > 0.0) {
            return Err(KvError::invalid(format!(
                "E and I must be strictly positive (got E={e_modulus}, I={i_mom})"
            )));
        }
        if !(d_kv >= 0.0) || !(d_v >= 0.0) {
            return Err(KvError::invalid(format!(
                "damping coefficients must be nonnegative (got d_kv={d_kv}, d_v={d_v})"
            )));
        }
        for (name, xi) in [("xi1", xi1), ("xi2", xi2)] {
            if !(-1.0 < xi && xi < 1.0) {
                return Err(KvError::invalid(format!(
                    "measurement point {name}={xi} outside (-1, 1)"
                )));
            }
        }
        let params = BeamParameters {
            e_modulus,
            i_mom,
            d_kv,
            d_v,
            xi1,
            xi2,
            b1,
            b2,
            b_dist,
        };
        for (name, p) in params.profiles() {
            let defect = p.boundary_defect();
            if defect > BOUNDARY_TOL {
                return Err(KvError::invalid(format!(
                    "profile {name} violates clamped boundary conditions (defect {defect:.3e})"
                )));
            }
        }
        Ok(params)
    }

    /// Parameters of the reference experiment: E=10, I=1, d_kv=0.01,
    /// d_v=0.4, measurements at -0.6 and 0.3, bump-shaped profiles.
    pub fn paper() -> Self {
        BeamParameters::new(
            10.0,
            1.0,
            0.01,
            0.4,
            -0.6,
            0.3,
            Profile::paper_b1(),
            Profile::paper_b2(),
            vec![Profile::paper_bd()],
        )
        .expect("reference parameters are valid")
    }

    fn profiles(&self) -> Vec<(String, &Profile)> {
        let mut v = vec![("b1".to_string(), &self.b1), ("b2".to_string(), &self.b2)];
        for (i, p) in self.b_dist.iter().enumerate() {
            v.push((format!("b_dist[{i}]"), p));
        }
        v
    }
}

/// Mass matrix of the boundary-adapted basis (closed form).
///
/// Banded: entries vanish unless |l - k| is 0, 2 or 4.
pub fn assemble_m(n: usize) -> DMatrix<f64> {
    assert!(n >= 1);
    let pi = std::f64::consts::PI;
    let mut m = DMatrix::zeros(n, n);
    for l in 0..n {
        let lf = l as f64;
        m[(l, l)] = if l == 0 {
            35.0 * pi / 18.0
        } else {
            pi * ((lf + 1.0).powi(2) + 4.0 * (lf + 2.0).powi(2) + (lf + 3.0).powi(2))
                / (2.0 * (lf + 3.0).powi(2))
        };
        if l + 2 < n {
            let v = -pi * ((lf + 2.0) * (lf + 5.0) + (lf + 1.0) * (lf + 4.0))
                / ((lf + 3.0) * (lf + 5.0));
            m[(l, l + 2)] = v;
            m[(l + 2, l)] = v;
        }
        if l + 4 < n {
            let v = pi * (lf + 1.0) / (2.0 * (lf + 3.0));
            m[(l, l + 4)] = v;
            m[(l + 4, l)] = v;
        }
    }
    m
}

/// Stiffness matrix of the boundary-adapted basis (closed form).
///
/// Row l holds nonzeros only on the diagonal and at columns l+2, l+4, ...
pub fn assemble_f(n: usize) -> DMatrix<f64> {
    assert!(n >= 1);
    let pi = std::f64::consts::PI;
    let mut f = DMatrix::zeros(n, n);
    for l in 0..n {
        let lf = l as f64;
        f[(l, l)] = 8.0 * (lf + 1.0).powi(2) * (lf + 2.0) * (lf + 4.0) * pi;
        let mut k = l + 2;
        while k < n {
            let kf = k as f64;
            f[(l, k)] = 8.0 * pi * (lf + 1.0) * (lf + 2.0)
                * (lf * (lf + 4.0) + 3.0 * (kf + 2.0).powi(2))
                / (kf + 3.0);
            k += 2;
        }
    }
    f
}

/// Mass-matrix oracle: termwise Chebyshev orthogonality sums over the
/// basis series, independent of the closed forms above.
pub fn oracle_m(n: usize) -> DMatrix<f64> {
    let series: Vec<ChebSeries> = (0..n).map(phi_series).collect();
    let mut m = DMatrix::zeros(n, n);
    for l in 0..n {
        for k in 0..n {
            m[(l, k)] = weighted_inner_product(&series[k], &series[l]);
        }
    }
    m
}

/// Stiffness-matrix oracle: `F_lk = integral of phi_k'''' phi_l w` by
/// Chebyshev-Gauss quadrature. Two integrations by parts of the weak-form
/// pairing are boundary-free because phi and phi' vanish at the endpoints.
pub fn oracle_f(n: usize) -> DMatrix<f64> {
    let rule = ChebGaussRule::for_degree(2 * n + 2);
    let series: Vec<ChebSeries> = (0..n).map(phi_series).collect();
    let vals: Vec<Vec<f64>> = series
        .iter()
        .map(|s| rule.nodes.iter().map(|&x| s.eval(x).unwrap()).collect())
        .collect();
    let d4vals: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            let d4 = s.differentiate_n(4);
            rule.nodes.iter().map(|&x| d4.eval(x).unwrap()).collect()
        })
        .collect();
    let mut f = DMatrix::zeros(n, n);
    for l in 0..n {
        for k in 0..n {
            let mut acc = 0.0;
            for (j, &w) in rule.weights.iter().enumerate() {
                acc += w * d4vals[k][j] * vals[l][j];
            }
            f[(l, k)] = acc;
        }
    }
    f
}

/// Load vector `<b, phi_l>_w` for l = 0..n, from the profile's Chebyshev
/// coefficients and the three-term structure of the basis.
pub fn assemble_input_vector(profile: &Profile, n: usize) -> DVector<f64> {
    let defect = profile.boundary_defect();
    if defect > BOUNDARY_TOL {
        log::warn!(
            "input profile violates clamped boundary conditions (defect {defect:.3e}); \
             load vector may not represent the intended input"
        );
    }
    let q = profile.cheb_coeffs(n + 3);
    let mut v = DVector::zeros(n);
    for l in 0..n {
        let lf = l as f64;
        v[l] = cheb_norm_sq(l) * q.coeff(l)
            - 2.0 * (lf + 2.0) / (lf + 3.0) * cheb_norm_sq(l + 2) * q.coeff(l + 2)
            + (lf + 1.0) / (lf + 3.0) * cheb_norm_sq(l + 4) * q.coeff(l + 4);
    }
    v
}

/// Output matrix: column k is `(phi_k(xi1), phi_k(xi2))`, expanded through
/// the three Chebyshev terms of each basis function.
pub fn assemble_output_matrix(xi1: f64, xi2: f64, n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(2, n);
    for (row, xi) in [(0, xi1), (1, xi2)] {
        let t = cheb_t_values(n + 3, xi);
        for k in 0..n {
            let kf = k as f64;
            c[(row, k)] = t[k] - 2.0 * (kf + 2.0) / (kf + 3.0) * t[k + 2]
                + (kf + 1.0) / (kf + 3.0) * t[k + 4];
        }
    }
    c
}

/// Assembled Galerkin system: second-order matrices and the first-order
/// state-space realization over the stacked state (a, a').
#[derive(Debug, Clone)]
pub struct GalerkinModel {
    /// Basis size (dimension of the displacement coordinate vector).
    pub n: usize,
    pub params: BeamParameters,
    pub mass: DMatrix<f64>,
    pub stiff: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub bd0: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    /// First-order blocks: a is 2n x 2n, b is 2n x 2, bd is 2n x n_d,
    /// c is 2 x 2n.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub bd: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl GalerkinModel {
    /// Assemble the full model for basis size `n` (requires n >= 5).
    pub fn assemble(params: &BeamParameters, n: usize) -> Result<Self> {
        if n < 5 {
            return Err(KvError::invalid(format!(
                "basis size {n} too small for the first-order assembly (need n >= 5)"
            )));
        }
        let mass = assemble_m(n);
        let stiff = assemble_f(n);
        let b0 = {
            let mut b0 = DMatrix::zeros(n, 2);
            b0.set_column(0, &assemble_input_vector(&params.b1, n));
            b0.set_column(1, &assemble_input_vector(&params.b2, n));
            b0
        };
        let n_d = params.b_dist.len();
        let bd0 = {
            let mut bd0 = DMatrix::zeros(n, n_d);
            for (j, p) in params.b_dist.iter().enumerate() {
                bd0.set_column(j, &assemble_input_vector(p, n));
            }
            bd0
        };
        let c0 = assemble_output_matrix(params.xi1, params.xi2, n);

        let chol = mass.clone().cholesky().ok_or_else(|| {
            KvError::numerical(format!(
                "mass matrix not positive definite at n={n}; assembly breaks down"
            ))
        })?;
        let minv_f = chol.solve(&stiff);
        let minv_b0 = chol.solve(&b0);
        let minv_bd0 = chol.solve(&bd0);

        let ei = params.e_modulus * params.i_mom;
        let dv = params.d_v;
        let dkv_i = params.d_kv * params.i_mom;

        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        a.view_mut((n, 0), (n, n)).copy_from(&(-ei * &minv_f));
        let mut lower_right = -dkv_i * &minv_f;
        for i in 0..n {
            lower_right[(i, i)] -= dv;
        }
        a.view_mut((n, n), (n, n)).copy_from(&lower_right);

        let mut b = DMatrix::zeros(2 * n, 2);
        b.view_mut((n, 0), (n, 2)).copy_from(&minv_b0);
        let mut bd = DMatrix::zeros(2 * n, n_d);
        bd.view_mut((n, 0), (n, n_d)).copy_from(&minv_bd0);
        let mut c = DMatrix::zeros(2, 2 * n);
        c.view_mut((0, 0), (2, n)).copy_from(&c0);

        Ok(GalerkinModel {
            n,
            params: params.clone(),
            mass,
            stiff,
            b0,
            bd0,
            c0,
            a,
            b,
            bd,
            c,
        })
    }

    /// State dimension of the first-order system (2n).
    pub fn state_dim(&self) -> usize {
        2 * self.n
    }

    pub fn grams(&self) -> Result<NormGrams> {
        norm_grams(&self.params, self.n)
    }
}

/// Gram matrices of the V0, X and V inner products on the Galerkin space.
#[derive(Debug, Clone)]
pub struct NormGrams {
    /// n x n Gram of the V0 inner product (symmetrized stiffness scaled
    /// by E I).
    pub g_v0: DMatrix<f64>,
    /// 2n x 2n Gram of the X norm: blockdiag(G_V0, M).
    pub g_x: DMatrix<f64>,
    /// 2n x 2n Gram of the V norm: blockdiag(G_V0, G_V0).
    pub g_v: DMatrix<f64>,
}

impl NormGrams {
    pub fn v0_norm_sq(&self, f: &DVector<f64>) -> f64 {
        (f.transpose() * &self.g_v0 * f)[(0, 0)]
    }

    pub fn x_norm_sq(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> f64 {
        let n = self.g_v0.nrows();
        let m = self.g_x.view((n, n), (n, n));
        self.v0_norm_sq(phi1) + (phi2.transpose() * m * phi2)[(0, 0)]
    }

    pub fn v_norm_sq(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> f64 {
        self.v0_norm_sq(phi1) + self.v0_norm_sq(phi2)
    }
}

/// Build the Gram matrices; errors when the symmetrized stiffness loses
/// positive definiteness (happens for large basis sizes).
pub fn norm_grams(params: &BeamParameters, n: usize) -> Result<NormGrams> {
    if n < 5 {
        return Err(KvError::invalid("need n >= 5 for the norm Gram matrices"));
    }
    let f = assemble_f(n);
    let m = assemble_m(n);
    let ei = params.e_modulus * params.i_mom;
    let g_v0 = (&f + f.transpose()) * (0.5 * ei);
    if g_v0.clone().cholesky().is_none() {
        return Err(KvError::numerical(format!(
            "V0 Gram matrix not positive definite at n={n}"
        )));
    }
    let mut g_x = DMatrix::zeros(2 * n, 2 * n);
    g_x.view_mut((0, 0), (n, n)).copy_from(&g_v0);
    g_x.view_mut((n, n), (n, n)).copy_from(&m);
    let mut g_v = DMatrix::zeros(2 * n, 2 * n);
    g_v.view_mut((0, 0), (n, n)).copy_from(&g_v0);
    g_v.view_mut((n, n), (n, n)).copy_from(&g_v0);
    Ok(NormGrams { g_v0, g_x, g_v })
}

/// Norm-equivalence estimate: smallest `beta` with `|f|_w <= beta |f|_V0`
/// on the Galerkin space, i.e. the square root of the largest generalized
/// eigenvalue of (M, G_V0).
pub fn norm_equivalence_beta(mass: &DMatrix<f64>, g_v0: &DMatrix<f64>) -> Result<f64> {
    let chol = g_v0.clone().cholesky().ok_or_else(|| {
        KvError::numerical("V0 Gram not positive definite in norm-equivalence estimate")
    })?;
    let l = chol.l();
    // L^{-1} M L^{-T}, kept symmetric
    let linv_m = l.solve_lower_triangular(mass).ok_or_else(|| {
        KvError::numerical("triangular solve failed in norm-equivalence estimate")
    })?;
    let linv_m_linvt = l
        .solve_lower_triangular(&linv_m.transpose())
        .ok_or_else(|| KvError::numerical("triangular solve failed in norm-equivalence estimate"))?;
    let sym = (&linv_m_linvt + linv_m_linvt.transpose()) * 0.5;
    let eigs = sym.symmetric_eigenvalues();
    let lam_max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lam_max > 0.0) {
        return Err(KvError::numerical(
            "norm-equivalence eigenproblem returned a nonpositive maximum",
        ));
    }
    Ok(lam_max.sqrt())
}

/// Sesquilinear form in Galerkin coordinates, with the dynamics stiffness
/// used exactly as assembled and the V0 pairing through the symmetrized
/// Gram:
/// `a(phi, psi) = -<phi2, psi1>_V0 + EI psi2' F phi1 + d_kv I psi2' F phi2
///  + d_v psi2' M phi2`.
pub fn form_value(
    model: &GalerkinModel,
    grams: &NormGrams,
    phi: (&DVector<f64>, &DVector<f64>),
    psi: (&DVector<f64>, &DVector<f64>),
) -> Result<f64> {
    form_value_impl(model, grams, phi, psi, false)
}

/// Variant with every V0 pairing routed through the symmetrized Gram;
/// this is the version the boundedness inequality is stated for.
pub fn form_value_symmetric(
    model: &GalerkinModel,
    grams: &NormGrams,
    phi: (&DVector<f64>, &DVector<f64>),
    psi: (&DVector<f64>, &DVector<f64>),
) -> Result<f64> {
    form_value_impl(model, grams, phi, psi, true)
}

fn form_value_impl(
    model: &GalerkinModel,
    grams: &NormGrams,
    phi: (&DVector<f64>, &DVector<f64>),
    psi: (&DVector<f64>, &DVector<f64>),
    symmetrize: bool,
) -> Result<f64> {
    let n = model.n;
    for v in [phi.0, phi.1, psi.0, psi.1] {
        if v.len() != n {
            return Err(KvError::dims(format!(
                "form_value expects coordinate vectors of length {n}, got {}",
                v.len()
            )));
        }
    }
    let p = &model.params;
    let ei = p.e_modulus * p.i_mom;
    let dkv_i = p.d_kv * p.i_mom;

    let pair_v0 = (psi.0.transpose() * &grams.g_v0 * phi.1)[(0, 0)];
    let (stiff_1, stiff_2) = if symmetrize {
        // G_V0 = EI * sym(F), so EI psi' F phi becomes psi' G_V0 phi and the
        // Kelvin-Voigt term picks up d_kv / E
        (
            (psi.1.transpose() * &grams.g_v0 * phi.0)[(0, 0)],
            (p.d_kv / p.e_modulus) * (psi.1.transpose() * &grams.g_v0 * phi.1)[(0, 0)],
        )
    } else {
        (
            ei * (psi.1.transpose() * &model.stiff * phi.0)[(0, 0)],
            dkv_i * (psi.1.transpose() * &model.stiff * phi.1)[(0, 0)],
        )
    };
    let visc = p.d_v * (psi.1.transpose() * &model.mass * phi.1)[(0, 0)];
    Ok(-pair_v0 + stiff_1 + stiff_2 + visc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::phi_series;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn mass_closed_form_entries() {
        let m = assemble_m(6);
        assert_relative_eq!(m[(0, 0)], 35.0 * PI / 18.0, max_relative = 1e-15);
        assert_relative_eq!(m[(1, 1)], 7.0 * PI / 4.0, max_relative = 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn stiffness_closed_form_entries() {
        let f = assemble_f(6);
        assert_relative_eq!(f[(0, 0)], 64.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(f[(0, 2)], 768.0 * PI / 5.0, max_relative = 1e-15);
        assert_eq!(f[(2, 0)], 0.0);
    }

    #[test]
    fn sparsity_patterns() {
        let n = 12;
        let m = assemble_m(n);
        let f = assemble_f(n);
        for l in 0..n {
            for k in 0..n {
                let diff = l.abs_diff(k);
                if !(diff == 0 || diff == 2 || diff == 4) {
                    assert_eq!(m[(l, k)], 0.0, "M[{l},{k}]");
                }
                let upper_even = k >= l && (k - l) % 2 == 0;
                if !upper_even {
                    assert_eq!(f[(l, k)], 0.0, "F[{l},{k}]");
                }
            }
        }
    }

    #[test]
    fn oracle_m_small_entry() {
        let m = oracle_m(1);
        assert_relative_eq!(m[(0, 0)], 35.0 * PI / 18.0, max_relative = 1e-12);
    }

    #[test]
    fn lemma_matrices_match_oracles_n5() {
        let (m, mo) = (assemble_m(5), oracle_m(5));
        let (f, fo) = (assemble_f(5), oracle_f(5));
        for l in 0..5 {
            for k in 0..5 {
                let dm = (m[(l, k)] - mo[(l, k)]).abs();
                assert!(dm <= 1e-10 * m[(l, k)].abs().max(1.0), "M[{l},{k}]");
                let df = (f[(l, k)] - fo[(l, k)]).abs();
                assert!(df <= 1e-8 * f[(l, k)].abs().max(1.0), "F[{l},{k}]");
            }
        }
    }

    #[test]
    fn lemma_matrices_match_oracles_n40() {
        let n = 40;
        let (m, mo) = (assemble_m(n), oracle_m(n));
        let (f, fo) = (assemble_f(n), oracle_f(n));
        let scale_m = m.amax();
        let scale_f = f.amax();
        for l in 0..n {
            for k in 0..n {
                assert!(
                    (m[(l, k)] - mo[(l, k)]).abs() <= 1e-8 * scale_m,
                    "M[{l},{k}]: {} vs {}",
                    m[(l, k)],
                    mo[(l, k)]
                );
                assert!(
                    (f[(l, k)] - fo[(l, k)]).abs() <= 1e-8 * scale_f,
                    "F[{l},{k}]: {} vs {}",
                    f[(l, k)],
                    fo[(l, k)]
                );
            }
        }
    }

    #[test]
    fn input_vector_zero_profile() {
        let v = assemble_input_vector(&Profile::Poly(vec![0.0]), 8);
        assert_eq!(v, DVector::zeros(8));
    }

    #[test]
    fn input_vector_phi0_profile_is_mass_column() {
        let phi0 = phi_series(0);
        let profile = Profile::Func(Arc::new(move |x| phi0.eval(x).unwrap()));
        let v = assemble_input_vector(&profile, 8);
        let m = assemble_m(8);
        for l in 0..8 {
            assert_relative_eq!(v[l], m[(l, 0)], epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn input_vector_matches_quadrature() {
        let n = 12;
        let profile = Profile::paper_b1();
        let v = assemble_input_vector(&profile, n);
        let rule = ChebGaussRule::for_degree(n + 12);
        for l in 0..n {
            let phi = phi_series(l);
            let q = rule.integrate(|x| profile.eval(x) * phi.eval(x).unwrap());
            assert!(
                (v[l] - q).abs() <= 1e-10 * q.abs().max(1.0),
                "l={l}: {} vs {}",
                v[l],
                q
            );
        }
    }

    #[test]
    fn output_matrix_values() {
        let c = assemble_output_matrix(0.0, 0.3, 8);
        assert_relative_eq!(c[(0, 0)], 8.0 / 3.0, max_relative = 1e-13);
        for k in 0..8 {
            let phi = phi_series(k);
            assert_relative_eq!(
                c[(0, k)],
                phi.eval(0.0).unwrap(),
                epsilon = 1e-12,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                c[(1, k)],
                phi.eval(0.3).unwrap(),
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn first_order_dimensions() {
        let model = GalerkinModel::assemble(&BeamParameters::paper(), 39).unwrap();
        assert_eq!(model.state_dim(), 78);
        assert_eq!(model.a.nrows(), 78);
        assert_eq!(model.b.shape(), (78, 2));
        assert_eq!(model.bd.shape(), (78, 1));
        assert_eq!(model.c.shape(), (2, 78));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BeamParameters::new(
            -1.0,
            1.0,
            0.01,
            0.4,
            -0.6,
            0.3,
            Profile::paper_b1(),
            Profile::paper_b2(),
            vec![]
        )
        .is_err());
        // profile that does not vanish at the boundary
        assert!(BeamParameters::new(
            10.0,
            1.0,
            0.01,
            0.4,
            -0.6,
            0.3,
            Profile::Poly(vec![1.0]),
            Profile::paper_b2(),
            vec![]
        )
        .is_err());
    }

    #[test]
    fn grams_positive_definite_through_n69() {
        let params = BeamParameters::paper();
        for n in [39, 69] {
            let grams = norm_grams(&params, n).unwrap();
            let eigs = grams.g_v0.symmetric_eigenvalues();
            assert!(eigs.iter().all(|&e| e > 0.0), "n={n}");
        }
    }

    #[test]
    fn beta_hat_finite_positive() {
        let params = BeamParameters::paper();
        let grams = norm_grams(&params, 39).unwrap();
        let m = assemble_m(39);
        let beta = norm_equivalence_beta(&m, &grams.g_v0).unwrap();
        assert!(beta.is_finite() && beta > 0.0);
    }

    #[test]
    fn x_norm_of_velocity_unit_vector() {
        let params = BeamParameters::paper();
        let n = 8;
        let grams = norm_grams(&params, n).unwrap();
        let zero = DVector::zeros(n);
        let mut e0 = DVector::zeros(n);
        e0[0] = 1.0;
        assert_relative_eq!(
            grams.x_norm_sq(&zero, &e0),
            35.0 * PI / 18.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn form_value_examples() {
        let params = BeamParameters::paper();
        let n = 8;
        let model = GalerkinModel::assemble(&params, n).unwrap();
        let grams = model.grams().unwrap();
        let zero = DVector::zeros(n);
        let mut e0 = DVector::zeros(n);
        e0[0] = 1.0;

        // both second components zero kills every term
        let v = form_value(&model, &grams, (&e0, &zero), (&e0, &zero)).unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-13);

        // phi = psi = (0, e0)
        let v = form_value(&model, &grams, (&zero, &e0), (&zero, &e0)).unwrap();
        let expected = params.d_kv * params.i_mom * model.stiff[(0, 0)]
            + params.d_v * model.mass[(0, 0)];
        assert_relative_eq!(v, expected, max_relative = 1e-14);
    }

    #[test]
    fn coercivity_identity_from_proof() {
        // With every V0 pairing through the symmetrized Gram:
        // Re a(phi, phi) = (d_kv/E)(|phi|_V^2 - |phi1|_V0^2) + d_v |phi2|_w^2,
        // which implies the coercivity inequality with the X norm.
        let params = BeamParameters::paper();
        let n = 16;
        let model = GalerkinModel::assemble(&params, n).unwrap();
        let grams = model.grams().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let phi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let phi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a = form_value_symmetric(&model, &grams, (&phi1, &phi2), (&phi1, &phi2))
                .unwrap();
            let lam = params.d_kv / params.e_modulus;
            let w_sq = (phi2.transpose() * &model.mass * &phi2)[(0, 0)];
            let rhs = lam * (grams.v_norm_sq(&phi1, &phi2) - grams.v0_norm_sq(&phi1))
                + params.d_v * w_sq;
            let denom = a.abs().max(1.0);
            assert!(((a - rhs) / denom).abs() <= 1e-8, "a={a}, rhs={rhs}");

            let lower = lam * grams.v_norm_sq(&phi1, &phi2)
                - lam * grams.x_norm_sq(&phi1, &phi2)
                + params.d_v * w_sq;
            assert!(a >= lower - 1e-8 * denom, "a={a}, lower bound={lower}");
        }
    }

    #[test]
    fn boundedness_inequality_with_symmetrized_pairings() {
        let params = BeamParameters::paper();
        let n = 16;
        let model = GalerkinModel::assemble(&params, n).unwrap();
        let grams = model.grams().unwrap();
        let beta = norm_equivalence_beta(&model.mass, &grams.g_v0).unwrap();
        let q1 = 2.0 + params.d_kv / params.e_modulus + params.d_v * beta * beta;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let phi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let phi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let psi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let psi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a = form_value_symmetric(&model, &grams, (&phi1, &phi2), (&psi1, &psi2))
                .unwrap();
            let bound = q1
                * grams.v_norm_sq(&phi1, &phi2).sqrt()
                * grams.v_norm_sq(&psi1, &psi2).sqrt();
            assert!(a.abs() <= bound * (1.0 + 1e-10), "|a|={} bound={bound}", a.abs());
        }
    }

    #[test]
    fn form_matches_first_order_matrix() {
        // psi' G_X (A phi) = -a(phi, psi) when the same stiffness is used
        // on both sides; checked raw and symmetrized
        let params = BeamParameters::paper();
        let n = 10;
        let model = GalerkinModel::assemble(&params, n).unwrap();
        let grams = model.grams().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let phi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let phi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let psi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let psi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let mut phi = DVector::zeros(2 * n);
            phi.rows_mut(0, n).copy_from(&phi1);
            phi.rows_mut(n, n).copy_from(&phi2);
            let mut psi = DVector::zeros(2 * n);
            psi.rows_mut(0, n).copy_from(&psi1);
            psi.rows_mut(n, n).copy_from(&psi2);

            let lhs = (psi.transpose() * &grams.g_x * (&model.a * &phi))[(0, 0)];
            let a_val = form_value(&model, &grams, (&phi1, &phi2), (&psi1, &psi2)).unwrap();
            let denom = a_val.abs().max(1.0);
            assert!(
                ((lhs + a_val) / denom).abs() <= 1e-8,
                "lhs={lhs}, a={a_val}"
            );
        }
    }
}
