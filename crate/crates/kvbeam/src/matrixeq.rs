//! Dense matrix-equation solvers: Lyapunov (Bartels-Stewart), continuous
//! algebraic Riccati (Hamiltonian ordered Schur with defect correction),
//! balanced truncation, and spectral utilities.
//!
//! All routines are dense and target system orders up to a few hundred.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{KvError, Result};

/// Threshold for every Hurwitz acceptance check.
pub const HURWITZ_TOL: f64 = 1e-10;

/// Dense LTI system (A, B, C, D).
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let m = a.nrows();
        if a.ncols() != m {
            return Err(KvError::dims("state matrix must be square"));
        }
        if b.nrows() != m {
            return Err(KvError::dims(format!(
                "input matrix has {} rows, expected {m}",
                b.nrows()
            )));
        }
        if c.ncols() != m {
            return Err(KvError::dims(format!(
                "output matrix has {} columns, expected {m}",
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(KvError::dims("feedthrough dimensions inconsistent with B and C"));
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Transfer function value `C (sI - A)^{-1} B + D`.
    pub fn transfer_value(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let m = self.order();
        let mut resolvent = DMatrix::from_fn(m, m, |i, j| Complex64::new(-self.a[(i, j)], 0.0));
        for i in 0..m {
            resolvent[(i, i)] += s;
        }
        let bc = self.b.map(|x| Complex64::new(x, 0.0));
        let lu = resolvent.lu();
        let x = lu
            .solve(&bc)
            .ok_or_else(|| KvError::numerical(format!("resolvent singular at s = {s}")))?;
        let cc = self.c.map(|x| Complex64::new(x, 0.0));
        let dc = self.d.map(|x| Complex64::new(x, 0.0));
        Ok(cc * x + dc)
    }
}

/// Result of balanced truncation.
#[derive(Debug, Clone)]
pub struct BTResult {
    pub reduced: StateSpace,
    /// Hankel singular values of the full system, nonincreasing.
    pub hankel_sv: Vec<f64>,
    /// Left truncation map W' (r x m): reduced.a = left_proj * a * right_proj'.
    pub left_proj: DMatrix<f64>,
    /// Right truncation map T' (r x m).
    pub right_proj: DMatrix<f64>,
}

// ---------------------------------------------------------------------------
// Eigenvalues and stability margin
// ---------------------------------------------------------------------------

/// Parlett-Reinsch balancing: returns (d, B) with B = D^{-1} A D, D = diag(d),
/// all scale factors powers of two so the similarity is exact in floating
/// point. Eigenvalues are preserved; invariant subspaces map back as D * V.
pub fn balance(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c: f64 = 0.0;
            let mut r: f64 = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            while cc < r / RADIX {
                f *= RADIX;
                cc *= RADIX * RADIX;
            }
            while cc > r * RADIX {
                f /= RADIX;
                cc /= RADIX * RADIX;
            }
            if (cc + r) / f < 0.95 * s {
                converged = false;
                let g = 1.0 / f;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] *= g;
                }
                for j in 0..n {
                    b[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    (d, b)
}

/// Real Schur form A = Q T Q' with orthogonal Q and quasi-upper-triangular T.
#[derive(Debug, Clone)]
pub struct RealSchurForm {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

pub fn real_schur(a: &DMatrix<f64>) -> Result<RealSchurForm> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(KvError::dims("Schur decomposition needs a nonempty square matrix"));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(KvError::numerical("matrix contains non-finite entries"));
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| KvError::numerical("real Schur iteration did not converge"))?;
    let (q, t) = schur.unpack();
    Ok(RealSchurForm { q, t })
}

/// Diagonal block layout of a quasi-triangular matrix.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let two = i + 1 < n && {
            let sub = t[(i + 1, i)].abs();
            sub > f64::EPSILON * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs()).max(f64::MIN_POSITIVE)
        };
        if two {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> (Complex64, Complex64) {
    if size == 1 {
        let l = Complex64::new(t[(start, start)], 0.0);
        return (l, l);
    }
    let a = t[(start, start)];
    let b = t[(start, start + 1)];
    let c = t[(start + 1, start)];
    let d = t[(start + 1, start + 1)];
    let mean = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        (
            Complex64::new(mean + sq, 0.0),
            Complex64::new(mean - sq, 0.0),
        )
    } else {
        let sq = (-disc).sqrt();
        (Complex64::new(mean, sq), Complex64::new(mean, -sq))
    }
}

/// Eigenvalues of a general real matrix via balancing and the real Schur
/// form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let (_, bal) = balance(a);
    let schur = real_schur(&bal)?;
    let mut out = Vec::with_capacity(a.nrows());
    for (start, size) in schur_blocks(&schur.t) {
        let (l1, l2) = block_eigenvalues(&schur.t, start, size);
        out.push(l1);
        if size == 2 {
            out.push(l2);
        }
    }
    Ok(out)
}

/// Stability margin: negative of the largest eigenvalue real part.
/// Positive exactly when the matrix is Hurwitz.
pub fn stability_margin(a: &DMatrix<f64>) -> Result<f64> {
    let eigs = eigenvalues(a)?;
    let max_re = eigs
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(-max_re)
}

// ---------------------------------------------------------------------------
// Schur reordering
// ---------------------------------------------------------------------------

/// Solve the tiny Sylvester equation T11 X - X T22 = C by Kronecker
/// vectorization (blocks are at most 2 x 2).
fn small_sylvester(
    t11: &DMatrix<f64>,
    t22: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n1 = t11.nrows();
    let n2 = t22.nrows();
    let dim = n1 * n2;
    let mut k = DMatrix::zeros(dim, dim);
    // vec(T11 X) = (I (x) T11) vec(X); vec(X T22) = (T22' (x) I) vec(X)
    for j in 0..n2 {
        for i in 0..n1 {
            let row = j * n1 + i;
            for p in 0..n1 {
                k[(row, j * n1 + p)] += t11[(i, p)];
            }
            for q in 0..n2 {
                k[(row, q * n1 + i)] -= t22[(q, j)];
            }
        }
    }
    let rhs = DVector::from_fn(dim, |r, _| c[(r % n1, r / n1)]);
    let lu = k.lu();
    let x = lu.solve(&rhs).ok_or_else(|| {
        KvError::numerical("Schur block swap is singular (eigenvalues too close)")
    })?;
    Ok(DMatrix::from_fn(n1, n2, |i, j| x[j * n1 + i]))
}

/// Orthonormal basis of R^m whose first k columns span col(w), w of full
/// column rank k. Modified Gram-Schmidt with a second pass, extended by
/// coordinate vectors.
fn orth_complete(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = w.nrows();
    let k = w.ncols();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m);
    let push_orthonormalized = |v: DVector<f64>, cols: &mut Vec<DVector<f64>>| -> bool {
        let mut u = v;
        for _ in 0..2 {
            for c in cols.iter() {
                let proj = c.dot(&u);
                u -= c * proj;
            }
        }
        let norm = u.norm();
        if norm <= 1e-10 {
            return false;
        }
        cols.push(u / norm);
        true
    };
    for j in 0..k {
        if !push_orthonormalized(w.column(j).into_owned(), &mut cols) {
            return Err(KvError::numerical("rank deficiency in Schur swap basis"));
        }
    }
    let mut e = 0;
    while cols.len() < m && e < m {
        let mut v = DVector::zeros(m);
        v[e] = 1.0;
        push_orthonormalized(v, &mut cols);
        e += 1;
    }
    if cols.len() != m {
        return Err(KvError::numerical("failed to complete orthonormal basis"));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Swap adjacent diagonal blocks of sizes n1 and n2 starting at row p,
/// updating T and accumulating the rotation into Q.
fn swap_adjacent_blocks(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    p: usize,
    n1: usize,
    n2: usize,
) -> Result<()> {
    let t11 = t.view((p, p), (n1, n1)).into_owned();
    let t12 = t.view((p, p + n1), (n1, n2)).into_owned();
    let t22 = t.view((p + n1, p + n1), (n2, n2)).into_owned();
    // T [X; I] = [X; I] T22 requires T11 X - X T22 = -T12
    let x = small_sylvester(&t11, &t22, &(-t12))?;
    let mut w = DMatrix::zeros(n1 + n2, n2);
    w.view_mut((0, 0), (n1, n2)).copy_from(&x);
    w.view_mut((n1, 0), (n2, n2))
        .copy_from(&DMatrix::identity(n2, n2));
    let g = orth_complete(&w)?;

    let nb = n1 + n2;
    let n = t.nrows();
    // columns p..p+nb of T (all rows)
    let tc = t.view((0, p), (n, nb)) * &g;
    t.view_mut((0, p), (n, nb)).copy_from(&tc);
    // rows p..p+nb of T (all columns)
    let tr = g.transpose() * t.view((p, 0), (nb, n));
    t.view_mut((p, 0), (nb, n)).copy_from(&tr);
    // accumulate into Q
    let qc = q.view((0, p), (n, nb)) * &g;
    q.view_mut((0, p), (n, nb)).copy_from(&qc);

    // the swapped form is block upper triangular by construction
    for i in n2..nb {
        for j in 0..n2.min(i) {
            t[(p + i, p + j)] = 0.0;
        }
    }
    Ok(())
}

/// Reorder a real Schur form in place so that every diagonal block whose
/// eigenvalues satisfy `select` comes first. Returns the number of selected
/// eigenvalues. The relative order inside each group is preserved.
pub fn reorder_schur(
    q: &mut DMatrix<f64>,
    t: &mut DMatrix<f64>,
    select: impl Fn(Complex64) -> bool,
) -> Result<usize> {
    #[derive(Clone, Copy)]
    struct Block {
        size: usize,
        selected: bool,
    }
    let mut blocks: Vec<Block> = Vec::new();
    for (start, size) in schur_blocks(t) {
        let (l1, l2) = block_eigenvalues(t, start, size);
        let s1 = select(l1);
        if size == 2 && s1 != select(l2) {
            return Err(KvError::numerical(
                "2x2 Schur block with mixed eigenvalue selection cannot be reordered",
            ));
        }
        blocks.push(Block {
            size,
            selected: s1,
        });
    }
    loop {
        let mut changed = false;
        let mut start = 0;
        for j in 0..blocks.len().saturating_sub(1) {
            let (b1, b2) = (blocks[j], blocks[j + 1]);
            if !b1.selected && b2.selected {
                swap_adjacent_blocks(t, q, start, b1.size, b2.size)?;
                blocks[j] = b2;
                blocks[j + 1] = b1;
                changed = true;
                start += b2.size;
            } else {
                start += b1.size;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(blocks
        .iter()
        .filter(|b| b.selected)
        .map(|b| b.size)
        .sum())
}

// ---------------------------------------------------------------------------
// Lyapunov
// ---------------------------------------------------------------------------

/// Solve A X + X A' + W = 0 for Hurwitz A and symmetric W >= 0 by
/// Bartels-Stewart. The relative residual |A X + X A' + W| / |W| is
/// checked against 1e-9.
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(KvError::dims("Lyapunov equation needs square A and W of equal size"));
    }
    let margin = stability_margin(a)?;
    if margin <= HURWITZ_TOL {
        return Err(KvError::numerical(format!(
            "Lyapunov right-hand side requires Hurwitz A (margin {margin:.3e})"
        )));
    }
    let asym = (w - w.transpose()).amax();
    if asym > 1e-8 * w.amax().max(1.0) {
        return Err(KvError::invalid(format!(
            "Lyapunov weight matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let mut x = lyapunov_unchecked(a, w)?;
    // iterative refinement: for badly scaled A the back-transformed solve
    // leaves a residual well above the evaluation floor of the original
    // coordinates; a correction solve brings it down
    let wnorm = w.norm().max(f64::MIN_POSITIVE);
    let mut res_mat = a * &x + &x * a.transpose() + w;
    let mut rel = res_mat.norm() / wnorm;
    for _ in 0..3 {
        if rel <= 1e-12 {
            break;
        }
        let delta = lyapunov_unchecked(a, &res_mat)?;
        let x_new = &x + &delta;
        let res_new = a * &x_new + &x_new * a.transpose() + w;
        let rel_new = res_new.norm() / wnorm;
        if rel_new < rel {
            x = x_new;
            res_mat = res_new;
            rel = rel_new;
        } else {
            break;
        }
    }
    if rel > 1e-9 {
        return Err(KvError::numerical(format!(
            "Lyapunov residual {rel:.3e} exceeds tolerance"
        )));
    }
    Ok(x)
}

/// Bartels-Stewart without the Hurwitz/symmetry prechecks; used internally
/// for Riccati defect correction where the right-hand side is indefinite.
fn lyapunov_unchecked(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, ab) = balance(a);
    let n = a.nrows();
    let mut wb = w.clone();
    for i in 0..n {
        for j in 0..n {
            wb[(i, j)] /= d[i] * d[j];
        }
    }
    let RealSchurForm { q, t } = real_schur(&ab)?;
    let c = -(q.transpose() * &wb * &q);
    let y = solve_quasi_triangular_lyap(&t, &c)?;
    let mut xb = &q * y * q.transpose();
    for i in 0..n {
        for j in 0..n {
            xb[(i, j)] *= d[i] * d[j];
        }
    }
    let xs = (&xb + xb.transpose()) * 0.5;
    Ok(xs)
}

/// Solve T Y + Y T' = C for quasi-upper-triangular T by block
/// back-substitution.
fn solve_quasi_triangular_lyap(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = schur_blocks(t);
    let nb = blocks.len();
    let mut y = DMatrix::zeros(n, n);
    for jb in (0..nb).rev() {
        let (js, jsz) = blocks[jb];
        for ib in (0..nb).rev() {
            let (is, isz) = blocks[ib];
            let mut rhs = c.view((is, js), (isz, jsz)).into_owned();
            // contributions T_ik Y_kj for k > i
            if is + isz < n {
                let t_right = t.view((is, is + isz), (isz, n - is - isz));
                let y_below = y.view((is + isz, js), (n - is - isz, jsz));
                rhs -= t_right * y_below;
            }
            // contributions Y_il T_jl' for l > j
            if js + jsz < n {
                let y_right = y.view((is, js + jsz), (isz, n - js - jsz));
                let t_right = t.view((js, js + jsz), (jsz, n - js - jsz));
                rhs -= y_right * t_right.transpose();
            }
            let t11 = t.view((is, is), (isz, isz)).into_owned();
            let t22 = -t.view((js, js), (jsz, jsz)).transpose();
            let yij = small_sylvester(&t11, &t22, &rhs)?;
            y.view_mut((is, js), (isz, jsz)).copy_from(&yij);
        }
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Riccati
// ---------------------------------------------------------------------------

const CARE_RTOL: f64 = 1e-8;

fn care_residual(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    q: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> (DMatrix<f64>, f64) {
    let atx = a.transpose() * x;
    let xa = x * a;
    let xsx = x * s * x;
    let res = &atx + &xa - &xsx + q;
    let denom = atx.norm() + xa.norm() + xsx.norm() + q.norm();
    let rel = if denom > 0.0 {
        res.norm() / denom
    } else {
        res.norm()
    };
    (res, rel)
}

/// Solve the continuous algebraic Riccati equation
/// `A' X + X A - X B R^{-1} B' X + Q = 0`
/// for the stabilizing solution via the ordered real Schur form of the
/// Hamiltonian matrix, followed by Lyapunov defect correction while it
/// improves the residual. Fails when the stable invariant subspace has the
/// wrong dimension or the final residual exceeds 1e-8.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(KvError::dims("Riccati state matrix must be square"));
    }
    if b.nrows() != m {
        return Err(KvError::dims("Riccati input matrix row count mismatch"));
    }
    let p = b.ncols();
    if q.nrows() != m || q.ncols() != m {
        return Err(KvError::dims("Riccati weight Q must match the state dimension"));
    }
    if r.nrows() != p || r.ncols() != p {
        return Err(KvError::dims("Riccati weight R must match the input dimension"));
    }
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| KvError::invalid("Riccati weight R must be symmetric positive definite"))?;
    let s = b * r_chol.solve(&b.transpose());
    let s = (&s + s.transpose()) * 0.5;

    // Hamiltonian [[A, -S], [-Q, -A']]
    let mut h = DMatrix::zeros(2 * m, 2 * m);
    h.view_mut((0, 0), (m, m)).copy_from(a);
    h.view_mut((0, m), (m, m)).copy_from(&(-&s));
    h.view_mut((m, 0), (m, m)).copy_from(&(-q));
    h.view_mut((m, m), (m, m)).copy_from(&(-a.transpose()));

    let (d, hb) = balance(&h);
    let RealSchurForm { q: mut qs, mut t } = real_schur(&hb)?;
    let n_stable = reorder_schur(&mut qs, &mut t, |l| l.re < 0.0)?;
    if n_stable != m {
        return Err(KvError::numerical(format!(
            "stable invariant subspace has dimension {n_stable}, expected {m}; \
             no stabilizing Riccati solution"
        )));
    }
    // subspace of the unbalanced Hamiltonian
    let mut basis = qs.columns(0, m).into_owned();
    for i in 0..2 * m {
        for j in 0..m {
            basis[(i, j)] *= d[i];
        }
    }
    let u1 = basis.rows(0, m).into_owned();
    let u2 = basis.rows(m, m).into_owned();
    let x_t = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or_else(|| KvError::numerical("singular U1 block in Riccati subspace extraction"))?;
    let mut x = (x_t.transpose() + x_t) * 0.5;

    // defect correction through the closed-loop Lyapunov equation
    let (_, mut rel) = care_residual(a, &s, q, &x);
    for _ in 0..4 {
        if rel <= 1e-14 {
            break;
        }
        let a_cl = a - &s * &x;
        if stability_margin(&a_cl)? <= 0.0 {
            break;
        }
        let (res, _) = care_residual(a, &s, q, &x);
        let delta = match lyapunov_unchecked(&a_cl.transpose(), &res) {
            Ok(d) => d,
            Err(_) => break,
        };
        let x_new = (&x + &delta + (&x + &delta).transpose()) * 0.5;
        let (_, rel_new) = care_residual(a, &s, q, &x_new);
        if rel_new < rel {
            x = x_new;
            rel = rel_new;
        } else {
            break;
        }
    }

    let (_, rel) = care_residual(a, &s, q, &x);
    if rel > CARE_RTOL {
        return Err(KvError::numerical(format!(
            "Riccati relative residual {rel:.3e} exceeds {CARE_RTOL:.0e}"
        )));
    }
    let margin = stability_margin(&(a - &s * &x))?;
    if margin <= HURWITZ_TOL {
        return Err(KvError::numerical(format!(
            "Riccati closed loop not Hurwitz (margin {margin:.3e})"
        )));
    }
    Ok(x)
}

/// Relative residual of a candidate CARE solution, using the same measure
/// as the solver's acceptance check.
pub fn care_relative_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<f64> {
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| KvError::invalid("R must be positive definite"))?;
    let s = b * r_chol.solve(&b.transpose());
    Ok(care_residual(a, &s, q, x).1)
}

// ---------------------------------------------------------------------------
// Balanced truncation
// ---------------------------------------------------------------------------

/// Factor a symmetric PSD matrix as G G'. Cholesky when it succeeds,
/// eigenvalue square root with clamping near the semidefinite boundary.
fn psd_factor(x: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = x.clone().cholesky() {
        return chol.l();
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(x.clone());
    let n = x.nrows();
    let mut g = eig.eigenvectors;
    for j in 0..n {
        let lam = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            g[(i, j)] *= lam;
        }
    }
    g
}

/// Square-root balanced truncation of a Hurwitz system to order `r`.
///
/// Gramians come from `solve_lyapunov`; the Hankel singular values are the
/// singular values of the product of their factors. Requires a strict gap
/// between sigma_r and sigma_{r+1}.
pub fn balanced_truncate(sys: &StateSpace, r: usize) -> Result<BTResult> {
    let m = sys.order();
    let margin = stability_margin(&sys.a)?;
    if margin <= HURWITZ_TOL {
        return Err(KvError::numerical(format!(
            "balanced truncation needs a Hurwitz system (margin {margin:.3e})"
        )));
    }
    if r < 1 || r > m {
        return Err(KvError::invalid(format!(
            "reduction order {r} outside 1..={m}"
        )));
    }
    let wc = solve_lyapunov(&sys.a, &(&sys.b * sys.b.transpose()))?;
    let wo = solve_lyapunov(&sys.a.transpose(), &(sys.c.transpose() * &sys.c))?;
    let sf = psd_factor(&wc);
    let lf = psd_factor(&wo);
    let mut svd = nalgebra::linalg::SVD::new(lf.transpose() * &sf, true, true);
    svd.sort_by_singular_values();
    let hankel: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let u = svd
        .u
        .ok_or_else(|| KvError::numerical("SVD did not return U"))?;
    let vt = svd
        .v_t
        .ok_or_else(|| KvError::numerical("SVD did not return V'"))?;

    if r < m {
        let gap = hankel[r - 1] - hankel[r];
        if gap <= 1e-12 * hankel[0].max(f64::MIN_POSITIVE) {
            return Err(KvError::numerical(format!(
                "Hankel singular values sigma_{r} and sigma_{} are tied; \
                 choose a different order",
                r + 1
            )));
        }
    }
    if hankel[r - 1] <= 1e-13 * hankel[0].max(f64::MIN_POSITIVE) {
        return Err(KvError::numerical(format!(
            "system is numerically of order below {r}"
        )));
    }

    let mut t_map = DMatrix::zeros(m, r);
    let mut w_map = DMatrix::zeros(m, r);
    for j in 0..r {
        let scale = hankel[j].sqrt().recip();
        let v_col = vt.row(j).transpose();
        let tv = &sf * v_col * scale;
        t_map.set_column(j, &tv);
        let wu = &lf * u.column(j) * scale;
        w_map.set_column(j, &wu);
    }
    let reduced = StateSpace::new(
        w_map.transpose() * &sys.a * &t_map,
        w_map.transpose() * &sys.b,
        &sys.c * &t_map,
        sys.d.clone(),
    )?;
    Ok(BTResult {
        reduced,
        hankel_sv: hankel,
        left_proj: w_map.transpose(),
        right_proj: t_map.transpose(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_stable(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let mut a = random_matrix(rng, n);
        let margin = stability_margin(&a).unwrap();
        if margin < 0.5 {
            for i in 0..n {
                a[(i, i)] -= 0.5 - margin;
            }
        }
        a
    }

    /// Kronecker-vectorization Lyapunov oracle: (I (x) A + A (x) I) vec(X)
    /// = -vec(W).
    fn lyapunov_kron_oracle(a: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let dim = n * n;
        let mut k = DMatrix::zeros(dim, dim);
        for j in 0..n {
            for i in 0..n {
                let row = j * n + i;
                for p in 0..n {
                    k[(row, j * n + p)] += a[(i, p)];
                }
                for q in 0..n {
                    k[(row, q * n + i)] += a[(j, q)];
                }
            }
        }
        let rhs = DVector::from_fn(dim, |r, _| -w[(r % n, r / n)]);
        let x = k.lu().solve(&rhs).unwrap();
        DMatrix::from_fn(n, n, |i, j| x[j * n + i])
    }

    #[test]
    fn margin_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        assert_relative_eq!(stability_margin(&a).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn margin_rotation_is_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(stability_margin(&a).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn margin_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4, 7, 10] {
            let a = random_matrix(&mut rng, n);
            let mut t = random_matrix(&mut rng, n);
            for i in 0..n {
                t[(i, i)] += 3.0;
            }
            let tinv = t.clone().try_inverse().unwrap();
            let sim = &t * &a * &tinv;
            let m1 = stability_margin(&a).unwrap();
            let m2 = stability_margin(&sim).unwrap();
            assert!((m1 - m2).abs() <= 1e-8 * m1.abs().max(1.0), "{m1} vs {m2}");
        }
    }

    #[test]
    fn schur_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 12);
        let RealSchurForm { q, t } = real_schur(&a).unwrap();
        let err = (&q * &t * q.transpose() - &a).norm() / a.norm();
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn reorder_moves_stable_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [5, 8, 12] {
            let a = random_matrix(&mut rng, n);
            let RealSchurForm { mut q, mut t } = real_schur(&a).unwrap();
            let count = reorder_schur(&mut q, &mut t, |l| l.re < 0.0).unwrap();
            // reconstruction is preserved
            let err = (&q * &t * q.transpose() - &a).norm() / a.norm();
            assert!(err <= 1e-10, "reconstruction {err}");
            // eigenvalue multiset is preserved and sorted by selection
            let eigs = eigenvalues(&a).unwrap();
            let expected = eigs.iter().filter(|l| l.re < 0.0).count();
            assert_eq!(count, expected);
            let mut seen = 0;
            for (start, size) in schur_blocks(&t) {
                let (l1, _) = block_eigenvalues(&t, start, size);
                if seen < count {
                    assert!(l1.re < 0.0, "block at {start} should be stable");
                } else {
                    assert!(l1.re >= 0.0, "block at {start} should be antistable");
                }
                seen += size;
            }
        }
    }

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let w = DMatrix::from_element(1, 1, 1.0);
        let x = solve_lyapunov(&a, &w).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn lyapunov_decoupled_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let w = DMatrix::identity(2, 2);
        let x = solve_lyapunov(&a, &w).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, max_relative = 1e-12);
        assert_relative_eq!(x[(1, 1)], 0.25, max_relative = 1e-12);
        assert!(x[(0, 1)].abs() <= 1e-14);
    }

    #[test]
    fn lyapunov_matches_kronecker_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in [3, 8, 12] {
            let a = random_stable(&mut rng, n);
            let g = random_matrix(&mut rng, n);
            let w = &g * g.transpose();
            let x = solve_lyapunov(&a, &w).unwrap();
            let x_oracle = lyapunov_kron_oracle(&a, &w);
            let err = (&x - &x_oracle).norm() / x_oracle.norm();
            assert!(err <= 1e-8, "n={n}: {err}");
        }
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let w = DMatrix::from_element(1, 1, 1.0);
        assert!(solve_lyapunov(&a, &w).is_err());
    }

    #[test]
    fn care_scalar_integrator() {
        // a=0, b=1, q=1, r=1: stabilizing root of -x^2 + 1 = 0 is x = 1
        let a = DMatrix::from_element(1, 1, 0.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, 1.0);
        let x = solve_care(&a, &b, &q, &r).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn care_scalar_stable_no_cost() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::from_element(1, 1, 0.0);
        let r = DMatrix::from_element(1, 1, 1.0);
        let x = solve_care(&a, &b, &q, &r).unwrap();
        assert!(x[(0, 0)].abs() <= 1e-12);
    }

    #[test]
    fn care_random_residual_and_stability() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [2, 5, 9] {
            let a = random_matrix(&mut rng, n);
            let b = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
            let q = DMatrix::identity(n, n);
            let r = DMatrix::identity(2, 2);
            let x = solve_care(&a, &b, &q, &r).unwrap();
            let rel = care_relative_residual(&a, &b, &q, &r, &x).unwrap();
            assert!(rel <= 1e-10, "n={n}: residual {rel}");
            let s = &b * b.transpose();
            let margin = stability_margin(&(&a - s * &x)).unwrap();
            assert!(margin > 0.0, "n={n}: closed loop margin {margin}");
        }
    }

    #[test]
    fn bt_two_state_hankel_oracle() {
        // A = diag(-1, -2), B = (1, 1)', C = (1, 1): the Gramians solve
        // decoupled scalar equations, P = Q = [[1/2, 1/3], [1/3, 1/4]],
        // and the Hankel values are the eigenvalues of P.
        let sys = StateSpace::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0])),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 1.0 / 3.0, 1.0 / 3.0, 0.25]);
        let mut expected: Vec<f64> = p.symmetric_eigenvalues().iter().cloned().collect();
        expected.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let bt = balanced_truncate(&sys, 2).unwrap();
        for (h, e) in bt.hankel_sv.iter().zip(&expected) {
            assert_relative_eq!(h, e, max_relative = 1e-10);
        }
    }

    #[test]
    fn bt_full_order_preserves_transfer_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 6;
        let sys = StateSpace::new(
            random_stable(&mut rng, n),
            DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(2, n, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let bt = balanced_truncate(&sys, n).unwrap();
        for k in 0..10 {
            let w = 10f64.powf(-1.0 + 2.0 * k as f64 / 9.0);
            let s = Complex64::new(0.0, w);
            let g1 = sys.transfer_value(s).unwrap();
            let g2 = bt.reduced.transfer_value(s).unwrap();
            let err = (&g1 - &g2).norm() / g1.norm().max(1e-12);
            assert!(err <= 1e-8, "w={w}: {err}");
        }
    }

    #[test]
    fn bt_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 8;
        let sys = StateSpace::new(
            random_stable(&mut rng, n),
            DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        for r in [2, 4, 6] {
            let bt = match balanced_truncate(&sys, r) {
                Ok(bt) => bt,
                Err(_) => continue, // tied singular values for this draw
            };
            let bound: f64 = 2.0 * bt.hankel_sv[r..].iter().sum::<f64>() + 1e-6;
            for k in 0..200 {
                let w = 10f64.powf(-2.0 + 5.0 * k as f64 / 199.0);
                let s = Complex64::new(0.0, w);
                let g1 = sys.transfer_value(s).unwrap();
                let g2 = bt.reduced.transfer_value(s).unwrap();
                let diff = &g1 - &g2;
                // spectral norm of a 1x1
                let err = diff.norm();
                assert!(err <= bound, "r={r} w={w}: {err} > {bound}");
            }
        }
    }

    #[test]
    fn bt_hankel_invariant_under_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let n = 6;
        let a = random_stable(&mut rng, n);
        let b = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, n, |_, _| rng.gen_range(-1.0..1.0));
        let sys = StateSpace::new(a.clone(), b.clone(), c.clone(), DMatrix::zeros(2, 2)).unwrap();
        let mut t = random_matrix(&mut rng, n);
        for i in 0..n {
            t[(i, i)] += 3.0;
        }
        let tinv = t.clone().try_inverse().unwrap();
        let sys2 = StateSpace::new(&t * &a * &tinv, &t * &b, &c * &tinv, DMatrix::zeros(2, 2))
            .unwrap();
        let h1 = balanced_truncate(&sys, n).unwrap().hankel_sv;
        let h2 = balanced_truncate(&sys2, n).unwrap().hankel_sv;
        for (x, y) in h1.iter().zip(&h2) {
            assert!((x - y).abs() <= 1e-8 * x.max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn bt_rejects_bad_inputs() {
        let unstable = StateSpace::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(balanced_truncate(&unstable, 1).is_err());
        let stable = StateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(balanced_truncate(&stable, 2).is_err());
    }

    #[test]
    fn transfer_value_scalar() {
        let sys = StateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let p0 = sys.transfer_value(Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(p0[(0, 0)].re, 1.0, max_relative = 1e-14);
        assert!(p0[(0, 0)].im.abs() <= 1e-15);
    }

    #[test]
    fn transfer_value_rejects_eigenvalue() {
        let sys = StateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(sys.transfer_value(Complex64::new(-1.0, 0.0)).is_err());
    }
}
