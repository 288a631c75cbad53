//! Observer-based reduced-order controller synthesis (internal model,
//! stabilizing Riccati gains, balanced-truncation observer reduction) and
//! the low-gain comparison controller.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{KvError, Result};
use crate::galerkin::GalerkinModel;
use crate::matrixeq::{
    balanced_truncate, care_relative_residual, solve_care, stability_margin, StateSpace,
};

/// Internal model of the exosystem frequencies: block-diagonal rotation
/// generator `G1` and input map `G2`, controllable by construction.
#[derive(Debug, Clone)]
pub struct InternalModel {
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    /// Frequencies, starting at zero and strictly increasing.
    pub freqs: Vec<f64>,
    /// Number of tracked outputs (2 for the beam).
    pub outputs: usize,
}

impl InternalModel {
    pub fn dim(&self) -> usize {
        self.g1.nrows()
    }
}

/// Build the internal model for the given frequency list (first entry must
/// be zero) and output count.
pub fn build_internal_model(freqs: &[f64], outputs: usize) -> Result<InternalModel> {
    if freqs.is_empty() || freqs[0] != 0.0 {
        return Err(KvError::invalid(
            "frequency list must start with the zero frequency",
        ));
    }
    if freqs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(KvError::invalid(
            "frequencies must be strictly increasing and nonnegative",
        ));
    }
    if outputs == 0 {
        return Err(KvError::invalid("output count must be positive"));
    }
    let p = outputs;
    let q = freqs.len() - 1;
    let dim = p * (2 * q + 1);
    let mut g1 = DMatrix::zeros(dim, dim);
    let mut g2 = DMatrix::zeros(dim, p);
    // zero-frequency block: G1 block is 0_p, G2 block is I_p
    g2.view_mut((0, 0), (p, p))
        .copy_from(&DMatrix::identity(p, p));
    for (k, &w) in freqs.iter().enumerate().skip(1) {
        let base = p + (k - 1) * 2 * p;
        for i in 0..p {
            g1[(base + i, base + p + i)] = w;
            g1[(base + p + i, base + i)] = -w;
        }
        g2.view_mut((base, 0), (p, p))
            .copy_from(&DMatrix::identity(p, p));
    }
    Ok(InternalModel {
        g1,
        g2,
        freqs: freqs.to_vec(),
        outputs,
    })
}

/// Parameters of the Riccati-based stabilization step and the observer
/// reduction.
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Exponential shift for the observer Riccati equation.
    pub alpha1: f64,
    /// Exponential shift for the state-feedback Riccati equation.
    pub alpha2: f64,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    /// Optional weights; `None` means identity in Galerkin coordinates.
    pub q0: Option<DMatrix<f64>>,
    pub q1: Option<DMatrix<f64>>,
    pub q2: Option<DMatrix<f64>>,
    /// Balanced-truncation order of the observer part.
    pub reduction_order: usize,
    /// Design-grade Galerkin basis size.
    pub n_design: usize,
    /// Exosystem frequencies (first entry zero).
    pub freqs: Vec<f64>,
    /// Transmission-zero acceptance threshold on sigma_min(P(i w_k)).
    pub zero_tol: f64,
}

impl SynthesisOptions {
    /// Parameters of the reference experiment: alpha1 = 2, alpha2 = 0.8,
    /// identity weights, r = 4, design size 39, frequencies k pi for
    /// k = 0..=10.
    pub fn paper_defaults() -> Self {
        let pi = std::f64::consts::PI;
        SynthesisOptions {
            alpha1: 2.0,
            alpha2: 0.8,
            r1: DMatrix::identity(2, 2),
            r2: DMatrix::identity(2, 2),
            q0: None,
            q1: None,
            q2: None,
            reduction_order: 4,
            n_design: 39,
            freqs: (0..=10).map(|k| k as f64 * pi).collect(),
            zero_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(KvError::invalid("exponential shifts must be nonnegative"));
        }
        for (name, r) in [("R1", &self.r1), ("R2", &self.r2)] {
            if r.nrows() != 2 || r.ncols() != 2 {
                return Err(KvError::dims(format!("{name} must be 2x2")));
            }
            if r.clone().cholesky().is_none() {
                return Err(KvError::invalid(format!(
                    "{name} must be symmetric positive definite"
                )));
            }
        }
        if self.reduction_order < 1 || self.reduction_order > 2 * self.n_design {
            return Err(KvError::invalid(format!(
                "reduction order {} outside 1..={}",
                self.reduction_order,
                2 * self.n_design
            )));
        }
        if self.freqs.is_empty() || self.freqs[0] != 0.0 {
            return Err(KvError::invalid("frequency list must start at zero"));
        }
        Ok(())
    }
}

const MARGIN_SLACK: f64 = 1e-6;

fn weight_or_identity(opt: &Option<DMatrix<f64>>, dim: usize, name: &str) -> Result<DMatrix<f64>> {
    match opt {
        None => Ok(DMatrix::identity(dim, dim)),
        Some(m) => {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(KvError::dims(format!(
                    "{name} must be {dim}x{dim}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(m.clone())
        }
    }
}

/// Observer gain: solve the shifted filter Riccati equation
/// `(A + a1 I) S + S (A + a1 I)' - S C' R1^{-1} C S + Q1 Q1' = 0`
/// and return `L = -S C' R1^{-1}`. The shifted observer matrix `A + LC`
/// must reach stability margin alpha1 (within slack).
pub fn design_observer_gain(plant: &GalerkinModel, opts: &SynthesisOptions) -> Result<DMatrix<f64>> {
    let m = plant.state_dim();
    let q1 = weight_or_identity(&opts.q1, m, "Q1")?;
    let q1q1t = &q1 * q1.transpose();
    let mut a_shift = plant.a.clone();
    for i in 0..m {
        a_shift[(i, i)] += opts.alpha1;
    }
    // filter equation in standard CARE form for A', with B = C'
    let sigma = solve_care(&a_shift.transpose(), &plant.c.transpose(), &q1q1t, &opts.r1)?;
    let r1_chol = opts
        .r1
        .clone()
        .cholesky()
        .ok_or_else(|| KvError::invalid("R1 must be positive definite"))?;
    let l = -(&sigma * plant.c.transpose() * r1_chol.inverse());
    let achieved = stability_margin(&(&plant.a + &l * &plant.c))?;
    if achieved < opts.alpha1 - MARGIN_SLACK {
        return Err(KvError::numerical(format!(
            "observer margin {achieved:.6} falls short of alpha1 = {}",
            opts.alpha1
        )));
    }
    Ok(l)
}

/// State-feedback gains for the internal-model cascade: solve the shifted
/// regulator Riccati equation on
/// `A_s = [[G1, G2 C], [0, A]]`, `B_s = [0; B]`
/// and split `K = -R2^{-1} B_s' Pi` into the internal-model part `K1` and
/// the plant part `K2`.
pub fn design_state_feedback(
    plant: &GalerkinModel,
    im: &InternalModel,
    opts: &SynthesisOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nz = im.dim();
    let m = plant.state_dim();
    let dim = nz + m;
    let mut a_s = DMatrix::zeros(dim, dim);
    a_s.view_mut((0, 0), (nz, nz)).copy_from(&im.g1);
    a_s.view_mut((0, nz), (nz, m)).copy_from(&(&im.g2 * &plant.c));
    a_s.view_mut((nz, nz), (m, m)).copy_from(&plant.a);
    let mut b_s = DMatrix::zeros(dim, 2);
    b_s.view_mut((nz, 0), (m, 2)).copy_from(&plant.b);

    let q0 = weight_or_identity(&opts.q0, nz, "Q0")?;
    let q2 = weight_or_identity(&opts.q2, m, "Q2")?;
    let mut q_s = DMatrix::zeros(dim, dim);
    q_s.view_mut((0, 0), (nz, nz)).copy_from(&(q0.transpose() * &q0));
    q_s.view_mut((nz, nz), (m, m)).copy_from(&(q2.transpose() * &q2));

    let mut a_shift = a_s.clone();
    for i in 0..dim {
        a_shift[(i, i)] += opts.alpha2;
    }
    let pi_mat = solve_care(&a_shift, &b_s, &q_s, &opts.r2)?;
    let r2_chol = opts
        .r2
        .clone()
        .cholesky()
        .ok_or_else(|| KvError::invalid("R2 must be positive definite"))?;
    let k = -(r2_chol.inverse() * b_s.transpose() * &pi_mat);
    let achieved = stability_margin(&(&a_s + &b_s * &k))?;
    if achieved < opts.alpha2 - MARGIN_SLACK {
        return Err(KvError::numerical(format!(
            "state-feedback margin {achieved:.6} falls short of alpha2 = {}",
            opts.alpha2
        )));
    }
    let k1 = k.columns(0, nz).into_owned();
    let k2 = k.columns(nz, m).into_owned();
    Ok((k1, k2))
}

/// Reduced observer part from balanced truncation of
/// `(A + L C, [B, L], K2)` (the feedthrough is zero, so `B + L D = B`).
#[derive(Debug, Clone)]
pub struct ReducedObserver {
    pub al: DMatrix<f64>,
    pub bl: DMatrix<f64>,
    pub lr: DMatrix<f64>,
    pub k2r: DMatrix<f64>,
    /// Hankel singular values of the full observer system.
    pub hankel_sv: Vec<f64>,
}

impl ReducedObserver {
    /// Degenerate observer of order zero (pure internal-model controller).
    pub fn empty() -> Self {
        ReducedObserver {
            al: DMatrix::zeros(0, 0),
            bl: DMatrix::zeros(0, 2),
            lr: DMatrix::zeros(0, 2),
            k2r: DMatrix::zeros(2, 0),
            hankel_sv: vec![],
        }
    }
}

pub fn reduce_observer(
    plant: &GalerkinModel,
    l: &DMatrix<f64>,
    k2: &DMatrix<f64>,
    r: usize,
) -> Result<ReducedObserver> {
    let m = plant.state_dim();
    if l.nrows() != m || l.ncols() != 2 {
        return Err(KvError::dims("observer gain must be 2n x 2"));
    }
    if k2.nrows() != 2 || k2.ncols() != m {
        return Err(KvError::dims("plant feedback gain must be 2 x 2n"));
    }
    let a_obs = &plant.a + l * &plant.c;
    let mut inputs = DMatrix::zeros(m, 4);
    inputs.view_mut((0, 0), (m, 2)).copy_from(&plant.b);
    inputs.view_mut((0, 2), (m, 2)).copy_from(l);
    let sys = StateSpace::new(a_obs, inputs, k2.clone(), DMatrix::zeros(2, 4))?;
    let bt = balanced_truncate(&sys, r)?;
    let bl = bt.reduced.b.columns(0, 2).into_owned();
    let lr = bt.reduced.b.columns(2, 2).into_owned();
    Ok(ReducedObserver {
        al: bt.reduced.a,
        bl,
        lr,
        k2r: bt.reduced.c,
        hankel_sv: bt.hankel_sv,
    })
}

/// The seven-matrix error-feedback controller realization
/// `z1' = G1 z1 + G2 e`
/// `z2' = (AL + BL K2r) z2 + BL K1 z1 - Lr e`
/// `u   = K1 z1 + K2r z2`
/// with input `e = y - y_ref`.
#[derive(Debug, Clone)]
pub struct RegulatorRealization {
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub al: DMatrix<f64>,
    pub bl: DMatrix<f64>,
    pub lr: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2r: DMatrix<f64>,
}

impl RegulatorRealization {
    /// Total controller state dimension.
    pub fn dim(&self) -> usize {
        self.g1.nrows() + self.al.nrows()
    }

    /// Controller state-space matrices `(Ac, Bc, Cc)` over the stacked
    /// state (z1, z2) with input e and output u.
    pub fn realization(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let nz = self.g1.nrows();
        let r = self.al.nrows();
        let dim = nz + r;
        let mut ac = DMatrix::zeros(dim, dim);
        ac.view_mut((0, 0), (nz, nz)).copy_from(&self.g1);
        if r > 0 {
            ac.view_mut((nz, 0), (r, nz))
                .copy_from(&(&self.bl * &self.k1));
            ac.view_mut((nz, nz), (r, r))
                .copy_from(&(&self.al + &self.bl * &self.k2r));
        }
        let mut bc = DMatrix::zeros(dim, 2);
        bc.view_mut((0, 0), (nz, 2)).copy_from(&self.g2);
        if r > 0 {
            bc.view_mut((nz, 0), (r, 2)).copy_from(&(-&self.lr));
        }
        let mut cc = DMatrix::zeros(2, dim);
        cc.view_mut((0, 0), (2, nz)).copy_from(&self.k1);
        if r > 0 {
            cc.view_mut((0, nz), (2, r)).copy_from(&self.k2r);
        }
        (ac, bc, cc)
    }
}

pub fn assemble_regulator(
    im: &InternalModel,
    reduced: &ReducedObserver,
    k1: &DMatrix<f64>,
) -> Result<RegulatorRealization> {
    let nz = im.dim();
    let r = reduced.al.nrows();
    if reduced.al.ncols() != r {
        return Err(KvError::dims("reduced observer state matrix must be square"));
    }
    if k1.nrows() != 2 || k1.ncols() != nz {
        return Err(KvError::dims(format!(
            "K1 must be 2 x {nz}, got {} x {}",
            k1.nrows(),
            k1.ncols()
        )));
    }
    if reduced.bl.nrows() != r || reduced.bl.ncols() != 2 {
        return Err(KvError::dims("BL must be r x 2"));
    }
    if reduced.lr.nrows() != r || reduced.lr.ncols() != 2 {
        return Err(KvError::dims("Lr must be r x 2"));
    }
    if reduced.k2r.nrows() != 2 || reduced.k2r.ncols() != r {
        return Err(KvError::dims("K2r must be 2 x r"));
    }
    Ok(RegulatorRealization {
        g1: im.g1.clone(),
        g2: im.g2.clone(),
        al: reduced.al.clone(),
        bl: reduced.bl.clone(),
        lr: reduced.lr.clone(),
        k1: k1.clone(),
        k2r: reduced.k2r.clone(),
    })
}

/// Transfer function of the Galerkin plant at a complex point:
/// `P(s) = C (s I - A)^{-1} B` (no feedthrough).
pub fn transfer_function_value(plant: &GalerkinModel, lambda: Complex64) -> Result<DMatrix<Complex64>> {
    let m = plant.state_dim();
    let mut resolvent = DMatrix::from_fn(m, m, |i, j| Complex64::new(-plant.a[(i, j)], 0.0));
    for i in 0..m {
        resolvent[(i, i)] += lambda;
    }
    let bc = plant.b.map(|x| Complex64::new(x, 0.0));
    let x = resolvent
        .lu()
        .solve(&bc)
        .ok_or_else(|| KvError::numerical(format!("resolvent singular at {lambda}")))?;
    let cc = plant.c.map(|x| Complex64::new(x, 0.0));
    Ok(cc * x)
}

/// Per-frequency smallest singular values of `P(i w_k)`.
#[derive(Debug, Clone)]
pub struct ZeroCheckReport {
    pub freqs: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub threshold: f64,
}

impl ZeroCheckReport {
    pub fn pass(&self) -> bool {
        self.sigma_min.iter().all(|&s| s > self.threshold)
    }
}

/// Evaluate sigma_min(P(i w_k)) for every exosystem frequency; the design
/// requires all of them to clear the threshold (no transmission zeros at
/// the tracked frequencies).
pub fn check_transmission_zeros(
    plant: &GalerkinModel,
    freqs: &[f64],
    threshold: f64,
) -> Result<ZeroCheckReport> {
    let mut sigma_min = Vec::with_capacity(freqs.len());
    for &w in freqs {
        let p = transfer_function_value(plant, Complex64::new(0.0, w))?;
        let svd = nalgebra::linalg::SVD::new(p, false, false);
        let smin = svd
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        sigma_min.push(smin);
    }
    Ok(ZeroCheckReport {
        freqs: freqs.to_vec(),
        sigma_min,
        threshold,
    })
}

/// Internal-model-only controller `z' = G1 z + G2 e`, `u = K z` with the
/// gain assembled from inverse transfer-function values:
/// `K = -eps [P(0)^{-1}, Re P(i w_1)^{-1}, Im P(i w_1)^{-1}, ...]`.
///
/// The leading sign makes the loop negative feedback for the error
/// convention `e = y - y_ref`; with the opposite sign the zero-frequency
/// internal-model eigenvalues move into the right half-plane for every
/// eps > 0.
#[derive(Debug, Clone)]
pub struct LowGainController {
    pub im: InternalModel,
    pub k: DMatrix<f64>,
    pub eps: f64,
}

pub fn build_low_gain(
    plant: &GalerkinModel,
    im: &InternalModel,
    eps: f64,
) -> Result<LowGainController> {
    if im.outputs != 2 {
        return Err(KvError::invalid("low-gain construction expects 2 outputs"));
    }
    let nz = im.dim();
    let mut k = DMatrix::zeros(2, nz);
    let mut col = 0usize;
    for (idx, &w) in im.freqs.iter().enumerate() {
        let p = transfer_function_value(plant, Complex64::new(0.0, w))?;
        let pinv = invert_2x2_complex(&p).ok_or_else(|| {
            KvError::numerical(format!("P(i{w}) is singular; transmission zero at this frequency"))
        })?;
        if idx == 0 {
            let re = pinv.map(|z| z.re);
            k.view_mut((0, 0), (2, 2)).copy_from(&(-eps * re));
            col += 2;
        } else {
            let re = pinv.map(|z| z.re);
            let imp = pinv.map(|z| z.im);
            k.view_mut((0, col), (2, 2)).copy_from(&(-eps * re));
            k.view_mut((0, col + 2), (2, 2)).copy_from(&(-eps * imp));
            col += 4;
        }
    }
    Ok(LowGainController {
        im: im.clone(),
        k,
        eps,
    })
}

fn invert_2x2_complex(p: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let det = p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)];
    if det.norm() < 1e-300 {
        return None;
    }
    let inv_det = det.inv();
    Some(DMatrix::from_row_slice(
        2,
        2,
        &[
            p[(1, 1)] * inv_det,
            -p[(0, 1)] * inv_det,
            -p[(1, 0)] * inv_det,
            p[(0, 0)] * inv_det,
        ],
    ))
}

/// Closed-loop dynamics matrix of the low-gain loop (plant plus internal
/// model), used for margin evaluation and eps tuning.
pub fn low_gain_loop_matrix(plant: &GalerkinModel, ctrl: &LowGainController) -> DMatrix<f64> {
    let m = plant.state_dim();
    let nz = ctrl.im.dim();
    let mut acl = DMatrix::zeros(m + nz, m + nz);
    acl.view_mut((0, 0), (m, m)).copy_from(&plant.a);
    acl.view_mut((0, m), (m, nz)).copy_from(&(&plant.b * &ctrl.k));
    acl.view_mut((m, 0), (nz, m))
        .copy_from(&(&ctrl.im.g2 * &plant.c));
    acl.view_mut((m, m), (nz, nz)).copy_from(&ctrl.im.g1);
    acl
}

/// Closed-loop stability margin of the low-gain controller at a given eps.
pub fn low_gain_margin(plant: &GalerkinModel, im: &InternalModel, eps: f64) -> Result<f64> {
    let ctrl = build_low_gain(plant, im, eps)?;
    stability_margin(&low_gain_loop_matrix(plant, &ctrl))
}

/// Maximize the low-gain closed-loop stability margin over eps in
/// `(0, eps_max]`: log-spaced grid scan followed by golden-section
/// refinement around the best grid point. Returns `(eps_star, margin)`;
/// a nonpositive margin means no eps in the range stabilizes the loop.
pub fn tune_epsilon(
    plant: &GalerkinModel,
    im: &InternalModel,
    eps_min: f64,
    eps_max: f64,
    grid_points: usize,
) -> Result<(f64, f64)> {
    if !(eps_min > 0.0 && eps_max > eps_min) {
        return Err(KvError::invalid("need 0 < eps_min < eps_max"));
    }
    let n = grid_points.max(8);
    let log_min = eps_min.ln();
    let log_max = eps_max.ln();
    let eps_at = |i: usize| (log_min + (log_max - log_min) * i as f64 / (n - 1) as f64).exp();
    let mut best_i = 0usize;
    let mut best_margin = f64::NEG_INFINITY;
    let mut margins = Vec::with_capacity(n);
    for i in 0..n {
        let m = low_gain_margin(plant, im, eps_at(i))?;
        margins.push(m);
        if m > best_margin {
            best_margin = m;
            best_i = i;
        }
    }
    // golden-section refinement on the bracketing interval
    let lo = if best_i == 0 { eps_at(0) } else { eps_at(best_i - 1) };
    let hi = if best_i == n - 1 {
        eps_at(n - 1)
    } else {
        eps_at(best_i + 1)
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = low_gain_margin(plant, im, x1)?;
    let mut f2 = low_gain_margin(plant, im, x2)?;
    for _ in 0..40 {
        if (b - a).abs() <= 1e-4 * b.abs() {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = low_gain_margin(plant, im, x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = low_gain_margin(plant, im, x2)?;
        }
    }
    let (mut eps_star, mut margin_star) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if best_margin > margin_star {
        eps_star = eps_at(best_i);
        margin_star = best_margin;
    }
    Ok((eps_star, margin_star))
}

/// Diagnostics of a complete synthesis run.
#[derive(Debug, Clone)]
pub struct RegulatorDesign {
    pub regulator: RegulatorRealization,
    pub internal_model: InternalModel,
    /// Full-order observer gain.
    pub observer_gain: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub hankel_sv: Vec<f64>,
    pub zero_report: ZeroCheckReport,
    /// Stability margin of A + L C on the design plant.
    pub observer_margin: f64,
    /// Stability margin of A_s + B_s K on the design plant.
    pub feedback_margin: f64,
    /// Relative residuals of the two Riccati solves.
    pub filter_residual: f64,
    pub regulator_residual: f64,
}

/// Run the full synthesis pipeline on a design plant: internal model,
/// transmission-zero check, the two Riccati gains, observer reduction and
/// final assembly.
pub fn synthesize_regulator(
    plant: &GalerkinModel,
    opts: &SynthesisOptions,
) -> Result<RegulatorDesign> {
    opts.validate()?;
    let im = build_internal_model(&opts.freqs, 2)?;
    let zero_report = check_transmission_zeros(plant, &opts.freqs, opts.zero_tol)?;
    if !zero_report.pass() {
        let worst = zero_report
            .sigma_min
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        return Err(KvError::numerical(format!(
            "transmission-zero check failed: min sigma_min(P(i w_k)) = {worst:.3e} \
             at threshold {:.1e}",
            opts.zero_tol
        )));
    }
    let l = design_observer_gain(plant, opts)?;
    let (k1, k2) = design_state_feedback(plant, &im, opts)?;
    let reduced = reduce_observer(plant, &l, &k2, opts.reduction_order)?;
    let regulator = assemble_regulator(&im, &reduced, &k1)?;

    let observer_margin = stability_margin(&(&plant.a + &l * &plant.c))?;
    let nz = im.dim();
    let m = plant.state_dim();
    let mut a_s = DMatrix::zeros(nz + m, nz + m);
    a_s.view_mut((0, 0), (nz, nz)).copy_from(&im.g1);
    a_s.view_mut((0, nz), (nz, m)).copy_from(&(&im.g2 * &plant.c));
    a_s.view_mut((nz, nz), (m, m)).copy_from(&plant.a);
    let mut b_s = DMatrix::zeros(nz + m, 2);
    b_s.view_mut((nz, 0), (m, 2)).copy_from(&plant.b);
    let mut k_full = DMatrix::zeros(2, nz + m);
    k_full.view_mut((0, 0), (2, nz)).copy_from(&k1);
    k_full.view_mut((0, nz), (2, m)).copy_from(&k2);
    let feedback_margin = stability_margin(&(&a_s + &b_s * &k_full))?;

    // residuals re-evaluated on the exact synthesis problems
    let mdim = plant.state_dim();
    let q1 = weight_or_identity(&opts.q1, mdim, "Q1")?;
    let mut a_shift1 = plant.a.clone();
    for i in 0..mdim {
        a_shift1[(i, i)] += opts.alpha1;
    }
    let sigma = {
        let q1q1t = &q1 * q1.transpose();
        solve_care(&a_shift1.transpose(), &plant.c.transpose(), &q1q1t, &opts.r1)?
    };
    let filter_residual = care_relative_residual(
        &a_shift1.transpose(),
        &plant.c.transpose(),
        &(&q1 * q1.transpose()),
        &opts.r1,
        &sigma,
    )?;
    let q0 = weight_or_identity(&opts.q0, nz, "Q0")?;
    let q2w = weight_or_identity(&opts.q2, mdim, "Q2")?;
    let mut q_s = DMatrix::zeros(nz + mdim, nz + mdim);
    q_s.view_mut((0, 0), (nz, nz)).copy_from(&(q0.transpose() * &q0));
    q_s.view_mut((nz, nz), (mdim, mdim))
        .copy_from(&(q2w.transpose() * &q2w));
    let mut a_shift2 = a_s.clone();
    for i in 0..nz + mdim {
        a_shift2[(i, i)] += opts.alpha2;
    }
    let pi_mat = solve_care(&a_shift2, &b_s, &q_s, &opts.r2)?;
    let regulator_residual = care_relative_residual(&a_shift2, &b_s, &q_s, &opts.r2, &pi_mat)?;

    Ok(RegulatorDesign {
        regulator,
        internal_model: im,
        observer_gain: l,
        k1,
        k2,
        hankel_sv: reduced.hankel_sv.clone(),
        zero_report,
        observer_margin,
        feedback_margin,
        filter_residual,
        regulator_residual,
    })
}
