//! Plant/controller interconnection, implicit LTI time stepping and
//! tracking metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{KvError, Result};
use crate::galerkin::GalerkinModel;
use crate::signals::{TriangleWave, TrigSignal};
use crate::synthesis::{low_gain_loop_matrix, LowGainController, RegulatorRealization};

/// Either controller flavor accepted by the interconnection.
#[derive(Debug, Clone)]
pub enum Controller {
    Regulator(RegulatorRealization),
    LowGain(LowGainController),
}

impl Controller {
    pub fn state_dim(&self) -> usize {
        match self {
            Controller::Regulator(r) => r.dim(),
            Controller::LowGain(lg) => lg.im.dim(),
        }
    }

    /// Controller matrices (Ac, Bc, Cc): `z' = Ac z + Bc e`, `u = Cc z`.
    pub fn realization(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        match self {
            Controller::Regulator(r) => r.realization(),
            Controller::LowGain(lg) => (lg.im.g1.clone(), lg.im.g2.clone(), lg.k.clone()),
        }
    }
}

/// Closed-loop system over the stacked state (x, z) driven by the
/// exogenous input s = (w_dist, y_ref).
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub acl: DMatrix<f64>,
    pub ein: DMatrix<f64>,
    /// Error output: e = cerr x + derr s.
    pub cerr: DMatrix<f64>,
    pub derr: DMatrix<f64>,
    /// Measured output map y = cy x.
    pub cy: DMatrix<f64>,
    /// Control output map u = cu x.
    pub cu: DMatrix<f64>,
    pub plant_states: usize,
    pub n_dist: usize,
}

impl ClosedLoop {
    pub fn dim(&self) -> usize {
        self.acl.nrows()
    }
}

/// Interconnect a (possibly higher-resolution) plant with a controller:
/// the controller sees `e = y - y_ref`, the plant sees `u` and the
/// disturbance.
pub fn assemble_closed_loop(plant: &GalerkinModel, ctrl: &Controller) -> Result<ClosedLoop> {
    let (ac, bc, cc) = ctrl.realization();
    let m = plant.state_dim();
    let nc = ac.nrows();
    if cc.nrows() != plant.b.ncols() {
        return Err(KvError::dims(
            "controller output count does not match plant input count",
        ));
    }
    if bc.ncols() != plant.c.nrows() {
        return Err(KvError::dims(
            "controller input count does not match plant output count",
        ));
    }
    let n_dist = plant.bd.ncols();
    let dim = m + nc;
    let mut acl = DMatrix::zeros(dim, dim);
    acl.view_mut((0, 0), (m, m)).copy_from(&plant.a);
    acl.view_mut((0, m), (m, nc)).copy_from(&(&plant.b * &cc));
    acl.view_mut((m, 0), (nc, m)).copy_from(&(&bc * &plant.c));
    acl.view_mut((m, m), (nc, nc)).copy_from(&ac);

    let mut ein = DMatrix::zeros(dim, n_dist + 2);
    ein.view_mut((0, 0), (m, n_dist)).copy_from(&plant.bd);
    ein.view_mut((m, n_dist), (nc, 2)).copy_from(&(-&bc));

    let mut cy = DMatrix::zeros(2, dim);
    cy.view_mut((0, 0), (2, m)).copy_from(&plant.c);
    let cerr = cy.clone();
    let mut derr = DMatrix::zeros(2, n_dist + 2);
    derr[(0, n_dist)] = -1.0;
    derr[(1, n_dist + 1)] = -1.0;
    let mut cu = DMatrix::zeros(2, dim);
    cu.view_mut((0, m), (2, nc)).copy_from(&cc);

    let cl = ClosedLoop {
        acl,
        ein,
        cerr,
        derr,
        cy,
        cu,
        plant_states: m,
        n_dist,
    };
    // the low-gain path must agree with its margin-evaluation matrix
    if let Controller::LowGain(lg) = ctrl {
        debug_assert_eq!(cl.acl, low_gain_loop_matrix(plant, lg));
    }
    Ok(cl)
}

/// Reference signal alternatives for the tracking experiments.
#[derive(Debug, Clone)]
pub enum ReferenceSignal {
    /// In-class finite trigonometric sum (two components).
    Trig(TrigSignal),
    /// 2-periodic triangle in the first component, zero in the second.
    Triangle(TriangleWave),
}

impl ReferenceSignal {
    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            ReferenceSignal::Trig(s) => s.eval(t),
            ReferenceSignal::Triangle(w) => DVector::from_vec(vec![w.eval(t), 0.0]),
        }
    }

    /// Amplitude scale used by relative error criteria.
    pub fn amplitude(&self) -> f64 {
        match self {
            ReferenceSignal::Trig(s) => s.amplitude(),
            ReferenceSignal::Triangle(w) => w.amplitude.abs(),
        }
    }
}

/// Exogenous inputs of a simulation run.
#[derive(Debug, Clone)]
pub struct ExogenousInput {
    pub w_dist: TrigSignal,
    pub y_ref: ReferenceSignal,
}

impl ExogenousInput {
    fn stacked(&self, t: f64, n_dist: usize) -> Result<DVector<f64>> {
        let w = self.w_dist.eval(t);
        if w.len() != n_dist {
            return Err(KvError::dims(format!(
                "disturbance has {} components, plant expects {n_dist}",
                w.len()
            )));
        }
        let r = self.y_ref.eval(t);
        let mut s = DVector::zeros(n_dist + 2);
        s.rows_mut(0, n_dist).copy_from(&w);
        s.rows_mut(n_dist, 2).copy_from(&r);
        Ok(s)
    }
}

/// Sampled trajectories of a closed-loop run.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub y: Vec<[f64; 2]>,
    pub y_ref: Vec<[f64; 2]>,
    pub u: Vec<[f64; 2]>,
    pub e: Vec<[f64; 2]>,
    pub err_norm: Vec<f64>,
    /// Decimated full-state snapshots (time, stacked state) for deflection
    /// reconstruction; roughly 20 per time unit.
    pub snapshots: Vec<(f64, DVector<f64>)>,
}

impl SimulationResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Fixed-step trapezoidal integration of
/// `x' = Acl x + Ein s(t)`
/// from `x0` over `[0, horizon]`. The one-step map is A-stable, so the
/// stiff Kelvin-Voigt modes are handled at any step size; exogenous inputs
/// are sampled analytically at the stage times.
pub fn simulate(
    cl: &ClosedLoop,
    exo: &ExogenousInput,
    horizon: f64,
    step: f64,
    x0: &DVector<f64>,
) -> Result<SimulationResult> {
    if !(step > 0.0) || !(horizon >= step) {
        return Err(KvError::invalid(format!(
            "need 0 < step <= horizon (got step {step}, horizon {horizon})"
        )));
    }
    let dim = cl.dim();
    if x0.len() != dim {
        return Err(KvError::dims(format!(
            "initial state has length {}, closed loop has dimension {dim}",
            x0.len()
        )));
    }
    let steps = (horizon / step).round() as usize;
    let ident = DMatrix::identity(dim, dim);
    let m_minus = &ident - &cl.acl * (step / 2.0);
    let m_plus = &ident + &cl.acl * (step / 2.0);
    let lu = m_minus.lu();
    // a singular implicit step cannot happen for Hurwitz Acl at small h,
    // but the factorization is checked anyway
    if lu.determinant() == 0.0 {
        return Err(KvError::numerical(
            "implicit trapezoidal step is singular; reduce the step size",
        ));
    }

    let snap_every = (0.05 / step).round().max(1.0) as usize;
    let mut x = x0.clone();
    let mut s_now = exo.stacked(0.0, cl.n_dist)?;
    let count = steps + 1;
    let mut out = SimulationResult {
        times: Vec::with_capacity(count),
        y: Vec::with_capacity(count),
        y_ref: Vec::with_capacity(count),
        u: Vec::with_capacity(count),
        e: Vec::with_capacity(count),
        err_norm: Vec::with_capacity(count),
        snapshots: Vec::new(),
    };
    let record = |t: f64, x: &DVector<f64>, s: &DVector<f64>, out: &mut SimulationResult| {
        let y = &cl.cy * x;
        let e = &cl.cerr * x + &cl.derr * s;
        let u = &cl.cu * x;
        let r = exo.y_ref.eval(t);
        out.times.push(t);
        out.y.push([y[0], y[1]]);
        out.y_ref.push([r[0], r[1]]);
        out.u.push([u[0], u[1]]);
        out.e.push([e[0], e[1]]);
        out.err_norm.push((e[0] * e[0] + e[1] * e[1]).sqrt());
    };
    record(0.0, &x, &s_now, &mut out);
    out.snapshots.push((0.0, x.clone()));
    for k in 0..steps {
        let t_next = (k + 1) as f64 * step;
        let s_next = exo.stacked(t_next, cl.n_dist)?;
        let rhs = &m_plus * &x + (&cl.ein * (&s_now + &s_next)) * (step / 2.0);
        x = lu
            .solve(&rhs)
            .ok_or_else(|| KvError::numerical("implicit step solve failed"))?;
        s_now = s_next;
        record(t_next, &x, &s_now, &mut out);
        if (k + 1) % snap_every == 0 {
            out.snapshots.push((t_next, x.clone()));
        }
    }
    Ok(out)
}

/// Summary statistics of a tracking run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ErrorMetrics {
    /// Largest error norm over the whole run.
    pub peak_error: f64,
    /// Mean error norm over the final reference period.
    pub terminal_error: f64,
    /// Exponential decay rate fitted on the transient window
    /// (infinite when the error is identically zero).
    pub decay_rate: f64,
}

/// Least-squares decay fit on log error over the transient window: from
/// the error peak down to where the trajectory flattens into its terminal
/// plateau.
pub fn error_metrics(res: &SimulationResult, period: f64) -> Result<ErrorMetrics> {
    if res.is_empty() {
        return Err(KvError::invalid("empty simulation result"));
    }
    let t_end = *res.times.last().unwrap();
    let window_start = (t_end - period).max(0.0);
    let tail: Vec<f64> = res
        .times
        .iter()
        .zip(&res.err_norm)
        .filter(|(t, _)| **t >= window_start)
        .map(|(_, e)| *e)
        .collect();
    let terminal_error = tail.iter().sum::<f64>() / tail.len() as f64;

    let (peak_idx, peak_error) = res
        .err_norm
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    if peak_error == 0.0 {
        return Ok(ErrorMetrics {
            peak_error,
            terminal_error,
            decay_rate: f64::INFINITY,
        });
    }
    let floor = (10.0 * terminal_error).max(peak_error * 1e-12);
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for i in peak_idx..res.len() {
        let e = res.err_norm[i];
        if e <= floor {
            break;
        }
        ts.push(res.times[i]);
        logs.push(e.ln());
    }
    if ts.len() < 8 {
        // no usable transient: already at the plateau
        return Ok(ErrorMetrics {
            peak_error,
            terminal_error,
            decay_rate: f64::INFINITY,
        });
    }
    let n = ts.len() as f64;
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_l = logs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stl = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        stt += (t - mean_t) * (t - mean_t);
        stl += (t - mean_t) * (l - mean_l);
    }
    let slope = stl / stt;
    Ok(ErrorMetrics {
        peak_error,
        terminal_error,
        decay_rate: -slope,
    })
}
