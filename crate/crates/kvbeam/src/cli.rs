//! Subcommand implementations behind the command-line front end.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure,
//! 4 I/O failure.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_loop::{
    assemble_closed_loop, error_metrics, simulate, Controller, ExogenousInput, ReferenceSignal,
};
use crate::config::ExperimentConfig;
use crate::error::{KvError, Result};
use crate::galerkin::{
    assemble_f, assemble_m, form_value, form_value_symmetric, norm_equivalence_beta, oracle_f,
    oracle_m, GalerkinModel,
};
use crate::io;
use crate::matrixeq::{eigenvalues, solve_lyapunov, stability_margin};
use crate::synthesis::{
    build_internal_model, build_low_gain, check_transmission_zeros, synthesize_regulator,
    tune_epsilon,
};

pub fn exit_code(err: &KvError) -> i32 {
    match err {
        KvError::InvalidArgument(_) | KvError::DimensionMismatch(_) => 2,
        KvError::Numerical(_) => 3,
        KvError::Io(_) | KvError::Parse(_) => 4,
    }
}

#[derive(Debug, Serialize)]
struct DesignSummary {
    controller_dim: usize,
    internal_model_dim: usize,
    reduction_order: usize,
    observer_margin: f64,
    feedback_margin: f64,
    closed_loop_margin: f64,
    closed_loop_dim: usize,
    filter_residual: f64,
    regulator_residual: f64,
    hankel_sv: Vec<f64>,
    zero_check_freqs: Vec<f64>,
    zero_check_sigma_min: Vec<f64>,
    zero_check_threshold: f64,
}

/// Run the synthesis pipeline, export the controller matrices and a JSON
/// summary, and report the closed-loop margin against the simulation-grade
/// plant.
pub fn cmd_design(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = config.beam_parameters()?;
    let design_plant = GalerkinModel::assemble(&params, config.discretization.n_design)?;
    let sim_plant = GalerkinModel::assemble(&params, config.discretization.n_sim)?;
    let opts = config.synthesis_options()?;
    let dsg = synthesize_regulator(&design_plant, &opts)?;

    let cl = assemble_closed_loop(&sim_plant, &Controller::Regulator(dsg.regulator.clone()))?;
    let cl_eigs = eigenvalues(&cl.acl)?;
    let closed_loop_margin = -cl_eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if closed_loop_margin <= crate::matrixeq::HURWITZ_TOL {
        return Err(KvError::numerical(format!(
            "closed loop against the n={} plant is not exponentially stable \
             (margin {closed_loop_margin:.3e})",
            config.discretization.n_sim
        )));
    }

    std::fs::create_dir_all(out)?;
    io::write_regulator(&out.join("controller"), &dsg.regulator)?;
    io::write_eigenvalues_csv(&out.join("closed_loop_eigenvalues.csv"), &cl_eigs)?;
    let summary = DesignSummary {
        controller_dim: dsg.regulator.dim(),
        internal_model_dim: dsg.internal_model.dim(),
        reduction_order: opts.reduction_order,
        observer_margin: dsg.observer_margin,
        feedback_margin: dsg.feedback_margin,
        closed_loop_margin,
        closed_loop_dim: cl.dim(),
        filter_residual: dsg.filter_residual,
        regulator_residual: dsg.regulator_residual,
        hankel_sv: dsg.hankel_sv.clone(),
        zero_check_freqs: dsg.zero_report.freqs.clone(),
        zero_check_sigma_min: dsg.zero_report.sigma_min.clone(),
        zero_check_threshold: dsg.zero_report.threshold,
    };
    write_json(&out.join("controller").join("summary.json"), &summary)?;
    println!(
        "controller dimension {} (internal model {} + observer {}), \
         closed-loop margin {closed_loop_margin:.4} at dimension {}",
        dsg.regulator.dim(),
        dsg.internal_model.dim(),
        opts.reduction_order,
        cl.dim()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    closed_loop_margin: f64,
    peak_error: f64,
    terminal_error: f64,
    decay_rate: f64,
    reference_amplitude: f64,
    regulated: bool,
}

/// Simulate the closed loop from controller files and emit the trajectory
/// CSV, metrics JSON and the per-figure plot scripts.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path, controller_dir: &Path) -> Result<()> {
    let params = config.beam_parameters()?;
    let sim_plant = GalerkinModel::assemble(&params, config.discretization.n_sim)?;
    let regulator = io::read_regulator(controller_dir)?;
    let im_dim_expected = 2 * (2 * config.frequencies.count + 1);
    if regulator.g1.nrows() != im_dim_expected {
        return Err(KvError::dims(format!(
            "controller internal model has dimension {}, config expects {im_dim_expected}",
            regulator.g1.nrows()
        )));
    }
    let cl = assemble_closed_loop(&sim_plant, &Controller::Regulator(regulator))?;
    let exo = ExogenousInput {
        w_dist: config.disturbance_signal()?,
        y_ref: config.reference_signal()?,
    };
    let res = simulate(
        &cl,
        &exo,
        config.simulation.horizon,
        config.simulation.step,
        &DVector::zeros(cl.dim()),
    )?;
    let period = 2.0 * std::f64::consts::PI / config.frequencies.base;
    let metrics = error_metrics(&res, period)?;
    let margin = stability_margin(&cl.acl)?;
    let amplitude = exo.y_ref.amplitude();

    std::fs::create_dir_all(out)?;
    io::write_trajectory_csv(&out.join("trajectory.csv"), &res)?;
    io::write_deflection_csv(&out.join("deflection.csv"), &sim_plant, &res.snapshots, 65)?;
    io::write_eigenvalues_csv(
        &out.join("closed_loop_eigenvalues.csv"),
        &eigenvalues(&cl.acl)?,
    )?;
    io::write_plot_scripts(out)?;
    let summary = SimulateSummary {
        closed_loop_margin: margin,
        peak_error: metrics.peak_error,
        terminal_error: metrics.terminal_error,
        decay_rate: metrics.decay_rate,
        reference_amplitude: amplitude,
        regulated: metrics.terminal_error
            <= config.simulation.reg_tol * amplitude.max(f64::MIN_POSITIVE),
    };
    write_json(&out.join("metrics.json"), &summary)?;
    println!(
        "simulated {}s at step {}: peak error {:.4e}, terminal {:.4e}, decay rate {:.3}",
        config.simulation.horizon,
        config.simulation.step,
        metrics.peak_error,
        metrics.terminal_error,
        metrics.decay_rate
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    reduced_order_margin: f64,
    low_gain_margin: f64,
    low_gain_eps: f64,
    eps_star: Option<f64>,
    eps_star_margin: Option<f64>,
    reduced_order_decay_rate: f64,
    low_gain_decay_rate: f64,
    steady_state_control_rel_diff: f64,
    early_window_control_ratio: f64,
}

/// Design both controllers, run them on the same in-class reference and
/// disturbance, and compare margins, decay rates and control action.
pub fn cmd_compare(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = config.beam_parameters()?;
    let design_plant = GalerkinModel::assemble(&params, config.discretization.n_design)?;
    let sim_plant = GalerkinModel::assemble(&params, config.discretization.n_sim)?;
    let opts = config.synthesis_options()?;
    let dsg = synthesize_regulator(&design_plant, &opts)?;
    let im_lg = build_internal_model(&config.low_gain_freqs(), 2)?;
    let lg = build_low_gain(&design_plant, &im_lg, config.low_gain.eps)?;

    let (eps_star, eps_star_margin) = if config.low_gain.tune {
        let (e, m) = tune_epsilon(
            &design_plant,
            &im_lg,
            config.low_gain.eps_min,
            config.low_gain.eps_max,
            config.low_gain.grid,
        )?;
        (Some(e), Some(m))
    } else {
        (None, None)
    };

    let cl_rom = assemble_closed_loop(&sim_plant, &Controller::Regulator(dsg.regulator.clone()))?;
    let cl_lg = assemble_closed_loop(&sim_plant, &Controller::LowGain(lg.clone()))?;
    let margin_rom = stability_margin(&cl_rom.acl)?;
    let margin_lg = stability_margin(&cl_lg.acl)?;

    let reference = config
        .compare
        .reference
        .to_signal(config.frequencies.base, 2, "compare reference")?;
    let exo = ExogenousInput {
        w_dist: config.disturbance_signal()?,
        y_ref: ReferenceSignal::Trig(reference),
    };
    let (horizon, step) = (config.compare.horizon, config.compare.step);
    let res_rom = simulate(&cl_rom, &exo, horizon, step, &DVector::zeros(cl_rom.dim()))?;
    let res_lg = simulate(&cl_lg, &exo, horizon, step, &DVector::zeros(cl_lg.dim()))?;
    let period = 2.0 * std::f64::consts::PI / config.frequencies.base;
    let met_rom = error_metrics(&res_rom, period)?;
    let met_lg = error_metrics(&res_lg, period)?;

    // steady-state control agreement over the final reference period
    let n_last = (period / step).round() as usize;
    let len = res_rom.len();
    let mut diff: f64 = 0.0;
    let mut scale: f64 = f64::MIN_POSITIVE;
    for i in len.saturating_sub(n_last + 1)..len {
        for c in 0..2 {
            diff = diff.max((res_rom.u[i][c] - res_lg.u[i][c]).abs());
            scale = scale.max(res_rom.u[i][c].abs());
        }
    }
    // early-window control action ratio (L2 over [0, early_window])
    let n_early = (config.compare.early_window / step).round() as usize;
    let l2 = |res: &crate::closed_loop::SimulationResult| -> f64 {
        res.u
            .iter()
            .take(n_early.min(res.len()))
            .map(|u| u[0] * u[0] + u[1] * u[1])
            .sum::<f64>()
            .sqrt()
    };
    let early_ratio = l2(&res_lg) / l2(&res_rom).max(f64::MIN_POSITIVE);

    std::fs::create_dir_all(out)?;
    io::write_trajectory_csv(&out.join("trajectory_reduced_order.csv"), &res_rom)?;
    io::write_trajectory_csv(&out.join("trajectory_low_gain.csv"), &res_lg)?;
    io::write_regulator(&out.join("controller"), &dsg.regulator)?;
    io::write_low_gain(&out.join("low_gain"), &lg)?;
    let summary = CompareSummary {
        reduced_order_margin: margin_rom,
        low_gain_margin: margin_lg,
        low_gain_eps: config.low_gain.eps,
        eps_star,
        eps_star_margin,
        reduced_order_decay_rate: met_rom.decay_rate,
        low_gain_decay_rate: met_lg.decay_rate,
        steady_state_control_rel_diff: diff / scale,
        early_window_control_ratio: early_ratio,
    };
    write_json(&out.join("compare.json"), &summary)?;
    println!(
        "margins: reduced-order {margin_rom:.4}, low-gain {margin_lg:.4}; \
         steady-state control difference {:.3e} relative; early-window ratio {early_ratio:.3}",
        diff / scale
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct VerifyCheck {
    name: String,
    passed: bool,
    skipped: bool,
    measured: f64,
    threshold: f64,
    note: String,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    seed: u64,
    checks: Vec<VerifyCheck>,
    all_passed: bool,
}

fn check(name: &str, measured: f64, threshold: f64, note: &str) -> VerifyCheck {
    VerifyCheck {
        name: name.to_string(),
        passed: measured <= threshold,
        skipped: false,
        measured,
        threshold,
        note: note.to_string(),
    }
}

/// Oracle and property-test report: Lemma 2 matrix oracles, the
/// coercivity/boundedness suites, Riccati residuals, the Lyapunov
/// Kronecker oracle and the transmission-zero report. Report-only; the
/// process exits nonzero when any check fails.
pub fn cmd_verify(
    config: &ExperimentConfig,
    out: Option<&Path>,
    seed: u64,
    controller_dir: Option<&Path>,
) -> Result<bool> {
    let params = config.beam_parameters()?;
    let n = config.discretization.n_design;
    let mut checks = Vec::new();

    // Lemma 2 closed forms against the quadrature/orthogonality oracles
    let m = assemble_m(n);
    let f = assemble_f(n);
    let mo = oracle_m(n);
    let fo = oracle_f(n);
    let scale_m = m.amax();
    let scale_f = f.amax();
    let m_err = (&m - &mo).amax() / scale_m;
    let f_err = (&f - &fo).amax() / scale_f;
    checks.push(check("lemma2_mass_oracle", m_err, 1e-8, "max relative entry error"));
    checks.push(check("lemma2_stiffness_oracle", f_err, 1e-8, "max relative entry error"));
    let m00_err = (m[(0, 0)] - 35.0 * std::f64::consts::PI / 18.0).abs();
    checks.push(check("mass_00_exact", m00_err, 1e-12, "absolute error vs 35*pi/18"));

    // Lemma 1 suites over 1000 random Galerkin elements
    let model = GalerkinModel::assemble(&params, n)?;
    let grams = model.grams()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if params.d_kv == 0.0 {
        checks.push(VerifyCheck {
            name: "lemma1_coercivity".into(),
            passed: true,
            skipped: true,
            measured: 0.0,
            threshold: 0.0,
            note: "skipped: d_kv = 0 makes the coercivity constant q2 = 0 (degenerate)".into(),
        });
        log::warn!("coercivity check skipped: d_kv = 0 degenerates the Lemma 1 constants");
    } else {
        let lam = params.d_kv / params.e_modulus;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let phi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let phi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a = form_value_symmetric(&model, &grams, (&phi1, &phi2), (&phi1, &phi2))?;
            let w_sq = (phi2.transpose() * &model.mass * &phi2)[(0, 0)];
            let lower = lam * grams.v_norm_sq(&phi1, &phi2) - lam * grams.x_norm_sq(&phi1, &phi2)
                + params.d_v * w_sq;
            worst = worst.max((lower - a) / a.abs().max(1.0));
        }
        checks.push(check(
            "lemma1_coercivity",
            worst,
            1e-8,
            "worst coercivity gap over 1000 samples",
        ));
    }
    {
        let beta = norm_equivalence_beta(&model.mass, &grams.g_v0)?;
        let q1 = 2.0 + params.d_kv / params.e_modulus + params.d_v * beta * beta;
        let mut worst: f64 = 0.0;
        let mut raw_gap: f64 = 0.0;
        for _ in 0..1000 {
            let phi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let phi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let psi1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let psi2 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let a_sym = form_value_symmetric(&model, &grams, (&phi1, &phi2), (&psi1, &psi2))?;
            let a_raw = form_value(&model, &grams, (&phi1, &phi2), (&psi1, &psi2))?;
            let bound = q1
                * grams.v_norm_sq(&phi1, &phi2).sqrt()
                * grams.v_norm_sq(&psi1, &psi2).sqrt();
            worst = worst.max((a_sym.abs() - bound) / bound);
            raw_gap = raw_gap.max((a_raw - a_sym).abs() / bound);
        }
        checks.push(check(
            "lemma1_boundedness",
            worst,
            1e-10,
            "worst (|a| - q1 |phi|_V |psi|_V) / bound over 1000 pairs",
        ));
        checks.push(VerifyCheck {
            name: "raw_stiffness_asymmetry".into(),
            passed: true,
            skipped: false,
            measured: raw_gap,
            threshold: f64::INFINITY,
            note: "informational: relative gap between raw and symmetrized form values".into(),
        });
    }

    // Lyapunov solver against the Kronecker-vectorization oracle
    {
        let mut worst: f64 = 0.0;
        for dim in [3usize, 6, 9, 12] {
            let mut a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
            let margin = stability_margin(&a)?;
            if margin < 0.5 {
                for i in 0..dim {
                    a[(i, i)] -= 0.5 - margin;
                }
            }
            let g = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
            let w = &g * g.transpose();
            let x = solve_lyapunov(&a, &w)?;
            // dense Kronecker solve
            let kd = dim * dim;
            let mut kmat = DMatrix::zeros(kd, kd);
            for j in 0..dim {
                for i in 0..dim {
                    let row = j * dim + i;
                    for p in 0..dim {
                        kmat[(row, j * dim + p)] += a[(i, p)];
                    }
                    for q in 0..dim {
                        kmat[(row, q * dim + i)] += a[(j, q)];
                    }
                }
            }
            let rhs = DVector::from_fn(kd, |r, _| -w[(r % dim, r / dim)]);
            let xv = kmat
                .lu()
                .solve(&rhs)
                .ok_or_else(|| KvError::numerical("Kronecker oracle solve failed"))?;
            let x_oracle = DMatrix::from_fn(dim, dim, |i, j| xv[j * dim + i]);
            worst = worst.max((&x - &x_oracle).norm() / x_oracle.norm());
        }
        checks.push(check(
            "lyapunov_kronecker_oracle",
            worst,
            1e-8,
            "worst relative difference for orders 3..12",
        ));
    }

    // Riccati residuals on the actual synthesis problems
    let design = synthesize_regulator(&model, &config.synthesis_options()?);
    match &design {
        Ok(d) => {
            checks.push(check(
                "filter_riccati_residual",
                d.filter_residual,
                1e-8,
                "relative residual of the observer Riccati solve",
            ));
            checks.push(check(
                "regulator_riccati_residual",
                d.regulator_residual,
                1e-8,
                "relative residual of the state-feedback Riccati solve",
            ));
        }
        Err(e) => {
            checks.push(VerifyCheck {
                name: "synthesis".into(),
                passed: false,
                skipped: false,
                measured: f64::NAN,
                threshold: 0.0,
                note: format!("synthesis failed: {e}"),
            });
        }
    }

    // transmission zeros
    let report = check_transmission_zeros(&model, &config.frequencies.freqs(), config.synthesis.zero_tol)?;
    let min_sigma = report
        .sigma_min
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    checks.push(VerifyCheck {
        name: "transmission_zeros".into(),
        passed: report.pass(),
        skipped: false,
        measured: min_sigma,
        threshold: config.synthesis.zero_tol,
        note: "minimum sigma_min(P(i w_k)) must exceed the threshold".into(),
    });

    // controller files, when present
    if let Some(dir) = controller_dir {
        match io::read_regulator(dir) {
            Ok(reg) => {
                let ok = reg.g1.nrows() == 2 * (2 * config.frequencies.count + 1);
                checks.push(VerifyCheck {
                    name: "controller_files".into(),
                    passed: ok,
                    skipped: false,
                    measured: reg.dim() as f64,
                    threshold: f64::INFINITY,
                    note: if ok {
                        format!("controller files parsed; dimension {}", reg.dim())
                    } else {
                        "internal-model dimension does not match the config".into()
                    },
                });
            }
            Err(e) => {
                return Err(e);
            }
        }
    }

    let all_passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        let status = if c.skipped {
            "SKIP"
        } else if c.passed {
            "PASS"
        } else {
            "FAIL"
        };
        println!(
            "{status} {name}: measured {measured:.3e} (threshold {threshold:.1e}) - {note}",
            name = c.name,
            measured = c.measured,
            threshold = c.threshold,
            note = c.note
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let report = VerifyReport {
            seed,
            checks,
            all_passed,
        };
        write_json(&dir.join("verify_report.json"), &report)?;
    }
    Ok(all_passed)
}

/// Dump the assembled Galerkin matrices (design resolution) in the dense
/// text format.
pub fn cmd_matrices(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = config.beam_parameters()?;
    let model = GalerkinModel::assemble(&params, config.discretization.n_design)?;
    let dir = out.join("matrices");
    std::fs::create_dir_all(&dir)?;
    let parts: [(&str, &DMatrix<f64>); 9] = [
        ("M", &model.mass),
        ("F", &model.stiff),
        ("B0", &model.b0),
        ("Bd0", &model.bd0),
        ("C0", &model.c0),
        ("A", &model.a),
        ("B", &model.b),
        ("Bd", &model.bd),
        ("C", &model.c),
    ];
    for (name, mat) in parts {
        io::write_matrix(&dir.join(format!("{name}.txt")), mat)?;
    }
    println!(
        "wrote 9 matrices for n = {} to {}",
        config.discretization.n_design,
        dir.display()
    );
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| KvError::numerical(format!("JSON serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Resolve the controller directory for simulate/verify: explicit flag or
/// `<out>/controller`.
pub fn controller_dir_for(out: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| out.join("controller"))
}
