//! File formats: dense matrix text, trajectory CSV, controller export and
//! the gnuplot scripts that reproduce the reference figures from data.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::closed_loop::SimulationResult;
use crate::error::{KvError, Result};
use crate::galerkin::GalerkinModel;
use crate::spectral::phi_series;
use crate::synthesis::{LowGainController, RegulatorRealization};

/// Write a dense matrix: first line "rows cols", then row-major entries at
/// 17 significant digits.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read the dense matrix text format with parse diagnostics.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| KvError::Parse(format!("{}: empty file", path.display())))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(KvError::Parse(format!(
            "{}: header must be \"rows cols\", got {header:?}",
            path.display()
        )));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|e| KvError::Parse(format!("{}: bad row count: {e}", path.display())))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|e| KvError::Parse(format!("{}: bad column count: {e}", path.display())))?;
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| {
            KvError::Parse(format!(
                "{}: expected {rows} data rows, file ends at row {i}",
                path.display()
            ))
        })?;
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != cols {
            return Err(KvError::Parse(format!(
                "{}: row {i} has {} entries, expected {cols}",
                path.display(),
                entries.len()
            )));
        }
        for (j, e) in entries.iter().enumerate() {
            m[(i, j)] = e.parse().map_err(|err| {
                KvError::Parse(format!(
                    "{}: row {i} column {j}: {err} (token {e:?})",
                    path.display()
                ))
            })?;
        }
    }
    Ok(m)
}

fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Trajectory CSV: `t,y1,y2,yref1,yref2,u1,u2,enorm`, 12 significant
/// digits.
pub fn write_trajectory_csv(path: &Path, res: &SimulationResult) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,y1,y2,yref1,yref2,u1,u2,enorm")?;
    for i in 0..res.len() {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            fmt12(res.times[i]),
            fmt12(res.y[i][0]),
            fmt12(res.y[i][1]),
            fmt12(res.y_ref[i][0]),
            fmt12(res.y_ref[i][1]),
            fmt12(res.u[i][0]),
            fmt12(res.u[i][1]),
            fmt12(res.err_norm[i]),
        )?;
    }
    Ok(())
}

/// Eigenvalue list CSV: `re,im`.
pub fn write_eigenvalues_csv(path: &Path, eigs: &[num_complex::Complex64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "re,im")?;
    for l in eigs {
        writeln!(f, "{},{}", fmt12(l.re), fmt12(l.im))?;
    }
    Ok(())
}

/// Deflection surface CSV: `t,xi,v` in gnuplot splot block format (blank
/// line between time slices). The deflection is reconstructed from the
/// plant coordinate block of each state snapshot.
pub fn write_deflection_csv(
    path: &Path,
    model: &GalerkinModel,
    snapshots: &[(f64, DVector<f64>)],
    n_xi: usize,
) -> Result<()> {
    let n = model.n;
    let xi_grid: Vec<f64> = (0..n_xi)
        .map(|i| -1.0 + 2.0 * i as f64 / (n_xi - 1) as f64)
        .collect();
    // basis values on the grid
    let mut basis = DMatrix::zeros(n_xi, n);
    for (k, series) in (0..n).map(phi_series).enumerate() {
        for (i, &xi) in xi_grid.iter().enumerate() {
            basis[(i, k)] = series.eval(xi).unwrap();
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,xi,v")?;
    for (t, state) in snapshots {
        let alpha = state.rows(0, n).into_owned();
        let v = &basis * alpha;
        for (i, &xi) in xi_grid.iter().enumerate() {
            writeln!(f, "{},{},{}", fmt12(*t), fmt12(xi), fmt12(v[i]))?;
        }
        writeln!(f)?;
    }
    Ok(())
}

const CONTROLLER_FILES: [&str; 7] = ["g1", "g2", "al", "bl", "lr", "k1", "k2r"];

/// Write the seven regulator matrices into a directory.
pub fn write_regulator(dir: &Path, reg: &RegulatorRealization) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let parts: [(&str, &DMatrix<f64>); 7] = [
        ("g1", &reg.g1),
        ("g2", &reg.g2),
        ("al", &reg.al),
        ("bl", &reg.bl),
        ("lr", &reg.lr),
        ("k1", &reg.k1),
        ("k2r", &reg.k2r),
    ];
    for (name, m) in parts {
        write_matrix(&dir.join(format!("{name}.txt")), m)?;
    }
    Ok(())
}

/// Read the seven regulator matrices back, checking mutual dimension
/// consistency.
pub fn read_regulator(dir: &Path) -> Result<RegulatorRealization> {
    let mut mats = Vec::new();
    for name in CONTROLLER_FILES {
        mats.push(read_matrix(&dir.join(format!("{name}.txt")))?);
    }
    let [g1, g2, al, bl, lr, k1, k2r]: [DMatrix<f64>; 7] =
        mats.try_into().expect("seven controller matrices");
    let nz = g1.nrows();
    let r = al.nrows();
    if g1.ncols() != nz || g2.nrows() != nz || g2.ncols() != 2 {
        return Err(KvError::dims("controller files: internal model dimensions"));
    }
    if al.ncols() != r || bl.nrows() != r || bl.ncols() != 2 || lr.nrows() != r || lr.ncols() != 2
    {
        return Err(KvError::dims("controller files: observer block dimensions"));
    }
    if k1.nrows() != 2 || k1.ncols() != nz || k2r.nrows() != 2 || k2r.ncols() != r {
        return Err(KvError::dims("controller files: gain dimensions"));
    }
    Ok(RegulatorRealization {
        g1,
        g2,
        al,
        bl,
        lr,
        k1,
        k2r,
    })
}

/// Write the low-gain controller matrices (internal model plus gain).
pub fn write_low_gain(dir: &Path, lg: &LowGainController) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix(&dir.join("g1.txt"), &lg.im.g1)?;
    write_matrix(&dir.join("g2.txt"), &lg.im.g2)?;
    write_matrix(&dir.join("k.txt"), &lg.k)?;
    Ok(())
}

/// Gnuplot scripts reproducing the reference figures from the emitted
/// data files.
pub fn write_plot_scripts(dir: &Path) -> Result<()> {
    let scripts: [(&str, &str); 5] = [
        (
            "fig1_eigenvalues.gp",
            "set datafile separator ','\n\
             set title 'Closed-loop eigenvalues'\n\
             set xlabel 'Re'\nset ylabel 'Im'\n\
             set key off\n\
             plot 'closed_loop_eigenvalues.csv' skip 1 using 1:2 with points pt 7 ps 0.5\n",
        ),
        (
            "fig2_output.gp",
            "set datafile separator ','\n\
             set title 'Output and reference'\n\
             set xlabel 't'\n\
             plot 'trajectory.csv' skip 1 using 1:2 with lines title 'y_1', \\\n\
                  'trajectory.csv' skip 1 using 1:4 with lines dt 2 title 'yref_1', \\\n\
                  'trajectory.csv' skip 1 using 1:3 with lines title 'y_2', \\\n\
                  'trajectory.csv' skip 1 using 1:5 with lines dt 2 title 'yref_2'\n",
        ),
        (
            "fig3_error.gp",
            "set datafile separator ','\n\
             set title 'Tracking error norm'\n\
             set xlabel 't'\nset ylabel '|e(t)|'\n\
             set logscale y\n\
             plot 'trajectory.csv' skip 1 using 1:8 with lines title '|e|'\n",
        ),
        (
            "fig4_controls.gp",
            "set datafile separator ','\n\
             set title 'Control inputs'\n\
             set xlabel 't'\n\
             plot 'trajectory.csv' skip 1 using 1:6 with lines title 'u_1', \\\n\
                  'trajectory.csv' skip 1 using 1:7 with lines title 'u_2'\n",
        ),
        (
            "fig5_deflection.gp",
            "set datafile separator ','\n\
             set title 'Beam deflection'\n\
             set xlabel 't'\nset ylabel 'xi'\nset zlabel 'v'\n\
             set hidden3d\n\
             splot 'deflection.csv' skip 1 using 1:2:3 with lines notitle\n",
        ),
    ];
    for (name, body) in scripts {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}
