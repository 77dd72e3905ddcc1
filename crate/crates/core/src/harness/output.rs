//! CSV tables and gnuplot scripts.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::experiments::{BoundsOverlay, ConvergenceTable, InchwormGrowthCurve, ObservableCurve, OdeGrowthCurve, Sweep};
use crate::error::Result;
use crate::inchworm::Mode;

pub fn num(v: f64) -> String {
    format!("{v:.10e}")
}

fn order(o: Option<f64>) -> String {
    o.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

fn write_file(path: PathBuf, body: &str) -> Result<PathBuf> {
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(body.as_bytes())?;
    w.flush()?;
    Ok(path)
}

fn time_label(t: f64) -> String {
    format!("t{t}")
}

pub fn convergence_csv(table: &ConvergenceTable) -> String {
    let mut s = String::from("sweep,h,ns,n_exp,diverged");
    for &t in &table.report_times {
        let l = time_label(t);
        let _ = write!(s, ",e_{l},order_{l}");
    }
    s.push('\n');
    for r in &table.rows {
        let _ = write!(s, "{},{},{},{},{}", r.sweep.label(), r.h, r.ns, r.n_exp, r.diverged);
        for (e, o) in r.errors.iter().zip(&r.orders) {
            let _ = write!(s, ",{},{}", num(*e), order(*o));
        }
        s.push('\n');
    }
    s
}

pub fn convergence_lines(table: &ConvergenceTable) -> Vec<String> {
    table
        .rows
        .iter()
        .map(|r| {
            let cells: Vec<String> = table
                .report_times
                .iter()
                .zip(r.errors.iter().zip(&r.orders))
                .map(|(t, (e, o))| format!("e({t})={e:.4e} order={}", order(*o)))
                .collect();
            format!("h={:<8.5} Ns={:<5} {}", r.h, r.ns, cells.join("  "))
        })
        .collect()
}

pub fn write_convergence(dir: &Path, name: &str, table: &ConvergenceTable) -> Result<Vec<PathBuf>> {
    let csv = format!("{name}.csv");
    let mut gp = format!(
        "set datafile separator ','\nset logscale xy\nset key left top\nset multiplot layout 1,2\n\
         set xlabel 'h'\nset ylabel 'e'\n"
    );
    for (sweep, xcol) in [(Sweep::H, "$2"), (Sweep::Ns, "$3")] {
        if table.sweep(sweep).next().is_none() {
            continue;
        }
        if sweep == Sweep::Ns {
            gp.push_str("set xlabel 'Ns'\n");
        }
        let plots: Vec<String> = table
            .report_times
            .iter()
            .enumerate()
            .map(|(k, t)| {
                format!(
                    "'{csv}' every ::1 using (strcol(1) eq '{}' ? {xcol} : 1/0):{} with linespoints title 'e({t})'",
                    sweep.label(),
                    6 + 2 * k
                )
            })
            .collect();
        let _ = writeln!(gp, "plot {}", plots.join(", \\\n     "));
    }
    gp.push_str("unset multiplot\n");
    Ok(vec![
        write_file(dir.join(&csv), &convergence_csv(table))?,
        write_file(dir.join(format!("{name}.gp")), &gp)?,
    ])
}

pub fn write_ode_growth(dir: &Path, name: &str, curves: &[OdeGrowthCurve]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut plots = Vec::new();
    let mut fits = String::from("k,ns,n_exp,quad_coef,quad_lo,quad_hi,log_slope\n");
    for c in curves {
        let file = format!("{name}_K{}_Ns{}.csv", c.k, c.ns);
        let mut body = Vec::new();
        c.stats.write_csv(&mut body)?;
        files.push(write_file(dir.join(&file), &String::from_utf8_lossy(&body))?);
        plots.push(format!("'{file}' every ::2 using 1:2 with linespoints title 'K={} Ns={}'", c.k, c.ns));
        let q = &c.quadratic;
        let _ = writeln!(
            fits,
            "{},{},{},{},{},{},{}",
            c.k,
            c.ns,
            c.stats.n_exp,
            num(q.estimate),
            num(q.lo),
            num(q.hi),
            num(c.log_slope)
        );
    }
    files.push(write_file(dir.join(format!("{name}_fits.csv")), &fits)?);
    let gp = format!(
        "set datafile separator ','\nset logscale y\nset xlabel 't'\nset ylabel 'mu'\nset key left top\nplot {}\n",
        plots.join(", \\\n     ")
    );
    files.push(write_file(dir.join(format!("{name}.gp")), &gp)?);
    Ok(files)
}

pub fn write_inchworm_growth(dir: &Path, name: &str, curves: &[InchwormGrowthCurve]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut plots = Vec::new();
    let mut fits = String::from("mbar,ns,n_exp,diverged,fit_from,quad_coef,quad_lo,quad_hi\n");
    for c in curves {
        let file = format!("{name}_M{}_Ns{}.csv", c.mbar, c.ns);
        let mut body = String::from("t,e\n");
        for (j, e) in c.stats.variance.iter().enumerate() {
            let _ = writeln!(body, "{},{}", c.stats.time(j), num(*e));
        }
        files.push(write_file(dir.join(&file), &body)?);
        plots.push(format!("'{file}' every ::2 using 1:2 with linespoints title 'Mbar={} Ns={}'", c.mbar, c.ns));
        let q = c.log_quadratic.map_or_else(
            || ["NA".to_string(), "NA".into(), "NA".into()],
            |q| [num(q.estimate), num(q.lo), num(q.hi)],
        );
        let _ = writeln!(
            fits,
            "{},{},{},{},{},{}",
            c.mbar,
            c.ns,
            c.stats.n_exp,
            c.stats.diverged,
            c.fit_from,
            q.join(",")
        );
    }
    files.push(write_file(dir.join(format!("{name}_fits.csv")), &fits)?);
    let gp = format!(
        "set datafile separator ','\nset logscale y\nset xlabel 't'\nset ylabel 'e'\nset key left top\nplot {}\n",
        plots.join(", \\\n     ")
    );
    files.push(write_file(dir.join(format!("{name}.gp")), &gp)?);
    Ok(files)
}

pub fn observable_csv(h: f64, values: &[crate::algebra::C64]) -> String {
    let mut s = String::from("j,t_j,re_sigma_z,im_sigma_z\n");
    for (j, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{j},{},{},{}", j as f64 * h, num(v.re), num(v.im));
    }
    s
}

pub fn write_observables(dir: &Path, name: &str, curves: &[ObservableCurve]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut plots = Vec::new();
    for c in curves {
        let file = match c.mode {
            Mode::MonteCarlo => format!("{name}_M{}_Ns{}.csv", c.mbar, c.ns),
            Mode::Deterministic => format!("{name}_det.csv"),
        };
        files.push(write_file(dir.join(&file), &observable_csv(c.h, &c.values))?);
        plots.push(format!("'{file}' every ::1 using 2:3 with lines title 'Mbar={}'", c.mbar));
    }
    let gp = format!(
        "set datafile separator ','\nset xlabel 't'\nset ylabel '<sigma_z>'\nplot {}\n",
        plots.join(", \\\n     ")
    );
    files.push(write_file(dir.join(format!("{name}.gp")), &gp)?);
    Ok(files)
}

pub fn write_overlay(dir: &Path, name: &str, overlay: &BoundsOverlay) -> Result<Vec<PathBuf>> {
    let mut body = String::from("t,span,e,rms,envelope,log_envelope,dominated\n");
    for p in &overlay.points {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{}",
            p.t,
            p.span,
            num(p.e),
            num(p.rms()),
            num(p.envelope()),
            num(p.log_envelope),
            p.dominated()
        );
    }
    let c = &overlay.constants;
    let constants = serde_json::json!({
        "w": c.w, "g": c.g, "lbar": c.lbar, "h_norm": c.h_norm, "mbar": c.mbar,
        "h": overlay.h, "ns": overlay.ns, "n_exp": overlay.n_exp, "diverged": overlay.diverged,
    });
    let gp = format!(
        "set datafile separator ','\nset xlabel 't'\nset ylabel 'log error'\nset key left top\n\
         plot '{name}.csv' every ::2 using 1:(log($4)) with linespoints title 'log sqrt(e)', \\\n     \
         '{name}.csv' every ::1 using 1:6 with lines title 'log envelope'\n"
    );
    Ok(vec![
        write_file(dir.join(format!("{name}.csv")), &body)?,
        write_file(dir.join(format!("{name}_constants.json")), &serde_json::to_string_pretty(&constants)?)?,
        write_file(dir.join(format!("{name}.gp")), &gp)?,
    ])
}
