//! Writes CSV tables, JSON summaries and gnuplot scripts.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use spinphase::dynamics::fmt17;
use spinphase::harness::{ConvergenceReport, PhaseBudget, StokesRow, TimescaleReport};

use crate::config::{Format, RunConfig};
use crate::run::{Outcome, Simulation, TRAJ_HEADER};
use crate::CliError;

pub const STOKES_HEADER: &str = "loop_id,line_integral,surface_integral,abs_diff";
pub const CONVERGENCE_HEADER: &str = "epsilon,err_order0,err_order1,err_order2";
pub const PHASES_HEADER: &str = "phi0,phi1,phi2,phi_total_exact,phi_dyn_expect,phi_geom_aa,residual_eps4,r_aa,ratio";
pub const TIMESCALE_HEADER: &str = "b_mag,omega,t1,phi2_at_t1,t2,numeric_deviation";

/// Creates the output directory when any file will be written.
pub fn prepare_output_dir(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.formats.is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))
}

fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt17).collect::<Vec<_>>().join(",")
}

fn opt17(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summaries always serialize");
    s.push('\n');
    s
}

fn traj_csv(sim: &Simulation) -> String {
    let mut out = format!("{TRAJ_HEADER}\n");
    for row in &sim.rows {
        out.push_str(&csv_row(row.iter().copied()));
        out.push('\n');
    }
    out
}

fn traj_gp() -> String {
    "\
# Run from this directory: gnuplot -p traj.gp
set datafile separator ','
set termoption noenhanced
set key autotitle columnheader
set xlabel 't'
set multiplot layout 2,1
set ylabel 'spin'
plot 'traj.csv' using 1:5 with lines, '' using 1:6 with lines, '' using 1:7 with lines
set ylabel 'phase - phi0'
plot 'traj.csv' using 1:($12 - $13) title 'phase_total - phi0' with lines, \\
     '' using 1:14 with lines
unset multiplot
"
    .to_string()
}

fn phases_csv(b: &PhaseBudget) -> String {
    let p = &b.phases;
    let mut out = format!("{PHASES_HEADER}\n");
    out.push_str(&csv_row([
        p.phi0,
        p.phi1,
        p.phi2,
        p.phi_total_exact,
        p.phi_dyn_expect,
        p.phi_geom_aa,
        b.r_total,
        b.r_aa,
    ]));
    let _ = writeln!(out, ",{}", opt17(b.ratio));
    out
}

fn convergence_csv(r: &ConvergenceReport) -> String {
    let mut out = format!("{CONVERGENCE_HEADER}\n");
    for (i, &e) in r.epsilons.iter().enumerate() {
        out.push_str(&csv_row([
            e,
            r.errors_order0[i],
            r.errors_order1[i],
            r.errors_order2[i],
        ]));
        out.push('\n');
    }
    out
}

fn convergence_gp() -> String {
    "\
# Run from this directory: gnuplot -p convergence.gp
set datafile separator ','
set termoption noenhanced
set key autotitle columnheader left top
set logscale xy
set xlabel 'epsilon'
set ylabel 'max |S - S_approx|'
plot 'convergence.csv' using 1:2 with linespoints, \\
     '' using 1:3 with linespoints, \\
     '' using 1:4 with linespoints
"
    .to_string()
}

fn stokes_csv(rows: &[StokesRow]) -> String {
    let mut out = format!("{STOKES_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{}",
            r.loop_id,
            csv_row([r.line_integral, r.surface_integral, r.abs_diff])
        );
    }
    out
}

fn stokes_gp() -> String {
    "\
# Run from this directory: gnuplot -p stokes.gp
set datafile separator ','
set termoption noenhanced
set key autotitle columnheader
set style data histograms
set style fill solid 0.5
set xtics rotate by -30
set ylabel 'integral'
plot 'stokes.csv' using 2:xtic(1), '' using 3
"
    .to_string()
}

fn timescale_csv(r: &TimescaleReport) -> String {
    format!(
        "{TIMESCALE_HEADER}\n{},{},{},{},{},{}\n",
        fmt17(r.b_mag),
        fmt17(r.omega),
        opt17(r.t1),
        opt17(r.phi2_at_t1),
        opt17(r.t2),
        opt17(r.numeric_deviation)
    )
}

/// Result files for one format, as `(file name, contents)`. Gnuplot
/// scripts are only produced alongside the CSV they read.
fn artifacts(outcome: &Outcome, format: Format, with_csv: bool) -> Vec<(&'static str, String)> {
    match (outcome, format) {
        (Outcome::Simulate(s), Format::Csv) => vec![("traj.csv", traj_csv(s))],
        (Outcome::Simulate(s), Format::Json) => vec![("summary.json", json(&s.summary))],
        (Outcome::Simulate(_), Format::Gnuplot) if with_csv => vec![("traj.gp", traj_gp())],
        (Outcome::Phases(b), Format::Csv) => vec![("phases.csv", phases_csv(b))],
        (Outcome::Phases(b), Format::Json) => vec![("phases.json", json(b))],
        (Outcome::Convergence(r), Format::Csv) => vec![("convergence.csv", convergence_csv(r))],
        (Outcome::Convergence(r), Format::Json) => vec![("convergence.json", json(r))],
        (Outcome::Convergence(_), Format::Gnuplot) if with_csv => vec![("convergence.gp", convergence_gp())],
        (Outcome::Stokes(rows), Format::Csv) => vec![("stokes.csv", stokes_csv(rows))],
        (Outcome::Stokes(rows), Format::Json) => vec![("stokes.json", json(rows))],
        (Outcome::Stokes(_), Format::Gnuplot) if with_csv => vec![("stokes.gp", stokes_gp())],
        (Outcome::Timescale(r), Format::Csv) => vec![("timescale.csv", timescale_csv(r))],
        (Outcome::Timescale(r), Format::Json) => vec![("timescale.json", json(r))],
        _ => vec![],
    }
}

/// The summary printed when no files are requested.
pub fn summary_json(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Simulate(s) => json(&s.summary),
        Outcome::Phases(b) => json(b),
        Outcome::Convergence(r) => json(r),
        Outcome::Stokes(rows) => json(rows),
        Outcome::Timescale(r) => json(r),
    }
}

/// Writes every artifact requested by `cfg` and returns the paths. With no
/// formats the summary goes to standard output and nothing is written. A
/// JSON run writes the resolved configuration as `run.json` too.
pub fn write_outputs(outcome: &Outcome, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if cfg.formats.is_empty() {
        print!("{}", summary_json(outcome));
        return Ok(vec![]);
    }
    let with_csv = cfg.formats.contains(&Format::Csv);
    let mut files = Vec::new();
    for &format in &cfg.formats {
        files.extend(artifacts(outcome, format, with_csv));
    }
    if cfg.formats.contains(&Format::Json) {
        files.push(("run.json", format!("{}\n", cfg.to_json())));
    }
    let mut paths = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = cfg.output_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}
