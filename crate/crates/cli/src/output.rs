//! Per-experiment output files. Every experiment writes `run.csv` and
//! `summary.json`, plus a gnuplot script `plot.gp` reading the CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Experiment;
use crate::error::{CliError, CliResult};
use crate::experiments::{LorenzRunOutput, VerifyReport};
use crate::report::{RunReport, SweepReport};

/// Shortest decimal that parses back to the same `f64`. Never more than 17
/// significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.to_path_buf(), e)
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// `<out>/<experiment>`, created if missing.
pub fn experiment_dir(out: &Path, experiment: Experiment) -> CliResult<PathBuf> {
    let dir = out.join(experiment.dir_name());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "gamma",
    "seed",
    "loglik_true",
    "loglik_missp",
    "loglik_nudged",
    "nmse_true",
    "nmse_missp",
    "nmse_nudged",
];

pub fn write_sweep(dir: &Path, rep: &SweepReport) -> CliResult<()> {
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.gamma),
                r.seed.to_string(),
                fmt_f64(r.loglik_true),
                fmt_f64(r.loglik_missp),
                fmt_f64(r.loglik_nudged),
                fmt_f64(r.nmse_true),
                fmt_f64(r.nmse_missp),
                fmt_f64(r.nmse_nudged),
            ]
        })
        .collect();
    write_csv(&dir.join("run.csv"), &strings(&SWEEP_COLUMNS), &rows)?;
    write_json(&dir.join("summary.json"), rep)?;
    write_text(&dir.join("plot.gp"), SWEEP_PLOT)
}

const SWEEP_PLOT: &str = r#"# gnuplot script; run from this directory with: gnuplot plot.gp
set datafile separator comma
set key autotitle columnhead
set logscale x
set xlabel "step size"
set terminal pngcairo size 900,600
# per-gamma means over seeds via smooth unique
set output "loglik.png"
set ylabel "log evidence"
plot "run.csv" using 1:3 smooth unique with lines title "true", \
     "" using 1:4 smooth unique with lines title "misspecified", \
     "" using 1:5 smooth unique with lines title "nudged"
set output "nmse.png"
set ylabel "NMSE"
plot "run.csv" using 1:6 smooth unique with lines title "true", \
     "" using 1:7 smooth unique with lines title "misspecified", \
     "" using 1:8 smooth unique with lines title "nudged"
"#;

pub const RUN_COLUMNS: [&str; 19] = [
    "t",
    "scenario",
    "x1",
    "x2",
    "x3",
    "y1",
    "y2",
    "plain_x1",
    "plain_x2",
    "plain_x3",
    "nudged_x1",
    "nudged_x2",
    "nudged_x3",
    "inc_plain",
    "inc_nudged",
    "inc_diff",
    "nmse_plain",
    "nmse_nudged",
    "status",
];

/// One row per observation time and scenario. Cells past the point where a
/// filter stopped are empty and the `status` column says why.
pub fn write_lorenz_run(dir: &Path, out: &LorenzRunOutput) -> CliResult<()> {
    let mut rows = Vec::new();
    for run in &out.runs {
        let nb = crate::experiments::nmse_against(&run.data.truth, &run.plain.estimates);
        let nn = crate::experiments::nmse_against(&run.data.truth, &run.nudged.estimates);
        let ok_len = run.plain.len().min(run.nudged.len());
        for (t, x) in run.data.truth.iter().enumerate() {
            let y = run.data.observations[t].as_vector();
            let mut row = vec![(t + 1).to_string(), run.scenario.name().to_string()];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(y[0]));
            row.push(cell(y.get(1).copied()));
            for tr in [&run.plain, &run.nudged] {
                let e = tr.estimates.get(t);
                row.extend((0..3).map(|i| cell(e.map(|e| e[i]))));
            }
            let ip = run.plain.inc_loglik.get(t).copied();
            let inn = run.nudged.inc_loglik.get(t).copied();
            row.push(cell(ip));
            row.push(cell(inn));
            row.push(cell(ip.zip(inn).map(|(p, n)| n - p)));
            row.push(cell(nb.get(t).copied()));
            row.push(cell(nn.get(t).copied()));
            row.push(match run.error() {
                Some(e) if t >= ok_len => format!("stopped: {e}"),
                _ => "ok".into(),
            });
            rows.push(row);
        }
    }
    write_csv(&dir.join("run.csv"), &strings(&RUN_COLUMNS), &rows)?;
    write_json(&dir.join("summary.json"), &out.summaries)?;
    write_text(&dir.join("plot.gp"), RUN_PLOT)
}

const RUN_PLOT: &str = r#"# gnuplot script; run from this directory with: gnuplot plot.gp
set datafile separator comma
set key autotitle columnhead
set xlabel "t"
set terminal pngcairo size 1000,600
do for [s in "well-specified mismatched extreme"] {
    set output sprintf("x1_%s.png", s)
    set ylabel "x1"
    plot "run.csv" using ((strcol(2) eq s) ? $1 : NaN):3 with lines title "truth", \
         "" using ((strcol(2) eq s) ? $1 : NaN):8 with lines title "plain", \
         "" using ((strcol(2) eq s) ? $1 : NaN):11 with lines title "nudged"
    set output sprintf("inc_diff_%s.png", s)
    set ylabel "nudged - plain log incremental likelihood"
    plot "run.csv" using ((strcol(2) eq s) ? $1 : NaN):16 with impulses title "difference"
}
"#;

pub const MC_COLUMNS: [&str; 13] = [
    "scenario",
    "replication",
    "seed",
    "attempt",
    "degeneracy_events",
    "total_loglik_base",
    "total_loglik_nudged",
    "evidence_base",
    "evidence_nudged",
    "final_nmse_base",
    "final_nmse_nudged",
    "mean_nmse_base",
    "mean_nmse_nudged",
];

pub fn write_lorenz_mc(dir: &Path, rep: &RunReport) -> CliResult<()> {
    let rows: Vec<Vec<String>> = rep
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.scenario.name().to_string(),
                r.replication.to_string(),
                r.seed.to_string(),
                r.attempt.to_string(),
                r.degeneracy_events.to_string(),
            ];
            row.extend(crate::report::RECORD_FIELDS.iter().map(|f| fmt_f64(r.field(f).unwrap())));
            row
        })
        .collect();
    write_csv(&dir.join("run.csv"), &strings(&MC_COLUMNS), &rows)?;
    write_json(&dir.join("summary.json"), rep)?;
    write_text(&dir.join("plot.gp"), MC_PLOT)
}

const MC_PLOT: &str = r#"# gnuplot script; run from this directory with: gnuplot plot.gp
set datafile separator comma
set key autotitle columnhead
set style data boxplot
set style boxplot nooutliers
set terminal pngcairo size 900,600
set xtics ("plain" 1, "nudged" 2)
do for [s in "well-specified mismatched extreme"] {
    set output sprintf("evidence_%s.png", s)
    set ylabel "log evidence"
    plot "run.csv" using (1):((strcol(1) eq s) ? $8 : NaN) notitle, \
         "" using (2):((strcol(1) eq s) ? $9 : NaN) notitle
    set output sprintf("nmse_%s.png", s)
    set ylabel "time-averaged NMSE"
    plot "run.csv" using (1):((strcol(1) eq s) ? $12 : NaN) notitle, \
         "" using (2):((strcol(1) eq s) ? $13 : NaN) notitle
}
"#;

pub const VERIFY_COLUMNS: [&str; 4] = ["check", "cases", "violations", "passed"];

/// Writes the verification table and, when something failed, every offending
/// instance to `violations.json`.
pub fn write_verify(dir: &Path, rep: &VerifyReport) -> CliResult<()> {
    let rows: Vec<Vec<String>> = rep
        .checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                c.cases.to_string(),
                c.violations.to_string(),
                c.passed().to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("run.csv"), &strings(&VERIFY_COLUMNS), &rows)?;
    write_json(&dir.join("summary.json"), &rep.checks)?;
    if !rep.violations.is_empty() {
        write_json(&dir.join("violations.json"), &rep.violations)?;
    }
    write_text(&dir.join("plot.gp"), VERIFY_PLOT)
}

const VERIFY_PLOT: &str = r#"# gnuplot script; run from this directory with: gnuplot plot.gp
set datafile separator comma
set style data histograms
set style fill solid
set terminal pngcairo size 900,600
set output "violations.png"
set ylabel "violations"
plot "run.csv" using 3:xtic(1) notitle
"#;
