//! Entry points behind the command-line subcommands.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{format_point, RunFile, SweepSpec, SweepTask};
use crate::error::{Error, Result};
use crate::grid::RectDomain;
use crate::io::{Manifest, RunWriter};
use crate::model::ModelParams;
use crate::simulation::{simulate_with, RunOutcome, SimConfig};
use crate::stability::{
    chi_c0, chi_c_domain, chi_subcrit, default_mode_bounds, dispersion_table, unstable_band,
    CriticalMode, DispersionPoint, ModeIndex,
};

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub chi: f64,
    pub chi_c0: f64,
    pub chi_subcrit: f64,
    pub critical: CriticalMode,
    pub mode_bounds: (usize, usize),
    pub unstable: Vec<ModeIndex>,
    /// Unstable mode with the largest `sigma_plus`.
    pub fastest: Option<(ModeIndex, f64)>,
    pub dispersion: Vec<(ModeIndex, DispersionPoint)>,
}

pub fn stability_report(params: &ModelParams, domain: &RectDomain) -> Result<StabilityReport> {
    let (pmax, qmax) = default_mode_bounds(params, domain);
    let critical = chi_c_domain(params, domain, pmax, qmax)?;
    let dispersion = dispersion_table(params, domain, pmax, qmax);
    let unstable = unstable_band(params, domain, pmax, qmax);
    let fastest = dispersion
        .iter()
        .filter(|(_, d)| d.is_unstable())
        .map(|(m, d)| (*m, d.sigma_plus.re))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    Ok(StabilityReport {
        chi: params.chi(),
        chi_c0: chi_c0(params)?,
        chi_subcrit: chi_subcrit(params)?,
        critical,
        mode_bounds: (pmax, qmax),
        unstable,
        fastest,
        dispersion,
    })
}

impl StabilityReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let c = &self.critical;
        let _ = writeln!(s, "chi          {}", self.chi);
        let _ = writeln!(s, "chi_c0       {:.10}", self.chi_c0);
        let _ = writeln!(s, "chi_subcrit  {:.10}", self.chi_subcrit);
        let _ = writeln!(
            s,
            "chi_c        {:.10}  mode ({},{})  lambda {:.6}",
            c.chi, c.mode.p, c.mode.q, c.mode.lambda
        );
        let band: Vec<String> = self
            .unstable
            .iter()
            .map(|m| format!("({},{})", m.p, m.q))
            .collect();
        let _ = writeln!(
            s,
            "unstable     {} [{}]",
            self.unstable.len(),
            band.join(" ")
        );
        if let Some((m, sigma)) = self.fastest {
            let _ = writeln!(s, "fastest      ({},{})  sigma {:.6e}", m.p, m.q, sigma);
        }
        s
    }

    /// Dispersion relation as TSV, `#` header.
    pub fn dispersion_tsv(&self) -> String {
        let mut s = String::from("#p\tq\tlambda\ttrace\tdet\tsigma_plus_re\tsigma_plus_im\tsigma_minus_re\tsigma_minus_im\n");
        for (m, d) in &self.dispersion {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.10e}\t{:.10e}\t{:.10e}\t{:.10e}\t{:.10e}\t{:.10e}\t{:.10e}",
                m.p,
                m.q,
                m.lambda,
                d.trace,
                d.det,
                d.sigma_plus.re,
                d.sigma_plus.im,
                d.sigma_minus.re,
                d.sigma_minus.im
            );
        }
        s
    }
}

/// Writes a run directory; on failure the partial outputs and a manifest
/// recording the error are kept and the error is returned.
pub fn run_to_dir(
    config: &SimConfig,
    resolved_toml: &str,
    dir: impl AsRef<Path>,
) -> Result<(RunOutcome, Manifest)> {
    let mut writer = RunWriter::create(dir, config, resolved_toml)?;
    let result = simulate_with(config, &mut writer);
    let manifest = writer.finish(&result)?;
    result.map(|outcome| (outcome, manifest))
}

/// Output directory of a run: the explicit one, else `[output] dir`, else `run`.
pub fn output_dir(file: &RunFile, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("run"))
}

/// Columns of a sweep table after the axis columns.
pub fn sweep_columns(task: SweepTask) -> &'static [&'static str] {
    match task {
        SweepTask::Thresholds => &[
            "status",
            "chi_c0",
            "chi_subcrit",
            "chi_c",
            "p",
            "q",
            "n_unstable",
            "sigma_max",
        ],
        SweepTask::Simulate => &["status", "classification", "t_final", "deviation"],
    }
}

fn point_row(spec: &SweepSpec, point: &[(String, f64)]) -> Vec<String> {
    let width = sweep_columns(spec.task).len() - 1;
    let run = || -> Result<Vec<String>> {
        let file = spec.at(point);
        let config = file.sim_config()?;
        match spec.task {
            SweepTask::Thresholds => {
                let r = stability_report(&config.params, &config.grid.domain())?;
                Ok(vec![
                    format!("{:.12}", r.chi_c0),
                    format!("{:.12}", r.chi_subcrit),
                    format!("{:.12}", r.critical.chi),
                    r.critical.mode.p.to_string(),
                    r.critical.mode.q.to_string(),
                    r.unstable.len().to_string(),
                    r.fastest.map_or("nan".into(), |(_, s)| format!("{s:.10e}")),
                ])
            }
            SweepTask::Simulate => {
                let mut cfg = config;
                cfg.snapshot_every = 0;
                let outcome = simulate_with(&cfg, &mut ())?;
                Ok(vec![
                    serde_json::to_value(outcome.classification)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default(),
                    format!("{:.6}", outcome.t_final),
                    format!("{:.6e}", outcome.deviation),
                ])
            }
        }
    };
    format_row(point, width, run())
}

/// Axis values, status, then either the task columns or `nan` padding.
fn format_row(point: &[(String, f64)], width: usize, result: Result<Vec<String>>) -> Vec<String> {
    let mut row: Vec<String> = point.iter().map(|(_, v)| v.to_string()).collect();
    match result {
        Ok(cols) => {
            row.push("ok".into());
            row.extend(cols);
        }
        Err(e) => {
            log::warn!("sweep point {}: {e}", format_point(point));
            row.push(format!("error:{}", e.exit_code()));
            row.extend(std::iter::repeat_n("nan".to_string(), width));
        }
    }
    row
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub table: PathBuf,
    pub total: usize,
    pub skipped: usize,
    pub computed: usize,
    pub failed: usize,
}

/// Fills the sweep table, skipping points already present. Rows are
/// computed in parallel and appended in sweep order, one chunk at a time,
/// so an interrupted sweep can be resumed.
pub fn run_sweep(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<SweepSummary> {
    let table = match out_dir {
        Some(dir) if spec.table.is_relative() => dir.join(&spec.table),
        _ => spec.table.clone(),
    };
    if let Some(parent) = table.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let axes: Vec<&str> = spec.axes.iter().map(|a| a.name.as_str()).collect();
    let mut header: Vec<&str> = axes.clone();
    header.extend(sweep_columns(spec.task));
    let header = format!("#{}", header.join("\t"));

    let mut done = HashSet::new();
    if table.exists() {
        let text = fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(header.as_str()) {
            return Err(Error::Validation(format!(
                "{} has a different header; remove it or pick another table",
                table.display()
            )));
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let key: Vec<&str> = line.split('\t').take(axes.len()).collect();
            done.insert(key.join("\t"));
        }
    } else {
        fs::write(&table, format!("{header}\n")).map_err(|e| Error::io(&table, e))?;
    }

    let points = spec.points();
    let todo: Vec<_> = points
        .iter()
        .filter(|p| {
            let key: Vec<String> = p.iter().map(|(_, v)| v.to_string()).collect();
            !done.contains(&key.join("\t"))
        })
        .collect();
    let mut summary = SweepSummary {
        table: table.clone(),
        total: points.len(),
        skipped: points.len() - todo.len(),
        computed: 0,
        failed: 0,
    };
    let chunk = 4 * rayon::current_num_threads();
    for batch in todo.chunks(chunk) {
        let rows: Vec<Vec<String>> = batch.par_iter().map(|p| point_row(spec, p)).collect();
        let mut file = OpenOptions::new()
            .append(true)
            .open(&table)
            .map_err(|e| Error::io(&table, e))?;
        let mut text = String::new();
        for row in &rows {
            if row[axes.len()] != "ok" {
                summary.failed += 1;
            }
            text.push_str(&row.join("\t"));
            text.push('\n');
        }
        file.write_all(text.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(&table, e))?;
        summary.computed += rows.len();
        log::info!(
            "sweep: {}/{} points",
            summary.skipped + summary.computed,
            summary.total
        );
    }
    Ok(summary)
}
