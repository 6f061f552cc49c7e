use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use byzcoin_simnet::{MetricsReport, ScenarioConfig, Simulation};

use crate::table::Table;
use crate::CliError;

/// Writes through a temporary sibling and renames, so a reader never sees a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn output_path(out_dir: &Path, configured: Option<&str>, default: String) -> PathBuf {
    match configured {
        Some(p) if Path::new(p).is_absolute() => PathBuf::from(p),
        Some(p) => out_dir.join(p),
        None => out_dir.join(default),
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub metrics_path: PathBuf,
    pub trace_path: PathBuf,
}

/// Runs one scenario and writes its metrics record and event trace.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunOutput, CliError> {
    log::info!("running {} ({} hosts, seed {})", cfg.name, cfg.hosts, cfg.seed);
    let mut sim = Simulation::new(cfg)?;
    let report = sim.run();
    let metrics_path = output_path(out_dir, cfg.output.metrics.as_deref(), format!("{}.metrics.json", cfg.name));
    let trace_path = output_path(out_dir, cfg.output.trace.as_deref(), format!("{}.trace.csv", cfg.name));
    write_atomic(&metrics_path, report.to_json().as_bytes())?;
    write_atomic(&trace_path, sim.trace_csv().as_bytes())?;
    log::info!(
        "{}: {} blocks, mean latency {:.3} s, audit {}",
        cfg.name,
        report.committed_blocks,
        report.mean_latency_s,
        if report.audit.safe { "safe" } else { "FAILED" }
    );
    Ok(RunOutput {
        report,
        metrics_path,
        trace_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Hosts,
    Blocksize,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Hosts => "hosts",
            Axis::Blocksize => "blocksize",
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig, value: u64) {
        match self {
            Axis::Hosts => cfg.hosts = value as usize,
            Axis::Blocksize => cfg.block_bytes = value,
        }
        cfg.name = format!("{}-{}-{value}", cfg.name, self.name());
        // per-point files always land under their own names
        cfg.output = Default::default();
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: u64,
    pub result: Result<MetricsReport, String>,
}

pub fn check_values(values: &[u64]) -> Result<(), CliError> {
    if values.is_empty() || values.contains(&0) || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("sweep values must be positive and ascending".into()));
    }
    Ok(())
}

/// Runs one scenario per value. A failing point is recorded and the sweep
/// carries on.
pub fn sweep(base: &ScenarioConfig, axis: Axis, values: &[u64], out_dir: &Path) -> Result<Vec<SweepPoint>, CliError> {
    check_values(values)?;
    let points = values
        .par_iter()
        .map(|&value| {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, value);
            let result = cfg
                .validate()
                .map_err(CliError::from)
                .and_then(|_| run_scenario(&cfg, out_dir))
                .map(|o| o.report)
                .map_err(|e| e.to_string());
            if let Err(e) = &result {
                log::warn!("{} = {value}: {e}", axis.name());
            }
            SweepPoint { value, result }
        })
        .collect();
    Ok(points)
}

pub fn sweep_table(axis: Axis, points: &[SweepPoint]) -> Table {
    let mut t = Table::new([
        axis.name(),
        "committed_blocks",
        "mean_latency_s",
        "throughput_tps",
        "bytes_per_host_mean",
        "truncated",
        "safe",
        "error",
    ]);
    for p in points {
        let row = match &p.result {
            Ok(r) => vec![
                p.value.to_string(),
                r.committed_blocks.to_string(),
                format!("{:.4}", r.mean_latency_s),
                format!("{:.2}", r.throughput_tps),
                format!("{:.0}", r.bytes_per_host_mean),
                r.truncated.to_string(),
                r.audit.safe.to_string(),
                String::new(),
            ],
            Err(e) => {
                let mut row = vec![p.value.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(e.clone());
                row
            }
        };
        t.push(row);
    }
    t
}
