use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::experiments::{AggregateRow, BatchResult, BoundsReport};
use super::plot;
use crate::engine::write_trajectory_csv;
use crate::error::{Error, Result};
use crate::geometry::fmt_sig17;
use crate::metrics::{write_metric_rows, METRIC_CSV_HEADER};

pub const AGGREGATE_CSV_HEADER: &str = "protocol,comm_radius,c_z,t,metric,mean,half_width,trials";
pub const BOUNDS_CSV_HEADER: &str = "scenario,quantity,analytic,estimated,std_error,lower,upper,pass";
pub const HALF_LIFE_CSV_HEADER: &str = "protocol,comm_radius,c_z,trial,seed,t50";

/// Parsed line of an aggregate CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRecord {
    pub protocol: String,
    pub comm_radius: f64,
    pub c_z: f64,
    pub t: f64,
    pub metric: String,
    pub mean: f64,
    pub half_width: f64,
    pub trials: usize,
}

impl From<&AggregateRow> for AggregateRecord {
    fn from(row: &AggregateRow) -> Self {
        Self {
            protocol: row.cell.protocol.name().to_string(),
            comm_radius: row.cell.comm_radius,
            c_z: row.cell.c_z,
            t: row.t,
            metric: row.metric.to_string(),
            mean: row.interval.mean,
            half_width: row.interval.half_width,
            trials: row.interval.n,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Config as `# `-prefixed comment lines.
pub fn write_config_header<W: Write>(out: &mut W, config: &ExperimentConfig) -> Result<()> {
    for line in config.to_toml().lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(out: &mut W, batch: &BatchResult) -> Result<()> {
    write_config_header(out, &batch.config)?;
    writeln!(out, "{AGGREGATE_CSV_HEADER}")?;
    for row in batch.aggregate() {
        let r = AggregateRecord::from(&row);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.protocol,
            fmt_sig17(r.comm_radius),
            fmt_sig17(r.c_z),
            fmt_sig17(r.t),
            r.metric,
            fmt_sig17(r.mean),
            fmt_sig17(r.half_width),
            r.trials
        )?;
    }
    Ok(())
}

fn parse_f64(field: &str) -> Result<f64> {
    field.parse().map_err(|_| Error::Config(format!("bad number {field:?} in CSV")))
}

/// Reads an aggregate CSV, skipping the comment header.
pub fn read_aggregate_csv<R: BufRead>(input: R) -> Result<Vec<AggregateRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.starts_with('#') || line == AGGREGATE_CSV_HEADER || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Config(format!("malformed aggregate row {line:?}")));
        }
        out.push(AggregateRecord {
            protocol: f[0].to_string(),
            comm_radius: parse_f64(f[1])?,
            c_z: parse_f64(f[2])?,
            t: parse_f64(f[3])?,
            metric: f[4].to_string(),
            mean: parse_f64(f[5])?,
            half_width: parse_f64(f[6])?,
            trials: f[7].parse().map_err(|_| Error::Config(format!("bad trial count in {line:?}")))?,
        });
    }
    Ok(out)
}

pub fn write_bounds_csv<W: Write>(out: &mut W, report: &BoundsReport) -> Result<()> {
    writeln!(out, "{BOUNDS_CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scenario,
            r.quantity,
            fmt_sig17(r.analytic),
            fmt_sig17(r.estimated),
            fmt_sig17(r.std_error),
            fmt_sig17(r.lower),
            fmt_sig17(r.upper),
            if r.pass() { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}

pub fn raw_dir(out_dir: &Path, label: &str) -> PathBuf {
    out_dir.join("raw").join(label)
}

/// Per-trial trajectory and metric-estimate CSVs under `raw/<cell>/`.
pub fn write_raw(batch: &BatchResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for cell in &batch.cells {
        let dir = raw_dir(out_dir, &cell.cell.label());
        for trial in &cell.trials {
            let path = dir.join(format!("trial_{:03}.csv", trial.trial));
            let mut out = create(&path)?;
            write_trajectory_csv(&mut out, &trial.rows)?;
            out.flush()?;
            written.push(path);

            let path = dir.join(format!("trial_{:03}_metrics.csv", trial.trial));
            let mut out = create(&path)?;
            writeln!(out, "{METRIC_CSV_HEADER}")?;
            for row in &trial.rows {
                let s = &row.snapshot;
                let estimates: Vec<(&str, _)> =
                    [("D", s.d), ("U", s.u)].into_iter().filter_map(|(n, e)| e.map(|e| (n, e))).collect();
                write_metric_rows(&mut out, row.t, &estimates)?;
            }
            out.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn write_half_life_csv<W: Write>(out: &mut W, batch: &BatchResult) -> Result<()> {
    writeln!(out, "{HALF_LIFE_CSV_HEADER}")?;
    for cell in &batch.cells {
        for trial in &cell.trials {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                cell.cell.protocol,
                fmt_sig17(cell.cell.comm_radius),
                fmt_sig17(cell.cell.c_z),
                trial.trial,
                trial.seed,
                fmt_sig17(trial.half_life.unwrap_or(f64::NAN))
            )?;
        }
    }
    Ok(())
}

/// Writes the resolved config, raw and aggregate CSVs and charts for a batch.
pub fn write_batch(batch: &BatchResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let name = batch.experiment.name();
    let mut written = Vec::new();

    let path = out_dir.join("config.toml");
    fs::create_dir_all(out_dir)?;
    fs::write(&path, batch.config.to_toml())?;
    written.push(path);

    written.extend(write_raw(batch, out_dir)?);

    let path = out_dir.join(format!("{name}_aggregate.csv"));
    let mut out = create(&path)?;
    write_aggregate_csv(&mut out, batch)?;
    out.flush()?;
    written.push(path.clone());

    if batch.experiment == super::ExperimentKind::Lifetime {
        let path = out_dir.join("lifetime_t50.csv");
        let mut out = create(&path)?;
        write_half_life_csv(&mut out, batch)?;
        out.flush()?;
        written.push(path);
    }

    // Charts are drawn from the file just written, not from memory.
    let records = read_aggregate_csv(BufReader::new(File::open(&path)?))?;
    written.extend(plot::write_charts(batch.experiment, &records, out_dir)?);
    Ok(written)
}

pub fn write_bounds(report: &BoundsReport, config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let config_path = out_dir.join("config.toml");
    fs::write(&config_path, config.to_toml())?;
    let path = out_dir.join("bounds.csv");
    let mut out = create(&path)?;
    write_bounds_csv(&mut out, report)?;
    out.flush()?;
    Ok(vec![config_path, path])
}
