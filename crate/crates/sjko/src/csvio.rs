//! CSV files: point clouds, training traces, metrics and benchmark results.
//!
//! Floats are written with 17 significant digits so that reading a file back
//! reproduces every value bitwise.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use sjko_core::datasets::{CloudMeta, ParticleCloud};
use sjko_core::sjko::TrainingTrace;
use sjko_core::RealTensor;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    let err = |e: csv::Error| CliError::format(path, e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// One point per row under the header `x0,…,x{d−1}`.
pub fn write_cloud(path: &Path, cloud: &ParticleCloud) -> CliResult<()> {
    let header: Vec<String> = (0..cloud.dim()).map(|j| format!("x{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        path,
        &header,
        (0..cloud.len()).map(|i| cloud.point(i).iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>()),
    )
}

pub fn read_cloud(path: &Path) -> CliResult<ParticleCloud> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = r.headers().map_err(|e| CliError::format(path, e.to_string()))?.clone();
    let d = header.len();
    if d == 0 || header.iter().enumerate().any(|(j, h)| h.trim() != format!("x{j}")) {
        return Err(CliError::format(path, "expected a header x0,x1,..."));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
        if rec.len() != d {
            return Err(CliError::format(
                path,
                format!("row {} has {} fields, expected {d}", line + 1, rec.len()),
            ));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::format(path, format!("row {}: not a number: {field:?}", line + 1)))?;
            if !v.is_finite() {
                return Err(CliError::format(path, format!("row {}: non-finite value", line + 1)));
            }
            data.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::format(path, "no points"));
    }
    let points = RealTensor::matrix(n, d, data)?;
    let origin = path
        .file_name()
        .map_or_else(|| "file".into(), |s| s.to_string_lossy().into_owned());
    Ok(ParticleCloud::new(points, CloudMeta::new(origin, 0))?)
}

/// Losses per iteration; deterministic for a given configuration and seed.
pub fn write_trace(path: &Path, trace: &TrainingTrace) -> CliResult<()> {
    write_rows(
        path,
        &["phase", "iteration", "loss_potential", "loss_transport", "r1"],
        trace.iterations.iter().map(|r| {
            vec![
                r.phase.to_string(),
                r.iteration.to_string(),
                fmt_f64(r.loss_potential),
                fmt_f64(r.loss_transport),
                fmt_f64(r.r1),
            ]
        }),
    )
}

/// Wall-clock seconds per iteration.
pub fn write_timing(path: &Path, trace: &TrainingTrace) -> CliResult<()> {
    write_rows(
        path,
        &["phase", "iteration", "seconds", "elapsed"],
        trace.iterations.iter().map(|r| {
            vec![
                r.phase.to_string(),
                r.iteration.to_string(),
                fmt_f64(r.seconds),
                fmt_f64(r.elapsed),
            ]
        }),
    )
}

/// Per-phase metrics in long format.
pub fn write_metrics(path: &Path, trace: &TrainingTrace) -> CliResult<()> {
    write_rows(
        path,
        &["phase", "metric", "value"],
        trace.phases.iter().flat_map(|p| {
            p.metrics
                .iter()
                .map(move |(k, v)| vec![p.phase.to_string(), k.clone(), fmt_f64(*v)])
        }),
    )
}

/// `metric,value` pairs.
pub fn write_report(path: &Path, rows: &[(String, f64)]) -> CliResult<()> {
    write_rows(
        path,
        &["metric", "value"],
        rows.iter().map(|(k, v)| vec![k.clone(), fmt_f64(*v)]),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub dim: usize,
    pub time: f64,
    pub sym_kl: f64,
    pub seed: u64,
}

impl ResultRow {
    pub fn log10_sym_kl(&self) -> f64 {
        self.sym_kl.log10()
    }
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> CliResult<()> {
    write_rows(
        path,
        &["method", "d", "t", "sym_kl", "log10_sym_kl", "seed"],
        rows.iter().map(|r| {
            vec![
                r.method.clone(),
                r.dim.to_string(),
                fmt_f64(r.time),
                fmt_f64(r.sym_kl),
                fmt_f64(r.log10_sym_kl()),
                r.seed.to_string(),
            ]
        }),
    )
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bitwise() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0, -0.0] {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn cloud_round_trip_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let pts = RealTensor::matrix(3, 2, vec![0.1, 0.2, -1.0 / 3.0, 4.0, 1e-17, -8.0]).unwrap();
        let cloud = ParticleCloud::new(pts, CloudMeta::new("t", 0)).unwrap();
        write_cloud(&p, &cloud).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("x0,x1\n"));
        assert_eq!(read_cloud(&p).unwrap().points, cloud.points);

        let bad = dir.path().join("bad.csv");
        for body in [
            "",
            "x0,x1\n",
            "x0,x1\n1,2\n3\n",
            "x0,x1\n1,abc\n",
            "a,b\n1,2\n",
            "x0\nNaN\n",
        ] {
            std::fs::write(&bad, body).unwrap();
            assert!(read_cloud(&bad).is_err(), "{body:?}");
        }
        assert!(read_cloud(&dir.path().join("missing.csv")).is_err());
    }
}
