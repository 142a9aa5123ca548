use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::SweepRow;
use crate::error::Result;

pub const CSV_HEADER: &str = "formulation,h,dim,eps,ell,L,estimator0,estimator_eps,iters,cond_est";

/// Write sweep rows as CSV with the fixed header.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Run description written next to every table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub spec: serde_json::Value,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub threads: Option<usize>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn start(command: &str, spec: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            spec,
            started_unix: now(),
            finished_unix: f64::NAN,
            threads: super::thread_cap(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, outputs: &[&Path]) -> Self {
        self.finished_unix = now();
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        self
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(f, manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Formulation;

    #[test]
    fn header_is_fixed() {
        let row = SweepRow {
            formulation: Formulation::Fosls,
            h: 0.125,
            dim: 63,
            eps: 0.125,
            ell: 0,
            big_l: 2,
            estimator0: 0.1,
            estimator_eps: 0.2,
            iters: 7,
            cond_est: 3.5,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "fosls,0.125,63,0.125,0,2,0.1,0.2,7,3.5");
        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), CSV_HEADER);
    }
}
