use std::path::Path;

use super::LoadReport;
use crate::ca::{Features, LogitSample};
use crate::error::{Error, Result};

const COLUMNS: [&str; 4] = ["size_ha", "compactness", "density", "urban"];

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "urban" | "yes" => Some(true),
        "0" | "false" | "non_urban" | "no" => Some(false),
        _ => None,
    }
}

/// Labeled calibration samples from delimited text with the columns
/// `size_ha, compactness, density, urban` (in any order, extra columns
/// ignored). Labels accept `1/0`, `true/false`, `urban/non_urban`.
pub fn load_logit_samples(path: &Path) -> Result<(Vec<LogitSample>, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::file(path, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::file(path, e.to_string()))?
        .clone();
    let mut idx = [0usize; 4];
    for (k, name) in COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::file(path, format!("missing column `{name}`")))?;
    }
    let mut report = LoadReport::default();
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let parsed = record.ok().and_then(|r| {
            let num = |k: usize| {
                r.get(idx[k])
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            };
            Some(LogitSample {
                features: Features::new(num(0)?, num(1)?, num(2)?),
                urban: parse_label(r.get(idx[3])?)?,
            })
        });
        match parsed {
            Some(s) => {
                samples.push(s);
                report.loaded += 1;
            }
            None => report.skip(format!("{}: line {line}: malformed sample", path.display())),
        }
    }
    Ok((samples, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(
            &p,
            "urban,size_ha,density,compactness\n1,2.5,0.3,0.7\nurban,1,0.2,0.5\nx,1,1,1\n",
        )
        .unwrap();
        let (s, report) = load_logit_samples(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].features, Features::new(2.5, 0.7, 0.3));
        assert!(s[1].urban);
        assert_eq!(report.skipped, 1);
    }
}
