use std::fs::File;
use std::io::{BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::config::{OutputFormat, OutputPaths};
use super::runner::{CoverageRow, ResultRow, SummaryRow, SweepRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub results: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    /// Writes the tables named in `paths`; JSON puts both in each file.
    pub fn save(&self, paths: &OutputPaths) -> Result<()> {
        match paths.format {
            OutputFormat::Csv => {
                if let Some(p) = &paths.results {
                    write_results_csv(&self.results, BufWriter::new(File::create(p)?))?;
                }
                if let Some(p) = &paths.summary {
                    write_summary_csv(&self.summary, BufWriter::new(File::create(p)?))?;
                }
            }
            OutputFormat::Json => {
                for p in paths.results.iter().chain(&paths.summary) {
                    write_json(self, BufWriter::new(File::create(p)?))?;
                }
            }
        }
        Ok(())
    }
}

fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::param("results", "nothing to write"));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `chain_name, alpha_or_params, gamma, estimator, T_or_NA, N,
/// seed_index, estimate, true_mean, abs_error`.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    write_csv(rows, out)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    write_csv(rows, out)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    write_csv(rows, out)
}

pub fn write_coverage_csv<W: Write>(rows: &[CoverageRow], out: W) -> Result<()> {
    write_csv(rows, out)
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<ExperimentOutput> {
    Ok(serde_json::from_reader(input)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;

    fn row(estimate: Option<f64>) -> ResultRow {
        ResultRow {
            chain_name: "c".into(),
            alpha_or_params: "alpha=0.5".into(),
            gamma: 0.9,
            estimator: EstimatorKind::Fhc,
            horizon: Some(10),
            n: 100,
            seed_index: 3,
            estimate,
            true_mean: 0.25,
            abs_error: estimate.map(|e| (e - 0.25f64).abs()),
        }
    }

    #[test]
    fn one_row_gives_header_and_line() {
        let mut buf = Vec::new();
        write_results_csv(&[row(Some(0.5))], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "chain_name,alpha_or_params,gamma,estimator,T_or_NA,N,seed_index,estimate,true_mean,abs_error\n\
             c,alpha=0.5,0.9,FHC,10,100,3,0.5,0.25,0.25\n"
        );
    }

    #[test]
    fn csv_round_trip_with_na_and_failures() {
        let mut a = row(None);
        a.estimator = EstimatorKind::Os;
        a.horizon = None;
        let rows = vec![a, row(Some(0.1 + 0.2))];
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(",OS,NA,100,3,,0.25,\n"));
        assert_eq!(read_results_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn json_round_trip() {
        let out = ExperimentOutput {
            results: vec![row(Some(1.0 / 3.0)), row(None)],
            summary: vec![],
        };
        let mut buf = Vec::new();
        write_json(&out, &mut buf).unwrap();
        assert_eq!(read_json(&buf[..]).unwrap(), out);
    }

    #[test]
    fn empty_tables_are_rejected() {
        assert!(write_results_csv(&[], Vec::new()).is_err());
    }
}
