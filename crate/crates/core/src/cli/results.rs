//! Results CSV: one row per (run, iteration).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::train::{CurveRecord, GradMode, Problem};

pub const HEADER: [&str; 9] = [
    "run",
    "iteration",
    "loss",
    "cos_sim_mean",
    "cos_sim_min",
    "descent_fraction",
    "grad_mode",
    "problem",
    "seed",
];

/// Trailer written after the rows of a run that did not finish.
pub const ABORTED: &str = "# aborted";

/// `%.9g`: nine significant digits, trailing zeros trimmed.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A parsed CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run: usize,
    pub iteration: usize,
    pub loss: f64,
    pub cos_sim_mean: f64,
    pub cos_sim_min: f64,
    pub descent_fraction: f64,
    pub grad_mode: GradMode,
    pub problem: Problem,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("header mismatch: expected {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error("no data rows")]
    Empty,
}

/// Writes the header and one row per record. `aborted` appends the trailer.
pub fn write_results<W: Write>(
    out: W,
    records: &[CurveRecord],
    mode: GradMode,
    problem: Problem,
    seed: u64,
    aborted: bool,
) -> Result<(), ResultsError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(HEADER)?;
    for r in records {
        writer.write_record([
            r.run.to_string(),
            r.iteration.to_string(),
            fmt_sig9(r.loss),
            fmt_sig9(r.cos_sim_mean),
            fmt_sig9(r.cos_sim_min),
            fmt_sig9(r.descent_fraction),
            mode.name().to_string(),
            problem.name().to_string(),
            seed.to_string(),
        ])?;
    }
    let mut out = writer.into_inner().map_err(|e| e.into_error())?;
    if aborted {
        writeln!(out, "{ABORTED}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a results file. Lines starting with `#` are skipped. Row numbers in
/// errors count the header as row 1.
pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>, ResultsError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(ResultsError::Header {
            expected: HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row_number = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(k + 2, |p| p.line() as usize);
        let record = record.map_err(|e| ResultsError::Row {
            row: row_number,
            message: e.to_string(),
        })?;
        let row: ResultRow = record.deserialize(Some(&headers)).map_err(|e| ResultsError::Row {
            row: row_number,
            message: e.to_string(),
        })?;
        let reals = [row.loss, row.cos_sim_mean, row.cos_sim_min, row.descent_fraction];
        if reals.iter().any(|x| !x.is_finite()) {
            return Err(ResultsError::Row {
                row: row_number,
                message: "non-finite value".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ResultsError::Empty);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(run: usize, iteration: usize, loss: f64) -> CurveRecord {
        CurveRecord {
            run,
            iteration,
            loss,
            cos_sim_mean: 0.5,
            cos_sim_min: -0.25,
            descent_fraction: 0.9,
            theta_cos_sim: None,
        }
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-0.5), "-0.5");
        assert_eq!(fmt_sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(fmt_sig9(123456.789012), "123456.789");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(1.23456789012e-7), "1.23456789e-7");
        assert_eq!(fmt_sig9(0.000108457496), "0.000108457496");
        assert_eq!(fmt_sig9(0.0000108457496), "1.08457496e-5");
        assert_eq!(fmt_sig9(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_sig9(0.99999999999), "1");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(1234567890.0), "1.23456789e9");
    }

    #[test]
    fn round_trip() {
        let records = vec![record(0, 0, 1.5), record(0, 1, 0.25), record(1, 0, 2.0)];
        let mut buf = Vec::new();
        write_results(&mut buf, &records, GradMode::Approx, Problem::Ot, 7, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run,iteration,loss,cos_sim_mean,cos_sim_min,descent_fraction,grad_mode,problem,seed\n"));
        assert!(!text.contains('\r'));
        assert!(text.contains("\n0,1,0.25,0.5,-0.25,0.9,approx,ot,7\n"));
        let rows = read_results(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].loss, 0.25);
        assert_eq!(rows[2].run, 1);
        assert_eq!(rows[0].grad_mode, GradMode::Approx);
    }

    #[test]
    fn aborted_trailer_is_skipped_on_read() {
        let mut buf = Vec::new();
        write_results(&mut buf, &[record(0, 0, 1.0)], GradMode::Exact, Problem::Eigen, 1, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.ends_with("\n# aborted\n"));
        assert_eq!(read_results(buf.as_slice()).unwrap().len(), 1);
    }

    #[test]
    fn errors_carry_row_numbers() {
        let bad = format!("{}\n0,0,1,0,0,1,exact,sphere,0\n0,1,oops,0,0,1,exact,sphere,0\n", HEADER.join(","));
        match read_results(bad.as_bytes()) {
            Err(ResultsError::Row { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        let bad_mode = format!("{}\n0,0,1,0,0,1,sideways,sphere,0\n", HEADER.join(","));
        assert!(matches!(read_results(bad_mode.as_bytes()), Err(ResultsError::Row { row: 2, .. })));
    }

    #[test]
    fn empty_and_wrong_header_rejected() {
        assert!(read_results("".as_bytes()).is_err());
        assert!(matches!(read_results(format!("{}\n", HEADER.join(",")).as_bytes()), Err(ResultsError::Empty)));
        assert!(matches!(read_results("a,b\n1,2\n".as_bytes()), Err(ResultsError::Header { .. })));
    }
}
