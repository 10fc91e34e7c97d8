//! Metrics CSV writing and parsing. The schema is stable:
//! `episode,seed,beta,return_raw,return_shaped,success,ptr,pred_correct,steps`
//! with LF line endings, UTF-8, floats at 9 significant digits.

use std::io::{BufRead, Write};

use crate::metrics::MetricRow;

use super::HarnessError;

pub const CSV_HEADER: &str = "episode,seed,beta,return_raw,return_shaped,success,ptr,pred_correct,steps";

/// Rounds to 9 significant digits and prints the shortest representation
/// that round-trips, so output is both stable and readable.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(8 - exp);
    let rounded = (x * scale).round() / scale;
    format!("{rounded}")
}

pub fn write_rows<W: Write>(mut w: W, rows: &[MetricRow]) -> Result<(), HarnessError> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        write_row(&mut w, r)?;
    }
    Ok(())
}

pub fn write_row<W: Write>(w: &mut W, r: &MetricRow) -> Result<(), HarnessError> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{}",
        r.episode,
        r.seed,
        fmt_sig9(r.beta),
        fmt_sig9(r.return_raw),
        fmt_sig9(r.return_shaped),
        r.success as u8,
        fmt_sig9(r.ptr),
        r.pred_correct as u8,
        r.steps
    )?;
    Ok(())
}

pub fn read_rows<R: BufRead>(r: R) -> Result<Vec<MetricRow>, HarnessError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != CSV_HEADER {
                return Err(HarnessError::Csv(format!("unexpected header `{line}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(HarnessError::Csv(format!(
                "line {}: expected 9 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let err = |field: &str, e: String| HarnessError::Csv(format!("line {}: {field}: {e}", i + 1));
        rows.push(MetricRow {
            episode: fields[0].parse().map_err(|e: std::num::ParseIntError| err("episode", e.to_string()))?,
            seed: fields[1].parse().map_err(|e: std::num::ParseIntError| err("seed", e.to_string()))?,
            beta: fields[2].parse().map_err(|e: std::num::ParseFloatError| err("beta", e.to_string()))?,
            return_raw: fields[3].parse().map_err(|e: std::num::ParseFloatError| err("return_raw", e.to_string()))?,
            return_shaped: fields[4].parse().map_err(|e: std::num::ParseFloatError| err("return_shaped", e.to_string()))?,
            success: fields[5] == "1",
            ptr: fields[6].parse().map_err(|e: std::num::ParseFloatError| err("ptr", e.to_string()))?,
            pred_correct: fields[7] == "1",
            steps: fields[8].parse().map_err(|e: std::num::ParseIntError| err("steps", e.to_string()))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(0.415), "0.415");
        assert_eq!(fmt_sig9(0.01), "0.01");
        assert_eq!(fmt_sig9(-1.3), "-1.3");
        assert_eq!(fmt_sig9(std::f64::consts::LN_2), "0.693147181");
        assert_eq!(fmt_sig9(123456789.123), "123456789");
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            MetricRow {
                episode: 0,
                seed: 3,
                beta: 0.01,
                return_raw: -1.2345678912345,
                return_shaped: -1.2,
                success: true,
                ptr: 0.3,
                pred_correct: false,
                steps: 17,
            },
            MetricRow {
                episode: 1,
                seed: 3,
                beta: 0.01,
                return_raw: 0.0,
                return_shaped: 0.9,
                success: false,
                ptr: 1.0,
                pred_correct: true,
                steps: 50,
            },
        ];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(!text.contains('\r'));
        let back = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].steps, 17);
        assert_eq!(back[0].success, true);
        assert!((back[0].return_raw - (-1.23456789)).abs() < 1e-7);
        assert_eq!(back[1].ptr, 1.0);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_rows("nope\n1,2,3\n".as_bytes()).is_err());
    }
}
