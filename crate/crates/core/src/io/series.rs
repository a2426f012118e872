//! CSV ingestion for the analysis fits: `(time, value)` series,
//! `(depth, survival)` series, and `(level, T1, uncertainty)` tables.
//! A leading header row is skipped when the first field is not numeric.

use std::io::Read;

use crate::error::{Error, Result};

fn parse_rows<R: Read>(reader: R, min_cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (idx, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let fields: Vec<&str> = record.iter().map(str::trim).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.len() < min_cols {
                    return Err(Error::Parse(format!(
                        "row {} has {} columns, need {min_cols}",
                        idx + 1,
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!("row {} has non-finite value", idx + 1)));
                }
                rows.push(values);
            }
            Err(_) if idx == 0 => continue, // header row
            Err(_) => {
                return Err(Error::Parse(format!("row {} is not numeric", idx + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(rows)
}

/// `(x, y)` series such as `(time µs, population)` or `(depth, survival)`.
pub fn read_xy<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = parse_rows(reader, 2)?;
    Ok(rows.iter().map(|r| (r[0], r[1])).unzip())
}

/// `(level, T1 µs, optional uncertainty)` rows.
pub fn read_t1_table<R: Read>(reader: R) -> Result<Vec<(usize, f64, Option<f64>)>> {
    let rows = parse_rows(reader, 2)?;
    rows.iter()
        .map(|r| {
            let level = r[0];
            if level < 0.0 || level.fract() != 0.0 || level > 1e6 {
                return Err(Error::Parse(format!("bad level index {level}")));
            }
            if r[1] <= 0.0 {
                return Err(Error::Parse(format!("nonpositive T1 {}", r[1])));
            }
            Ok((level as usize, r[1], r.get(2).copied()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_xy_with_and_without_header() {
        let (x, y) = read_xy("time_us,population\n0.0,1.0\n1.0,0.5".as_bytes()).unwrap();
        assert_eq!(x, vec![0.0, 1.0]);
        assert_eq!(y, vec![1.0, 0.5]);
        let (x2, _) = read_xy("0.0,1.0\n2.0,0.25".as_bytes()).unwrap();
        assert_eq!(x2, vec![0.0, 2.0]);
    }

    #[test]
    fn reads_t1_table() {
        let table = read_t1_table("level,t1_us,err_us\n1,64,15\n2,34,8".as_bytes()).unwrap();
        assert_eq!(table[0], (1, 64.0, Some(15.0)));
        assert_eq!(table[1], (2, 34.0, Some(8.0)));
        assert!(read_t1_table("1.5,64".as_bytes()).is_err());
        assert!(read_t1_table("1,-3".as_bytes()).is_err());
    }

    #[test]
    fn rejects_garbage_rows() {
        assert!(read_xy("0.0,1.0\nhello,world".as_bytes()).is_err());
        assert!(read_xy("".as_bytes()).is_err());
        assert!(read_xy("1.0\n2.0".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn never_panics_on_junk(text in "\\PC*") {
            let _ = read_xy(text.as_bytes());
            let _ = read_t1_table(text.as_bytes());
        }
    }
}
