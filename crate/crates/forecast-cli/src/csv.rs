//! The two CSV formats: monthly series files (`month,value` with consecutive
//! `YYYY-MM` rows) and long-form metric tables
//! (`station,model,rmse,mae,smape[,arank]`).

use std::fs;
use std::path::Path;

use forecast_core::series::{MonthStamp, Series};

use crate::error::CliError;

/// Reads a monthly series. The header must be `month,value`, months must be
/// strictly consecutive, and every value must parse as a finite number.
pub fn ingest_csv(path: &Path) -> Result<Series, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let display = path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "month,value" => {}
        Some((_, header)) => {
            return Err(CliError::Parse {
                path: display,
                row: 1,
                msg: format!("expected header 'month,value', found '{}'", header.trim()),
            })
        }
        None => {
            return Err(CliError::Parse {
                path: display,
                row: 1,
                msg: "empty file".into(),
            })
        }
    }

    let mut values = Vec::new();
    let mut start: Option<MonthStamp> = None;
    let mut prev: Option<MonthStamp> = None;
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (month_s, value_s) = line.split_once(',').ok_or_else(|| CliError::Parse {
            path: display.clone(),
            row,
            msg: "expected 'YYYY-MM,value'".into(),
        })?;
        let month: MonthStamp = month_s.trim().parse().map_err(|e| CliError::Parse {
            path: display.clone(),
            row,
            msg: format!("bad month '{}': {e}", month_s.trim()),
        })?;
        let value: f64 = value_s.trim().parse().map_err(|_| CliError::Parse {
            path: display.clone(),
            row,
            msg: format!("bad value '{}'", value_s.trim()),
        })?;
        if !value.is_finite() {
            return Err(CliError::Parse {
                path: display.clone(),
                row,
                msg: format!("non-finite value '{}'", value_s.trim()),
            });
        }
        if let Some(p) = prev {
            let expected = p.plus_months(1);
            if month == expected {
                // consecutive
            } else if month <= p {
                return Err(CliError::NonMonotone {
                    path: display.clone(),
                    row,
                    prev: p.to_string(),
                    found: month.to_string(),
                });
            } else {
                return Err(CliError::Gap {
                    path: display.clone(),
                    row,
                    expected: expected.to_string(),
                    found: month.to_string(),
                });
            }
        } else {
            start = Some(month);
        }
        prev = Some(month);
        values.push(value);
    }
    let series = Series::monthly(values)?;
    Ok(match start {
        Some(s) => series.with_start(s),
        None => series,
    })
}

/// Writes a series in the same `month,value` format `ingest_csv` reads.
pub fn write_series_csv(path: &Path, series: &Series) -> Result<(), CliError> {
    let mut out = String::from("month,value\n");
    for (i, v) in series.values().iter().enumerate() {
        match series.label_at(i) {
            Some(stamp) => out.push_str(&format!("{stamp},{v}\n")),
            None => out.push_str(&format!("{i},{v}\n")),
        }
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// A long-form metric table: one row per (station, model).
#[derive(Debug, Clone, Default)]
pub struct MetricsRows {
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub station: String,
    pub model: String,
    pub rmse: f64,
    pub mae: f64,
    pub smape: f64,
    pub arank: Option<f64>,
}

/// Reads `station,model,rmse,mae,smape[,arank]`.
pub fn read_metrics_csv(path: &Path) -> Result<MetricsRows, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let display = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let has_arank = match lines.next() {
        Some((_, h)) if h.trim() == "station,model,rmse,mae,smape" => false,
        Some((_, h)) if h.trim() == "station,model,rmse,mae,smape,arank" => true,
        Some((_, h)) => {
            return Err(CliError::Parse {
                path: display,
                row: 1,
                msg: format!("unexpected metrics header '{}'", h.trim()),
            })
        }
        None => {
            return Err(CliError::Parse {
                path: display,
                row: 1,
                msg: "empty file".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if has_arank { 6 } else { 5 };
        if fields.len() != expected {
            return Err(CliError::Parse {
                path: display.clone(),
                row,
                msg: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64, CliError> {
            s.trim().parse().map_err(|_| CliError::Parse {
                path: display.clone(),
                row,
                msg: format!("bad {what} '{}'", s.trim()),
            })
        };
        let arank = if has_arank {
            let s = fields[5].trim();
            if s.is_empty() {
                None
            } else {
                Some(num(s, "arank")?)
            }
        } else {
            None
        };
        rows.push(MetricsRow {
            station: fields[0].trim().to_string(),
            model: fields[1].trim().to_string(),
            rmse: num(fields[2], "rmse")?,
            mae: num(fields[3], "mae")?,
            smape: num(fields[4], "smape")?,
            arank,
        });
    }
    Ok(MetricsRows { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_two_rows() {
        let f = write_temp("month,value\n1948-01,10.5\n1948-02,0.0\n");
        let s = ingest_csv(f.path()).unwrap();
        assert_eq!(s.values(), &[10.5, 0.0]);
        assert_eq!(s.start().unwrap().to_string(), "1948-01");
        assert_eq!(s.period(), 12);
    }

    #[test]
    fn ingest_detects_gap() {
        let f = write_temp("month,value\n1948-01,1\n1948-03,2\n");
        match ingest_csv(f.path()) {
            Err(CliError::Gap { expected, found, row, .. }) => {
                assert_eq!(expected, "1948-02");
                assert_eq!(found, "1948-03");
                assert_eq!(row, 3);
            }
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_detects_non_monotone() {
        let f = write_temp("month,value\n1948-02,1\n1948-01,2\n");
        assert!(matches!(
            ingest_csv(f.path()),
            Err(CliError::NonMonotone { .. })
        ));
    }

    #[test]
    fn ingest_reports_bad_value_with_row() {
        let f = write_temp("month,value\n1948-01,1\n1948-02,abc\n");
        match ingest_csv(f.path()) {
            Err(CliError::Parse { row, msg, .. }) => {
                assert_eq!(row, 3);
                assert!(msg.contains("abc"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_wrong_header() {
        let f = write_temp("date,rain\n1948-01,1\n");
        assert!(matches!(
            ingest_csv(f.path()),
            Err(CliError::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn series_csv_round_trip() {
        let s = forecast_core::series::Series::monthly(vec![1.5, 2.25, 0.0])
            .unwrap()
            .with_start("1999-11".parse().unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_series_csv(&path, &s).unwrap();
        let back = ingest_csv(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn metrics_round_trip_shapes() {
        let f = write_temp(
            "station,model,rmse,mae,smape\nS1,PROP,1.5,1.0,10.0\nS1,LSL,2.5,2.0,20.0\n",
        );
        let rows = read_metrics_csv(f.path()).unwrap();
        assert_eq!(rows.rows.len(), 2);
        assert_eq!(rows.rows[1].model, "LSL");
        assert_eq!(rows.rows[1].smape, 20.0);
        assert!(rows.rows[0].arank.is_none());
    }
}
