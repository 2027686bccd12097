use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::record::check_quarter_hours;
use super::{DataError, Day, PriceRecord, PriceSeries, MINUTES_PER_DAY};

/// Column mapping for a delimiter-separated price file with a header row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceFileFormat {
    pub delimiter: char,
    pub timestamp_column: String,
    pub forecast_column: String,
    pub settlement_column: String,
}

impl Default for PriceFileFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            timestamp_column: "timestamp".into(),
            forecast_column: "forecast".into(),
            settlement_column: "settlement".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub series: PriceSeries,
    /// Days dropped because they did not hold exactly 1440 minutes.
    pub discarded: Vec<NaiveDate>,
}

const NAIVE_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
];

/// Wall-clock timestamps are taken verbatim; a UTC offset, if present, is
/// dropped without conversion.
fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    NAIVE_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .or_else(|| {
            DateTime::parse_from_rfc3339(raw)
                .ok()
                .map(|t| t.naive_local())
        })
        .or_else(|| {
            DateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M%:z")
                .ok()
                .map(|t| t.naive_local())
        })
}

fn parse_price(raw: &str, row: u64, what: &str) -> Result<f64, DataError> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::Parse {
            row,
            message: format!("invalid {what} price `{raw}`"),
        }),
    }
}

pub fn load_prices(
    path: impl AsRef<Path>,
    format: &PriceFileFormat,
) -> Result<LoadReport, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_prices(file, format)
}

pub(crate) fn read_prices(
    input: impl std::io::Read,
    format: &PriceFileFormat,
) -> Result<LoadReport, DataError> {
    let delimiter = u8::try_from(format.delimiter).map_err(|_| DataError::Parse {
        row: 1,
        message: "delimiter must be ASCII".into(),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => return Err(DataError::NoCompleteDays),
    };
    if headers.is_empty() {
        return Err(DataError::NoCompleteDays);
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_col = column(&format.timestamp_column)?;
    let fc_col = column(&format.forecast_column)?;
    let st_col = column(&format.settlement_column)?;

    let mut rows: Vec<(u64, PriceRecord)> = Vec::new();
    for result in reader.records() {
        let record = result?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |i: usize| {
            record.get(i).ok_or_else(|| DataError::Parse {
                row,
                message: format!("missing field {i}"),
            })
        };
        let raw_ts = field(ts_col)?;
        let timestamp = parse_timestamp(raw_ts)
            .filter(|t| t.second() == 0 && t.nanosecond() == 0)
            .ok_or_else(|| DataError::Parse {
                row,
                message: format!("invalid minute timestamp `{raw_ts}`"),
            })?;
        rows.push((
            row,
            PriceRecord {
                timestamp,
                forecast_price: parse_price(field(fc_col)?, row, "forecast")?,
                settlement_price: parse_price(field(st_col)?, row, "settlement")?,
            },
        ));
    }

    rows.sort_by_key(|(_, r)| r.timestamp);
    if let Some(w) = rows
        .windows(2)
        .find(|w| w[0].1.timestamp == w[1].1.timestamp)
    {
        return Err(DataError::DuplicateTimestamp {
            row: w[0].0.max(w[1].0),
            timestamp: w[1].1.timestamp,
        });
    }

    let mut by_day: BTreeMap<NaiveDate, Vec<PriceRecord>> = BTreeMap::new();
    for (_, r) in rows {
        by_day.entry(r.timestamp.date()).or_default().push(r);
    }

    let mut days = Vec::new();
    let mut discarded = Vec::new();
    for (date, records) in by_day {
        check_quarter_hours(date, &records)?;
        if records.len() == MINUTES_PER_DAY {
            days.push(Day::new(date, records)?);
        } else {
            discarded.push(date);
        }
    }
    if days.is_empty() {
        return Err(DataError::NoCompleteDays);
    }
    Ok(LoadReport {
        series: PriceSeries::from_days(days)?,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write;

    fn day_csv(out: &mut String, date: &str, skip_minute: Option<usize>) {
        for m in 0..MINUTES_PER_DAY {
            if Some(m) == skip_minute {
                continue;
            }
            let qh = m / 15;
            writeln!(
                out,
                "{date}T{:02}:{:02},{},{}",
                m / 60,
                m % 60,
                m as f64 * 0.5,
                qh * 10
            )
            .unwrap();
        }
    }

    fn load_str(s: &str) -> Result<LoadReport, DataError> {
        read_prices(s.as_bytes(), &PriceFileFormat::default())
    }

    #[test]
    fn discards_incomplete_day() {
        let mut s = String::from("timestamp,forecast,settlement\n");
        day_csv(&mut s, "2022-03-01", None);
        day_csv(&mut s, "2022-03-02", None);
        day_csv(&mut s, "2022-03-03", Some(700));
        day_csv(&mut s, "2022-03-04", None);
        let report = load_str(&s).unwrap();
        assert_eq!(report.series.len(), 3);
        assert_eq!(
            report.discarded,
            vec![NaiveDate::from_ymd_opt(2022, 3, 3).unwrap()]
        );
        assert_eq!(report.series.days()[0].month(), 3);
    }

    #[test]
    fn empty_file_has_no_complete_days() {
        assert!(matches!(load_str(""), Err(DataError::NoCompleteDays)));
        assert!(matches!(
            load_str("timestamp,forecast,settlement\n"),
            Err(DataError::NoCompleteDays)
        ));
    }

    #[test]
    fn inconsistent_quarter_hour_is_named() {
        let mut s = String::from("timestamp,forecast,settlement\n");
        day_csv(&mut s, "2022-03-01", None);
        let s = s.replace("2022-03-01T07:03,211.5,280", "2022-03-01T07:03,211.5,999");
        match load_str(&s) {
            Err(DataError::InconsistentSettlement { date, quarter_hour }) => {
                assert_eq!(date, NaiveDate::from_ymd_opt(2022, 3, 1).unwrap());
                assert_eq!(quarter_hour, 28);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_row() {
        let s = "timestamp,forecast,settlement\n2022-01-01T00:00,1,1\n2022-01-01T00:01,abc,1\n";
        match load_str(s) {
            Err(DataError::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let s = "timestamp,forecast,settlement\n2022-01-01T00:00,1,1\n2022-01-01T00:00,2,1\n";
        assert!(matches!(
            load_str(s),
            Err(DataError::DuplicateTimestamp { .. })
        ));
    }

    #[test]
    fn custom_columns_and_delimiter() {
        let mut s = String::from("when;settle;minute_price\n");
        for m in 0..MINUTES_PER_DAY {
            writeln!(
                s,
                "2022-02-01 {:02}:{:02}:00;-5;{}",
                m / 60,
                m % 60,
                -(m as f64)
            )
            .unwrap();
        }
        let format = PriceFileFormat {
            delimiter: ';',
            timestamp_column: "when".into(),
            forecast_column: "minute_price".into(),
            settlement_column: "settle".into(),
        };
        let report = read_prices(s.as_bytes(), &format).unwrap();
        let day = &report.series.days()[0];
        assert_eq!(day.forecast(10), -10.0);
        assert_eq!(day.settlement(10), -5.0);
    }

    #[test]
    fn missing_column() {
        let format = PriceFileFormat {
            settlement_column: "nope".into(),
            ..Default::default()
        };
        let r = read_prices("timestamp,forecast,settlement\n".as_bytes(), &format);
        assert!(matches!(r, Err(DataError::MissingColumn(c)) if c == "nope"));
    }

    #[test]
    fn offset_is_dropped_verbatim() {
        let t = parse_timestamp("2022-03-27T02:30:00+02:00").unwrap();
        assert_eq!(t.to_string(), "2022-03-27 02:30:00");
    }
}
