use std::sync::Arc;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::DataError;

pub const MINUTES_PER_DAY: usize = 1440;
pub const MINUTES_PER_QUARTER_HOUR: usize = 15;

/// One minute of imbalance prices in €/MWh.
///
/// `forecast_price` is the non-validated one-minute price the agent
/// observes; `settlement_price` is the validated price of the enclosing
/// quarter-hour, used for settlement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub timestamp: NaiveDateTime,
    pub forecast_price: f64,
    pub settlement_price: f64,
}

impl PriceRecord {
    pub fn minute_of_day(&self) -> usize {
        (self.timestamp.hour() * 60 + self.timestamp.minute()) as usize
    }
}

/// A complete calendar day: exactly 1440 records, record `i` at minute `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Day {
    date: NaiveDate,
    records: Arc<[PriceRecord]>,
}

impl Day {
    pub fn new(date: NaiveDate, records: Vec<PriceRecord>) -> Result<Self, DataError> {
        if records.len() != MINUTES_PER_DAY {
            return Err(DataError::IncompleteDay {
                date,
                records: records.len(),
            });
        }
        for (i, r) in records.iter().enumerate() {
            let in_place =
                r.timestamp.date() == date && r.minute_of_day() == i && r.timestamp.second() == 0;
            if !in_place || !r.forecast_price.is_finite() || !r.settlement_price.is_finite() {
                return Err(DataError::MalformedDay { date, index: i });
            }
        }
        check_quarter_hours(date, &records)?;
        Ok(Self {
            date,
            records: records.into(),
        })
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn month(&self) -> u32 {
        self.date.month()
    }

    pub fn day_of_month(&self) -> u32 {
        self.date.day()
    }

    pub fn records(&self) -> &[PriceRecord] {
        &self.records
    }

    pub fn forecast(&self, minute: usize) -> f64 {
        self.records[minute].forecast_price
    }

    pub fn settlement(&self, minute: usize) -> f64 {
        self.records[minute].settlement_price
    }
}

/// Settlement prices must agree within each quarter-hour block.
pub(crate) fn check_quarter_hours(
    date: NaiveDate,
    records: &[PriceRecord],
) -> Result<(), DataError> {
    let mut first: Option<(usize, f64)> = None;
    for r in records {
        let qh = r.minute_of_day() / MINUTES_PER_QUARTER_HOUR;
        match first {
            Some((q, p)) if q == qh => {
                if r.settlement_price != p {
                    return Err(DataError::InconsistentSettlement {
                        date,
                        quarter_hour: qh as u32,
                    });
                }
            }
            _ => first = Some((qh, r.settlement_price)),
        }
    }
    Ok(())
}

/// Ordered collection of unique complete days. Cheap to clone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriceSeries {
    days: Vec<Day>,
}

impl PriceSeries {
    /// Sorts by date; rejects duplicates.
    pub fn from_days(mut days: Vec<Day>) -> Result<Self, DataError> {
        days.sort_by_key(Day::date);
        if let Some(w) = days.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(DataError::DuplicateDay(w[0].date));
        }
        Ok(Self { days })
    }

    pub fn days(&self) -> &[Day] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(Day::date).collect()
    }

    /// Merge several series into one; fails if a day occurs twice.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a PriceSeries>) -> Result<Self, DataError> {
        let days = parts
            .into_iter()
            .flat_map(|s| s.days.iter().cloned())
            .collect();
        Self::from_days(days)
    }

    /// Mean and standard deviation of all forecast prices, for feature
    /// normalization.
    pub fn forecast_moments(&self) -> (f64, f64) {
        let n = (self.days.len() * MINUTES_PER_DAY) as f64;
        if n == 0.0 {
            return (0.0, 1.0);
        }
        let prices = || {
            self.days
                .iter()
                .flat_map(|d| d.records.iter().map(|r| r.forecast_price))
        };
        let mean = prices().sum::<f64>() / n;
        let var = prices().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}
