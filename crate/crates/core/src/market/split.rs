use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Day, PriceSeries};

/// Day-of-month partition into train / validation / test.
///
/// Train is days `1..=train_last_day`, validation is
/// `train_last_day+1..=validation_last_day`, test is everything after.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_last_day: u32,
    pub validation_last_day: u32,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_last_day: 20,
            validation_last_day: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl SplitSpec {
    pub fn new(train_last_day: u32, validation_last_day: u32) -> Result<Self, DataError> {
        let spec = Self {
            train_last_day,
            validation_last_day,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.train_last_day > self.validation_last_day || self.validation_last_day > 31 {
            return Err(DataError::InvalidSplit(format!(
                "need train_last_day <= validation_last_day <= 31, got {} / {}",
                self.train_last_day, self.validation_last_day
            )));
        }
        Ok(())
    }

    pub fn partition(&self, day_of_month: u32) -> Partition {
        if day_of_month <= self.train_last_day {
            Partition::Train
        } else if day_of_month <= self.validation_last_day {
            Partition::Validation
        } else {
            Partition::Test
        }
    }
}

/// Returns `(train, validation, test)`.
pub fn split(
    series: &PriceSeries,
    spec: &SplitSpec,
) -> Result<(PriceSeries, PriceSeries, PriceSeries), DataError> {
    spec.validate()?;
    if series.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for day in series.days() {
        match spec.partition(day.day_of_month()) {
            Partition::Train => train.push(day.clone()),
            Partition::Validation => val.push(day.clone()),
            Partition::Test => test.push(day.clone()),
        }
    }
    Ok((
        PriceSeries::from_days(train)?,
        PriceSeries::from_days(val)?,
        PriceSeries::from_days(test)?,
    ))
}

/// Uniformly draw one day of the split.
pub fn sample_episode<'a, R: Rng + ?Sized>(
    series: &'a PriceSeries,
    rng: &mut R,
) -> Result<&'a Day, DataError> {
    if series.is_empty() {
        return Err(DataError::EmptySeries);
    }
    Ok(&series.days()[rng.random_range(0..series.len())])
}
