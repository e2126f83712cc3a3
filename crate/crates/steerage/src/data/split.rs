//! Contiguous train/test split: the earliest ceil(fraction·T) records train,
//! the rest test, never shuffled across the boundary.

use super::record::DrivingRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<DrivingRecord>,
    n_train: usize,
}

impl Dataset {
    pub fn records(&self) -> &[DrivingRecord] {
        &self.records
    }

    pub fn train(&self) -> &[DrivingRecord] {
        &self.records[..self.n_train]
    }

    pub fn test(&self) -> &[DrivingRecord] {
        &self.records[self.n_train..]
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }
}

pub fn split(records: Vec<DrivingRecord>, train_fraction: f64) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::contract("cannot split an empty record list"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * records.len() as f64).ceil() as usize;
    let n_train = n_train.min(records.len());
    if n_train == records.len() {
        log::warn!(
            "split leaves an empty test set ({} records, fraction {train_fraction})",
            records.len()
        );
    }
    Ok(Dataset { records, n_train })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<DrivingRecord> {
        (0..n)
            .map(|t| DrivingRecord {
                t,
                timestamp_ns: None,
                frame_path: String::new(),
                angle: 0.0,
                throttle: 0.0,
                brake: 0.0,
            })
            .collect()
    }

    #[test]
    fn hundred_records_split_75_25() {
        let ds = split(records(100), 0.75).unwrap();
        assert_eq!(ds.train().len(), 75);
        assert_eq!(ds.test().len(), 25);
    }

    #[test]
    fn single_record_goes_to_train() {
        let ds = split(records(1), 0.75).unwrap();
        assert_eq!(ds.train().len(), 1);
        assert!(ds.test().is_empty());
    }

    #[test]
    fn split_is_a_temporally_contiguous_partition() {
        let ds = split(records(41), 0.75).unwrap();
        assert_eq!(ds.train().len() + ds.test().len(), 41);
        let max_train = ds.train().iter().map(|r| r.t).max().unwrap();
        let min_test = ds.test().iter().map(|r| r.t).min().unwrap();
        assert!(max_train < min_test);
    }

    #[test]
    fn empty_input_is_a_contract_error() {
        assert_eq!(split(vec![], 0.75).unwrap_err().kind_tag(), "contract");
    }

    #[test]
    fn out_of_range_fraction_is_a_config_error() {
        assert_eq!(split(records(3), 1.0).unwrap_err().kind_tag(), "config");
        assert_eq!(split(records(3), 0.0).unwrap_err().kind_tag(), "config");
    }
}
