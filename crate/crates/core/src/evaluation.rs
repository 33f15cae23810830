//! Metrics, tidy result records and their per-group summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean absolute error over the cells in `cells`.
pub fn mae(truth: impl Fn(usize, usize) -> f64, predictions: &Mat<f64>, cells: &[(usize, usize)]) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::InvalidParameter("no cells to evaluate".into()));
    }
    let total: f64 = cells.iter().map(|&(i, j)| (truth(i, j) - predictions[(i, j)]).abs()).sum();
    Ok(total / cells.len() as f64)
}

/// Mean prediction shift of `target` over `rows`: the average of
/// `after - before`, negative when an attack demotes the item.
pub fn mps(before: &Mat<f64>, after: &Mat<f64>, target: usize, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("the target column has no missing cells".into()));
    }
    let total: f64 = rows.iter().map(|&i| after[(i, target)] - before[(i, target)]).sum();
    Ok(total / rows.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Mps,
    /// Mean wall time per `lambda` of the final path, in milliseconds.
    Time,
}

/// One tidy output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub replication: usize,
    pub method: String,
    pub loss: String,
    pub stopping: String,
    pub levels: u8,
    pub missingness: String,
    pub attack: String,
    pub epsilon: f64,
    pub metric: Metric,
    pub value: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
}

pub fn write_records<W: Write>(writer: W, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Box-plot statistics of one group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub loss: String,
    pub stopping: String,
    pub levels: u8,
    pub missingness: String,
    pub attack: String,
    pub epsilon: f64,
    pub metric: Metric,
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Quartiles per (method, loss, stopping, K, missingness, attack, epsilon,
/// metric) group, in group order.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    type Key = (String, String, String, u8, String, String, u64, Metric);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = (
            r.method.clone(),
            r.loss.clone(),
            r.stopping.clone(),
            r.levels,
            r.missingness.clone(),
            r.attack.clone(),
            r.epsilon.to_bits(),
            r.metric,
        );
        groups.entry(key).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((method, loss, stopping, levels, missingness, attack, eps, metric), mut values)| {
            values.sort_by(f64::total_cmp);
            SummaryRow {
                method,
                loss,
                stopping,
                levels,
                missingness,
                attack,
                epsilon: f64::from_bits(eps),
                metric,
                count: values.len(),
                q1: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q3: quantile(&values, 0.75),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
