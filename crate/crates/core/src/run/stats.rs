use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATS_FIELDS: [&str; 8] = [
    "gen",
    "wall_seconds",
    "loss_train",
    "score_sample_mean",
    "score_selected_mean",
    "hadamard_ratio_sample",
    "hadamard_ratio_selected",
    "archive_size",
];

/// One row per generation. Undefined means (e.g. every score infinite) are
/// written as empty fields / `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub gen: usize,
    pub wall_seconds: f64,
    #[serde(with = "nullable")]
    pub loss_train: f64,
    #[serde(with = "nullable")]
    pub score_sample_mean: f64,
    #[serde(with = "nullable")]
    pub score_selected_mean: f64,
    pub hadamard_ratio_sample: f64,
    pub hadamard_ratio_selected: f64,
    pub archive_size: usize,
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() { s.serialize_some(x) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub fn write_csv<W: Write>(rows: &[StatsRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(STATS_FIELDS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(rows: &[StatsRow], mut out: W) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<StatsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != STATS_FIELDS {
        return Err(Error::Parse { line: 1, msg: format!("unexpected statistics header {header:?}") });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
