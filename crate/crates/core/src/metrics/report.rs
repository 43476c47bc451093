use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EpisodeResult, InfractionKind, MetricsError};

/// Column order of every report.
pub const CSV_COLUMNS: [&str; 11] = [
    "DS", "RC", "IS", "Ped", "Veh", "Stat", "Red", "Stop", "Dev", "TO", "Block",
];

pub const STD_CONVENTION: &str = "sample standard deviation (n-1) over per-seed means";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One line of metrics: DS, RC, IS and the eight per-km rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub ds: f64,
    pub rc: f64,
    pub is_: f64,
    /// Per-km rates indexed by [`InfractionKind::index`].
    pub rates: [f64; 8],
}

impl MetricRow {
    pub fn values(&self) -> [f64; 11] {
        let mut v = [0.0; 11];
        v[0] = self.ds;
        v[1] = self.rc;
        v[2] = self.is_;
        v[3..].copy_from_slice(&self.rates);
        v
    }

    fn from_values(v: [f64; 11]) -> Self {
        let mut rates = [0.0; 8];
        rates.copy_from_slice(&v[3..]);
        MetricRow {
            ds: v[0],
            rc: v[1],
            is_: v[2],
            rates,
        }
    }

    pub fn rate(&self, kind: InfractionKind) -> f64 {
        self.rates[kind.index()]
    }

    pub fn of_episode(r: &EpisodeResult) -> Self {
        let mut rates = [0.0; 8];
        for (k, v) in &r.per_km {
            rates[k.index()] = *v;
        }
        MetricRow {
            ds: r.ds,
            rc: r.rc,
            is_: r.is_,
            rates,
        }
    }

    /// DS, RC and IS are averaged per episode. Rates pool counts and
    /// kilometers over the group.
    pub fn pooled(results: &[&EpisodeResult]) -> Result<Self, MetricsError> {
        if results.is_empty() {
            return Err(MetricsError::Empty);
        }
        let n = results.len() as f64;
        let km: f64 = results.iter().map(|r| r.km_driven).sum();
        let mut counts = [0u32; 8];
        for r in results {
            for (c, x) in counts.iter_mut().zip(r.counts()) {
                *c += x;
            }
        }
        let rates = if km > 0.0 {
            counts.map(|c| c as f64 / km)
        } else {
            [0.0; 8]
        };
        Ok(MetricRow {
            ds: results.iter().map(|r| r.ds).sum::<f64>() / n,
            rc: results.iter().map(|r| r.rc).sum::<f64>() / n,
            is_: results.iter().map(|r| r.is_).sum::<f64>() / n,
            rates,
        })
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn seed_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub std_convention: String,
    pub columns: Vec<String>,
    /// Episodes in run order.
    pub episodes: Vec<EpisodeResult>,
    pub seeds: Vec<u64>,
    /// Over all episodes.
    pub mean: MetricRow,
    /// Between per-seed means.
    pub std: MetricRow,
}

/// Aggregates episodes of any number of routes, seeds and evaluations.
pub fn aggregate(results: &[EpisodeResult]) -> Result<BenchmarkReport, MetricsError> {
    let all: Vec<&EpisodeResult> = results.iter().collect();
    let mean = MetricRow::pooled(&all)?;
    let mut by_seed: BTreeMap<u64, Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        by_seed.entry(r.seed).or_default().push(r);
    }
    let seed_rows = by_seed
        .values()
        .map(|g| MetricRow::pooled(g).map(|m| m.values()))
        .collect::<Result<Vec<_>, _>>()?;
    let std = MetricRow::from_values(std::array::from_fn(|c| {
        seed_std(&seed_rows.iter().map(|r| r[c]).collect::<Vec<_>>())
    }));
    Ok(BenchmarkReport {
        std_convention: STD_CONVENTION.to_string(),
        columns: CSV_COLUMNS.iter().map(|c| c.to_string()).collect(),
        episodes: results.to_vec(),
        seeds: by_seed.keys().copied().collect(),
        mean,
        std,
    })
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per episode followed by `mean` and `std` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["row", "route", "seed", "eval"];
        header.extend(CSV_COLUMNS);
        out.write_record(&header)?;
        for e in &self.episodes {
            let mut rec = vec![
                "episode".to_string(),
                e.route.clone(),
                e.seed.to_string(),
                e.eval.to_string(),
            ];
            rec.extend(MetricRow::of_episode(e).values().iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        for (label, row) in [("mean", &self.mean), ("std", &self.std)] {
            let mut rec = vec![label.to_string(), "all".into(), String::new(), String::new()];
            rec.extend(row.values().iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String, ReportError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<(), ReportError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.csv_string()?)?;
        Ok(())
    }
}
