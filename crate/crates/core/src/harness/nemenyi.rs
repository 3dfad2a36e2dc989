//! Average ranks and the Nemenyi critical difference for comparing several
//! models over several datasets.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KtError, Result};

/// Studentized range over √2 for k = 2..=10.
const Q_05: [f64; 9] = [1.960, 2.344, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alpha {
    #[serde(rename = "0.05")]
    P05,
    #[serde(rename = "0.10")]
    P10,
}

impl Alpha {
    pub fn from_f64(a: f64) -> Result<Self> {
        if (a - 0.05).abs() < 1e-12 {
            Ok(Alpha::P05)
        } else if (a - 0.10).abs() < 1e-12 {
            Ok(Alpha::P10)
        } else {
            Err(KtError::InvalidArgument(format!("alpha must be 0.05 or 0.10, got {a}")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Alpha::P05 => 0.05,
            Alpha::P10 => 0.10,
        }
    }
}

pub fn q_value(k: usize, alpha: Alpha) -> Result<f64> {
    if !(2..=10).contains(&k) {
        return Err(KtError::InvalidArgument(format!("q is tabulated for 2..=10 models, got {k}")));
    }
    Ok(match alpha {
        Alpha::P05 => Q_05[k - 2],
        Alpha::P10 => Q_10[k - 2],
    })
}

pub fn critical_difference(k: usize, n_datasets: usize, alpha: Alpha) -> Result<f64> {
    let q = q_value(k, alpha)?;
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n_datasets as f64)).sqrt())
}

/// Models × datasets AUC matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `values[model][dataset]`.
    pub values: Vec<Vec<f64>>,
}

impl AucTable {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.models.len() {
            return Err(KtError::Shape(format!(
                "{} rows for {} models",
                self.values.len(),
                self.models.len()
            )));
        }
        for (m, row) in self.models.iter().zip(&self.values) {
            if row.len() != self.datasets.len() {
                return Err(KtError::Shape(format!(
                    "model {m} has {} values for {} datasets",
                    row.len(),
                    self.datasets.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(KtError::Validation(format!("model {m} has a non-finite AUC")));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["model".to_string()];
        header.extend(self.datasets.iter().cloned());
        w.write_record(&header)?;
        for (m, row) in self.models.iter().zip(&self.values) {
            let mut rec = vec![m.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| KtError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(KtError::MissingFile(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path)?;
        let datasets: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut models = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            models.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| KtError::Parse {
                        file: path.display().to_string(),
                        line: i + 2,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        let table = AucTable { models, datasets, values };
        table.validate()?;
        Ok(table)
    }
}

/// Reference AUCs of five published models on five base datasets,
/// used to exercise the rank test.
pub fn reference_table() -> AucTable {
    AucTable {
        models: ["DKT", "DKVMN", "GKT", "GIKT", "APGKT"].map(String::from).to_vec(),
        datasets: ["assist09", "CSEDM", "FrcSub", "Math1", "Math2"].map(String::from).to_vec(),
        values: vec![
            vec![0.6995, 0.7543, 0.8891, 0.8349, 0.8084],
            vec![0.7112, 0.7626, 0.8729, 0.8403, 0.8159],
            vec![0.7230, 0.7647, 0.8748, 0.8456, 0.8181],
            vec![0.7742, 0.7836, 0.8982, 0.8892, 0.8681],
            vec![0.7767, 0.7902, 0.9059, 0.8922, 0.8695],
        ],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub models: Vec<String>,
    pub average_ranks: Vec<f64>,
    pub critical_difference: f64,
    pub alpha: Alpha,
    pub n_datasets: usize,
}

impl NemenyiResult {
    /// Index of the model with the lowest average rank.
    pub fn best(&self) -> usize {
        (0..self.models.len())
            .min_by(|&a, &b| self.average_ranks[a].total_cmp(&self.average_ranks[b]))
            .expect("at least two models")
    }

    /// `model,avg_rank` rows followed by a `critical_difference` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model", "avg_rank"])?;
        for (m, r) in self.models.iter().zip(&self.average_ranks) {
            w.write_record([m.as_str(), &r.to_string()])?;
        }
        w.write_record(["critical_difference", &self.critical_difference.to_string()])?;
        w.flush().map_err(|e| KtError::io(path, e))
    }

    /// Critical-difference diagram: models on a rank axis, with a bar of
    /// length CD.
    pub fn to_svg(&self) -> String {
        let k = self.models.len();
        let (left, right, axis_y) = (60.0, 540.0, 50.0);
        let x = |rank: f64| left + (rank - 1.0) / (k as f64 - 1.0).max(1.0) * (right - left);
        let height = 90.0 + 22.0 * k as f64;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="600" height="{height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<line x1="{left}" y1="{axis_y}" x2="{right}" y2="{axis_y}" stroke="black"/>"#);
        for r in 1..=k {
            let xr = x(r as f64);
            let _ = writeln!(
                s,
                r#"<line x1="{xr}" y1="{}" x2="{xr}" y2="{axis_y}" stroke="black"/><text x="{xr}" y="{}" text-anchor="middle">{r}</text>"#,
                axis_y - 6.0,
                axis_y - 10.0
            );
        }
        let cd_end = x(1.0 + self.critical_difference);
        let _ = writeln!(
            s,
            r#"<line x1="{left}" y1="20" x2="{cd_end}" y2="20" stroke="red" stroke-width="3"/><text x="{left}" y="14">CD = {:.3}</text>"#,
            self.critical_difference
        );
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| self.average_ranks[a].total_cmp(&self.average_ranks[b]));
        for (row, &m) in order.iter().enumerate() {
            let xr = x(self.average_ranks[m]);
            let y = axis_y + 25.0 + 22.0 * row as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{xr}" y1="{axis_y}" x2="{xr}" y2="{y}" stroke="gray"/><text x="{}" y="{}">{} ({:.2})</text>"#,
                xr + 4.0,
                y + 4.0,
                self.models[m],
                self.average_ranks[m]
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Ranks of one dataset's scores, 1 for the highest, ties averaged.
pub fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        i = j;
    }
    ranks
}

pub fn nemenyi_test(table: &AucTable, alpha: Alpha) -> Result<NemenyiResult> {
    table.validate()?;
    let (k, n) = (table.models.len(), table.datasets.len());
    if k < 2 || n < 2 {
        return Err(KtError::InvalidArgument(format!(
            "need at least 2 models and 2 datasets, got {k} x {n}"
        )));
    }
    let mut sums = vec![0.0; k];
    for d in 0..n {
        let column: Vec<f64> = table.values.iter().map(|row| row[d]).collect();
        for (s, r) in sums.iter_mut().zip(rank_descending(&column)) {
            *s += r;
        }
    }
    Ok(NemenyiResult {
        models: table.models.clone(),
        average_ranks: sums.into_iter().map(|s| s / n as f64).collect(),
        critical_difference: critical_difference(k, n, alpha)?,
        alpha,
        n_datasets: n,
    })
}
