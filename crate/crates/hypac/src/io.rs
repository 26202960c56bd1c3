//! File formats: config hashes, CSV tables with a metadata comment line, snapshots.

use crate::error::{HarnessError, Result};
use hypac_core::grid::{Grid, GridField};
use hypac_core::pde::Record;
use hypac_core::reduced::{ComparisonEntry, Trajectory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// SHA-256 of the canonical (key-sorted, compact) JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).and_then(|v| serde_json::to_string(&v)).unwrap_or_default();
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Plan(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// A table written as `# key=value ...` followed by a CSV header and rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl Table {
    pub fn new(hash: &str, columns: Vec<String>) -> Table {
        let mut meta = BTreeMap::new();
        meta.insert("config_hash".to_string(), hash.to_string());
        Table { meta, columns, rows: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Table {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let meta: Vec<String> = self.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.extend_from_slice(format!("# {}\n", meta.join(" ")).as_bytes());
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush().map_err(|e| HarnessError::io("<csv buffer>", e))?;
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut meta = BTreeMap::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    if let Some((k, v)) = kv.split_once('=') {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let columns = rd.headers()?.iter().map(String::from).collect();
        let rows = rd.records().map(|r| r.map(|r| r.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
        Ok(Table { meta, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Column `name` parsed as floats; empty cells become NaN.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column(name).ok_or_else(|| HarnessError::Usage(format!("table has no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| {
                let s = r.get(i).map(String::as_str).unwrap_or("");
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse().map_err(|_| HarnessError::Usage(format!("bad number `{s}` in column `{name}`")))
                }
            })
            .collect()
    }
}

pub fn series_columns(n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend((1..=n).map(|j| format!("h_{j}")));
    for s in ["ell_min", "psi", "energy_Eh", "lyapunov", "w_l2", "w_linf", "v_l2", "inside_channel"] {
        c.push(s.to_string());
    }
    c
}

/// Simulation series: one row per record; untracked layers and missing diagnostics stay empty.
pub fn series_table(records: &[Record], n: usize, hash: &str) -> Table {
    let mut t = Table::new(hash, series_columns(n));
    for r in records {
        let mut row = vec![num(r.t)];
        for j in 0..n {
            row.push(r.h.get(j).map(|v| num(*v)).unwrap_or_default());
        }
        let ch = r.channel.as_ref();
        row.push(num(r.ell_min));
        row.push(opt(ch.map(|c| c.psi)));
        row.push(opt(ch.map(|c| c.energy_eh)));
        row.push(num(r.lyapunov));
        row.push(opt(r.w_l2));
        row.push(opt(r.w_linf));
        row.push(num(r.v_l2));
        row.push(ch.map(|c| c.inside.to_string()).unwrap_or_default());
        t.rows.push(row);
    }
    t
}

pub fn trajectory_table(tr: &Trajectory, hash: &str) -> Table {
    let n = tr.h.first().map(Vec::len).unwrap_or(0);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|j| format!("h_{j}")));
    cols.extend((1..=n).map(|j| format!("eta_{j}")));
    let with_energy = tr.energy.len() == tr.t.len() && !tr.energy.is_empty();
    if with_energy {
        cols.push("energy".into());
    }
    let mut t = Table::new(hash, cols);
    for i in 0..tr.t.len() {
        let mut row = vec![num(tr.t[i])];
        row.extend(tr.h[i].iter().map(|v| num(*v)));
        row.extend(tr.eta[i].iter().map(|v| num(*v)));
        if with_energy {
            row.push(num(tr.energy[i]));
        }
        t.rows.push(row);
    }
    t
}

pub fn comparison_table(entries: &[ComparisonEntry], hash: &str) -> Table {
    let cols = ["tau", "gamma_tau", "t", "h_err", "eta_err", "E_tau"].iter().map(|s| s.to_string()).collect();
    let mut t = Table::new(hash, cols);
    for e in entries {
        for i in 0..e.t.len() {
            t.rows.push(vec![num(e.tau), num(e.gamma), num(e.t[i]), num(e.h_err[i]), num(e.eta_err[i]), num(e.e_tau[i])]);
        }
    }
    t
}

/// Snapshot document `{"version":1, "grid":{"M":..}, "values":[..]}` with optional t and v.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u32,
    pub grid: Grid,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Snapshot {
    pub fn of_field(u: &GridField, hash: &str) -> Snapshot {
        Snapshot { version: 1, grid: u.grid, values: u.values.clone(), t: None, v: None, config_hash: Some(hash.into()) }
    }

    pub fn field(&self) -> Result<GridField> {
        if self.version != 1 {
            return Err(HarnessError::Usage(format!("unsupported snapshot version {}", self.version)));
        }
        Ok(GridField::new(self.grid, self.values.clone())?)
    }
}

/// (x, value) CSV export of a grid field.
pub fn field_table(u: &GridField, hash: &str) -> Table {
    let mut t = Table::new(hash, vec!["x".into(), "value".into()]);
    for (i, v) in u.values.iter().enumerate() {
        t.rows.push(vec![num(u.grid.x(i)), num(*v)]);
    }
    t
}
