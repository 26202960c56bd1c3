//! Whitespace-separated plot data with a header comment naming the columns.

use hypac_core::pde::Record;
use hypac_core::reduced::{SpectrumReport, Trajectory};
use crate::error::{HarnessError, Result};
use crate::io::Table;
use std::fmt::Write as _;

pub enum PlotSeries<'a> {
    Trajectory(&'a Trajectory),
    /// PDE records; rows without channel diagnostics are skipped.
    Records(&'a [Record]),
    Channel(&'a [Record]),
    Spectrum(&'a SpectrumReport),
}

impl PlotSeries<'_> {
    pub fn columns(&self) -> Vec<String> {
        let n = match self {
            PlotSeries::Trajectory(t) => t.h.first().map(Vec::len).unwrap_or(0),
            PlotSeries::Records(r) => r.iter().map(|r| r.h.len()).max().unwrap_or(0),
            PlotSeries::Channel(_) => return ["t", "E_h", "Gamma_Psi", "inside"].map(String::from).to_vec(),
            PlotSeries::Spectrum(_) => {
                return ["i", "mu_sq", "lambda_plus", "lambda_minus"].map(String::from).to_vec()
            }
        };
        let mut c = vec!["t".to_string()];
        c.extend((1..=n).map(|j| format!("h_{j}")));
        c
    }
}

/// Renders `series` as gnuplot-ready text. The first line is `# col1 col2 ...`.
pub fn emit_plot_data(series: &PlotSeries, hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}", series.columns().join(" "));
    let _ = writeln!(s, "# config_hash={hash}");
    let line = |s: &mut String, cells: &[String]| {
        let _ = writeln!(s, "{}", cells.join(" "));
    };
    let f = |v: f64| format!("{v:.12e}");
    match series {
        PlotSeries::Trajectory(t) => {
            for (ti, h) in t.t.iter().zip(&t.h) {
                let mut c = vec![f(*ti)];
                c.extend(h.iter().map(|v| f(*v)));
                line(&mut s, &c);
            }
        }
        PlotSeries::Records(rs) => {
            for r in rs.iter().filter(|r| !r.h.is_empty()) {
                let mut c = vec![f(r.t)];
                c.extend(r.h.iter().map(|v| f(*v)));
                line(&mut s, &c);
            }
        }
        PlotSeries::Channel(rs) => {
            for r in rs.iter() {
                if let Some(ch) = &r.channel {
                    line(&mut s, &[f(r.t), f(ch.energy_eh), f(ch.gamma_psi), (ch.inside as u8).to_string()]);
                }
            }
        }
        PlotSeries::Spectrum(sp) => {
            for i in 0..sp.mu_sq.len() {
                line(&mut s, &[(i + 1).to_string(), f(sp.mu_sq[i]), f(sp.lambda_plus[i]), f(sp.lambda_minus[i])]);
            }
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    Trajectory,
    Channel,
    Spectrum,
}

/// Plot data from a CSV written by this crate: series or trajectory tables for the
/// trajectory and channel kinds, spectrum tables for the spectrum kind.
pub fn plot_from_table(kind: TableKind, table: &Table, hash: &str) -> Result<String> {
    let pick = |names: &[String]| -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| table.column(n).ok_or_else(|| HarnessError::Usage(format!("input has no column `{n}`"))))
            .collect()
    };
    let (header, cols, scale): (Vec<String>, Vec<usize>, Option<(usize, f64)>) = match kind {
        TableKind::Trajectory => {
            let mut names = vec!["t".to_string()];
            names.extend(table.columns.iter().filter(|c| c.starts_with("h_")).cloned());
            (names.clone(), pick(&names)?, None)
        }
        TableKind::Channel => {
            let gamma: f64 = table
                .meta
                .get("gamma")
                .and_then(|g| g.parse().ok())
                .ok_or_else(|| HarnessError::Usage("channel plot needs a series with a gamma header".into()))?;
            let cols = pick(&["t", "energy_Eh", "psi", "inside_channel"].map(String::from))?;
            let header = ["t", "E_h", "Gamma_Psi", "inside"].map(String::from).to_vec();
            (header, cols, Some((2, gamma)))
        }
        TableKind::Spectrum => {
            let names = ["i", "mu_sq", "lambda_plus", "lambda_minus"].map(String::from).to_vec();
            (names.clone(), pick(&names)?, None)
        }
    };
    let mut s = String::new();
    let _ = writeln!(s, "# {}", header.join(" "));
    let _ = writeln!(s, "# config_hash={hash}");
    for row in &table.rows {
        if cols.iter().any(|&c| row.get(c).map_or(true, |v| v.is_empty())) {
            continue;
        }
        let cells: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let v = &row[c];
                match (scale, v.parse::<f64>()) {
                    (Some((at, g)), Ok(x)) if at == k => format!("{:.12e}", g * x),
                    _ if v == "true" => "1".into(),
                    _ if v == "false" => "0".into(),
                    _ => v.clone(),
                }
            })
            .collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    Ok(s)
}
