//! Number formatting and per-node tables shared by the JSON and CSV outputs.

use serde::{Deserialize, Serialize};

use crate::tree::{AdaptedProcess, ScenarioTree};

/// Significant digits used in every emitted number.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` with [`SIG_DIGITS`] significant digits, `.` as decimal separator.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = SIG_DIGITS as i32 - 1 - magnitude;
    if magnitude >= -4 && decimals >= 0 {
        let s = format!("{:.*}", decimals as usize, x);
        trim_zeros(&s)
    } else if decimals < 0 && magnitude < 18 {
        let unit = 10f64.powi(-decimals);
        format!("{:.0}", (x / unit).round() * unit)
    } else {
        let s = format!("{:.*e}", SIG_DIGITS - 1, x);
        let (mantissa, exponent) = s.split_once('e').expect("exponent form");
        format!("{}e{exponent}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Rounds to [`SIG_DIGITS`] significant digits so JSON serialisation of the
/// result prints at most that many digits.
pub fn round_sig(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

/// One row of a per-node table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub id: String,
    pub time: usize,
    /// Column values keyed by column name; `None` where a process is not defined.
    pub values: Vec<Option<f64>>,
}

/// Named processes laid out one row per node in arena order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTable {
    pub columns: Vec<String>,
    pub rows: Vec<NodeRow>,
}

impl NodeTable {
    pub fn new(tree: &ScenarioTree, columns: &[(&str, &AdaptedProcess)]) -> Self {
        let rows = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| NodeRow {
                id: node.id().to_string(),
                time: node.time(),
                values: columns
                    .iter()
                    .map(|(_, p)| (node.time() >= p.start()).then(|| round_sig(p.at(i))))
                    .collect(),
            })
            .collect();
        NodeTable {
            columns: columns.iter().map(|(name, _)| name.to_string()).collect(),
            rows,
        }
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "time".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.id.clone(), row.time.to_string()];
            record.extend(row.values.iter().map(|v| v.map(fmt_sig).unwrap_or_default()));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.6201145069582775), "0.620114506958");
        assert_eq!(fmt_sig(0.158561942606005), "0.158561942606");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(123456789012345.0), "123456789012000");
        assert_eq!(fmt_sig(1.5e-30), "1.5e-30");
        assert_eq!(fmt_sig(2.710894841937e-9), "2.71089484194e-9");
        assert_eq!(fmt_sig(0.00012345), "0.00012345");
        assert_eq!(round_sig(0.6201145069582775), 0.620114506958);
    }
}
