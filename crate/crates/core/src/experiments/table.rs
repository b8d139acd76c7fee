use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One table cell: macro F1 in percent, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellValue {
    Value(f64),
    Failed(String),
}

impl CellValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            CellValue::Value(v) => Some(*v),
            CellValue::Failed(_) => None,
        }
    }
}

/// Rows x columns of macro F1 percentages. Run metadata that changes between
/// runs (timestamps, cache hit rate) is kept out of this type so that reruns
/// compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub title: String,
    pub row_axis: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<CellValue>>,
    pub spec_fingerprint: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_field(s: &str) -> String {
    s.replace('|', "\\|")
}

impl ResultTable {
    pub fn get(&self, row: &str, column: &str) -> Option<&CellValue> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        Some(&self.cells[r][c])
    }

    /// Full-precision CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = std::iter::once(&self.row_axis).chain(&self.columns).map(|s| csv_field(s)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            let mut fields = vec![csv_field(row)];
            fields.extend(cells.iter().map(|c| match c {
                CellValue::Value(v) => format!("{v}"),
                CellValue::Failed(_) => "failed".to_string(),
            }));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Markdown with one decimal; the best value of each column is bold.
    pub fn to_markdown(&self) -> String {
        let best: Vec<Option<f64>> = (0..self.columns.len())
            .map(|c| self.cells.iter().filter_map(|r| r[c].value()).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "### {}", md_field(&self.title));
        out.push('\n');
        let _ = writeln!(
            out,
            "| {} | {} |",
            md_field(&self.row_axis),
            self.columns.iter().map(|c| md_field(c)).collect::<Vec<_>>().join(" | ")
        );
        let _ = writeln!(out, "|---|{}", "---:|".repeat(self.columns.len()));
        for (row, cells) in self.rows.iter().zip(&self.cells) {
            let rendered: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| match cell {
                    CellValue::Value(v) if Some(*v) == best[c] => format!("**{v:.1}**"),
                    CellValue::Value(v) => format!("{v:.1}"),
                    CellValue::Failed(_) => "failed".into(),
                })
                .collect();
            let _ = writeln!(out, "| {} | {} |", md_field(row), rendered.join(" | "));
        }
        out.push('\n');
        let _ = writeln!(out, "spec `{}`", self.spec_fingerprint);
        out
    }
}
