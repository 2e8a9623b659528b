//! Report tables with a plain-text rendering and a serializable form.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Row {
    Cells(Vec<String>),
    /// A caption spanning all columns, e.g. a classifier block heading.
    Section(String),
    /// A horizontal rule between row groups.
    Rule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Row>,
}

impl Grid {
    pub fn new(title: impl Into<String>, header: Vec<String>) -> Self {
        Self {
            title: title.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(Row::Cells(cells));
    }

    pub fn section(&mut self, caption: impl Into<String>) {
        self.rows.push(Row::Section(caption.into()));
    }

    pub fn rule(&mut self) {
        self.rows.push(Row::Rule);
    }

    /// Cell rows only, in order.
    pub fn cells(&self) -> impl Iterator<Item = &Vec<String>> {
        self.rows.iter().filter_map(|r| match r {
            Row::Cells(c) => Some(c),
            Row::Section(_) | Row::Rule => None,
        })
    }

    /// Columns padded to their widest cell (in chars), separated by ` | `.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in self.cells() {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            padded.join(" | ").trim_end().to_string()
        };
        let total = widths.iter().sum::<usize>() + 3 * widths.len().saturating_sub(1);
        let rule = "-".repeat(total);
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        out.push_str(&line(&self.header));
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for row in &self.rows {
            match row {
                Row::Cells(c) => out.push_str(&line(c)),
                Row::Section(s) => {
                    out.push_str(&format!("[{s}]"));
                }
                Row::Rule => out.push_str(&rule),
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_text() {
        let mut g = Grid::new("T", vec!["Models".into(), "F1".into()]);
        g.section("block");
        g.push(vec!["LR".into(), "0.772".into()]);
        g.rule();
        assert_eq!(
            g.to_text(),
            "T\nModels | F1\n--------------\n[block]\nLR     | 0.772\n--------------\n"
        );
    }
}
