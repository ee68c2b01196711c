//! Report rendering: one tabular model, three encodings.

use clap::ValueEnum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

/// A small report table. Text output aligns columns for reading, CSV quotes
/// per RFC 4180, JSON emits an array of header-keyed objects; all three
/// carry exactly the same cells so golden files stay interchangeable.
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.headers.len(), "row width must match headers");
        self.rows.push(cells);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.render_text(),
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let rendered: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            out.push_str(rendered.join("  ").trim_end());
            out.push('\n');
        };
        line(&self.headers);
        for row in &self.rows {
            line(row);
        }
        out
    }

    fn render_csv(&self) -> String {
        let quote = |cell: &String| -> String {
            if cell.contains([',', '"', '\n']) {
                format!("\"{}\"", cell.replace('"', "\"\""))
            } else {
                cell.clone()
            }
        };
        let mut out = String::new();
        out.push_str(&self.headers.iter().map(quote).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(quote).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    fn render_json(&self) -> String {
        let objects: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                serde_json::Value::Object(
                    self.headers
                        .iter()
                        .zip(row)
                        .map(|(h, c)| (h.clone(), serde_json::Value::String(c.clone())))
                        .collect(),
                )
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&objects).expect("string table is valid JSON");
        out.push('\n');
        out
    }
}

/// Two-column field/value table, the shape used for command summaries.
pub fn kv_table(pairs: &[(&str, String)]) -> Table {
    let mut t = Table::new(&["field", "value"]);
    for (k, v) in pairs {
        t.row(vec![k.to_string(), v.clone()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["name", "keys"]);
        t.row(vec!["N1".into(), "K1 K2".into()]);
        t.row(vec!["G1".into(), "H(K1,K2)".into()]);
        t
    }

    #[test]
    fn text_aligns_and_trims() {
        let got = sample().render(Format::Text);
        assert_eq!(got, "name  keys\nN1    K1 K2\nG1    H(K1,K2)\n");
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        let got = sample().render(Format::Csv);
        assert_eq!(got, "name,keys\nN1,K1 K2\nG1,\"H(K1,K2)\"\n");
    }

    #[test]
    fn json_is_an_array_of_objects() {
        let got = sample().render(Format::Json);
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&got).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1]["keys"], "H(K1,K2)");
    }
}
