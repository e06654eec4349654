use std::fmt::Write as _;
use std::io::{self, Write};

/// Time-indexed table of recorded signals. Each row starts with the time.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl ResultsTable {
    pub fn new(columns: Vec<String>) -> Self {
        ResultsTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn with_capacity(columns: Vec<String>, rows: usize) -> Self {
        ResultsTable {
            columns,
            rows: Vec::with_capacity(rows),
        }
    }

    /// Signal column names, without `time`.
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn header(&self) -> Vec<&str> {
        std::iter::once("time")
            .chain(self.columns.iter().map(String::as_str))
            .collect()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_row(&mut self, time: f64, values: impl IntoIterator<Item = f64>) {
        let mut row = Vec::with_capacity(self.columns.len() + 1);
        row.push(time);
        row.extend(values);
        assert_eq!(row.len(), self.columns.len() + 1, "row width");
        self.rows.push(row);
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r[0])
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx + 1]).collect())
    }

    /// First column whose variable part (after the instance) is `variable`.
    pub fn column_by_variable(&self, variable: &str) -> Option<(&str, Vec<f64>)> {
        let name = self
            .columns
            .iter()
            .find(|c| c.rsplit_once('.').map(|(_, v)| v) == Some(variable))?;
        Some((name.as_str(), self.column(name)?))
    }

    pub fn to_csv(&self) -> io::Result<String> {
        let mut buf = Vec::new();
        csv_write(self, &mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| e.to_string())?.clone();
        let mut fields = header.iter();
        if fields.next() != Some("time") {
            return Err("first column must be `time`".into());
        }
        let mut table = ResultsTable::new(fields.map(str::to_string).collect());
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let row = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("row {}: {e}", line + 1))?;
            if row.len() != table.columns.len() + 1 {
                return Err(format!("row {}: expected {} fields", line + 1, table.columns.len() + 1));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_csv(&text)
    }
}

/// Shortest decimal string that parses back to the same binary64 value,
/// always with a `.` or an exponent (`1.0`, `0.1`, `1e16`, `-0.0`).
///
/// Plain notation is used for magnitudes in `[1e-4, 1e16)` and zero,
/// scientific otherwise. The C runtime reproduces this exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `table` as CSV: header row, comma separated, `\n` line endings.
pub fn csv_write<W: Write>(table: &ResultsTable, sink: W) -> io::Result<()> {
    let mut sink = io::BufWriter::new(sink);
    let mut line = String::with_capacity(64);
    line.push_str("time");
    for c in &table.columns {
        line.push(',');
        line.push_str(c);
    }
    line.push('\n');
    sink.write_all(line.as_bytes())?;
    for row in &table.rows {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("non-finite value {v} in column {i}"),
                ));
            }
            if i > 0 {
                line.push(',');
            }
            write!(line, "{v:?}").expect("write to string");
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()
}
