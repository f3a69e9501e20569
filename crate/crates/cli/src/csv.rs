//! Minimal CSV writing: a fixed header and floats at six significant digits.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// Formats `x` like C's `%.6g`: six significant digits, trailing zeros
/// dropped, scientific notation for very small or large magnitudes.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{:.*}", (5 - exp) as usize, x)).to_string()
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rows accumulated in memory and written in one go.
#[derive(Debug, Clone)]
pub struct Table {
    columns: usize,
    text: String,
}

/// One CSV field.
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x.into())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            columns: header.len(),
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns, "row width does not match the header");
        for (i, cell) in row.into_iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match cell {
                Cell::Float(x) => self.text.push_str(&fmt_g(x)),
                Cell::Int(n) => write!(self.text, "{n}").expect("write to String"),
                Cell::Text(s) => {
                    assert!(!s.contains([',', '"', '\n']), "unquoted field {s:?}");
                    self.text.push_str(&s)
                }
                Cell::Empty => {}
            }
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.text.as_bytes())
    }
}

/// Joins floats with `;` so a list fits in one field.
pub fn join(values: &[f64]) -> String {
    values.iter().map(|&x| fmt_g(x)).collect::<Vec<_>>().join(";")
}
