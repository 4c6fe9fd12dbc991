//! Tidy CSV output: one `#`-prefixed schema line, then comma-separated rows.
//!
//! Floats use Rust's shortest round-trip formatting, so identical inputs give
//! byte-identical files.

use std::io::{self, Write};

pub fn write_table<W: Write>(out: &mut W, columns: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(out, "# {}", columns.join(","))?;
    let mut line = String::new();
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        line.clear();
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format_value(*x));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:?}")
    }
}

/// Parses a table written by [`write_table`]: returns column names and rows.
pub fn read_table(text: &str) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines.next()?.strip_prefix('#')?.trim();
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row: Option<Vec<f64>> = line.split(',').map(|s| s.trim().parse().ok()).collect();
        rows.push(row?);
    }
    Some((columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trips() {
        let mut buf = Vec::new();
        let rows = vec![vec![0.1, -2.0, f64::NAN], vec![1e-300, f64::INFINITY, 3.0]];
        write_table(&mut buf, &["a", "b", "c"], &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# a,b,c\n"));
        let (cols, back) = read_table(&text).unwrap();
        assert_eq!(cols, ["a", "b", "c"]);
        assert_eq!(back[0][0], 0.1);
        assert!(back[0][2].is_nan());
        assert_eq!(back[1][1], f64::INFINITY);
    }
}
