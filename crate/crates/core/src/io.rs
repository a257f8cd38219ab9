//! Text formats: the `# var-model v1` model document and the series CSV.
//!
//! Numbers are written with 17 significant digits so that every `f64`
//! survives a round trip.

use nalgebra::DMatrix;

use crate::error::{Result, VarError};
use crate::model::{TimeSeries, VarModel};

pub const MODEL_HEADER: &str = "# var-model v1";

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_block(out: &mut String, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
}

/// Serializes a model. `comments` are emitted as `#` lines after the header.
pub fn write_model(model: &VarModel, comments: &[String]) -> String {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(&format!("p={}\nd={}\n", model.p(), model.d()));
    for (k, a) in model.coeffs().iter().enumerate() {
        out.push_str(&format!("A{}:\n", k + 1));
        write_block(&mut out, a);
    }
    out.push_str("Sigma:\n");
    write_block(&mut out, model.sigma());
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> VarError {
    VarError::Parse(format!("line {line}: {msg}"))
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("'{tok}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value '{tok}'")));
    }
    Ok(v)
}

pub fn parse_model(text: &str) -> Result<VarModel> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l == MODEL_HEADER => {}
        Some((n, l)) => return Err(parse_err(n, format!("expected '{MODEL_HEADER}', found '{l}'"))),
        None => return Err(VarError::Parse("empty model document".into())),
    }
    let mut body = lines.filter(|(_, l)| !l.starts_with('#'));
    let mut header_value = |key: &str| -> Result<usize> {
        let (n, l) = body
            .next()
            .ok_or_else(|| VarError::Parse(format!("missing '{key}=' line")))?;
        let v = l
            .strip_prefix(key)
            .and_then(|r| r.trim_start().strip_prefix('='))
            .ok_or_else(|| parse_err(n, format!("expected '{key}=', found '{l}'")))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| parse_err(n, format!("'{}' is not a positive integer", v.trim())))?;
        if v == 0 {
            return Err(parse_err(n, format!("{key} must be positive")));
        }
        Ok(v)
    };
    let p = header_value("p")?;
    let d = header_value("d")?;

    let mut read_block = |label: &str| -> Result<DMatrix<f64>> {
        let (n, l) = body
            .next()
            .ok_or_else(|| VarError::Parse(format!("missing block '{label}:'")))?;
        if l != format!("{label}:") {
            return Err(parse_err(n, format!("expected '{label}:', found '{l}'")));
        }
        let mut values = Vec::with_capacity(d * d);
        for _ in 0..d {
            let (n, l) = body
                .next()
                .ok_or_else(|| VarError::Parse(format!("block '{label}' has fewer than {d} rows")))?;
            let row: Vec<f64> = l
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| parse_number(t, n))
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(parse_err(n, format!("expected {d} values, found {}", row.len())));
            }
            values.extend(row);
        }
        Ok(DMatrix::from_row_slice(d, d, &values))
    };
    let coeffs: Vec<DMatrix<f64>> = (1..=p)
        .map(|k| read_block(&format!("A{k}")))
        .collect::<Result<_>>()?;
    let sigma = read_block("Sigma")?;
    if let Some((n, l)) = body.next() {
        return Err(parse_err(n, format!("unexpected trailing content '{l}'")));
    }
    VarModel::new(coeffs, sigma)
}

/// Series CSV with header `t,x1,...,xd` and 1-based time index.
pub fn write_series(series: &TimeSeries, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    let d = series.d();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=d).map(|j| format!("x{j}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (t, row) in series.values().row_iter().enumerate() {
        out.push_str(&(t + 1).to_string());
        for v in row.iter() {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_series(text: &str) -> Result<TimeSeries> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hn, header) = lines
        .next()
        .ok_or_else(|| VarError::Parse("empty series file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(parse_err(hn, "header must start with 't' followed by component columns"));
    }
    for (j, c) in cols[1..].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(parse_err(hn, format!("column {} should be 'x{}', found '{c}'", j + 2, j + 1)));
        }
    }
    let d = cols.len() - 1;
    let mut values = Vec::new();
    let mut rows = 0;
    for (n, l) in lines {
        let cells: Vec<&str> = l.split(',').map(str::trim).collect();
        if cells.len() != d + 1 {
            return Err(parse_err(n, format!("expected {} fields, found {}", d + 1, cells.len())));
        }
        let t: usize = cells[0]
            .parse()
            .map_err(|_| parse_err(n, format!("bad time index '{}'", cells[0])))?;
        if t != rows + 1 {
            return Err(parse_err(n, format!("time index {t} out of order, expected {}", rows + 1)));
        }
        for c in &cells[1..] {
            values.push(parse_number(c, n)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(VarError::InsufficientData { needed: 1, got: 0 });
    }
    TimeSeries::new(DMatrix::from_row_slice(rows, d, &values))
}
