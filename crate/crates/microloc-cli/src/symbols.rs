//! Symbol literal syntax:
//! `multiplier(japanese_bracket, power=<p>)`,
//! `multiplier(homogeneous, power=<p>)`,
//! `polyhom(order=<r>, table=<csv path>)`.
//!
//! The direction-table CSV has one row per (direction, channel pair):
//! `omega0,...,omega{n-1},row,col,re,im`.

use std::path::Path;

use num_complex::Complex64;

use crate::config::parse_list;
use crate::CliError;
use microloc::psido::{Multiplier, PrincipalPart, Symbol};

pub fn parse_symbol(text: &str) -> Result<Symbol, CliError> {
    let text = text.trim();
    if let Some(body) = text.strip_prefix("multiplier(").and_then(|r| r.strip_suffix(')')) {
        let mut kind = None;
        let mut power = None;
        for tok in body.split(',') {
            let tok = tok.trim();
            if let Some(v) = tok.strip_prefix("power=") {
                power = Some(
                    v.parse::<f64>()
                        .map_err(|e| CliError::Config(format!("bad power {v:?}: {e}")))?,
                );
            } else {
                kind = Some(tok.to_string());
            }
        }
        let power = power.ok_or_else(|| CliError::Config("multiplier needs power=<p>".into()))?;
        let m = match kind.as_deref() {
            Some("japanese_bracket") => Multiplier::BracketPower(power),
            Some("homogeneous") => Multiplier::HomogeneousPower(power),
            other => {
                return Err(CliError::Config(format!(
                    "unknown multiplier kind {other:?} (japanese_bracket | homogeneous)"
                )))
            }
        };
        return Ok(Symbol::multiplier(power, m));
    }
    if let Some(body) = text.strip_prefix("polyhom(").and_then(|r| r.strip_suffix(')')) {
        let mut order = None;
        let mut table = None;
        for tok in body.split(',') {
            let tok = tok.trim();
            if let Some(v) = tok.strip_prefix("order=") {
                order = Some(
                    v.parse::<f64>()
                        .map_err(|e| CliError::Config(format!("bad order {v:?}: {e}")))?,
                );
            } else if let Some(v) = tok.strip_prefix("table=") {
                table = Some(v.to_string());
            }
        }
        let order = order.ok_or_else(|| CliError::Config("polyhom needs order=<r>".into()))?;
        let table = table.ok_or_else(|| CliError::Config("polyhom needs table=<path>".into()))?;
        let principal = load_direction_table(Path::new(&table))?;
        return Ok(Symbol::polyhomogeneous(order, principal)?);
    }
    Err(CliError::Config(format!(
        "unknown symbol literal {text:?} (multiplier(...) | polyhom(...))"
    )))
}

fn load_direction_table(path: &Path) -> Result<PrincipalPart, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read table {}: {e}", path.display())))?;
    let mut rows_max = 0usize;
    let mut cols_max = 0usize;
    // (direction, row, col, value)
    let mut entries: Vec<(Vec<f64>, usize, usize, Complex64)> = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = parse_list(line)
            .map_err(|e| CliError::Config(format!("table line {}: {e}", lineno + 1)))?;
        if vals.len() < 5 {
            return Err(CliError::Config(format!(
                "table line {}: need omega..., row, col, re, im",
                lineno + 1
            )));
        }
        let n = vals.len() - 4;
        if *dim.get_or_insert(n) != n {
            return Err(CliError::Config("inconsistent direction dimension".into()));
        }
        let omega = vals[..n].to_vec();
        let row = vals[n] as usize;
        let col = vals[n + 1] as usize;
        rows_max = rows_max.max(row + 1);
        cols_max = cols_max.max(col + 1);
        entries.push((omega, row, col, Complex64::new(vals[n + 2], vals[n + 3])));
    }
    if entries.is_empty() {
        return Err(CliError::Config("empty direction table".into()));
    }
    // group by direction
    let mut table: Vec<(Vec<f64>, Vec<Complex64>)> = Vec::new();
    for (omega, row, col, value) in entries {
        let slot = table.iter_mut().find(|(w, _)| {
            w.len() == omega.len() && w.iter().zip(&omega).all(|(a, b)| (a - b).abs() < 1e-12)
        });
        let matrix = match slot {
            Some((_, m)) => m,
            None => {
                table.push((omega.clone(), vec![Complex64::default(); rows_max * cols_max]));
                &mut table.last_mut().unwrap().1
            }
        };
        matrix[row * cols_max + col] = value;
    }
    // normalize directions
    for (w, _) in &mut table {
        let n: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(CliError::Config("zero direction in table".into()));
        }
        for x in w.iter_mut() {
            *x /= n;
        }
    }
    Ok(PrincipalPart::DirectionTable {
        rows: rows_max,
        cols: cols_max,
        table,
    })
}
