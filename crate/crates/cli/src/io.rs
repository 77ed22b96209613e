//! CSV input/output and console formatting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// Covariates and `k`-variate responses read from a `x,y1,...,yk` file.
#[derive(Debug, Clone, PartialEq)]
pub struct XyData {
    pub xs: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
}

/// Parses `x,y1,...,yk` CSV. Errors name the first offending line (1-based,
/// header is line 1).
pub fn read_xy<R: io::Read>(input: R) -> Result<XyData, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| CliError::usage(format!("line 1: {e}")))?.clone();
    let k = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("x".to_string()).chain((1..=k).map(|c| format!("y{c}"))).collect();
    if k == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::usage(format!(
            "line 1: header must be x,y1,...,yk, got '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::usage(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != k + 1 {
            return Err(CliError::usage(format!("line {line}: expected {} fields, got {}", k + 1, rec.len())));
        }
        let vals = rec
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(CliError::usage(format!("line {line}: non-finite value '{f}'"))),
                Err(_) => Err(CliError::usage(format!("line {line}: cannot parse '{f}' as a number"))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        xs.push(vals[0]);
        ys.push(vals[1..].to_vec());
    }
    if xs.is_empty() {
        return Err(CliError::usage("data file has no rows"));
    }
    Ok(XyData { xs, ys })
}

pub fn read_xy_path(path: &Path) -> Result<XyData, CliError> {
    let f = File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    read_xy(io::BufReader::new(f))
}

/// Writes a header and rows of numbers at full (round-trip) precision.
pub fn write_table<W: Write>(out: W, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header).map_err(CliError::runtime)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)
}

pub fn xy_header(k: usize) -> Vec<String> {
    std::iter::once("x".to_string()).chain((1..=k).map(|c| format!("y{c}"))).collect()
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

/// Writes to `path` at full precision, or prints to stdout at six
/// significant digits when no path is given.
pub fn emit_table(path: Option<&Path>, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    match path {
        Some(p) => write_table(create(p)?, header, rows),
        None => {
            let shown: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|v| sig6(*v)).collect()).collect();
            print_strings(header, &shown)
        }
    }
}

pub fn print_strings(header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(stdout.lock());
    w.write_record(header).map_err(CliError::runtime)?;
    for r in rows {
        w.write_record(r).map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)
}

/// Six significant digits, trailing zeros trimmed; scientific notation
/// outside `[1e-5, 1e6)`.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let s = format!("{v:.5e}");
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Comma-separated floats; allows a leading minus sign.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| format!("'{p}' is not a number"))).collect()
}

/// `lo:hi:count` evenly spaced points, endpoints included.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(format!("grid '{s}' must be lo:hi:count"));
    };
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad grid start '{lo}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad grid end '{hi}'"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad grid count '{n}'"))?;
    if n == 0 || lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(format!("grid '{s}' needs count >= 1 and lo <= hi"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}
