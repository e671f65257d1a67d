//! Text formats for reflection tables, bound states and potentials.
//!
//! Numbers are written with 17 significant digits, which parse back to the
//! same `f64`. Lines starting with `#` are headers or comments; the first
//! header carries the dimensions, a second one the config hash.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mcis_core::{BoundState, CMat, ChannelSystem, Complex64, PotentialGrid, ReflectionTable};

use crate::error::{CliError, Stage};

/// Imaginary parts of `i M` above this are written as extra columns.
pub const IMAG_CUTOFF: f64 = 1e-9;

fn num(out: &mut String, v: f64) {
    let _ = write!(out, " {v:.16e}");
}

fn hash_line(out: &mut String, hash: &str) {
    let _ = writeln!(out, "# config-sha256={hash}");
}

pub fn reflection_to_string(table: &ReflectionTable, hash: &str) -> String {
    let n = table.n_channels();
    let eps: Vec<String> = table.sys.thresholds().iter().map(|e| format!("{e:.16e}")).collect();
    let mut out = format!("# N={n} kmax={:.16e} eps={}\n", table.k_max, eps.join(","));
    hash_line(&mut out, hash);
    for ((k, r), t) in table.k.iter().zip(&table.r).zip(&table.t) {
        let _ = write!(out, "{k:.16e}");
        for m in [r, t] {
            for z in m.as_slice() {
                num(&mut out, z.re);
                num(&mut out, z.im);
            }
        }
        out.push('\n');
    }
    out
}

pub fn bound_to_string(states: &[BoundState], n: usize, hash: &str) -> String {
    let complex = states.iter().any(|s| s.normalization().as_slice().iter().any(|z| z.im.abs() > IMAG_CUTOFF));
    let mut out = format!("# N={n} states={}\n", states.len());
    hash_line(&mut out, hash);
    for s in states {
        let _ = write!(out, "{:.16e}", s.kappa);
        num(&mut out, s.energy());
        for z in s.normalization().as_slice() {
            num(&mut out, z.re);
            if complex {
                num(&mut out, z.im);
            }
        }
        out.push('\n');
    }
    out
}

pub fn potential_to_string(pot: &PotentialGrid, hash: &str) -> String {
    let n = pot.n();
    let mut out = format!("# N={n} h={:.16e}\n", pot.h());
    hash_line(&mut out, hash);
    for p in 0..pot.len() {
        let _ = write!(out, "{:.16e}", pot.x(p));
        for &v in pot.at(p) {
            num(&mut out, v);
        }
        out.push('\n');
    }
    out
}

/// Parsed `key=value` pairs of the first header plus the data rows.
struct Parsed {
    header: Vec<(String, String)>,
    rows: Vec<(usize, Vec<f64>)>,
}

fn parse(path: &Path, text: &str) -> Result<Parsed, CliError> {
    let err = |line: usize, msg: String| CliError::Parse { path: path.to_owned(), line, msg };
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if header.is_none() {
                let mut kv = Vec::new();
                for tok in rest.split_whitespace() {
                    let (k, v) =
                        tok.split_once('=').ok_or_else(|| err(line_no, format!("bad header field `{tok}`")))?;
                    kv.push((k.to_owned(), v.to_owned()));
                }
                header = Some(kv);
            }
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| err(line_no, format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((line_no, vals));
    }
    let header = header.ok_or_else(|| err(1, "missing header".into()))?;
    Ok(Parsed { header, rows })
}

impl Parsed {
    fn get(&self, path: &Path, key: &str) -> Result<&str, CliError> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| CliError::Parse {
            path: path.to_owned(),
            line: 1,
            msg: format!("header lacks `{key}`"),
        })
    }

    fn get_num<T: std::str::FromStr>(&self, path: &Path, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(path, key)?;
        v.parse().map_err(|e| CliError::Parse {
            path: path.to_owned(),
            line: 1,
            msg: format!("header `{key}={v}`: {e}"),
        })
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn width_error(path: &Path, line: usize, expected: usize, found: usize) -> CliError {
    CliError::Parse { path: path.to_owned(), line, msg: format!("expected {expected} columns, found {found}") }
}

pub fn parse_reflection(path: &Path, text: &str) -> Result<ReflectionTable, CliError> {
    let p = parse(path, text)?;
    let n: usize = p.get_num(path, "N")?;
    let eps = p
        .get(path, "eps")?
        .split(',')
        .map(|t| t.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Parse { path: path.to_owned(), line: 1, msg: format!("eps: {e}") })?;
    if eps.len() != n {
        return Err(CliError::Parse {
            path: path.to_owned(),
            line: 1,
            msg: format!("N={n} but {} thresholds", eps.len()),
        });
    }
    let sys = ChannelSystem::new(eps).stage("reflection file")?;
    let width = 1 + 4 * n * n;
    let (mut k, mut r, mut t) = (Vec::new(), Vec::new(), Vec::new());
    for (line, vals) in &p.rows {
        if vals.len() != width {
            return Err(width_error(path, *line, width, vals.len()));
        }
        k.push(vals[0]);
        let mat = |off: usize| {
            let data = (0..n * n).map(|e| Complex64::new(vals[off + 2 * e], vals[off + 2 * e + 1])).collect();
            CMat::from_rows(n, data)
        };
        r.push(mat(1).stage("reflection file")?);
        t.push(mat(1 + 2 * n * n).stage("reflection file")?);
    }
    ReflectionTable::new(sys, k, r, t).stage("reflection file")
}

pub fn parse_bound(path: &Path, text: &str, sys: &ChannelSystem) -> Result<Vec<BoundState>, CliError> {
    let p = parse(path, text)?;
    let n: usize = p.get_num(path, "N")?;
    if n != sys.n_channels() {
        return Err(CliError::Parse {
            path: path.to_owned(),
            line: 1,
            msg: format!("file has N={n}, system has {}", sys.n_channels()),
        });
    }
    let mut states = Vec::new();
    for (line, vals) in &p.rows {
        let nn = n * n;
        let complex = match vals.len() {
            w if w == 2 + nn => false,
            w if w == 2 + 2 * nn => true,
            w => return Err(width_error(path, *line, 2 + nn, w)),
        };
        let data: Vec<Complex64> = (0..nn)
            .map(|e| {
                if complex {
                    Complex64::new(vals[2 + 2 * e], vals[3 + 2 * e])
                } else {
                    Complex64::new(vals[2 + e], 0.0)
                }
            })
            .collect();
        // stored as i M; the residue is M
        let m = CMat::from_rows(n, data).stage("bound file")?.scale(Complex64::new(0.0, -1.0));
        states.push(BoundState::new(sys, vals[0], m).stage("bound file")?);
    }
    Ok(states)
}

pub fn parse_potential(path: &Path, text: &str) -> Result<PotentialGrid, CliError> {
    let p = parse(path, text)?;
    let n: usize = p.get_num(path, "N")?;
    let h: f64 = p.get_num(path, "h")?;
    let first =
        p.rows.first().ok_or_else(|| CliError::Parse { path: path.to_owned(), line: 1, msg: "no rows".into() })?;
    let x_lo = first.1.first().copied().unwrap_or(0.0);
    let mut values = Vec::with_capacity(p.rows.len() * n * n);
    for (line, vals) in &p.rows {
        if vals.len() != 1 + n * n {
            return Err(width_error(path, *line, 1 + n * n, vals.len()));
        }
        values.extend_from_slice(&vals[1..]);
    }
    PotentialGrid::new(n, x_lo, h, values).stage("potential file")
}

pub fn read_reflection(path: &Path) -> Result<ReflectionTable, CliError> {
    parse_reflection(path, &read(path)?)
}

pub fn read_bound(path: &Path, sys: &ChannelSystem) -> Result<Vec<BoundState>, CliError> {
    parse_bound(path, &read(path)?, sys)
}

pub fn read_potential(path: &Path) -> Result<PotentialGrid, CliError> {
    parse_potential(path, &read(path)?)
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_without_equals_is_rejected() {
        let e = parse_potential(Path::new("p"), "# N=1 h\n0 1\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 1, .. }));
    }

    #[test]
    fn row_width_is_checked() {
        let e = parse_potential(Path::new("p"), "# N=2 h=0.5\n0 1 2 2 1\n0.5 1 2 2\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, .. }));
    }

    #[test]
    fn bad_number_reports_line() {
        let text = "# N=1 kmax=1 eps=0\n# config-sha256=x\n0.5 0 0 1 zz\n";
        let e = parse_reflection(Path::new("r"), text).unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, .. }));
    }
}
