use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::basis::Method;
use crate::error::{Result, SlodError};
use crate::homogenize::Solver;

pub const RESULTS_HEADER: &str = "# slod results v1";
const COLUMNS: &str = "d,level,H,ell,method,solver,energy_error,relative_error,sigma_max,riesz_condition,rate,status";

/// One experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub d: usize,
    pub level: u32,
    #[serde(rename = "H")]
    pub h: f64,
    pub ell: usize,
    pub method: Method,
    pub solver: Solver,
    pub energy_error: f64,
    pub relative_error: f64,
    pub sigma_max: f64,
    pub riesz_condition: f64,
    /// Observed order against the previous level of the same series.
    pub rate: Option<f64>,
    /// `ok` or the error kind of a failed cell.
    pub status: String,
    #[serde(skip)]
    pub wall_time: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }

    fn sort_key(&self) -> (Method, Solver, usize, u32) {
        (self.method, self.solver, self.ell, self.level)
    }
}

/// Sorts rows into the canonical order (method, solver, ell, level).
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by_key(ResultRow::sort_key);
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

fn parse_num(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "" => Ok(f64::NAN),
        _ => s.parse().map_err(|_| SlodError::Format(format!("bad number {s:?}"))),
    }
}

/// Writes rows in the order given. Output depends only on the row values.
pub fn write_results(w: &mut impl Write, rows: &[ResultRow]) -> Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    writeln!(w, "{COLUMNS}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.d,
            r.level,
            num(r.h),
            r.ell,
            r.method.as_str(),
            r.solver.as_str(),
            num(r.energy_error),
            num(r.relative_error),
            num(r.sigma_max),
            num(r.riesz_condition),
            r.rate.map(num).unwrap_or_default(),
            r.status
        )?;
    }
    Ok(())
}

pub fn write_timings(w: &mut impl Write, rows: &[ResultRow]) -> Result<()> {
    writeln!(w, "d,level,ell,method,solver,wall_time_s")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            r.d,
            r.level,
            r.ell,
            r.method.as_str(),
            r.solver.as_str(),
            r.wall_time
        )?;
    }
    Ok(())
}

/// Writes `path` and the wall-time sidecar `<stem>.timings.csv` next to it.
pub fn save_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_results(&mut buf, rows)?;
    std::fs::write(path, buf)?;
    let mut buf = Vec::new();
    write_timings(&mut buf, rows)?;
    std::fs::write(path.with_extension("timings.csv"), buf)?;
    Ok(())
}

pub fn read_results(r: impl BufRead) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut saw_columns = false;
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_columns {
            if line != COLUMNS {
                return Err(SlodError::Format(format!("unexpected results columns {line:?}")));
            }
            saw_columns = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(SlodError::Format(format!("expected 12 fields, got {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| SlodError::Format(format!("bad integer {s:?}")));
        let method = match f[4] {
            "slod" => Method::Slod,
            "lod" => Method::Lod,
            m => return Err(SlodError::Format(format!("unknown method {m:?}"))),
        };
        let solver = match f[5] {
            "galerkin" => Solver::Galerkin,
            "collocation" => Solver::Collocation,
            s => return Err(SlodError::Format(format!("unknown solver {s:?}"))),
        };
        rows.push(ResultRow {
            d: int(f[0])?,
            level: int(f[1])? as u32,
            h: parse_num(f[2])?,
            ell: int(f[3])?,
            method,
            solver,
            energy_error: parse_num(f[6])?,
            relative_error: parse_num(f[7])?,
            sigma_max: parse_num(f[8])?,
            riesz_condition: parse_num(f[9])?,
            rate: if f[10].is_empty() { None } else { Some(parse_num(f[10])?) },
            status: f[11].to_string(),
            wall_time: 0.0,
        });
    }
    if !saw_columns {
        return Err(SlodError::Format("results file has no header".into()));
    }
    Ok(rows)
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path)?;
    read_results(std::io::BufReader::new(file))
}
