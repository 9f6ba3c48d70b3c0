//! SVG figures and matching gnuplot scripts from a results CSV.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::csv::{load_results, ResultRow};
use crate::basis::Method;
use crate::error::{Result, SlodError};
use crate::homogenize::Solver;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Error against `ell`, one curve per coarse level.
    Decay,
    /// Error against `H`, one curve per `ell`.
    Convergence,
}

impl std::str::FromStr for PlotKind {
    type Err = SlodError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decay" => Ok(Self::Decay),
            "convergence" => Ok(Self::Convergence),
            _ => Err(SlodError::Config(format!("unknown plot kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum XAxis {
    Linear,
    Log,
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

struct Figure {
    title: String,
    xlabel: String,
    ylabel: String,
    xaxis: XAxis,
    series: Vec<Series>,
    /// Reference line of this slope through the first point, in log-log.
    guide_slope: Option<f64>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: [f64; 4] = [70.0, 20.0, 40.0, 50.0]; // left, right, top, bottom

fn usable(r: &ResultRow) -> bool {
    !r.failed() && r.energy_error.is_finite() && r.energy_error > 0.0
}

fn series_by<K: Ord>(
    rows: &[ResultRow],
    key: impl Fn(&ResultRow) -> K,
    label: impl Fn(&ResultRow) -> String,
    x: impl Fn(&ResultRow) -> f64,
) -> Vec<Series> {
    let mut map: BTreeMap<K, Series> = BTreeMap::new();
    for r in rows.iter().filter(|r| usable(r)) {
        let s = map.entry(key(r)).or_insert_with(|| Series {
            label: label(r),
            points: Vec::new(),
        });
        s.points.push((x(r), r.energy_error));
    }
    let mut out: Vec<Series> = map.into_values().collect();
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn tag(m: Method, s: Solver) -> String {
    match s {
        Solver::Galerkin => m.as_str().to_uppercase(),
        Solver::Collocation => format!("{} ({})", m.as_str().to_uppercase(), s.as_str()),
    }
}

fn decay_figure(rows: &[ResultRow], power: bool) -> Figure {
    let d = rows.first().map_or(2, |r| r.d);
    let p = d as f64 / (d as f64 - 1.0);
    let series = series_by(
        rows,
        |r| (r.method, r.solver, r.level),
        |r| format!("{} H=2^-{}", tag(r.method, r.solver), r.level),
        |r| if power { (r.ell as f64).powf(p) } else { r.ell as f64 },
    );
    Figure {
        title: "Energy error against oversampling".into(),
        xlabel: if power { format!("ell^{p}") } else { "ell".into() },
        ylabel: "energy error".into(),
        xaxis: XAxis::Linear,
        series,
        guide_slope: None,
    }
}

fn convergence_figure(rows: &[ResultRow]) -> Figure {
    let series = series_by(
        rows,
        |r| (r.method, r.solver, r.ell),
        |r| format!("{} ell={}", tag(r.method, r.solver), r.ell),
        |r| r.h,
    );
    Figure {
        title: "Energy error against mesh size".into(),
        xlabel: "H".into(),
        ylabel: "energy error".into(),
        xaxis: XAxis::Log,
        series,
        guide_slope: Some(2.0),
    }
}

fn fmt_tick(v: f64) -> String {
    let e = v.log10().round() as i32;
    format!("1e{e}")
}

impl Figure {
    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let (mut xr, mut yr) = match self.xaxis {
            XAxis::Linear => ([x0, x1], [y0.log10().floor(), y1.log10().ceil()]),
            XAxis::Log => ([x0.log10(), x1.log10()], [y0.log10().floor(), y1.log10().ceil()]),
        };
        for r in [&mut xr, &mut yr] {
            if r[1] - r[0] < 1e-12 {
                r[0] -= 0.5;
                r[1] += 0.5;
            }
        }
        if self.xaxis == XAxis::Linear {
            let pad = 0.05 * (xr[1] - xr[0]);
            xr = [xr[0] - pad, xr[1] + pad];
        }
        (xr, yr)
    }

    fn svg(&self) -> String {
        let (xr, yr) = self.bounds();
        let pw = W - MARGIN[0] - MARGIN[1];
        let ph = H - MARGIN[2] - MARGIN[3];
        let sx = |x: f64| {
            let t = if self.xaxis == XAxis::Log { x.log10() } else { x };
            MARGIN[0] + (t - xr[0]) / (xr[1] - xr[0]) * pw
        };
        let sy = |y: f64| MARGIN[2] + (yr[1] - y.log10()) / (yr[1] - yr[0]) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, self.title);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#,
            MARGIN[0], MARGIN[2]
        );
        for e in (yr[0] as i32)..=(yr[1] as i32) {
            let v = 10f64.powi(e);
            let y = sy(v);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                MARGIN[0],
                MARGIN[0] + pw,
                MARGIN[0] - 6.0,
                y + 4.0,
                fmt_tick(v)
            );
        }
        let mut xticks: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
        xticks.sort_by(f64::total_cmp);
        xticks.dedup();
        for x in xticks {
            let label = if self.xaxis == XAxis::Log { format!("2^{}", x.log2().round()) } else { format!("{x}") };
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{label}</text>"#,
                sx(x),
                H - MARGIN[3] + 18.0
            );
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN[0] + pw / 2.0, H - 10.0, self.xlabel);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            MARGIN[2] + ph / 2.0,
            self.ylabel
        );
        if let (Some(slope), Some(first)) = (self.guide_slope, self.series.first()) {
            if let (Some(&(x0, y0)), Some(&(x1, _))) = (first.points.first(), first.points.last()) {
                let y1 = y0 * (x1 / x0).powf(slope);
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-dasharray="6 4"/><text x="{:.2}" y="{:.2}">slope {slope}</text>"#,
                    sx(x0),
                    sy(y0),
                    sx(x1),
                    sy(y1),
                    sx(x1) + 4.0,
                    sy(y1)
                );
            }
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            for &(x, y) in &series.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
            }
            let ly = MARGIN[2] + 14.0 + 16.0 * i as f64;
            let lx = MARGIN[0] + pw - 170.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                series.label
            );
        }
        s.push_str("</svg>\n");
        s
    }

    fn gnuplot(&self, image: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "set terminal svg size {W},{H}");
        let _ = writeln!(s, "set output '{image}'");
        let _ = writeln!(s, "set title '{}'", self.title);
        let _ = writeln!(s, "set xlabel '{}'\nset ylabel '{}'", self.xlabel, self.ylabel);
        let _ = writeln!(s, "set logscale y\nset format y '10^{{%L}}'\nset key top right");
        if self.xaxis == XAxis::Log {
            let _ = writeln!(s, "set logscale x 2");
        }
        for (i, series) in self.series.iter().enumerate() {
            let _ = writeln!(s, "$s{i} << EOD");
            for (x, y) in &series.points {
                let _ = writeln!(s, "{x:e} {y:e}");
            }
            let _ = writeln!(s, "EOD");
        }
        let mut cmds: Vec<String> = self
            .series
            .iter()
            .enumerate()
            .map(|(i, series)| format!("$s{i} using 1:2 with linespoints title '{}'", series.label))
            .collect();
        if let (Some(slope), Some(first)) = (self.guide_slope, self.series.first()) {
            if let Some(&(x0, y0)) = first.points.first() {
                cmds.push(format!("{y0:e}*(x/{x0:e})**{slope} dashtype 2 lc black title 'slope {slope}'"));
            }
        }
        let _ = writeln!(s, "plot {}", cmds.join(", \\\n     "));
        s
    }

    fn write(&self, svg_path: &Path) -> Result<Vec<PathBuf>> {
        std::fs::write(svg_path, self.svg())?;
        let gp_path = svg_path.with_extension("gp");
        let image = svg_path.with_extension("gnuplot.svg");
        let image = image.file_name().unwrap().to_string_lossy();
        std::fs::write(&gp_path, self.gnuplot(&image))?;
        Ok(vec![svg_path.to_path_buf(), gp_path])
    }
}

/// Writes `<stem>.svg` and `<stem>.gp` next to `csv` and returns the paths.
/// Decay plots in 2D also get `<stem>_ellpow.svg`, with the abscissa
/// `ell^{d/(d-1)}`; that power is undefined in 1D.
pub fn emit_plot(csv: &Path, kind: PlotKind) -> Result<Vec<PathBuf>> {
    let rows = load_results(csv)?;
    if !rows.iter().any(usable) {
        return Err(SlodError::Format(format!("{} has no plottable rows", csv.display())));
    }
    let stem = csv.with_extension("");
    let stem = stem.to_string_lossy();
    let mut out = Vec::new();
    match kind {
        PlotKind::Decay => {
            out.extend(decay_figure(&rows, false).write(Path::new(&format!("{stem}.svg")))?);
            if rows[0].d > 1 {
                out.extend(decay_figure(&rows, true).write(Path::new(&format!("{stem}_ellpow.svg")))?);
            }
        }
        PlotKind::Convergence => {
            out.extend(convergence_figure(&rows).write(Path::new(&format!("{stem}.svg")))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::csv::RESULTS_HEADER;

    const COLS: &str = "d,level,H,ell,method,solver,energy_error,relative_error,sigma_max,riesz_condition,rate,status";

    fn write_csv(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("r.csv");
        std::fs::write(&p, format!("{RESULTS_HEADER}\n{COLS}\n{body}")).unwrap();
        p
    }

    #[test]
    fn three_rows_three_points() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_csv(
            dir.path(),
            "2,3,1.25e-1,1,slod,galerkin,1e-1,2e-1,1e-3,5e0,,ok\n\
             2,3,1.25e-1,2,slod,galerkin,1e-3,2e-3,1e-5,6e0,,ok\n\
             2,3,1.25e-1,3,slod,galerkin,1e-5,2e-5,1e-7,7e0,,ok\n",
        );
        let files = emit_plot(&csv, PlotKind::Decay).unwrap();
        assert_eq!(files.len(), 4);
        let svg = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        let gp = std::fs::read_to_string(&files[1]).unwrap();
        assert!(gp.contains("plot $s0"));
    }

    #[test]
    fn convergence_has_guide() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_csv(
            dir.path(),
            "2,2,2.5e-1,2,lod,galerkin,4e-2,1e-1,nan,5e0,,ok\n\
             2,3,1.25e-1,2,lod,galerkin,1e-2,2e-2,nan,5e0,2e0,ok\n\
             2,4,6.25e-2,2,lod,galerkin,nan,nan,nan,inf,,stability\n",
        );
        let files = emit_plot(&csv, PlotKind::Convergence).unwrap();
        assert_eq!(files.len(), 2);
        let svg = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("slope 2"));
    }

    #[test]
    fn one_dimensional_decay_has_no_power_plot() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_csv(dir.path(), "1,3,1.25e-1,1,slod,galerkin,1e-1,2e-1,1e-3,5e0,,ok\n");
        assert_eq!(emit_plot(&csv, PlotKind::Decay).unwrap().len(), 2);
    }

    #[test]
    fn empty_csv_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_csv(dir.path(), "");
        assert!(emit_plot(&csv, PlotKind::Decay).is_err());
    }
}
