//! CSV tables, SVG line plots and run manifests.
//!
//! Numbers are written with 17 significant digits and LF line endings so that
//! identical runs produce identical bytes. Plots are built from CSV text only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numerics::fmt_g17;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| Cell::Num(v)).collect());
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => fmt_g17(*v),
                    Cell::Text(s) => s.replace([',', '\n'], " "),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parsed CSV: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedCsv {
    pub fn parse(text: &str) -> io::Result<Self> {
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty CSV"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(ParsedCsv { header, rows })
    }

    pub fn column(&self, name: &str) -> io::Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("no column `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 55.0);

impl SvgPlot {
    /// One series per distinct combination of the `group` columns (or a
    /// single series), taking `x` and `y` from the named columns. Non-numeric
    /// cells are skipped.
    pub fn from_csv(csv: &str, x: &str, y: &str, group: &[&str], title: &str) -> io::Result<Self> {
        let parsed = ParsedCsv::parse(csv)?;
        let (cx, cy) = (parsed.column(x)?, parsed.column(y)?);
        let cg = group.iter().map(|g| parsed.column(g)).collect::<io::Result<Vec<_>>>()?;
        let mut groups: BTreeMap<String, Series> = BTreeMap::new();
        for row in &parsed.rows {
            let (Ok(vx), Ok(vy)) = (row[cx].parse::<f64>(), row[cy].parse::<f64>()) else { continue };
            if !vx.is_finite() || !vy.is_finite() {
                continue;
            }
            let key = if cg.is_empty() {
                y.to_string()
            } else {
                cg.iter().map(|&c| row[c].as_str()).filter(|v| !v.is_empty()).collect::<Vec<_>>().join(" ")
            };
            let s = groups.entry(key.clone()).or_insert_with(|| Series { label: key, x: Vec::new(), y: Vec::new() });
            s.x.push(vx);
            s.y.push(vy);
        }
        Ok(SvgPlot {
            title: title.to_string(),
            x_label: x.to_string(),
            y_label: y.to_string(),
            series: groups.into_values().collect(),
        })
    }

    /// Overlay several `(x, y)` column pairs of one CSV.
    pub fn from_csv_columns(csv: &str, x: &str, ys: &[&str], title: &str) -> io::Result<Self> {
        let mut plot = SvgPlot { title: title.to_string(), x_label: x.to_string(), y_label: String::new(), series: Vec::new() };
        for y in ys {
            let mut p = Self::from_csv(csv, x, y, &[], title)?;
            plot.series.append(&mut p.series);
        }
        plot.y_label = ys.join(", ");
        Ok(plot)
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let all = |f: fn(&Series) -> &Vec<f64>| self.series.iter().flat_map(move |s| f(s).iter().copied());
        let lo_hi = |it: Box<dyn Iterator<Item = f64> + '_>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-300 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = lo_hi(Box::new(all(|s| &s.x)));
        let (y0, y1) = lo_hi(Box::new(all(|s| &s.y)));
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let (ml, mr, mt, mb) = MARGIN;
        let pw = WIDTH - ml - mr;
        let ph = HEIGHT - mt - mb;
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, mt + ph, mt + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, mt + ph + 18.0, tick(xv));
            let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{ml}" y2="{py:.2}" stroke="black"/>"#, ml - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, ml - 8.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, HEIGHT - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = series.x.iter().zip(&series.y).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            let ly = mt + 14.0 + 16.0 * k as f64;
            let lx = ml + pw - 150.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{colour}" stroke-width="2"/>"#, ly - 4.0, lx + 20.0, ly - 4.0);
            let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 25.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let r = format!("{:.4}", v);
    let r = r.trim_end_matches('0').trim_end_matches('.');
    if r == "-0" { "0".to_string() } else { r.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
}

/// Output directory that records every file it writes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(OutputDir { root: root.as_ref().to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(path)
    }

    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> io::Result<String> {
        let text = table.render();
        self.write(name, &text)?;
        Ok(text)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, &text).map(|_| ())
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    /// Write `manifest.json` listing every file written so far.
    pub fn finish(self, command: &str, parameters: serde_json::Value, wall_time_s: f64) -> io::Result<RunManifest> {
        let manifest = RunManifest {
            command: command.to_string(),
            parameters,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s,
            outputs: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)? + "\n";
        fs::write(self.root.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_lf_and_round_trips() {
        let mut t = CsvTable::new(&["sigma", "v", "method"]);
        t.push(vec![0.1.into(), (1.0 / 3.0).into(), "shoot".into()]);
        let text = t.render();
        assert_eq!(text, "sigma,v,method\n0.10000000000000001,0.33333333333333331,shoot\n");
        let p = ParsedCsv::parse(&text).unwrap();
        assert_eq!(p.rows[0][1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn plot_groups_series() {
        let csv = "x,y,g\n0,1,a\n1,2,a\n0,3,b\n1,nan,b\n";
        let plot = SvgPlot::from_csv(csv, "x", "y", &["g"], "t").unwrap();
        assert_eq!(plot.series.len(), 2);
        assert_eq!(plot.series[1].x.len(), 1);
        let svg = plot.render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.ends_with("</svg>\n"));
    }
}
