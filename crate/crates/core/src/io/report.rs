//! Sweep results as CSV, manifests listing the CSVs of a comparison, an
//! aligned text table and a static SVG plot.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::modem::{awgn_ber, Constellation};
use crate::sim::{SimResult, SnrPoint};

pub const CSV_HEADER: &str = "scheme,snr_db,bits,bit_errors,ber,se,throughput,tx_energy,seed,config_hash";

/// One BER curve, as held in memory or read back from a CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub constellation: Constellation,
    pub seed: u64,
    pub config_hash: String,
    pub points: Vec<SnrPoint>,
}

impl From<&SimResult> for Curve {
    fn from(r: &SimResult) -> Self {
        Self {
            label: r.label.clone(),
            constellation: r.constellation,
            seed: r.seed,
            config_hash: r.config_hash.clone(),
            points: r.points.clone(),
        }
    }
}

pub fn result_csv(r: &SimResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &r.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.label,
            p.snr_db,
            p.bits,
            p.bit_errors,
            p.ber,
            p.standard_error,
            p.throughput_bits_per_frame,
            p.avg_tx_energy,
            r.seed,
            r.config_hash
        );
    }
    out
}

pub fn parse_csv(text: &str, constellation: Constellation, origin: &str) -> Result<Curve> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.into(),
        message: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut curve: Option<Curve> = None;
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(n, format!("expected 10 fields, found {}", f.len())));
        }
        let num = |j: usize| f[j].parse::<f64>().map_err(|_| err(n, format!("bad number `{}`", f[j])));
        let int = |j: usize| f[j].parse::<u64>().map_err(|_| err(n, format!("bad integer `{}`", f[j])));
        let point = SnrPoint {
            snr_db: num(1)?,
            bits: int(2)?,
            bit_errors: int(3)?,
            ber: num(4)?,
            standard_error: num(5)?,
            throughput_bits_per_frame: num(6)?,
            avg_tx_energy: num(7)?,
        };
        let c = curve.get_or_insert_with(|| Curve {
            label: f[0].to_string(),
            constellation,
            seed: 0,
            config_hash: f[9].to_string(),
            points: Vec::new(),
        });
        if c.label != f[0] || c.config_hash != f[9] {
            return Err(err(n, "rows from different sweeps in one file".into()));
        }
        c.seed = int(8)?;
        c.points.push(point);
    }
    curve.ok_or_else(|| err(2, "no data rows".into()))
}

/// Manifest lines: `<csv path relative to the manifest> <constellation>`.
pub fn manifest_text(entries: &[(String, Constellation)]) -> String {
    entries.iter().map(|(f, c)| format!("{f} {c}\n")).collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, Constellation)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let mut parts = l.split_whitespace();
            let (Some(file), Some(c), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected `<csv> <constellation>`", i + 1),
                });
            };
            Ok((dir.join(file), c.parse()?))
        })
        .collect()
}

pub fn load_curves(manifest: &Path) -> Result<Vec<Curve>> {
    read_manifest(manifest)?
        .into_iter()
        .map(|(file, c)| {
            let text = fs::read_to_string(&file).map_err(|e| Error::Parse {
                path: file.clone(),
                message: e.to_string(),
            })?;
            parse_csv(&text, c, &file.display().to_string())
        })
        .collect()
}

fn check_grid(curves: &[Curve]) -> Result<Vec<f64>> {
    let first = curves.first().ok_or_else(|| Error::Config("no curves to compare".into()))?;
    let grid: Vec<f64> = first.points.iter().map(|p| p.snr_db).collect();
    for c in &curves[1..] {
        let g: Vec<f64> = c.points.iter().map(|p| p.snr_db).collect();
        if g != grid {
            return Err(Error::Config(format!(
                "'{}' and '{}' use different SNR grids",
                c.label, first.label
            )));
        }
    }
    Ok(grid)
}

/// Whitespace-aligned table: SNR, the AWGN oracle for the first curve's
/// constellation, then BER, standard error, throughput and throughput
/// relative to the first curve for every curve.
pub fn curves_table(curves: &[Curve]) -> Result<String> {
    let grid = check_grid(curves)?;
    let mut header = vec!["snr_db".to_string(), "awgn_ber".to_string()];
    for c in curves {
        for suffix in ["ber", "se", "throughput", "throughput_ratio"] {
            header.push(format!("{}_{suffix}", c.label));
        }
    }
    let mut rows = vec![header];
    let base = curves[0].points[0].throughput_bits_per_frame;
    for (i, snr) in grid.iter().enumerate() {
        let mut row = vec![
            format!("{snr}"),
            format!("{:.6e}", awgn_ber(curves[0].constellation, 10f64.powf(snr / 10.0))),
        ];
        for c in curves {
            let p = &c.points[i];
            row.push(format!("{:.6e}", p.ber));
            row.push(format!("{:.3e}", p.standard_error));
            row.push(format!("{}", p.throughput_bits_per_frame));
            row.push(format!("{:.6}", p.throughput_bits_per_frame / base));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    Ok(out)
}

pub fn aligned_table(results: &[SimResult]) -> String {
    let curves: Vec<Curve> = results.iter().map(Curve::from).collect();
    curves_table(&curves).unwrap_or_default()
}

const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];

/// Log-scale BER curves against SNR, with the AWGN oracle dashed. Points
/// with no errors are drawn at the lower plot edge.
pub fn ber_svg(curves: &[Curve]) -> Result<String> {
    let grid = check_grid(curves)?;
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 70.0, 150.0, 20.0, 50.0);
    let (x0, x1) = (grid[0], *grid.last().unwrap_or(&grid[0]));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let min_ber = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.ber))
        .filter(|b| *b > 0.0)
        .fold(1e-1, f64::min);
    let decades = (-min_ber.log10()).ceil().clamp(1.0, 12.0);
    let px = |x: f64| ml + (x - x0) / span * (w - ml - mr);
    let py = |b: f64| {
        let l = if b > 0.0 { b.log10().max(-decades) } else { -decades };
        mt + (-l) / decades * (h - mt - mb)
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for d in 0..=decades as i32 {
        let y = py(10f64.powi(-d));
        let _ = writeln!(s, r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, w - mr);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e-{d}</text>"#, ml - 6.0, y + 4.0);
    }
    for x in &grid {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#, px(*x), h - mb + 18.0);
    }
    let _ = writeln!(s, r#"<rect x="{ml}" y="{mt}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, w - ml - mr, h - mt - mb);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#, (ml + w - mr) / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">BER</text>"#, h / 2.0, h / 2.0);

    let awgn: Vec<String> = grid
        .iter()
        .map(|x| format!("{:.1},{:.1}", px(*x), py(awgn_ber(curves[0].constellation, 10f64.powf(x / 10.0)))))
        .collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="5,4"/>"#, awgn.join(" "));
    let legend_x = w - mr + 10.0;
    let _ = writeln!(s, r#"<text x="{legend_x}" y="{:.1}">AWGN</text>"#, mt + 12.0);
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c.points.iter().map(|p| format!("{:.1},{:.1}", px(p.snr_db), py(p.ber))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        for p in &c.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(p.snr_db), py(p.ber));
        }
        let _ = writeln!(s, r#"<text x="{legend_x}" y="{:.1}" fill="{color}">{}</text>"#, mt + 30.0 + 18.0 * i as f64, c.label);
    }
    s.push_str("</svg>\n");
    Ok(s)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{standard_error, Scheme};

    fn result(label: &str, throughput: f64) -> SimResult {
        SimResult {
            label: label.into(),
            scheme: Scheme::Mem,
            constellation: Constellation::Qam16,
            points: [0.0, 10.0]
                .iter()
                .map(|&snr_db| SnrPoint {
                    snr_db,
                    bits: 1000,
                    bit_errors: 12,
                    ber: 0.012,
                    standard_error: standard_error(0.012, 1000),
                    throughput_bits_per_frame: throughput,
                    avg_tx_energy: 1.0 / 3.0,
                })
                .collect(),
            config_hash: "ab".repeat(32),
            seed: 4,
            wall_time_s: 1.5,
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let r = result("mem", 512.0);
        let text = result_csv(&r);
        assert!(text.starts_with(CSV_HEADER));
        let c = parse_csv(&text, Constellation::Qam16, "x").unwrap();
        assert_eq!(c, Curve::from(&r));
        assert!(parse_csv("nope\n", Constellation::Qam16, "x").is_err());
        assert!(parse_csv(&text.replace(",4,", ",x,"), Constellation::Qam16, "x").is_err());
    }

    #[test]
    fn table_reports_throughput_ratio() {
        let t = aligned_table(&[result("mem", 512.0), result("zp-mem", 448.0)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].split_whitespace().any(|h| h == "zp-mem_throughput_ratio"));
        assert!(lines[0].split_whitespace().any(|h| h == "awgn_ber"));
        assert_eq!(lines[1].split_whitespace().last(), Some("0.875000"));
    }

    #[test]
    fn svg_is_well_formed() {
        let s = ber_svg(&[Curve::from(&result("mem", 1.0))]).unwrap();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
