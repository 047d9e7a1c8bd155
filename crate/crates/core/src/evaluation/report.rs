//! Report tables, the improvement table and the SVG figures.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::EvalReport;
use super::{Criterion, VariableRanking};
use crate::error::{Error, Result};
use crate::models::ModelKind;

pub const REPORT_HEADER: [&str; 12] = [
    "product",
    "criterion",
    "model",
    "q",
    "f1_mean",
    "f1_std",
    "auc_mean",
    "auc_std",
    "f1_impr_pct",
    "auc_impr_pct",
    "seed",
    "fold_hash",
];

/// One line of the report table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub product: String,
    pub criterion: Criterion,
    pub model: ModelKind,
    pub q: f64,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub f1_impr_pct: Option<f64>,
    pub auc_impr_pct: Option<f64>,
    pub seed: u64,
    pub fold_hash: String,
}

impl EvalReport {
    pub fn table_rows(&self) -> Vec<ReportRow> {
        self.rows
            .iter()
            .map(|r| ReportRow {
                product: self.product_id.clone(),
                criterion: self.criterion,
                model: self.model,
                q: r.q,
                f1_mean: r.f1_mean,
                f1_std: r.f1_std,
                auc_mean: r.auc_mean,
                auc_std: r.auc_std,
                f1_impr_pct: r.f1_impr_pct,
                auc_impr_pct: r.auc_impr_pct,
                seed: self.seed,
                fold_hash: self.fold_hash.clone(),
            })
            .collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

/// Tab-separated, full-precision values, `NA` for gaps.
pub fn write_report_table(w: &mut impl Write, reports: &[EvalReport]) -> Result<()> {
    let io = |e| Error::io("<report table>", e);
    writeln!(w, "{}", REPORT_HEADER.join("\t")).map_err(io)?;
    for rep in reports {
        for r in rep.table_rows() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.product,
                r.criterion,
                r.model,
                r.q,
                opt(r.f1_mean),
                opt(r.f1_std),
                opt(r.auc_mean),
                opt(r.auc_std),
                opt(r.f1_impr_pct),
                opt(r.auc_impr_pct),
                r.seed,
                r.fold_hash
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_report_table(r: impl BufRead) -> Result<Vec<ReportRow>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty report table".into()))?
        .map_err(|e| Error::io("<report table>", e))?;
    if header != REPORT_HEADER.join("\t") {
        return Err(Error::Parse("unexpected report header".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<report table>", e))?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != REPORT_HEADER.len() {
            return Err(Error::Parse(format!("expected {} columns, got {}", REPORT_HEADER.len(), f.len())));
        }
        out.push(ReportRow {
            product: f[0].to_string(),
            criterion: f[1].parse()?,
            model: f[2].parse()?,
            q: f[3].parse().map_err(|_| Error::Parse(format!("bad q `{}`", f[3])))?,
            f1_mean: parse_opt(f[4])?,
            f1_std: parse_opt(f[5])?,
            auc_mean: parse_opt(f[6])?,
            auc_std: parse_opt(f[7])?,
            f1_impr_pct: parse_opt(f[8])?,
            auc_impr_pct: parse_opt(f[9])?,
            seed: f[10].parse().map_err(|_| Error::Parse(format!("bad seed `{}`", f[10])))?,
            fold_hash: f[11].to_string(),
        });
    }
    Ok(out)
}

/// `(m − m0) / m0` in percent.
pub fn improvement_pct(m0: f64, m: f64) -> f64 {
    (m - m0) / m0 * 100.0
}

/// Signed percentage with three significant figures, e.g. `+6.67%`.
pub fn format_improvement(pct: f64) -> String {
    let sign = if pct < 0.0 { "-" } else { "+" };
    let a = pct.abs();
    if a == 0.0 {
        return format!("{sign}0.00%");
    }
    // round first so that 9.996 becomes 10.0, not 10.00
    let mag = a.log10().floor() as i32;
    let rounded = {
        let scale = 10f64.powi(2 - mag);
        (a * scale).round() / scale
    };
    let mag = rounded.log10().floor() as i32;
    let decimals = (2 - mag).max(0) as usize;
    format!("{sign}{rounded:.decimals$}%")
}

/// Metric values per `q` with the improvement over `q = 0`, one line per
/// report and metric.
pub fn write_improvement_table(w: &mut impl Write, reports: &[EvalReport], qs: &[f64]) -> Result<()> {
    let io = |e| Error::io("<improvement table>", e);
    let mut header = vec!["product".to_string(), "criterion".into(), "model".into(), "measure".into(), "no_context".into()];
    header.extend(qs.iter().filter(|&&q| q != 0.0).map(|q| format!("q{q}")));
    writeln!(w, "{}", header.join("\t")).map_err(io)?;
    for rep in reports {
        for (measure, get) in [("F1", (|r: &super::EvalRow| r.f1_mean) as fn(&super::EvalRow) -> Option<f64>), ("AUC", |r| r.auc_mean)] {
            let base = rep.row(0.0).and_then(get);
            let mut cells = vec![
                rep.product_id.clone(),
                rep.criterion.to_string(),
                rep.model.to_string(),
                measure.to_string(),
                base.map_or("NA".into(), |b| format!("{b:.3}")),
            ];
            for &q in qs.iter().filter(|&&q| q != 0.0) {
                let v = rep.row(q).and_then(get);
                cells.push(match (base, v) {
                    (Some(b), Some(v)) if b != 0.0 => format!("{v:.3} ({})", format_improvement(improvement_pct(b, v))),
                    (_, Some(v)) => format!("{v:.3}"),
                    _ => "NA".into(),
                });
            }
            writeln!(w, "{}", cells.join("\t")).map_err(io)?;
        }
    }
    Ok(())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN} {MARGIN} V{} H{}" stroke="black" fill="none"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bar chart of ranked variable scores (the long-tail histogram).
pub fn long_tail_svg(ranking: &VariableRanking) -> String {
    let title = format!("Long tail of context: {} by {}", ranking.product_id, ranking.criterion);
    let mut s = svg_open(&title);
    let n = ranking.len().max(1) as f64;
    let max = ranking.entries.iter().map(|e| e.score).fold(0.0f64, f64::max);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar_w = plot_w / n;
    for (i, e) in ranking.entries.iter().enumerate() {
        let h = if max > 0.0 { e.score / max * plot_h } else { 0.0 };
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4"/>"##,
            MARGIN + i as f64 * bar_w,
            HEIGHT - MARGIN - h,
            (bar_w * 0.9).max(0.5),
            h
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">variables in rank order</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(s, r#"<text x="10" y="{MARGIN}" font-size="12">{max}</text>"#);
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    F1,
    Auc,
}

/// Metric against `q`, one polyline with a circle marker per `q` for each
/// report.
pub fn curves_svg(reports: &[EvalReport], metric: Metric, title: &str) -> String {
    let mut s = svg_open(title);
    let value = |r: &super::EvalRow| match metric {
        Metric::F1 => r.f1_mean,
        Metric::Auc => r.auc_mean,
    };
    let vals: Vec<f64> = reports.iter().flat_map(|rep| rep.rows.iter().filter_map(value)).collect();
    let (mut lo, mut hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.05;
        hi += 0.05;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |q: f64| MARGIN + q / 100.0 * plot_w;
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * plot_h;
    for (ri, rep) in reports.iter().enumerate() {
        let color = PALETTE[ri % PALETTE.len()];
        let label = format!("{} ({})", rep.model, rep.criterion);
        let pts: Vec<(f64, f64)> = rep.rows.iter().filter_map(|r| value(r).map(|v| (x(r.q), y(v)))).collect();
        let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-model="{}" points="{}" fill="none" stroke="{color}"/>"#,
            escape(&label),
            path.join(" ")
        );
        for (a, b) in pts {
            let _ = writeln!(
                s,
                r#"<circle class="marker" data-model="{}" cx="{a:.2}" cy="{b:.2}" r="3" fill="{color}"/>"#,
                escape(&label)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            MARGIN + 14.0 * ri as f64,
            escape(&label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">percent of context used (q)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(s, r#"<text x="5" y="{:.2}" font-size="11">{lo:.3}</text>"#, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<text x="5" y="{MARGIN:.2}" font-size="11">{hi:.3}</text>"#);
    s.push_str("</svg>\n");
    s
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `report.tsv`, `improvements.tsv`, per-product metric curves and
/// one long-tail histogram per ranking. Returns the written paths.
pub fn export_report(reports: &[EvalReport], rankings: &[VariableRanking], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let mut table = Vec::new();
    write_report_table(&mut table, reports)?;
    let p = out_dir.join("report.tsv");
    write_file(&p, &table)?;
    written.push(p);

    let mut qs: Vec<f64> = reports.iter().flat_map(|r| r.rows.iter().map(|row| row.q)).collect();
    qs.sort_by(|a, b| a.partial_cmp(b).expect("finite q"));
    qs.dedup();
    let mut impr = Vec::new();
    write_improvement_table(&mut impr, reports, &qs)?;
    let p = out_dir.join("improvements.tsv");
    write_file(&p, &impr)?;
    written.push(p);

    let mut products: Vec<&str> = reports.iter().map(|r| r.product_id.as_str()).collect();
    products.sort_unstable();
    products.dedup();
    for product in products {
        let group: Vec<EvalReport> = reports.iter().filter(|r| r.product_id == product).cloned().collect();
        for (metric, name) in [(Metric::F1, "f1"), (Metric::Auc, "auc")] {
            let svg = curves_svg(&group, metric, &format!("{product}: {} vs percent of context", name.to_uppercase()));
            let p = out_dir.join(format!("curves_{}_{name}.svg", file_stem(product)));
            write_file(&p, svg.as_bytes())?;
            written.push(p);
        }
    }
    for r in rankings {
        let p = out_dir.join(format!("long_tail_{}_{}.svg", file_stem(&r.product_id), r.criterion));
        write_file(&p, long_tail_svg(r).as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_formatting() {
        assert_eq!(format_improvement(improvement_pct(0.57, 0.634)), "+11.2%");
        assert_eq!(format_improvement(improvement_pct(0.535, 0.557)), "+4.11%");
        assert_eq!(format_improvement(improvement_pct(0.78, 0.832)), "+6.67%");
        assert_eq!(format_improvement(improvement_pct(0.757, 0.762)), "+0.661%");
        assert_eq!(format_improvement(-12.345), "-12.3%");
        assert_eq!(format_improvement(9.996), "+10.0%");
        assert_eq!(format_improvement(0.0), "+0.00%");
        assert_eq!(format_improvement(123.4), "+123%");
    }
}
