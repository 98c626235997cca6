//! Minimal SVG charts for reports: bar charts and 2-D scatter plots.

use std::fmt::Write;

use crate::harness::{ComparisonEntry, EvaluationReport, StabilityReport};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

const PALETTE: [&str; 8] = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text class="title" x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        W / 2.0,
        esc(title)
    );
}

/// Plot-area plumbing shared by both chart kinds.
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64) -> Self {
        if hi > lo {
            Axis { lo, hi }
        } else {
            Axis { lo: lo - 1.0, hi: lo + 1.0 }
        }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (self.hi - v) / (self.hi - self.lo) * (H - TOP - BOTTOM)
    }

    fn ticks(&self, out: &mut String) {
        for i in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
            let y = self.y(v);
            let _ = write!(
                out,
                r##"<line x1="{LEFT}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                W - RIGHT,
                LEFT - 6.0,
                y + 4.0,
                fmt_num(v)
            );
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Vertical bar chart; `None` values are labelled "no valid runs" instead of drawn.
///
/// Every drawn bar is a `rect` with class `bar` and a `data-value` attribute.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, Option<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let vals: Vec<f64> = bars.iter().filter_map(|b| b.1).collect();
    if vals.is_empty() {
        let _ = write!(
            out,
            r#"<text class="empty" x="{}" y="{}" text-anchor="middle" font-size="14">no valid runs</text></svg>"#,
            W / 2.0,
            H / 2.0
        );
        return out;
    }
    let lo = vals.iter().copied().fold(0.0, f64::min);
    let hi = vals.iter().copied().fold(0.0, f64::max);
    let axis = Axis::new(lo, hi);
    axis.ticks(&mut out);
    let _ = write!(
        out,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    let zero = axis.y(0.0);
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let cx = LEFT + slot * (i as f64 + 0.5);
        match v {
            Some(v) => {
                let y = axis.y(*v);
                let _ = write!(
                    out,
                    r#"<rect class="bar" data-label="{}" data-value="{v}" x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    esc(label),
                    y.min(zero),
                    slot * 0.7,
                    (y - zero).abs(),
                    PALETTE[i % PALETTE.len()]
                );
                let _ = write!(
                    out,
                    r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                    y.min(zero) - 4.0,
                    fmt_num(*v)
                );
            }
            None => {
                let _ = write!(
                    out,
                    r#"<text class="missing" x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">no valid runs</text>"#,
                    zero - 4.0
                );
            }
        }
        let _ = write!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 18.0,
            esc(label)
        );
    }
    let _ = write!(
        out,
        r##"<line x1="{LEFT}" x2="{}" y1="{zero:.2}" y2="{zero:.2}" stroke="#333333"/></svg>"##,
        W - RIGHT
    );
    out
}

/// Scatter plot of 2-D points coloured by label.
pub fn scatter(title: &str, points: &[(f64, f64)], labels: &[usize]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let finite: Vec<&(f64, f64)> = points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    if finite.is_empty() {
        let _ = write!(
            out,
            r#"<text class="empty" x="{}" y="{}" text-anchor="middle">no points</text></svg>"#,
            W / 2.0,
            H / 2.0
        );
        return out;
    }
    let (xlo, xhi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (ylo, yhi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let xa = Axis::new(xlo, xhi);
    let ya = Axis::new(ylo, yhi);
    ya.ticks(&mut out);
    let px = |x: f64| LEFT + (x - xa.lo) / (xa.hi - xa.lo) * (W - LEFT - RIGHT);
    for (i, p) in points.iter().enumerate() {
        if !(p.0.is_finite() && p.1.is_finite()) {
            continue;
        }
        let l = labels.get(i).copied().unwrap_or(0);
        let _ = write!(
            out,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            px(p.0),
            ya.y(p.1),
            PALETTE[l % PALETTE.len()]
        );
    }
    out.push_str("</svg>");
    out
}

/// One SC chart and one DBI chart per component class.
pub fn component_charts(report: &EvaluationReport) -> Vec<(String, String)> {
    let agg = crate::harness::aggregate_by_component(report).ok();
    let classes = [
        ("arch", crate::networks::Architecture::ALL.iter().map(|a| a.tag()).collect::<Vec<_>>()),
        ("dimred", crate::dimred::DimRedKind::ALL.iter().map(|d| d.tag()).collect()),
        ("pretext", crate::harness::Pretext::ALL.iter().map(|p| p.tag()).collect()),
        ("cluster_loss", crate::harness::ClusterLoss::ALL.iter().map(|c| c.tag()).collect()),
    ];
    let mut charts = Vec::new();
    for (class, options) in classes {
        for metric in ["sc", "dbi"] {
            let bars: Vec<(String, Option<f64>)> = options
                .iter()
                .map(|opt| {
                    let v = agg
                        .as_ref()
                        .and_then(|a| a.components.get(class))
                        .and_then(|m| m.get(*opt))
                        .and_then(|s| s.as_ref())
                        .map(|s| if metric == "sc" { s.sc } else { s.dbi });
                    (opt.to_string(), v)
                })
                .collect();
            let title = format!("Mean {} by {}", metric.to_uppercase(), class);
            charts.push((format!("{class}_{metric}.svg"), bar_chart(&title, &metric.to_uppercase(), &bars)));
        }
    }
    charts
}

pub fn invalid_rate_chart(report: &EvaluationReport) -> String {
    let bars: Vec<(String, Option<f64>)> = report
        .invalid_rates()
        .into_iter()
        .map(|(k, r)| (k, (r.total > 0).then_some(r.rate)))
        .collect();
    bar_chart("Invalid clusterings by clustering loss", "invalid rate", &bars)
}

pub fn stability_chart(report: &StabilityReport) -> String {
    let bars: Vec<(String, Option<f64>)> = report
        .rates
        .iter()
        .map(|r| (format!("ratio {}", r.ratio), Some(r.rate)))
        .collect();
    bar_chart("Invalid clusterings by learning-rate ratio", "invalid rate", &bars)
}

/// SC and DBI bars for a comparison of combinations.
pub fn comparison_charts(entries: &[ComparisonEntry]) -> (String, String) {
    let sc: Vec<(String, Option<f64>)> = entries.iter().map(|e| (e.combo.to_string(), e.mean_sc)).collect();
    let dbi: Vec<(String, Option<f64>)> = entries.iter().map(|e| (e.combo.to_string(), e.mean_dbi)).collect();
    (
        bar_chart("FTHC against baselines: mean SC", "SC", &sc),
        bar_chart("FTHC against baselines: mean DBI", "DBI", &dbi),
    )
}
