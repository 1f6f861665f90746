use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::metrics::{variance_estimator_check, variance_slope, MetricsCell, MetricsTable};
use super::StudyResult;
use crate::error::Result;

const PALETTE: [&str; 6] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
];

/// Minimal line-plot writer producing standalone SVG.
#[derive(Debug, Clone)]
pub struct SvgPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

impl SvgPlot {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        SvgPlot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            series: Vec::new(),
        }
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn series(mut self, name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        self.series.push((name.into(), points));
        self
    }

    pub fn render(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
        let tx = |x: f64| if self.log_x { x.ln() } else { x };
        let pts = || {
            self.series
                .iter()
                .flat_map(|(_, p)| p.iter().copied())
                .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
        };
        let bounds = |v: Vec<f64>| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            match (lo.is_finite(), hi > lo) {
                (false, _) => (0.0, 1.0),
                (true, false) => (lo - 0.5, lo + 0.5),
                (true, true) => {
                    let pad = 0.05 * (hi - lo);
                    (lo - pad, hi + pad)
                }
            }
        };
        let (x0, x1) = bounds(pts().map(|(x, _)| tx(x)).collect());
        let (y0, y1) = bounds(pts().map(|(_, y)| y).collect());
        let pw = w - left - right;
        let ph = h - top - bottom;
        let px = |x: f64| left + (tx(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            left + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let yv = y0 + f * (y1 - y0);
            let yy = py(yv);
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{yy:.1}" x2="{}" y2="{yy:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                left + pw,
                left - 6.0,
                yy + 4.0,
                tick(yv)
            );
        }
        let mut xticks: Vec<f64> = pts().map(|(x, _)| x).collect();
        xticks.sort_by(|a, b| a.total_cmp(b));
        xticks.dedup();
        for x in xticks.iter().take(12) {
            let xx = px(*x);
            let _ = writeln!(
                s,
                r#"<text x="{xx:.1}" y="{}" text-anchor="middle">{}</text>"#,
                top + ph + 16.0,
                tick(*x)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            h - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, (name, p)) in self.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = p
                .iter()
                .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for pt in &path {
                let (cx, cy) = pt.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{colour}"/>"#);
            }
            let ly = top + 14.0 + 18.0 * k as f64;
            let lx = left + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn metric_csv(m: &MetricsTable, f: fn(&MetricsCell) -> f64) -> String {
    let mut s = String::from("n");
    for v in &m.variants {
        let _ = write!(s, ",{v}");
    }
    s.push('\n');
    for &n in &m.sizes {
        let _ = write!(s, "{n}");
        for &v in &m.variants {
            let _ = write!(s, ",{}", m.get(v, n).map(f).unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    s
}

fn metric_plot(m: &MetricsTable, title: &str, f: fn(&MetricsCell) -> f64) -> SvgPlot {
    m.variants
        .iter()
        .fold(SvgPlot::new(title, "N", title).log_x(), |p, &v| {
            let pts = m
                .sizes
                .iter()
                .filter_map(|&n| m.get(v, n).map(|c| (n as f64, f(c))))
                .collect();
            p.series(v.as_str(), pts)
        })
}

/// Writes metric CSVs, per-network metrics, the variance-estimator check, a
/// JSON manifest and SVG plots into `dir`. Returns the files written.
pub fn write_outputs(result: &StudyResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let m = &result.metrics;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };

    let metrics: [(&str, fn(&MetricsCell) -> f64); 5] = [
        ("rmse", |c| c.rmse),
        ("bias", |c| c.bias),
        ("log_variance", |c| c.log_variance),
        ("coverage", |c| c.coverage),
        ("mean_max_degree", |c| c.mean_max_degree),
    ];
    for (name, f) in metrics {
        put(&format!("{name}.csv"), metric_csv(m, f))?;
        if name != "mean_max_degree" {
            put(&format!("{name}.svg"), metric_plot(m, name, f).render())?;
        }
    }

    let mut pg = String::from(
        "variant,n,graph,tau,bias,variance,rmse,coverage,replications,failures,max_degree\n",
    );
    for c in &m.cells {
        for g in &c.per_graph {
            let _ = writeln!(
                pg,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.variant,
                c.n,
                g.graph,
                g.tau,
                g.bias,
                g.variance,
                g.rmse,
                g.coverage,
                g.replications,
                g.failures,
                g.max_degree
            );
        }
    }
    put("per_graph.csv", pg)?;

    let mut vc = String::from("variant,n,empirical_variance,mean_sigma2_over_n,scaled_rmse\n");
    let mut slopes = serde_json::Map::new();
    for &v in &m.variants {
        for r in variance_estimator_check(result, v)? {
            let _ = writeln!(
                vc,
                "{v},{},{},{},{}",
                r.n, r.empirical_variance, r.mean_sigma2_over_n, r.scaled_rmse
            );
        }
        let slope = if m.sizes.len() >= 2 {
            variance_slope(m, v).ok()
        } else {
            None
        };
        slopes.insert(v.to_string(), json!(slope));
    }
    put("variance_check.csv", vc)?;

    let failures: serde_json::Map<String, serde_json::Value> = m
        .cells
        .iter()
        .map(|c| (format!("{}@{}", c.variant, c.n), json!(c.failures)))
        .collect();
    let manifest = json!({
        "config": result.config,
        "outcome_noise": result.config.sem.outcome_noise.to_string(),
        "total_failures": result.total_failures(),
        "failures": failures,
        "variance_slopes": slopes,
        "oracle_checks": result.oracle_checks,
        "environment": {
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "threads": rayon::current_num_threads(),
        },
    });
    put("manifest.json", serde_json::to_string_pretty(&manifest)?)?;
    Ok(written)
}
