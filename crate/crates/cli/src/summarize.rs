//! Cross-run comparison of final-particle energies.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::bail;
use tsmc_core::stats::{median, Quantiles};

use crate::artifacts::{read_energies, read_summary};
use crate::config::{EnvId, Method};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub dir: PathBuf,
    pub name: String,
    pub method: Method,
    pub seed: u64,
    /// Quantiles of the final-level energies, read from `energies.csv`.
    pub quantiles: Quantiles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: Method,
    pub runs: usize,
    /// Median over runs of each run's best final energy.
    pub median_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub env: EnvId,
    pub runs: Vec<RunRow>,
    pub methods: Vec<MethodRow>,
}

/// Reads each run directory and compares runs of one environment.
pub fn summarize<P: AsRef<Path>>(dirs: &[P]) -> anyhow::Result<Comparison> {
    if dirs.is_empty() {
        bail!("no run directories given");
    }
    let mut env: Option<(EnvId, PathBuf)> = None;
    let mut runs = Vec::new();
    for dir in dirs {
        let dir = dir.as_ref();
        let summary = read_summary(dir)?;
        match &env {
            None => env = Some((summary.env, dir.to_path_buf())),
            Some((e, first)) if *e != summary.env => bail!(
                "runs do not share an environment: {} is `{}` but {} is `{}`; energies of different problems are not comparable",
                first.display(),
                e,
                dir.display(),
                summary.env
            ),
            Some(_) => {}
        }
        let energies = read_energies(&dir.join("energies.csv"))?;
        let Some(last) = energies.last().filter(|l| !l.is_empty()) else {
            bail!("{}: energies.csv has no rows", dir.display());
        };
        runs.push(RunRow {
            dir: dir.to_path_buf(),
            name: summary.name,
            method: summary.method,
            seed: summary.seed,
            quantiles: Quantiles::of(last),
        });
    }
    let mut order: Vec<Method> = Vec::new();
    for r in &runs {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
    }
    let methods = order
        .into_iter()
        .map(|method| {
            let best: Vec<f64> = runs.iter().filter(|r| r.method == method).map(|r| r.quantiles.min).collect();
            MethodRow {
                method,
                runs: best.len(),
                median_best: median(&best),
            }
        })
        .collect();
    Ok(Comparison {
        env: env.expect("at least one run").0,
        runs,
        methods,
    })
}

impl Comparison {
    /// Per-run quantile rows followed by per-method medians, as CSV blocks.
    pub fn to_table(&self) -> String {
        let mut out = format!("# env: {}\nrun,method,seed,min,q25,median,q75,max\n", self.env);
        for r in &self.runs {
            let q = &r.quantiles;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.dir.display(),
                r.method,
                r.seed,
                q.min,
                q.q25,
                q.median,
                q.q75,
                q.max
            )
            .unwrap();
        }
        out.push_str("\nmethod,runs,median_best\n");
        for m in &self.methods {
            writeln!(out, "{},{},{}", m.method, m.runs, m.median_best).unwrap();
        }
        out
    }

    /// One box per run: whiskers at min and max, box from q25 to q75.
    pub fn to_svg(&self) -> String {
        let boxes: Vec<(String, Quantiles)> = self
            .runs
            .iter()
            .map(|r| (format!("{} s{}", r.method, r.seed), r.quantiles))
            .collect();
        boxplot_svg(&format!("final-particle energies ({})", self.env), &boxes)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal static SVG boxplot. Non-finite statistics are clamped to the axis.
pub fn boxplot_svg(title: &str, boxes: &[(String, Quantiles)]) -> String {
    const SLOT: f64 = 60.0;
    const LEFT: f64 = 70.0;
    const TOP: f64 = 40.0;
    const PLOT_H: f64 = 300.0;
    let width = LEFT + SLOT * boxes.len().max(1) as f64 + 20.0;
    let height = TOP + PLOT_H + 80.0;
    let finite: Vec<f64> = boxes
        .iter()
        .flat_map(|(_, q)| [q.min, q.max, q.q25, q.q75, q.median])
        .filter(|v| v.is_finite())
        .collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let y = |v: f64| -> f64 {
        let v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        TOP + PLOT_H * (hi - v) / (hi - lo)
    };
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, width / 2.0, escape(title)).unwrap();
    writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + PLOT_H).unwrap();
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        writeln!(s, r#"<line x1="{}" y1="{yy:.2}" x2="{LEFT}" y2="{yy:.2}" stroke="black"/>"#, LEFT - 4.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.4e}</text>"#, LEFT - 6.0, yy + 4.0).unwrap();
    }
    for (i, (label, q)) in boxes.iter().enumerate() {
        let cx = LEFT + SLOT * (i as f64 + 0.5);
        let (x0, x1) = (cx - SLOT * 0.3, cx + SLOT * 0.3);
        writeln!(s, r#"<g class="box">"#).unwrap();
        writeln!(s, r#"<line x1="{cx}" y1="{:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#, y(q.max), y(q.q75)).unwrap();
        writeln!(s, r#"<line x1="{cx}" y1="{:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#, y(q.q25), y(q.min)).unwrap();
        for v in [q.min, q.max] {
            writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, cx - 8.0, y(v), cx + 8.0, y(v)).unwrap();
        }
        writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            y(q.q75),
            x1 - x0,
            (y(q.q25) - y(q.q75)).max(0.5)
        )
        .unwrap();
        writeln!(s, r#"<line x1="{x0:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#, y(q.median), y(q.median)).unwrap();
        writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="end" transform="rotate(-45 {cx} {})">{}</text>"#,
            TOP + PLOT_H + 14.0,
            TOP + PLOT_H + 14.0,
            escape(label)
        )
        .unwrap();
        writeln!(s, "</g>").unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_group_per_box() {
        let q = Quantiles::of(&[1.0, 2.0, 3.0]);
        let svg = boxplot_svg("t", &[("a".into(), q), ("b<".into(), q)]);
        assert_eq!(svg.matches(r#"<g class="box">"#).count(), 2);
        assert!(svg.contains("b&lt;"));
        let svg = boxplot_svg("t", &[("inf".into(), Quantiles::of(&[f64::INFINITY]))]);
        assert!(!svg.contains("NaN") && !svg.contains("inf\""));
    }
}
