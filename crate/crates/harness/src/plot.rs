//! Line charts of aggregate CSVs: one polyline per series, a shaded ±SE band
//! behind it, legend in header order. Output depends only on the input
//! bytes.

use std::fmt::Write as _;

use crate::aggregate::AGGREGATE_SCHEMA;
use crate::error::{HarnessError, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl PlotSpec {
    pub fn titled(title: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            y_label: y_label.to_string(),
            width: 720,
            height: 440,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSeries {
    pub label: String,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAggregate {
    pub x_name: String,
    pub x: Vec<f64>,
    pub series: Vec<ParsedSeries>,
}

/// Reads an aggregate CSV. A column `L` followed by `L_se` is a series with
/// a band; any other column is a series without one.
pub fn parse_aggregate(text: &str) -> Result<ParsedAggregate> {
    let mut schema = None;
    let body: String = text
        .lines()
        .filter(|l| {
            if let Some(meta) = l.strip_prefix("# ") {
                if let Some(s) = meta.strip_prefix("schema=") {
                    schema = Some(s.trim().to_string());
                }
                false
            } else {
                !l.trim().is_empty()
            }
        })
        .map(|l| format!("{l}\n"))
        .collect();
    if let Some(s) = schema.filter(|s| s != AGGREGATE_SCHEMA) {
        return Err(HarnessError::Schema(format!("cannot plot a {s} file")));
    }
    if body.is_empty() {
        return Err(HarnessError::Empty("plot"));
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(HarnessError::Empty("plot"));
    }
    // (label, mean column, se column)
    let mut cols = Vec::new();
    let mut i = 1;
    while i < header.len() {
        let se = (i + 1 < header.len() && header[i + 1] == format!("{}_se", header[i])).then_some(i + 1);
        cols.push((header[i].clone(), i, se));
        i += if se.is_some() { 2 } else { 1 };
    }
    let mut x = Vec::new();
    let mut series: Vec<ParsedSeries> = cols
        .iter()
        .map(|(l, _, _)| ParsedSeries {
            label: l.clone(),
            mean: Vec::new(),
            se: Vec::new(),
        })
        .collect();
    let num = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| HarnessError::Schema(format!("`{v}` is not a number")))
    };
    for rec in r.records() {
        let rec = rec?;
        x.push(num(&rec[0])?);
        for (s, (_, m, se)) in series.iter_mut().zip(&cols) {
            s.mean.push(num(&rec[*m])?);
            s.se.push(match se {
                Some(j) => num(&rec[*j])?,
                None => 0.0,
            });
        }
    }
    if x.is_empty() {
        return Err(HarnessError::Empty("plot"));
    }
    Ok(ParsedAggregate {
        x_name: header[0].clone(),
        x,
        series,
    })
}

fn fmt_num(v: f64) -> String {
    let s = if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    };
    if s.contains('e') || !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 1.0, hi + 1.0);
    }
    (lo, hi)
}

pub fn render_plot(csv_text: &str, spec: &PlotSpec) -> Result<String> {
    let data = parse_aggregate(csv_text)?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let (x0, x1) = range(data.x.iter().copied());
    let (y0, y1) = {
        let (lo, hi) = range(data.series.iter().flat_map(|s| {
            s.mean
                .iter()
                .zip(&s.se)
                .flat_map(|(&m, &e)| [m - e, m + e])
                .collect::<Vec<_>>()
        }));
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    };
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * ph;
    let pt = |x: f64, y: f64| format!("{:.2},{:.2}", px(x), py(y));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(&spec.title)
    );
    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<path d="M{l:.2},{t:.2} V{b:.2} H{r:.2}" fill="none" stroke="black"/>"#,
        l = left,
        t = top,
        b = top + ph,
        r = left + pw
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(xv),
            top + ph + 18.0,
            fmt_num(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(yv) + 4.0,
            fmt_num(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(&data.x_name)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(&spec.y_label)
    );
    for (i, s) in data.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = data
            .x
            .iter()
            .zip(&s.mean)
            .zip(&s.se)
            .filter(|((x, m), e)| x.is_finite() && m.is_finite() && e.is_finite())
            .map(|((&x, &m), &e)| (x, m, e))
            .collect();
        if pts.iter().any(|p| p.2 > 0.0) {
            let upper = pts.iter().map(|&(x, m, e)| pt(x, m + e));
            let lower = pts.iter().rev().map(|&(x, m, e)| pt(x, m - e));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
        }
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| pt(x, m)).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "# schema=sdq-aggregate/1\nstep,A,A_se,B,B_se\n0,1,0.1,2,0\n10,0.5,0.1,1.5,0\n20,0.25,0,1,0\n";

    #[test]
    fn one_polyline_per_series() {
        let svg = render_plot(TWO, &PlotSpec::titled("t", "y")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        // only A has a non-zero band
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn output_is_deterministic() {
        let spec = PlotSpec::titled("t", "y");
        assert_eq!(render_plot(TWO, &spec).unwrap(), render_plot(TWO, &spec).unwrap());
    }

    #[test]
    fn legend_follows_header_order() {
        let text = "step,Zed,Zed_se,Alpha,Alpha_se\n0,1,0,2,0\n1,1,0,2,0\n";
        let svg = render_plot(text, &PlotSpec::titled("t", "y")).unwrap();
        assert!(svg.find(">Zed<").unwrap() < svg.find(">Alpha<").unwrap());
        let parsed = parse_aggregate(text).unwrap();
        assert_eq!(parsed.series.len(), 2);
    }

    #[test]
    fn empty_input_is_an_error() {
        let spec = PlotSpec::titled("t", "y");
        assert!(render_plot("", &spec).is_err());
        assert!(render_plot("# schema=sdq-aggregate/1\nstep,A,A_se\n", &spec).is_err());
        assert!(render_plot("# schema=sdq-run/1\nalgorithm,step\nQ,1\n", &spec).is_err());
    }

    #[test]
    fn labels_are_escaped_and_numbers_compact() {
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(-1e6), "-1.00e6");
        let svg = render_plot("k,a<b\n0,1\n1,2\n", &PlotSpec::titled("x & y", "v")).unwrap();
        assert!(svg.contains("a&lt;b") && svg.contains("x &amp; y"));
    }
}
