//! Deterministic SVG output: elbow curve, silhouette plot, signature bars,
//! and the cluster choropleth. Same input, same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use airshed_core::geometry::Region;
use airshed_core::model_selection::ElbowCurve;
use airshed_core::raster::Pollutant;
use airshed_core::signatures::SignatureReport;

use crate::error::PipelineError;

/// Fixed qualitative palette; semantic cluster ids map onto it cyclically.
pub const PALETTE: [&str; 6] =
    ["#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628"];

const NO_DATA_FILL: &str = "#d9d9d9";

pub fn cluster_color(label: i64) -> &'static str {
    PALETTE[(label.rem_euclid(PALETTE.len() as i64)) as usize]
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_value(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {} {}" font-family="sans-serif">"#,
        fmt2(width),
        fmt2(height)
    );
}

fn text(out: &mut String, x: f64, y: f64, size: u32, anchor: &str, content: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
        fmt2(x),
        fmt2(y),
        escape(content)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the labelled regions as an equirectangular choropleth with one
/// path per polygon part (holes as even-odd subpaths), a hatched fill for
/// noise (-1), light gray for unlabelled regions, and a legend.
pub fn render_choropleth(
    regions: &[Region],
    labels: &BTreeMap<String, i64>,
) -> Result<String, PipelineError> {
    for name in labels.keys() {
        if !regions.iter().any(|r| &r.name == name) {
            return Err(PipelineError::data(
                "render",
                format!("unknown region name {name:?} in labels"),
            ));
        }
    }

    let mut bbox = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for region in regions {
        let (x0, y0, x1, y1) = region.bounding_box();
        bbox.0 = bbox.0.min(x0);
        bbox.1 = bbox.1.min(y0);
        bbox.2 = bbox.2.max(x1);
        bbox.3 = bbox.3.max(y1);
    }
    if !bbox.0.is_finite() {
        bbox = (0.0, 0.0, 1.0, 1.0);
    }
    let span_lon = (bbox.2 - bbox.0).max(1e-9);
    let span_lat = (bbox.3 - bbox.1).max(1e-9);

    let map_height = 600.0;
    let margin = 20.0;
    let scale = map_height / span_lat;
    let map_width = (span_lon * scale).max(120.0);

    let mut present: Vec<i64> = labels.values().copied().collect();
    present.sort_unstable();
    present.dedup();
    let has_unlabelled = regions.iter().any(|r| !labels.contains_key(&r.name));
    let legend_rows = present.len() + usize::from(has_unlabelled);
    let legend_height = 26.0 * legend_rows as f64 + 10.0;
    let width = map_width + 2.0 * margin;
    let height = map_height + 2.0 * margin + legend_height;

    let project = |lon: f64, lat: f64| -> (f64, f64) {
        (margin + (lon - bbox.0) * scale, margin + (bbox.3 - lat) * scale)
    };

    let mut out = String::new();
    svg_open(&mut out, width, height);
    let _ = writeln!(
        out,
        r##"<defs><pattern id="noise-hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="6" height="6" fill="#bdbdbd"/><line x1="0" y1="0" x2="0" y2="6" stroke="#636363" stroke-width="2"/></pattern></defs>"##
    );

    for region in regions {
        let fill = match labels.get(&region.name) {
            Some(-1) => "url(#noise-hatch)".to_string(),
            Some(label) => cluster_color(*label).to_string(),
            None => NO_DATA_FILL.to_string(),
        };
        for part in &region.polygons {
            let mut d = String::new();
            for ring in std::iter::once(&part.outer).chain(&part.holes) {
                for (i, &(lon, lat)) in ring.iter().enumerate() {
                    let (x, y) = project(lon, lat);
                    let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { "L" }, fmt2(x), fmt2(y));
                }
                d.push('Z');
            }
            let _ = writeln!(
                out,
                r##"<path d="{d}" fill="{fill}" fill-rule="evenodd" stroke="#333333" stroke-width="0.6"><title>{}</title></path>"##,
                escape(&region.name)
            );
        }
    }

    let mut legend_y = map_height + 2.0 * margin;
    for label in &present {
        let (swatch, name) = if *label == -1 {
            ("url(#noise-hatch)".to_string(), "noise".to_string())
        } else {
            (cluster_color(*label).to_string(), format!("cluster {label}"))
        };
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="18" height="18" fill="{swatch}" stroke="#333333"/>"##,
            fmt2(margin),
            fmt2(legend_y)
        );
        text(&mut out, margin + 26.0, legend_y + 14.0, 14, "start", &name);
        legend_y += 26.0;
    }
    if has_unlabelled {
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="18" height="18" fill="{NO_DATA_FILL}" stroke="#333333"/>"##,
            fmt2(margin),
            fmt2(legend_y)
        );
        text(&mut out, margin + 26.0, legend_y + 14.0, 14, "start", "no data");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

struct ChartFrame {
    x0: f64,
    y0: f64,
    width: f64,
    height: f64,
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl ChartFrame {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.min_x) / (self.max_x - self.min_x).max(1e-12) * self.width
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.height
            - (v - self.min_y) / (self.max_y - self.min_y).max(1e-12) * self.height
    }

    fn axes(&self, out: &mut String) {
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333"/>"##,
            fmt2(self.x0),
            fmt2(self.y0),
            fmt2(self.width),
            fmt2(self.height)
        );
    }
}

/// Line chart of a metric across K, with a dashed marker at the selected K.
pub fn render_elbow_curve(curve: &ElbowCurve, title: &str) -> String {
    let frame = ChartFrame {
        x0: 60.0,
        y0: 40.0,
        width: 540.0,
        height: 320.0,
        min_x: *curve.ks.first().unwrap_or(&0) as f64,
        max_x: *curve.ks.last().unwrap_or(&1) as f64,
        min_y: curve.scores.iter().copied().fold(f64::INFINITY, f64::min).min(0.0),
        max_y: curve.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(1e-12),
    };
    let mut out = String::new();
    svg_open(&mut out, 660.0, 440.0);
    text(&mut out, 330.0, 24.0, 16, "middle", title);
    frame.axes(&mut out);

    for &k in &curve.ks {
        let x = frame.x(k as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#333333"/>"##,
            fmt2(x),
            fmt2(frame.y0 + frame.height),
            fmt2(x),
            fmt2(frame.y0 + frame.height + 5.0)
        );
        text(&mut out, x, frame.y0 + frame.height + 20.0, 12, "middle", &k.to_string());
    }
    for i in 0..=4 {
        let v = frame.min_y + (frame.max_y - frame.min_y) * i as f64 / 4.0;
        let y = frame.y(v);
        text(&mut out, frame.x0 - 8.0, y + 4.0, 11, "end", &fmt_value(v));
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#eeeeee"/>"##,
            fmt2(frame.x0),
            fmt2(y),
            fmt2(frame.x0 + frame.width),
            fmt2(y)
        );
    }

    let points: Vec<String> = curve
        .ks
        .iter()
        .zip(&curve.scores)
        .map(|(&k, &s)| format!("{},{}", fmt2(frame.x(k as f64)), fmt2(frame.y(s))))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"##,
        points.join(" "),
        PALETTE[1]
    );
    for (&k, &s) in curve.ks.iter().zip(&curve.scores) {
        let _ = writeln!(
            out,
            r##"<circle cx="{}" cy="{}" r="3" fill="{}"/>"##,
            fmt2(frame.x(k as f64)),
            fmt2(frame.y(s)),
            PALETTE[1]
        );
    }
    if let Some(elbow) = curve.elbow_k {
        let x = frame.x(elbow as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#000000" stroke-dasharray="6 4"/>"##,
            fmt2(x),
            fmt2(frame.y0),
            fmt2(x),
            fmt2(frame.y0 + frame.height)
        );
        text(&mut out, x + 4.0, frame.y0 + 14.0, 13, "start", &format!("K = {elbow}"));
    }
    text(&mut out, 330.0, 420.0, 13, "middle", "number of clusters K");
    out.push_str("</svg>\n");
    out
}

/// Per-cluster silhouette distributions: one horizontal bar per point, grouped
/// by semantic cluster, with a dashed line at the overall mean.
pub fn render_silhouette_plot(
    per_cluster: &[Vec<f64>],
    mean: f64,
    title: &str,
) -> String {
    let total_points: usize = per_cluster.iter().map(Vec::len).sum();
    let bar = 6.0;
    let gap = 14.0;
    let plot_height = (total_points as f64 * bar + per_cluster.len() as f64 * gap).max(60.0);
    let min_s = per_cluster.iter().flatten().copied().fold(0.0f64, f64::min);
    let frame = ChartFrame {
        x0: 60.0,
        y0: 40.0,
        width: 540.0,
        height: plot_height,
        min_x: min_s.min(-0.1),
        max_x: 1.0,
        min_y: 0.0,
        max_y: 1.0,
    };

    let mut out = String::new();
    svg_open(&mut out, 660.0, plot_height + 110.0);
    text(&mut out, 330.0, 24.0, 16, "middle", title);
    frame.axes(&mut out);

    let zero_x = frame.x(0.0);
    let mut y = frame.y0;
    for (cluster, values) in per_cluster.iter().enumerate() {
        let color = cluster_color(cluster as i64);
        // Widest silhouettes first, matching the usual knife plot.
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let label_y = y + (sorted.len() as f64 * bar / 2.0).max(8.0);
        text(&mut out, frame.x0 - 8.0, label_y, 12, "end", &format!("{cluster}"));
        for s in sorted {
            let x = frame.x(s);
            let (bar_x, bar_w) = if x >= zero_x { (zero_x, x - zero_x) } else { (x, zero_x - x) };
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"##,
                fmt2(bar_x),
                fmt2(y),
                fmt2(bar_w.max(0.5)),
                fmt2(bar - 1.0)
            );
            y += bar;
        }
        y += gap;
    }

    let mean_x = frame.x(mean);
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#e41a1c" stroke-dasharray="5 4"/>"##,
        fmt2(mean_x),
        fmt2(frame.y0),
        fmt2(mean_x),
        fmt2(frame.y0 + frame.height)
    );
    text(
        &mut out,
        mean_x,
        frame.y0 + frame.height + 20.0,
        12,
        "middle",
        &format!("mean {}", fmt_value(mean)),
    );
    for v in [frame.min_x, 0.0, 0.5, 1.0] {
        let x = frame.x(v);
        text(&mut out, x, frame.y0 + frame.height + 38.0, 11, "middle", &fmt_value(v));
    }
    text(&mut out, 330.0, plot_height + 95.0, 13, "middle", "silhouette coefficient");
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: per semantic cluster, one bar per pollutant in standardized
/// units around a zero baseline.
pub fn render_signature_bars(report: &SignatureReport, title: &str) -> String {
    let k = report.signatures.len();
    let d = report.columns.len();
    let max_abs = report
        .signatures
        .iter()
        .flatten()
        .fold(0.5f64, |acc, v| acc.max(v.abs()));
    let frame = ChartFrame {
        x0: 60.0,
        y0: 40.0,
        width: 560.0,
        height: 320.0,
        min_x: 0.0,
        max_x: 1.0,
        min_y: -max_abs * 1.1,
        max_y: max_abs * 1.1,
    };

    let mut out = String::new();
    svg_open(&mut out, 680.0, 470.0);
    text(&mut out, 340.0, 24.0, 16, "middle", title);
    frame.axes(&mut out);
    let zero_y = frame.y(0.0);
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999999"/>"##,
        fmt2(frame.x0),
        fmt2(zero_y),
        fmt2(frame.x0 + frame.width),
        fmt2(zero_y)
    );

    let group_width = frame.width / k.max(1) as f64;
    let bar_width = (group_width * 0.8) / d.max(1) as f64;
    for (cluster, signature) in report.signatures.iter().enumerate() {
        let group_x = frame.x0 + cluster as f64 * group_width + group_width * 0.1;
        for (i, value) in signature.iter().enumerate() {
            let x = group_x + i as f64 * bar_width;
            let y_value = frame.y(*value);
            let (bar_y, bar_h) =
                if *value >= 0.0 { (y_value, zero_y - y_value) } else { (zero_y, y_value - zero_y) };
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"##,
                fmt2(x),
                fmt2(bar_y),
                fmt2(bar_width.max(1.0) - 1.0),
                fmt2(bar_h.max(0.0)),
                PALETTE[i % PALETTE.len()]
            );
        }
        text(
            &mut out,
            group_x + group_width * 0.4,
            frame.y0 + frame.height + 18.0,
            12,
            "middle",
            &format!("cluster {cluster}"),
        );
    }
    for i in 0..=4 {
        let v = frame.min_y + (frame.max_y - frame.min_y) * i as f64 / 4.0;
        text(&mut out, frame.x0 - 8.0, frame.y(v) + 4.0, 11, "end", &fmt_value(v));
    }

    let mut legend_x = frame.x0;
    let legend_y = frame.y0 + frame.height + 40.0;
    for (i, pollutant) in report.columns.iter().enumerate() {
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="14" height="14" fill="{}"/>"##,
            fmt2(legend_x),
            fmt2(legend_y),
            PALETTE[i % PALETTE.len()]
        );
        text(&mut out, legend_x + 20.0, legend_y + 12.0, 12, "start", pollutant.name());
        legend_x += 30.0 + 9.0 * pollutant.name().len() as f64;
    }
    text(&mut out, 340.0, legend_y + 45.0, 13, "middle", "mean standardized concentration");
    out.push_str("</svg>\n");
    out
}

/// Placeholder figure when a metric could not be computed.
pub fn render_placeholder(message: &str) -> String {
    let mut out = String::new();
    svg_open(&mut out, 660.0, 120.0);
    text(&mut out, 330.0, 66.0, 14, "middle", message);
    out.push_str("</svg>\n");
    out
}

/// Pollutant list helper for chart labels.
pub fn pollutant_names(pollutants: &[Pollutant]) -> Vec<String> {
    pollutants.iter().map(|p| p.name().to_string()).collect()
}
