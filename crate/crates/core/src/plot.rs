//! Static SVG scatter of per-district candidate-1 percentages: ballot share
//! on the x axis, mail share on the y axis.
//!
//! Points are `<circle>` elements with class `point green` or `point red`
//! according to the fitting partition; districts whose status is dubious also
//! carry a `dubious` class and a hollow marker. The line drawn is an
//! unweighted least-squares fit in percentage space, for display only — it is
//! not the count-space model used for inference, and the legend says so.

use std::fmt::Write as _;

use crate::election_data::{partition_variant, DistrictRecord, ElectionDataset, Status, Variant};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 60.0;
const FRAME: f64 = WIDTH - 2.0 * MARGIN;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub variant: Variant,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            title: "Mail and ballot vote percentages".to_string(),
            variant: Variant::RedOnly,
        }
    }
}

/// A point in percentage coordinates, both in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub district_id: String,
    pub ballot_pct: f64,
    pub mail_pct: f64,
    pub red: bool,
    pub dubious: bool,
}

/// Districts with no ballot or no mail votes have no defined percentage and
/// are left out.
pub fn plot_points(ds: &ElectionDataset, variant: Variant) -> Vec<PlotPoint> {
    let part = partition_variant(ds, variant);
    let point = |d: &DistrictRecord, red: bool| {
        Some(PlotPoint {
            district_id: d.district_id().to_string(),
            ballot_pct: 100.0 * d.ballot_share_c1()?,
            mail_pct: 100.0 * d.mail_share_c1()?,
            red,
            dubious: d.status() == Status::Dubious,
        })
    };
    part.green
        .iter()
        .filter_map(|d| point(d, false))
        .chain(part.red.iter().filter_map(|d| point(d, true)))
        .collect()
}

/// Unweighted least-squares line `y = a + b x` through the green points.
pub fn display_fit(points: &[PlotPoint]) -> Option<(f64, f64)> {
    let green: Vec<&PlotPoint> = points.iter().filter(|p| !p.red).collect();
    let n = green.len() as f64;
    if green.len() < 2 {
        return None;
    }
    let mx = green.iter().map(|p| p.ballot_pct).sum::<f64>() / n;
    let my = green.iter().map(|p| p.mail_pct).sum::<f64>() / n;
    let sxx: f64 = green.iter().map(|p| (p.ballot_pct - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = green
        .iter()
        .map(|p| (p.ballot_pct - mx) * (p.mail_pct - my))
        .sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn sx(pct: f64) -> f64 {
    MARGIN + FRAME * pct / 100.0
}

fn sy(pct: f64) -> f64 {
    HEIGHT - MARGIN - FRAME * pct / 100.0
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Clips `y = a + b x` to the `[0, 100]²` frame.
fn clip_line(a: f64, b: f64) -> Option<((f64, f64), (f64, f64))> {
    let mut pts = Vec::new();
    for x in [0.0, 100.0] {
        let y = a + b * x;
        if (0.0..=100.0).contains(&y) {
            pts.push((x, y));
        }
    }
    if b != 0.0 {
        for y in [0.0, 100.0] {
            let x = (y - a) / b;
            if (0.0..=100.0).contains(&x) {
                pts.push((x, y));
            }
        }
    }
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    pts.dedup();
    match (pts.first(), pts.last()) {
        (Some(&p), Some(&q)) if p != q => Some((p, q)),
        _ => None,
    }
}

pub fn render_svg(ds: &ElectionDataset, opts: &PlotOptions) -> String {
    let points = plot_points(ds, opts.variant);
    let any_dubious = points.iter().any(|p| p.dubious);
    let mut s = String::new();
    let w = &mut s;

    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(w, "<title>{}</title>", escape(&opts.title));
    let _ = writeln!(w, "<style>");
    let _ = writeln!(w, ".point {{ stroke-width: 1; }}");
    let _ = writeln!(w, ".green {{ fill: #2e8b57; stroke: #1d5c39; }}");
    let _ = writeln!(w, ".red {{ fill: #d62728; stroke: #8b1a1a; }}");
    if any_dubious {
        let _ = writeln!(w, ".dubious {{ fill-opacity: 0.15; stroke-width: 2; }}");
    }
    let _ = writeln!(
        w,
        ".fit {{ stroke: #333; stroke-dasharray: 6 4; fill: none; }}"
    );
    let _ = writeln!(w, ".axis {{ stroke: #000; fill: none; }}");
    let _ = writeln!(w, "text {{ font-family: sans-serif; font-size: 12px; }}");
    let _ = writeln!(w, "</style>");

    // frame and ticks
    let _ = writeln!(
        w,
        r#"<rect class="axis" x="{MARGIN}" y="{MARGIN}" width="{FRAME}" height="{FRAME}"/>"#
    );
    for tick in (0..=100).step_by(20) {
        let t = tick as f64;
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{tick}</text>"#,
            sx(t),
            HEIGHT - MARGIN + 18.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"#,
            MARGIN - 8.0,
            sy(t) + 4.0
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">ballot votes for candidate 1 (%)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        w,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">mail votes for candidate 1 (%)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="30" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&opts.title)
    );

    if let Some(((x0, y0), (x1, y1))) = display_fit(&points).and_then(|(a, b)| clip_line(a, b)) {
        let _ = writeln!(
            w,
            r#"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"><title>display fit</title></line>"#,
            sx(x0),
            sy(y0),
            sx(x1),
            sy(y1)
        );
    }

    for p in &points {
        let colour = if p.red { "red" } else { "green" };
        let extra = if p.dubious { " dubious" } else { "" };
        let _ = writeln!(
            w,
            r#"<circle class="point {colour}{extra}" cx="{:.2}" cy="{:.2}" r="4"><title>{}</title></circle>"#,
            sx(p.ballot_pct),
            sy(p.mail_pct),
            escape(&p.district_id)
        );
    }

    // legend
    let lx = MARGIN + 12.0;
    let mut ly = MARGIN + 16.0;
    let mut entry = |w: &mut String, marker: &str, label: &str| {
        let _ = writeln!(
            w,
            "{}",
            marker
                .replace("{x}", &format!("{lx:.1}"))
                .replace("{y}", &format!("{ly:.1}"))
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}">{label}</text>"#,
            lx + 12.0,
            ly + 4.0
        );
        ly += 18.0;
    };
    let _ = writeln!(w, r#"<g class="legend">"#);
    entry(
        w,
        r#"<rect class="green" x="{x}" y="{y}" width="8" height="8" transform="translate(-4 -4)"/>"#,
        "accepted districts",
    );
    entry(
        w,
        r#"<rect class="red" x="{x}" y="{y}" width="8" height="8" transform="translate(-4 -4)"/>"#,
        "held-out districts",
    );
    if any_dubious {
        entry(
            w,
            r#"<rect class="red dubious" x="{x}" y="{y}" width="8" height="8" transform="translate(-4 -4)"/>"#,
            "dubious districts",
        );
    }
    entry(
        w,
        r#"<path class="fit" d="M {x} {y} h 10" transform="translate(-5 0)"/>"#,
        "display fit",
    );
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    s
}
