//! Static SVG charts: the embedding scatter with centroid overlay and the
//! truth/predicted angle traces with an optional subroutine-id panel.
//! Coordinates are written with two decimals so reruns emit identical bytes.

use crate::embed::{EmbeddedPoint, SignLabel};
use crate::nn::{PredictionRecord, SubroutineId};
use crate::error::{Error, Result};

pub const TRUTH_COLOR: &str = "#1f77b4";
pub const PREDICTED_COLOR: &str = "#ff7f0e";
pub const DEFAULT_CENTROID_COLOR: &str = "red";

const WIDTH: f64 = 880.0;
const MARGIN: f64 = 50.0;

/// Maps data space onto a pixel rectangle, padding degenerate ranges so a
/// constant series still lands mid-axis.
struct Scale {
    lo: f64,
    span: f64,
    pix_lo: f64,
    pix_span: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, pix_lo: f64, pix_hi: f64) -> Self {
        let (lo, hi) = if lo == hi { (lo - 1.0, hi + 1.0) } else { (lo, hi) };
        Self {
            lo,
            span: hi - lo,
            pix_lo,
            pix_span: pix_hi - pix_lo,
        }
    }

    fn at(&self, v: f64) -> f64 {
        self.pix_lo + (v - self.lo) / self.span * self.pix_span
    }

    fn hi(&self) -> f64 {
        self.lo + self.span
    }
}

fn minmax(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values.into_iter().fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

fn svg_open(out: &mut String, height: f64) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
}

/// Axis frame with min/max labels on both scales.
fn axes(out: &mut String, x: &Scale, y: &Scale, x_name: &str, y_name: &str) {
    let (left, right) = (x.pix_lo, x.pix_lo + x.pix_span);
    let (bottom, top) = (y.pix_lo, y.pix_lo + y.pix_span);
    out.push_str(&format!(
        "<line x1=\"{left:.2}\" y1=\"{bottom:.2}\" x2=\"{right:.2}\" y2=\"{bottom:.2}\" \
         stroke=\"black\"/>\n"
    ));
    out.push_str(&format!(
        "<line x1=\"{left:.2}\" y1=\"{bottom:.2}\" x2=\"{left:.2}\" y2=\"{top:.2}\" \
         stroke=\"black\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{left:.2}\" y=\"{:.2}\" font-size=\"11\">{:.3}</text>\n",
        bottom + 14.0,
        x.lo
    ));
    out.push_str(&format!(
        "<text x=\"{right:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
        bottom + 14.0,
        x.hi()
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{bottom:.2}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
        left - 6.0,
        y.lo
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
        left - 6.0,
        top + 4.0,
        y.hi()
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (left + right) / 2.0,
        bottom + 30.0,
        escape(x_name)
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>\n",
        left - 40.0,
        top - 10.0,
        escape(y_name)
    ));
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        escape(color),
        coords.join(" ")
    ));
}

fn legend(out: &mut String, x: f64, y: f64, entries: &[(&str, &str)]) {
    for (i, (color, label)) in entries.iter().enumerate() {
        let ly = y + i as f64 * 16.0;
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"12\" height=\"4\" fill=\"{}\"/>\n",
            ly - 4.0,
            escape(color)
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{ly:.2}\" font-size=\"11\">{}</text>\n",
            x + 18.0,
            escape(label)
        ));
    }
}

pub fn sign_label_color(label: SignLabel) -> &'static str {
    match label {
        SignLabel::Negative => "#9467bd",
        SignLabel::NearZero => "#7f7f7f",
        SignLabel::Positive => "#2ca02c",
    }
}

/// Embedding scatter colored by window sign label, centroids overlaid.
pub fn scatter_svg(
    points: &[EmbeddedPoint],
    labels: &[SignLabel],
    centroids: &[[f64; 2]],
    centroid_color: &str,
) -> Result<String> {
    if points.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} points with {} labels",
            points.len(),
            labels.len()
        )));
    }
    let height = 560.0;
    let all_x = points
        .iter()
        .map(|p| p.coords[0])
        .chain(centroids.iter().map(|c| c[0]));
    let all_y = points
        .iter()
        .map(|p| p.coords[1])
        .chain(centroids.iter().map(|c| c[1]));
    let (x_lo, x_hi) = minmax(all_x).unwrap_or((0.0, 1.0));
    let (y_lo, y_hi) = minmax(all_y).unwrap_or((0.0, 1.0));
    let xs = Scale::new(x_lo, x_hi, MARGIN, WIDTH - MARGIN);
    let ys = Scale::new(y_lo, y_hi, height - MARGIN, MARGIN);

    let mut out = String::new();
    svg_open(&mut out, height);
    axes(&mut out, &xs, &ys, "t-SNE dim 1", "t-SNE dim 2");
    for (p, &label) in points.iter().zip(labels) {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>\n",
            xs.at(p.coords[0]),
            ys.at(p.coords[1]),
            sign_label_color(label)
        ));
    }
    for c in centroids {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"7\" fill=\"{}\" stroke=\"black\"/>\n",
            xs.at(c[0]),
            ys.at(c[1]),
            escape(centroid_color)
        ));
    }
    legend(
        &mut out,
        WIDTH - 170.0,
        MARGIN + 10.0,
        &[
            (sign_label_color(SignLabel::Positive), "mean angle > band"),
            (sign_label_color(SignLabel::NearZero), "mean angle ~ 0"),
            (sign_label_color(SignLabel::Negative), "mean angle < -band"),
            (centroid_color, "centroid"),
        ],
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Truth/predicted line chart; a second panel traces the subroutine id
/// when the records carry one. Every polyline has one vertex per record.
pub fn predictions_svg(records: &[PredictionRecord]) -> String {
    let id_series: Vec<Vec<f64>> = match records.first().map(|r| &r.sub_id) {
        None | Some(SubroutineId::None) => vec![],
        Some(SubroutineId::LearnedScalar(_)) => {
            vec![records.iter().map(|r| r.sub_id.values()[0]).collect()]
        }
        Some(SubroutineId::Centroid2d(_)) => vec![
            records.iter().map(|r| r.sub_id.values()[0]).collect(),
            records.iter().map(|r| r.sub_id.values()[1]).collect(),
        ],
    };
    let main_h = 360.0;
    let panel_h = 200.0;
    let height = if id_series.is_empty() {
        main_h + MARGIN
    } else {
        main_h + panel_h + MARGIN
    };

    let mut out = String::new();
    svg_open(&mut out, height);

    let (n_lo, n_hi) = minmax(records.iter().map(|r| r.n as f64)).unwrap_or((0.0, 1.0));
    let xs = Scale::new(n_lo, n_hi, MARGIN, WIDTH - MARGIN);
    let (a_lo, a_hi) =
        minmax(records.iter().flat_map(|r| [r.truth, r.predicted])).unwrap_or((-0.5, 0.5));
    let ys = Scale::new(a_lo, a_hi, main_h - 10.0, MARGIN);
    axes(&mut out, &xs, &ys, "sample n", "angle (rad)");
    if !records.is_empty() {
        let truth: Vec<(f64, f64)> = records
            .iter()
            .map(|r| (xs.at(r.n as f64), ys.at(r.truth)))
            .collect();
        polyline(&mut out, &truth, TRUTH_COLOR);
        let pred: Vec<(f64, f64)> = records
            .iter()
            .map(|r| (xs.at(r.n as f64), ys.at(r.predicted)))
            .collect();
        polyline(&mut out, &pred, PREDICTED_COLOR);
    }
    legend(
        &mut out,
        WIDTH - 150.0,
        MARGIN + 10.0,
        &[(TRUTH_COLOR, "truth"), (PREDICTED_COLOR, "predicted")],
    );

    if !id_series.is_empty() {
        let (g_lo, g_hi) =
            minmax(id_series.iter().flatten().copied()).unwrap_or((-1.0, 1.0));
        let gs = Scale::new(g_lo, g_hi, main_h + panel_h - 10.0, main_h + 30.0);
        axes(&mut out, &xs, &gs, "sample n", "subroutine id");
        let id_colors = ["#2ca02c", "#d62728"];
        for (series, color) in id_series.iter().zip(id_colors) {
            let pts: Vec<(f64, f64)> = records
                .iter()
                .zip(series)
                .map(|(r, &g)| (xs.at(r.n as f64), gs.at(g)))
                .collect();
            polyline(&mut out, &pts, color);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Minimal well-formedness scan used by tests and the FFI surface: tags
/// balance, attributes stay inside tags, and `<` never nests.
pub fn check_svg(text: &str) -> Result<()> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    let fail = |msg: &str| Err(Error::contract(format!("svg: {msg}")));
    loop {
        match rest.find('<') {
            None => break,
            Some(i) => {
                if rest[..i].contains('>') {
                    return fail("stray `>` outside a tag");
                }
                rest = &rest[i + 1..];
                let end = match rest.find('>') {
                    Some(e) => e,
                    None => return fail("unterminated tag"),
                };
                let tag = &rest[..end];
                if tag.contains('<') {
                    return fail("nested `<`");
                }
                if let Some(name) = tag.strip_prefix('/') {
                    match stack.pop() {
                        Some(open) if open == name.trim() => {}
                        Some(open) => {
                            return fail(&format!("</{}> closes <{}>", name.trim(), open))
                        }
                        None => return fail("close tag without open"),
                    }
                } else if !tag.ends_with('/') && !tag.starts_with('?') && !tag.starts_with('!') {
                    let name = tag.split_whitespace().next().unwrap_or("");
                    stack.push(name.to_string());
                }
                rest = &rest[end + 1..];
            }
        }
    }
    if stack.is_empty() {
        Ok(())
    } else {
        fail(&format!("unclosed <{}>", stack.last().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_polylines(svg: &str) -> usize {
        svg.matches("<polyline").count()
    }

    fn polyline_points(svg: &str) -> Vec<usize> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let points = l.split("points=\"").nth(1).unwrap();
                let points = points.split('"').next().unwrap();
                points.split(' ').filter(|p| !p.is_empty()).count()
            })
            .collect()
    }

    fn record(n: usize, truth: f64, predicted: f64, sub_id: SubroutineId) -> PredictionRecord {
        PredictionRecord {
            n,
            truth,
            predicted,
            sub_id,
        }
    }

    #[test]
    fn empty_predictions_still_draw_axes() {
        let svg = predictions_svg(&[]);
        check_svg(&svg).unwrap();
        assert_eq!(count_polylines(&svg), 0);
        assert!(svg.matches("<line").count() >= 2);
    }

    #[test]
    fn polyline_vertex_counts_match_record_count() {
        let records: Vec<_> = (0..37)
            .map(|n| {
                record(
                    n + 20,
                    (n as f64 * 0.2).sin(),
                    (n as f64 * 0.2).cos(),
                    SubroutineId::LearnedScalar(n as f64 * 0.1),
                )
            })
            .collect();
        let svg = predictions_svg(&records);
        check_svg(&svg).unwrap();
        // Truth + predicted + one id trace.
        assert_eq!(polyline_points(&svg), vec![37, 37, 37]);
    }

    #[test]
    fn centroid_ids_get_two_trace_lines_and_none_gets_no_panel() {
        let centroid: Vec<_> = (0..5)
            .map(|n| record(n, 0.1, 0.1, SubroutineId::Centroid2d([1.0, -1.0])))
            .collect();
        let svg = predictions_svg(&centroid);
        check_svg(&svg).unwrap();
        assert_eq!(count_polylines(&svg), 4);

        let plain: Vec<_> = (0..5)
            .map(|n| record(n, 0.1, 0.1, SubroutineId::None))
            .collect();
        let svg = predictions_svg(&plain);
        check_svg(&svg).unwrap();
        assert_eq!(count_polylines(&svg), 2);
        assert!(!svg.contains("subroutine id"));
    }

    #[test]
    fn identical_series_produce_coincident_polylines() {
        let records: Vec<_> = (0..4)
            .map(|n| record(n, 0.3, 0.3, SubroutineId::None))
            .collect();
        let svg = predictions_svg(&records);
        let pts: Vec<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| l.split("points=\"").nth(1).unwrap())
            .collect();
        assert_eq!(pts[0], pts[1]);
    }

    #[test]
    fn scatter_colors_by_label_and_overlays_centroids() {
        let points = vec![
            EmbeddedPoint {
                tau: 1,
                coords: [0.0, 0.0],
            },
            EmbeddedPoint {
                tau: 2,
                coords: [4.0, 2.0],
            },
        ];
        let labels = vec![SignLabel::Positive, SignLabel::Negative];
        let svg = scatter_svg(&points, &labels, &[[2.0, 1.0]], "crimson").unwrap();
        check_svg(&svg).unwrap();
        assert!(svg.contains(sign_label_color(SignLabel::Positive)));
        assert!(svg.contains(sign_label_color(SignLabel::Negative)));
        assert!(svg.contains("crimson"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn scatter_rejects_mismatched_labels() {
        let points = vec![EmbeddedPoint {
            tau: 1,
            coords: [0.0, 0.0],
        }];
        assert_eq!(
            scatter_svg(&points, &[], &[], "red").unwrap_err().kind_tag(),
            "contract"
        );
    }

    #[test]
    fn rerenders_are_byte_identical() {
        let records: Vec<_> = (0..10)
            .map(|n| record(n, 0.1 * n as f64, 0.2, SubroutineId::LearnedScalar(0.5)))
            .collect();
        assert_eq!(predictions_svg(&records), predictions_svg(&records));
    }

    #[test]
    fn checker_rejects_malformed_svg() {
        assert!(check_svg("<svg><g></svg>").is_err());
        assert!(check_svg("<svg></svg>").is_ok());
        assert!(check_svg("<svg><circle r=\"1\"/></svg>").is_ok());
    }
}
