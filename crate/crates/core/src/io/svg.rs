use std::fmt::Write as _;

use crate::decode::Candidate;
use crate::eval::Detection;
use crate::geometry::Polygon;
use crate::label::AnnotationRecord;

const GT_COLOR: &str = "#00a000";
const DET_COLOR: &str = "#e00000";
const CANDIDATE_COLOR: &str = "#0060ff";

/// SVG 1.1 overlay: ground truth in green (dashed when ignored), detections
/// in red, candidate cells as small blue dots.
pub fn render_overlay_svg(
    width: usize,
    height: usize,
    gts: &[AnnotationRecord],
    dets: &[Detection],
    candidates: Option<&[Candidate]>,
) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
    );
    for gt in gts {
        let dash = if gt.ignore { " stroke-dasharray=\"2,2\"" } else { "" };
        polygon(&mut s, &gt.polygon, GT_COLOR, dash);
    }
    for d in dets {
        polygon(&mut s, &d.polygon, DET_COLOR, "");
    }
    for c in candidates.unwrap_or(&[]) {
        let p = c.point();
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"0.4\" fill=\"{CANDIDATE_COLOR}\"/>",
            p.x, p.y
        );
    }
    s.push_str("</svg>\n");
    s
}

fn polygon(s: &mut String, poly: &Polygon, color: &str, extra: &str) {
    let points: Vec<String> = poly.vertices().iter().map(|p| format!("{},{}", p.x, p.y)).collect();
    let _ = writeln!(
        s,
        "<polygon points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"{extra}/>",
        points.join(" ")
    );
}
