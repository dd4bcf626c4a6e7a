//! Byte-deterministic SVG heatmaps.

use std::fmt::Write as _;

use artic::numkit::Mat;

const CELL_W: usize = 2;
const CELL_H: usize = 12;
const BACKGROUND: &str = "#000000";

/// Black (zero) to white (row-independent maximum).
fn grey(v: f64) -> String {
    let level = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

/// Blue (negative) through white to red (positive).
fn diverging(v: f64) -> String {
    let a = v.clamp(-1.0, 1.0);
    let fade = 255 - (a.abs() * 255.0).round() as u8;
    if a >= 0.0 {
        format!("#ff{fade:02x}{fade:02x}")
    } else {
        format!("#{fade:02x}{fade:02x}ff")
    }
}

fn open(out: &mut String, width: usize, height: usize) {
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )
    .expect("writing to a String");
}

/// Heatmap of a nonnegative D×t matrix: one row per gesture, time left to right.
/// Zero cells show the background; others are scaled by the global maximum.
pub fn heatmap(h: &Mat) -> String {
    let (d, t) = h.shape();
    let (width, height) = (t * CELL_W, d * CELL_H);
    let max = h.data().iter().copied().fold(0.0f64, f64::max);
    let mut out = String::new();
    open(&mut out, width, height);
    writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"{BACKGROUND}\"/>"
    )
    .unwrap();
    if max > 0.0 {
        for g in 0..d {
            for tau in 0..t {
                let v = h[(g, tau)];
                if v > 0.0 {
                    writeln!(
                        out,
                        "<rect x=\"{}\" y=\"{}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{}\"/>",
                        tau * CELL_W,
                        g * CELL_H,
                        grey(v / max)
                    )
                    .unwrap();
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// One strip per gesture, stacked vertically: lag runs down, contour coordinate
/// runs across. Colours share a single symmetric scale.
pub fn gesture_strips(trajectories: &[Mat]) -> String {
    let lags = trajectories.first().map_or(0, Mat::rows);
    let coords = trajectories.first().map_or(0, Mat::cols);
    let gap = 4;
    let strip_h = lags * 2;
    let width = coords * CELL_W;
    let height = trajectories.len() * (strip_h + gap);
    let max = trajectories.iter().map(Mat::max_abs).fold(0.0f64, f64::max);
    let mut out = String::new();
    open(&mut out, width, height);
    writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>"
    )
    .unwrap();
    for (g, m) in trajectories.iter().enumerate() {
        let top = g * (strip_h + gap);
        writeln!(out, "<g id=\"gesture{}\">", g + 1).unwrap();
        for lag in 0..m.rows() {
            for c in 0..m.cols() {
                let v = if max > 0.0 { m[(lag, c)] / max } else { 0.0 };
                writeln!(
                    out,
                    "<rect x=\"{}\" y=\"{}\" width=\"{CELL_W}\" height=\"2\" fill=\"{}\"/>",
                    c * CELL_W,
                    top + lag * 2,
                    diverging(v)
                )
                .unwrap();
            }
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
