//! CSF: the JSON contour sequence file.
//!
//! ```text
//! {"p":5,"t":2,"fps":83.0,"articulators":["jaw","tongue","lip","velum","larynx"],
//! "frames":[
//! [x0,y0,x1,y1,...],
//! [x0,y0,x1,y1,...]
//! ]}
//! ```
//!
//! Any valid JSON with those keys is accepted on read; the writer always
//! emits one frame per line so that error line numbers point at the frame.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{ArticulatorId, ArticulatorMap, ContourError, ContourSequence, Result};
use crate::numkit::Mat;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CsfDoc {
    p: usize,
    t: usize,
    fps: f64,
    articulators: Vec<String>,
    frames: Vec<Vec<f64>>,
}

pub fn format_csf(seq: &ContourSequence) -> String {
    let labels: Vec<&str> = seq.map().assignment().iter().map(|a| a.label()).collect();
    let mut out = format!(
        "{{\"p\":{},\"t\":{},\"fps\":{},\"articulators\":{},\n\"frames\":[\n",
        seq.p(),
        seq.t(),
        serde_json::to_string(&seq.fps()).expect("finite fps"),
        serde_json::to_string(&labels).expect("labels serialize"),
    );
    let x = seq.x();
    let mut frame = Vec::with_capacity(x.rows());
    for tau in 0..seq.t() {
        frame.clear();
        frame.extend((0..x.rows()).map(|r| x[(r, tau)]));
        out.push_str(&serde_json::to_string(&frame).expect("finite coordinates"));
        out.push_str(if tau + 1 < seq.t() { ",\n" } else { "\n" });
    }
    out.push_str("]}\n");
    out
}

pub fn write_csf(seq: &ContourSequence, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_csf(seq))?;
    Ok(())
}

pub fn read_csf(path: impl AsRef<Path>) -> Result<ContourSequence> {
    parse_csf(&fs::read_to_string(path)?)
}

fn parse_err(line: usize, msg: impl Into<String>) -> ContourError {
    ContourError::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn parse_csf(text: &str) -> Result<ContourSequence> {
    let doc: CsfDoc = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;

    if doc.t == 0 {
        return Err(parse_err(key_line(text, "t"), "t must be at least 1"));
    }
    if doc.p < 5 {
        return Err(parse_err(
            key_line(text, "p"),
            format!("p must be at least 5, got {}", doc.p),
        ));
    }
    if doc.articulators.len() != doc.p {
        return Err(parse_err(
            key_line(text, "articulators"),
            format!(
                "{} articulator labels for p = {}",
                doc.articulators.len(),
                doc.p
            ),
        ));
    }
    let mut assignment = Vec::with_capacity(doc.p);
    for label in &doc.articulators {
        let art: ArticulatorId = label
            .parse()
            .map_err(|msg: String| parse_err(string_line(text, label), msg))?;
        assignment.push(art);
    }
    let map = ArticulatorMap::new(assignment)?;
    map.ensure_complete()
        .map_err(|e| parse_err(key_line(text, "articulators"), e.to_string()))?;

    if doc.frames.len() != doc.t {
        return Err(parse_err(
            key_line(text, "frames"),
            format!("{} frames for t = {}", doc.frames.len(), doc.t),
        ));
    }
    let mut x = Mat::zeros(2 * doc.p, doc.t);
    for (tau, frame) in doc.frames.iter().enumerate() {
        if frame.len() != 2 * doc.p {
            return Err(parse_err(
                frame_line(text, tau),
                format!(
                    "frame {tau} has {} values, expected {}",
                    frame.len(),
                    2 * doc.p
                ),
            ));
        }
        for (r, &v) in frame.iter().enumerate() {
            x[(r, tau)] = v;
        }
    }
    ContourSequence::new(x, doc.fps, map).map_err(|e| parse_err(1, e.to_string()))
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Line of the first `"key"` followed by a colon.
fn key_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&needle) {
        let at = from + pos;
        let rest = text[at + needle.len()..].trim_start();
        if rest.starts_with(':') {
            return line_at(text, at);
        }
        from = at + needle.len();
    }
    1
}

fn string_line(text: &str, s: &str) -> usize {
    let start = text.find("\"articulators\"").unwrap_or(0);
    let needle = format!("\"{s}\"");
    text[start..]
        .find(&needle)
        .map_or(1, |pos| line_at(text, start + pos))
}

/// Line where the `index`-th inner array of `"frames"` opens.
fn frame_line(text: &str, index: usize) -> usize {
    let Some(key) = text.find("\"frames\"") else {
        return 1;
    };
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut seen = 0usize;
    for (i, &b) in bytes.iter().enumerate().skip(key) {
        match b {
            b'[' => {
                depth += 1;
                if depth == 2 {
                    if seen == index {
                        return line_at(text, i);
                    }
                    seen += 1;
                }
            }
            b']' => {
                if depth <= 1 {
                    break;
                }
                depth -= 1;
            }
            _ => {}
        }
    }
    key_line(text, "frames")
}
