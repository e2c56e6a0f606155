//! Motion file formats.
//!
//! JSON: `{"skeleton": "<id>", "fps": <number>, "frames": [[[x,y,z], ...], ...]}`.
//! Coordinates may also be given as strings (`"NaN"`, `"1e-3"`) so that dumps
//! from tools that quote non-finite values are rejected with a validation error
//! instead of a syntax error.
//!
//! CSV: header `frame,j0x,j0y,j0z,...`, one row per frame, 17 significant digits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{MotionSequence, Point3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionFormat {
    Json,
    Csv,
}

impl MotionFormat {
    /// Guesses the format from a file extension.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "json" => Some(MotionFormat::Json),
            "csv" => Some(MotionFormat::Csv),
            _ => None,
        }
    }
}

/// Values CSV files cannot carry themselves.
#[derive(Debug, Clone)]
pub struct MotionDefaults {
    pub skeleton_id: String,
    pub fps: f64,
}

impl Default for MotionDefaults {
    fn default() -> Self {
        MotionDefaults {
            skeleton_id: super::HUMANML3D_22.to_string(),
            fps: 20.0,
        }
    }
}

pub fn parse_motion(raw: &[u8], format: MotionFormat, defaults: &MotionDefaults) -> Result<MotionSequence> {
    match format {
        MotionFormat::Json => parse_json(raw),
        MotionFormat::Csv => parse_csv(raw, defaults),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Coord {
    Num(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMotion {
    skeleton: String,
    fps: f64,
    frames: Vec<Vec<[Coord; 3]>>,
}

#[derive(Serialize)]
struct MotionOut<'a> {
    skeleton: &'a str,
    fps: f64,
    frames: Vec<&'a [Point3]>,
}

fn parse_json(raw: &[u8]) -> Result<MotionSequence> {
    let parsed: RawMotion = serde_json::from_slice(raw)?;
    let mut frames = Vec::with_capacity(parsed.frames.len());
    for (t, frame) in parsed.frames.into_iter().enumerate() {
        let mut points = Vec::with_capacity(frame.len());
        for (j, coords) in frame.into_iter().enumerate() {
            let mut p = [0.0; 3];
            for (k, c) in coords.into_iter().enumerate() {
                p[k] = match c {
                    Coord::Num(v) => v,
                    Coord::Text(s) => s.trim().parse::<f64>().map_err(|_| {
                        Error::validation(format!("frame {t}, joint {j}: `{s}` is not a number"))
                    })?,
                };
            }
            points.push(p);
        }
        frames.push(points);
    }
    MotionSequence::new(parsed.skeleton, parsed.fps, frames)
}

fn parse_csv(raw: &[u8], defaults: &MotionDefaults) -> Result<MotionSequence> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        line: 1,
        column: e.valid_up_to() + 1,
        message: "input is not UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "empty CSV".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"frame") || columns.len() < 4 || (columns.len() - 1) % 3 != 0 {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "header must be `frame,j0x,j0y,j0z,...`".into(),
        });
    }
    let joints = (columns.len() - 1) / 3;
    for (i, col) in columns.iter().enumerate().skip(1) {
        let expected = format!("j{}{}", (i - 1) / 3, ['x', 'y', 'z'][(i - 1) % 3]);
        if *col != expected {
            return Err(Error::Parse {
                line: 1,
                column: column_offset(header, i),
                message: format!("expected column `{expected}`, found `{col}`"),
            });
        }
    }

    let mut positions = Vec::new();
    let mut frames = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line: line_no,
                column: 1,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        let frame_idx: usize = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            column: 1,
            message: format!("bad frame index `{}`", fields[0]),
        })?;
        if frame_idx != frames {
            return Err(Error::Parse {
                line: line_no,
                column: 1,
                message: format!("frame index {frame_idx} out of sequence, expected {frames}"),
            });
        }
        for j in 0..joints {
            let mut p = [0.0; 3];
            for k in 0..3 {
                let field_idx = 1 + 3 * j + k;
                let field = fields[field_idx].trim();
                p[k] = field.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    column: column_offset(line, field_idx),
                    message: format!("bad number `{field}`"),
                })?;
            }
            positions.push(p);
        }
        frames += 1;
    }
    MotionSequence::from_flat(defaults.skeleton_id.clone(), defaults.fps, frames, joints, positions)
}

/// 1-based column where comma-separated field `field_idx` starts.
fn column_offset(line: &str, field_idx: usize) -> usize {
    line.split(',').take(field_idx).map(|f| f.len() + 1).sum::<usize>() + 1
}

impl MotionSequence {
    /// JSON form. Numbers use shortest round-trip formatting, so parsing the
    /// output reproduces every coordinate bit for bit.
    pub fn to_json_string(&self) -> String {
        let out = MotionOut {
            skeleton: self.skeleton_id(),
            fps: self.fps(),
            frames: (0..self.frame_count()).map(|t| self.frame(t)).collect(),
        };
        serde_json::to_string(&out).expect("finite coordinates serialize")
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("frame");
        for j in 0..self.joint_count() {
            let _ = write!(out, ",j{j}x,j{j}y,j{j}z");
        }
        out.push('\n');
        for t in 0..self.frame_count() {
            let _ = write!(out, "{t}");
            for p in self.frame(t) {
                for c in p {
                    let _ = write!(out, ",{c:.16e}");
                }
            }
            out.push('\n');
        }
        out
    }
}
