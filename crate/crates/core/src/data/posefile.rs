//! Line-oriented text format for pose sequences.
//!
//! One frame per record, an explicit versioned header, and shortest
//! round-trip float formatting, so save → load is bit-identical. The full
//! field layout is documented in `docs/formats.md`.

use super::DataError;
use crate::kinematics::{PoseSequence, SequenceMeta};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const POSEFILE_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

fn parse_err(line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse { line, message: message.into() }
}

/// Serialize a sequence to the pose file text form.
pub fn to_string(seq: &PoseSequence) -> String {
    let mut out = String::new();
    let frames = seq.frames();
    writeln!(out, "posefile {POSEFILE_VERSION}").unwrap();
    writeln!(out, "id {}", seq.meta.id).unwrap();
    writeln!(out, "source {}", seq.meta.source).unwrap();
    writeln!(out, "fps {}", seq.meta.fps).unwrap();
    writeln!(out, "keypoints {}", seq.keypoints).unwrap();
    writeln!(out, "dims {}", seq.dims).unwrap();
    writeln!(out, "frames {frames}").unwrap();
    writeln!(out, "joints {}", seq.meta.joint_names.join(" ")).unwrap();
    writeln!(out, "groups {}", seq.meta.joint_groups.join(" ")).unwrap();
    for t in 0..frames {
        write!(out, "frame {t}").unwrap();
        for k in 0..seq.keypoints {
            write!(out, " {}", if seq.vis(t, k) { 1 } else { 0 }).unwrap();
        }
        for k in 0..seq.keypoints {
            for d in 0..seq.dims {
                write!(out, " {}", seq.get(t, k, d)).unwrap();
            }
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

/// Write a sequence to `path`.
pub fn save(seq: &PoseSequence, path: &Path) -> Result<(), DataError> {
    fs::write(path, to_string(seq)).map_err(|e| io_err(path, e))
}

struct HeaderField<'a> {
    line: usize,
    value: &'a str,
}

/// Parse the pose file text form.
pub fn from_string(text: &str) -> Result<PoseSequence, DataError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (line_no, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let version = first
        .strip_prefix("posefile ")
        .ok_or_else(|| parse_err(line_no, "missing 'posefile <version>' header"))?;
    if version.trim() != POSEFILE_VERSION.to_string() {
        return Err(DataError::Version {
            found: version.trim().to_string(),
            expected: POSEFILE_VERSION,
        });
    }

    let mut take_field = |key: &str| -> Result<HeaderField<'_>, DataError> {
        let (line, text) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("file truncated before '{key}'")))?;
        let value = text
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' ').or(Some(rest).filter(|r| r.is_empty())))
            .ok_or_else(|| parse_err(line, format!("expected '{key} ...', got '{text}'")))?;
        Ok(HeaderField { line, value })
    };

    let id = take_field("id")?.value.to_string();
    let source = take_field("source")?.value.to_string();
    let fps_field = take_field("fps")?;
    let fps: f64 = fps_field
        .value
        .parse()
        .map_err(|_| parse_err(fps_field.line, format!("bad fps '{}'", fps_field.value)))?;
    let kp_field = take_field("keypoints")?;
    let keypoints: usize = kp_field
        .value
        .parse()
        .map_err(|_| parse_err(kp_field.line, format!("bad keypoints '{}'", kp_field.value)))?;
    let dims_field = take_field("dims")?;
    let dims: usize = dims_field
        .value
        .parse()
        .map_err(|_| parse_err(dims_field.line, format!("bad dims '{}'", dims_field.value)))?;
    let frames_field = take_field("frames")?;
    let frames: usize = frames_field
        .value
        .parse()
        .map_err(|_| parse_err(frames_field.line, format!("bad frames '{}'", frames_field.value)))?;
    let joints_field = take_field("joints")?;
    let joint_names: Vec<String> =
        joints_field.value.split_whitespace().map(str::to_string).collect();
    if joint_names.len() != keypoints {
        return Err(parse_err(
            joints_field.line,
            format!("expected {keypoints} joint names, got {}", joint_names.len()),
        ));
    }
    let groups_field = take_field("groups")?;
    let joint_groups: Vec<String> =
        groups_field.value.split_whitespace().map(str::to_string).collect();
    if joint_groups.len() != keypoints {
        return Err(parse_err(
            groups_field.line,
            format!("expected {keypoints} joint groups, got {}", joint_groups.len()),
        ));
    }

    let width = keypoints * dims;
    let mut coords = Vec::with_capacity(frames * width);
    let mut visibility = Vec::with_capacity(frames * keypoints);
    for expect_t in 0..frames {
        let (line, text) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("file truncated at frame {expect_t}")))?;
        let mut tokens = text.split_whitespace();
        if tokens.next() != Some("frame") {
            return Err(parse_err(line, format!("expected frame record for frame {expect_t}")));
        }
        let idx: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(line, "missing frame index"))?;
        if idx != expect_t {
            return Err(parse_err(line, format!("frame index {idx}, expected {expect_t}")));
        }
        let rest: Vec<&str> = tokens.collect();
        if rest.len() != keypoints + width {
            return Err(parse_err(
                line,
                format!(
                    "frame {idx}: expected {keypoints} visibility flags + {width} coordinates, got {} fields",
                    rest.len()
                ),
            ));
        }
        for flag in &rest[..keypoints] {
            match *flag {
                "0" => visibility.push(false),
                "1" => visibility.push(true),
                other => {
                    return Err(parse_err(
                        line,
                        format!("frame {idx}: bad visibility flag '{other}'"),
                    ))
                }
            }
        }
        for token in &rest[keypoints..] {
            let v: f64 = token
                .parse()
                .map_err(|_| parse_err(line, format!("frame {idx}: bad coordinate '{token}'")))?;
            coords.push(v);
        }
    }

    let (end_line, end) =
        lines.next().ok_or_else(|| parse_err(0, "file truncated before 'end'"))?;
    if end != "end" {
        return Err(parse_err(end_line, format!("expected 'end', got '{end}'")));
    }

    PoseSequence::new(
        keypoints,
        dims,
        coords,
        visibility,
        SequenceMeta { id, source, fps, joint_names, joint_groups },
    )
    .map_err(|e| parse_err(0, e.to_string()))
}

/// Read a sequence from `path`.
pub fn load(path: &Path) -> Result<PoseSequence, DataError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    from_string(&text)
}
