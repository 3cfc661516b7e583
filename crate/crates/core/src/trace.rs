//! Newline-delimited detection traces, one JSON record per frame.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, BoxError};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("frame {frame}: {source}")]
    Box {
        frame: u32,
        #[source]
        source: BoxError,
    },
    #[error("expected frame index {expected}, found {found}")]
    NonContiguous { expected: u32, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Detector output for one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub frame_index: u32,
    #[serde(default)]
    pub hands: Vec<BoundingBox>,
    #[serde(default)]
    pub rois: Vec<BoundingBox>,
    #[serde(default)]
    pub objects: Vec<BoundingBox>,
}

impl DetectionFrame {
    pub fn new(frame_index: u32) -> Self {
        Self {
            frame_index,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), TraceError> {
        for b in self.hands.iter().chain(&self.rois).chain(&self.objects) {
            b.validate().map_err(|source| TraceError::Box {
                frame: self.frame_index,
                source,
            })?;
        }
        Ok(())
    }
}

/// Checks that frames are numbered 0, 1, 2, ... in order.
pub fn check_contiguous(frames: &[DetectionFrame]) -> Result<(), TraceError> {
    for (i, f) in frames.iter().enumerate() {
        if f.frame_index as usize != i {
            return Err(TraceError::NonContiguous {
                expected: i as u32,
                found: f.frame_index,
            });
        }
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<DetectionFrame>, TraceError> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: DetectionFrame =
            serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                line: i + 1,
                source,
            })?;
        frame.validate()?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn parse_trace(text: &str) -> Result<Vec<DetectionFrame>, TraceError> {
    read_trace(text.as_bytes())
}

pub fn write_trace<W: Write>(mut writer: W, frames: &[DetectionFrame]) -> Result<(), TraceError> {
    for f in frames {
        serde_json::to_writer(&mut writer, f).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_to_string(frames: &[DetectionFrame]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, frames).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
