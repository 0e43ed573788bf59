//! JSON-lines trace files.
//!
//! The first line is a header `{n, m, layout, seed?}`; every following line is
//! one frame: `{frame, gt_bbox?, channels: [{bbox, observables, correct?}],
//! detection?: {bbox, tp?}, shared?}`. Frames are numbered from 0 and must be
//! consecutive. Writing uses compact JSON with a fixed key order, so reading
//! and rewriting a file produced here reproduces it byte for byte.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{BBox, TrackerReport};
use crate::hmm::ObservableLayout;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace has no header line")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    /// Channel count.
    pub n: usize,
    /// Observation dimension, `layout.dims()`.
    pub m: usize,
    pub layout: ObservableLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TraceHeader {
    pub fn new(layout: ObservableLayout, seed: Option<u64>) -> Self {
        Self {
            n: layout.trackers(),
            m: layout.dims(),
            layout,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub bbox: BBox,
    pub observables: Vec<f64>,
    /// Ground-truth correctness, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

impl ChannelRecord {
    pub fn report(&self) -> TrackerReport {
        TrackerReport {
            bbox: self.bbox,
            observables: self.observables.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub bbox: BBox,
    /// True positive or false positive, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_bbox: Option<BBox>,
    pub channels: Vec<ChannelRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionRecord>,
    /// Observables shared by all channels.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared: Vec<f64>,
}

impl TraceRecord {
    pub fn reports(&self) -> Vec<TrackerReport> {
        self.channels.iter().map(ChannelRecord::report).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

fn check_observables(values: &[f64]) -> Result<(), String> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(format!("observable {v} outside [0,1]")),
        None => Ok(()),
    }
}

fn check_header(h: &TraceHeader) -> Result<(), String> {
    h.layout.validate().map_err(|e| e.to_string())?;
    if h.n != h.layout.trackers() || h.m != h.layout.dims() {
        return Err(format!(
            "header n={} m={} disagrees with layout ({} channels, {} dims)",
            h.n,
            h.m,
            h.layout.trackers(),
            h.layout.dims()
        ));
    }
    Ok(())
}

fn check_record(h: &TraceHeader, expected_frame: usize, r: &TraceRecord) -> Result<(), String> {
    if r.frame != expected_frame {
        return Err(format!(
            "expected frame {expected_frame}, found {}",
            r.frame
        ));
    }
    if r.channels.len() != h.n {
        return Err(format!(
            "expected {} channels, found {}",
            h.n,
            r.channels.len()
        ));
    }
    for (c, (ch, &k)) in r.channels.iter().zip(&h.layout.arities).enumerate() {
        if ch.observables.len() != k {
            return Err(format!(
                "channel {c} has {} observables, layout declares {k}",
                ch.observables.len()
            ));
        }
        check_observables(&ch.observables).map_err(|e| format!("channel {c}: {e}"))?;
        if !ch.bbox.is_valid() {
            return Err(format!("channel {c}: invalid box"));
        }
    }
    if r.shared.len() != h.layout.shared {
        return Err(format!(
            "{} shared observables, layout declares {}",
            r.shared.len(),
            h.layout.shared
        ));
    }
    check_observables(&r.shared).map_err(|e| format!("shared: {e}"))?;
    if r.detection.as_ref().is_some_and(|d| !d.bbox.is_valid()) {
        return Err("invalid detection box".into());
    }
    if r.gt_bbox.is_some_and(|b| !b.is_valid()) {
        return Err("invalid ground-truth box".into());
    }
    Ok(())
}

impl TraceFile {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Parses a trace, reporting the 1-based line of the first problem.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, TraceError> {
        let mut lines = reader.lines().enumerate();
        let header: TraceHeader = loop {
            match lines.next() {
                None => return Err(TraceError::MissingHeader),
                Some((_, line)) if line.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
                Some((i, line)) => {
                    let line = line?;
                    let parse = |message: String| TraceError::Parse {
                        line: i + 1,
                        message,
                    };
                    let h = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
                    check_header(&h).map_err(parse)?;
                    break h;
                }
            }
        };
        let mut out = Self::new(header);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: String| TraceError::Parse {
                line: i + 1,
                message,
            };
            let record: TraceRecord =
                serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            check_record(&out.header, out.records.len(), &record).map_err(parse)?;
            out.records.push(record);
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        Self::read(text.as_bytes())
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<(), TraceError> {
        serde_json::to_writer(&mut writer, &self.header).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_json_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Ground-truth boxes for every frame, or `None` if any frame lacks one.
    pub fn ground_truth(&self) -> Option<Vec<BBox>> {
        self.records.iter().map(|r| r.gt_bbox).collect()
    }
}
