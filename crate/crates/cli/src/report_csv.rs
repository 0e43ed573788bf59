//! Per-frame report CSV.
//!
//! Columns: `frame, x, y, w, h, source, state, state_bits, detection`, then
//! `p_0 .. p_{N-1}` (filtering posterior per state) and `m_0 .. m_{n-1}`
//! (probability that each tracker is correct). `state_bits` spells the most
//! probable state per tracker, tracker 0 first: `C` correct, `F` failed.

use std::io::{Read, Write};

use trackfuse_core::fusion::{BBox, DetectionOutcome, FusionOutput, OutputSource};
use trackfuse_core::hmm::{StateIndex, StateSpace};

/// `CCF`-style label of a state.
pub fn state_label(space: &StateSpace, state: StateIndex) -> String {
    (0..space.trackers())
        .map(|c| if space.is_correct(state, c) { 'C' } else { 'F' })
        .collect()
}

fn outcome_label(d: &DetectionOutcome) -> &'static str {
    match d {
        DetectionOutcome::None => "none",
        DetectionOutcome::Accepted { .. } => "accepted",
        DetectionOutcome::Rejected => "rejected",
    }
}

/// Shortest round-tripping form, with an exponent for very small or large values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write<W: Write>(
    writer: W,
    space: &StateSpace,
    outputs: &[FusionOutput],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = [
        "frame",
        "x",
        "y",
        "w",
        "h",
        "source",
        "state",
        "state_bits",
        "detection",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..space.len()).map(|i| format!("p_{i}")));
    header.extend((0..space.trackers()).map(|c| format!("m_{c}")));
    w.write_record(&header)?;
    for o in outputs {
        let mut row = vec![
            o.frame.to_string(),
            num(o.bbox.x),
            num(o.bbox.y),
            num(o.bbox.w),
            num(o.bbox.h),
            match o.source {
                OutputSource::Detector => "detector",
                OutputSource::Fused => "fused",
            }
            .to_string(),
            o.state.0.to_string(),
            state_label(space, o.state),
            outcome_label(&o.detection).to_string(),
        ];
        row.extend(o.posterior.iter().copied().map(num));
        row.extend(o.marginals.iter().copied().map(num));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Output boxes of a report, in frame order.
pub fn read_boxes<R: Read>(reader: R) -> Result<Vec<BBox>, String> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("report has no `{name}` column"))
    };
    let cols = [col("x")?, col("y")?, col("w")?, col("h")?];
    let mut boxes = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let mut v = [0.0; 4];
        for (slot, &c) in v.iter_mut().zip(&cols) {
            let field = record.get(c).unwrap_or("");
            *slot = field
                .parse()
                .map_err(|_| format!("row {}: `{field}` is not a number", i + 2))?;
        }
        boxes.push(BBox::new(v[0], v[1], v[2], v[3]));
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_tracker_order() {
        let space = StateSpace::new(3).unwrap();
        assert_eq!(state_label(&space, StateIndex(0)), "CCC");
        assert_eq!(state_label(&space, StateIndex(1)), "CCF");
        assert_eq!(state_label(&space, StateIndex(4)), "FCC");
        assert_eq!(state_label(&space, StateIndex(7)), "FFF");
    }

    #[test]
    fn boxes_round_trip() {
        let space = StateSpace::new(1).unwrap();
        let out = FusionOutput {
            frame: 0,
            bbox: BBox::new(0.1, 2.5, 30.0, 1.0 / 3.0),
            source: OutputSource::Fused,
            state: StateIndex(0),
            posterior: vec![0.75, 0.25],
            marginals: vec![0.75],
            detection: DetectionOutcome::None,
            reinit: None,
        };
        let mut buf = Vec::new();
        write(&mut buf, &space, std::slice::from_ref(&out)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame,x,y,w,h,source,state,state_bits,detection,p_0,p_1,m_0\n"));
        assert_eq!(read_boxes(&buf[..]).unwrap(), vec![out.bbox]);
        assert!(read_boxes("a,b\n1,2\n".as_bytes()).is_err());
    }
}
