use std::path::Path;

use super::{parse_f64, read_text};
use crate::error::{Error, Result};
use crate::track::{Detection, DetectionFrame, DetectionSeries, SmoothedTrack};

pub const TRACK_INPUT_HEADER: &str = "frame,x,y,w,h,confidence";
pub const TRACK_OUTPUT_HEADER: &str = "frame,x,y,size,clamped";

/// One detection per row; rows of the same frame must be adjacent and frames non-decreasing.
pub fn parse_detections(text: &str) -> Result<DetectionSeries> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, h)) if h.trim() == TRACK_INPUT_HEADER => {}
        Some((n, h)) => return Err(Error::parse(n, format!("expected header {TRACK_INPUT_HEADER:?}, found {h:?}"))),
        None => return Err(Error::parse(1, "empty track file")),
    }
    let mut frames: Vec<DetectionFrame> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::parse(n, format!("expected 6 fields, found {}", f.len())));
        }
        let frame: u64 = f[0].trim().parse().map_err(|_| Error::parse(n, format!("bad frame index {:?}", f[0])))?;
        let d = Detection {
            x: parse_f64(f[1], n, "x")?,
            y: parse_f64(f[2], n, "y")?,
            width: parse_f64(f[3], n, "w")?,
            height: parse_f64(f[4], n, "h")?,
            confidence: parse_f64(f[5], n, "confidence")?,
        };
        if d.width <= 0.0 || d.height <= 0.0 {
            return Err(Error::parse(n, "box width and height must be positive"));
        }
        match frames.last_mut() {
            Some(last) if last.frame == frame => last.boxes.push(d),
            Some(last) if last.frame > frame => {
                return Err(Error::parse(n, format!("frame {frame} after frame {}", last.frame)));
            }
            _ => frames.push(DetectionFrame { frame, boxes: vec![d] }),
        }
    }
    DetectionSeries::new(frames)
}

pub fn read_detections(path: &Path) -> Result<DetectionSeries> {
    parse_detections(&read_text(path)?)
}

pub fn format_smoothed_track(track: &SmoothedTrack) -> String {
    let mut out = format!("{TRACK_OUTPUT_HEADER}\n");
    for (i, (p, c)) in track.points.iter().zip(&track.clamped).enumerate() {
        out.push_str(&format!("{},{},{},{},{}\n", track.start_frame + i as u64, p.x, p.y, p.size, *c as u8));
    }
    out
}
