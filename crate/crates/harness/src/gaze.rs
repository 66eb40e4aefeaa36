//! Eye-tracker traces: `t_ms,eye,u,v,valid` CSV, one row per sample.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{at, HarnessError, Result};

pub const HEADER: [&str; 5] = ["t_ms", "eye", "u", "v", "valid"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GazeSample {
    pub t_ms: f64,
    pub eye: u32,
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GazeTrace {
    pub samples: Vec<GazeSample>,
}

fn trace_err(line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Trace {
        line,
        message: message.into(),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "True" | "TRUE" => Some(true),
        "0" | "false" | "False" | "FALSE" => Some(false),
        _ => None,
    }
}

impl GazeTrace {
    /// A trace holding `gaze` for `frames` frames at 90 Hz.
    pub fn constant(gaze: [f64; 2], frames: usize) -> Self {
        let samples = (0..frames)
            .map(|i| GazeSample {
                t_ms: i as f64 * 1000.0 / 90.0,
                eye: 0,
                u: gaze[0],
                v: gaze[1],
                valid: true,
            })
            .collect();
        Self { samples }
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(trace_err(1, format!("expected header {}", HEADER.join(","))));
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != 5 {
                return Err(trace_err(line, format!("expected 5 fields, got {}", rec.len())));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .map_err(|_| trace_err(line, format!("bad {} value {:?}", HEADER[k], &rec[k])))
            };
            let eye = rec[1]
                .parse::<u32>()
                .map_err(|_| trace_err(line, format!("bad eye id {:?}", &rec[1])))?;
            let valid = parse_bool(&rec[4])
                .ok_or_else(|| trace_err(line, format!("bad valid flag {:?}", &rec[4])))?;
            samples.push(GazeSample {
                t_ms: num(0)?,
                eye,
                u: num(2)?,
                v: num(3)?,
                valid,
            });
        }
        Ok(Self { samples })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(at(path))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(HEADER)?;
        for s in &self.samples {
            wtr.write_record([
                s.t_ms.to_string(),
                s.eye.to_string(),
                s.u.to_string(),
                s.v.to_string(),
                u8::from(s.valid).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| HarnessError::Csv(e.into()))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(at(path))?;
        self.write(f)
    }

    /// Timestamps must not decrease per eye, and valid samples must lie
    /// inside a `width × height` image.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let mut last: std::collections::HashMap<u32, f64> = Default::default();
        for (i, s) in self.samples.iter().enumerate() {
            let line = i + 2;
            if let Some(&prev) = last.get(&s.eye) {
                if s.t_ms < prev {
                    return Err(trace_err(line, "timestamp goes backwards"));
                }
            }
            last.insert(s.eye, s.t_ms);
            if s.valid
                && !(s.u >= 0.0 && s.u <= width as f64 && s.v >= 0.0 && s.v <= height as f64)
            {
                return Err(trace_err(line, "valid sample outside the image"));
            }
        }
        Ok(())
    }

    /// Gaze for each of `frames` frames from the samples of `eye`, one
    /// sample per frame. Invalid samples and frames past the end of the
    /// trace reuse the last valid gaze; before any valid sample the
    /// `fallback` is used.
    pub fn per_frame(&self, eye: u32, frames: usize, fallback: [f64; 2]) -> Vec<[f64; 2]> {
        let mut rows = self.samples.iter().filter(|s| s.eye == eye);
        let mut current = fallback;
        (0..frames)
            .map(|_| {
                if let Some(s) = rows.next() {
                    if s.valid {
                        current = [s.u, s.v];
                    }
                }
                current
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRACE: &str = "t_ms,eye,u,v,valid\n0,0,10,20,1\n11,0,30,40,0\n22,0,50,60,1\n5,1,1,1,1\n";

    #[test]
    fn parses_and_replays() {
        let t = GazeTrace::from_reader(TRACE.as_bytes()).unwrap();
        assert_eq!(t.samples.len(), 4);
        t.validate(100, 100).unwrap();
        let g = t.per_frame(0, 5, [0.0, 0.0]);
        assert_eq!(g, vec![[10.0, 20.0], [10.0, 20.0], [50.0, 60.0], [50.0, 60.0], [50.0, 60.0]]);
    }

    #[test]
    fn fallback_before_first_valid() {
        let t = GazeTrace::from_reader("t_ms,eye,u,v,valid\n0,0,5,5,false\n".as_bytes()).unwrap();
        assert_eq!(t.per_frame(0, 2, [7.0, 8.0]), vec![[7.0, 8.0]; 2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GazeTrace::from_reader("time,eye,u,v,valid\n".as_bytes()).is_err());
        let err = GazeTrace::from_reader("t_ms,eye,u,v,valid\n0,0,x,1,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let t = GazeTrace::from_reader("t_ms,eye,u,v,valid\n5,0,1,1,1\n4,0,1,1,1\n".as_bytes())
            .unwrap();
        assert!(t.validate(10, 10).is_err());
        let t = GazeTrace::from_reader("t_ms,eye,u,v,valid\n0,0,11,1,1\n".as_bytes()).unwrap();
        assert!(t.validate(10, 10).is_err());
    }

    #[test]
    fn write_read_round_trip() {
        let t = GazeTrace::from_reader(TRACE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(GazeTrace::from_reader(buf.as_slice()).unwrap(), t);
    }
}
