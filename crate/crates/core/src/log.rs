//! JSON-lines IMU logs: one `{"imu_id","t","gyro","accel"}` record per line.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ImuSample, ImuStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuLogRecord {
    pub imu_id: String,
    pub t: f64,
    pub gyro: [f64; 3],
    pub accel: [f64; 3],
}

impl ImuLogRecord {
    pub fn new(imu_id: &str, s: &ImuSample) -> Self {
        Self {
            imu_id: imu_id.to_string(),
            t: s.t,
            gyro: s.gyro.into(),
            accel: s.accel.into(),
        }
    }

    pub fn sample(&self) -> ImuSample {
        ImuSample::new(self.t, Vector3::from(self.gyro), Vector3::from(self.accel))
    }
}

/// Writes all streams interleaved by time; ties keep stream order.
pub fn write_log<W: Write>(mut out: W, streams: &[ImuStream]) -> Result<()> {
    let mut order: Vec<(usize, usize)> = streams
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.samples.len()).map(move |k| (i, k)))
        .collect();
    order.sort_by(|a, b| {
        streams[a.0].samples[a.1]
            .t
            .total_cmp(&streams[b.0].samples[b.1].t)
            .then(a.0.cmp(&b.0))
    });
    for (i, k) in order {
        let rec = ImuLogRecord::new(&streams[i].id, &streams[i].samples[k]);
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a log back into per-IMU streams in order of first appearance.
/// Blank lines are skipped.
pub fn read_log<R: BufRead>(input: R) -> Result<Vec<ImuStream>> {
    let mut streams: Vec<ImuStream> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImuLogRecord = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
        let sample = rec.sample();
        if !sample.is_finite() {
            return Err(Error::InvalidInput(format!("line {}: non-finite value", lineno + 1)));
        }
        let stream = match streams.iter_mut().position(|s| s.id == rec.imu_id) {
            Some(i) => &mut streams[i],
            None => {
                streams.push(ImuStream { id: rec.imu_id.clone(), samples: Vec::new() });
                streams.last_mut().expect("just pushed")
            }
        };
        if let Some(prev) = stream.samples.last() {
            if !(sample.t > prev.t) {
                return Err(Error::InvalidInput(format!(
                    "line {}: timestamps of {} are not strictly increasing",
                    lineno + 1,
                    rec.imu_id
                )));
            }
        }
        stream.samples.push(sample);
    }
    Ok(streams)
}

pub fn find_stream<'a>(streams: &'a [ImuStream], id: &str) -> Result<&'a ImuStream> {
    streams
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::InvalidInput(format!("log has no IMU {id}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = ImuStream {
            id: "a".into(),
            samples: vec![
                ImuSample::new(0.0, Vector3::new(0.1, 1.0 / 3.0, -2e-300), Vector3::new(9.80665, 0.0, 1e17)),
                ImuSample::new(0.02, Vector3::new(std::f64::consts::PI, 0.0, -0.0), Vector3::new(1.0 / 7.0, 5e-324, 2.0)),
            ],
        };
        let b = ImuStream {
            id: "b".into(),
            samples: vec![ImuSample::new(0.01, Vector3::x(), Vector3::y())],
        };
        let mut buf = Vec::new();
        write_log(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let ids: Vec<&str> = text.lines().map(|l| if l.contains("\"a\"") { "a" } else { "b" }).collect();
        assert_eq!(ids, ["a", "b", "a"]);
        let back = read_log(buf.as_slice()).unwrap();
        for (x, y) in back[0].samples.iter().zip(&a.samples) {
            assert_eq!(x.t.to_bits(), y.t.to_bits());
            assert_eq!(x.gyro.map(f64::to_bits), y.gyro.map(f64::to_bits));
            assert_eq!(x.accel.map(f64::to_bits), y.accel.map(f64::to_bits));
        }
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(read_log("{nope}\n".as_bytes()).is_err());
        let dup = "{\"imu_id\":\"a\",\"t\":1.0,\"gyro\":[0,0,0],\"accel\":[0,0,0]}\n\
                   {\"imu_id\":\"a\",\"t\":1.0,\"gyro\":[0,0,0],\"accel\":[0,0,0]}\n";
        assert!(read_log(dup.as_bytes()).is_err());
        assert!(read_log("\n\n".as_bytes()).unwrap().is_empty());
    }
}
