//! Multi-channel discrete-time signals and their CSV form.
//!
//! The CSV layout is one header row with channel names, then one row per
//! time step and one column per channel.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    names: Vec<String>,
    channels: Vec<Vec<f64>>,
    pub dt_label: String,
}

impl EventStream {
    pub fn new(names: Vec<String>, channels: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != channels.len() {
            return Err(Error::DimensionMismatch {
                what: "channel names",
                expected: channels.len(),
                found: names.len(),
            });
        }
        if let Some(first) = channels.first() {
            for ch in &channels[1..] {
                if ch.len() != first.len() {
                    return Err(Error::DimensionMismatch {
                        what: "channel length",
                        expected: first.len(),
                        found: ch.len(),
                    });
                }
            }
        }
        Ok(Self {
            names,
            channels,
            dt_label: String::new(),
        })
    }

    /// Stream with generated names `prefix1`, `prefix2`, ...
    pub fn from_channels(prefix: &str, channels: Vec<Vec<f64>>) -> Result<Self> {
        let names = (1..=channels.len()).map(|i| format!("{prefix}{i}")).collect();
        Self::new(names, channels)
    }

    pub fn zeros(prefix: &str, channels: usize, len: usize) -> Self {
        Self::from_channels(prefix, vec![vec![0.0; len]; channels]).expect("equal lengths")
    }

    /// Impulse of height one on `channel` at time `at`.
    pub fn impulse(channels: usize, channel: usize, at: usize, len: usize) -> Self {
        let mut s = Self::zeros("u", channels, len);
        s.channels[channel][at] = 1.0;
        s
    }

    pub fn with_dt_label(mut self, label: impl Into<String>) -> Self {
        self.dt_label = label.into();
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.channels[i]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Sample vector at time `t`.
    pub fn at(&self, t: usize) -> Vec<f64> {
        self.channels.iter().map(|c| c[t]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.channels.iter().map(|c| c.iter().sum::<f64>() / n).collect()
    }

    /// Mean over time of |a_t - b_t|² for t ≥ `burn_in`.
    pub fn mean_squared_distance(&self, other: &EventStream, burn_in: usize) -> Result<f64> {
        if self.channel_count() != other.channel_count() || self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                what: "stream shape",
                expected: self.channel_count() * self.len(),
                found: other.channel_count() * other.len(),
            });
        }
        let len = self.len();
        if burn_in >= len {
            return Err(Error::Config(format!(
                "burn-in {burn_in} leaves no samples in a stream of length {len}"
            )));
        }
        let mut acc = 0.0;
        for (a, b) in self.channels.iter().zip(&other.channels) {
            acc += a[burn_in..]
                .iter()
                .zip(&b[burn_in..])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
        Ok(acc / (len - burn_in) as f64)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut channels = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, header has {}",
                    row + 2,
                    rec.len(),
                    names.len()
                )));
            }
            for (ch, field) in channels.iter_mut().zip(rec.iter()) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {field:?}", row + 2)))?;
                ch.push(v);
            }
        }
        Self::new(names, channels)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.names)?;
        for t in 0..self.len() {
            wtr.write_record(self.channels.iter().map(|c| format_value(c[t])))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Integers are printed without a fractional part, other values with the
/// shortest representation that round-trips.
fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let s = EventStream::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 0.125], vec![-3.0, 0.1, 7.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a,b\n1,-3\n"));
        let back = EventStream::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unequal_channels_rejected() {
        let err = EventStream::from_channels("u", vec![vec![1.0], vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn bad_csv_field_is_a_parse_error() {
        let err = EventStream::read_csv("x\n1\nfoo\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }
}
