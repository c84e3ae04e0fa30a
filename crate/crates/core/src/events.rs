//! Photon-event stream files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! header  32 bytes: b"CWHOMEV1" | u64 duration_ps | u64 record_count | 8 zero bytes
//! record  16 bytes: u64 timestamp_ps | u8 channel (0 = A, 1 = B) | 7 zero bytes
//! ```
//!
//! The CSV form has a `timestamp_ps,channel` header and `A`/`B` channel labels.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lasersim::{Channel, PhotonEvent};

pub const MAGIC: &[u8; 8] = b"CWHOMEV1";
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 16;

/// Events of one run, both channels, in time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFile {
    pub duration_ps: u64,
    pub events: Vec<PhotonEvent>,
}

impl EventFile {
    /// Splits into per-channel timestamp streams.
    pub fn split(&self) -> (Vec<u64>, Vec<u64>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for e in &self.events {
            match e.channel {
                Channel::A => a.push(e.timestamp),
                Channel::B => b.push(e.timestamp),
            }
        }
        (a, b)
    }

    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        out.write_all(MAGIC)?;
        out.write_all(&self.duration_ps.to_le_bytes())?;
        out.write_all(&(self.events.len() as u64).to_le_bytes())?;
        out.write_all(&[0u8; 8])?;
        let mut record = [0u8; RECORD_LEN];
        for e in &self.events {
            record[..8].copy_from_slice(&e.timestamp.to_le_bytes());
            record[8] = e.channel.code();
            out.write_all(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut header = [0u8; HEADER_LEN];
        input.read_exact(&mut header).map_err(|_| Error::Format("truncated event header".into()))?;
        if &header[..8] != MAGIC {
            return Err(Error::Format("bad magic; not a CWHOMEV1 event file".into()));
        }
        let duration_ps = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let count = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let mut events = Vec::with_capacity(count.min(1 << 28) as usize);
        let mut record = [0u8; RECORD_LEN];
        for i in 0..count {
            input.read_exact(&mut record).map_err(|_| Error::Format(format!("truncated at record {i}")))?;
            let timestamp = u64::from_le_bytes(record[..8].try_into().unwrap());
            let channel = Channel::from_code(record[8])
                .ok_or_else(|| Error::Format(format!("record {i}: unknown channel {}", record[8])))?;
            events.push(PhotonEvent { timestamp, channel });
        }
        Ok(EventFile { duration_ps, events })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "timestamp_ps,channel")?;
        for e in &self.events {
            let label = match e.channel {
                Channel::A => 'A',
                Channel::B => 'B',
            };
            writeln!(out, "{},{}", e.timestamp, label)?;
        }
        out.flush()?;
        Ok(())
    }

    /// CSV carries no duration; it is taken as the last timestamp.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut events = Vec::new();
        for (lineno, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("timestamp")) {
                continue;
            }
            let (ts, ch) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected `timestamp_ps,channel`", lineno + 1)))?;
            let timestamp =
                ts.trim().parse().map_err(|_| Error::Format(format!("line {}: bad timestamp", lineno + 1)))?;
            let channel = match ch.trim() {
                "A" | "a" | "0" => Channel::A,
                "B" | "b" | "1" => Channel::B,
                other => return Err(Error::Format(format!("line {}: unknown channel `{other}`", lineno + 1))),
            };
            events.push(PhotonEvent { timestamp, channel });
        }
        let duration_ps = events.iter().map(|e| e.timestamp).max().unwrap_or(0);
        Ok(EventFile { duration_ps, events })
    }

    /// Reads either format, choosing by the magic bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            Self::read_csv(bytes.as_slice())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventFile {
        EventFile {
            duration_ps: 1_000_000,
            events: vec![
                PhotonEvent { timestamp: 5, channel: Channel::A },
                PhotonEvent { timestamp: 7, channel: Channel::B },
                PhotonEvent { timestamp: 900_000, channel: Channel::A },
            ],
        }
    }

    #[test]
    fn binary_layout() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 3 * RECORD_LEN);
        assert_eq!(&buf[..8], b"CWHOMEV1");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1_000_000);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 3);
        assert!(buf[24..32].iter().all(|&b| b == 0));
        let rec = &buf[HEADER_LEN + RECORD_LEN..HEADER_LEN + 2 * RECORD_LEN];
        assert_eq!(u64::from_le_bytes(rec[..8].try_into().unwrap()), 7);
        assert_eq!(rec[8], 1);
        assert!(rec[9..].iter().all(|&b| b == 0));
        assert_eq!(EventFile::read_binary(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(EventFile::read_binary(&b"NOTMAGIC"[..]).is_err());
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(EventFile::read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_form() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_ps,channel\n5,A\n7,B\n"));
        let back = EventFile::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.events, sample().events);
        let (a, b) = back.split();
        assert_eq!(a, vec![5, 900_000]);
        assert_eq!(b, vec![7]);
        assert!(EventFile::read_csv(&b"timestamp_ps,channel\n1,C\n"[..]).is_err());
    }
}
