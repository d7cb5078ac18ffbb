//! Channel-tagged photon arrival streams and their on-disk formats.
//!
//! Text: one `channel timestamp_ps` record per line, `#` starts a comment.
//! Comments of the form `# resolution_ps: 4`, `# duration_ps: 1000000` and
//! `# channels: 0,1` act as header directives.
//!
//! Binary: the 8-byte magic `PTAG0001`, a little-endian `u32` resolution in
//! picoseconds, then 8-byte records of one channel byte followed by a 7-byte
//! little-endian tick count.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"PTAG0001";
/// Largest tick count representable in a 7-byte binary record.
pub const MAX_BINARY_TICKS: u64 = (1 << 56) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimetagFormat {
    Text,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhotonRecord {
    pub timestamp: u64,
    pub channel: u8,
}

impl PhotonRecord {
    pub fn new(channel: u8, timestamp: u64) -> Self {
        Self { timestamp, channel }
    }
}

/// A globally time-ordered photon stream. Ties in timestamp are ordered by
/// channel index.
#[derive(Debug, Clone)]
pub struct PhotonStream {
    resolution_ps: u32,
    records: Vec<PhotonRecord>,
    duration: u64,
    sorted_flag: bool,
    channels: Vec<u8>,
}

/// Equality ignores `sorted_flag`, which records how the input arrived rather
/// than what the stream contains.
impl PartialEq for PhotonStream {
    fn eq(&self, other: &Self) -> bool {
        self.resolution_ps == other.resolution_ps
            && self.duration == other.duration
            && self.channels == other.channels
            && self.records == other.records
    }
}

impl PhotonStream {
    /// Builds a stream, stable-sorting the records if needed.
    ///
    /// `duration` defaults to the last timestamp; an explicit duration must
    /// not be smaller than it.
    pub fn from_records(
        mut records: Vec<PhotonRecord>,
        resolution_ps: u32,
        channels: &[u8],
        duration: Option<u64>,
    ) -> Result<Self> {
        if resolution_ps == 0 {
            return Err(Error::InvalidArgument("resolution must be positive".into()));
        }
        let mut declared = channels.to_vec();
        declared.sort_unstable();
        declared.dedup();
        if let Some(r) = records.iter().find(|r| declared.binary_search(&r.channel).is_err()) {
            return Err(Error::UnknownChannel { channel: r.channel, declared });
        }
        let sorted_flag = !records.windows(2).all(|w| w[0] <= w[1]);
        if sorted_flag {
            records.sort();
        }
        let last = records.last().map_or(0, |r| r.timestamp);
        let duration = match duration {
            Some(d) if d < last => {
                return Err(Error::InvalidArgument(format!(
                    "declared duration {d} precedes the last timestamp {last}"
                )))
            }
            Some(d) => d,
            None => last,
        };
        Ok(Self { resolution_ps, records, duration, sorted_flag, channels: declared })
    }

    pub fn empty(resolution_ps: u32, channels: &[u8]) -> Self {
        Self::from_records(Vec::new(), resolution_ps.max(1), channels, Some(0))
            .expect("an empty stream is always valid")
    }

    pub fn resolution_ps(&self) -> u32 {
        self.resolution_ps
    }

    pub fn records(&self) -> &[PhotonRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Acquisition span in ticks.
    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn sorted_flag(&self) -> bool {
        self.sorted_flag
    }

    pub fn channels(&self) -> &[u8] {
        &self.channels
    }

    /// Timestamps of one channel, ascending.
    pub fn channel_timestamps(&self, channel: u8) -> Vec<u64> {
        self.records.iter().filter(|r| r.channel == channel).map(|r| r.timestamp).collect()
    }

    pub fn count(&self, channel: u8) -> usize {
        self.records.iter().filter(|r| r.channel == channel).count()
    }

    /// Returns a copy with every timestamp moved by `offset` ticks.
    pub fn shifted(&self, offset: u64) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                r.timestamp
                    .checked_add(offset)
                    .map(|t| PhotonRecord::new(r.channel, t))
                    .ok_or_else(|| Error::InvalidArgument("timestamp overflow".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(records, self.resolution_ps, &self.channels, Some(self.duration + offset))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// Channels a record may carry. Falls back to a `# channels:` directive,
    /// then to the HBT pair `{0, 1}`.
    pub channels: Option<Vec<u8>>,
    /// Overrides any resolution found in the input.
    pub resolution_ps: Option<u32>,
    /// Overrides any duration found in the input.
    pub duration: Option<u64>,
}


pub fn read_timetags<R: Read>(mut source: R, format: TimetagFormat, opts: &ReadOptions) -> Result<PhotonStream> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    match format {
        TimetagFormat::Text => parse_text(&bytes, opts),
        TimetagFormat::Binary => parse_binary(&bytes, opts),
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

fn parse_text(bytes: &[u8], opts: &ReadOptions) -> Result<PhotonStream> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(e.valid_up_to(), "invalid UTF-8"))?;
    let mut resolution = 1u32;
    let mut duration_ps: Option<u64> = None;
    let mut channels = vec![0u8, 1];
    let mut raw: Vec<(usize, u8, u64)> = Vec::new();

    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = directive(comment) {
                let bad = |_| parse_err(start, format!("bad value for directive {key}"));
                match key {
                    "resolution_ps" => resolution = value.parse().map_err(bad)?,
                    "duration_ps" => duration_ps = Some(value.parse().map_err(bad)?),
                    "channels" => {
                        channels = value
                            .split(',')
                            .map(|c| c.trim().parse::<u8>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(bad)?;
                    }
                    _ => {}
                }
            }
            continue;
        }
        let content = trimmed.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let (Some(ch), Some(ts), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(start, format!("expected `channel timestamp_ps`, found {content:?}")));
        };
        let ch: u8 = ch.parse().map_err(|_| parse_err(start, format!("bad channel {ch:?}")))?;
        let ts: u64 = ts.parse().map_err(|_| parse_err(start, format!("bad timestamp {ts:?}")))?;
        raw.push((start, ch, ts));
    }

    if let Some(declared) = &opts.channels {
        channels = declared.clone();
    }
    let resolution = opts.resolution_ps.unwrap_or(resolution);
    if resolution == 0 {
        return Err(parse_err(0, "resolution must be positive"));
    }
    let to_ticks = |off: usize, ps: u64| -> Result<u64> {
        if !ps.is_multiple_of(resolution as u64) {
            return Err(parse_err(off, format!("timestamp {ps} ps is not a multiple of the {resolution} ps resolution")));
        }
        Ok(ps / resolution as u64)
    };

    let mut records = Vec::with_capacity(raw.len());
    for (off, ch, ps) in raw {
        if !channels.contains(&ch) {
            return Err(Error::UnknownChannel { channel: ch, declared: channels });
        }
        records.push(PhotonRecord::new(ch, to_ticks(off, ps)?));
    }
    let duration = match opts.duration {
        Some(d) => Some(d),
        None => duration_ps.map(|d| to_ticks(0, d)).transpose()?,
    };
    PhotonStream::from_records(records, resolution, &channels, duration)
}

fn directive(comment: &str) -> Option<(&str, &str)> {
    let comment = comment.trim();
    let (key, value) = comment.split_once(':').or_else(|| comment.split_once(char::is_whitespace))?;
    let key = key.trim();
    matches!(key, "resolution_ps" | "duration_ps" | "channels").then(|| (key, value.trim()))
}

fn parse_binary(bytes: &[u8], opts: &ReadOptions) -> Result<PhotonStream> {
    let channels = opts.channels.clone().unwrap_or_else(|| vec![0, 1]);
    if bytes.is_empty() {
        return Ok(PhotonStream::empty(opts.resolution_ps.unwrap_or(1), &channels));
    }
    if bytes.len() < 12 || &bytes[..8] != BINARY_MAGIC {
        return Err(parse_err(0, "missing PTAG0001 header"));
    }
    let file_resolution = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let resolution = opts.resolution_ps.unwrap_or(file_resolution);
    let body = &bytes[12..];
    if !body.len().is_multiple_of(8) {
        let offset = 12 + body.len() / 8 * 8;
        return Err(parse_err(offset, "truncated record"));
    }
    let mut records = Vec::with_capacity(body.len() / 8);
    for chunk in body.chunks_exact(8) {
        let channel = chunk[0];
        if !channels.contains(&channel) {
            return Err(Error::UnknownChannel { channel, declared: channels });
        }
        let mut ts = [0u8; 8];
        ts[..7].copy_from_slice(&chunk[1..]);
        records.push(PhotonRecord::new(channel, u64::from_le_bytes(ts)));
    }
    PhotonStream::from_records(records, resolution, &channels, opts.duration)
}

pub fn write_timetags<W: Write>(stream: &PhotonStream, mut dest: W, format: TimetagFormat) -> Result<()> {
    match format {
        TimetagFormat::Text => {
            let res = stream.resolution_ps as u64;
            let channels: Vec<String> = stream.channels.iter().map(|c| c.to_string()).collect();
            writeln!(dest, "# resolution_ps: {res}")?;
            writeln!(dest, "# duration_ps: {}", stream.duration * res)?;
            writeln!(dest, "# channels: {}", channels.join(","))?;
            let mut buf = std::io::BufWriter::new(&mut dest);
            for r in &stream.records {
                writeln!(buf, "{} {}", r.channel, r.timestamp * res)?;
            }
            buf.flush()?;
        }
        TimetagFormat::Binary => {
            let mut out = Vec::with_capacity(12 + 8 * stream.records.len());
            out.extend_from_slice(BINARY_MAGIC);
            out.extend_from_slice(&stream.resolution_ps.to_le_bytes());
            for r in &stream.records {
                if r.timestamp > MAX_BINARY_TICKS {
                    return Err(Error::InvalidArgument(format!(
                        "timestamp {} does not fit in 7 bytes",
                        r.timestamp
                    )));
                }
                out.push(r.channel);
                out.extend_from_slice(&r.timestamp.to_le_bytes()[..7]);
            }
            dest.write_all(&out)?;
        }
    }
    Ok(())
}
