//! Columnar trace encoding (`.hstrace`) and the storage-overhead probe.
//!
//! The encoding is deliberately simple: per series, a small header, then the
//! timestamp column as deltas, then the value column as raw 64-bit floats.
//! On a regular grid the delta column is a run of identical integers, which
//! is what lets a general-purpose LZ codec flatten the timestamp overhead
//! and expose how much of the byte growth at finer granularities is real
//! information rather than bookkeeping.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{self, MetricSeries, Sample};

const MAGIC: &[u8; 4] = b"HSTR";
const VERSION: u16 = 1;
/// Canonical quiet-NaN bit pattern marking a missing value in the value
/// column. Present values are finite by series invariant, so the marker can
/// never collide with data.
const MISSING_BITS: u64 = 0x7ff8_0000_0000_0000;

/// Encodes a set of series into the `.hstrace` columnar layout. The output
/// is a pure function of the input, byte for byte.
pub fn encode_columnar(series: &[MetricSeries]) -> Result<Vec<u8>> {
    if series.is_empty() {
        return Err(Error::RejectedInput("nothing to encode".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(u32::try_from(series.len()).map_err(|_| {
        Error::RejectedInput(format!("{} series exceed the format limit", series.len()))
    })?)
    .to_le_bytes());

    for s in series {
        write_str(&mut out, &s.node_id)?;
        write_str(&mut out, &s.metric_name)?;
        out.extend_from_slice(&s.base_interval.to_le_bytes());
        let count = u32::try_from(s.samples.len()).map_err(|_| {
            Error::RejectedInput(format!("{} holds too many samples to encode", s.key()))
        })?;
        out.extend_from_slice(&count.to_le_bytes());

        // Timestamp column: absolute first stamp, then deltas. Strictly
        // increasing timestamps make every delta positive.
        if let Some(first) = s.samples.first() {
            out.extend_from_slice(&first.timestamp.to_le_bytes());
            for pair in s.samples.windows(2) {
                let delta = pair[1].timestamp - pair[0].timestamp;
                let delta = u32::try_from(delta).map_err(|_| {
                    Error::RejectedInput(format!("{}: gap of {delta}s too wide to encode", s.key()))
                })?;
                out.extend_from_slice(&delta.to_le_bytes());
            }
        }

        // Value column.
        for sample in &s.samples {
            let bits = match sample.value {
                Some(v) => v.to_bits(),
                None => MISSING_BITS,
            };
            out.extend_from_slice(&bits.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes an `.hstrace` buffer back into series. Inverse of
/// [`encode_columnar`] bit for bit.
pub fn decode_columnar(buf: &[u8]) -> Result<Vec<MetricSeries>> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::CorruptBuffer("bad magic".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("len checked"));
    if version != VERSION {
        return Err(Error::CorruptBuffer(format!("unsupported version {version}")));
    }
    let series_count = cur.read_u32()?;
    let mut series = Vec::with_capacity(series_count as usize);
    for _ in 0..series_count {
        let node = cur.read_str()?;
        let metric = cur.read_str()?;
        let base_interval = cur.read_u32()?;
        let count = cur.read_u32()? as usize;

        let mut timestamps = Vec::with_capacity(count);
        if count > 0 {
            let first = i64::from_le_bytes(cur.take(8)?.try_into().expect("len checked"));
            timestamps.push(first);
            let mut t = first;
            for _ in 1..count {
                t += i64::from(cur.read_u32()?);
                timestamps.push(t);
            }
        }

        let mut samples = Vec::with_capacity(count);
        for ts in timestamps {
            let bits = u64::from_le_bytes(cur.take(8)?.try_into().expect("len checked"));
            samples.push(Sample {
                timestamp: ts,
                value: if bits == MISSING_BITS { None } else { Some(f64::from_bits(bits)) },
            });
        }
        series.push(
            MetricSeries::new(node, metric, base_interval, samples)
                .map_err(|e| Error::CorruptBuffer(format!("invalid series payload: {e}")))?,
        );
    }
    if cur.pos != buf.len() {
        return Err(Error::CorruptBuffer(format!(
            "{} trailing bytes after last series",
            buf.len() - cur.pos
        )));
    }
    Ok(series)
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u32::try_from(s.len())
        .map_err(|_| Error::RejectedInput(format!("identifier of {} bytes", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptBuffer(format!(
                "needed {n} bytes at offset {}, buffer holds {}",
                self.pos,
                self.buf.len()
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("len checked")))
    }

    fn read_str(&mut self) -> Result<String> {
        let len = self.read_u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::CorruptBuffer("identifier is not UTF-8".into()))
    }
}

/// A pluggable lossless byte codec.
pub trait Codec {
    fn name(&self) -> &'static str;
    fn compress(&self, raw: &[u8]) -> Vec<u8>;
    fn decompress(&self, compressed: &[u8]) -> Result<Vec<u8>>;
}

/// DEFLATE (the LZ77-family default).
pub struct DeflateCodec {
    pub level: u32,
}

impl Default for DeflateCodec {
    fn default() -> Self {
        DeflateCodec { level: 6 }
    }
}

impl Codec for DeflateCodec {
    fn name(&self) -> &'static str {
        "deflate"
    }

    fn compress(&self, raw: &[u8]) -> Vec<u8> {
        let mut enc =
            flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::new(self.level));
        enc.write_all(raw).expect("writing to a Vec cannot fail");
        enc.finish().expect("finishing a Vec-backed encoder cannot fail")
    }

    fn decompress(&self, compressed: &[u8]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        flate2::read::DeflateDecoder::new(compressed)
            .read_to_end(&mut out)
            .map_err(|e| Error::CorruptBuffer(format!("deflate stream: {e}")))?;
        Ok(out)
    }
}

/// Sizes for one granularity of the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageRow {
    pub granularity: u32,
    pub sample_count: u64,
    pub raw_bytes: u64,
    pub compressed_bytes: u64,
}

/// Outcome of [`compression_study`]: per-granularity sizes plus the
/// finest-vs-coarsest ratio pair that summarizes sub-linearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub codec: String,
    /// Sorted by granularity, finest first.
    pub rows: Vec<StorageRow>,
    /// Finest sample count over coarsest sample count.
    pub sample_ratio: f64,
    pub raw_ratio: f64,
    pub compressed_ratio: f64,
}

/// Resamples the corpus to each granularity, encodes, compresses, and
/// reports sizes plus the finest/coarsest growth ratios.
pub fn compression_study(
    series: &[MetricSeries],
    granularities: &[u32],
    codec: &dyn Codec,
) -> Result<StorageReport> {
    if series.is_empty() {
        return Err(Error::RejectedInput("storage study over zero series".into()));
    }
    if granularities.is_empty() {
        return Err(Error::RejectedInput("storage study over zero granularities".into()));
    }
    let mut grans: Vec<u32> = granularities.to_vec();
    grans.sort_unstable();
    grans.dedup();

    let mut rows = Vec::with_capacity(grans.len());
    for g in grans {
        let resampled: Vec<MetricSeries> =
            series.iter().map(|s| trace::resample(s, g)).collect::<Result<_>>()?;
        let sample_count = resampled.iter().map(|s| s.len() as u64).sum();
        let encoded = encode_columnar(&resampled)?;
        let compressed = codec.compress(&encoded);
        rows.push(StorageRow {
            granularity: g,
            sample_count,
            raw_bytes: encoded.len() as u64,
            compressed_bytes: compressed.len() as u64,
        });
    }

    let fine = rows.first().expect("at least one granularity");
    let coarse = rows.last().expect("at least one granularity");
    if coarse.sample_count == 0 {
        return Err(Error::DegenerateInput("coarsest granularity has no samples".into()));
    }
    let report = StorageReport {
        codec: codec.name().to_string(),
        sample_ratio: fine.sample_count as f64 / coarse.sample_count as f64,
        raw_ratio: fine.raw_bytes as f64 / coarse.raw_bytes as f64,
        compressed_ratio: fine.compressed_bytes as f64 / coarse.compressed_bytes as f64,
        rows,
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, presets};

    fn mixed_series() -> Vec<MetricSeries> {
        vec![
            MetricSeries::new(
                "n1",
                "load1",
                15,
                vec![
                    Sample::present(0, 0.25),
                    Sample::missing(15),
                    Sample::present(45, -3.5),
                    Sample::present(60, f64::MIN_POSITIVE),
                ],
            )
            .unwrap(),
            MetricSeries::new("n2", "mem", 60, vec![Sample::present(120, 7.0)]).unwrap(),
            MetricSeries::new("n3", "io", 30, Vec::new()).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_identity() {
        let series = mixed_series();
        let buf = encode_columnar(&series).unwrap();
        assert_eq!(decode_columnar(&buf).unwrap(), series);
    }

    #[test]
    fn encoding_is_deterministic() {
        let series = mixed_series();
        assert_eq!(encode_columnar(&series).unwrap(), encode_columnar(&series).unwrap());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(encode_columnar(&[]), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn corrupt_buffers_rejected() {
        let mut buf = encode_columnar(&mixed_series()).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_columnar(&bad_magic), Err(Error::CorruptBuffer(_))));

        let mut bad_version = buf.clone();
        bad_version[4] = 99;
        assert!(matches!(decode_columnar(&bad_version), Err(Error::CorruptBuffer(_))));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(decode_columnar(truncated), Err(Error::CorruptBuffer(_))));

        buf.push(0);
        assert!(matches!(decode_columnar(&buf), Err(Error::CorruptBuffer(_))));
    }

    #[test]
    fn more_samples_more_raw_bytes() {
        let series = mixed_series();
        let full = encode_columnar(&series).unwrap().len();
        let shorter = vec![series[0].with_samples(series[0].samples[..2].to_vec()).unwrap()];
        let fewer = encode_columnar(&shorter).unwrap().len();
        assert!(fewer < full);
    }

    #[test]
    fn deflate_round_trips() {
        let codec = DeflateCodec::default();
        let buf = encode_columnar(&mixed_series()).unwrap();
        assert_eq!(codec.decompress(&codec.compress(&buf)).unwrap(), buf);
    }

    fn study(spec: &synth::GeneratorSpec) -> StorageReport {
        let (bundle, _) = synth::gen_bundle(spec).unwrap();
        compression_study(bundle.series(), &[15, 600], &DeflateCodec::default()).unwrap()
    }

    #[test]
    fn constant_corpus_compresses_nearly_flat() {
        let mut spec = presets::storage_ar1(1, 2);
        for s in &mut spec.series {
            s.model = synth::MetricModel::Constant { value: 1.5 };
        }
        let report = study(&spec);
        assert!((report.sample_ratio - 40.0).abs() < 1e-9);
        assert!(
            report.compressed_ratio < 0.5 * report.sample_ratio,
            "constant corpus ratio {} not ≪ {}",
            report.compressed_ratio,
            report.sample_ratio
        );
        for row in &report.rows {
            assert!(row.compressed_bytes <= row.raw_bytes);
        }
    }

    #[test]
    fn iid_corpus_tracks_sample_ratio() {
        let report = study(&presets::storage_iid(2, 2));
        assert!(
            (report.compressed_ratio / report.sample_ratio - 1.0).abs() <= 0.2,
            "i.i.d. ratio {} vs sample ratio {}",
            report.compressed_ratio,
            report.sample_ratio
        );
    }

    #[test]
    fn ar1_corpus_grows_sub_linearly() {
        let report = study(&presets::storage_ar1(3, 2));
        assert!((report.sample_ratio - 40.0).abs() < 1e-9);
        assert!(
            report.compressed_ratio < report.sample_ratio,
            "AR(1) corpus ratio {} not sub-linear",
            report.compressed_ratio
        );
    }

    #[test]
    fn rows_sorted_and_full_grid_counts() {
        let (bundle, _) = synth::gen_bundle(&presets::storage_ar1(4, 1)).unwrap();
        let report =
            compression_study(bundle.series(), &[600, 15, 60], &DeflateCodec::default()).unwrap();
        let grans: Vec<u32> = report.rows.iter().map(|r| r.granularity).collect();
        assert_eq!(grans, vec![15, 60, 600]);
        let counts: Vec<u64> = report.rows.iter().map(|r| r.sample_count).collect();
        assert_eq!(counts[0], 2 * 86_400 / 15);
        assert_eq!(counts[0], counts[1] * 4);
        assert_eq!(counts[1], counts[2] * 10);
    }

    #[test]
    fn bad_granularity_propagates() {
        let (bundle, _) = synth::gen_bundle(&presets::storage_ar1(5, 1)).unwrap();
        let err = compression_study(bundle.series(), &[17], &DeflateCodec::default());
        assert!(matches!(err, Err(Error::RejectedInput(_))));
    }
}
