//! Dataset persistence, deterministic splits, and raw capture ingestion.
//!
//! Dataset files use a fixed little-endian layout:
//!
//! ```text
//! magic "RFSD" | version u32 | devices u32 | sample_len u32 |
//! record count u64 | generation digest [u8; 32]
//! per record: label u16 | source tag u16 | sample_len x (I f32, Q f32)
//! ```
//!
//! A JSON sidecar (`<path>.json`) mirrors the header and carries free-form
//! provenance text. When present at load time, its numeric fields and
//! digest are cross-checked against the binary header.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed::derive_rng;
use crate::semisup::{LabeledExample, LabeledSet, UnlabeledSample, UnlabeledSet};
use crate::signal::ComplexSignal;

const MAGIC: [u8; 4] = *b"RFSD";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 56;

/// One labeled signal record.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub signal: ComplexSignal,
    /// Device index in `0..num_devices`.
    pub label: u16,
    /// Free-form origin tag (burst index for ingested captures, 0 for
    /// simulated records).
    pub source: u16,
}

/// A collection of equally-long labeled records.
///
/// Signals are kept on the `f32` grid so that file round-trips are
/// bit-exact. Every device index in `0..num_devices` appears at least
/// once.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
    pub num_devices: u32,
    pub sample_len: usize,
    /// SHA-256 digest of whatever configuration generated the records.
    pub digest: [u8; 32],
    /// Human-readable origin description (stored in the sidecar only).
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        records: Vec<DatasetRecord>,
        num_devices: u32,
        sample_len: usize,
        digest: [u8; 32],
    ) -> Result<Self> {
        let records = records
            .into_iter()
            .map(|r| DatasetRecord {
                signal: r.signal.quantize_f32(),
                ..r
            })
            .collect();
        let ds = Self {
            records,
            num_devices,
            sample_len,
            digest,
            provenance: String::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_provenance(mut self, text: impl Into<String>) -> Self {
        self.provenance = text.into();
        self
    }

    fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::config("dataset has no records"));
        }
        if self.num_devices == 0 || self.num_devices > u16::MAX as u32 + 1 {
            return Err(Error::config("device count out of range"));
        }
        let mut seen = vec![false; self.num_devices as usize];
        for (i, r) in self.records.iter().enumerate() {
            if r.signal.len() != self.sample_len {
                return Err(Error::ShapeMismatch(format!(
                    "record {i} has {} samples, dataset sample_len is {}",
                    r.signal.len(),
                    self.sample_len
                )));
            }
            if r.label as u32 >= self.num_devices {
                return Err(Error::config(format!(
                    "record {i} label {} exceeds device count {}",
                    r.label, self.num_devices
                )));
            }
            seen[r.label as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!(
                "device {missing} has no records"
            )));
        }
        Ok(())
    }

    /// Record indices per device, in file order.
    pub fn indices_by_device(&self) -> Vec<Vec<usize>> {
        let mut by_device = vec![Vec::new(); self.num_devices as usize];
        for (i, r) in self.records.iter().enumerate() {
            by_device[r.label as usize].push(i);
        }
        by_device
    }

    fn subset(&self, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        let mut ds = Self::new(records, self.num_devices, self.sample_len, self.digest)?;
        ds.provenance = self.provenance.clone();
        Ok(ds)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    magic: String,
    version: u32,
    num_devices: u32,
    sample_len: u32,
    record_count: u64,
    digest_hex: String,
    provenance: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn digest_hex(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the dataset and its JSON sidecar.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut buf = Vec::with_capacity(
        HEADER_LEN as usize + dataset.records.len() * (4 + 8 * dataset.sample_len),
    );
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&dataset.num_devices.to_le_bytes());
    buf.extend_from_slice(&(dataset.sample_len as u32).to_le_bytes());
    buf.extend_from_slice(&(dataset.records.len() as u64).to_le_bytes());
    buf.extend_from_slice(&dataset.digest);
    for r in &dataset.records {
        buf.extend_from_slice(&r.label.to_le_bytes());
        buf.extend_from_slice(&r.source.to_le_bytes());
        for s in r.signal.samples() {
            buf.extend_from_slice(&(s.re as f32).to_le_bytes());
            buf.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
    }
    std::fs::write(path, &buf)?;

    let sidecar = Sidecar {
        magic: "RFSD".into(),
        version: FORMAT_VERSION,
        num_devices: dataset.num_devices,
        sample_len: dataset.sample_len as u32,
        record_count: dataset.records.len() as u64,
        digest_hex: digest_hex(&dataset.digest),
        provenance: dataset.provenance.clone(),
    };
    std::fs::write(
        sidecar_path(path),
        serde_json::to_vec_pretty(&sidecar)?,
    )?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.buf.len() {
            return Err(Error::format(
                self.offset as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let out = &self.buf[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Reads a dataset file written by [`save_dataset`].
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let buf = std::fs::read(path)?;
    let mut r = Reader {
        buf: &buf,
        offset: 0,
    };

    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic (expected \"RFSD\")"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported format version {version}"),
        ));
    }
    let num_devices = r.u32("device count")?;
    if num_devices == 0 || num_devices > u16::MAX as u32 + 1 {
        return Err(Error::format(8, format!("device count {num_devices} out of range")));
    }
    let sample_len = r.u32("sample length")? as usize;
    if sample_len == 0 || sample_len > 1 << 24 {
        return Err(Error::format(12, format!("sample length {sample_len} out of range")));
    }
    let record_count = r.u64("record count")?;
    if record_count == 0 {
        return Err(Error::format(16, "record count is zero"));
    }
    let expected = record_count
        .checked_mul(4 + 8 * sample_len as u64)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(16, "record count overflows the file size"))?;
    if buf.len() as u64 != expected {
        return Err(Error::format(
            16,
            format!(
                "file size {} does not match header (expected {expected})",
                buf.len()
            ),
        ));
    }
    let digest: [u8; 32] = r.take(32, "digest")?.try_into().unwrap();

    let mut records = Vec::with_capacity(record_count as usize);
    let mut seen = vec![false; num_devices as usize];
    for i in 0..record_count {
        let label = r.u16("record label")?;
        let source = r.u16("record source tag")?;
        if label as u32 >= num_devices {
            return Err(Error::format(
                (HEADER_LEN + i * (4 + 8 * sample_len as u64)) as u64,
                format!("record {i} label {label} exceeds device count {num_devices}"),
            ));
        }
        seen[label as usize] = true;
        let mut samples = Vec::with_capacity(sample_len);
        for _ in 0..sample_len {
            let re = r.f32("I sample")?;
            let im = r.f32("Q sample")?;
            samples.push(Complex64::new(re as f64, im as f64));
        }
        records.push(DatasetRecord {
            signal: ComplexSignal::new(samples)?,
            label,
            source,
        });
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::format(
            8,
            format!("device {missing} declared in header but absent from records"),
        ));
    }

    let provenance = match std::fs::read(sidecar_path(path)) {
        Ok(bytes) => {
            let sidecar: Sidecar = serde_json::from_slice(&bytes)
                .map_err(|e| Error::format(0, format!("sidecar unreadable: {e}")))?;
            if sidecar.num_devices != num_devices
                || sidecar.sample_len as usize != sample_len
                || sidecar.record_count != record_count
                || sidecar.digest_hex != digest_hex(&digest)
            {
                return Err(Error::format(
                    0,
                    "sidecar metadata disagrees with binary header",
                ));
            }
            sidecar.provenance
        }
        Err(_) => String::new(),
    };

    let mut ds = Dataset::new(records, num_devices, sample_len, digest)?;
    ds.provenance = provenance;
    Ok(ds)
}

/// Train/validation/test proportions plus the semi-supervised selection
/// sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Ratio parts for train : validation : test.
    pub ratios: (u32, u32, u32),
    /// Labeled examples per device (M).
    pub labeled_per_device: usize,
    /// Unlabeled samples per device (N).
    pub unlabeled_per_device: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: (3, 1, 1),
            labeled_per_device: 10,
            unlabeled_per_device: 250,
            seed: 0,
        }
    }
}

/// Stratified split into train/validation/test at `spec.ratios`.
///
/// Each device's records are shuffled with a per-device RNG stream and
/// partitioned; the three outputs are disjoint and their union is the
/// input record multiset.
pub fn split_dataset(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (r_train, r_val, r_test) = spec.ratios;
    let parts = (r_train + r_val + r_test) as usize;
    if r_train == 0 || r_val == 0 || r_test == 0 {
        return Err(Error::config("split ratios must all be positive"));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (device, mut indices) in dataset.indices_by_device().into_iter().enumerate() {
        if indices.len() % parts != 0 {
            return Err(Error::config(format!(
                "device {device} has {} records, not divisible by ratio total {parts}",
                indices.len()
            )));
        }
        let unit = indices.len() / parts;
        let mut rng = derive_rng(spec.seed, device as u64);
        indices.shuffle(&mut rng);
        let n_train = unit * r_train as usize;
        let n_val = unit * r_val as usize;
        train.extend_from_slice(&indices[..n_train]);
        val.extend_from_slice(&indices[n_train..n_train + n_val]);
        test.extend_from_slice(&indices[n_train + n_val..]);
    }
    Ok((
        dataset.subset(train)?,
        dataset.subset(val)?,
        dataset.subset(test)?,
    ))
}

/// Selects M labeled examples and N disjoint unlabeled samples per device
/// from a training split. True labels of the unlabeled samples are
/// retained for diagnostics only.
pub fn select_semisup(
    train: &Dataset,
    labeled_per_device: usize,
    unlabeled_per_device: usize,
    seed: u64,
) -> Result<(LabeledSet, UnlabeledSet)> {
    if labeled_per_device == 0 {
        return Err(Error::config("need at least one labeled example per device"));
    }
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (device, mut indices) in train.indices_by_device().into_iter().enumerate() {
        if labeled_per_device + unlabeled_per_device > indices.len() {
            return Err(Error::config(format!(
                "device {device}: M + N = {} exceeds its {} training records",
                labeled_per_device + unlabeled_per_device,
                indices.len()
            )));
        }
        let mut rng = derive_rng(seed, device as u64);
        indices.shuffle(&mut rng);
        for &i in &indices[..labeled_per_device] {
            labeled.push(LabeledExample {
                signal: train.records[i].signal.clone(),
                label: train.records[i].label,
            });
        }
        for &i in &indices[labeled_per_device..labeled_per_device + unlabeled_per_device] {
            unlabeled.push(UnlabeledSample {
                id: 0, // assigned below
                signal: train.records[i].signal.clone(),
                withheld_label: Some(train.records[i].label),
            });
        }
    }
    for (id, sample) in unlabeled.iter_mut().enumerate() {
        sample.id = id as u32;
    }
    Ok((
        LabeledSet::new(labeled, train.num_devices as usize)?,
        UnlabeledSet::new(unlabeled)?,
    ))
}

/// Where each burst lives inside a raw capture file, in complex samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstExtent {
    /// First complex sample of the steady-state extent.
    pub start_sample: u64,
    /// Steady-state length in complex samples.
    pub num_samples: u64,
    /// Device label for every slice of this burst.
    pub device: u16,
}

/// Caller-provided description of a raw interleaved-I/Q capture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureLayout {
    pub num_devices: u32,
    pub bursts: Vec<BurstExtent>,
}

/// Slices random fixed-length windows out of each declared burst of a raw
/// 32-bit little-endian interleaved I/Q capture.
///
/// Windows never cross burst bounds; start offsets are uniform over the
/// valid placements. Bursts shorter than `slice_len` are skipped; the
/// second return value counts them.
pub fn ingest_iq_capture(
    path: &Path,
    layout: &CaptureLayout,
    slice_len: usize,
    slices_per_burst: usize,
    seed: u64,
) -> Result<(Dataset, usize)> {
    if layout.bursts.is_empty() {
        return Err(Error::config("capture layout declares no bursts"));
    }
    if layout.bursts.len() > u16::MAX as usize + 1 {
        return Err(Error::config("too many bursts for a u16 source tag"));
    }
    if slice_len == 0 || slices_per_burst == 0 {
        return Err(Error::config("slice_len and slices_per_burst must be positive"));
    }
    for (i, b) in layout.bursts.iter().enumerate() {
        if b.device as u32 >= layout.num_devices {
            return Err(Error::config(format!(
                "burst {i} labels device {} but layout declares {} devices",
                b.device, layout.num_devices
            )));
        }
    }

    let raw = std::fs::read(path)?;
    if raw.len() % 8 != 0 {
        return Err(Error::format(
            raw.len() as u64,
            "capture length is not a whole number of I/Q sample pairs",
        ));
    }
    let total_samples = (raw.len() / 8) as u64;

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (burst_idx, burst) in layout.bursts.iter().enumerate() {
        if burst.start_sample + burst.num_samples > total_samples {
            return Err(Error::format(
                burst.start_sample * 8,
                format!("burst {burst_idx} extends past end of capture"),
            ));
        }
        if (burst.num_samples as usize) < slice_len {
            skipped += 1;
            continue;
        }
        let mut rng = derive_rng(seed, burst_idx as u64);
        let max_start = burst.num_samples as usize - slice_len;
        for _ in 0..slices_per_burst {
            let begin = burst.start_sample as usize + rng.random_range(0..=max_start);
            let mut samples = Vec::with_capacity(slice_len);
            for s in 0..slice_len {
                let byte = (begin + s) * 8;
                let re = f32::from_le_bytes(raw[byte..byte + 4].try_into().unwrap());
                let im = f32::from_le_bytes(raw[byte + 4..byte + 8].try_into().unwrap());
                samples.push(Complex64::new(re as f64, im as f64));
            }
            records.push(DatasetRecord {
                signal: ComplexSignal::new(samples)?,
                label: burst.device,
                source: burst_idx as u16,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::config(
            "every declared burst was shorter than slice_len",
        ));
    }

    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(layout)?);
    let digest: [u8; 32] = hasher.finalize().into();

    let ds = Dataset::new(records, layout.num_devices, slice_len, digest)?
        .with_provenance(format!(
            "ingested capture {} ({} bursts, {slices_per_burst} slices of {slice_len})",
            path.display(),
            layout.bursts.len()
        ));
    Ok((ds, skipped))
}
