//! Labeled embedding datasets and their on-disk formats.
//!
//! Two encodings are supported:
//!
//! * `EMB1` binary, little-endian: magic `EMB1`, `version: u16 = 1`,
//!   `dim: u16`, `count: u64`, then `count` records of
//!   `label: u8, video_id: u32, frame_id: u32, dim x f32`.
//! * CSV with header `label,video_id,frame_id,e0,...,e{dim-1}`. Floats are
//!   written with 9 significant digits, which is enough to round-trip `f32`
//!   exactly.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::codec::{LeReader, LeWriter};
use crate::error::{Error, Result};
use crate::fsio;
use crate::rng;

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 8;

/// Binary class label. Fake is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    pub fn from_fake(is_fake: bool) -> Label {
        if is_fake {
            Label::Fake
        } else {
            Label::Real
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub label: Label,
    pub video_id: u32,
    pub frame_id: u32,
    pub vector: Vec<f32>,
}

/// Serialization format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` paths are CSV, everything else is EMB1.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DimMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    NonFinite {
        index: usize,
        component: usize,
    },
    DuplicateKey {
        first: usize,
        second: usize,
        video_id: u32,
        frame_id: u32,
    },
    ZeroDim,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimMismatch {
                index,
                expected,
                found,
            } => write!(f, "record {index}: vector length {found}, expected {expected}"),
            Violation::NonFinite { index, component } => {
                write!(f, "record {index}: component {component} is not finite")
            }
            Violation::DuplicateKey {
                first,
                second,
                video_id,
                frame_id,
            } => write!(
                f,
                "records {first} and {second} share (video_id={video_id}, frame_id={frame_id})"
            ),
            Violation::ZeroDim => f.write_str("dataset dim is 0"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Validation(format!(
                "{v} ({} violation(s) total)",
                self.violations.len()
            ))),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violations.as_slice() {
            [] => f.write_str("no violations"),
            [first] => write!(f, "{first}"),
            [first, rest @ ..] => write!(f, "{first} and {} more", rest.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub dim: usize,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingDataset {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            records: Vec::new(),
        }
    }

    /// Builds a dataset and rejects it unless every invariant holds.
    pub fn new(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        let ds = Self { dim, records };
        ds.validate().into_result()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Distinct video ids in ascending order.
    pub fn video_ids(&self) -> Vec<u32> {
        self.records
            .iter()
            .map(|r| r.video_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Row-major `indices.len() x dim` copy of the selected vectors in f64.
    pub fn matrix(&self, indices: &[usize]) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::zeros((indices.len(), self.dim));
        for (row, &i) in m.rows_mut().into_iter().zip(indices) {
            for (dst, &src) in row.into_iter().zip(&self.records[i].vector) {
                *dst = f64::from(src);
            }
        }
        m
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.records.len()).collect()
    }

    /// Checks every record and dataset invariant. Never fails; problems are
    /// returned as data.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if self.dim == 0 {
            violations.push(Violation::ZeroDim);
        }
        let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
        for (index, r) in self.records.iter().enumerate() {
            if r.vector.len() != self.dim {
                violations.push(Violation::DimMismatch {
                    index,
                    expected: self.dim,
                    found: r.vector.len(),
                });
            }
            if let Some(component) = r.vector.iter().position(|v| !v.is_finite()) {
                violations.push(Violation::NonFinite { index, component });
            }
            if let Some(&first) = seen.get(&(r.video_id, r.frame_id)) {
                violations.push(Violation::DuplicateKey {
                    first,
                    second: index,
                    video_id: r.video_id,
                    frame_id: r.frame_id,
                });
            } else {
                seen.insert((r.video_id, r.frame_id), index);
            }
        }
        ValidationReport { violations }
    }
}

pub fn validate(dataset: &EmbeddingDataset) -> ValidationReport {
    dataset.validate()
}

fn encode_binary(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    let dim = u16::try_from(ds.dim)
        .map_err(|_| Error::Format(format!("dim {} does not fit the u16 header field", ds.dim)))?;
    let mut w = LeWriter::new();
    w.buf.reserve(HEADER_LEN + ds.len() * (9 + 4 * ds.dim));
    w.bytes(&EMB_MAGIC);
    w.u16(EMB_VERSION);
    w.u16(dim);
    w.u64(ds.len() as u64);
    for r in &ds.records {
        w.u8(r.label.as_u8());
        w.u32(r.video_id);
        w.u32(r.frame_id);
        for &v in &r.vector {
            w.f32(v);
        }
    }
    Ok(w.buf)
}

fn decode_binary(bytes: &[u8]) -> Result<EmbeddingDataset> {
    if bytes.is_empty() {
        return Err(Error::Format("empty input".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "header needs {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    let mut r = LeReader::new(bytes);
    let magic = r.take(4)?;
    if magic != EMB_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}, expected EMB1")));
    }
    let version = r.u16()?;
    if version != EMB_VERSION {
        return Err(Error::Format(format!("unsupported EMB1 version {version}")));
    }
    let dim = usize::from(r.u16()?);
    if dim == 0 {
        return Err(Error::Format("header dim is 0".into()));
    }
    let count = r.u64()?;
    let record_len = 9 + 4 * dim as u64;
    let expected = count.checked_mul(record_len);
    if expected != Some(r.remaining() as u64) {
        return Err(Error::Corruption(format!(
            "header declares {count} records of dim {dim} ({} payload bytes) but {} bytes follow",
            expected.map_or_else(|| "overflowing".to_string(), |e| e.to_string()),
            r.remaining()
        )));
    }
    let mut records = Vec::with_capacity(count as usize);
    for i in 0..count {
        let raw = r.u8()?;
        let label = Label::from_u8(raw)
            .ok_or_else(|| Error::Corruption(format!("record {i}: label byte {raw}")))?;
        let video_id = r.u32()?;
        let frame_id = r.u32()?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            vector.push(r.f32()?);
        }
        records.push(EmbeddingRecord {
            label,
            video_id,
            frame_id,
            vector,
        });
    }
    r.finish()?;
    EmbeddingDataset::new(dim, records)
}

fn csv_header(dim: usize) -> Vec<String> {
    let mut h = vec!["label".to_string(), "video_id".into(), "frame_id".into()];
    h.extend((0..dim).map(|k| format!("e{k}")));
    h
}

/// 9 significant digits: the shortest fixed width that round-trips every f32.
pub(crate) fn fmt_f32(v: f32) -> String {
    format!("{v:.8e}")
}

fn encode_csv(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(csv_header(ds.dim)).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(ds.dim + 3);
    for r in &ds.records {
        row.clear();
        row.push(r.label.as_u8().to_string());
        row.push(r.video_id.to_string());
        row.push(r.frame_id.to_string());
        row.extend(r.vector.iter().map(|&v| fmt_f32(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(e.to_string())
    }
}

fn decode_csv(bytes: &[u8]) -> Result<EmbeddingDataset> {
    if bytes.is_empty() {
        return Err(Error::Format("empty input".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 4 {
        return Err(Error::Format(format!(
            "CSV header has {} columns, need label,video_id,frame_id,e0...",
            header.len()
        )));
    }
    let dim = header.len() - 3;
    let expected = csv_header(dim);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format(format!(
            "CSV header must be label,video_id,frame_id,e0..e{}",
            dim - 1
        )));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = i + 2;
        if row.len() != dim + 3 {
            return Err(Error::Corruption(format!(
                "line {line}: {} fields, expected {}",
                row.len(),
                dim + 3
            )));
        }
        let raw: u8 = parse_field(&row[0], line, "label")?;
        let label = Label::from_u8(raw)
            .ok_or_else(|| Error::Format(format!("line {line}: label {raw} is not 0 or 1")))?;
        let video_id = parse_field(&row[1], line, "video_id")?;
        let frame_id = parse_field(&row[2], line, "frame_id")?;
        let vector = row
            .iter()
            .skip(3)
            .map(|f| parse_field::<f32>(f, line, "embedding"))
            .collect::<Result<Vec<_>>>()?;
        records.push(EmbeddingRecord {
            label,
            video_id,
            frame_id,
            vector,
        });
    }
    EmbeddingDataset::new(dim, records)
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse {what} from {s:?}")))
}

/// Serializes a dataset to bytes. Binary output is a pure function of content.
pub fn to_bytes(dataset: &EmbeddingDataset, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Binary => encode_binary(dataset),
        Format::Csv => encode_csv(dataset),
    }
}

pub fn from_bytes(bytes: &[u8], format: Format) -> Result<EmbeddingDataset> {
    match format {
        Format::Binary => decode_binary(bytes),
        Format::Csv => decode_csv(bytes),
    }
}

pub fn read_embeddings<R: Read>(mut source: R, format: Format) -> Result<EmbeddingDataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    from_bytes(&bytes, format)
}

pub fn write_embeddings<W: Write>(
    dataset: &EmbeddingDataset,
    mut sink: W,
    format: Format,
) -> Result<()> {
    let bytes = to_bytes(dataset, format)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(())
}

/// Reads a file, choosing the format from its extension.
pub fn read_path(path: &Path) -> Result<EmbeddingDataset> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes, Format::from_path(path))
}

/// Writes a file atomically, choosing the format from its extension.
pub fn write_path(dataset: &EmbeddingDataset, path: &Path) -> Result<()> {
    let bytes = to_bytes(dataset, Format::from_path(path))?;
    fsio::write_atomic(path, &bytes)
}

/// Video-exclusive train/test partition. Both index lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

fn partition_by_videos(dataset: &EmbeddingDataset, test_videos: &BTreeSet<u32>) -> DatasetSplit {
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| test_videos.contains(&dataset.records[i].video_id));
    DatasetSplit {
        train_indices: train,
        test_indices: test,
    }
}

/// Assigns whole videos to the test side. The number of test videos is
/// `round(test_fraction * videos)` clamped to `[1, videos - 1]`.
pub fn split_by_video(
    dataset: &EmbeddingDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut videos = dataset.video_ids();
    if videos.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 distinct videos, found {}",
            videos.len()
        )));
    }
    let total = videos.len();
    let n_test = ((test_fraction * total as f64).round() as usize).clamp(1, total - 1);
    videos.shuffle(&mut rng::seeded(seed));
    let test: BTreeSet<u32> = videos[..n_test].iter().copied().collect();
    Ok(partition_by_videos(dataset, &test))
}

/// Holds out `videos_per_class` videos of each class for testing. Used where
/// a balanced evaluation set is needed on imbalanced data.
pub fn split_balanced(
    dataset: &EmbeddingDataset,
    videos_per_class: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if videos_per_class == 0 {
        return Err(Error::Split("videos_per_class must be positive".into()));
    }
    let mut by_class: [BTreeSet<u32>; 2] = [BTreeSet::new(), BTreeSet::new()];
    for r in &dataset.records {
        by_class[r.label as usize].insert(r.video_id);
    }
    let mut rng = rng::seeded(seed);
    let mut test = BTreeSet::new();
    for (class, set) in by_class.iter().enumerate() {
        if set.len() <= videos_per_class {
            return Err(Error::Split(format!(
                "class {} has {} videos; cannot hold out {videos_per_class} and keep one for training",
                Label::from_u8(class as u8).unwrap(),
                set.len()
            )));
        }
        let mut vids: Vec<u32> = set.iter().copied().collect();
        vids.shuffle(&mut rng);
        test.extend(&vids[..videos_per_class]);
    }
    Ok(partition_by_videos(dataset, &test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: Label, video_id: u32, frame_id: u32, vector: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            label,
            video_id,
            frame_id,
            vector,
        }
    }

    fn small() -> EmbeddingDataset {
        EmbeddingDataset::new(
            2,
            vec![
                rec(Label::Real, 10, 0, vec![1.5, -2.0]),
                rec(Label::Fake, 11, 3, vec![0.1, 1e-7]),
            ],
        )
        .unwrap()
    }

    /// Bytes assembled by hand from the documented layout.
    fn fixture_bytes() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&[0x45, 0x4D, 0x42, 0x31]); // EMB1
        b.extend_from_slice(&[0x01, 0x00]); // version 1
        b.extend_from_slice(&[0x02, 0x00]); // dim 2
        b.extend_from_slice(&[0x02, 0, 0, 0, 0, 0, 0, 0]); // count 2
        // record 0: real, video 7, frame 1, (1.0, -2.0)
        b.push(0x00);
        b.extend_from_slice(&[0x07, 0, 0, 0]);
        b.extend_from_slice(&[0x01, 0, 0, 0]);
        b.extend_from_slice(&[0x00, 0x00, 0x80, 0x3F]); // 1.0f32
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0xC0]); // -2.0f32
        // record 1: fake, video 8, frame 0, (0.5, 0.0)
        b.push(0x01);
        b.extend_from_slice(&[0x08, 0, 0, 0]);
        b.extend_from_slice(&[0x00, 0, 0, 0]);
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x3F]); // 0.5f32
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x00]); // 0.0f32
        b
    }

    #[test]
    fn hand_assembled_fixture_parses() {
        let ds = from_bytes(&fixture_bytes(), Format::Binary).unwrap();
        assert_eq!(ds.dim, 2);
        assert_eq!(
            ds.records,
            vec![
                rec(Label::Real, 7, 1, vec![1.0, -2.0]),
                rec(Label::Fake, 8, 0, vec![0.5, 0.0]),
            ]
        );
        assert_eq!(to_bytes(&ds, Format::Binary).unwrap(), fixture_bytes());
    }

    #[test]
    fn round_trips_both_formats() {
        let ds = small();
        for fmt in [Format::Binary, Format::Csv] {
            let mut buf = Vec::new();
            write_embeddings(&ds, &mut buf, fmt).unwrap();
            let back = read_embeddings(buf.as_slice(), fmt).unwrap();
            assert_eq!(back, ds, "{fmt:?}");
        }
    }

    #[test]
    fn csv_layout() {
        let text = String::from_utf8(to_bytes(&small(), Format::Csv).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("label,video_id,frame_id,e0,e1"));
        assert_eq!(lines.next(), Some("0,10,0,1.50000000e0,-2.00000000e0"));
    }

    #[test]
    fn empty_and_truncated_inputs() {
        assert!(matches!(from_bytes(&[], Format::Binary), Err(Error::Format(_))));
        assert!(matches!(from_bytes(&[], Format::Csv), Err(Error::Format(_))));
        assert!(matches!(
            from_bytes(b"NOPE\x01\x00\x02\x00\0\0\0\0\0\0\0\0", Format::Binary),
            Err(Error::Format(_))
        ));
        let b = fixture_bytes();
        assert!(matches!(
            from_bytes(&b[..b.len() - 1], Format::Binary),
            Err(Error::Corruption(_))
        ));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra, Format::Binary), Err(Error::Corruption(_))));
    }

    #[test]
    fn csv_dimension_mismatch_mid_file() {
        let text = "label,video_id,frame_id,e0,e1\n0,1,0,1.0,2.0\n1,2,0,1.0\n";
        assert!(matches!(
            from_bytes(text.as_bytes(), Format::Csv),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn non_finite_values_rejected_on_read() {
        let mut b = fixture_bytes();
        let off = HEADER_LEN + 9;
        b[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(from_bytes(&b, Format::Binary), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let ds = EmbeddingDataset::empty(512);
        let b = to_bytes(&ds, Format::Binary).unwrap();
        assert_eq!(b.len(), HEADER_LEN);
        assert_eq!(&b[8..16], &0u64.to_le_bytes());
        assert_eq!(&b[6..8], &512u16.to_le_bytes());
        assert_eq!(from_bytes(&b, Format::Binary).unwrap(), ds);
    }

    #[test]
    fn validate_reports() {
        assert!(small().validate().is_valid());

        let mut ds = small();
        ds.records[1].vector[0] = f32::NAN;
        assert_eq!(
            ds.validate().violations,
            vec![Violation::NonFinite {
                index: 1,
                component: 0
            }]
        );

        let mut ds = small();
        ds.records[1].video_id = 10;
        ds.records[1].frame_id = 0;
        assert_eq!(
            ds.validate().violations,
            vec![Violation::DuplicateKey {
                first: 0,
                second: 1,
                video_id: 10,
                frame_id: 0
            }]
        );
    }

    fn videos(n: u32, frames: u32) -> EmbeddingDataset {
        let mut records = Vec::new();
        for v in 0..n {
            for f in 0..frames {
                records.push(rec(Label::from_fake(v % 2 == 0), v, f, vec![v as f32]));
            }
        }
        EmbeddingDataset::new(1, records).unwrap()
    }

    #[test]
    fn split_counts_and_exclusivity() {
        let ds = videos(10, 3);
        let s = split_by_video(&ds, 0.2, 42).unwrap();
        let test_v: BTreeSet<u32> = s.test_indices.iter().map(|&i| ds.records[i].video_id).collect();
        let train_v: BTreeSet<u32> = s.train_indices.iter().map(|&i| ds.records[i].video_id).collect();
        assert_eq!(test_v.len(), 2);
        assert_eq!(train_v.len(), 8);
        assert!(test_v.is_disjoint(&train_v));
        assert_eq!(s, split_by_video(&ds, 0.2, 42).unwrap());
    }

    #[test]
    fn split_clamps_and_rejects() {
        let ds = videos(3, 1);
        assert_eq!(split_by_video(&ds, 0.01, 1).unwrap().test_indices.len(), 1);
        assert_eq!(split_by_video(&ds, 0.99, 1).unwrap().train_indices.len(), 1);
        assert!(matches!(split_by_video(&videos(1, 4), 0.5, 1), Err(Error::Split(_))));
        assert!(matches!(split_by_video(&ds, 1.0, 1), Err(Error::Split(_))));
    }

    #[test]
    fn balanced_split_holds_out_equal_classes() {
        let ds = videos(10, 2);
        let s = split_balanced(&ds, 2, 3).unwrap();
        let mut counts = [BTreeSet::new(), BTreeSet::new()];
        for &i in &s.test_indices {
            counts[ds.records[i].label as usize].insert(ds.records[i].video_id);
        }
        assert_eq!(counts[0].len(), 2);
        assert_eq!(counts[1].len(), 2);
        assert!(split_balanced(&ds, 5, 3).is_err());
    }
}
