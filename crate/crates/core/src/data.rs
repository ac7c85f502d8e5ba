//! The labelled dataset container plus the byte- and text-level parsers for
//! IDX image files and comma-delimited feature tables. Reading files from disk
//! is left to the caller.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// `m` objects with `n` features each and labels in `0..classes`.
///
/// Features are stored row-major; labels are stored as class indices, which
/// makes every label one-hot by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    input_dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("dataset input dimension must be >= 1".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("dataset needs at least two classes".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("dataset must hold at least one object".into()));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::DimensionMismatch {
                context: "Dataset features",
                expected: labels.len() * input_dim,
                found: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::OutOfRange {
                what: "label",
                value: bad,
                min: 0,
                max: num_classes - 1,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset features must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            input_dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Feature dimension `n`.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Class count `K`.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Object count `m`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.num_classes];
        y[self.labels[i]] = 1.0;
        y
    }

    /// The first `count` objects (all of them if `count >= len`).
    pub fn prefix(&self, count: usize) -> Result<Dataset> {
        if count == 0 {
            return Err(Error::InvalidArgument("prefix of zero objects".into()));
        }
        let count = count.min(self.len());
        Dataset::new(
            self.name.clone(),
            self.input_dim,
            self.num_classes,
            self.features[..count * self.input_dim].to_vec(),
            self.labels[..count].to_vec(),
        )
    }

    /// Objects reordered so that position `i` holds original object `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(order.len() * self.input_dim);
        let mut labels = Vec::with_capacity(order.len());
        for &i in order {
            if i >= self.len() {
                return Err(Error::OutOfRange {
                    what: "object index",
                    value: i,
                    min: 0,
                    max: self.len() - 1,
                });
            }
            features.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(self.name.clone(), self.input_dim, self.num_classes, features, labels)
    }

    /// Largest `‖x_i‖∞` over the dataset.
    pub fn max_abs_feature(&self) -> f64 {
        self.features.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn u32_be(&mut self) -> Result<u32> {
        let chunk = self.take(4)?;
        Ok(u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.offset;
        if remaining < len {
            return Err(Error::Truncated {
                offset: self.offset,
                needed: len - remaining,
            });
        }
        let chunk = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(chunk)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let offset = self.offset;
        let found = self.u32_be()?;
        if found != expected {
            return Err(Error::BadMagic {
                offset,
                expected,
                found,
            });
        }
        Ok(())
    }
}

/// Parsed header plus pixel payload of an IDX3 (unsigned byte) image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages<'a> {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Offset of the first pixel byte within the file.
    pub data_offset: usize,
    pub pixels: &'a [u8],
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages<'_>> {
    let mut r = Reader::new(bytes);
    r.magic(IDX_IMAGE_MAGIC)?;
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let data_offset = r.offset;
    let total = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or(Error::DimensionOverflow { offset: 4 })?;
    let pixels = r.take(total)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        data_offset,
        pixels,
    })
}

/// Label bytes of an IDX1 file, with the payload's starting offset.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<(usize, &[u8])> {
    let mut r = Reader::new(bytes);
    r.magic(IDX_LABEL_MAGIC)?;
    let count = r.u32_be()? as usize;
    let data_offset = r.offset;
    Ok((data_offset, r.take(count)?))
}

/// Pixel `v ∈ [0, 255]` mapped to `v / 255 · 2 − 1 ∈ [−1, 1]`, evaluated as
/// `(2v − 255) / 255` so the result is the correctly rounded quotient.
#[inline]
pub fn normalize_pixel(v: u8) -> f64 {
    (2.0 * f64::from(v) - 255.0) / 255.0
}

/// Builds a dataset from the raw bytes of an IDX image file and its label
/// file, keeping file order and truncating to `limit` objects.
pub fn dataset_from_idx(
    name: impl Into<String>,
    images: &[u8],
    labels: &[u8],
    num_classes: usize,
    limit: Option<usize>,
) -> Result<Dataset> {
    let img = parse_idx_images(images)?;
    let (label_offset, label_bytes) = parse_idx_labels(labels)?;
    if img.count != label_bytes.len() {
        return Err(Error::RecordCountMismatch {
            images: img.count,
            labels: label_bytes.len(),
        });
    }
    let take = limit.map_or(img.count, |l| l.min(img.count));
    let n = img.rows * img.cols;
    if n == 0 {
        return Err(Error::DimensionOverflow { offset: 8 });
    }
    let features = img.pixels[..take * n].iter().copied().map(normalize_pixel).collect();
    let mut out_labels = Vec::with_capacity(take);
    for (i, &l) in label_bytes[..take].iter().enumerate() {
        if usize::from(l) >= num_classes {
            return Err(Error::LabelOutOfRange {
                offset: label_offset + i,
                label: usize::from(l),
                classes: num_classes,
            });
        }
        out_labels.push(usize::from(l));
    }
    Dataset::new(name, n, num_classes, features, out_labels)
}

/// Serializes images into the IDX3 layout.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    for dim in [images.len(), rows, cols] {
        out.extend_from_slice(&(dim as u32).to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

/// Serializes labels into the IDX1 layout.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn table_err(line: usize, message: impl Into<String>) -> Error {
    Error::Table {
        line,
        message: message.into(),
    }
}

/// Parses a headered, comma-delimited table whose first column is the integer
/// label and whose remaining columns are features in `[−1, 1]`.
pub fn parse_feature_table(name: impl Into<String>, text: &str, num_classes: usize) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| table_err(1, "empty feature table"))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(table_err(1, "header must name a label column and at least one feature"));
    }
    let n = columns - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(table_err(
                line_no,
                format!("expected {columns} fields, found {}", fields.len()),
            ));
        }
        let label: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| table_err(line_no, format!("unparsable label {:?}", fields[0])))?;
        if label >= num_classes {
            return Err(table_err(
                line_no,
                format!("label {label} is not below the class count {num_classes}"),
            ));
        }
        for field in &fields[1..] {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| table_err(line_no, format!("unparsable number {field:?}")))?;
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(table_err(
                    line_no,
                    format!("feature {v} is outside [-1, 1]"),
                ));
            }
            features.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(table_err(1, "feature table has no records"));
    }
    Dataset::new(name, n, num_classes, features, labels)
}

/// Writes `dataset` in the layout read by [`parse_feature_table`]; numbers are
/// printed in shortest round-trip form.
pub fn write_feature_table(dataset: &Dataset) -> String {
    let mut out = String::from("label");
    for j in 0..dataset.input_dim() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for i in 0..dataset.len() {
        out.push_str(&dataset.label(i).to_string());
        for v in dataset.x(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// `K` Gaussian clusters with means inside the unit ball, features clipped to
/// `[−1, 1]`, labels assigned round-robin so class counts differ by at most one.
pub fn synthetic_blobs(m: usize, n: usize, k: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || m < k || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic blobs need m >= K >= 2 and n >= 1 (m={m}, n={n}, K={k})"
        )));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::InvalidArgument("blob spread must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = math::sqrt(dir.iter().map(|v| v * v).sum::<f64>()).max(f64::MIN_POSITIVE);
            let radius = libm::pow(rng.random::<f64>(), 1.0 / n as f64);
            dir.into_iter().map(|v| v / len * radius).collect()
        })
        .collect();

    let mut features = Vec::with_capacity(m * n);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let c = i % k;
        for &mu in &means[c] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features.push((mu + spread * noise).clamp(-1.0, 1.0));
        }
        labels.push(c);
    }
    Dataset::new(format!("blobs-{m}-{n}-{k}"), n, k, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let images = encode_idx_images(2, 2, &[vec![0, 255, 255, 0], vec![255, 255, 0, 0]]);
        let labels = encode_idx_labels(&[3, 7]);
        (images, labels)
    }

    #[test]
    fn idx_fixture_bytes_are_exact() {
        let (images, labels) = fixture();
        assert_eq!(
            &images[..16],
            &[0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2]
        );
        assert_eq!(&labels[..8], &[0, 0, 8, 1, 0, 0, 0, 2]);
    }

    #[test]
    fn idx_endpoint_normalization() {
        let (images, labels) = fixture();
        let d = dataset_from_idx("fixture", &images, &labels, 10, None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.input_dim(), 4);
        assert_eq!(d.x(0), &[-1.0, 1.0, 1.0, -1.0]);
        assert_eq!(d.x(1), &[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(d.labels(), &[3, 7]);
        assert_eq!(d.one_hot(0)[3], 1.0);
    }

    #[test]
    fn idx_limit_keeps_first_record() {
        let (images, labels) = fixture();
        let d = dataset_from_idx("fixture", &images, &labels, 10, Some(1)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.label(0), 3);
    }

    #[test]
    fn idx_bad_magic() {
        let (mut images, labels) = fixture();
        images[3] = 0x02;
        assert_eq!(
            dataset_from_idx("x", &images, &labels, 10, None),
            Err(Error::BadMagic {
                offset: 0,
                expected: IDX_IMAGE_MAGIC,
                found: 0x0802
            })
        );
        let (images, _) = fixture();
        assert!(matches!(
            dataset_from_idx("x", &images, &images.clone(), 10, None),
            Err(Error::BadMagic { expected: IDX_LABEL_MAGIC, .. })
        ));
    }

    #[test]
    fn idx_truncation() {
        let (images, labels) = fixture();
        assert_eq!(
            dataset_from_idx("x", &images[..images.len() - 3], &labels, 10, None),
            Err(Error::Truncated { offset: 16, needed: 3 })
        );
        assert_eq!(
            dataset_from_idx("x", &images[..6], &labels, 10, None),
            Err(Error::Truncated { offset: 4, needed: 2 })
        );
    }

    #[test]
    fn idx_dimension_overflow() {
        let mut images = Vec::new();
        images.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        for _ in 0..3 {
            images.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        if usize::BITS <= 64 {
            assert!(matches!(
                parse_idx_images(&images),
                Err(Error::DimensionOverflow { .. }) | Err(Error::Truncated { .. })
            ));
        }
    }

    #[test]
    fn idx_label_out_of_range() {
        let (images, labels) = fixture();
        assert_eq!(
            dataset_from_idx("x", &images, &labels, 5, None),
            Err(Error::LabelOutOfRange {
                offset: 9,
                label: 7,
                classes: 5
            })
        );
    }

    #[test]
    fn table_fixture() {
        let d = parse_feature_table("t", "label,a,b\n1,0.5,-0.5\n0,1.0,0.0\n", 2).unwrap();
        assert_eq!((d.len(), d.input_dim(), d.num_classes()), (2, 2, 2));
        assert_eq!(d.x(0), &[0.5, -0.5]);
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn table_errors_carry_line_numbers() {
        assert!(matches!(parse_feature_table("t", "", 2), Err(Error::Table { line: 1, .. })));
        assert!(matches!(
            parse_feature_table("t", "label,a\n", 2),
            Err(Error::Table { .. })
        ));
        assert!(matches!(
            parse_feature_table("t", "label,a,b\n1,0.5,0.1\n0,0.2\n", 2),
            Err(Error::Table { line: 3, .. })
        ));
        assert!(matches!(
            parse_feature_table("t", "label,a\n1,abc\n", 2),
            Err(Error::Table { line: 2, .. })
        ));
        assert!(matches!(
            parse_feature_table("t", "label,a\n2,0.1\n", 2),
            Err(Error::Table { line: 2, .. })
        ));
        assert!(matches!(
            parse_feature_table("t", "label,a\n1,1.5\n", 2),
            Err(Error::Table { line: 2, .. })
        ));
    }

    #[test]
    fn table_round_trip() {
        let d = synthetic_blobs(37, 5, 3, 0.3, 11).unwrap();
        let back = parse_feature_table(d.name(), &write_feature_table(&d), 3).unwrap();
        assert_eq!(back.labels(), d.labels());
        for (a, b) in back.features().iter().zip(d.features()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = synthetic_blobs(103, 4, 5, 0.2, 9).unwrap();
        let b = synthetic_blobs(103, 4, 5, 0.2, 9).unwrap();
        assert_eq!(a, b);
        let mut counts = [0usize; 5];
        a.labels().iter().for_each(|&l| counts[l] += 1);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert!(a.max_abs_feature() <= 1.0);
    }

    #[test]
    fn zero_spread_collapses_classes() {
        let d = synthetic_blobs(12, 3, 3, 0.0, 1).unwrap();
        for i in 3..12 {
            assert_eq!(d.x(i), d.x(i % 3));
        }
    }

    #[test]
    fn blobs_reject_bad_shapes() {
        assert!(synthetic_blobs(1, 2, 2, 0.1, 0).is_err());
        assert!(synthetic_blobs(10, 2, 1, 0.1, 0).is_err());
    }
}
