//! IDX image/label container IO (the MNIST file layout).
//!
//! Big-endian headers: images carry magic `0x00000803` then count, rows,
//! cols and one byte per pixel; labels carry magic `0x00000801` then count
//! and one byte per label. Pixels load scaled to `[0, 1]`; writing rounds
//! back to bytes, so a loaded dataset re-serializes to the original payload.

use std::io::Write;
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::data::{Dataset, LabeledExample, SplitTag};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Loads an image/label file pair into a dataset tagged with `split`.
pub fn load_idx<F: Scalar>(
    images_path: &Path,
    labels_path: &Path,
    split: SplitTag,
) -> Result<Dataset<F>> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels, images_path, labels_path, split)
}

/// Parses raw IDX payloads. Paths are only used in error messages.
pub fn parse_idx<F: Scalar>(
    images: &[u8],
    labels: &[u8],
    images_path: &Path,
    labels_path: &Path,
    split: SplitTag,
) -> Result<Dataset<F>> {
    let truncated = |path: &Path, what: &str| Error::MalformedFile {
        path: path.to_path_buf(),
        reason: format!("truncated while reading {what}"),
    };

    let mut r = images;
    let magic = r
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(images_path, "image magic"))?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.to_path_buf(),
            got: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let count = r
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(images_path, "image count"))? as usize;
    let rows = r
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(images_path, "image rows"))?;
    let cols = r
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(images_path, "image cols"))?;
    let dim = rows as usize * cols as usize;
    if r.len() != count * dim {
        return Err(Error::MalformedFile {
            path: images_path.to_path_buf(),
            reason: format!(
                "pixel payload holds {} bytes, header promises {}",
                r.len(),
                count * dim
            ),
        });
    }

    let mut l = labels;
    let magic = l
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(labels_path, "label magic"))?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.to_path_buf(),
            got: magic,
            expected: LABEL_MAGIC,
        });
    }
    let label_count = l
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(labels_path, "label count"))? as usize;
    if l.len() != label_count {
        return Err(Error::MalformedFile {
            path: labels_path.to_path_buf(),
            reason: format!(
                "label payload holds {} bytes, header promises {label_count}",
                l.len()
            ),
        });
    }
    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let scale = F::from_f64_lossy(1.0 / 255.0);
    let examples: Vec<LabeledExample<F>> = r
        .chunks_exact(dim)
        .zip(l.iter())
        .map(|(pixels, &label)| {
            let features = pixels
                .iter()
                .map(|&p| F::from_u8(p).unwrap() * scale)
                .collect();
            LabeledExample::new(features, label as u32)
        })
        .collect();

    let class_count = examples.iter().map(|e| e.label).max().map_or(1, |m| m as usize + 1);
    let mut dataset = Dataset::new(examples, class_count, dim, split)?;
    dataset.image_shape = (rows, cols);
    Ok(dataset)
}

/// Writes a dataset back out as an IDX image/label pair. Features must lie in
/// `[0, 1]` (they are rounded to bytes) and labels must fit in a byte.
pub fn write_idx<F: Scalar>(
    dataset: &Dataset<F>,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let (images, labels) = serialize_idx(dataset)?;
    std::fs::write(images_path, images)?;
    std::fs::write(labels_path, labels)?;
    Ok(())
}

/// In-memory form of [`write_idx`].
pub fn serialize_idx<F: Scalar>(dataset: &Dataset<F>) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = dataset.image_shape;
    if rows as usize * cols as usize != dataset.feature_dim {
        return Err(Error::DimensionMismatch {
            context: "image shape vs feature dim",
            expected: dataset.feature_dim,
            got: rows as usize * cols as usize,
        });
    }
    let mut images = Vec::with_capacity(16 + dataset.len() * dataset.feature_dim);
    images.write_u32::<BigEndian>(IMAGE_MAGIC)?;
    images.write_u32::<BigEndian>(dataset.len() as u32)?;
    images.write_u32::<BigEndian>(rows)?;
    images.write_u32::<BigEndian>(cols)?;
    let mut labels = Vec::with_capacity(8 + dataset.len());
    labels.write_u32::<BigEndian>(LABEL_MAGIC)?;
    labels.write_u32::<BigEndian>(dataset.len() as u32)?;
    for ex in &dataset.examples {
        for &f in &ex.features {
            let v = (f.to_f64_lossy() * 255.0).round();
            if !(0.0..=255.0).contains(&v) {
                return Err(Error::MalformedFile {
                    path: PathBuf::from("<serialize>"),
                    reason: format!("feature value {f} outside [0, 1]"),
                });
            }
            images.write_all(&[v as u8])?;
        }
        if ex.label > 255 {
            return Err(Error::MalformedFile {
                path: PathBuf::from("<serialize>"),
                reason: format!("label {} does not fit in a byte", ex.label),
            });
        }
        labels.write_all(&[ex.label as u8])?;
    }
    Ok((images, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn be(v: u32) -> [u8; 4] {
        v.to_be_bytes()
    }

    /// 2 grayscale 2x2 images with labels 3 and 0.
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        images.extend_from_slice(&be(IMAGE_MAGIC));
        images.extend_from_slice(&be(2));
        images.extend_from_slice(&be(2));
        images.extend_from_slice(&be(2));
        images.extend_from_slice(&[0, 128, 255, 64, 10, 20, 30, 40]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&be(LABEL_MAGIC));
        labels.extend_from_slice(&be(2));
        labels.extend_from_slice(&[3, 0]);
        (images, labels)
    }

    fn parse(images: &[u8], labels: &[u8]) -> Result<Dataset<f32>> {
        parse_idx(
            images,
            labels,
            &PathBuf::from("images"),
            &PathBuf::from("labels"),
            SplitTag::Train,
        )
    }

    #[test]
    fn parses_and_scales_pixels() {
        let (images, labels) = fixture();
        let data = parse(&images, &labels).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.feature_dim, 4);
        assert_eq!(data.image_shape, (2, 2));
        assert_eq!(data.examples[0].label, 3);
        assert_eq!(data.examples[0].features[0], 0.0);
        assert!((data.examples[0].features[1] - 128.0 / 255.0).abs() < 1e-7);
        assert_eq!(data.examples[0].features[2], 1.0);
        assert_eq!(data.class_count, 4);
    }

    #[test]
    fn wrong_magic_names_the_offending_file() {
        let (mut images, labels) = fixture();
        images[3] = 0x99;
        let err = parse(&images, &labels).unwrap_err();
        match err {
            Error::BadMagic { path, expected, .. } => {
                assert_eq!(path, PathBuf::from("images"));
                assert_eq!(expected, IMAGE_MAGIC);
            }
            other => panic!("unexpected error {other:?}"),
        }
        // Swapped files surface as a label-magic failure.
        let (images, labels) = fixture();
        let err = parse(&labels, &images).unwrap_err();
        assert!(matches!(err, Error::BadMagic { expected: IMAGE_MAGIC, .. }));
    }

    #[test]
    fn truncated_payloads_are_rejected() {
        let (mut images, labels) = fixture();
        images.truncate(images.len() - 3);
        assert!(matches!(
            parse(&images, &labels),
            Err(Error::MalformedFile { .. })
        ));
        let (images, _) = fixture();
        assert!(matches!(
            parse(&images, &[0, 0]),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_detected() {
        let (images, mut labels) = fixture();
        labels[7] = 3; // claim 3 labels
        labels.push(1);
        let err = parse(&images, &labels).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { images: 2, labels: 3 }));
    }

    #[test]
    fn loaded_datasets_reserialize_to_the_original_bytes() {
        let (images, labels) = fixture();
        let data = parse(&images, &labels).unwrap();
        let (out_images, out_labels) = serialize_idx(&data).unwrap();
        assert_eq!(out_images, images);
        assert_eq!(out_labels, labels);
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = std::env::temp_dir().join(format!("idx-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (images, labels) = fixture();
        let ip = dir.join("images-idx3-ubyte");
        let lp = dir.join("labels-idx1-ubyte");
        std::fs::write(&ip, &images).unwrap();
        std::fs::write(&lp, &labels).unwrap();
        let data: Dataset<f32> = load_idx(&ip, &lp, SplitTag::Test).unwrap();
        assert_eq!(data.split, SplitTag::Test);
        write_idx(&data, &ip, &lp).unwrap();
        assert_eq!(std::fs::read(&ip).unwrap(), images);
        assert_eq!(std::fs::read(&lp).unwrap(), labels);
        std::fs::remove_dir_all(&dir).ok();
    }

    /// Checked against the published container facts when a real MNIST pair
    /// is available (env var `MNIST_DIR`): 10000 test examples, 28x28, and
    /// the first test label is 7. Uses a separate bare-bones reader so the
    /// main parser is cross-checked, not self-checked.
    #[test]
    fn mnist_test_set_facts_when_available() {
        let Some(dir) = std::env::var_os("MNIST_DIR") else {
            eprintln!("MNIST_DIR not set; skipping MNIST container check");
            return;
        };
        let dir = PathBuf::from(dir);
        let ip = dir.join("t10k-images-idx3-ubyte");
        let lp = dir.join("t10k-labels-idx1-ubyte");
        if !ip.exists() || !lp.exists() {
            eprintln!("MNIST test pair missing under {dir:?}; skipping");
            return;
        }

        let raw_labels = std::fs::read(&lp).unwrap();
        let naive_count = u32::from_be_bytes(raw_labels[4..8].try_into().unwrap()) as usize;
        let naive_first = raw_labels[8];

        let data: Dataset<f32> = load_idx(&ip, &lp, SplitTag::Test).unwrap();
        assert_eq!(data.len(), naive_count);
        assert_eq!(data.len(), 10_000);
        assert_eq!(data.feature_dim, 784);
        assert_eq!(data.examples[0].label, naive_first as u32);
        assert_eq!(data.examples[0].label, 7);
    }
}
