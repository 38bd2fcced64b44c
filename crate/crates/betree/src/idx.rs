//! Big-endian IDX containers holding images (`0x00000803`) and labels (`0x00000801`).

use std::path::Path;

use betree_core::data::{Dataset, Provenance};
use betree_core::tree::Sample;

use crate::error::{IoError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Reads an image file and a label file into a dataset with pixels scaled to `[0, 1]`.
/// The class count is one more than the largest label.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| IoError::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| IoError::io(labels_path, e))?;
    parse_idx(&images, images_path, &labels, labels_path)
}

/// Decodes in-memory IDX contents. The paths are only used in error messages.
pub fn parse_idx(images: &[u8], images_path: &Path, labels: &[u8], labels_path: &Path) -> Result<Dataset> {
    let img_header = header(images, images_path, IMAGE_MAGIC, 3)?;
    let lbl_header = header(labels, labels_path, LABEL_MAGIC, 1)?;
    let (count, rows, cols) = (img_header[0], img_header[1], img_header[2]);
    if lbl_header[0] != count {
        return Err(IoError::format(
            labels_path,
            "item count",
            format!("{} labels for {count} images in {}", lbl_header[0], images_path.display()),
        ));
    }

    let dim = rows * cols;
    let pixels = body(images, images_path, 16, count * dim)?;
    let label_bytes = body(labels, labels_path, 8, count)?;

    let samples: Vec<Sample> = pixels
        .chunks_exact(dim.max(1))
        .take(count)
        .zip(label_bytes)
        .map(|(px, &l)| Sample::new(px.iter().map(|&b| f64::from(b) / 255.0).collect(), usize::from(l)))
        .collect();
    let classes = label_bytes.iter().copied().max().map_or(1, |m| usize::from(m) + 1);
    Ok(Dataset::new(samples, classes, Provenance::Idx)?)
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|w| u32::from_be_bytes([w[0], w[1], w[2], w[3]]))
            .ok_or_else(|| IoError::format(path, "header", format!("truncated after {} bytes", bytes.len())))
    };
    let found = word(0)?;
    if found != magic {
        return Err(IoError::format(
            path,
            "magic number",
            format!("expected {magic:#010x}, found {found:#010x}"),
        ));
    }
    (1..=dims).map(|i| word(i).map(|w| w as usize)).collect()
}

fn body<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8]> {
    let have = bytes.len().saturating_sub(offset);
    if have < len {
        return Err(IoError::format(path, "data", format!("truncated: expected {len} bytes, found {have}")));
    }
    Ok(&bytes[offset..offset + len])
}

/// Encodes a dataset whose features are bytes scaled by 255, for tests and tools.
pub fn encode_idx(samples: &[(Vec<u8>, u8)], rows: usize, cols: usize) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(16 + samples.len() * rows * cols);
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for d in [samples.len(), rows, cols] {
        images.extend_from_slice(&(d as u32).to_be_bytes());
    }
    let mut labels = Vec::with_capacity(8 + samples.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    for (px, l) in samples {
        images.extend_from_slice(px);
        labels.push(*l);
    }
    (images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn decodes_and_scales() {
        let (img, lbl) = encode_idx(&[(vec![0, 255, 51, 0], 3), (vec![255, 0, 0, 0], 1)], 2, 2);
        let ds = parse_idx(&img, p(), &lbl, p()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim(), 4);
        assert_eq!(ds.classes(), 4);
        assert_eq!(ds.samples()[0].features, vec![0.0, 1.0, 0.2, 0.0]);
        assert_eq!(ds.samples()[1].label, 1);
    }

    #[test]
    fn label_magic_in_image_slot_is_rejected() {
        let (img, lbl) = encode_idx(&[(vec![1], 0)], 1, 1);
        let err = parse_idx(&lbl, p(), &lbl, p()).unwrap_err();
        assert!(err.to_string().contains("magic number"), "{err}");
        let err = parse_idx(&img, p(), &img, p()).unwrap_err();
        assert!(err.to_string().contains("magic number"), "{err}");
    }

    #[test]
    fn truncation_and_count_mismatch_name_the_field() {
        let (img, lbl) = encode_idx(&[(vec![1, 2], 0), (vec![3, 4], 1)], 1, 2);
        let err = parse_idx(&img[..img.len() - 1], p(), &lbl, p()).unwrap_err();
        assert!(err.to_string().contains("invalid data"), "{err}");
        let err = parse_idx(&img[..6], p(), &lbl, p()).unwrap_err();
        assert!(err.to_string().contains("invalid header"), "{err}");
        let (_, lbl1) = encode_idx(&[(vec![1, 2], 0)], 1, 2);
        let err = parse_idx(&img, p(), &lbl1, p()).unwrap_err();
        assert!(err.to_string().contains("item count"), "{err}");
    }
}
