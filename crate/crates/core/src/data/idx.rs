//! IDX archives (the MNIST container): big-endian magic `0x00000803` for `u8`
//! image cubes and `0x00000801` for `u8` label vectors.

use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Parsed `(count, rows, cols, pixels)` of an image archive.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Format {
            offset: 16 + payload.len(),
            message: format!("truncated payload: {need} pixel bytes declared, {} present", payload.len()),
        });
    }
    Ok((count, rows, cols, &payload[..need]))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Format {
            offset: 8 + payload.len(),
            message: format!("truncated payload: {count} labels declared, {} present", payload.len()),
        });
    }
    Ok(&payload[..count])
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format {
            offset: bytes.len(),
            message: format!("truncated header, needed 4 bytes at offset {offset}"),
        })
}

/// Decodes image and label archives into a raw dataset with pixels scaled to `[0, 1]`.
pub fn decode_raw(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_images(image_bytes)?;
    let labels = parse_labels(label_bytes)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let images = Tensor::new(
        vec![count, 1, rows, cols],
        pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(images, labels, classes)
}

pub fn load_idx_raw(images: &Path, labels: &Path) -> Result<Dataset> {
    let ib = fs::read(images).map_err(|e| Error::io(images, e))?;
    let lb = fs::read(labels).map_err(|e| Error::io(labels, e))?;
    decode_raw(&ib, &lb)
}

/// Loads an archive pair and z-normalizes it with its own statistics.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let raw = load_idx_raw(images, labels)?;
    let stats = raw.fit_normalization()?;
    raw.normalized(&stats)
}

/// Encodes a single-channel dataset; normalized datasets are mapped back to raw first
/// and every value is quantized to the nearest byte.
pub fn encode(dataset: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let raw = dataset.denormalized();
    let (c, h, w) = raw.image_shape();
    if c != 1 {
        return Err(Error::shape("IDX images are single-channel"));
    }
    let mut img = Vec::with_capacity(16 + raw.len() * h * w);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for v in [raw.len(), h, w] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend(
        raw.images()
            .data()
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    let mut lab = Vec::with_capacity(8 + raw.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(raw.len() as u32).to_be_bytes());
    for &l in raw.labels() {
        lab.push(u8::try_from(l).map_err(|_| Error::shape("IDX labels must fit in a byte"))?);
    }
    Ok((img, lab))
}

pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let (img, lab) = encode(dataset)?;
    fs::write(images, img).map_err(|e| Error::io(images, e))?;
    fs::write(labels, lab).map_err(|e| Error::io(labels, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend([0u8, 85, 170, 255, 255, 170, 85, 0]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 1, 0];
        (img, lab)
    }

    #[test]
    fn bytes_map_to_unit_interval() {
        let (img, lab) = fixture();
        let ds = decode_raw(&img, &lab).unwrap();
        assert_eq!(ds.images().shape(), &[2, 1, 2, 2]);
        assert_eq!(ds.images().data()[1], 85.0 / 255.0);
        assert_eq!(ds.images().data()[3], 1.0);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn count_mismatch_is_reported() {
        let (img, _) = fixture();
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 1, 1];
        assert!(matches!(
            decode_raw(&img, &lab),
            Err(Error::CountMismatch { images: 2, labels: 1 })
        ));
    }

    #[test]
    fn wrong_magic_names_offset_zero() {
        let (mut img, lab) = fixture();
        img[3] = 0x01;
        assert!(matches!(decode_raw(&img, &lab), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncated_payload() {
        let (img, lab) = fixture();
        let err = decode_raw(&img[..20], &lab).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 20, .. }));
    }

    #[test]
    fn zero_image_normalizes_to_constant() {
        let (img, lab) = fixture();
        let raw = decode_raw(&img, &lab).unwrap();
        let stats = raw.fit_normalization().unwrap();
        let mut zero_img = img.clone();
        zero_img[16..20].fill(0);
        let ds = decode_raw(&zero_img, &lab).unwrap().normalized(&stats).unwrap();
        let expected = (0.0 - stats.mean[0]) / stats.std[0];
        assert!(ds.image(0).data().iter().all(|&v| v == expected));
    }
}
