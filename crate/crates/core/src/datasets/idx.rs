//! IDX containers: a big-endian magic (`0x0000_0803` for u8 images,
//! `0x0000_0801` for u8 labels), one big-endian `u32` per dimension, then the
//! raw bytes.

use alloc::format;
use alloc::vec::Vec;

use super::LabeledSet;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| Error::Parse {
            offset: self.pos,
            message: format!("truncated while reading {what}"),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let m = self.u32("magic")?;
        if m != expected {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic {m:#010x}, expected {expected:#010x}"),
            });
        }
        Ok(())
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(Error::Parse {
                offset: self.bytes.len(),
                message: format!("truncated payload: need {len} bytes, found {available}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let pixels = r.payload(count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32("label count")? as usize;
    Ok(r.payload(count)?.to_vec())
}

/// Parses an image/label file pair into a set with pixels scaled to `[0, 1]`
/// and each image flattened row-major.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledSet> {
    let img = parse_idx_images(images)?;
    let lab = parse_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(Error::Parse {
            offset: 4,
            message: format!("{} images but {} labels", img.count, lab.len()),
        });
    }
    let inputs = img.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    LabeledSet::new(
        img.rows * img.cols,
        inputs,
        lab.into_iter().map(usize::from).collect(),
    )
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..2 * 28 * 28).map(|i| (i * 7 % 256) as u8).collect();
        let images = encode_idx_images(28, 28, &pixels);
        let labels = encode_idx_labels(&[3, 9]);
        (pixels, images, labels)
    }

    #[test]
    fn header_layout_is_big_endian() {
        let (_, images, labels) = fixture();
        assert_eq!(&images[..4], &[0, 0, 8, 3]);
        assert_eq!(&images[4..8], &[0, 0, 0, 2]);
        assert_eq!(&images[8..16], &[0, 0, 0, 28, 0, 0, 0, 28]);
        assert_eq!(&labels[..8], &[0, 0, 8, 1, 0, 0, 0, 2]);
    }

    #[test]
    fn round_trip_two_images() {
        let (pixels, images, labels) = fixture();
        let parsed = parse_idx_images(&images).unwrap();
        assert_eq!(parsed.pixels, pixels);
        assert_eq!(encode_idx_images(parsed.rows, parsed.cols, &parsed.pixels), images);
        let set = parse_idx(&images, &labels).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dim(), 784);
        assert_eq!(set.labels(), &[3, 9]);
        assert_eq!(set.input(1)[0], f64::from(pixels[784]) / 255.0);
        assert!(set.inputs().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn truncation_and_magic_errors() {
        let (_, images, labels) = fixture();
        match parse_idx(&images[..images.len() - 1], &labels) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, images.len() - 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_idx_images(&images[..10]), Err(Error::Parse { offset: 8, .. })));
        assert!(matches!(parse_idx(&labels, &labels), Err(Error::Parse { .. })));
        let short_labels = encode_idx_labels(&[1]);
        assert!(parse_idx(&images, &short_labels).is_err());
        assert!(parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 5, 1]).is_err());
    }
}
