//! IDX (MNIST-style) image and label files.

use std::fs;
use std::path::Path;

use super::DataError;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Grayscale images in `[0, 1]`, flattened row-major, with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
    pub labels: Vec<usize>,
}

impl RawImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels: idx.iter().flat_map(|&i| self.image(i).iter().copied()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn header(bytes: &[u8], path: &Path, magic: u32, rank: usize) -> Result<Vec<usize>, DataError> {
    let need = 4 + 4 * rank;
    if bytes.len() < need {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected: need,
            got: bytes.len(),
        });
    }
    let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
    let got = be(0);
    if got != magic {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            got,
        });
    }
    let dims: Vec<usize> = (0..rank).map(|k| be(4 + 4 * k) as usize).collect();
    let expected = need + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected,
            got: bytes.len(),
        });
    }
    Ok(dims)
}

/// Parses an image file: returns `(count, rows, cols, pixels / 255)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<f64>), DataError> {
    let dims = header(bytes, path, IMAGE_MAGIC, 3)?;
    let pixels = bytes[16..16 + dims.iter().product::<usize>()]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    Ok((dims[0], dims[1], dims[2], pixels))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>, DataError> {
    let dims = header(bytes, path, LABEL_MAGIC, 1)?;
    Ok(bytes[8..8 + dims[0]].iter().map(|&b| usize::from(b)).collect())
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<RawImages, DataError> {
    let read = |p: &Path| {
        if !p.exists() {
            return Err(DataError::Missing(p.to_path_buf()));
        }
        fs::read(p).map_err(|e| DataError::Malformed {
            path: p.to_path_buf(),
            reason: e.to_string(),
        })
    };
    let (count, rows, cols, pixels) = parse_idx_images(&read(images)?, images)?;
    let labels = parse_idx_labels(&read(labels)?, labels)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(RawImages {
        rows,
        cols,
        pixels,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(n: u32, r: u32, c: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = IMAGE_MAGIC.to_be_bytes().to_vec();
        for d in [n, r, c] {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn parses_hand_built_images() {
        let payload: Vec<u8> = (0..40).map(|i| (i * 6) as u8).collect();
        let bytes = image_file(10, 2, 2, &payload);
        let (n, r, c, px) = parse_idx_images(&bytes, Path::new("t")).unwrap();
        assert_eq!((n, r, c), (10, 2, 2));
        for (p, b) in px.iter().zip(&payload) {
            assert_eq!(*p, f64::from(*b) / 255.0);
        }
    }

    #[test]
    fn big_endian_dimensions() {
        // 258 = 0x0102: a little-endian read would give 0x02010000.
        let bytes = image_file(1, 258, 1, &vec![0u8; 258]);
        let (_, r, _, _) = parse_idx_images(&bytes, Path::new("t")).unwrap();
        assert_eq!(r, 258);
    }

    #[test]
    fn distinct_errors() {
        let mut bytes = image_file(2, 2, 2, &[0; 8]);
        assert!(matches!(
            parse_idx_images(&bytes[..12], Path::new("t")),
            Err(DataError::Truncated { .. })
        ));
        assert!(matches!(
            parse_idx_images(&bytes[..20], Path::new("t")),
            Err(DataError::Truncated { expected: 24, .. })
        ));
        bytes[3] = 0x01;
        assert!(matches!(
            parse_idx_images(&bytes, Path::new("t")),
            Err(DataError::BadMagic { got: 0x801, .. })
        ));
    }
}
