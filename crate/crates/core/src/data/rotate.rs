//! Rotated-digit construction on top of IDX base images.

use std::path::Path;

use forgetnet_tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::idx::{load_idx, RawImages};
use super::{DataBundle, DataError, Dataset, DatasetManifest, SKind};

/// Training angles; `s` is the index into this list.
pub const ROT_ANGLES: [f64; 5] = [0.0, 22.5, -22.5, 45.0, -45.0];
/// Held-out angles, evaluated as two extra splits.
pub const UNSEEN_ANGLES: [f64; 2] = [55.0, 65.0];

pub const IMAGES_FILE: &str = "digits-images-idx3-ubyte";
pub const LABELS_FILE: &str = "digits-labels-idx1-ubyte";

/// Rotates a square image by `degrees` (counter-clockwise) about its centre
/// with bilinear interpolation and zero fill.
pub fn rotate_image(img: &[f64], size: usize, degrees: f64) -> Vec<f64> {
    debug_assert_eq!(img.len(), size * size);
    if degrees == 0.0 {
        return img.to_vec();
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let c = (size as f64 - 1.0) / 2.0;
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= size as isize || col >= size as isize {
            0.0
        } else {
            img[r as usize * size + col as usize]
        }
    };
    let mut out = vec![0.0; size * size];
    for r in 0..size {
        for col in 0..size {
            // Output pixel (x right, y up) maps back through the inverse rotation.
            let x = col as f64 - c;
            let y = c - r as f64;
            let sx = cos * x + sin * y;
            let sy = -sin * x + cos * y;
            let src_col = sx + c;
            let src_row = c - sy;
            let r0 = src_row.floor();
            let c0 = src_col.floor();
            let fr = src_row - r0;
            let fc = src_col - c0;
            let (r0, c0) = (r0 as isize, c0 as isize);
            out[r * size + col] = (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1))
                + fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
        }
    }
    out
}

/// Assigns every image one angle drawn uniformly from `angles` and rotates it;
/// `s` is the index of the drawn angle.
pub fn make_rot<R: Rng + ?Sized>(raw: &RawImages, angles: &[f64], rng: &mut R) -> Result<Dataset, DataError> {
    if raw.rows != raw.cols {
        return Err(DataError::NonSquare {
            rows: raw.rows,
            cols: raw.cols,
        });
    }
    if angles.is_empty() {
        return Err(DataError::Invalid("no rotation angles".into()));
    }
    let picks: Vec<usize> = (0..raw.len()).map(|_| rng.gen_range(0..angles.len())).collect();
    rotate_with(raw, angles, &picks)
}

/// Every image at every angle, in image-major order.
pub fn make_rot_all(raw: &RawImages, angles: &[f64]) -> Result<Dataset, DataError> {
    if raw.rows != raw.cols {
        return Err(DataError::NonSquare {
            rows: raw.rows,
            cols: raw.cols,
        });
    }
    let picks: Vec<usize> = (0..raw.len()).flat_map(|_| 0..angles.len()).collect();
    let repeated: Vec<usize> = (0..raw.len()).flat_map(|i| std::iter::repeat_n(i, angles.len())).collect();
    rotate_with(&raw.select(&repeated), angles, &picks)
}

fn rotate_with(raw: &RawImages, angles: &[f64], picks: &[usize]) -> Result<Dataset, DataError> {
    let size = raw.rows;
    let mut pixels = Vec::with_capacity(raw.pixels.len());
    for (i, &a) in picks.iter().enumerate() {
        pixels.extend(rotate_image(raw.image(i), size, angles[a]));
    }
    let x = Tensor::new(vec![raw.len(), size * size], pixels)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    Dataset::new(x, vec![raw.labels.clone()], vec![picks.to_vec()])
}

/// Options of the rotated-digit benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistRotSource {
    /// Base images drawn from the IDX files.
    pub subsample: usize,
    pub test_fraction: f64,
    /// Train on every image at every angle instead of one random angle each.
    pub all_angles: bool,
}

impl Default for MnistRotSource {
    fn default() -> Self {
        Self {
            subsample: 10_000,
            test_fraction: 0.2,
            all_angles: false,
        }
    }
}

impl MnistRotSource {
    pub fn load(&self, dir: &Path, seed: u64) -> Result<DataBundle, DataError> {
        let raw = load_idx(&dir.join(IMAGES_FILE), &dir.join(LABELS_FILE))?;
        if raw.is_empty() {
            return Err(DataError::Invalid("no base images".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(self.subsample.min(raw.len()));
        let n_test = (order.len() as f64 * self.test_fraction).round() as usize;
        let (test_idx, train_idx) = order.split_at(n_test);
        let base_train = raw.select(train_idx);
        let base_test = raw.select(test_idx);

        let train = if self.all_angles {
            make_rot_all(&base_train, &ROT_ANGLES)?
        } else {
            make_rot(&base_train, &ROT_ANGLES, &mut rng)?
        };
        let test = make_rot(&base_test, &ROT_ANGLES, &mut rng)?;
        let mut extra = Vec::new();
        for a in UNSEEN_ANGLES {
            let d = make_rot(&base_test, &[a, -a], &mut rng)?;
            extra.push((format!("unseen{a}"), d));
        }

        let recipe = format!(
            "mnist-rot v1; base {} images; subsample {} seed {seed}; test fraction {}; angles {:?}; all_angles {}; bilinear zero-fill",
            raw.len(),
            self.subsample,
            self.test_fraction,
            ROT_ANGLES,
            self.all_angles
        );
        let manifest = DatasetManifest::new(
            "mnist-rot",
            raw.rows * raw.cols,
            vec![10],
            vec![ROT_ANGLES.len()],
            vec![SKind::Nuisance],
            recipe,
        );
        DataBundle::new(manifest, train, test, extra)
    }
}
