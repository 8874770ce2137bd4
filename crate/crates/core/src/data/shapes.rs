//! Multi-factor synthetic sprites: shape, scale, orientation and position.
//!
//! Task 1 predicts the shape and should forget horizontal position (two
//! bins); task 2 predicts the scale and should forget orientation.

use forgetnet_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataBundle, DataError, Dataset, DatasetManifest, SKind};

pub const SHAPES: usize = 3;
pub const SCALES: usize = 2;
pub const ORIENTATIONS: usize = 4;
pub const POSITIONS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapesSpec {
    pub size: usize,
    pub train: usize,
    pub test: usize,
    /// Sub-pixel samples per axis when rasterizing.
    pub supersample: usize,
    /// Maximum centre offset in pixels within a position bin.
    pub jitter: f64,
}

impl Default for ShapesSpec {
    fn default() -> Self {
        Self {
            size: 32,
            train: 8000,
            test: 2000,
            supersample: 4,
            jitter: 2.0,
        }
    }
}

/// Generative factors of one sprite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factors {
    pub shape: usize,
    pub scale: usize,
    pub orientation: usize,
    /// 2×2 grid cell: `position % 2` is the column, `position / 2` the row.
    pub position: usize,
    pub jitter: (f64, f64),
}

impl Factors {
    /// Task 1 nuisance: left or right half.
    pub fn side(&self) -> usize {
        self.position % 2
    }
}

/// Draws factors independently and uniformly.
pub fn sample_factors<R: Rng + ?Sized>(n: usize, jitter: f64, rng: &mut R) -> Vec<Factors> {
    (0..n)
        .map(|_| Factors {
            shape: rng.gen_range(0..SHAPES),
            scale: rng.gen_range(0..SCALES),
            orientation: rng.gen_range(0..ORIENTATIONS),
            position: rng.gen_range(0..POSITIONS),
            jitter: (
                rng.gen_range(-jitter..=jitter),
                rng.gen_range(-jitter..=jitter),
            ),
        })
        .collect()
}

fn inside(shape: usize, u: f64, v: f64, r: f64) -> bool {
    match shape {
        0 => u.abs() <= 0.8 * r && v.abs() <= 0.8 * r,
        1 => (u / r).powi(2) + (v / (0.5 * r)).powi(2) <= 1.0,
        _ => {
            // Equilateral triangle, circumradius r, apex along +v.
            let inr = 0.5 * r;
            [270.0f64, 30.0, 150.0].iter().all(|deg| {
                let (s, c) = deg.to_radians().sin_cos();
                u * c + v * s <= inr
            })
        }
    }
}

/// Rasterizes one sprite into a `size × size` image with values in `[0, 1]`.
pub fn render(f: &Factors, size: usize, supersample: usize) -> Vec<f64> {
    let half = size as f64 / 2.0;
    let cx = half * (0.5 + (f.position % 2) as f64) + f.jitter.0;
    let cy = half * (0.5 + (f.position / 2) as f64) + f.jitter.1;
    let r = size as f64 * if f.scale == 0 { 0.11 } else { 0.19 };
    let theta = (f.orientation as f64 * 22.5).to_radians();
    let (s, c) = theta.sin_cos();
    let k = supersample.max(1);
    let w = 1.0 / (k * k) as f64;
    let mut img = vec![0.0; size * size];
    for row in 0..size {
        for col in 0..size {
            let mut hits = 0usize;
            for a in 0..k {
                for b in 0..k {
                    let x = col as f64 + (b as f64 + 0.5) / k as f64 - cx;
                    let y = cy - (row as f64 + (a as f64 + 0.5) / k as f64);
                    let u = c * x + s * y;
                    let v = -s * x + c * y;
                    if inside(f.shape, u, v, r) {
                        hits += 1;
                    }
                }
            }
            img[row * size + col] = hits as f64 * w;
        }
    }
    img
}

fn build(factors: &[Factors], spec: &ShapesSpec) -> Result<Dataset, DataError> {
    let px = spec.size * spec.size;
    let mut x = Vec::with_capacity(factors.len() * px);
    for f in factors {
        x.extend(render(f, spec.size, spec.supersample));
    }
    let x = Tensor::new(vec![factors.len(), px], x).map_err(|e| DataError::Invalid(e.to_string()))?;
    let y = vec![
        factors.iter().map(|f| f.shape).collect(),
        factors.iter().map(|f| f.scale).collect(),
    ];
    let s = vec![
        factors.iter().map(Factors::side).collect(),
        factors.iter().map(|f| f.orientation).collect(),
    ];
    Dataset::new(x, y, s)
}

/// Two-task sprite dataset.
pub fn gen_shapes(spec: &ShapesSpec, seed: u64) -> Result<DataBundle, DataError> {
    if spec.size < 8 || spec.train == 0 || spec.test == 0 {
        return Err(DataError::Invalid("shapes: size ≥ 8 and nonempty splits required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = build(&sample_factors(spec.train, spec.jitter, &mut rng), spec)?;
    let test = build(&sample_factors(spec.test, spec.jitter, &mut rng), spec)?;
    let recipe = format!(
        "shapes v1; size {}; train {}; test {}; supersample {}; jitter {}; seed {seed}",
        spec.size, spec.train, spec.test, spec.supersample, spec.jitter
    );
    let mut manifest = DatasetManifest::new(
        "shapes",
        spec.size * spec.size,
        vec![SHAPES, SCALES],
        vec![2, ORIENTATIONS],
        vec![SKind::Nuisance, SKind::Nuisance],
        recipe,
    );
    manifest
        .notes
        .push("task 1 s = horizontal position bin (2 classes); task 2 s = orientation (4 classes)".into());
    DataBundle::new(manifest, train, test, Vec::new())
}
