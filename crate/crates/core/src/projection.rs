//! Two-dimensional PCA projections and silhouette scores.

use std::fmt::Write as _;

use forgetnet_tensor::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ForgettingModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Z,
    ZTilde,
}

impl Which {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "z" => Some(Which::Z),
            "z_tilde" | "ztilde" => Some(Which::ZTilde),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `n × 2` coordinates on the top two principal components.
    pub coords: Tensor,
    /// Variance captured by each returned component.
    pub explained: [f64; 2],
    /// Set when the embedding has no variance; coordinates are then zero.
    pub constant: bool,
}

/// Projects the rows of `x` onto their top two principal components.
///
/// Component signs are fixed so that each component's largest-magnitude
/// loading is positive.
pub fn pca_2d(x: &Tensor) -> Result<Projection> {
    let (n, d) = (x.rows(), x.cols());
    if x.rank() != 2 || n < 3 {
        return Err(Error::Invalid("projection needs at least 3 samples".into()));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| x.row(i)[j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Ok(Projection {
            coords: Tensor::zeros(&[n, 2]),
            explained: [0.0, 0.0],
            constant: true,
        });
    }
    let mut coords = vec![0.0; n * 2];
    let mut explained = [0.0; 2];
    for (k, &col) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(col).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v = -v;
        }
        explained[k] = eig.eigenvalues[col].max(0.0);
        let proj = &centered * v;
        for i in 0..n {
            coords[i * 2 + k] = proj[i];
        }
    }
    Ok(Projection {
        coords: Tensor::from_vec(&[n, 2], coords),
        explained,
        constant: false,
    })
}

/// Mean silhouette coefficient of `labels` under Euclidean distance.
/// Points in singleton clusters score 0.
pub fn silhouette(x: &Tensor, labels: &[usize]) -> f64 {
    let n = x.rows();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let xi = x.row(i);
        for j in 0..n {
            if i != j {
                let d: f64 = xi
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                sums[labels[j]] += d;
            }
        }
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// PCA of the chosen embedding of `data` for `task`, with its labels.
pub fn project_embeddings(
    model: &ForgettingModel,
    data: &Dataset,
    task: usize,
    which: Which,
) -> Result<(Projection, Vec<usize>, Vec<usize>)> {
    let emb = model.embed(data.x(), task)?;
    let x = match which {
        Which::Z => emb.z,
        Which::ZTilde => emb.z_tilde,
    };
    let p = pca_2d(&x)?;
    Ok((p, data.y(task).to_vec(), data.s(task).to_vec()))
}

/// `pc1,pc2,y,s` rows; a leading comment line flags constant embeddings.
pub fn projection_csv(p: &Projection, y: &[usize], s: &[usize]) -> String {
    let mut out = String::new();
    if p.constant {
        out.push_str("# constant embedding: all coordinates are zero\n");
    }
    out.push_str("pc1,pc2,y,s\n");
    for i in 0..p.coords.rows() {
        let r = p.coords.row(i);
        let _ = writeln!(out, "{},{},{},{}", r[0], r[1], y[i], s[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_embedding_is_flagged() {
        let p = pca_2d(&Tensor::full(&[5, 3], 2.0)).unwrap();
        assert!(p.constant);
        assert!(p.coords.data().iter().all(|&v| v == 0.0));
        assert!(projection_csv(&p, &[0; 5], &[0; 5]).starts_with('#'));
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(pca_2d(&Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn separated_clusters_score_high() {
        let x = Tensor::from_vec(&[4, 1], vec![0.0, 0.1, 10.0, 10.1]);
        assert!(silhouette(&x, &[0, 0, 1, 1]) > 0.95);
        assert_eq!(silhouette(&x, &[0, 0, 0, 0]), 0.0);
    }
}
