//! On-disk dataset cache: a JSON manifest next to a tensor container.

use std::fs;
use std::path::{Path, PathBuf};

use forgetnet_tensor::Tensor;

use super::{DataBundle, DataError, Dataset, DatasetManifest};
use crate::checkpoint::{decode_blocks, encode_blocks};

fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.manifest.json")),
        dir.join(format!("{name}.frgt")),
    )
}

fn labels_tensor(v: &[usize]) -> Tensor {
    Tensor::from_vec(&[v.len().max(1)], if v.is_empty() { vec![0.0] } else { v.iter().map(|&l| l as f64).collect() })
}

fn push_split(blocks: &mut Vec<(String, Tensor)>, split: &str, d: &Dataset) {
    blocks.push((format!("{split}.x"), d.x().clone()));
    for j in 0..d.tasks() {
        blocks.push((format!("{split}.y{j}"), labels_tensor(d.y(j))));
        blocks.push((format!("{split}.s{j}"), labels_tensor(d.s(j))));
    }
}

/// Writes `<dir>/<name>.manifest.json` and `<dir>/<name>.frgt`; returns both paths.
pub fn write_cache(bundle: &DataBundle, dir: &Path) -> Result<(PathBuf, PathBuf), crate::Error> {
    let (mpath, bpath) = paths(dir, &bundle.manifest.name);
    let mut blocks = Vec::new();
    push_split(&mut blocks, "train", &bundle.train);
    push_split(&mut blocks, "test", &bundle.test);
    for (name, d) in &bundle.extra {
        push_split(&mut blocks, name, d);
    }
    let json = serde_json::to_string_pretty(&bundle.manifest)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    fs::write(&mpath, json).map_err(|e| crate::Error::io(&mpath, e))?;
    let bytes = encode_blocks(blocks.iter().map(|(n, t)| (n.as_str(), t)));
    fs::write(&bpath, bytes).map_err(|e| crate::Error::io(&bpath, e))?;
    Ok((mpath, bpath))
}

/// Reads a cache written by [`write_cache`].
pub fn read_cache(dir: &Path, name: &str) -> Result<DataBundle, crate::Error> {
    let (mpath, bpath) = paths(dir, name);
    if !mpath.exists() {
        return Err(DataError::Missing(mpath).into());
    }
    let text = fs::read_to_string(&mpath).map_err(|e| crate::Error::io(&mpath, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| DataError::Malformed {
        path: mpath.clone(),
        reason: e.to_string(),
    })?;
    let bytes = fs::read(&bpath).map_err(|e| crate::Error::io(&bpath, e))?;
    let blocks = decode_blocks(&bytes)?;
    let find = |n: &str| -> Result<&Tensor, DataError> {
        blocks
            .iter()
            .find(|(b, _)| b == n)
            .map(|(_, t)| t)
            .ok_or_else(|| DataError::Malformed {
                path: bpath.clone(),
                reason: format!("missing block `{n}`"),
            })
    };
    let tasks = manifest.y_classes.len();
    let split = |name: &str| -> Result<Dataset, DataError> {
        let x = find(&format!("{name}.x"))?.clone();
        let n = x.rows();
        let col = |t: &Tensor| -> Vec<usize> { t.data()[..n].iter().map(|&v| v as usize).collect() };
        let mut y = Vec::new();
        let mut s = Vec::new();
        for j in 0..tasks {
            y.push(col(find(&format!("{name}.y{j}"))?));
            s.push(col(find(&format!("{name}.s{j}"))?));
        }
        Dataset::new(x, y, s)
    };
    let train = split("train")?;
    let test = split("test")?;
    let mut extra = Vec::new();
    for (name, _) in manifest.splits.iter().skip(2) {
        extra.push((name.clone(), split(name)?));
    }
    Ok(DataBundle::new(manifest, train, test, extra)?)
}
