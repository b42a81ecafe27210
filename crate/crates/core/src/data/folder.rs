use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::io::image_to_tensor;
use super::Dataset;
use crate::autograd::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolderOptions {
    /// Images are resized to `image_size x image_size`.
    pub image_size: usize,
    /// Fail on the first unreadable file instead of skipping it.
    #[serde(default)]
    pub strict: bool,
}

/// PNG files of one directory, sorted by name and decoded on access.
#[derive(Clone, Debug)]
pub struct FolderDataset {
    paths: Vec<PathBuf>,
    image_size: usize,
}

impl FolderDataset {
    pub fn from_paths(paths: Vec<PathBuf>, image_size: usize) -> Self {
        FolderDataset { paths, image_size }
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }
}

fn is_png(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_png(p))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_folder(dir: &Path, opts: &FolderOptions) -> Result<FolderDataset> {
    if opts.image_size == 0 {
        return Err(Error::config("image_size must be positive"));
    }
    let mut paths = Vec::new();
    for p in png_files(dir)? {
        match image::image_dimensions(&p) {
            Ok(_) => paths.push(p),
            Err(e) if opts.strict => {
                return Err(Error::Image {
                    path: Some(p),
                    message: e.to_string(),
                })
            }
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(FolderDataset {
        paths,
        image_size: opts.image_size,
    })
}

impl Dataset for FolderDataset {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn get(&self, index: usize) -> Result<Tensor<f32>> {
        let path = self
            .paths
            .get(index)
            .ok_or_else(|| Error::range(format!("index {index} out of {} items", self.paths.len())))?;
        let img = image::open(path).map_err(|e| Error::Image {
            path: Some(path.clone()),
            message: e.to_string(),
        })?;
        let s = self.image_size as u32;
        let img = if img.width() == s && img.height() == s {
            img.to_rgb8()
        } else {
            img.resize_exact(s, s, FilterType::Triangle).to_rgb8()
        };
        Ok(image_to_tensor(&img))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub domain: String,
    pub split: Split,
    pub sha256: String,
}

/// Paths, split, and checksums of a two-domain folder dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl Manifest {
    pub const VERSION: u32 = 1;

    /// Lists both folders and assigns `test_fraction` of each domain to the
    /// test split by a seeded permutation.
    pub fn build(dir_x: &Path, dir_y: &Path, test_fraction: f64, seed: u64) -> Result<Manifest> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::config("test_fraction must be in [0, 1)"));
        }
        let mut entries = Vec::new();
        for (domain, dir, stream) in [("x", dir_x, 1u64), ("y", dir_y, 2)] {
            let paths = png_files(dir)?;
            let mut order: Vec<usize> = (0..paths.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            order.shuffle(&mut rng);
            let n_test = (paths.len() as f64 * test_fraction).round() as usize;
            let mut test = vec![false; paths.len()];
            for &i in &order[..n_test] {
                test[i] = true;
            }
            for (i, p) in paths.iter().enumerate() {
                entries.push(ManifestEntry {
                    path: p.clone(),
                    domain: domain.to_string(),
                    split: if test[i] { Split::Test } else { Split::Train },
                    sha256: sha256_file(p)?,
                });
            }
        }
        Ok(Manifest {
            version: Self::VERSION,
            seed,
            entries,
        })
    }

    /// Recomputes every checksum; returns the paths that changed.
    pub fn verify(&self) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for e in &self.entries {
            if sha256_file(&e.path)? != e.sha256 {
                bad.push(e.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn dataset(&self, domain: &str, split: Split, image_size: usize) -> FolderDataset {
        let paths = self
            .entries
            .iter()
            .filter(|e| e.domain == domain && e.split == split)
            .map(|e| e.path.clone())
            .collect();
        FolderDataset::from_paths(paths, image_size)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let m: Manifest = serde_json::from_slice(&std::fs::read(path)?)?;
        if m.version != Self::VERSION {
            return Err(Error::config(format!("manifest version {} is not supported", m.version)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::io::write_png;
    use crate::model::ImageBatch;

    fn write_images(dir: &Path, n: usize, size: usize) {
        for i in 0..n {
            let t = Tensor::from_fn([1, 3, size, size], |[_, c, y, x]| ((i + c + y + x) % 5) as f32 / 5.0 - 0.5);
            write_png(&dir.join(format!("img{i:02}.png")), &ImageBatch::new(t).unwrap(), 0).unwrap();
        }
    }

    #[test]
    fn count_order_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), 5, 32);
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let opts = FolderOptions { image_size: 16, strict: true };
        let ds = load_folder(dir.path(), &opts).unwrap();
        assert_eq!(ds.len(), 5);
        let names: Vec<_> = ds.paths().iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(ds.get(3).unwrap().shape(), [1, 3, 16, 16]);
        assert_eq!(ds.get(3).unwrap(), load_folder(dir.path(), &opts).unwrap().get(3).unwrap());
    }

    #[test]
    fn unreadable_files_skip_or_fail() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), 2, 16);
        std::fs::write(dir.path().join("broken.png"), b"nope").unwrap();
        let lax = load_folder(dir.path(), &FolderOptions { image_size: 16, strict: false }).unwrap();
        assert_eq!(lax.len(), 2);
        let strict = load_folder(dir.path(), &FolderOptions { image_size: 16, strict: true });
        assert!(matches!(strict, Err(Error::Image { .. })));
    }

    #[test]
    fn manifest_round_trip_and_checksums() {
        let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_images(x.path(), 10, 16);
        write_images(y.path(), 10, 16);
        let m = Manifest::build(x.path(), y.path(), 0.1, 4).unwrap();
        assert_eq!(m.dataset("x", Split::Test, 16).len(), 1);
        assert_eq!(m.dataset("y", Split::Train, 16).len(), 9);
        assert_eq!(m, Manifest::build(x.path(), y.path(), 0.1, 4).unwrap());
        let file = x.path().join("manifest.json");
        m.save(&file).unwrap();
        assert_eq!(Manifest::load(&file).unwrap(), m);
        assert!(m.verify().unwrap().is_empty());
        std::fs::write(x.path().join("img03.png"), b"changed").unwrap();
        assert_eq!(m.verify().unwrap(), vec![x.path().join("img03.png")]);
    }
}
