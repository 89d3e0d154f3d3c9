//! Data ingestion and synthesis: circle-data generator, IDX binary reader and
//! writer, deterministic splits and noisy-dataset construction.

use crate::error::{Error, IdxError, Result};
use crate::noise::NoiseModel;
use crate::rng::Rng;
use crate::simplex::LabelId;
use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::Read;
use std::path::Path;

pub mod fixtures;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Provenance of a dataset: source tag, generator seed and injected noise.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub seed: Option<u64>,
    pub noise: Option<NoiseModel>,
}

/// Feature matrix plus labels; `clean_labels` is retained exactly when noise
/// was injected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<LabelId>,
    pub clean_labels: Option<Vec<LabelId>>,
    pub k: usize,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn check(&self) -> Result<()> {
        if self.labels.len() != self.features.len() {
            return Err(Error::InvalidParameter("row counts disagree".into()));
        }
        if let Some(clean) = &self.clean_labels {
            if clean.len() != self.features.len() {
                return Err(Error::InvalidParameter("clean label count disagrees".into()));
            }
        }
        if self.labels.iter().any(|y| y.value() > self.k) {
            return Err(Error::InvalidParameter("label out of range".into()));
        }
        Ok(())
    }

    /// CSV export: feature columns, then label, then clean_label (empty when
    /// no noise was injected).
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        header.push("clean_label".into());
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let mut row: Vec<String> = self.features[i].iter().map(|x| x.to_string()).collect();
            row.push(self.labels[i].to_string());
            row.push(match &self.clean_labels {
                Some(clean) => clean[i].to_string(),
                None => String::new(),
            });
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Two concentric rings: n/2 points on the unit circle (class 1) and n/2 on
/// radius `factor` (class 2), angles equally spaced, then i.i.d. Gaussian
/// perturbation per coordinate.
pub fn make_circles(n: usize, noise_sigma: f64, factor: f64, rng: &mut Rng) -> Result<LabeledDataset> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!("n must be even and positive, got {n}")));
    }
    if !(0.0 < factor && factor < 1.0) {
        return Err(Error::InvalidParameter(format!("factor {factor} outside (0, 1)")));
    }
    if noise_sigma < 0.0 {
        return Err(Error::InvalidParameter("noise_sigma must be non-negative".into()));
    }
    let half = n / 2;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (radius, class) in [(1.0, 1), (factor, 2)] {
        for i in 0..half {
            let angle = TAU * i as f64 / half as f64;
            let (dx, dy) = if noise_sigma > 0.0 {
                let (a, b) = gaussian_pair(rng);
                (noise_sigma * a, noise_sigma * b)
            } else {
                (0.0, 0.0)
            };
            features.push(vec![radius * angle.cos() + dx, radius * angle.sin() + dy]);
            labels.push(LabelId::new(class, 2)?);
        }
    }
    Ok(LabeledDataset {
        features,
        labels,
        clean_labels: None,
        k: 2,
        meta: DatasetMeta {
            source: format!("circles(n={n},sigma={noise_sigma},factor={factor})"),
            seed: None,
            noise: None,
        },
    })
}

/// Box-Muller pair of independent standard normals.
fn gaussian_pair(rng: &mut Rng) -> (f64, f64) {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Contents of an IDX file: flattened images scaled to [0, 1], or labels
/// mapped to 1..=10.
#[derive(Debug, Clone)]
pub enum IdxContent {
    /// (rows per image, columns per image, flattened pixel rows).
    Images { rows: usize, cols: usize, data: Vec<Vec<f64>> },
    Labels(Vec<LabelId>),
}

/// Parses the IDX binary format: big-endian magic 0x803 (u8 images, dims
/// [n, rows, cols]) or 0x801 (u8 labels, dims [n]).
pub fn read_idx(path: &Path) -> Result<IdxContent> {
    let bytes = std::fs::read(path)?;
    let mut cursor = std::io::Cursor::new(&bytes);
    let magic = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| IdxError::Truncated { expected: 4, found: bytes.len() })?;
    match magic {
        IDX_IMAGES_MAGIC => {
            let mut dims = [0usize; 3];
            for d in &mut dims {
                *d = cursor
                    .read_u32::<BigEndian>()
                    .map_err(|_| IdxError::Truncated { expected: 16, found: bytes.len() })?
                    as usize;
            }
            let [n, rows, cols] = dims;
            let expected = 16 + n * rows * cols;
            if bytes.len() != expected {
                return Err(if bytes.len() < expected {
                    IdxError::Truncated { expected, found: bytes.len() }.into()
                } else {
                    IdxError::DimensionMismatch(format!(
                        "payload {} bytes does not match dims {n}x{rows}x{cols}",
                        bytes.len() - 16
                    ))
                    .into()
                });
            }
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut pixels = vec![0u8; rows * cols];
                cursor.read_exact(&mut pixels)?;
                data.push(pixels.iter().map(|&p| p as f64 / 255.0).collect());
            }
            Ok(IdxContent::Images { rows, cols, data })
        }
        IDX_LABELS_MAGIC => {
            let n = cursor
                .read_u32::<BigEndian>()
                .map_err(|_| IdxError::Truncated { expected: 8, found: bytes.len() })?
                as usize;
            let expected = 8 + n;
            if bytes.len() != expected {
                return Err(if bytes.len() < expected {
                    IdxError::Truncated { expected, found: bytes.len() }.into()
                } else {
                    IdxError::DimensionMismatch(format!(
                        "payload {} bytes does not match n = {n}",
                        bytes.len() - 8
                    ))
                    .into()
                });
            }
            let mut raw = vec![0u8; n];
            cursor.read_exact(&mut raw)?;
            let labels = raw
                .iter()
                .map(|&b| LabelId::new(b as usize + 1, 10))
                .collect::<Result<Vec<_>>>()
                .map_err(|_| IdxError::DimensionMismatch("label byte out of 0..=9".into()))?;
            Ok(IdxContent::Labels(labels))
        }
        other => Err(IdxError::BadMagic(other).into()),
    }
}

/// Writes an image tensor (values in [0, 1], quantized to u8) in IDX form.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, data: &[Vec<f64>]) -> Result<()> {
    let mut out = Vec::with_capacity(16 + data.len() * rows * cols);
    out.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    out.write_u32::<BigEndian>(data.len() as u32)?;
    out.write_u32::<BigEndian>(rows as u32)?;
    out.write_u32::<BigEndian>(cols as u32)?;
    for image in data {
        if image.len() != rows * cols {
            return Err(IdxError::DimensionMismatch(format!(
                "image has {} pixels, dims say {}",
                image.len(),
                rows * cols
            ))
            .into());
        }
        for &p in image {
            out.push((p.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes labels (1..=10, stored as 0..=9) in IDX form.
pub fn write_idx_labels(path: &Path, labels: &[LabelId]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    out.write_u32::<BigEndian>(labels.len() as u32)?;
    for y in labels {
        out.push(y.index() as u8);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a paired (images, labels) IDX file set as one dataset.
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let IdxContent::Images { data, .. } = read_idx(images)? else {
        return Err(IdxError::DimensionMismatch(format!("{} is not an image file", images.display())).into());
    };
    let IdxContent::Labels(labels_vec) = read_idx(labels)? else {
        return Err(IdxError::DimensionMismatch(format!("{} is not a label file", labels.display())).into());
    };
    if data.len() != labels_vec.len() {
        return Err(IdxError::DimensionMismatch(format!(
            "{} images but {} labels",
            data.len(),
            labels_vec.len()
        ))
        .into());
    }
    Ok(LabeledDataset {
        features: data,
        labels: labels_vec,
        clean_labels: None,
        k: 10,
        meta: DatasetMeta {
            source: format!("idx({})", images.display()),
            seed: None,
            noise: None,
        },
    })
}

/// Seeded permutation followed by contiguous slices; the three parts are
/// disjoint by construction.
pub fn split(
    dataset: &LabeledDataset,
    sizes: (usize, usize, usize),
    rng: &mut Rng,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    dataset.check()?;
    let (n_train, n_val, n_test) = sizes;
    if n_train + n_val + n_test > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "split sizes {:?} oversubscribe {} rows",
            sizes,
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let take = |range: std::ops::Range<usize>| -> LabeledDataset {
        let idx = &order[range];
        LabeledDataset {
            features: idx.iter().map(|&i| dataset.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| dataset.labels[i]).collect(),
            clean_labels: dataset
                .clean_labels
                .as_ref()
                .map(|clean| idx.iter().map(|&i| clean[i]).collect()),
            k: dataset.k,
            meta: dataset.meta.clone(),
        }
    };
    Ok((
        take(0..n_train),
        take(n_train..n_train + n_val),
        take(n_train + n_val..n_train + n_val + n_test),
    ))
}

/// Injects label noise: labels are resampled via the model's transition rows,
/// clean labels retained, features and row order untouched.
pub fn make_noisy_dataset(
    dataset: &LabeledDataset,
    noise: &NoiseModel,
    rng: &mut Rng,
    seed_for_meta: u64,
) -> Result<LabeledDataset> {
    dataset.check()?;
    let ids: Vec<String> = (0..dataset.len()).map(|i| i.to_string()).collect();
    let flipped = noise.flip_labels(&dataset.labels, Some(&ids), rng)?;
    Ok(LabeledDataset {
        features: dataset.features.clone(),
        labels: flipped,
        clean_labels: Some(dataset.labels.clone()),
        k: dataset.k,
        meta: DatasetMeta {
            source: dataset.meta.source.clone(),
            seed: Some(seed_for_meta),
            noise: Some(noise.clone()),
        },
    })
}

const CACHE_MAGIC: &[u8; 4] = b"NLDS";
const CACHE_VERSION: u32 = 1;

/// Compact binary cache: magic "NLDS", version, n, d, k, clean-label flag,
/// then row-major f64 LE features, u32 LE labels and optional clean labels.
pub fn write_cache(path: &Path, dataset: &LabeledDataset) -> Result<()> {
    dataset.check()?;
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.write_u32::<LittleEndian>(CACHE_VERSION)?;
    out.write_u32::<LittleEndian>(dataset.len() as u32)?;
    out.write_u32::<LittleEndian>(dataset.dim() as u32)?;
    out.write_u32::<LittleEndian>(dataset.k as u32)?;
    out.push(dataset.clean_labels.is_some() as u8);
    for row in &dataset.features {
        for &x in row {
            out.write_f64::<LittleEndian>(x)?;
        }
    }
    for y in &dataset.labels {
        out.write_u32::<LittleEndian>(y.value() as u32)?;
    }
    if let Some(clean) = &dataset.clean_labels {
        for y in clean {
            out.write_u32::<LittleEndian>(y.value() as u32)?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<LabeledDataset> {
    let bytes = std::fs::read(path)?;
    let mut cursor = std::io::Cursor::new(&bytes);
    let mut magic = [0u8; 4];
    cursor.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::InvalidParameter("not a dataset cache file".into()));
    }
    let version = cursor.read_u32::<LittleEndian>()?;
    if version != CACHE_VERSION {
        return Err(Error::InvalidParameter(format!("unsupported cache version {version}")));
    }
    let n = cursor.read_u32::<LittleEndian>()? as usize;
    let d = cursor.read_u32::<LittleEndian>()? as usize;
    let k = cursor.read_u32::<LittleEndian>()? as usize;
    let has_clean = cursor.read_u8()? != 0;
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            row.push(cursor.read_f64::<LittleEndian>()?);
        }
        features.push(row);
    }
    let read_labels = |cursor: &mut std::io::Cursor<&Vec<u8>>| -> Result<Vec<LabelId>> {
        (0..n)
            .map(|_| {
                let v = cursor.read_u32::<LittleEndian>()? as usize;
                LabelId::new(v, k)
            })
            .collect()
    };
    let labels = read_labels(&mut cursor)?;
    let clean_labels = if has_clean { Some(read_labels(&mut cursor)?) } else { None };
    Ok(LabeledDataset {
        features,
        labels,
        clean_labels,
        k,
        meta: DatasetMeta {
            source: format!("cache({})", path.display()),
            seed: None,
            noise: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use tempfile::tempdir;

    #[test]
    fn circles_geometry() {
        let data = make_circles(4, 0.0, 0.5, &mut seeded(1)).unwrap();
        let radii: Vec<f64> = data
            .features
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .collect();
        assert!((radii[0] - 1.0).abs() < 1e-12 && (radii[1] - 1.0).abs() < 1e-12);
        assert!((radii[2] - 0.5).abs() < 1e-12 && (radii[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn circles_balance_and_validation() {
        let data = make_circles(1000, 0.1, 0.5, &mut seeded(2)).unwrap();
        let ones = data.labels.iter().filter(|y| y.value() == 1).count();
        assert_eq!(ones, 500);
        assert!(make_circles(5, 0.1, 0.5, &mut seeded(2)).is_err());
        assert!(make_circles(10, 0.1, 1.5, &mut seeded(2)).is_err());
        assert!(make_circles(10, -0.1, 0.5, &mut seeded(2)).is_err());
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempdir().unwrap();
        let images_path = dir.path().join("img.idx");
        let labels_path = dir.path().join("lbl.idx");
        let images: Vec<Vec<f64>> = (0..7)
            .map(|i| (0..28 * 28).map(|j| ((i * 31 + j) % 256) as f64 / 255.0).collect())
            .collect();
        let labels: Vec<LabelId> = (0..7).map(|i| LabelId::new(i % 10 + 1, 10).unwrap()).collect();
        write_idx_images(&images_path, 28, 28, &images).unwrap();
        write_idx_labels(&labels_path, &labels).unwrap();

        let data = load_idx_pair(&images_path, &labels_path).unwrap();
        assert_eq!(data.len(), 7);
        assert_eq!(data.dim(), 784);
        assert_eq!(data.labels, labels);
        // u8 quantization is exact for values that are multiples of 1/255.
        assert_eq!(data.features, images);
    }

    #[test]
    fn idx_bad_magic_and_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, 0x0000_0899u32.to_be_bytes()).unwrap();
        assert!(matches!(
            read_idx(&path),
            Err(Error::Idx(IdxError::BadMagic(0x0000_0899)))
        ));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&[0u8; 100]); // far short of 2*784
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_idx(&path), Err(Error::Idx(IdxError::Truncated { .. }))));
    }

    #[test]
    fn split_disjoint_and_deterministic() {
        let data = make_circles(100, 0.1, 0.5, &mut seeded(3)).unwrap();
        let (a1, b1, c1) = split(&data, (60, 20, 20), &mut seeded(4)).unwrap();
        let (a2, _, _) = split(&data, (60, 20, 20), &mut seeded(4)).unwrap();
        assert_eq!(a1.features, a2.features);
        assert_eq!(a1.len(), 60);
        assert_eq!(b1.len(), 20);
        assert_eq!(c1.len(), 20);
        // Disjointness: no feature row shared (rows are unique in circle data).
        for row in &b1.features {
            assert!(!a1.features.contains(row));
            assert!(!c1.features.contains(row));
        }
        assert!(split(&data, (80, 20, 20), &mut seeded(4)).is_err());
    }

    #[test]
    fn noise_injection_contract() {
        let data = make_circles(2000, 0.1, 0.5, &mut seeded(5)).unwrap();
        let clean_model = NoiseModel::symmetric(0.0, 2).unwrap();
        let noiseless = make_noisy_dataset(&data, &clean_model, &mut seeded(6), 6).unwrap();
        assert_eq!(noiseless.labels, noiseless.clean_labels.clone().unwrap());

        let model = NoiseModel::symmetric(0.2, 2).unwrap();
        let noisy_a = make_noisy_dataset(&data, &model, &mut seeded(7), 7).unwrap();
        let noisy_b = make_noisy_dataset(&data, &model, &mut seeded(7), 7).unwrap();
        assert_eq!(noisy_a.labels, noisy_b.labels);
        assert_eq!(noisy_a.features, data.features);
        let flips = noisy_a
            .labels
            .iter()
            .zip(noisy_a.clean_labels.as_ref().unwrap())
            .filter(|(a, b)| a != b)
            .count();
        // 3.5 sigma binomial interval around 0.2 for n = 2000.
        let frac = flips as f64 / 2000.0;
        assert!((frac - 0.2).abs() < 3.5 * (0.2f64 * 0.8 / 2000.0).sqrt(), "flip fraction {frac}");
    }

    #[test]
    fn flip_fraction_mnist_scale() {
        let labels: Vec<LabelId> = (0..50_000).map(|i| LabelId::new(i % 10 + 1, 10).unwrap()).collect();
        let data = LabeledDataset {
            features: vec![vec![0.0]; 50_000],
            labels,
            clean_labels: None,
            k: 10,
            meta: DatasetMeta::default(),
        };
        let model = NoiseModel::symmetric(0.5, 10).unwrap();
        let noisy = make_noisy_dataset(&data, &model, &mut seeded(8), 8).unwrap();
        let flips = noisy
            .labels
            .iter()
            .zip(noisy.clean_labels.as_ref().unwrap())
            .filter(|(a, b)| a != b)
            .count();
        let frac = flips as f64 / 50_000.0;
        assert!((frac - 0.5).abs() < 0.008, "flip fraction {frac}");
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.nlds");
        let data = make_circles(50, 0.05, 0.5, &mut seeded(9)).unwrap();
        let model = NoiseModel::symmetric(0.1, 2).unwrap();
        let noisy = make_noisy_dataset(&data, &model, &mut seeded(10), 10).unwrap();
        write_cache(&path, &noisy).unwrap();
        let back = read_cache(&path).unwrap();
        assert_eq!(back.features, noisy.features);
        assert_eq!(back.labels, noisy.labels);
        assert_eq!(back.clean_labels, noisy.clean_labels);
        assert_eq!(back.k, 2);
    }

    #[test]
    fn csv_export_shape() {
        let data = make_circles(4, 0.0, 0.5, &mut seeded(11)).unwrap();
        let csv = data.to_csv();
        assert!(csv.starts_with("f0,f1,label,clean_label\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
