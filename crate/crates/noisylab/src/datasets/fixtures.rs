//! Procedurally generated 28x28 image fixtures.
//!
//! Real digit scans are user-supplied and not bundled. For self-contained
//! tests and desk-scale experiments this module synthesizes a 10-class image
//! dataset with the same geometry (28x28 grayscale, u8 quantized, IDX
//! serializable): each class is a fixed blob prototype, each sample adds
//! sample-specific blobs and pixel noise so inputs are distinct and a
//! high-capacity model can memorize arbitrary labels.

use super::{DatasetMeta, LabeledDataset};
use crate::error::Result;
use crate::rng::Rng;
use crate::simplex::LabelId;
use rand::Rng as _;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const CLASSES: usize = 10;

/// A Gaussian intensity bump on the image plane.
#[derive(Clone, Copy)]
struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amplitude: f64,
}

impl Blob {
    fn random(rng: &mut Rng, amp_lo: f64, amp_hi: f64) -> Self {
        Blob {
            cx: rng.gen_range(5.0..23.0),
            cy: rng.gen_range(5.0..23.0),
            sigma: rng.gen_range(1.8..3.6),
            amplitude: rng.gen_range(amp_lo..amp_hi),
        }
    }

    fn render(&self, image: &mut [f64]) {
        for y in 0..SIDE {
            for x in 0..SIDE {
                let dx = x as f64 - self.cx;
                let dy = y as f64 - self.cy;
                let v = self.amplitude * (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp();
                image[y * SIDE + x] += v;
            }
        }
    }
}

fn class_prototypes(rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..CLASSES)
        .map(|_| {
            let mut image = vec![0.0; PIXELS];
            for _ in 0..6 {
                Blob::random(rng, 0.55, 1.0).render(&mut image);
            }
            let max = image.iter().cloned().fold(0.0, f64::max).max(1e-9);
            image.iter().map(|v| v / max).collect()
        })
        .collect()
}

/// Generates `n` samples, classes assigned round-robin so counts are
/// balanced. Pixels are quantized to u8 resolution like the IDX pipeline.
pub fn synthetic_digits(n: usize, rng: &mut Rng) -> Result<LabeledDataset> {
    let prototypes = class_prototypes(rng);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % CLASSES;
        let mut image = prototypes[class].iter().map(|v| 0.75 * v).collect::<Vec<f64>>();
        for _ in 0..4 {
            Blob::random(rng, 0.25, 0.60).render(&mut image);
        }
        for pixel in &mut image {
            let noise: f64 = rng.gen_range(-0.12..0.12);
            *pixel = ((*pixel + noise).clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
        features.push(image);
        labels.push(LabelId::new(class + 1, CLASSES)?);
    }
    Ok(LabeledDataset {
        features,
        labels,
        clean_labels: None,
        k: CLASSES,
        meta: DatasetMeta {
            source: format!("synthetic_digits(n={n})"),
            seed: None,
            noise: None,
        },
    })
}
