//! Regenerates the committed 28x28 image fixture pair under tests/data.

use noisylab::datasets::fixtures::synthetic_digits;
use noisylab::datasets::{write_idx_images, write_idx_labels};
use noisylab::rng::seeded;
use std::path::Path;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    std::fs::create_dir_all(&dir).expect("create tests/data");
    let data = synthetic_digits(1000, &mut seeded(424242)).expect("generate fixture");
    write_idx_images(&dir.join("digits.images.idx"), 28, 28, &data.features)
        .expect("write images");
    write_idx_labels(&dir.join("digits.labels.idx"), &data.labels).expect("write labels");
    println!("wrote {} samples to {}", data.len(), dir.display());
}
