//! Shared synthetic-dataset generator for the integration tests.
//!
//! Builds a 4-class texture corpus laid out like the real data
//! (`<root>/<split>/<class>/*.pgm`) whose classes are separable by the
//! gradient/texture descriptors: oriented gratings, Gaussian blobs,
//! uniform noise, and near-constant images.

use std::fs;
use std::path::Path;

use radpipe::imgio::{encode_pgm, Domain, Image, CLASS_NAMES};
use radpipe::rng::CounterRng;

fn grating(size: usize, rng: &mut CounterRng) -> Vec<f32> {
    let theta = if rng.bernoulli(0.5) { 0.0f64 } else { std::f64::consts::FRAC_PI_2 };
    let wavelength = rng.uniform(4.0, 8.0);
    let phase = rng.uniform(0.0, std::f64::consts::TAU);
    let (ct, st) = (theta.cos(), theta.sin());
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let t = (x as f64 * ct + y as f64 * st) * std::f64::consts::TAU / wavelength + phase;
            data.push((127.5 * (1.0 + t.sin())) as f32);
        }
    }
    data
}

fn blobs(size: usize, rng: &mut CounterRng) -> Vec<f32> {
    let mut centers = Vec::new();
    for _ in 0..3 {
        centers.push((
            rng.uniform(8.0, size as f64 - 8.0),
            rng.uniform(8.0, size as f64 - 8.0),
            rng.uniform(3.0, 7.0),
        ));
    }
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let mut v = 0.0f64;
            for &(cx, cy, sigma) in &centers {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                v += 255.0 * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            data.push(v.min(255.0) as f32);
        }
    }
    data
}

fn noise(size: usize, rng: &mut CounterRng) -> Vec<f32> {
    (0..size * size).map(|_| (rng.below(256)) as f32).collect()
}

fn constant(size: usize, rng: &mut CounterRng) -> Vec<f32> {
    let level = rng.uniform(50.0, 200.0).round() as f32;
    vec![level; size * size]
}

fn synth_image(class: usize, size: usize, rng: &mut CounterRng) -> Image {
    let data = match class {
        0 => grating(size, rng),
        1 => blobs(size, rng),
        2 => noise(size, rng),
        _ => constant(size, rng),
    };
    Image::new(size, size, data, Domain::Raw8).unwrap()
}

/// Write `per_class_train` training and `per_class_test` testing images
/// per class under `root`, deterministically from `seed`.
pub fn write_synthetic_dataset(
    root: &Path,
    per_class_train: usize,
    per_class_test: usize,
    size: usize,
    seed: u64,
) {
    let mut counter = 0u64;
    for (split, per_class) in [("Training", per_class_train), ("Testing", per_class_test)] {
        for (class_idx, class) in CLASS_NAMES.iter().enumerate() {
            let dir = root.join(split).join(class);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..per_class {
                let mut rng = CounterRng::new(seed, counter);
                counter += 1;
                let img = synth_image(class_idx, size, &mut rng);
                fs::write(dir.join(format!("img_{:04}.pgm", i)), encode_pgm(&img)).unwrap();
            }
        }
    }
}
