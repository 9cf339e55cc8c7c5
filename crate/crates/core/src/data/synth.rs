//! Deterministic synthetic image sets.
//!
//! Stands in for the MNIST/Fashion-MNIST downloads in offline environments:
//! ten fixed class templates per task (Gaussian blobs plus a stroke, each
//! class anchored in its own image sector), and examples drawn as jittered,
//! rescaled, noised copies quantized to the same 8-bit pixel grid as the
//! IDX files, so save/load round-trips exactly.
//!
//! Templates depend only on the task and class; the data seed controls the
//! per-example jitter, scale, and pixel noise streams, with train and test
//! splits drawn from disjoint streams.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{LabeledSet, Split, Task, NUM_CLASSES};
use crate::rng;

const SIDE: usize = 28;
const TEMPLATE_SEED: u64 = 0x7354_594c_4531;

fn template(task: Task, class: usize) -> Vec<f64> {
    let purpose = format!("synth-template-{}", task.label());
    let mut r = rng::stream(TEMPLATE_SEED, &purpose, class as u64);
    let mut img = vec![0.0; SIDE * SIDE];

    // Each class owns a sector: blob mass clusters around an anchor on a
    // ring, so classes differ in gross spatial layout the way real image
    // categories do, not just in fine texture. Neighbors on the ring
    // overlap (models must share features and stay uncertain between
    // them) while classes far apart on the ring stay distinct. The digit
    // task packs its anchors tighter than the garment task, mirroring how
    // digits confuse each other more than garment categories do.
    let angle = std::f64::consts::TAU * (class as f64 + r.random_range(-0.2..0.2)) / 10.0;
    let ring: f64 = match task {
        Task::Mnist => r.random_range(4.5..6.0),
        Task::Fashion => r.random_range(5.0..6.5),
    };
    let (ax, ay) = (14.0 + ring * angle.cos(), 14.0 + ring * angle.sin());

    for _ in 0..3 {
        let cx: f64 = (ax + r.random_range(-3.5..3.5)).clamp(4.0, 24.0);
        let cy: f64 = (ay + r.random_range(-3.5..3.5)).clamp(4.0, 24.0);
        let sigma: f64 = r.random_range(2.4..4.8);
        let amp: f64 = r.random_range(0.55..0.95);
        for row in 0..SIDE {
            for col in 0..SIDE {
                let d2 = (row as f64 - cy).powi(2) + (col as f64 - cx).powi(2);
                img[row * SIDE + col] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    // A stroke through the anchor at a class-specific orientation.
    let theta = std::f64::consts::PI * class as f64 / 10.0 + r.random_range(-0.25..0.25);
    let half: f64 = r.random_range(5.0..8.0);
    let (x1, y1) = (ax - half * theta.cos(), ay - half * theta.sin());
    let (x2, y2) = (ax + half * theta.cos(), ay + half * theta.sin());
    let amp: f64 = r.random_range(0.6..0.9);
    let thickness = 1.6;
    let (dx, dy) = (x2 - x1, y2 - y1);
    let len2 = (dx * dx + dy * dy).max(1e-9);
    for row in 0..SIDE {
        for col in 0..SIDE {
            let (px, py) = (col as f64 - x1, row as f64 - y1);
            let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
            let dist = ((px - t * dx).powi(2) + (py - t * dy).powi(2)).sqrt();
            if dist < thickness {
                img[row * SIDE + col] += amp * (1.0 - dist / thickness);
            }
        }
    }

    for p in &mut img {
        *p = p.clamp(0.0, 1.0);
    }
    img
}

fn jittered(template: &[f64], dx: i64, dy: i64) -> impl Fn(usize, usize) -> f64 + '_ {
    move |row, col| {
        let (r, c) = (row as i64 - dy, col as i64 - dx);
        if (0..SIDE as i64).contains(&r) && (0..SIDE as i64).contains(&c) {
            template[r as usize * SIDE + c as usize]
        } else {
            0.0
        }
    }
}

/// Generate `count` examples with balanced labels `i mod 10`.
pub fn generate_synthetic(task: Task, split: Split, count: usize, data_seed: u64) -> LabeledSet {
    let templates: Vec<Vec<f64>> = (0..NUM_CLASSES).map(|c| template(task, c)).collect();
    let purpose = format!("synth-{}-{}", task.label(), split.label());
    let mut r = rng::stream(data_seed, &purpose, 0);

    let mut inputs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % NUM_CLASSES;
        let scale: f64 = r.random_range(0.75..1.1);
        let dx: i64 = r.random_range(-2..=2);
        let dy: i64 = r.random_range(-2..=2);
        let sample = jittered(&templates[class], dx, dy);
        let mut img = Vec::with_capacity(SIDE * SIDE);
        for row in 0..SIDE {
            for col in 0..SIDE {
                let noise: f64 = r.sample::<f64, _>(StandardNormal) * 0.06;
                let value = (scale * sample(row, col) + noise).clamp(0.0, 1.0);
                img.push((value * 255.0).round() / 255.0);
            }
        }
        inputs.push(img);
        labels.push(class as u8);
    }
    LabeledSet {
        inputs,
        labels,
        task,
        split,
    }
}
