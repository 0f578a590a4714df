//! Procedural image-classification data and per-client quality degradation.
//!
//! The base generator builds one smooth sinusoid template per class and adds
//! per-pixel Gaussian jitter, giving a task a small dense net learns quickly
//! but that is sensitive to noise, blur, and occlusion. Four degradation
//! settings then produce per-client datasets whose quality decreases strictly
//! with the client index, so the ground-truth quality ranking is always
//! `[1, 2, ..., N]`:
//!
//! - quantity: client i draws `⌊(1 − 0.5·i/N)·n⌋` samples from the pool
//!   (independent draws, overlap across clients allowed);
//! - noise: additive Gaussian pixel noise, mean `0.01·i`, std `0.625·i/N`;
//! - resolution: Gaussian blur with kernel size `2i+1`, std `0.4·i+1`;
//! - mask: a random rectangle covering a fraction of the image area drawn
//!   uniformly from `[0.5·i/N, 0.75·i/N]` is zeroed per sample.
//!
//! Noise, resolution, and mask split the pool evenly (`⌊n/N⌋` samples each)
//! before degrading. All generation is pure given a seed; per-client work can
//! run in parallel on independent derived streams.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, derive2, rng_from, stream};

/// Std of the per-pixel jitter added on top of each class template.
pub const JITTER_STD: f64 = 0.15;

/// Sinusoid components per class template.
const TEMPLATE_WAVES: usize = 3;

/// One image-shaped sample. Pixels are stored row-major in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub pixels: Vec<f64>,
    pub label: usize,
}

/// Training data held by one client (1-based client index).
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client: usize,
    pub samples: Vec<Sample>,
}

/// The four quality-degradation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingKind {
    Quantity,
    Noise,
    Resolution,
    Mask,
}

impl SettingKind {
    pub fn parse(s: &str) -> Option<SettingKind> {
        match s {
            "quantity" => Some(SettingKind::Quantity),
            "noise" => Some(SettingKind::Noise),
            "resolution" => Some(SettingKind::Resolution),
            "mask" => Some(SettingKind::Mask),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SettingKind::Quantity => "quantity",
            SettingKind::Noise => "noise",
            SettingKind::Resolution => "resolution",
            SettingKind::Mask => "mask",
        }
    }
}

impl std::fmt::Display for SettingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Known quality ordering of the clients. Degradation grows with the client
/// index under every setting, so the ranking is always the identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ranking: Vec<usize>,
}

impl GroundTruth {
    pub fn for_clients(n_clients: usize) -> GroundTruth {
        GroundTruth {
            ranking: (1..=n_clients).collect(),
        }
    }
}

/// Generates `n` class-balanced samples: per-class sinusoid template plus
/// per-pixel Gaussian jitter, clamped to `[0, 1]`. Labels are assigned
/// round-robin, so class counts differ by at most one.
pub fn generate_base(seed: u64, n: usize, h: usize, w: usize, c: usize) -> Result<Vec<Sample>> {
    if c < 2 {
        return Err(Error::Config(format!("generate_base: need at least 2 classes, got {c}")));
    }
    if h * w < 16 {
        return Err(Error::Config(format!(
            "generate_base: image {h}x{w} below the 16-pixel minimum"
        )));
    }
    if n < c {
        return Err(Error::Config(format!(
            "generate_base: {n} samples cannot cover {c} classes"
        )));
    }

    let mut rng = rng_from(seed);

    // Per-class template: 0.5 + sum of random-direction sinusoids.
    let mut templates = Vec::with_capacity(c);
    for _ in 0..c {
        let waves: Vec<(f64, f64, f64, f64)> = (0..TEMPLATE_WAVES)
            .map(|_| {
                let amp = rng.gen_range(0.1..0.2);
                let fx = rng.gen_range(0.5..2.5);
                let fy = rng.gen_range(0.5..2.5);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                (amp, fx, fy, phase)
            })
            .collect();
        let mut t = vec![0.5; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.5;
                for &(amp, fx, fy, phase) in &waves {
                    let arg = std::f64::consts::TAU
                        * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64)
                        + phase;
                    v += amp * arg.sin();
                }
                t[y * w + x] = v;
            }
        }
        templates.push(t);
    }

    let jitter = Normal::new(0.0, JITTER_STD).expect("valid normal");
    let mut samples = Vec::with_capacity(n);
    for idx in 0..n {
        let label = idx % c;
        let pixels = templates[label]
            .iter()
            .map(|&t| (t + jitter.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        samples.push(Sample { pixels, label });
    }
    Ok(samples)
}

/// Size of client `i`'s draw under the quantity setting.
pub fn quantity_size(pool: usize, i: usize, n_clients: usize) -> usize {
    ((1.0 - 0.5 * i as f64 / n_clients as f64) * pool as f64).floor() as usize
}

/// Quantity setting: client `i` draws `⌊(1 − 0.5·i/N)·|pool|⌋` samples without
/// replacement. Clients draw independently, so overlap across clients is
/// expected.
pub fn partition_quantity(
    pool: &[Sample],
    i: usize,
    n_clients: usize,
    seed: u64,
) -> Result<ClientDataset> {
    let size = quantity_size(pool.len(), i, n_clients);
    if size == 0 {
        return Err(Error::Config(format!(
            "quantity setting: client {i} of {n_clients} would receive 0 of {} samples",
            pool.len()
        )));
    }
    let mut rng = rng_from(derive2(seed, stream::CLIENT_DATA, i as u64));
    let picked = rand::seq::index::sample(&mut rng, pool.len(), size);
    let samples = picked.iter().map(|j| pool[j].clone()).collect();
    Ok(ClientDataset { client: i, samples })
}

/// Noise parameters for client `i` of `n_clients`: mean `0.01·i`, std
/// `0.625·i/N`.
pub fn noise_params(i: usize, n_clients: usize) -> (f64, f64) {
    (0.01 * i as f64, 0.625 * i as f64 / n_clients as f64)
}

/// Blur parameters for client `i`: kernel size `2i+1`, std `0.4·i+1`.
pub fn blur_params(i: usize) -> (usize, f64) {
    (2 * i + 1, 0.4 * i as f64 + 1.0)
}

/// Mask-fraction bounds for client `i` of `n_clients`: `[0.5·i/N, 0.75·i/N]`.
pub fn mask_bounds(i: usize, n_clients: usize) -> (f64, f64) {
    (0.5 * i as f64 / n_clients as f64, 0.75 * i as f64 / n_clients as f64)
}

/// Noise setting: adds `Normal(0.01·i, (0.625·i/N)²)` to every pixel, then
/// clamps back to `[0, 1]`.
pub fn apply_noise(samples: Vec<Sample>, i: usize, n_clients: usize, seed: u64) -> ClientDataset {
    let (mu, sigma) = noise_params(i, n_clients);
    let noise = Normal::new(mu, sigma).expect("valid normal");
    let mut rng = rng_from(derive2(seed, stream::CLIENT_DATA, i as u64));
    let samples = samples
        .into_iter()
        .map(|mut s| {
            for p in &mut s.pixels {
                *p = (*p + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
            s
        })
        .collect();
    ClientDataset { client: i, samples }
}

/// Resolution setting: 2-D Gaussian blur with kernel size `2i+1` and std
/// `0.4·i+1`, reflect padding at the borders, kernel normalized to sum 1.
pub fn apply_blur(
    samples: Vec<Sample>,
    i: usize,
    h: usize,
    w: usize,
) -> Result<ClientDataset> {
    let (size, sigma) = blur_params(i);
    if size > h.min(w) {
        return Err(Error::Config(format!(
            "resolution setting: client {i} needs a {size}x{size} kernel but the image is {h}x{w}"
        )));
    }
    let radius = i as isize;

    let mut kernel = vec![0.0; size * size];
    let mut total = 0.0;
    for ky in 0..size {
        for kx in 0..size {
            let dy = ky as f64 - i as f64;
            let dx = kx as f64 - i as f64;
            let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            kernel[ky * size + kx] = v;
            total += v;
        }
    }
    for v in &mut kernel {
        *v /= total;
    }

    // Reflect padding with the edge pixel repeated: index -1 maps to 0.
    let reflect = |p: isize, n: isize| -> usize {
        let q = if p < 0 {
            -p - 1
        } else if p >= n {
            2 * n - p - 1
        } else {
            p
        };
        q as usize
    };

    let samples = samples
        .into_iter()
        .map(|mut s| {
            let src = s.pixels.clone();
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0;
                    for ky in -radius..=radius {
                        for kx in -radius..=radius {
                            let sy = reflect(y + ky, h as isize);
                            let sx = reflect(x + kx, w as isize);
                            let kv = kernel[(ky + radius) as usize * size + (kx + radius) as usize];
                            acc += kv * src[sy * w + sx];
                        }
                    }
                    s.pixels[y as usize * w + x as usize] = acc.clamp(0.0, 1.0);
                }
            }
            s
        })
        .collect();
    Ok(ClientDataset { client: i, samples })
}

/// Mask setting: per sample, draws an area fraction `f` uniformly from
/// `[0.5·i/N, 0.75·i/N]` and zeroes a near-square axis-aligned rectangle of
/// `⌊f·H·W⌋` pixels at a uniformly random position. Exact-area rectangles do
/// not exist for every target (prime areas larger than one side), so the side
/// lengths are rounded to the closest factorization.
pub fn apply_mask(
    samples: Vec<Sample>,
    i: usize,
    n_clients: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> ClientDataset {
    let (lo, hi) = mask_bounds(i, n_clients);
    let client_seed = derive2(seed, stream::CLIENT_DATA, i as u64);
    let samples = samples
        .into_iter()
        .enumerate()
        .map(|(idx, mut s)| {
            let mut rng = rng_from(derive(client_seed, idx as u64));
            let f = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            let area = (f * (h * w) as f64).floor() as usize;
            if area > 0 {
                let rh = ((area as f64).sqrt().round() as usize).clamp(1, h);
                let rw = ((area as f64 / rh as f64).round() as usize).clamp(1, w);
                let top = rng.gen_range(0..=h - rh);
                let left = rng.gen_range(0..=w - rw);
                for y in top..top + rh {
                    for x in left..left + rw {
                        s.pixels[y * w + x] = 0.0;
                    }
                }
            }
            s
        })
        .collect();
    ClientDataset { client: i, samples }
}

/// Held-out clean validation split: the `n_val` samples directly after the
/// training pool. Disjointness from every client's draws is by index
/// partition, so no seed is involved.
pub fn make_validation(base: &[Sample], n_train: usize, n_val: usize) -> Result<Vec<Sample>> {
    if n_train + n_val > base.len() {
        return Err(Error::Config(format!(
            "validation split: {n_train} train + {n_val} val exceeds the {} generated samples",
            base.len()
        )));
    }
    Ok(base[n_train..n_train + n_val].to_vec())
}

/// Builds all N client datasets for one setting. The quantity setting draws
/// from the whole pool per client; the other settings first shuffle the pool
/// and split it into N even `⌊n/N⌋`-sized shares, then degrade each share.
pub fn build_client_datasets(
    pool: &[Sample],
    setting: SettingKind,
    n_clients: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    if n_clients == 0 {
        return Err(Error::Config("build_client_datasets: zero clients".into()));
    }
    if setting == SettingKind::Quantity {
        return (1..=n_clients)
            .map(|i| partition_quantity(pool, i, n_clients, seed))
            .collect();
    }

    let share = pool.len() / n_clients;
    if share == 0 {
        return Err(Error::Config(format!(
            "even partition: {} samples cannot cover {n_clients} clients",
            pool.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng_from(derive(seed, stream::PARTITION)));

    (1..=n_clients)
        .map(|i| {
            let slice = &order[(i - 1) * share..i * share];
            let share_samples: Vec<Sample> = slice.iter().map(|&j| pool[j].clone()).collect();
            match setting {
                SettingKind::Quantity => unreachable!(),
                SettingKind::Noise => Ok(apply_noise(share_samples, i, n_clients, seed)),
                SettingKind::Resolution => apply_blur(share_samples, i, h, w),
                SettingKind::Mask => Ok(apply_mask(share_samples, i, n_clients, h, w, seed)),
            }
        })
        .collect()
}
