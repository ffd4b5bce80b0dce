//! Seeded synthetic clustered dataset: Gaussian clusters in pixel space,
//! clipped to [0,1], labeled by cluster. Cluster centroids sit at
//! `0.5 + separation * sigma * v_c` for random unit directions `v_c`, so
//! `separation` measures centroid spread in units of the point noise.

use super::{Image, ImageRecord};
use crate::error::{Error, Result};
use crate::streams;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Per-coordinate Gaussian noise of the generated points.
pub const SYNTH_SIGMA: f64 = 0.05;

fn synth_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(streams::SYNTH);
    rng
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn validate(k: usize, separation: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if !(separation >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    Ok(())
}

fn draw_centroids(rng: &mut ChaCha8Rng, k: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            let mut v = normal_vec(rng, dim);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in &mut v {
                *x = 0.5 + separation * SYNTH_SIGMA * (*x / norm);
            }
            v
        })
        .collect()
}

/// Cluster centroids for the given generator configuration; shares the
/// draw sequence with [`synth_clusters`], so the same seed describes the
/// same dataset.
pub fn synth_centroids(k: usize, dim: usize, separation: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    validate(k, separation)?;
    let mut rng = synth_rng(seed);
    Ok(draw_centroids(&mut rng, k, dim, separation))
}

fn generate(
    k: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Vec<(usize, Vec<f64>)>> {
    validate(k, separation)?;
    let mut rng = synth_rng(seed);
    let centroids = draw_centroids(&mut rng, k, dim, separation);
    let mut points = Vec::with_capacity(k * per_class);
    for (label, centroid) in centroids.iter().enumerate() {
        for _ in 0..per_class {
            let noise = normal_vec(&mut rng, dim);
            let pixels: Vec<f64> = centroid
                .iter()
                .zip(noise.iter())
                .map(|(&c, &n)| (c + SYNTH_SIGMA * n).clamp(0.0, 1.0))
                .collect();
            points.push((label, pixels));
        }
    }
    Ok(points)
}

/// Flat clustered records (height 1, width `dim`, one channel).
pub fn synth_clusters(
    k: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Vec<ImageRecord>> {
    generate(k, per_class, dim, separation, seed)?
        .into_iter()
        .map(|(label, pixels)| {
            Ok(ImageRecord {
                label,
                pixels: Image::from_planes(1, dim, 1, pixels)?,
            })
        })
        .collect()
}

/// Clustered records shaped as `height x width x channels` images, drawn
/// from the same stream as [`synth_clusters`] with `dim = h * w * c`.
pub fn synth_cluster_images(
    k: usize,
    per_class: usize,
    height: usize,
    width: usize,
    channels: usize,
    separation: f64,
    seed: u64,
) -> Result<Vec<ImageRecord>> {
    generate(k, per_class, height * width * channels, separation, seed)?
        .into_iter()
        .map(|(label, pixels)| {
            Ok(ImageRecord {
                label,
                pixels: Image::from_planes(height, width, channels, pixels)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_reproduces_dataset() {
        let a = synth_clusters(3, 5, 16, 4.0, 9).unwrap();
        let b = synth_clusters(3, 5, 16, 4.0, 9).unwrap();
        assert_eq!(a, b);
        let c = synth_clusters(3, 5, 16, 4.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_separation_collapses_centroids() {
        let centroids = synth_centroids(4, 8, 0.0, 1).unwrap();
        for c in &centroids {
            for &v in c {
                assert_eq!(v, 0.5);
            }
        }
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let records = synth_clusters(2, 50, 8, 6.0, 3).unwrap();
        for r in &records {
            assert!(r.pixels.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn labels_follow_class_blocks() {
        let records = synth_clusters(3, 4, 8, 2.0, 5).unwrap();
        let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn wide_separation_is_nearest_centroid_separable() {
        let k = 4;
        let per_class = 100;
        let records = synth_clusters(k, per_class, 64, 6.0, 7).unwrap();
        // Empirical class means as the nearest-centroid oracle.
        let dim = 64;
        let mut means = vec![vec![0.0; dim]; k];
        for r in &records {
            for (m, &p) in means[r.label].iter_mut().zip(r.pixels.data()) {
                *m += p / per_class as f64;
            }
        }
        let mut correct = 0;
        for r in &records {
            let best = (0..k)
                .map(|c| {
                    means[c]
                        .iter()
                        .zip(r.pixels.data())
                        .map(|(m, p)| (m - p) * (m - p))
                        .sum::<f64>()
                })
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap()
                .0;
            if best == r.label {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / records.len() as f64;
        assert!(accuracy >= 0.99, "nearest-centroid accuracy {accuracy}");
    }

    #[test]
    fn image_shaped_records_share_the_flat_stream() {
        let flat = synth_clusters(2, 3, 24, 3.0, 11).unwrap();
        let shaped = synth_cluster_images(2, 3, 2, 4, 3, 3.0, 11).unwrap();
        for (f, s) in flat.iter().zip(shaped.iter()) {
            assert_eq!(f.pixels.data(), s.pixels.data());
            assert_eq!(s.pixels.height(), 2);
            assert_eq!(s.pixels.channels(), 3);
        }
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(synth_clusters(1, 5, 8, 1.0, 0).is_err());
        assert!(synth_clusters(2, 5, 8, -1.0, 0).is_err());
    }
}
