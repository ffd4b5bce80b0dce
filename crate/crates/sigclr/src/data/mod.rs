//! Dataset ingestion and the two-view stochastic augmentation pipeline.

mod augment;
mod cifar;
mod synth;

pub use augment::{
    center_crop, eval_transform, gaussian_blur, two_views, AugmentationConfig, EvalPhase,
};
pub use cifar::{read_cifar10, CIFAR_RECORD_BYTES};
pub use synth::{synth_centroids, synth_cluster_images, synth_clusters, SYNTH_SIGMA};

use crate::error::{Error, Result};

/// Pixel grid stored plane-major: `data[c*h*w + y*w + x]`, values in [0,1].
/// Matches the CIFAR-10 binary plane layout, so flattening is a copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_planes(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "image {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Flattened length `h * w * c`.
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Plane-major flattening, the model's input layout.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Luminance at a pixel; single-channel images return the channel.
    pub fn luminance(&self, y: usize, x: usize) -> f64 {
        if self.channels == 3 {
            0.299 * self.get(0, y, x) + 0.587 * self.get(1, y, x) + 0.114 * self.get(2, y, x)
        } else {
            self.get(0, y, x)
        }
    }
}

/// A labeled image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub label: usize,
    pub pixels: Image,
}
