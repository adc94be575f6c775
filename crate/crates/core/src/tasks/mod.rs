//! Supervised sequence tasks: pixel-serialized MNIST and the temporal credit assignment task.

mod mnist;
mod tca;

pub use mnist::{
    load_mnist_idx, load_split, parse_idx_images, parse_idx_labels, serialize_pixels, split_paths, write_idx_images,
    write_idx_labels, MnistDataset, PixelPermutation, Split, DATA_DIR_ENV,
};
pub use tca::{
    generate_tca_batch, generate_tca_sample, winner as tca_winner, write_tca_csv, Delay, TcaConfig, LEFT, RIGHT,
};

/// One input sequence with a class label presented at the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// Row-major `len × dim` inputs.
    pub inputs: Vec<f64>,
    pub dim: usize,
    pub label: usize,
}

impl SequenceSample {
    pub fn len(&self) -> usize {
        self.inputs.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.dim..(t + 1) * self.dim]
    }

    pub fn steps(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim.max(1))
    }

    pub fn one_hot(&self, classes: usize) -> Vec<f64> {
        let mut v = vec![0.0; classes];
        v[self.label] = 1.0;
        v
    }
}
