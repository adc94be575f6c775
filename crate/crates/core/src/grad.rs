use std::ops::{Deref, DerefMut};

use crate::error::{dim_mismatch, Result};
use crate::lstm::{Dims, NetworkParams};

/// dE/dw for every parameter tensor, laid out exactly like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(NetworkParams);

impl GradientSet {
    pub fn zeros(dims: Dims) -> Self {
        Self(NetworkParams::zeros(dims))
    }

    pub fn into_inner(self) -> NetworkParams {
        self.0
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(dim_mismatch("GradientSet::add_assign", self.dims(), other.dims()));
        }
        for (a, b) in self.0.tensors_mut().into_iter().zip(other.0.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.0.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|t| t.as_slice())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Sums gradient sets in slice order, so the result does not depend on how they were produced.
    pub fn sum_ordered(parts: &[GradientSet]) -> Result<GradientSet> {
        let mut iter = parts.iter();
        let mut acc = match iter.next() {
            Some(first) => first.clone(),
            None => return Err(crate::Error::InvalidArgument("empty gradient batch".into())),
        };
        for g in iter {
            acc.add_assign(g)?;
        }
        Ok(acc)
    }

    /// Per-tensor maximum of [`relative_error`] against `other`, in canonical tensor order.
    pub fn max_relative_error(&self, other: &GradientSet, floor: f64) -> Vec<(String, f64)> {
        NetworkParams::tensor_names()
            .into_iter()
            .zip(self.0.tensors().into_iter().zip(other.0.tensors()))
            .map(|(name, (a, b))| {
                let worst = a
                    .as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(&x, &y)| relative_error(x, y, floor))
                    .fold(0.0, f64::max);
                (name, worst)
            })
            .collect()
    }
}

impl Deref for GradientSet {
    type Target = NetworkParams;
    fn deref(&self) -> &NetworkParams {
        &self.0
    }
}

impl DerefMut for GradientSet {
    fn deref_mut(&mut self) -> &mut NetworkParams {
        &mut self.0
    }
}

/// `|a - b| / max(|a|, |b|, floor)`. The floor keeps entries that are zero up to
/// rounding from dominating the comparison.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn clip_and_norm() {
        let dims = Dims::new(2, 3, 2);
        let mut g = GradientSet::zeros(dims);
        g.w_out.set(0, 0, 3.0);
        g.b_out.set(1, 0, 4.0);
        assert_eq!(g.global_norm(), 5.0);
        assert_eq!(g.clip_global_norm(10.0), 5.0);
        assert_eq!(g.global_norm(), 5.0);
        g.clip_global_norm(1.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-8), 0.0);
        assert!((relative_error(1.0, 1.1, 1e-8) - 0.1 / 1.1).abs() < 1e-15);
        assert_eq!(relative_error(1e-12, 0.0, 1e-6), 1e-6);
    }

    #[test]
    fn ordered_sum() {
        let dims = Dims::new(2, 3, 2);
        let mut rng = Rng::new(1);
        let parts: Vec<GradientSet> = (0..4)
            .map(|_| GradientSet(NetworkParams::init(&mut rng, dims)))
            .collect();
        let s = GradientSet::sum_ordered(&parts).unwrap();
        let mut manual = parts[0].clone();
        for p in &parts[1..] {
            manual.add_assign(p).unwrap();
        }
        assert_eq!(s, manual);
        assert!(GradientSet::sum_ordered(&[]).is_err());
    }
}
