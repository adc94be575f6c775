//! Dense row-major matrices, activation functions and a seedable random generator.
//!
//! All reductions run in a fixed left-to-right order so that runs with the
//! same seed are bit-identical.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_mismatch, Error, Result};

/// Row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_mismatch("Matrix::new", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Entries drawn from U(-bound, bound).
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
    }

    /// Outer product `col ⊗ row`, shape `col.len() × row.len()`.
    pub fn outer(col: &[f64], row: &[f64]) -> Self {
        Self::from_fn(col.len(), row.len(), |r, c| col[r] * row[c])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `out += self · x`.
    #[inline]
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += dot(row, x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(dim_mismatch("matvec", self.cols, x.len()));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_acc(x, &mut out);
        Ok(out)
    }

    /// `out += selfᵀ · v`.
    #[inline]
    pub fn matvec_transposed_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &vr) in v.iter().enumerate() {
            axpy(vr, self.row(r), out);
        }
    }

    /// `self += col ⊗ row`.
    #[inline]
    pub fn add_outer(&mut self, col: &[f64], row: &[f64]) {
        debug_assert_eq!(col.len(), self.rows);
        debug_assert_eq!(row.len(), self.cols);
        for (r, &a) in col.iter().enumerate() {
            axpy(a, row, self.row_mut(r));
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_mismatch(
                "add_assign",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        axpy(1.0, &other.data, &mut self.data);
        Ok(())
    }
}

/// Plain matrix product. Each output entry sums left to right over the shared index.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(dim_mismatch("matmul", format!("a.cols == b.rows ({})", a.cols), b.rows));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = 0.0;
            for k in 0..a.cols {
                acc += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Dot product with eight interleaved partial sums, which lets the compiler vectorize.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha · x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Derivative of the logistic function, given its output `s`.
#[inline]
pub fn sigmoid_prime_from_value(s: f64) -> f64 {
    s * (1.0 - s)
}

/// Derivative of `tanh`, given its output `t`.
#[inline]
pub fn tanh_prime_from_value(t: f64) -> f64 {
    1.0 - t * t
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Seeded ChaCha8 stream. `substream` derives independent named generators.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator keyed by `name`. Depends only on the root seed, not on how
    /// many values were drawn from `self`.
    pub fn substream(&self, name: &str) -> Rng {
        // FNV-1a over the name, then a splitmix64 finalizer with the root seed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        Rng::new(splitmix64(self.seed ^ splitmix64(h)))
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.as_slice()[i * a.cols() + k] * b.as_slice()[k * b.cols() + j];
                }
                out[i * b.cols() + j] = s;
            }
        }
        Matrix::new(a.rows(), b.cols(), out).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut rng = Rng::new(1);
        let m = Matrix::uniform(3, 4, 1.0, &mut rng);
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);

        let any = Matrix::uniform(3, 4, 1.0, &mut rng);
        assert_eq!(matmul(&Matrix::zeros(2, 3), &any).unwrap(), Matrix::zeros(2, 4));

        let a = Matrix::new(1, 1, vec![2.0]).unwrap();
        let b = Matrix::new(1, 1, vec![3.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().as_slice(), &[6.0]);
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid_prime_from_value(0.5), 0.25);
        assert_eq!(tanh_prime_from_value(0.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let s = softmax(&[1000.0, 0.0]);
        assert_eq!(s[0], 1.0);
        assert!(s[1] >= 0.0 && s[1] < 1e-300);
        let s = softmax(&[2f64.ln(), 0.0]);
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matvec_paths_agree_with_matmul() {
        let mut rng = Rng::new(7);
        let m = Matrix::uniform(5, 3, 1.0, &mut rng);
        let x = Matrix::uniform(3, 1, 1.0, &mut rng);
        let v = m.matvec(x.as_slice()).unwrap();
        assert_eq!(v, matmul(&m, &x).unwrap().into_vec());

        let y = Matrix::uniform(5, 1, 1.0, &mut rng);
        let mut t = vec![0.0; 3];
        m.matvec_transposed_acc(y.as_slice(), &mut t);
        let expected = matmul(&m.transpose(), &y).unwrap();
        for (a, b) in t.iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rng_streams_repeat() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_are_independent_of_parent_draws() {
        let root = Rng::new(9);
        let mut used = Rng::new(9);
        for _ in 0..17 {
            used.uniform();
        }
        let mut s1 = root.substream("data");
        let mut s2 = used.substream("data");
        let mut s3 = root.substream("init");
        let a: Vec<u64> = (0..8).map(|_| s1.next_u64()).collect();
        let b: Vec<u64> = (0..8).map(|_| s2.next_u64()).collect();
        let c: Vec<u64> = (0..8).map(|_| s3.next_u64()).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn matmul_matches_naive_bitwise(r in 1usize..6, k in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = Matrix::uniform(r, k, 2.0, &mut rng);
            let b = Matrix::uniform(k, c, 2.0, &mut rng);
            prop_assert_eq!(matmul(&a, &b).unwrap(), naive_matmul(&a, &b));
            prop_assert_eq!(matmul(&Matrix::identity(r), &a).unwrap(), a.clone());
            prop_assert_eq!(matmul(&a, &Matrix::identity(k)).unwrap(), a);
        }

        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-64i32..64, 1..12), shift in -512i32..512) {
            // Values on a 1/8 grid keep the shift exact, so the result is bit-identical.
            let base: Vec<f64> = v.iter().map(|&x| f64::from(x) / 8.0).collect();
            let shifted: Vec<f64> = base.iter().map(|x| x + f64::from(shift)).collect();
            let a = softmax(&base);
            prop_assert_eq!(&a, &softmax(&shifted));
            let sum: f64 = a.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(a.iter().all(|&p| p > 0.0));
        }

        #[test]
        fn softmax_shift_close_for_arbitrary_values(v in prop::collection::vec(-30.0f64..30.0, 1..12), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            for (a, b) in softmax(&v).iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
