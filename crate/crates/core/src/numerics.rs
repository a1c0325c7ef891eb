//! Dense kernels and seeded randomness.
//!
//! Every reduction runs left to right over a fixed index order, so results
//! are bit-reproducible across runs on the same platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{domain, shape, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(domain(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
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

    /// Builds a matrix from equally long rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(shape(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a 0-column matrix still has rows
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    /// Plain triple-loop product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for l in 0..self.cols {
                    acc += self.get(i, l) * other.get(l, j);
                }
                out.data[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// `log Σ exp(v_i)` with a max shift.
///
/// Entries may be `-inf` (zero mass) but not all of them.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(domain("logsumexp of an empty vector"));
    }
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        if x.is_nan() || x == f64::INFINITY {
            return Err(domain(format!("logsumexp input {x} is not finite")));
        }
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(domain("logsumexp of all -inf entries"));
    }
    let mut sum = 0.0;
    for &x in v {
        sum += (x - max).exp();
    }
    Ok(max + sum.ln())
}

/// `½‖a − b‖²`.
#[inline]
pub fn half_sqdist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    0.5 * acc
}

/// Pairwise quadratic cost matrix, entry `(i, j) = ½‖X_i − Y_j‖²`.
pub fn half_sqdist_matrix(x: &RealMatrix, y: &RealMatrix) -> Result<RealMatrix> {
    if x.cols() != y.cols() {
        return Err(shape(format!(
            "point dimensions differ: {} vs {}",
            x.cols(),
            y.cols()
        )));
    }
    let mut data = Vec::with_capacity(x.rows() * y.rows());
    for xi in x.row_iter() {
        for yj in y.row_iter() {
            data.push(half_sqdist(xi, yj));
        }
    }
    Ok(RealMatrix {
        rows: x.rows(),
        cols: y.rows(),
        data,
    })
}

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = S`.
pub fn cholesky(s: &RealMatrix) -> Result<RealMatrix> {
    let n = s.rows();
    if s.cols() != n {
        return Err(shape(format!("cholesky needs a square matrix, got {n}x{}", s.cols())));
    }
    for i in 0..n {
        for j in 0..i {
            if (s.get(i, j) - s.get(j, i)).abs() > SYMMETRY_TOL {
                return Err(domain(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut l = RealMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = s.get(j, j);
        for p in 0..j {
            diag -= l.get(j, p) * l.get(j, p);
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut acc = s.get(i, j);
            for p in 0..j {
                acc -= l.get(i, p) * l.get(j, p);
            }
            l.set(i, j, acc / ljj);
        }
    }
    Ok(l)
}

/// Which distribution [`SeededRng::draw`] samples from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DrawKind {
    StandardNormal,
    Uniform { lo: f64, hi: f64 },
}

/// Seeded, stream-addressable generator.
///
/// Backed by ChaCha8 (`rand_chacha` 0.9): the 64-bit seed is expanded with
/// `SeedableRng::seed_from_u64` and the stream selects ChaCha's 64-bit
/// stream word. Normals use `rand_distr`'s ziggurat `StandardNormal`.
/// These choices fix the draw sequence for a given `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[lo, hi)`. The caller guarantees `lo < hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.inner.random();
        let x = lo + (hi - lo) * u;
        if x >= hi {
            hi.next_down()
        } else {
            x
        }
    }

    pub fn draw(&mut self, kind: DrawKind, count: usize) -> Result<Vec<f64>> {
        match kind {
            DrawKind::StandardNormal => Ok((0..count).map(|_| self.standard_normal()).collect()),
            DrawKind::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(domain(format!("uniform bounds need lo < hi, got [{lo}, {hi})")));
                }
                Ok((0..count).map(|_| self.uniform(lo, hi)).collect())
            }
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Folds a list of identifiers into one 64-bit value (SplitMix64 finalizer
/// applied after each part). Used to derive per-trial seeds and streams.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logsumexp_basic_values() {
        assert_eq!(logsumexp(&[0.0]).unwrap(), 0.0);
        let a = 3.5;
        let got = logsumexp(&[a, a]).unwrap();
        assert!((got - (a + 2f64.ln())).abs() < 1e-15);
        assert!((got - 4.193147).abs() < 1e-6);
    }

    #[test]
    fn logsumexp_large_inputs_do_not_overflow() {
        // exp(1000) overflows; shifting by hand: 1000 + ln(e^0 + e^0)
        let got = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert!(got.is_finite());
        assert_eq!(got, 1000.0 + 2f64.ln());
    }

    #[test]
    fn logsumexp_rejects_bad_input() {
        assert!(matches!(logsumexp(&[]), Err(Error::Domain(_))));
        assert!(matches!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(Error::Domain(_))
        ));
        assert!(logsumexp(&[f64::NAN]).is_err());
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn half_sqdist_examples() {
        let x = RealMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let y = RealMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let c = half_sqdist_matrix(&x, &y).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 0), 0.0);
    }

    #[test]
    fn half_sqdist_matches_double_loop() {
        let mut rng = SeededRng::new(7, 0);
        let x = RealMatrix::new(5, 3, rng.draw(DrawKind::StandardNormal, 15).unwrap()).unwrap();
        let y = RealMatrix::new(4, 3, rng.draw(DrawKind::StandardNormal, 12).unwrap()).unwrap();
        let c = half_sqdist_matrix(&x, &y).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += (x.get(i, l) - y.get(j, l)).powi(2);
                }
                assert!((c.get(i, j) - s / 2.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn half_sqdist_dimension_mismatch() {
        let x = RealMatrix::zeros(2, 3);
        let y = RealMatrix::zeros(2, 2);
        assert!(matches!(half_sqdist_matrix(&x, &y), Err(Error::Shape(_))));
    }

    #[test]
    fn cholesky_examples() {
        let i3 = RealMatrix::identity(3);
        assert_eq!(cholesky(&i3).unwrap(), i3);

        let s = RealMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 5.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        let expect = RealMatrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 2.0]]).unwrap();
        assert!(l.max_abs_diff(&expect) < 1e-15);
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-12);

        let bad = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&bad), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rng_uniform_range_and_determinism() {
        let mut a = SeededRng::new(42, 3);
        let xs = a.draw(DrawKind::Uniform { lo: 0.0, hi: 1.0 }, 10_000).unwrap();
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        let mut b = SeededRng::new(42, 3);
        let ys = b.draw(DrawKind::Uniform { lo: 0.0, hi: 1.0 }, 10_000).unwrap();
        assert_eq!(xs, ys);
        let mut c = SeededRng::new(42, 4);
        let zs = c.draw(DrawKind::Uniform { lo: 0.0, hi: 1.0 }, 10).unwrap();
        assert_ne!(&xs[..10], &zs[..]);
    }

    #[test]
    fn rng_rejects_empty_interval() {
        let mut r = SeededRng::new(0, 0);
        assert!(r.draw(DrawKind::Uniform { lo: 1.0, hi: 1.0 }, 3).is_err());
        assert!(r.draw(DrawKind::Uniform { lo: 2.0, hi: 1.0 }, 3).is_err());
    }

    #[test]
    fn rng_standard_normal_moments() {
        let mut r = SeededRng::new(2024, 1);
        let xs = r.draw(DrawKind::StandardNormal, 100_000).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn mix_seed_separates_parts() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_ne!(mix_seed(&[0]), mix_seed(&[0, 0]));
        assert_eq!(mix_seed(&[5, 6, 7]), mix_seed(&[5, 6, 7]));
    }

    fn finite_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-500.0f64..500.0, 1..40)
    }

    proptest! {
        #[test]
        fn logsumexp_shift(v in finite_vec(), a in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + a).collect();
            let lhs = logsumexp(&shifted).unwrap();
            let rhs = logsumexp(&v).unwrap() + a;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn logsumexp_bounds(v in finite_vec()) {
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let l = logsumexp(&v).unwrap();
            prop_assert!(l >= max);
            prop_assert!(l <= max + (v.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn self_distance_matrix_symmetric(rows in 1usize..7, d in 1usize..4, seed in any::<u64>()) {
            let mut r = SeededRng::new(seed, 0);
            let x = RealMatrix::new(rows, d, r.draw(DrawKind::StandardNormal, rows * d).unwrap()).unwrap();
            let c = half_sqdist_matrix(&x, &x).unwrap();
            for i in 0..rows {
                prop_assert_eq!(c.get(i, i), 0.0);
                for j in 0..rows {
                    prop_assert_eq!(c.get(i, j), c.get(j, i));
                    prop_assert!(c.get(i, j) >= 0.0);
                }
            }
        }

        #[test]
        fn cholesky_reconstructs_spd(d in 1usize..8, seed in any::<u64>()) {
            let mut r = SeededRng::new(seed, 0);
            let a = RealMatrix::new(d, d, r.draw(DrawKind::StandardNormal, d * d).unwrap()).unwrap();
            let mut s = a.transpose().matmul(&a).unwrap();
            for i in 0..d {
                s.set(i, i, s.get(i, i) + 1.0);
            }
            let l = cholesky(&s).unwrap();
            for i in 0..d {
                for j in i + 1..d {
                    prop_assert_eq!(l.get(i, j), 0.0);
                }
            }
            let back = l.matmul(&l.transpose()).unwrap();
            prop_assert!(back.max_abs_diff(&s) <= 1e-10);
        }
    }
}
