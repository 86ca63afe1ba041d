//! One-parameter operator groups `T(t) = exp(tQ)` on R^d.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_230e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068e0;
const THETA_13: f64 = 5.371_920_351_148_152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Odd/even split of a low-degree diagonal Padé approximant.
fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::identity(n, n);
    let mut u_inner = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for pair in b.chunks(2) {
        v += &power * pair[0];
        u_inner += &power * pair[1];
        power = &power * &a2;
    }
    (a * u_inner, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let u_head = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_head + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let v_head = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_head + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé kernel
/// (degree 3 to 13 picked from the 1-norm).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = norm1(a);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_low(a, &B3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_low(a, &B5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_low(a, &B7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_low(a, &B9);
        (u, v, 0)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let scaled = a / 2f64.powi(s);
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Precomputed `T(k h)` for `|k| <= K`.
#[derive(Debug)]
struct GridCache {
    step: f64,
    max_index: i64,
    // entries for k = -max_index..=max_index, row-major
    table: Vec<f64>,
}

impl GridCache {
    fn lookup(&self, t: f64, dim: usize) -> Option<&[f64]> {
        let x = t / self.step;
        let k = x.round();
        if (x - k).abs() > 1e-9 * (1.0 + k.abs()) {
            return None;
        }
        let k = k as i64;
        if k.abs() > self.max_index {
            return None;
        }
        let slot = (k + self.max_index) as usize;
        let len = dim * dim;
        Some(&self.table[slot * len..(slot + 1) * len])
    }
}

/// The group `T(t) = exp(tQ)`, `t` real.
#[derive(Debug, Clone)]
pub struct OperatorGroup {
    dim: usize,
    generator: DMatrix<f64>,
    spectral_abscissa: f64,
    cache: Option<Arc<GridCache>>,
}

impl PartialEq for OperatorGroup {
    fn eq(&self, other: &Self) -> bool {
        self.generator == other.generator
    }
}

impl OperatorGroup {
    pub fn new(generator: DMatrix<f64>) -> Result<Self> {
        if generator.nrows() == 0 || generator.nrows() != generator.ncols() {
            return Err(invalid(format!(
                "generator must be square and nonempty, got {}x{}",
                generator.nrows(),
                generator.ncols()
            )));
        }
        if generator.iter().any(|x| !x.is_finite()) {
            return Err(invalid("generator has non-finite entries"));
        }
        let dim = generator.nrows();
        let spectral_abscissa = if dim == 1 {
            generator[(0, 0)]
        } else {
            generator
                .clone()
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        Ok(Self {
            dim,
            generator,
            spectral_abscissa,
            cache: None,
        })
    }

    /// Builds a group from row-major rows, the layout used in config files.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("generator must be square"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    /// Returns a copy that serves `T(k step)`, `|k step| <= span`, from a
    /// precomputed table. Values are identical up to rounding to the uncached
    /// exponential.
    pub fn with_grid_cache(&self, step: f64, span: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && span >= 0.0 && span.is_finite()) {
            return Err(invalid("grid cache needs a positive step and finite span"));
        }
        let max_index = (span / step).ceil() as i64;
        if max_index > 1 << 22 {
            return Err(invalid("grid cache too large"));
        }
        let d = self.dim;
        let mut table = vec![0.0; (2 * max_index as usize + 1) * d * d];
        // T(kh) = T(h)^k accumulates error; compute each entry directly.
        for (slot, k) in (-max_index..=max_index).enumerate() {
            let m = expm(&(&self.generator * (k as f64 * step)));
            write_row_major(&m, &mut table[slot * d * d..(slot + 1) * d * d]);
        }
        Ok(Self {
            cache: Some(Arc::new(GridCache {
                step,
                max_index,
                table,
            })),
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.spectral_abscissa
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa < 0.0
    }

    /// `T(t)` as a matrix.
    pub fn exp(&self, t: f64) -> DMatrix<f64> {
        if t == 0.0 {
            return DMatrix::identity(self.dim, self.dim);
        }
        if let Some(row_major) = self.cache.as_ref().and_then(|c| c.lookup(t, self.dim)) {
            return DMatrix::from_row_slice(self.dim, self.dim, row_major);
        }
        expm(&(&self.generator * t))
    }

    /// Writes `T(t)` row-major into `out` (length `d*d`).
    pub fn exp_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim * self.dim);
        if t == 0.0 {
            out.fill(0.0);
            for i in 0..self.dim {
                out[i * self.dim + i] = 1.0;
            }
            return;
        }
        if let Some(row_major) = self.cache.as_ref().and_then(|c| c.lookup(t, self.dim)) {
            out.copy_from_slice(row_major);
            return;
        }
        if self.dim == 1 {
            out[0] = (self.generator[(0, 0)] * t).exp();
            return;
        }
        write_row_major(&expm(&(&self.generator * t)), out);
    }

    /// `T(t) x`.
    pub fn apply(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(t, x.len())?;
        Ok(self.exp(t) * x)
    }

    /// `T(t)^T y`, the adjoint acting on the dual space.
    pub fn adjoint_apply(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(t, y.len())?;
        Ok(self.exp(t).tr_mul(y))
    }

    fn check(&self, t: f64, len: usize) -> Result<()> {
        if !t.is_finite() {
            return Err(invalid("time must be finite"));
        }
        if len != self.dim {
            return Err(invalid(format!(
                "vector length {len} does not match dimension {}",
                self.dim
            )));
        }
        Ok(())
    }
}

pub(crate) fn write_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..n {
            out[i * n + j] = m[(i, j)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Truncated Taylor series, summed until the terms underflow.
    // Taylor series on a / 2^k with |a / 2^k| < 1/2, then squared back
    fn series_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut k = 0;
        while a.norm() / 2f64.powi(k) >= 0.5 {
            k += 1;
        }
        let a = a / 2f64.powi(k);
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..200 {
            term = &term * &a / k as f64;
            sum += &term;
            if term.norm() < 1e-300 {
                break;
            }
        }
        for _ in 0..k {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn zero_generator_is_identity() {
        let g = OperatorGroup::new(DMatrix::zeros(2, 2)).unwrap();
        for t in [-3.0, 0.0, 0.5, 10.0] {
            assert_eq!(g.exp(t), DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn scalar_decay() {
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        let x = DVector::from_vec(vec![3.0]);
        assert_eq!(g.apply(0.0, &x).unwrap()[0], 3.0);
        let y = g.apply(1.0, &DVector::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(y[0], 0.367_879_441_171_442_3, max_relative = 1e-14);
        let z = g.adjoint_apply(1.0, &DVector::from_vec(vec![2.0])).unwrap();
        assert_relative_eq!(z[0], 2.0 * (-1f64).exp(), max_relative = 1e-14);
        assert_eq!(g.spectral_abscissa(), -1.0);
    }

    #[test]
    fn nilpotent_matches_series() {
        let g = OperatorGroup::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        for t in [-2.0, 0.3, 1.0, 2.0, 7.5] {
            let oracle = series_exp(&(g.generator() * t));
            let m = g.exp(t);
            assert_relative_eq!(m, oracle, epsilon = 1e-13);
            assert_relative_eq!(m[(0, 1)], t, epsilon = 1e-13);
        }
        let v = g.apply(2.0, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_relative_eq!(v[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-14);
        let w = g
            .adjoint_apply(1.0, &DVector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(w[1], 1.0, epsilon = 1e-14);
        assert_eq!(g.spectral_abscissa(), 0.0);
    }

    #[test]
    fn pade_degrees_match_series() {
        // exercise every branch of the degree selection
        let base =
            DMatrix::from_row_slice(3, 3, &[-0.4, 1.0, 0.2, -1.0, -0.3, 0.5, 0.1, -0.2, -0.8]);
        for scale in [1e-3, 0.1, 0.4, 1.0, 2.5, 8.0, 30.0] {
            let a = &base * scale;
            let oracle = series_exp(&a);
            let rel = (expm(&a) - &oracle).norm() / oracle.norm();
            assert!(rel < 1e-12, "scale {scale}: relative error {rel:e}");
        }
    }

    #[test]
    fn rotation_abscissa() {
        let g = OperatorGroup::from_rows(&[vec![-0.5, 1.0], vec![-1.0, -0.5]]).unwrap();
        assert_relative_eq!(g.spectral_abscissa(), -0.5, epsilon = 1e-12);
        assert!(g.is_stable());
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(OperatorGroup::new(DMatrix::zeros(2, 3)).is_err());
        assert!(OperatorGroup::from_rows(&[vec![f64::NAN]]).is_err());
        assert!(OperatorGroup::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        assert!(g
            .apply(f64::INFINITY, &DVector::from_vec(vec![1.0]))
            .is_err());
        assert!(g.apply(1.0, &DVector::from_vec(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn cache_agrees_with_direct() {
        let g = OperatorGroup::from_rows(&[vec![-0.5, 1.0], vec![-1.0, -0.5]]).unwrap();
        let c = g.with_grid_cache(1.0 / 64.0, 4.0).unwrap();
        let mut buf = [0.0; 4];
        for t in [0.25, -1.5, 3.0, 0.123] {
            c.exp_into(t, &mut buf);
            let direct = g.exp(t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((buf[i * 2 + j] - direct[(i, j)]).abs() < 1e-14);
                }
            }
        }
    }
}
