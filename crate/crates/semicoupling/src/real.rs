use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Scalar type the numeric kernels are written against.
///
/// Both `f32` and `f64` qualify. Downstream code should normally go through
/// the `f64` aliases at the crate root; the generic form exists so the scale,
/// geometry and closed-form layers can be instantiated at other precisions.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`, the precision constants are written in.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts into any Real")
    }

    /// Widening (or identity) conversion back to `f64`.
    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("any Real converts into f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Neumaier compensated accumulator over `f64`.
///
/// Plan costs sum up to millions of terms of similar magnitude; plain
/// summation would drift past the equality tolerances the invariant checks
/// rely on.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accum {
    sum: f64,
    comp: f64,
}

impl Accum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Dense LU solve with partial pivoting, `a` in row major order.
///
/// Used for the Newton steps of the power-diagram solver; sizes there stay in
/// the low hundreds, so a textbook O(n^3) factorization is plenty.
pub fn solve_dense<R: Real>(a: &mut [R], b: &mut [R], n: usize) -> Option<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best <= R::zero() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == R::zero() {
                continue;
            }
            a[row * n + col] = R::zero();
            for k in col + 1..n {
                let upd = a[col * n + k] * f;
                a[row * n + k] = a[row * n + k] - upd;
            }
            let upd = b[col] * f;
            b[row] = b[row] - upd;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn of_and_back() {
        assert_eq!(<f64 as Real>::of(1.5), 1.5);
        assert_eq!(<f32 as Real>::of(0.25), 0.25f32);
        assert_eq!(2.5f64.f64(), 2.5);
    }

    #[test]
    fn lu_solves_small_system() {
        // 2x + y = 5, x + 3y = 10 -> x = 1, y = 3
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let mut b = vec![5.0, 10.0];
        solve_dense(&mut a, &mut b, 2).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert!(solve_dense(&mut a, &mut b, 2).is_none());
    }

    #[test]
    fn lu_pivots() {
        // Leading zero forces a row swap.
        let mut a = vec![0.0, 1.0, 1.0, 0.0];
        let mut b = vec![7.0, 9.0];
        solve_dense(&mut a, &mut b, 2).unwrap();
        assert!((b[0] - 9.0).abs() < 1e-12);
        assert!((b[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = Accum::new();
        acc.add(1e16);
        for _ in 0..10_000 {
            acc.add(0.123);
        }
        acc.add(-1e16);
        assert!((acc.total() - 1230.0).abs() < 1e-9);
    }
}
