//! Floating-point helpers shared by the exact and approximate code paths.

use std::hash::Hash;
use std::ops::{Add, Mul};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{Float, One, ToPrimitive, Zero};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Float> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self { sum: T::zero(), comp: T::zero() }
    }
}

impl<T: Float> CompensatedSum<T> {
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

pub fn compensated_sum<T: Float>(xs: impl IntoIterator<Item = T>) -> T {
    let mut acc = CompensatedSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// `p log2(1/p)` with the convention `0 log 0 = 0`.
pub fn plogp_bits<T: Float>(p: T) -> T {
    if p <= T::zero() {
        T::zero()
    } else {
        -p * p.log2()
    }
}

/// Shannon entropy in bits of a mass vector, summed in the given order.
pub fn shannon_bits<T: Float>(masses: impl IntoIterator<Item = T>) -> T {
    compensated_sum(masses.into_iter().map(plogp_bits))
}

pub fn log2_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    let top: BigUint = n >> shift;
    top.to_f64().unwrap().log2() + shift as f64
}

/// Nearest double to `num/den` without overflowing on huge operands.
pub fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    if num.bits() <= 1000 && den.bits() <= 1000 {
        let (n, d) = (num.to_f64().unwrap(), den.to_f64().unwrap());
        return n / d;
    }
    (log2_biguint(num) - log2_biguint(den)).exp2()
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    let num = q.numer().magnitude();
    let den = q.denom().magnitude();
    let v = ratio_to_f64(num, den);
    if q.numer().sign() == num_bigint::Sign::Minus {
        -v
    } else {
        v
    }
}

/// `−log2 q` for a positive rational.
pub fn neg_log2_rational(q: &BigRational) -> f64 {
    log2_biguint(q.denom().magnitude()) - log2_biguint(q.numer().magnitude())
}

/// Integer accumulator for exact probability masses sharing one denominator.
///
/// `u128` covers every desk-scale product measure; `BigUint` takes over when
/// the common denominator outgrows 126 bits.
pub trait Weight:
    Clone + Zero + One + Ord + Hash + Send + Sync + Add<Output = Self> + Mul<Output = Self> + std::fmt::Debug
{
    fn add_assign_ref(&mut self, rhs: &Self);
    fn mul_ref(&self, rhs: &Self) -> Self;
    fn to_biguint(&self) -> BigUint;
    fn log2(&self) -> f64;
}

impl Weight for u128 {
    fn add_assign_ref(&mut self, rhs: &Self) {
        *self += *rhs;
    }
    fn mul_ref(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn to_biguint(&self) -> BigUint {
        BigUint::from(*self)
    }
    fn log2(&self) -> f64 {
        (*self as f64).log2()
    }
}

impl Weight for BigUint {
    fn add_assign_ref(&mut self, rhs: &Self) {
        *self += rhs;
    }
    fn mul_ref(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn to_biguint(&self) -> BigUint {
        self.clone()
    }
    fn log2(&self) -> f64 {
        log2_biguint(self)
    }
}

/// Shannon entropy in bits of integer weights `w_i / total`, in the given order.
pub fn shannon_bits_from_weights<'a, W: Weight + 'a>(
    weights: impl IntoIterator<Item = &'a W>,
    total: &W,
) -> f64 {
    let log_total = total.log2();
    let total_big = total.to_biguint();
    let mut acc = CompensatedSum::default();
    for w in weights {
        if w.is_zero() {
            continue;
        }
        let p = ratio_to_f64(&w.to_biguint(), &total_big);
        acc.add(p * (log_total - w.log2()));
    }
    acc.value()
}

/// Exact `Σ (w_i / total)^2`.
pub fn collision_from_weights<'a, W: Weight + 'a>(
    weights: impl IntoIterator<Item = &'a W>,
    total: &W,
) -> BigRational {
    let mut num = BigUint::zero();
    for w in weights {
        let b = w.to_biguint();
        num += &b * &b;
    }
    let t = total.to_biguint();
    BigRational::new(num.into(), (&t * &t).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive_on_cancellation() {
        let xs = [1.0e16, 1.0, -1.0e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn shannon_of_dyadic_masses() {
        assert_eq!(shannon_bits([0.25f64, 0.5, 0.25]), 1.5);
        assert_eq!(shannon_bits([0.25f32; 4]), 2.0);
        assert_eq!(shannon_bits([1.0f64, 0.0]), 0.0);
    }

    #[test]
    fn huge_ratios() {
        let one = BigUint::one();
        let big = BigUint::one() << 5000u32;
        assert_eq!(log2_biguint(&big), 5000.0);
        assert_eq!(ratio_to_f64(&(&big >> 1u32), &big), 0.5);
        assert_eq!(ratio_to_f64(&one, &big), 0.0);
    }

    #[test]
    fn weights_agree_across_accumulators() {
        let small: Vec<u128> = vec![1, 2, 1];
        let big: Vec<BigUint> = small.iter().map(|&w| BigUint::from(w)).collect();
        let a = shannon_bits_from_weights(&small, &4u128);
        let b = shannon_bits_from_weights(&big, &BigUint::from(4u32));
        assert_eq!(a, 1.5);
        assert_eq!(a, b);
        assert_eq!(collision_from_weights(&small, &4u128), crate::field::rational(3, 8));
    }
}
