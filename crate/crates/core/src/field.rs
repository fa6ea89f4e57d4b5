//! Ambient fields: prime fields `F_p` with word-sized `p`, and the rationals.
//!
//! Every [`Scalar`] carries enough information to recover its field, so mixing
//! elements of different fields is detected at runtime rather than silently
//! producing garbage residues.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldSpec {
    Prime(u64),
    Rationals,
}

impl FieldSpec {
    pub fn prime(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::Usage(format!("{p} is not prime")));
        }
        Ok(FieldSpec::Prime(p))
    }

    pub fn characteristic(&self) -> u64 {
        match self {
            FieldSpec::Prime(p) => *p,
            FieldSpec::Rationals => 0,
        }
    }

    pub fn is_prime_field(&self) -> bool {
        matches!(self, FieldSpec::Prime(_))
    }

    /// Field order for `F_p`, `None` for the rationals.
    pub fn order(&self) -> Option<u64> {
        match self {
            FieldSpec::Prime(p) => Some(*p),
            FieldSpec::Rationals => None,
        }
    }

    pub fn zero(&self) -> Scalar {
        self.from_i64(0)
    }

    pub fn one(&self) -> Scalar {
        self.from_i64(1)
    }

    pub fn from_i64(&self, n: i64) -> Scalar {
        match *self {
            FieldSpec::Prime(p) => Scalar::Fp {
                residue: (n as i128).rem_euclid(p as i128) as u64,
                modulus: p,
            },
            FieldSpec::Rationals => Scalar::Q(BigRational::from_integer(BigInt::from(n))),
        }
    }

    pub fn from_bigint(&self, n: &BigInt) -> Scalar {
        match *self {
            FieldSpec::Prime(p) => {
                let r = n.mod_floor(&BigInt::from(p));
                Scalar::Fp {
                    residue: r.to_u64().expect("residue below a u64 modulus"),
                    modulus: p,
                }
            }
            FieldSpec::Rationals => Scalar::Q(BigRational::from_integer(n.clone())),
        }
    }

    /// All elements of a prime field in residue order.
    pub fn elements(&self) -> Option<impl Iterator<Item = Scalar>> {
        match *self {
            FieldSpec::Prime(p) => Some((0..p).map(move |r| Scalar::Fp { residue: r, modulus: p })),
            FieldSpec::Rationals => None,
        }
    }

    pub fn parse_scalar(&self, text: &str) -> Result<Scalar> {
        let text = text.trim();
        let bad = || Error::Usage(format!("invalid scalar `{text}` for field {self}"));
        match *self {
            FieldSpec::Prime(_) => {
                let n = BigInt::from_str(text).map_err(|_| bad())?;
                Ok(self.from_bigint(&n))
            }
            FieldSpec::Rationals => {
                let (num, den) = match text.split_once('/') {
                    Some((n, d)) => (
                        BigInt::from_str(n).map_err(|_| bad())?,
                        BigInt::from_str(d).map_err(|_| bad())?,
                    ),
                    None => (BigInt::from_str(text).map_err(|_| bad())?, BigInt::one()),
                };
                if den.is_zero() {
                    return Err(bad());
                }
                Ok(Scalar::Q(BigRational::new(num, den)))
            }
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Prime(p) => write!(f, "p={p}"),
            FieldSpec::Rationals => f.write_str("Q"),
        }
    }
}

impl serde::Serialize for FieldSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for FieldSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        <String as serde::Deserialize>::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    /// Accepts `p=<prime>`, a bare prime, or `Q`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "Q" || s == "q" {
            return Ok(FieldSpec::Rationals);
        }
        let digits = s.strip_prefix("p=").unwrap_or(s);
        let p: u64 = digits
            .parse()
            .map_err(|_| Error::Usage(format!("invalid field `{s}` (expected p=<prime> or Q)")))?;
        FieldSpec::prime(p)
    }
}

/// A canonical field element. Residues live in `[0, p)`; rationals are reduced
/// with a positive denominator, so structural equality is field equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scalar {
    Fp { residue: u64, modulus: u64 },
    Q(BigRational),
}

impl Scalar {
    pub fn field(&self) -> FieldSpec {
        match self {
            Scalar::Fp { modulus, .. } => FieldSpec::Prime(*modulus),
            Scalar::Q(_) => FieldSpec::Rationals,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Fp { residue, .. } => *residue == 0,
            Scalar::Q(q) => q.is_zero(),
        }
    }

    pub fn residue(&self) -> Option<u64> {
        match self {
            Scalar::Fp { residue, .. } => Some(*residue),
            Scalar::Q(_) => None,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Scalar::Q(q) => Some(q),
            Scalar::Fp { .. } => None,
        }
    }

    fn check(&self, rhs: &Scalar) -> Result<()> {
        match (self, rhs) {
            (Scalar::Fp { modulus: a, .. }, Scalar::Fp { modulus: b, .. }) if a == b => Ok(()),
            (Scalar::Q(_), Scalar::Q(_)) => Ok(()),
            _ => Err(Error::mismatch(self.field(), rhs.field())),
        }
    }

    pub fn try_add(&self, rhs: &Scalar) -> Result<Scalar> {
        self.check(rhs)?;
        Ok(self.add_unchecked(rhs))
    }

    pub fn try_sub(&self, rhs: &Scalar) -> Result<Scalar> {
        self.check(rhs)?;
        Ok(self.add_unchecked(&rhs.neg_value()))
    }

    pub fn try_mul(&self, rhs: &Scalar) -> Result<Scalar> {
        self.check(rhs)?;
        Ok(self.mul_unchecked(rhs))
    }

    pub fn neg_value(&self) -> Scalar {
        match self {
            Scalar::Fp { residue, modulus } => Scalar::Fp {
                residue: if *residue == 0 { 0 } else { modulus - residue },
                modulus: *modulus,
            },
            Scalar::Q(q) => Scalar::Q(-q),
        }
    }

    pub fn inv(&self) -> Result<Scalar> {
        if self.is_zero() {
            return Err(Error::Domain("inverse of zero".into()));
        }
        Ok(match self {
            Scalar::Fp { residue, modulus } => Scalar::Fp {
                residue: pow_mod(*residue, modulus - 2, *modulus),
                modulus: *modulus,
            },
            Scalar::Q(q) => Scalar::Q(q.recip()),
        })
    }

    pub fn try_div(&self, rhs: &Scalar) -> Result<Scalar> {
        self.try_mul(&rhs.inv()?)
    }

    fn add_unchecked(&self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Fp { residue: a, modulus }, Scalar::Fp { residue: b, .. }) => {
                let s = (*a as u128 + *b as u128) % *modulus as u128;
                Scalar::Fp { residue: s as u64, modulus: *modulus }
            }
            (Scalar::Q(a), Scalar::Q(b)) => Scalar::Q(a + b),
            _ => panic!("field mismatch: {} vs {}", self.field(), rhs.field()),
        }
    }

    fn mul_unchecked(&self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Fp { residue: a, modulus }, Scalar::Fp { residue: b, .. }) => {
                let s = (*a as u128 * *b as u128) % *modulus as u128;
                Scalar::Fp { residue: s as u64, modulus: *modulus }
            }
            (Scalar::Q(a), Scalar::Q(b)) => Scalar::Q(a * b),
            _ => panic!("field mismatch: {} vs {}", self.field(), rhs.field()),
        }
    }

    /// Lift a residue to the integer in `[0, p)` viewed as a rational.
    pub fn lift_to_rational(&self) -> Scalar {
        match self {
            Scalar::Fp { residue, .. } => Scalar::Q(BigRational::from_integer(BigInt::from(*residue))),
            Scalar::Q(_) => self.clone(),
        }
    }

    /// Approximate real value (rationals) or residue (prime fields).
    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Fp { residue, .. } => *residue as f64,
            Scalar::Q(q) => q.to_f64().unwrap_or(f64::NAN),
        }
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical key order: residues ascending within `F_p`, numeric order on ℚ.
impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Scalar::Fp { residue: a, modulus: p }, Scalar::Fp { residue: b, modulus: q }) => {
                p.cmp(q).then(a.cmp(b))
            }
            (Scalar::Q(a), Scalar::Q(b)) => a.cmp(b),
            (Scalar::Fp { .. }, Scalar::Q(_)) => Ordering::Less,
            (Scalar::Q(_), Scalar::Fp { .. }) => Ordering::Greater,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Fp { residue, .. } => write!(f, "{residue}"),
            Scalar::Q(q) if q.denom().is_one() => write!(f, "{}", q.numer()),
            Scalar::Q(q) => write!(f, "{}/{}", q.numer(), q.denom()),
        }
    }
}

// Operator forms panic on field mismatch; use the `try_*` methods on
// unvalidated inputs.
impl Add for &Scalar {
    type Output = Scalar;
    fn add(self, rhs: &Scalar) -> Scalar {
        self.add_unchecked(rhs)
    }
}

impl Sub for &Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &Scalar) -> Scalar {
        self.add_unchecked(&rhs.neg_value())
    }
}

impl Mul for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        self.mul_unchecked(rhs)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        self.neg_value()
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin; the first twelve prime bases are exact for all u64.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Rational helper used across the crate.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
