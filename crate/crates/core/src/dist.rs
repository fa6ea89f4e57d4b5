//! Finitely supported laws with exact rational masses.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::numeric::{neg_log2_rational, rational_to_f64, CompensatedSum};

/// Entropy in bits. Where the quantity is `−log2` of one rational (min-entropy,
/// collision entropy, Shannon entropy of a uniform law) that rational is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub bits: f64,
    #[serde(with = "opt_rational_text", skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<BigRational>,
}

impl EntropyValue {
    pub fn approx(bits: f64) -> Self {
        Self { bits, exact: None }
    }

    /// `−log2 q`, retaining `q`.
    pub fn from_probability(q: BigRational) -> Self {
        Self { bits: neg_log2_rational(&q), exact: Some(q) }
    }
}

impl fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.bits)
    }
}

pub(crate) mod opt_rational_text {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(q) => s.serialize_str(&super::rational_text(q)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        text.map(|t| super::parse_rational(&t).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// `num/den`, always with an explicit denominator.
pub fn rational_text(q: &BigRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn parse_rational(text: &str) -> Result<BigRational> {
    let bad = || Error::Usage(format!("invalid rational `{text}`"));
    let (n, d) = match text.trim().split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text.trim(), "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

/// A probability law on keys of type `K`: distinct keys in ascending order,
/// strictly positive masses summing to exactly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Law<K> {
    atoms: Vec<(K, BigRational)>,
}

impl<K: Ord + Clone> Law<K> {
    /// Validates positivity, distinct keys, and total mass one.
    pub fn new(mut atoms: Vec<(K, BigRational)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDist("empty support".into()));
        }
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDist("duplicate atom".into()));
        }
        if atoms.iter().any(|(_, m)| !m.is_positive()) {
            return Err(Error::InvalidDist("masses must be strictly positive".into()));
        }
        let total: BigRational = atoms.iter().map(|(_, m)| m).sum();
        if !total.is_one() {
            return Err(Error::InvalidDist(format!("masses sum to {}, not 1", rational_text(&total))));
        }
        Ok(Self { atoms })
    }

    /// Builds from integer weights, merging repeated keys and dropping zeros.
    pub fn from_weights<W: Into<BigUint>>(items: impl IntoIterator<Item = (K, W)>) -> Result<Self> {
        let mut merged: BTreeMap<K, BigUint> = BTreeMap::new();
        for (k, w) in items {
            *merged.entry(k).or_default() += w.into();
        }
        merged.retain(|_, w| !w.is_zero());
        let total: BigUint = merged.values().sum();
        if total.is_zero() {
            return Err(Error::InvalidDist("all weights are zero".into()));
        }
        let total = BigInt::from(total);
        Ok(Self {
            atoms: merged
                .into_iter()
                .map(|(k, w)| (k, BigRational::new(BigInt::from(w), total.clone())))
                .collect(),
        })
    }

    pub fn point(k: K) -> Self {
        Self { atoms: vec![(k, BigRational::one())] }
    }

    pub fn uniform(keys: impl IntoIterator<Item = K>) -> Result<Self> {
        Self::from_weights(
            keys.into_iter()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .map(|k| (k, 1u32)),
        )
    }

    /// Trusted constructor for internally produced, already sorted atoms.
    pub(crate) fn from_sorted(atoms: Vec<(K, BigRational)>) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0].0 < w[1].0));
        Self { atoms }
    }

    pub fn atoms(&self) -> &[(K, BigRational)] {
        &self.atoms
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.atoms.iter().map(|(k, _)| k)
    }

    pub fn support_len(&self) -> usize {
        self.atoms.len()
    }

    pub fn mass(&self, k: &K) -> BigRational {
        match self.atoms.binary_search_by(|(a, _)| a.cmp(k)) {
            Ok(i) => self.atoms[i].1.clone(),
            Err(_) => BigRational::zero(),
        }
    }

    pub fn p_max(&self) -> BigRational {
        self.atoms.iter().map(|(_, m)| m).max().cloned().expect("non-empty law")
    }

    /// `P(X = X')` for an independent copy.
    pub fn collision_probability(&self) -> BigRational {
        self.atoms.iter().map(|(_, m)| m * m).sum()
    }

    pub fn is_uniform(&self) -> bool {
        self.atoms.windows(2).all(|w| w[0].1 == w[1].1)
    }

    /// Compensated sum of `p log2(1/p)` over atoms in canonical key order.
    pub fn shannon(&self) -> EntropyValue {
        if self.is_uniform() {
            return EntropyValue::from_probability(self.atoms[0].1.clone());
        }
        let mut acc = CompensatedSum::default();
        for (_, m) in &self.atoms {
            acc.add(rational_to_f64(m) * neg_log2_rational(m));
        }
        EntropyValue::approx(acc.value())
    }

    pub fn min_entropy(&self) -> EntropyValue {
        EntropyValue::from_probability(self.p_max())
    }

    pub fn collision_entropy(&self) -> EntropyValue {
        EntropyValue::from_probability(self.collision_probability())
    }

    /// Law of `f(X)`.
    pub fn map<K2: Ord + Clone>(&self, f: impl Fn(&K) -> K2) -> Law<K2> {
        let mut merged: BTreeMap<K2, BigRational> = BTreeMap::new();
        for (k, m) in &self.atoms {
            let e = merged.entry(f(k)).or_insert_with(BigRational::zero);
            *e += m;
        }
        Law { atoms: merged.into_iter().collect() }
    }

    /// Law of `f(X, Y)` for `Y` an independent draw from `other`.
    pub fn combine<K2: Ord + Clone, K3: Ord + Clone>(
        &self,
        other: &Law<K2>,
        f: impl Fn(&K, &K2) -> K3,
    ) -> Law<K3> {
        let mut merged: BTreeMap<K3, BigRational> = BTreeMap::new();
        for (a, ma) in &self.atoms {
            for (b, mb) in &other.atoms {
                let e = merged.entry(f(a, b)).or_insert_with(BigRational::zero);
                *e += ma * mb;
            }
        }
        Law { atoms: merged.into_iter().collect() }
    }

    /// Law of `X` conditioned on `pred(X)`, with `P(pred(X))`.
    pub fn condition(&self, pred: impl Fn(&K) -> bool) -> Option<(Law<K>, BigRational)> {
        let kept: Vec<_> = self.atoms.iter().filter(|(k, _)| pred(k)).cloned().collect();
        let total: BigRational = kept.iter().map(|(_, m)| m).sum();
        if total.is_zero() {
            return None;
        }
        let atoms = kept.into_iter().map(|(k, m)| (k, m / &total)).collect();
        Some((Law { atoms }, total))
    }

    /// Common denominator and integer numerators of the masses.
    pub fn integer_weights(&self) -> (Vec<BigUint>, BigUint) {
        let den = self
            .atoms
            .iter()
            .fold(BigInt::one(), |acc, (_, m)| acc.lcm(m.denom()));
        let nums = self
            .atoms
            .iter()
            .map(|(_, m)| (m.numer() * (&den / m.denom())).to_biguint().expect("positive mass"))
            .collect();
        (nums, den.to_biguint().expect("positive denominator"))
    }
}

/// Law of a pair `(A, B)` stored as 2-tuples.
pub type JointLaw = Law<Vec<Scalar>>;

impl Law<Vec<Scalar>> {
    /// Marginal of one tuple coordinate.
    pub fn marginal(&self, coordinate: usize) -> Law<Scalar> {
        self.map(|t| t[coordinate].clone())
    }

    /// `Η(B | A)` for a joint law over pairs `(A, B)`, evaluated as
    /// `Σ_a P(A = a) Η(B | A = a)`.
    pub fn conditional_entropy(&self) -> Result<EntropyValue> {
        if self.atoms.iter().any(|(t, _)| t.len() != 2) {
            return Err(Error::Usage("conditional entropy needs a law over pairs".into()));
        }
        // Atoms are sorted by tuple, so each conditioning value is a contiguous run.
        let mut acc = CompensatedSum::default();
        let mut start = 0;
        while start < self.atoms.len() {
            let a = &self.atoms[start].0[0];
            let end = start
                + self.atoms[start..]
                    .iter()
                    .take_while(|(t, _)| &t[0] == a)
                    .count();
            let run = &self.atoms[start..end];
            let pa: BigRational = run.iter().map(|(_, m)| m).sum();
            let mut inner = CompensatedSum::default();
            for (_, m) in run {
                let c = m / &pa;
                inner.add(rational_to_f64(&c) * neg_log2_rational(&c));
            }
            acc.add(rational_to_f64(&pa) * inner.value());
            start = end;
        }
        Ok(EntropyValue::approx(acc.value()))
    }
}

/// A law on one ambient field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dist {
    field: FieldSpec,
    law: Law<Scalar>,
}

impl Deref for Dist {
    type Target = Law<Scalar>;
    fn deref(&self) -> &Law<Scalar> {
        &self.law
    }
}

impl Dist {
    pub fn new(field: FieldSpec, atoms: Vec<(Scalar, BigRational)>) -> Result<Self> {
        if let Some((s, _)) = atoms.iter().find(|(s, _)| s.field() != field) {
            return Err(Error::mismatch(field, s.field()));
        }
        Ok(Self { field, law: Law::new(atoms)? })
    }

    pub fn from_law(field: FieldSpec, law: Law<Scalar>) -> Result<Self> {
        if let Some(s) = law.keys().find(|s| s.field() != field) {
            return Err(Error::mismatch(field, s.field()));
        }
        Ok(Self { field, law })
    }

    pub fn from_weights<W: Into<BigUint>>(
        field: FieldSpec,
        items: impl IntoIterator<Item = (Scalar, W)>,
    ) -> Result<Self> {
        Self::from_law(field, Law::from_weights(items)?)
    }

    pub fn uniform(field: FieldSpec, support: impl IntoIterator<Item = Scalar>) -> Result<Self> {
        Self::from_law(field, Law::uniform(support)?)
    }

    pub fn uniform_ints(field: FieldSpec, support: impl IntoIterator<Item = i64>) -> Result<Self> {
        Self::uniform(field, support.into_iter().map(|n| field.from_i64(n)))
    }

    pub fn point(s: Scalar) -> Self {
        Self { field: s.field(), law: Law::point(s) }
    }

    /// Binomial(n, 1/2) on the integers `0..=n` embedded in ℚ.
    pub fn binomial(n: u32) -> Self {
        let field = FieldSpec::Rationals;
        let mut coeff = BigUint::one();
        let mut weights = Vec::with_capacity(n as usize + 1);
        for k in 0..=n {
            weights.push((field.from_i64(k as i64), coeff.clone()));
            coeff = coeff * BigUint::from(n - k) / BigUint::from(k + 1);
        }
        Self::from_weights(field, weights).expect("binomial weights are positive")
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn law(&self) -> &Law<Scalar> {
        &self.law
    }

    pub fn support(&self) -> Vec<Scalar> {
        self.law.keys().cloned().collect()
    }

    pub fn prob_zero(&self) -> BigRational {
        self.law.mass(&self.field.zero())
    }

    /// Law of `−X`.
    pub fn negate(&self) -> Dist {
        Dist { field: self.field, law: self.law.map(|s| -s) }
    }

    /// Law of `f(X)` for a map staying in the same field.
    pub fn map_scalars(&self, f: impl Fn(&Scalar) -> Scalar) -> Dist {
        Dist { field: self.field, law: self.law.map(f) }
    }

    /// Keeps atoms of mass at least `delta`; returns the renormalized law and
    /// the kept probability.
    pub fn threshold(&self, delta: &BigRational) -> Result<(Dist, BigRational)> {
        if !delta.is_positive() || *delta >= BigRational::one() {
            return Err(Error::Domain("threshold must lie in (0, 1)".into()));
        }
        let (law, p) = self
            .law
            .condition_by_mass(|m| m >= delta)
            .ok_or_else(|| Error::Domain("no atom reaches the threshold".into()))?;
        Ok((Dist { field: self.field, law }, p))
    }

    /// Law conditioned on the complement of the threshold set, if non-empty.
    pub fn below_threshold(&self, delta: &BigRational) -> Option<(Dist, BigRational)> {
        self.law
            .condition_by_mass(|m| m < delta)
            .map(|(law, p)| (Dist { field: self.field, law }, p))
    }

    pub fn read_tsv(reader: impl BufRead) -> Result<Self> {
        let mut field: Option<FieldSpec> = None;
        let mut atoms = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("#field") {
                field = Some(rest.trim().parse().map_err(|e: Error| Error::Format {
                    line: line_no,
                    message: e.to_string(),
                })?);
                continue;
            }
            if trimmed.starts_with('#') {
                continue;
            }
            let f = field.ok_or_else(|| Error::Format {
                line: line_no,
                message: "missing `#field` header".into(),
            })?;
            let (s, m) = line.split_once('\t').ok_or_else(|| Error::Format {
                line: line_no,
                message: "expected `<scalar>\\t<num>/<den>`".into(),
            })?;
            let fmt_err = |e: Error| Error::Format { line: line_no, message: e.to_string() };
            atoms.push((f.parse_scalar(s).map_err(fmt_err)?, parse_rational(m).map_err(fmt_err)?));
        }
        let field = field.ok_or_else(|| Error::Format { line: 0, message: "empty file".into() })?;
        Dist::new(field, atoms)
    }

    pub fn write_tsv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "#field {}", self.field)?;
        for (s, m) in self.law.atoms() {
            writeln!(w, "{s}\t{}", rational_text(m))?;
        }
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn from_tsv_str(text: &str) -> Result<Self> {
        Self::read_tsv(text.as_bytes())
    }
}

impl<K: Ord + Clone> Law<K> {
    fn condition_by_mass(&self, keep: impl Fn(&BigRational) -> bool) -> Option<(Law<K>, BigRational)> {
        let kept: Vec<_> = self.atoms.iter().filter(|(_, m)| keep(m)).cloned().collect();
        let total: BigRational = kept.iter().map(|(_, m)| m).sum();
        if total.is_zero() {
            return None;
        }
        Some((Law { atoms: kept.into_iter().map(|(k, m)| (k, m / &total)).collect() }, total))
    }
}

/// `h2(q) = −q log q − (1−q) log(1−q)` in bits.
pub fn binary_entropy(q: f64) -> f64 {
    crate::numeric::shannon_bits([q, 1.0 - q])
}

/// Exact `2^{-m}`.
pub fn dyadic(m: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << m)
}

/// Largest `m` with `p_max ≤ 2^{-m}`, i.e. `⌊Ηmin⌋`, decided on rationals.
pub fn floor_min_entropy(law: &Law<impl Ord + Clone>) -> u32 {
    let pmax = law.p_max();
    let mut m = 0u32;
    while pmax <= dyadic(m + 1) {
        m += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::rational;

    fn ints(field: FieldSpec, pairs: &[(i64, i64, i64)]) -> Dist {
        Dist::new(
            field,
            pairs.iter().map(|&(x, n, d)| (field.from_i64(x), rational(n, d))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn shannon_examples() {
        let q = FieldSpec::Rationals;
        let u4 = Dist::uniform_ints(q, 0..4).unwrap();
        assert_eq!(u4.shannon().bits, 2.0);
        assert_eq!(u4.shannon().exact, Some(rational(1, 4)));
        let d = ints(q, &[(0, 1, 4), (1, 1, 2), (2, 1, 4)]);
        assert_eq!(d.shannon().bits, 1.5);
        let u3 = Dist::uniform_ints(q, 0..3).unwrap();
        assert!((u3.shannon().bits - 1.584_962_500_721_156).abs() < 1e-12);
    }

    #[test]
    fn min_and_collision_examples() {
        let q = FieldSpec::Rationals;
        let u = Dist::uniform_ints(q, [3, 5, 9, 11, 20]).unwrap();
        assert_eq!(u.min_entropy().bits, u.shannon().bits);
        assert_eq!(u.collision_entropy().bits, u.shannon().bits);
        let d = ints(q, &[(0, 1, 2), (1, 1, 4), (2, 1, 4)]);
        assert_eq!(d.min_entropy().bits, 1.0);
        assert_eq!(d.collision_entropy().exact, Some(rational(3, 8)));
        assert!((d.collision_entropy().bits - 1.415_037_499_278_844).abs() < 1e-12);
        let two = ints(q, &[(0, 2, 3), (1, 1, 3)]);
        assert!((two.min_entropy().bits - 0.584_962_500_721_156).abs() < 1e-12);
        let pt = Dist::point(q.from_i64(7));
        assert_eq!(pt.collision_entropy().bits, 0.0);
        assert_eq!(pt.shannon().bits, 0.0);
    }

    #[test]
    fn validation() {
        let q = FieldSpec::Rationals;
        let x = q.from_i64(1);
        assert!(Dist::new(q, vec![(x.clone(), rational(1, 2))]).is_err());
        assert!(Dist::new(q, vec![(x.clone(), rational(1, 2)), (x.clone(), rational(1, 2))]).is_err());
        assert!(Dist::new(q, vec![(x.clone(), rational(3, 2)), (q.from_i64(2), rational(-1, 2))]).is_err());
        assert!(Dist::new(FieldSpec::Prime(5), vec![(x, rational(1, 1))]).is_err());
    }

    #[test]
    fn conditional_entropy_examples() {
        let q = FieldSpec::Rationals;
        let t = |a: i64, b: i64| vec![q.from_i64(a), q.from_i64(b)];
        let joint = Law::new(vec![
            (t(0, 0), rational(1, 2)),
            (t(0, 1), rational(1, 4)),
            (t(1, 1), rational(1, 4)),
        ])
        .unwrap();
        let h = joint.conditional_entropy().unwrap().bits;
        assert!((h - 0.688_721_875_540_867).abs() < 1e-12);
        let chain = joint.shannon().bits - joint.marginal(0).shannon().bits;
        assert!((h - chain).abs() < 1e-9);

        let diag = Law::new(vec![(t(0, 0), rational(1, 3)), (t(1, 1), rational(2, 3))]).unwrap();
        assert!(diag.conditional_entropy().unwrap().bits.abs() < 1e-15);

        let indep = Law::from_weights((0..2).flat_map(|a| (0..3).map(move |b| (t(a, b), 1u32)))).unwrap();
        assert!((indep.conditional_entropy().unwrap().bits - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let q = FieldSpec::Rationals;
        let z = ints(q, &[(0, 1, 2), (1, 1, 3), (2, 1, 6)]);
        let (kept, p) = z.threshold(&rational(1, 4)).unwrap();
        assert_eq!(kept.support_len(), 2);
        assert_eq!(p, rational(5, 6));
        assert_eq!(kept.mass(&q.from_i64(0)), rational(3, 5));
        let (same, p) = z.threshold(&rational(1, 6)).unwrap();
        assert_eq!(same, z);
        assert!(p.is_one());
        assert!(matches!(z.threshold(&rational(2, 3)), Err(Error::Domain(_))));
    }

    #[test]
    fn binomial_laws() {
        let b2 = Dist::binomial(2);
        assert_eq!(b2.shannon().bits, 1.5);
        assert_eq!(b2.mass(&FieldSpec::Rationals.from_i64(1)), rational(1, 2));
        assert_eq!(Dist::binomial(0).shannon().bits, 0.0);
        let n = 1024.0;
        let target = 0.5 * (std::f64::consts::PI * std::f64::consts::E * n / 2.0).log2();
        assert!((Dist::binomial(1024).shannon().bits - target).abs() < 0.02);
    }

    #[test]
    fn tsv_round_trip_is_bit_exact() {
        let q = FieldSpec::Rationals;
        let d = Dist::new(
            q,
            vec![
                (q.parse_scalar("-3/2").unwrap(), rational(1, 3)),
                (q.parse_scalar("7").unwrap(), rational(2, 3)),
            ],
        )
        .unwrap();
        let text = d.to_tsv_string();
        assert_eq!(text, "#field Q\n-3/2\t1/3\n7\t2/3\n");
        let back = Dist::from_tsv_str(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_tsv_string(), text);

        let f = Dist::from_tsv_str("#field p=5\n-1\t1/2\n1\t1/2\n").unwrap();
        assert_eq!(f.to_tsv_string(), "#field p=5\n1\t1/2\n4\t1/2\n");
        assert!(matches!(Dist::from_tsv_str("1\t1/1\n"), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn floor_min_entropy_is_exact() {
        let q = FieldSpec::Rationals;
        assert_eq!(floor_min_entropy(&Dist::uniform_ints(q, 0..4).unwrap()), 2);
        assert_eq!(floor_min_entropy(&Dist::uniform_ints(q, 0..7).unwrap()), 2);
        assert_eq!(floor_min_entropy(&Dist::uniform_ints(q, 0..8).unwrap()), 3);
        assert_eq!(floor_min_entropy(&Dist::point(q.from_i64(0))), 0);
    }
}
