//! Point–plane incidences in `F³` and the additive–multiplicative energies
//! they control.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::progression::SetOfScalars;
use crate::query::Budget;

pub type Point3 = [Scalar; 3];

/// Distinct points of `F³`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSet3 {
    field: FieldSpec,
    points: BTreeSet<Point3>,
}

impl PointSet3 {
    pub fn new(field: FieldSpec, points: impl IntoIterator<Item = Point3>) -> Result<Self> {
        let points: BTreeSet<Point3> = points.into_iter().collect();
        for p in &points {
            if let Some(s) = p.iter().find(|s| s.field() != field) {
                return Err(Error::mismatch(field, s.field()));
            }
        }
        Ok(Self { field, points })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point3> {
        self.points.iter()
    }

    pub fn read_tsv(reader: impl BufRead) -> Result<Self> {
        let (field, rows) = read_tuples(reader, 3)?;
        Self::new(field, rows.into_iter().map(|r| <[Scalar; 3]>::try_from(r).expect("arity checked")))
    }
}

/// The plane `αx + βy + γz = δ`, scaled so the first nonzero of `(α, β, γ)` is 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Plane {
    coeffs: [Scalar; 4],
}

impl Plane {
    pub fn new(alpha: Scalar, beta: Scalar, gamma: Scalar, delta: Scalar) -> Result<Self> {
        let field = alpha.field();
        for s in [&beta, &gamma, &delta] {
            if s.field() != field {
                return Err(Error::mismatch(field, s.field()));
            }
        }
        let lead = [&alpha, &beta, &gamma]
            .into_iter()
            .find(|s| !s.is_zero())
            .ok_or_else(|| Error::Domain("plane normal must be nonzero".into()))?
            .inv()?;
        Ok(Self { coeffs: [&alpha * &lead, &beta * &lead, &gamma * &lead, &delta * &lead] })
    }

    pub fn coeffs(&self) -> &[Scalar; 4] {
        &self.coeffs
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let [a, b, c, d] = &self.coeffs;
        &(&(a * &p[0]) + &(b * &p[1])) + &(c * &p[2]) == *d
    }
}

/// Distinct planes of `F³` in canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneSet3 {
    field: FieldSpec,
    planes: BTreeSet<Plane>,
}

impl PlaneSet3 {
    pub fn new(field: FieldSpec, planes: impl IntoIterator<Item = Plane>) -> Result<Self> {
        let planes: BTreeSet<Plane> = planes.into_iter().collect();
        if let Some(p) = planes.iter().find(|p| p.coeffs[0].field() != field) {
            return Err(Error::mismatch(field, p.coeffs[0].field()));
        }
        Ok(Self { field, planes })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Plane> {
        self.planes.iter()
    }

    pub fn read_tsv(reader: impl BufRead) -> Result<Self> {
        let (field, rows) = read_tuples(reader, 4)?;
        let planes = rows
            .into_iter()
            .map(|r| {
                let [a, b, c, d] = <[Scalar; 4]>::try_from(r).expect("arity checked");
                Plane::new(a, b, c, d)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(field, planes)
    }
}

/// `#field` header followed by tab-separated scalar tuples of fixed arity.
pub fn read_tuples(reader: impl BufRead, arity: usize) -> Result<(FieldSpec, Vec<Vec<Scalar>>)> {
    let mut field: Option<FieldSpec> = None;
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let fmt_err = |e: Error| Error::Format { line: line_no, message: e.to_string() };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#field") {
            field = Some(rest.trim().parse().map_err(fmt_err)?);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let f = field.ok_or_else(|| Error::Format { line: line_no, message: "missing `#field` header".into() })?;
        let row = trimmed.split_whitespace().map(|s| f.parse_scalar(s)).collect::<Result<Vec<_>>>().map_err(fmt_err)?;
        if row.len() != arity {
            return Err(Error::Format { line: line_no, message: format!("expected {arity} fields, got {}", row.len()) });
        }
        rows.push(row);
    }
    let field = field.ok_or_else(|| Error::Format { line: 0, message: "empty file".into() })?;
    Ok((field, rows))
}

/// `I(P, Q)`, testing every pair.
pub fn count_incidences(p: &PointSet3, q: &PlaneSet3, budget: Budget) -> Result<u64> {
    if p.field != q.field {
        return Err(Error::mismatch(p.field, q.field));
    }
    budget.check(p.len() as u128 * q.len() as u128)?;
    Ok(q.planes.iter().map(|h| p.points.iter().filter(|x| h.contains(x)).count() as u64).sum())
}

/// Points `(a, b', ac)` and planes `bx − a'y + z = a'c'`, so that an incidence
/// is exactly a solution of `a(b + c) = a'(b' + c')`.
///
/// Requires `0 ∉ A`; otherwise distinct triples collapse to one point or plane.
pub fn koh_construction(a: &SetOfScalars, b: &SetOfScalars, c: &SetOfScalars) -> Result<(PointSet3, PlaneSet3)> {
    let field = a.field();
    for s in [b, c] {
        if s.field() != field {
            return Err(Error::mismatch(field, s.field()));
        }
    }
    if a.contains(&field.zero()) {
        return Err(Error::Domain("construction requires 0 ∉ A".into()));
    }
    let mut points = Vec::new();
    let mut planes = Vec::new();
    for x in a {
        for y in b {
            for z in c {
                points.push([x.clone(), y.clone(), x * z]);
                planes.push(Plane::new(y.clone(), -x, field.one(), x * z)?);
            }
        }
    }
    Ok((PointSet3::new(field, points)?, PlaneSet3::new(field, planes)?))
}

fn square_sum<K>(m: &HashMap<K, u64>, skip: impl Fn(&K) -> bool) -> u128 {
    m.iter().filter(|(k, _)| !skip(k)).map(|(_, &v)| v as u128 * v as u128).sum()
}

fn tally<K: Eq + Hash>(keys: impl IntoIterator<Item = K>) -> HashMap<K, u64> {
    let mut m = HashMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Multiplicities `m(u) = |{(a, b, c) : a(b + c) = u}|`.
pub fn product_sum_multiplicities(
    a: &SetOfScalars,
    b: &SetOfScalars,
    c: &SetOfScalars,
    budget: Budget,
) -> Result<HashMap<Scalar, u64>> {
    let field = a.field();
    for s in [b, c] {
        if s.field() != field {
            return Err(Error::mismatch(field, s.field()));
        }
    }
    budget.check(a.len() as u128 * b.len() as u128 * c.len() as u128)?;
    Ok(tally(a.iter().flat_map(|x| b.iter().flat_map(move |y| c.iter().map(move |z| x * &(y + z))))))
}

/// `N = |{(a, b, c, a', b', c') : a(b + c) = a'(b' + c')}| = Σ_u m(u)²`.
pub fn energy_product_sum(a: &SetOfScalars, b: &SetOfScalars, c: &SetOfScalars, budget: Budget) -> Result<u128> {
    Ok(square_sum(&product_sum_multiplicities(a, b, c, budget)?, |_| false))
}

/// Ordered `((a, c), (b, d), (a', c'), (b', d')) ∈ P⁴` with
/// `(a − b)(c − d) = (a' − b')(c' − d') ≠ 0`.
pub fn energy_rnr(points: &[(Scalar, Scalar)], budget: Budget) -> Result<u128> {
    let n = points.len() as u128;
    budget.check(n * n)?;
    if let Some(field) = points.first().map(|p| p.0.field()) {
        if let Some(s) = points.iter().flat_map(|(x, y)| [x, y]).find(|s| s.field() != field) {
            return Err(Error::mismatch(field, s.field()));
        }
    }
    let m = tally(points.iter().flat_map(|(a, c)| points.iter().map(move |(b, d)| &(a - b) * &(c - d))));
    Ok(square_sum(&m, Scalar::is_zero))
}

/// `|A(B + C)|`.
pub fn expander_size(a: &SetOfScalars, b: &SetOfScalars, c: &SetOfScalars, budget: Budget) -> Result<usize> {
    Ok(product_sum_multiplicities(a, b, c, budget)?.len())
}

/// Direct quadratic-in-tuples counts used as oracles for the bucketed versions.
pub mod oracle {
    use super::*;

    pub fn naive_sextuple(a: &SetOfScalars, b: &SetOfScalars, c: &SetOfScalars) -> u128 {
        let triples: Vec<Scalar> =
            a.iter().flat_map(|x| b.iter().flat_map(move |y| c.iter().map(move |z| x * &(y + z)))).collect();
        let mut n = 0;
        for u in &triples {
            for v in &triples {
                n += (u == v) as u128;
            }
        }
        n
    }

    pub fn naive_rnr(p: &[(Scalar, Scalar)]) -> u128 {
        let mut n = 0;
        for (a, c) in p {
            for (b, d) in p {
                let u = &(a - b) * &(c - d);
                if u.is_zero() {
                    continue;
                }
                for (a2, c2) in p {
                    for (b2, d2) in p {
                        n += (&(a2 - b2) * &(c2 - d2) == u) as u128;
                    }
                }
            }
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;

    fn s(field: FieldSpec, xs: &[i64]) -> SetOfScalars {
        SetOfScalars::from_ints(field, xs.iter().copied())
    }

    fn pt(field: FieldSpec, x: i64, y: i64, z: i64) -> Point3 {
        [field.from_i64(x), field.from_i64(y), field.from_i64(z)]
    }

    fn plane(field: FieldSpec, c: [i64; 4]) -> Plane {
        Plane::new(field.from_i64(c[0]), field.from_i64(c[1]), field.from_i64(c[2]), field.from_i64(c[3])).unwrap()
    }

    #[test]
    fn incidence_examples() {
        let q = FieldSpec::Rationals;
        let b = Budget::default();
        let p = PointSet3::new(q, [pt(q, 0, 0, 0)]).unwrap();
        let h = PlaneSet3::new(q, [plane(q, [0, 0, 1, 0])]).unwrap();
        assert_eq!(count_incidences(&p, &h, b).unwrap(), 1);
        let p = PointSet3::new(q, [pt(q, 0, 0, 0), pt(q, 1, 0, 0), pt(q, 0, 1, 0), pt(q, 5, 7, 0)]).unwrap();
        let h = PlaneSet3::new(q, [plane(q, [0, 0, 1, 0]), plane(q, [0, 0, 1, 1])]).unwrap();
        assert_eq!(count_incidences(&p, &h, b).unwrap(), 4);
    }

    #[test]
    fn planes_are_canonical() {
        let f7 = FieldSpec::Prime(7);
        assert_eq!(plane(f7, [2, 4, 6, 1]), plane(f7, [1, 2, 3, 4]));
        assert_eq!(plane(FieldSpec::Rationals, [0, 3, 6, 9]), plane(FieldSpec::Rationals, [0, 1, 2, 3]));
        assert!(Plane::new(f7.zero(), f7.zero(), f7.zero(), f7.one()).is_err());
    }

    #[test]
    fn energy_examples() {
        let q = FieldSpec::Rationals;
        let b = Budget::default();
        let a = s(q, &[1, 2]);
        assert_eq!(energy_product_sum(&a, &a, &a, b).unwrap(), 14);
        let mut mult: Vec<u64> = product_sum_multiplicities(&a, &a, &a, b).unwrap().into_values().collect();
        mult.sort();
        assert_eq!(mult, [1, 1, 2, 2, 2]);
        let one = s(q, &[1]);
        assert_eq!(energy_product_sum(&one, &one, &one, b).unwrap(), 1);

        let (p, h) = koh_construction(&a, &a, &a).unwrap();
        assert_eq!(count_incidences(&p, &h, b).unwrap(), 14);
        assert!(koh_construction(&s(q, &[0, 1]), &a, &a).is_err());
    }

    #[test]
    fn expander_examples() {
        let q = FieldSpec::Rationals;
        let b = Budget::default();
        let a = s(q, &[1, 2]);
        assert_eq!(expander_size(&a, &a, &a, b).unwrap(), 5);
        let bc = s(q, &[1, 4, 9]);
        assert_eq!(expander_size(&s(q, &[1]), &bc, &bc, b).unwrap(), bc.sumset(&bc).unwrap().len());
        let big = s(q, &(1..=16).collect::<Vec<_>>());
        assert!(expander_size(&big, &big, &big, b).unwrap() >= 64);
    }

    #[test]
    fn rnr_examples() {
        let q = FieldSpec::Rationals;
        let b = Budget::default();
        let z = (q.zero(), q.zero());
        assert_eq!(energy_rnr(std::slice::from_ref(&z), b).unwrap(), 0);
        assert_eq!(energy_rnr(&[z, (q.one(), q.one())], b).unwrap(), 4);
    }

    #[test]
    fn tuples_from_tsv() {
        let p = PointSet3::read_tsv("#field p=5\n1\t2\t3\n6\t2\t3\n".as_bytes()).unwrap();
        assert_eq!(p.len(), 1);
        let h = PlaneSet3::read_tsv("#field Q\n2\t0\t0\t1\n1\t0\t0\t1/2\n".as_bytes()).unwrap();
        assert_eq!(h.len(), 1);
        assert!(matches!(PointSet3::read_tsv("#field Q\n1\t2\n".as_bytes()), Err(Error::Format { line: 2, .. })));
    }


    fn small_set(field: FieldSpec, lo: i64) -> impl Strategy<Value = SetOfScalars> {
        proptest::collection::btree_set(lo..40i64, 1..=6).prop_map(move |xs| s(field, &xs.into_iter().collect::<Vec<_>>()))
    }

    fn any_field() -> impl Strategy<Value = FieldSpec> {
        prop_oneof![Just(FieldSpec::Rationals), Just(FieldSpec::Prime(7)), Just(FieldSpec::Prime(31))]
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bucketed_energy_matches_sextuple_loop(
            (a, b, c) in any_field().prop_flat_map(|f| (small_set(f, 0), small_set(f, 0), small_set(f, 0)))
        ) {
            prop_assert_eq!(energy_product_sum(&a, &b, &c, Budget::default()).unwrap(), naive_sextuple(&a, &b, &c));
        }

        #[test]
        fn incidences_equal_energy(
            (a, b, c) in any_field().prop_flat_map(|f| (small_set(f, 1), small_set(f, 0), small_set(f, 0)))
        ) {
            let a = SetOfScalars::new(a.field(), a.iter().filter(|x| !x.is_zero()).cloned()).unwrap();
            prop_assume!(!a.is_empty());
            let (p, h) = koh_construction(&a, &b, &c).unwrap();
            let n = energy_product_sum(&a, &b, &c, Budget::default()).unwrap();
            prop_assert_eq!(count_incidences(&p, &h, Budget::default()).unwrap() as u128, n);
        }

        #[test]
        fn rnr_matches_oracle(pts in proptest::collection::btree_set((-4i64..5, -4i64..5), 1..=10)) {
            let q = FieldSpec::Rationals;
            let pts: Vec<_> = pts.into_iter().map(|(x, y)| (q.from_i64(x), q.from_i64(y))).collect();
            prop_assert_eq!(energy_rnr(&pts, Budget::default()).unwrap(), naive_rnr(&pts));
        }

        #[test]
        fn collision_entropy_is_six_log_k_minus_log_n(a in small_set(FieldSpec::Prime(31), 0)) {
            use crate::dist::Dist;
            use crate::field::rational;
            use crate::query::{entropy_of, Bindings};
            let f = a.field();
            let u = Dist::uniform(f, a.iter().cloned()).unwrap();
            let bind = Bindings::iid(&["A", "B", "C"], &u);
            let h2 = entropy_of(&"H2[A*(B+C)]".parse().unwrap(), &bind, Budget::default()).unwrap();
            let k = a.len() as i64;
            let n = energy_product_sum(&a, &a, &a, Budget::default()).unwrap() as i64;
            // 2^{-H2} = N / k^6 exactly.
            prop_assert_eq!(h2.exact.unwrap(), rational(n, k.pow(6)));
        }
    }
}
