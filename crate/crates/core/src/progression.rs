//! Sumsets, generalized arithmetic progressions, coset progressions, and
//! Freiman isomorphisms onto discrete boxes.
//!
//! Every structural property here (properness, containment, isomorphism) is
//! decided by exhaustive enumeration under a [`Budget`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::Hash;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::query::Budget;

/// An abelian group law on keys, used to compare sums across different groups.
pub trait Additive: Clone + Eq + Hash + Ord {
    fn plus(&self, other: &Self) -> Self;
}

impl Additive for Scalar {
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
}

/// `Z^d` with coordinatewise addition.
impl Additive for Vec<i64> {
    fn plus(&self, other: &Self) -> Self {
        self.iter().zip(other).map(|(a, b)| a + b).collect()
    }
}

/// A finite set of scalars from one field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetOfScalars {
    field: FieldSpec,
    elems: BTreeSet<Scalar>,
}

impl SetOfScalars {
    pub fn new(field: FieldSpec, elems: impl IntoIterator<Item = Scalar>) -> Result<Self> {
        let elems: BTreeSet<Scalar> = elems.into_iter().collect();
        if let Some(s) = elems.iter().find(|s| s.field() != field) {
            return Err(Error::mismatch(field, s.field()));
        }
        Ok(Self { field, elems })
    }

    pub fn from_ints(field: FieldSpec, xs: impl IntoIterator<Item = i64>) -> Self {
        Self { field, elems: xs.into_iter().map(|x| field.from_i64(x)).collect() }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn contains(&self, s: &Scalar) -> bool {
        self.elems.contains(s)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scalar> {
        self.elems.iter()
    }

    pub fn is_subset(&self, other: &SetOfScalars) -> bool {
        self.elems.is_subset(&other.elems)
    }

    fn check(&self, other: &SetOfScalars) -> Result<()> {
        if self.field != other.field {
            return Err(Error::mismatch(self.field, other.field));
        }
        Ok(())
    }

    /// `A + B`.
    pub fn sumset(&self, other: &SetOfScalars) -> Result<SetOfScalars> {
        self.check(other)?;
        let elems = self.elems.iter().flat_map(|a| other.elems.iter().map(move |b| a + b)).collect();
        Ok(Self { field: self.field, elems })
    }

    /// `A · B`.
    pub fn productset(&self, other: &SetOfScalars) -> Result<SetOfScalars> {
        self.check(other)?;
        let elems = self.elems.iter().flat_map(|a| other.elems.iter().map(move |b| a * b)).collect();
        Ok(Self { field: self.field, elems })
    }
}

impl<'a> IntoIterator for &'a SetOfScalars {
    type Item = &'a Scalar;
    type IntoIter = std::collections::btree_set::Iter<'a, Scalar>;
    fn into_iter(self) -> Self::IntoIter {
        self.elems.iter()
    }
}

/// `{a + n_1 r_1 + ... + n_d r_d}` with `n_i ∈ [0, N_i)` or, when symmetric,
/// `n_i ∈ [−N_i, N_i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapSpec {
    pub base: Scalar,
    pub generators: Vec<Scalar>,
    pub bounds: Vec<u64>,
    pub symmetric: bool,
}

impl GapSpec {
    pub fn new(base: Scalar, generators: Vec<Scalar>, bounds: Vec<u64>, symmetric: bool) -> Result<Self> {
        if generators.len() != bounds.len() {
            return Err(Error::Usage("one bound per generator required".into()));
        }
        if bounds.contains(&0) {
            return Err(Error::Usage("progression bounds must be at least 1".into()));
        }
        let field = base.field();
        if let Some(r) = generators.iter().find(|r| r.field() != field) {
            return Err(Error::mismatch(field, r.field()));
        }
        Ok(Self { base, generators, bounds, symmetric })
    }

    pub fn field(&self) -> FieldSpec {
        self.base.field()
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    fn ranges(&self) -> Vec<(i64, i64)> {
        self.bounds
            .iter()
            .map(|&n| if self.symmetric { (-(n as i64), n as i64) } else { (0, n as i64 - 1) })
            .collect()
    }

    /// Coefficient ranges of the `t`-dilate: `[0, tN)` or `[−tN, tN]`.
    fn dilated_ranges(&self, t: &BigRational) -> Vec<(i64, i64)> {
        self.bounds
            .iter()
            .map(|&n| {
                let tn = t * BigRational::from_integer(BigInt::from(n));
                if self.symmetric {
                    let m = tn.floor().to_integer().to_i64().expect("small bound");
                    (-m, m)
                } else {
                    let hi = tn.ceil().to_integer().to_i64().expect("small bound") - 1;
                    (0, hi)
                }
            })
            .collect()
    }

    pub fn index_count(&self) -> u128 {
        self.ranges().iter().map(|(lo, hi)| (hi - lo + 1) as u128).product()
    }

    pub fn element(&self, coeffs: &[i64]) -> Scalar {
        let field = self.field();
        self.generators
            .iter()
            .zip(coeffs)
            .fold(self.base.clone(), |acc, (r, &n)| &acc + &(&field.from_i64(n) * r))
    }
}

fn for_each_index(ranges: &[(i64, i64)], mut f: impl FnMut(&[i64])) {
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return;
    }
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&idx);
        let mut j = ranges.len();
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if idx[j] < ranges[j].1 {
                idx[j] += 1;
                break;
            }
            idx[j] = ranges[j].0;
        }
    }
}

/// `H + P` with `H` a finite subgroup given by its elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosetProgression {
    subgroup: Vec<Scalar>,
    progression: GapSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub set: SetOfScalars,
    /// Number of `(h, n_1, ..., n_d)` index tuples.
    pub index_count: u128,
}

impl Enumeration {
    pub fn is_proper(&self) -> bool {
        self.set.len() as u128 == self.index_count
    }
}

impl CosetProgression {
    pub fn new(subgroup: Vec<Scalar>, progression: GapSpec) -> Result<Self> {
        let field = progression.field();
        let h: BTreeSet<Scalar> = subgroup.into_iter().collect();
        if let Some(s) = h.iter().find(|s| s.field() != field) {
            return Err(Error::mismatch(field, s.field()));
        }
        if !h.contains(&field.zero()) {
            return Err(Error::Domain("subgroup must contain 0".into()));
        }
        for a in &h {
            if !h.contains(&-a) || h.iter().any(|b| !h.contains(&(a + b))) {
                return Err(Error::Domain("subgroup is not closed under the group law".into()));
            }
        }
        // The only finite subgroups of F_p are {0} and F_p; of ℚ, only {0}.
        debug_assert!(h.len() == 1 || field.order() == Some(h.len() as u64));
        Ok(Self { subgroup: h.into_iter().collect(), progression })
    }

    /// A plain progression with the trivial subgroup.
    pub fn from_gap(progression: GapSpec) -> Self {
        let zero = progression.field().zero();
        Self { subgroup: vec![zero], progression }
    }

    pub fn field(&self) -> FieldSpec {
        self.progression.field()
    }

    pub fn subgroup(&self) -> &[Scalar] {
        &self.subgroup
    }

    pub fn progression(&self) -> &GapSpec {
        &self.progression
    }

    pub fn rank(&self) -> usize {
        self.progression.rank()
    }

    fn enumerate_ranges(&self, ranges: &[(i64, i64)], budget: Budget) -> Result<(HashSet<Scalar>, u128)> {
        let count: u128 = ranges.iter().map(|(lo, hi)| (hi - lo + 1).max(0) as u128).product::<u128>()
            * self.subgroup.len() as u128;
        budget.check(count)?;
        let mut set = HashSet::with_capacity(count as usize);
        for_each_index(ranges, |n| {
            let p = self.progression.element(n);
            for h in &self.subgroup {
                set.insert(h + &p);
            }
        });
        Ok((set, count))
    }

    /// The set `H + P` and the number of index tuples producing it.
    pub fn enumerate(&self, budget: Budget) -> Result<Enumeration> {
        let (set, index_count) = self.enumerate_ranges(&self.progression.ranges(), budget)?;
        Ok(Enumeration { set: SetOfScalars::new(self.field(), set)?, index_count })
    }

    /// Whether all sums over the `t`-dilated index box (and `H`) are distinct.
    pub fn is_t_proper(&self, t: &BigRational, budget: Budget) -> Result<bool> {
        if !t.is_positive() {
            return Err(Error::Usage("t must be positive".into()));
        }
        let (set, count) = self.enumerate_ranges(&self.progression.dilated_ranges(t), budget)?;
        Ok(set.len() as u128 == count)
    }

    /// Symmetric coset progression of rank at most `d + 1` containing `H + P`.
    ///
    /// Pads each one-sided length to an odd `N_i`, recenters at
    /// `x = a + Σ (N_i − 1)/2 · r_i`, and adds `{−x, 0, x}` as a new direction.
    pub fn symmetrize(&self, budget: Budget) -> Result<Symmetrized> {
        let gap = &self.progression;
        let field = gap.field();
        let (generators, bounds, center): (Vec<Scalar>, Vec<u64>, Scalar) = if gap.symmetric {
            (gap.generators.clone(), gap.bounds.clone(), gap.base.clone())
        } else {
            let padded: Vec<u64> = gap.bounds.iter().map(|&n| if n.is_even() { n + 1 } else { n }).collect();
            let half: Vec<i64> = padded.iter().map(|&n| ((n - 1) / 2) as i64).collect();
            let center = gap.element(&half);
            let keep: Vec<usize> = (0..padded.len()).filter(|&i| half[i] > 0).collect();
            (
                keep.iter().map(|&i| gap.generators[i].clone()).collect(),
                keep.iter().map(|&i| half[i] as u64).collect(),
                center,
            )
        };
        let padded_size = {
            let mut padded = gap.clone();
            if !padded.symmetric {
                padded.bounds = padded.bounds.iter().map(|&n| if n.is_even() { n + 1 } else { n }).collect();
            }
            CosetProgression { subgroup: self.subgroup.clone(), progression: padded }
                .enumerate(budget)?
                .set
                .len()
        };
        let (mut generators, mut bounds) = (generators, bounds);
        if !center.is_zero() {
            generators.push(center);
            bounds.push(1);
        }
        let progression = GapSpec { base: field.zero(), generators, bounds, symmetric: true };
        let out = CosetProgression { subgroup: self.subgroup.clone(), progression };
        let input = self.enumerate(budget)?.set;
        let output = out.enumerate(budget)?.set;
        if !input.is_subset(&output) {
            return Err(Error::Domain("symmetrization lost an element".into()));
        }
        Ok(Symmetrized {
            ratio: output.len() as f64 / padded_size as f64,
            input_size: input.len(),
            padded_size,
            output_size: output.len(),
            progression: out,
        })
    }
}

/// Output of [`CosetProgression::symmetrize`] with the achieved size ratio.
#[derive(Debug, Clone)]
pub struct Symmetrized {
    pub progression: CosetProgression,
    pub input_size: usize,
    pub padded_size: usize,
    pub output_size: usize,
    /// `|output| / |input after odd padding|`; at most 3.
    pub ratio: f64,
}

/// Coordinates of a 3-proper symmetric progression: the map
/// `a + Σ n_i r_i ↦ (n_1, ..., n_d)` onto the box `Π [−N_i, N_i]`.
#[derive(Debug, Clone)]
pub struct FreimanBoxMap {
    gap: GapSpec,
    forward: HashMap<Scalar, Vec<i64>>,
}

impl FreimanBoxMap {
    pub fn new(gap: &GapSpec, budget: Budget) -> Result<Self> {
        if !gap.symmetric {
            return Err(Error::Precondition("box map needs a symmetric progression".into()));
        }
        let q = CosetProgression::from_gap(gap.clone());
        if !q.is_t_proper(&BigRational::from_integer(3.into()), budget)? {
            return Err(Error::Precondition("progression is not 3-proper".into()));
        }
        let mut forward = HashMap::new();
        for_each_index(&gap.ranges(), |n| {
            forward.insert(gap.element(n), n.to_vec());
        });
        Ok(Self { gap: gap.clone(), forward })
    }

    pub fn coords(&self, x: &Scalar) -> Result<Vec<i64>> {
        self.forward
            .get(x)
            .cloned()
            .ok_or_else(|| Error::Domain(format!("{x} is not in the progression")))
    }

    pub fn element(&self, coords: &[i64]) -> Option<Scalar> {
        let inside = coords.len() == self.gap.rank()
            && coords.iter().zip(&self.gap.bounds).all(|(&n, &b)| n.unsigned_abs() <= b);
        inside.then(|| self.gap.element(coords))
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `(element, coordinates)` pairs in canonical element order.
    pub fn pairs(&self) -> Vec<(Scalar, Vec<i64>)> {
        let mut v: Vec<_> = self.forward.iter().map(|(s, c)| (s.clone(), c.clone())).collect();
        v.sort();
        v
    }
}

pub fn freiman_box_map(gap: &GapSpec, x: &Scalar, budget: Budget) -> Result<Vec<i64>> {
    FreimanBoxMap::new(gap, budget)?.coords(x)
}

/// Whether the explicit bijection `a_i ↦ b_i` satisfies
/// `a1 + a2 = a3 + a4 ⟺ φ(a1) + φ(a2) = φ(a3) + φ(a4)` for all quadruples.
///
/// The quadruple condition holds exactly when every fibre of `(a1, a2) ↦ a1 + a2`
/// is a fibre of `(a1, a2) ↦ φ(a1) + φ(a2)`, which is checked over all ordered
/// pairs.
pub fn is_freiman_isomorphism<A: Additive, B: Additive>(pairs: &[(A, B)], budget: Budget) -> Result<bool> {
    let n = pairs.len() as u128;
    budget.check(n * n)?;
    let domain: HashSet<&A> = pairs.iter().map(|(a, _)| a).collect();
    let image: HashSet<&B> = pairs.iter().map(|(_, b)| b).collect();
    if domain.len() != pairs.len() || image.len() != pairs.len() {
        return Err(Error::Usage("map is not a bijection".into()));
    }
    let mut forward: HashMap<A, B> = HashMap::new();
    let mut backward: HashMap<B, A> = HashMap::new();
    for (a1, b1) in pairs {
        for (a2, b2) in pairs {
            let sa = a1.plus(a2);
            let sb = b1.plus(b2);
            if let Some(prev) = forward.get(&sa) {
                if *prev != sb {
                    return Ok(false);
                }
            } else {
                forward.insert(sa.clone(), sb.clone());
            }
            if let Some(prev) = backward.get(&sb) {
                if *prev != sa {
                    return Ok(false);
                }
            } else {
                backward.insert(sb, sa);
            }
        }
    }
    Ok(true)
}

/// JSON form: `{"a", "r", "N", "symmetric", "H"}` with scalars as text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressionJson {
    pub a: String,
    pub r: Vec<String>,
    #[serde(rename = "N")]
    pub n: Vec<u64>,
    pub symmetric: bool,
    #[serde(rename = "H", default)]
    pub h: Vec<String>,
}

impl ProgressionJson {
    pub fn to_progression(&self, field: FieldSpec) -> Result<CosetProgression> {
        let gap = GapSpec::new(
            field.parse_scalar(&self.a)?,
            self.r.iter().map(|s| field.parse_scalar(s)).collect::<Result<_>>()?,
            self.n.clone(),
            self.symmetric,
        )?;
        let h: Vec<Scalar> = if self.h.is_empty() {
            vec![field.zero()]
        } else {
            self.h.iter().map(|s| field.parse_scalar(s)).collect::<Result<_>>()?
        };
        CosetProgression::new(h, gap)
    }

    pub fn from_progression(p: &CosetProgression) -> Self {
        let g = p.progression();
        Self {
            a: g.base.to_string(),
            r: g.generators.iter().map(ToString::to_string).collect(),
            n: g.bounds.clone(),
            symmetric: g.symmetric,
            h: p.subgroup().iter().map(ToString::to_string).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::rational;

    fn gap(field: FieldSpec, a: i64, r: &[i64], n: &[u64], symmetric: bool) -> GapSpec {
        GapSpec::new(
            field.from_i64(a),
            r.iter().map(|&x| field.from_i64(x)).collect(),
            n.to_vec(),
            symmetric,
        )
        .unwrap()
    }

    fn ints(set: &SetOfScalars) -> Vec<String> {
        set.iter().map(ToString::to_string).collect()
    }

    #[test]
    fn sumset_examples() {
        let f5 = FieldSpec::Prime(5);
        let a = SetOfScalars::from_ints(f5, [0, 1]);
        assert_eq!(ints(&a.sumset(&a).unwrap()), ["0", "1", "2"]);
        let q = FieldSpec::Rationals;
        let a = SetOfScalars::from_ints(q, [0, 1, 3]);
        assert_eq!(a.sumset(&a).unwrap().len(), 6);
        assert_eq!(a.productset(&SetOfScalars::from_ints(q, [1])).unwrap(), a);
        assert!(a.sumset(&SetOfScalars::from_ints(f5, [1])).is_err());
    }

    #[test]
    fn enumerate_examples() {
        let f7 = FieldSpec::Prime(7);
        let e = CosetProgression::from_gap(gap(f7, 0, &[1], &[5], false)).enumerate(Budget::default()).unwrap();
        assert_eq!(ints(&e.set), ["0", "1", "2", "3", "4"]);
        assert!(e.is_proper());
        let e = CosetProgression::from_gap(gap(f7, 0, &[3], &[5], false)).enumerate(Budget::default()).unwrap();
        assert_eq!(ints(&e.set), ["0", "2", "3", "5", "6"]);
        assert!(e.is_proper());
        // 2·{0..4} mod 5 = {0, 2, 4, 1, 3}: all five residues, so proper.
        let e = CosetProgression::from_gap(gap(FieldSpec::Prime(5), 0, &[2], &[5], false))
            .enumerate(Budget::default())
            .unwrap();
        assert_eq!(e.set.len(), 5);
        assert!(e.is_proper());
        // A length exceeding p wraps around.
        let e = CosetProgression::from_gap(gap(FieldSpec::Prime(5), 0, &[2], &[7], false))
            .enumerate(Budget::default())
            .unwrap();
        assert!(!e.is_proper());
    }

    #[test]
    fn subgroup_validation() {
        let f5 = FieldSpec::Prime(5);
        let g = gap(f5, 0, &[1], &[2], false);
        assert!(CosetProgression::new(vec![f5.from_i64(1)], g.clone()).is_err());
        assert!(CosetProgression::new(vec![f5.from_i64(0), f5.from_i64(1)], g.clone()).is_err());
        let full = CosetProgression::new((0..5).map(|i| f5.from_i64(i)).collect(), g).unwrap();
        let e = full.enumerate(Budget::default()).unwrap();
        assert_eq!((e.set.len(), e.index_count), (5, 10));
    }

    #[test]
    fn t_properness_examples() {
        let three = rational(3, 1);
        let b = Budget::default();
        let q = CosetProgression::from_gap(gap(FieldSpec::Rationals, 0, &[1], &[2], true));
        assert!(q.is_t_proper(&three, b).unwrap());
        let q = CosetProgression::from_gap(gap(FieldSpec::Prime(13), 0, &[1], &[2], true));
        assert!(q.is_t_proper(&three, b).unwrap());
        let q = CosetProgression::from_gap(gap(FieldSpec::Prime(11), 0, &[1], &[2], true));
        assert!(!q.is_t_proper(&three, b).unwrap());
        // One-sided dilation [0, tN): t = 3/2, N = 3 gives n ∈ {0..4}.
        let q = CosetProgression::from_gap(gap(FieldSpec::Prime(5), 0, &[1], &[3], false));
        assert!(q.is_t_proper(&rational(3, 2), b).unwrap());
        assert!(!q.is_t_proper(&rational(2, 1), b).unwrap());
    }

    #[test]
    fn symmetrize_examples() {
        let b = Budget::default();
        let q = FieldSpec::Rationals;
        let p = CosetProgression::from_gap(gap(q, 0, &[1], &[5], false));
        let s = p.symmetrize(b).unwrap();
        let g = s.progression.progression();
        assert!(g.symmetric);
        assert_eq!(g.generators, vec![q.from_i64(1), q.from_i64(2)]);
        assert_eq!(g.bounds, vec![2, 1]);
        assert_eq!(s.output_size, 9);
        assert!(s.ratio <= 3.0);

        // Even length is padded first: N = 4 → 5.
        let p = CosetProgression::from_gap(gap(q, 3, &[2], &[4], false));
        let s = p.symmetrize(b).unwrap();
        assert_eq!(s.padded_size, 5);
        assert!(s.output_size <= 3 * s.padded_size);
        assert!(s.progression.rank() <= 2);

        let p = CosetProgression::from_gap(gap(FieldSpec::Prime(101), 0, &[1, 10], &[2, 3], true));
        let s = p.symmetrize(b).unwrap();
        assert_eq!(s.progression, p);
    }

    #[test]
    fn box_map_examples() {
        let b = Budget::default();
        let f13 = FieldSpec::Prime(13);
        let g = gap(f13, 0, &[1], &[2], true);
        assert_eq!(freiman_box_map(&g, &f13.from_i64(11), b).unwrap(), vec![-2]);
        assert_eq!(freiman_box_map(&g, &f13.from_i64(0), b).unwrap(), vec![0]);
        assert!(matches!(freiman_box_map(&g, &f13.from_i64(5), b), Err(Error::Domain(_))));

        let f101 = FieldSpec::Prime(101);
        let g2 = gap(f101, 0, &[1, 10], &[1, 1], true);
        assert_eq!(freiman_box_map(&g2, &f101.from_i64(11), b).unwrap(), vec![1, 1]);

        let f11 = FieldSpec::Prime(11);
        let bad = gap(f11, 0, &[1], &[2], true);
        assert!(matches!(FreimanBoxMap::new(&bad, b), Err(Error::Precondition(_))));

        let m = FreimanBoxMap::new(&g2, b).unwrap();
        for (x, c) in m.pairs() {
            assert_eq!(m.element(&c).unwrap(), x);
        }
    }

    #[test]
    fn freiman_isomorphism_examples() {
        let b = Budget::default();
        let q = FieldSpec::Rationals;
        let a: Vec<Scalar> = [0, 1, 5, 7].iter().map(|&x| q.from_i64(x)).collect();
        let id: Vec<_> = a.iter().map(|x| (x.clone(), x.clone())).collect();
        assert!(is_freiman_isomorphism(&id, b).unwrap());
        let affine: Vec<_> = a.iter().map(|x| (x.clone(), &(&q.from_i64(2) * x) + &q.from_i64(1))).collect();
        assert!(is_freiman_isomorphism(&affine, b).unwrap());
        let f3 = FieldSpec::Prime(3);
        let lift: Vec<_> = (0..3).map(|i| (f3.from_i64(i), q.from_i64(i))).collect();
        assert!(!is_freiman_isomorphism(&lift, b).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"a":"0","r":["1","10"],"N":[2,3],"symmetric":true,"H":["0"]}"#;
        let j: ProgressionJson = serde_json::from_str(text).unwrap();
        let p = j.to_progression(FieldSpec::Prime(101)).unwrap();
        assert_eq!(serde_json::to_string(&ProgressionJson::from_progression(&p)).unwrap(), text);
    }
}
