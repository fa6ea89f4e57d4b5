//! Decomposition of a min-entropy-`m` law into a convex combination of flat
//! laws on `2^m` atoms.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dist::{dyadic, floor_min_entropy, parse_rational, rational_text, Dist};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::numeric::{compensated_sum, rational_to_f64};
use crate::query::{entropy_of_exprs, Bindings, Budget, EntropyKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatPart {
    pub weight: BigRational,
    /// Exactly `2^m` distinct atoms in canonical order.
    pub atoms: Vec<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatMixture {
    pub field: FieldSpec,
    pub m: u32,
    pub parts: Vec<FlatPart>,
}

impl FlatMixture {
    /// `Σ_i w_i · U_{A_i}` as an exact law.
    pub fn mixture_law(&self) -> Result<Dist> {
        let flat = dyadic(self.m);
        let mut acc: BTreeMap<Scalar, BigRational> = BTreeMap::new();
        for part in &self.parts {
            let q = &part.weight * &flat;
            for a in &part.atoms {
                *acc.entry(a.clone()).or_insert_with(BigRational::zero) += &q;
            }
        }
        Dist::new(self.field, acc.into_iter().collect())
    }

    /// Checks every structural invariant and exact reconstruction of `source`,
    /// without reference to how the mixture was built.
    pub fn validate(&self, source: &Dist) -> Result<()> {
        let size = 1usize << self.m;
        let bad = |msg: String| Err(Error::Precondition(msg));
        if self.field != source.field() {
            return Err(Error::mismatch(self.field, source.field()));
        }
        if self.parts.is_empty() {
            return bad("mixture has no parts".into());
        }
        let mut total = BigRational::zero();
        for (i, part) in self.parts.iter().enumerate() {
            if !part.weight.is_positive() {
                return bad(format!("part {i} has non-positive weight"));
            }
            let mut atoms = part.atoms.clone();
            atoms.sort();
            atoms.dedup();
            if atoms.len() != part.atoms.len() || atoms.len() != size {
                return bad(format!("part {i} has {} distinct atoms, expected {size}", atoms.len()));
            }
            total += &part.weight;
        }
        if !total.is_one() {
            return bad(format!("weights sum to {}", rational_text(&total)));
        }
        let law = self.mixture_law()?;
        if law.law() != source.law() {
            return bad("mixture does not reconstruct the source law".into());
        }
        Ok(())
    }
}

/// Greedy peeling: take the `M = 2^m` atoms of largest remaining mass, remove
/// `c` from each, where `c` is the largest amount keeping every mass
/// non-negative and the remaining maximum at most `1/M` of the remaining total.
pub fn decompose_flat(x: &Dist, m: u32) -> Result<FlatMixture> {
    let size = 1usize << m;
    if m >= 63 || x.p_max() > dyadic(m) {
        return Err(Error::Precondition(format!("min-entropy is below {m}")));
    }
    let big_m = BigRational::from_integer(BigInt::from(size));
    let mut remaining: Vec<(Scalar, BigRational)> = x.atoms().to_vec();
    let mut total = BigRational::one();
    let mut parts = Vec::new();
    let cap = 4 * x.support_len() * size;
    while total.is_positive() {
        if parts.len() >= cap {
            return Err(Error::Precondition(format!("flat decomposition did not finish within {cap} steps")));
        }
        // Largest mass first, ties by canonical scalar order.
        remaining.sort_by(|(ka, a), (kb, b)| b.cmp(a).then_with(|| ka.cmp(kb)));
        let smallest_selected = remaining[size - 1].1.clone();
        let next = remaining.get(size).map(|r| r.1.clone()).unwrap_or_else(BigRational::zero);
        let slack = (&total - &big_m * &next) / &big_m;
        let c = if slack < smallest_selected { slack } else { smallest_selected };
        if !c.is_positive() {
            return Err(Error::Precondition("flat decomposition stalled".into()));
        }
        let mut atoms: Vec<Scalar> = remaining[..size].iter().map(|r| r.0.clone()).collect();
        atoms.sort();
        for r in &mut remaining[..size] {
            r.1 -= &c;
        }
        remaining.retain(|r| r.1.is_positive());
        let weight = &c * &big_m;
        total -= &weight;
        parts.push(FlatPart { weight, atoms });
    }
    Ok(FlatMixture { field: x.field(), m, parts })
}

/// `decompose_flat` at `m = ⌊Ηmin(X)⌋`.
pub fn decompose_flat_default(x: &Dist) -> Result<FlatMixture> {
    decompose_flat(x, floor_min_entropy(x.law()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartJson {
    w: String,
    atoms: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MixtureJson {
    m: u32,
    parts: Vec<PartJson>,
}

impl FlatMixture {
    pub fn to_json(&self) -> String {
        let j = MixtureJson {
            m: self.m,
            parts: self
                .parts
                .iter()
                .map(|p| PartJson { w: rational_text(&p.weight), atoms: p.atoms.iter().map(ToString::to_string).collect() })
                .collect(),
        };
        serde_json::to_string(&j).expect("serializable")
    }

    pub fn from_json(field: FieldSpec, text: &str) -> Result<Self> {
        let j: MixtureJson = serde_json::from_str(text)?;
        let parts = j
            .parts
            .into_iter()
            .map(|p| {
                Ok(FlatPart {
                    weight: parse_rational(&p.w)?,
                    atoms: p.atoms.iter().map(|a| field.parse_scalar(a)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { field, m: j.m, parts })
    }
}

/// Default characteristic margin in bits for [`mixture_lower_bound_check`].
pub const DEFAULT_MARGIN_BITS: f64 = 2.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureRow {
    pub m: u32,
    pub margin_bits: f64,
    /// `Η(X(Y+Z))`, exact pushforward.
    pub entropy: f64,
    pub bound: f64,
    /// `(3/2)m − Η(X(Y+Z))`.
    pub deficit: f64,
    /// `Η(X(Y+Z) | V, V', V'') = Σ p_i q_j r_k Η(U_A(U_B+U_C))`.
    pub conditional: f64,
    /// `Σ p_i q_j r_k Η₂(U_A(U_B+U_C))`.
    pub collision_average: f64,
    pub collision_min: f64,
    pub parts: [usize; 3],
    /// `entropy ≥ conditional ≥ collision_average` within `1e-9`.
    pub chain_holds: bool,
}

fn part_counts(a: &[Scalar], b: &[Scalar], c: &[Scalar], scratch: &mut Scratch) -> (f64, f64) {
    let n = (a.len() * b.len() * c.len()) as f64;
    let counts = scratch.tally(a, b, c);
    let plogp = compensated_sum(counts.iter().map(|&k| k as f64 * (k as f64).log2()));
    let sq: u128 = counts.iter().map(|&k| k as u128 * k as u128).sum();
    let shannon = n.log2() - plogp / n;
    let collision = 2.0 * n.log2() - (sq as f64).log2();
    (shannon, collision)
}

/// Reusable value counter: a dense array over `F_p`, a hash map otherwise.
enum Scratch {
    Dense { counts: Vec<u64>, touched: Vec<usize> },
    Sparse,
}

impl Scratch {
    fn new(field: FieldSpec) -> Self {
        match field {
            FieldSpec::Prime(p) if p <= 1 << 24 => Scratch::Dense { counts: vec![0; p as usize], touched: Vec::new() },
            _ => Scratch::Sparse,
        }
    }

    fn tally(&mut self, a: &[Scalar], b: &[Scalar], c: &[Scalar]) -> Vec<u64> {
        match self {
            Scratch::Dense { counts, touched } => {
                for x in a {
                    for y in b {
                        for z in c {
                            let u = (x * &(y + z)).residue().expect("prime field") as usize;
                            if counts[u] == 0 {
                                touched.push(u);
                            }
                            counts[u] += 1;
                        }
                    }
                }
                touched.sort_unstable();
                let out = touched.iter().map(|&u| std::mem::take(&mut counts[u])).collect();
                touched.clear();
                out
            }
            Scratch::Sparse => {
                let mut m: HashMap<Scalar, u64> = HashMap::new();
                for x in a {
                    for y in b {
                        for z in c {
                            *m.entry(x * &(y + z)).or_insert(0) += 1;
                        }
                    }
                }
                let mut v: Vec<(Scalar, u64)> = m.into_iter().collect();
                v.sort();
                v.into_iter().map(|(_, k)| k).collect()
            }
        }
    }
}

/// Compares `Η(X(Y+Z))` with `(3/2)m` through the flat decompositions of the
/// three sources, checking the conditioning chain numerically.
pub fn mixture_lower_bound_check(
    x: &Dist,
    y: &Dist,
    z: &Dist,
    m: u32,
    margin_bits: f64,
    budget: Budget,
) -> Result<MixtureRow> {
    let field = x.field();
    for d in [y, z] {
        if d.field() != field {
            return Err(Error::mismatch(field, d.field()));
        }
    }
    if let FieldSpec::Prime(p) = field {
        let limit = 2.0 / 3.0 * (p as f64).log2() - margin_bits;
        if m as f64 > limit {
            return Err(Error::Precondition(format!("m = {m} exceeds (2/3)log p − margin = {limit:.3}")));
        }
    }
    let mixes = [decompose_flat(x, m)?, decompose_flat(y, m)?, decompose_flat(z, m)?];
    for (mix, d) in mixes.iter().zip([x, y, z]) {
        mix.validate(d)?;
    }
    let triples = mixes.iter().map(|mx| mx.parts.len() as u128).product::<u128>();
    budget.check(triples << (3 * m))?;

    let bind = Bindings::from_pairs([("X", x), ("Y", y), ("Z", z)])?;
    let w = crate::expr::parse_expr("X*(Y+Z)")?;
    let entropy = entropy_of_exprs(&[w], EntropyKind::Shannon, &bind, budget)?.bits;

    let mut scratch = Scratch::new(field);
    let mut conditional = Vec::new();
    let mut collision = Vec::new();
    let mut collision_min = f64::INFINITY;
    for pa in &mixes[0].parts {
        for pb in &mixes[1].parts {
            for pc in &mixes[2].parts {
                let weight = rational_to_f64(&(&(&pa.weight * &pb.weight) * &pc.weight));
                let (h, h2) = part_counts(&pa.atoms, &pb.atoms, &pc.atoms, &mut scratch);
                conditional.push(weight * h);
                collision.push(weight * h2);
                collision_min = collision_min.min(h2);
            }
        }
    }
    let conditional = compensated_sum(conditional);
    let collision_average = compensated_sum(collision);
    let bound = 1.5 * m as f64;
    Ok(MixtureRow {
        m,
        margin_bits,
        entropy,
        bound,
        deficit: bound - entropy,
        conditional,
        collision_average,
        collision_min,
        parts: [mixes[0].parts.len(), mixes[1].parts.len(), mixes[2].parts.len()],
        chain_holds: entropy >= conditional - 1e-9 && conditional >= collision_average - 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::rational;
    use proptest::prelude::*;

    fn dist(field: FieldSpec, atoms: &[(i64, i64, i64)]) -> Dist {
        Dist::new(field, atoms.iter().map(|&(s, n, d)| (field.from_i64(s), rational(n, d))).collect()).unwrap()
    }

    fn atom_sets(mix: &FlatMixture) -> Vec<(String, Vec<i64>)> {
        let mut v: Vec<_> = mix
            .parts
            .iter()
            .map(|p| {
                (rational_text(&p.weight), p.atoms.iter().map(|a| a.to_string().parse().unwrap()).collect())
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn decomposition_examples() {
        let q = FieldSpec::Rationals;
        let x = dist(q, &[(0, 1, 2), (1, 1, 4), (2, 1, 4)]);
        let mix = decompose_flat(&x, 1).unwrap();
        mix.validate(&x).unwrap();
        assert_eq!(atom_sets(&mix), [("1/2".into(), vec![0, 1]), ("1/2".into(), vec![0, 2])]);

        let u = Dist::uniform_ints(q, 0..4).unwrap();
        let mix = decompose_flat(&u, 2).unwrap();
        assert_eq!(atom_sets(&mix), [("1/1".into(), vec![0, 1, 2, 3])]);
        let mix = decompose_flat(&u, 1).unwrap();
        mix.validate(&u).unwrap();

        let three = Dist::uniform_ints(q, 0..3).unwrap();
        decompose_flat(&three, 1).unwrap().validate(&three).unwrap();
        assert!(matches!(decompose_flat(&three, 2), Err(Error::Precondition(_))));
        assert_eq!(decompose_flat_default(&three).unwrap().m, 1);
    }

    #[test]
    fn validator_rejects_bad_mixtures() {
        let q = FieldSpec::Rationals;
        let u = Dist::uniform_ints(q, 0..4).unwrap();
        let part = |w: (i64, i64), a: &[i64]| FlatPart { weight: rational(w.0, w.1), atoms: a.iter().map(|&i| q.from_i64(i)).collect() };
        let good = FlatMixture { field: q, m: 1, parts: vec![part((1, 2), &[0, 1]), part((1, 2), &[2, 3])] };
        good.validate(&u).unwrap();
        let wrong_law = FlatMixture { field: q, m: 1, parts: vec![part((1, 2), &[0, 1]), part((1, 2), &[0, 3])] };
        assert!(wrong_law.validate(&u).is_err());
        let wrong_size = FlatMixture { field: q, m: 1, parts: vec![part((1, 1), &[0, 1, 2, 3])] };
        assert!(wrong_size.validate(&u).is_err());
        let repeated = FlatMixture { field: q, m: 1, parts: vec![part((1, 2), &[0, 0]), part((1, 2), &[2, 3])] };
        assert!(repeated.validate(&u).is_err());
    }

    #[test]
    fn json_round_trip() {
        let q = FieldSpec::Rationals;
        let x = dist(q, &[(0, 1, 2), (1, 1, 4), (2, 1, 4)]);
        let mix = decompose_flat(&x, 1).unwrap();
        let text = mix.to_json();
        assert!(text.starts_with(r#"{"m":1,"parts":[{"w":"1/2","atoms":["#));
        assert_eq!(FlatMixture::from_json(q, &text).unwrap(), mix);
    }

    #[test]
    fn mixture_bound_examples() {
        let f5 = FieldSpec::Prime(5);
        let u = Dist::uniform_ints(f5, [1, 2]).unwrap();
        let row = mixture_lower_bound_check(&u, &u, &u, 1, 0.0, Budget::default()).unwrap();
        assert!((row.entropy - 1.905639).abs() < 1e-6);
        assert!(row.deficit < 0.0 && row.chain_holds);
        // With the default margin, F_5 cannot host m = 1.
        assert!(matches!(
            mixture_lower_bound_check(&u, &u, &u, 1, DEFAULT_MARGIN_BITS, Budget::default()),
            Err(Error::Precondition(_))
        ));

        let pt = Dist::point(FieldSpec::Prime(4099).from_i64(3));
        let row = mixture_lower_bound_check(&pt, &pt, &pt, 0, DEFAULT_MARGIN_BITS, Budget::default()).unwrap();
        assert_eq!((row.entropy, row.deficit), (0.0, 0.0));
        assert!(row.chain_holds);
    }

    fn source(field: FieldSpec) -> impl Strategy<Value = Dist> {
        proptest::collection::btree_map(0i64..60, 1u32..20, 1..12).prop_map(move |w| {
            Dist::from_weights(field, w.into_iter().map(|(k, v)| (field.from_i64(k), v))).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn greedy_output_passes_validator(x in source(FieldSpec::Rationals)) {
            let m = floor_min_entropy(x.law());
            for k in 0..=m {
                let mix = decompose_flat(&x, k).unwrap();
                prop_assert!(mix.validate(&x).is_ok());
                prop_assert!(mix.parts.len() <= (4 * x.support_len()) << k);
                prop_assert!(x.shannon().bits >= k as f64 - 1e-12);
            }
        }

        #[test]
        fn conditioning_chain(x in source(FieldSpec::Prime(4099)), y in source(FieldSpec::Prime(4099))) {
            let m = floor_min_entropy(x.law()).min(floor_min_entropy(y.law())).min(2);
            let row = mixture_lower_bound_check(&x, &y, &x, m, DEFAULT_MARGIN_BITS, Budget::default()).unwrap();
            prop_assert!(row.chain_holds, "{:?}", row);
        }
    }
}
