//! Exact laws of polynomial expressions in independent variables.
//!
//! Every variable name denotes a fresh independent variable. Reusing a sample
//! is not expressible; two independent copies of one law are two names bound
//! to the same [`Dist`].

use std::collections::BTreeMap;
use std::hash::Hash;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rustc_hash::FxHashMap;

use crate::dist::{Dist, EntropyValue, JointLaw, Law};
use crate::error::{Error, Result};
use crate::expr::{Expr, QueryAst, QueryKind};
use crate::field::{FieldSpec, Scalar};
use crate::numeric::{collision_from_weights, shannon_bits_from_weights, Weight};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Upper bound on the number of product points a single enumeration may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_points: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_points: DEFAULT_BUDGET }
    }
}

impl Budget {
    pub fn new(max_points: u64) -> Self {
        Self { max_points }
    }

    pub fn check(&self, required: u128) -> Result<()> {
        if required > self.max_points as u128 {
            Err(Error::Budget { required, limit: self.max_points })
        } else {
            Ok(())
        }
    }
}

/// Name → law of an independent variable. All laws share one field.
#[derive(Debug, Clone)]
pub struct Bindings {
    field: FieldSpec,
    vars: BTreeMap<String, Dist>,
}

impl Bindings {
    pub fn new(field: FieldSpec) -> Self {
        Self { field, vars: BTreeMap::new() }
    }

    /// Binds each name to the same law (independent copies).
    pub fn iid(names: &[&str], dist: &Dist) -> Self {
        let mut b = Self::new(dist.field());
        for n in names {
            b.vars.insert(n.to_string(), dist.clone());
        }
        b
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a Dist)>) -> Result<Self> {
        let mut it = pairs.into_iter().peekable();
        let field = it
            .peek()
            .map(|(_, d)| d.field())
            .ok_or_else(|| Error::Usage("no bindings".into()))?;
        let mut b = Self::new(field);
        for (n, d) in it {
            b.bind(n, d.clone())?;
        }
        Ok(b)
    }

    pub fn bind(&mut self, name: &str, dist: Dist) -> Result<&mut Self> {
        if dist.field() != self.field {
            return Err(Error::mismatch(self.field, dist.field()));
        }
        self.vars.insert(name.to_string(), dist);
        Ok(self)
    }

    pub fn with(mut self, name: &str, dist: &Dist) -> Result<Self> {
        self.bind(name, dist.clone())?;
        Ok(self)
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn get(&self, name: &str) -> Option<&Dist> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }
}

enum Node {
    Var(usize),
    Const(Scalar),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Neg(Box<Node>),
}

impl Node {
    fn compile(e: &Expr, slots: &BTreeMap<String, usize>, field: FieldSpec) -> Result<Node> {
        Ok(match e {
            Expr::Var(v) => Node::Var(*slots.get(v).ok_or_else(|| Error::UnboundVariable(v.clone()))?),
            Expr::Const(c) => Node::Const(field.from_bigint(&BigInt::from(c.clone()))),
            Expr::Add(a, b) => Node::Add(
                Box::new(Self::compile(a, slots, field)?),
                Box::new(Self::compile(b, slots, field)?),
            ),
            Expr::Sub(a, b) => Node::Sub(
                Box::new(Self::compile(a, slots, field)?),
                Box::new(Self::compile(b, slots, field)?),
            ),
            Expr::Mul(a, b) => Node::Mul(
                Box::new(Self::compile(a, slots, field)?),
                Box::new(Self::compile(b, slots, field)?),
            ),
            Expr::Neg(a) => Node::Neg(Box::new(Self::compile(a, slots, field)?)),
        })
    }

    fn eval(&self, point: &[&Scalar]) -> Scalar {
        match self {
            Node::Var(i) => point[*i].clone(),
            Node::Const(c) => c.clone(),
            Node::Add(a, b) => &a.eval(point) + &b.eval(point),
            Node::Sub(a, b) => &a.eval(point) - &b.eval(point),
            Node::Mul(a, b) => &a.eval(point) * &b.eval(point),
            Node::Neg(a) => -&a.eval(point),
        }
    }
}

/// Integer images of scalars for the fast path: residues in `F_p`, integers
/// in ℚ with overflow-checked arithmetic.
#[derive(Debug, Clone, Copy)]
enum Ring {
    Mod(u64),
    Int,
}

impl Ring {
    fn lift(self, s: &Scalar) -> Option<i128> {
        match (self, s) {
            (Ring::Mod(_), Scalar::Fp { residue, .. }) => Some(*residue as i128),
            (Ring::Int, Scalar::Q(q)) if q.is_integer() => q.numer().to_i128(),
            _ => None,
        }
    }

    fn add(self, a: i128, b: i128) -> Option<i128> {
        match self {
            Ring::Mod(p) => Some(((a as u128 + b as u128) % p as u128) as i128),
            Ring::Int => a.checked_add(b),
        }
    }

    fn sub(self, a: i128, b: i128) -> Option<i128> {
        match self {
            Ring::Mod(p) => Some(((a as u128 + p as u128 - b as u128) % p as u128) as i128),
            Ring::Int => a.checked_sub(b),
        }
    }

    fn mul(self, a: i128, b: i128) -> Option<i128> {
        match self {
            Ring::Mod(p) => Some((a as u128 * b as u128 % p as u128) as i128),
            Ring::Int => a.checked_mul(b),
        }
    }

    fn neg(self, a: i128) -> Option<i128> {
        match self {
            Ring::Mod(p) => Some(((p as u128 - a as u128) % p as u128) as i128),
            Ring::Int => a.checked_neg(),
        }
    }
}

enum IntNode {
    Var(usize),
    Const(i128),
    Add(Box<IntNode>, Box<IntNode>),
    Sub(Box<IntNode>, Box<IntNode>),
    Mul(Box<IntNode>, Box<IntNode>),
    Neg(Box<IntNode>),
}

impl IntNode {
    fn from_node(n: &Node, ring: Ring) -> Option<IntNode> {
        let pair = |a: &Node, b: &Node| Some((Box::new(Self::from_node(a, ring)?), Box::new(Self::from_node(b, ring)?)));
        Some(match n {
            Node::Var(i) => IntNode::Var(*i),
            Node::Const(c) => IntNode::Const(ring.lift(c)?),
            Node::Add(a, b) => pair(a, b).map(|(a, b)| IntNode::Add(a, b))?,
            Node::Sub(a, b) => pair(a, b).map(|(a, b)| IntNode::Sub(a, b))?,
            Node::Mul(a, b) => pair(a, b).map(|(a, b)| IntNode::Mul(a, b))?,
            Node::Neg(a) => IntNode::Neg(Box::new(Self::from_node(a, ring)?)),
        })
    }

    fn eval(&self, point: &[&i128], ring: Ring) -> Option<i128> {
        match self {
            IntNode::Var(i) => Some(*point[*i]),
            IntNode::Const(c) => Some(*c),
            IntNode::Add(a, b) => ring.add(a.eval(point, ring)?, b.eval(point, ring)?),
            IntNode::Sub(a, b) => ring.sub(a.eval(point, ring)?, b.eval(point, ring)?),
            IntNode::Mul(a, b) => ring.mul(a.eval(point, ring)?, b.eval(point, ring)?),
            IntNode::Neg(a) => ring.neg(a.eval(point, ring)?),
        }
    }
}

/// Widest expression tuple handled by the integer fast path.
const FAST_WIDTH: usize = 4;

/// Enumerates the product of supports, bucketing integer weights by key;
/// `None` as soon as `key` declines a point.
fn enumerate<T, K, W>(
    supports: &[Vec<T>],
    weights: &[Vec<W>],
    total: W,
    mut key: impl FnMut(&[&T]) -> Option<K>,
) -> Option<Buckets<K, W>>
where
    K: Eq + Hash,
    W: Weight,
{
    let k = supports.len();
    let mut counts: FxHashMap<K, W> = FxHashMap::default();
    if k == 0 {
        counts.insert(key(&[])?, W::one());
        return Some(Buckets { counts, total: W::one() });
    }
    let mut idx = vec![0usize; k];
    // prefix[i] = product of the weights of coordinates 0..i
    let mut prefix: Vec<W> = vec![W::one(); k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i].mul_ref(&weights[i][0]);
    }
    let mut point: Vec<&T> = supports.iter().map(|s| &s[0]).collect();
    loop {
        let w = &prefix[k];
        counts.entry(key(&point)?).and_modify(|c| c.add_assign_ref(w)).or_insert_with(|| w.clone());
        // odometer increment, last coordinate fastest
        let mut j = k;
        loop {
            if j == 0 {
                return Some(Buckets { counts, total });
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < supports[j].len() {
                break;
            }
            idx[j] = 0;
            point[j] = &supports[j][0];
        }
        point[j] = &supports[j][idx[j]];
        for i in j..k {
            prefix[i + 1] = prefix[i].mul_ref(&weights[i][idx[i]]);
        }
    }
}

/// A compiled query: the referenced variables' supports and integer weights.
struct Plan {
    field: FieldSpec,
    nodes: Vec<Node>,
    supports: Vec<Vec<Scalar>>,
    weights: Vec<Vec<BigUint>>,
    denominator: BigUint,
}

impl Plan {
    fn new(components: &[Expr], bindings: &Bindings, budget: Budget) -> Result<Plan> {
        if components.is_empty() {
            return Err(Error::Usage("empty expression tuple".into()));
        }
        let names: Vec<String> = components
            .iter()
            .flat_map(|c| c.variables())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut slots = BTreeMap::new();
        let mut supports = Vec::new();
        let mut weights = Vec::new();
        let mut denominator = BigUint::one();
        let mut size: u128 = 1;
        for (i, n) in names.iter().enumerate() {
            let d = bindings.get(n).ok_or_else(|| Error::UnboundVariable(n.clone()))?;
            slots.insert(n.clone(), i);
            size = size.saturating_mul(d.support_len() as u128);
            let (w, den) = d.integer_weights();
            supports.push(d.support());
            weights.push(w);
            denominator *= den;
        }
        budget.check(size)?;
        let nodes = components
            .iter()
            .map(|c| Node::compile(c, &slots, bindings.field()))
            .collect::<Result<_>>()?;
        Ok(Plan { field: bindings.field(), nodes, supports, weights, denominator })
    }

    fn integer_form(&self) -> Option<(Ring, Vec<IntNode>, Vec<Vec<i128>>)> {
        if self.nodes.len() > FAST_WIDTH {
            return None;
        }
        let ring = match self.field {
            FieldSpec::Prime(p) => Ring::Mod(p),
            FieldSpec::Rationals => Ring::Int,
        };
        let nodes = self.nodes.iter().map(|n| IntNode::from_node(n, ring)).collect::<Option<Vec<_>>>()?;
        let supports = self
            .supports
            .iter()
            .map(|s| s.iter().map(|x| ring.lift(x)).collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()?;
        Some((ring, nodes, supports))
    }

    /// Integer weights of the joint law of the component tuple.
    fn buckets<W: Weight>(&self, convert: impl Fn(&BigUint) -> W) -> Buckets<Vec<Scalar>, W> {
        let weights: Vec<Vec<W>> = self.weights.iter().map(|ws| ws.iter().map(&convert).collect()).collect();
        let total = convert(&self.denominator);
        if let Some((ring, nodes, supports)) = self.integer_form() {
            let fast = enumerate(&supports, &weights, total.clone(), |point| {
                let mut key = [0i128; FAST_WIDTH];
                for (slot, n) in key.iter_mut().zip(&nodes) {
                    *slot = n.eval(point, ring)?;
                }
                Some(key)
            });
            if let Some(b) = fast {
                let width = nodes.len();
                return b.map_keys(|k| k[..width].iter().map(|&v| self.field.from_bigint(&BigInt::from(v))).collect());
            }
        }
        enumerate(&self.supports, &weights, total, |point| Some(self.nodes.iter().map(|n| n.eval(point)).collect()))
            .expect("scalar evaluation is total")
    }

    fn small_weights(&self) -> bool {
        self.denominator.bits() <= 126
    }
}

struct Buckets<K, W> {
    counts: FxHashMap<K, W>,
    total: W,
}

impl<K: Eq + Hash, W: Weight> Buckets<K, W> {
    fn map_keys<K2: Eq + Hash>(self, f: impl Fn(K) -> K2) -> Buckets<K2, W> {
        let mut counts: FxHashMap<K2, W> = FxHashMap::default();
        for (k, w) in self.counts {
            counts.entry(f(k)).and_modify(|c| c.add_assign_ref(&w)).or_insert(w);
        }
        Buckets { counts, total: self.total }
    }
}

impl<K: Ord + Clone + Hash, W: Weight> Buckets<K, W> {
    fn sorted(&self) -> Vec<(&K, &W)> {
        let mut v: Vec<_> = self.counts.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    fn into_law(self) -> Law<K> {
        let total = BigInt::from(self.total.to_biguint());
        let mut atoms: Vec<(K, BigRational)> = self
            .counts
            .into_iter()
            .map(|(k, w)| (k, BigRational::new(BigInt::from(w.to_biguint()), total.clone())))
            .collect();
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        Law::from_sorted(atoms)
    }

    fn entropy(&self, kind: EntropyKind) -> EntropyValue {
        match kind {
            EntropyKind::Shannon => {
                let sorted = self.sorted();
                let first = sorted[0].1;
                if sorted.iter().all(|(_, w)| *w == first) {
                    return EntropyValue::from_probability(BigRational::new(
                        BigInt::one(),
                        BigInt::from(sorted.len()),
                    ));
                }
                EntropyValue::approx(shannon_bits_from_weights(sorted.iter().map(|(_, w)| *w), &self.total))
            }
            EntropyKind::Min => {
                let max = self.counts.values().max().expect("non-empty");
                EntropyValue::from_probability(BigRational::new(
                    BigInt::from(max.to_biguint()),
                    BigInt::from(self.total.to_biguint()),
                ))
            }
            EntropyKind::Collision => {
                EntropyValue::from_probability(collision_from_weights(self.counts.values(), &self.total))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntropyKind {
    Shannon,
    Min,
    Collision,
}

fn first(mut key: Vec<Scalar>) -> Scalar {
    key.swap_remove(0)
}

fn to_u128(b: &BigUint) -> u128 {
    b.to_u128().expect("fits by the denominator check")
}

/// Exact joint law of an expression tuple under the product measure.
pub fn pushforward(components: &[Expr], bindings: &Bindings, budget: Budget) -> Result<JointLaw> {
    let plan = Plan::new(components, bindings, budget)?;
    Ok(if plan.small_weights() {
        plan.buckets(to_u128).into_law()
    } else {
        plan.buckets(BigUint::clone).into_law()
    })
}

/// Exact law of a single expression.
pub fn pushforward_dist(expr: &Expr, bindings: &Bindings, budget: Budget) -> Result<Dist> {
    let plan = Plan::new(std::slice::from_ref(expr), bindings, budget)?;
    let law = if plan.small_weights() {
        plan.buckets(to_u128).map_keys(first).into_law()
    } else {
        plan.buckets(BigUint::clone).map_keys(first).into_law()
    };
    Dist::from_law(bindings.field(), law)
}

/// Entropy of an expression tuple without materializing rational masses.
pub fn entropy_of_exprs(
    components: &[Expr],
    kind: EntropyKind,
    bindings: &Bindings,
    budget: Budget,
) -> Result<EntropyValue> {
    let plan = Plan::new(components, bindings, budget)?;
    Ok(if plan.small_weights() {
        plan.buckets(to_u128).entropy(kind)
    } else {
        plan.buckets(BigUint::clone).entropy(kind)
    })
}

/// Evaluates a parsed query. `dR` takes exactly two components, each treated
/// as an independent variable.
pub fn entropy_of(query: &QueryAst, bindings: &Bindings, budget: Budget) -> Result<EntropyValue> {
    let kind = match query.kind {
        QueryKind::Shannon => EntropyKind::Shannon,
        QueryKind::Min => EntropyKind::Min,
        QueryKind::Collision => EntropyKind::Collision,
        QueryKind::Ruzsa => {
            if query.components.len() != 2 {
                return Err(Error::Usage("dR takes exactly two components".into()));
            }
            let x = pushforward_dist(&query.components[0], bindings, budget)?;
            let y = pushforward_dist(&query.components[1], bindings, budget)?;
            return ruzsa_distance_with(&x, &y, budget);
        }
    };
    for v in query.variables() {
        if bindings.get(&v).is_none() {
            return Err(Error::UnboundVariable(v));
        }
    }
    entropy_of_exprs(&query.components, kind, bindings, budget)
}

/// Convenience: Shannon entropy of one expression text over the given bindings.
pub fn shannon_of(expr: &str, bindings: &Bindings) -> Result<f64> {
    let e = crate::expr::parse_expr(expr)?;
    Ok(entropy_of_exprs(&[e], EntropyKind::Shannon, bindings, Budget::default())?.bits)
}

/// Law of `X' ∘ Y'` for independent copies and one of the ring operations.
pub fn combine(x: &Dist, y: &Dist, op: &str, budget: Budget) -> Result<Dist> {
    let b = Bindings::new(x.field()).with("A", x)?.with("B", y)?;
    let e = match op {
        "+" => Expr::add(Expr::var("A"), Expr::var("B")),
        "-" => Expr::sub(Expr::var("A"), Expr::var("B")),
        "*" => Expr::mul(Expr::var("A"), Expr::var("B")),
        _ => return Err(Error::Usage(format!("unknown operation `{op}`"))),
    };
    pushforward_dist(&e, &b, budget)
}

/// Entropic Ruzsa distance `Η(X'−Y') − ½Η(X) − ½Η(Y)`.
pub fn ruzsa_distance(x: &Dist, y: &Dist) -> Result<EntropyValue> {
    ruzsa_distance_with(x, y, Budget::default())
}

pub fn ruzsa_distance_with(x: &Dist, y: &Dist, budget: Budget) -> Result<EntropyValue> {
    let diff = combine(x, y, "-", budget)?;
    Ok(EntropyValue::approx(
        diff.shannon().bits - 0.5 * x.shannon().bits - 0.5 * y.shannon().bits,
    ))
}

/// Law of an expression tuple conditioned on `{Z ∈ A}` with
/// `A = {z : P(Z = z) ≥ δ}`, together with `P(Z ∈ A)`.
pub fn threshold_condition(
    components: &[Expr],
    bindings: &Bindings,
    conditioned: &str,
    delta: &BigRational,
    budget: Budget,
) -> Result<(JointLaw, BigRational)> {
    let z = bindings
        .get(conditioned)
        .ok_or_else(|| Error::UnboundVariable(conditioned.to_string()))?;
    let (restricted, p) = z.threshold(delta)?;
    let mut b = bindings.clone();
    b.bind(conditioned, restricted)?;
    Ok((pushforward(components, &b, budget)?, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, parse_query};
    use crate::field::rational;

    fn q_ints(xs: &[i64]) -> Dist {
        Dist::uniform_ints(FieldSpec::Rationals, xs.iter().copied()).unwrap()
    }

    fn eval(text: &str, b: &Bindings) -> EntropyValue {
        entropy_of(&parse_query(text).unwrap(), b, Budget::default()).unwrap()
    }

    #[test]
    fn sum_of_two_bits() {
        let x = q_ints(&[0, 1]);
        let b = Bindings::iid(&["X1", "X2"], &x);
        let law = pushforward_dist(&parse_expr("X1+X2").unwrap(), &b, Budget::default()).unwrap();
        let f = FieldSpec::Rationals;
        assert_eq!(law.atoms(), &[
            (f.from_i64(0), rational(1, 4)),
            (f.from_i64(1), rational(1, 2)),
            (f.from_i64(2), rational(1, 4)),
        ]);
    }

    #[test]
    fn product_over_f5() {
        let f = FieldSpec::Prime(5);
        let x = Dist::uniform_ints(f, [1, 2]).unwrap();
        let b = Bindings::iid(&["X1", "X2"], &x);
        let law = pushforward_dist(&parse_expr("X1*X2").unwrap(), &b, Budget::default()).unwrap();
        assert_eq!(law.atoms(), &[
            (f.from_i64(1), rational(1, 4)),
            (f.from_i64(2), rational(1, 2)),
            (f.from_i64(4), rational(1, 4)),
        ]);
    }

    #[test]
    fn pair_query_over_q() {
        let x = q_ints(&[1, 2]);
        let b = Bindings::iid(&["X", "Y", "Z"], &x);
        let comps = parse_query("H[X*Y, X*Z]").unwrap().components;
        let law = pushforward(&comps, &b, Budget::default()).unwrap();
        assert_eq!(law.support_len(), 7);
        let f = FieldSpec::Rationals;
        assert_eq!(law.mass(&vec![f.from_i64(2), f.from_i64(2)]), rational(1, 4));
        assert_eq!(law.atoms().iter().filter(|(_, m)| *m == rational(1, 8)).count(), 6);
        assert_eq!(eval("H[X*Y, X*Z]", &b).bits, 2.75);
    }

    #[test]
    fn compound_entropy_examples() {
        let f = FieldSpec::Prime(5);
        let x = Dist::uniform_ints(f, [1, 2]).unwrap();
        let b = Bindings::iid(&["X", "Y", "Z"], &x);
        let want = crate::numeric::shannon_bits([0.25, 0.125, 0.375, 0.25]);
        assert!((eval("H[X*(Y+Z)]", &b).bits - want).abs() < 1e-12);
        assert!((want - 1.905_639).abs() < 1e-6);

        let pt = Dist::point(FieldSpec::Rationals.from_i64(3));
        let b = Bindings::iid(&["X", "X1", "X2"], &pt);
        assert_eq!(eval("H[X1+X2]", &b).bits - eval("H[X]", &b).bits, 0.0);

        let u = q_ints(&[1, 2]);
        let b = Bindings::iid(&["A", "B", "C"], &u);
        let h2 = eval("H2[A*(B+C)]", &b);
        assert_eq!(h2.exact, Some(rational(14, 64)));
        assert!((h2.bits - (64.0f64 / 14.0).log2()).abs() < 1e-12);
    }

    #[test]
    fn min_and_collision_are_exact() {
        let f = FieldSpec::Prime(5);
        let x = Dist::uniform_ints(f, [1, 2]).unwrap();
        let b = Bindings::iid(&["X", "Y", "Z"], &x);
        assert_eq!(eval("Hmin[X*(Y+Z)]", &b).exact, Some(rational(3, 8)));
        let law = pushforward_dist(&parse_expr("X*(Y+Z)").unwrap(), &b, Budget::default()).unwrap();
        assert_eq!(eval("H2[X*(Y+Z)]", &b).exact, Some(law.collision_probability()));
    }

    #[test]
    fn ruzsa_examples() {
        let f = FieldSpec::Prime(5);
        let a = Dist::point(f.from_i64(1));
        let c = Dist::point(f.from_i64(3));
        assert_eq!(ruzsa_distance(&a, &c).unwrap().bits, 0.0);
        let full = Dist::uniform_ints(f, 0..5).unwrap();
        assert!(ruzsa_distance(&full, &full).unwrap().bits.abs() < 1e-12);
        let bit = Dist::uniform_ints(f, [0, 1]).unwrap();
        assert!((ruzsa_distance(&bit, &bit).unwrap().bits - 0.5).abs() < 1e-12);
        let b = Bindings::iid(&["X", "Y"], &bit);
        assert!((eval("dR[X, -Y]", &b).bits - ruzsa_distance(&bit, &bit.negate()).unwrap().bits).abs() < 1e-12);
    }

    #[test]
    fn unbound_and_budget_errors() {
        let b = Bindings::iid(&["X"], &q_ints(&[0, 1]));
        let err = entropy_of(&parse_query("H[X+Q]").unwrap(), &b, Budget::default()).unwrap_err();
        assert!(matches!(err, Error::UnboundVariable(ref v) if v == "Q"));
        let b = Bindings::iid(&["X", "Y", "Z"], &q_ints(&[0, 1, 2, 3]));
        match entropy_of(&parse_query("H[X+Y+Z]").unwrap(), &b, Budget::new(63)) {
            Err(Error::Budget { required, limit }) => assert_eq!((required, limit), (64, 63)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn threshold_condition_restricts_z() {
        let f = FieldSpec::Rationals;
        let u = q_ints(&[0, 10]);
        let z = Dist::new(f, vec![
            (f.from_i64(0), rational(1, 2)),
            (f.from_i64(1), rational(1, 3)),
            (f.from_i64(2), rational(1, 6)),
        ])
        .unwrap();
        let b = Bindings::new(f).with("U", &u).unwrap().with("Z", &z).unwrap();
        let comps = vec![parse_expr("U+Z").unwrap()];
        let (law, p) = threshold_condition(&comps, &b, "Z", &rational(1, 4), Budget::default()).unwrap();
        assert_eq!(p, rational(5, 6));
        assert_eq!(law.support_len(), 4);
        assert_eq!(law.mass(&vec![f.from_i64(11)]), rational(1, 5));
    }

    #[test]
    fn huge_denominators_use_big_weights() {
        let b = Bindings::iid(&["X", "Y"], &Dist::binomial(200));
        let h = entropy_of(&parse_query("H[X+Y]").unwrap(), &b, Budget::default()).unwrap();
        assert!((h.bits - Dist::binomial(400).shannon().bits).abs() < 1e-12);
    }
}
