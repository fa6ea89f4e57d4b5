//! Condensing min-entropy over `F_p` by iterating `(X, Y, Z) ↦ X(Y + Z)`.
//!
//! Exact mode carries the law of every level; sampled mode evaluates the
//! depth-`d` ternary tree on fresh source samples and runs a small
//! statistical battery on the root.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dist::{rational_text, Dist, EntropyValue};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::FieldSpec;
use crate::numeric::{ratio_to_f64, rational_to_f64};
use crate::query::{pushforward_dist, Bindings, Budget};
use crate::seeding::substream;

/// `log_{3/2} 3`.
pub fn sample_exponent() -> f64 {
    3f64.ln() / 1.5f64.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondenserPlan {
    pub p: u64,
    pub delta: String,
    pub depth: u32,
    /// `3^d`, the number of source samples per output.
    pub leaves: u128,
    /// `⌈(1/δ)^{log_{3/2} 3}⌉`.
    pub sample_bound: u128,
    /// `leaves > sample_bound`, caused by rounding `d` up to an integer.
    pub rounding_gap: bool,
    /// `⌊log p⌋`.
    pub target_bits: u32,
}

/// Smallest `d` with `(3/2)^d · δ ≥ 1`.
pub fn plan(p: u64, delta: &BigRational) -> Result<CondenserPlan> {
    let field = FieldSpec::prime(p)?;
    if !delta.is_positive() || delta > &BigRational::one() {
        return Err(Error::Domain(format!("δ = {} is outside (0, 1]", rational_text(delta))));
    }
    let (num, den) = (delta.numer().clone(), delta.denom().clone());
    let mut depth = 0u32;
    let (mut three, mut two) = (BigInt::one(), BigInt::one());
    while &three * &num < &two * &den {
        depth += 1;
        three *= 3;
        two *= 2;
    }
    let inv = rational_to_f64(&delta.recip());
    let sample_bound = inv.powf(sample_exponent()).ceil() as u128;
    let leaves = three.to_u128().ok_or_else(|| Error::Domain("plan depth too large".into()))?;
    Ok(CondenserPlan {
        p,
        delta: rational_text(delta),
        depth,
        leaves,
        sample_bound,
        rounding_gap: leaves > sample_bound,
        target_bits: field.characteristic().ilog2(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactLevel {
    pub level: usize,
    #[serde(skip)]
    pub law: Dist,
    pub support: usize,
    pub min_entropy: EntropyValue,
    pub shannon: f64,
    pub prob_zero: String,
    /// `Ηmin ≤ (2/3) log p`, the regime where the per-round gain is claimed.
    pub below_cap: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactTrace {
    pub field: String,
    pub levels: Vec<ExactLevel>,
}

impl ExactTrace {
    /// `Ηmin(level i+1) − Ηmin(level i)`.
    pub fn gains(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1].min_entropy.bits - w[0].min_entropy.bits).collect()
    }

    /// Per round: whether the min-entropy drop is at most `log(1/P(X_i ≠ 0))`.
    pub fn drops_within_zero_allowance(&self) -> Vec<bool> {
        self.levels
            .windows(2)
            .map(|w| {
                let nonzero = BigRational::one() - w[0].law.prob_zero();
                let allowance = -rational_to_f64(&nonzero).log2();
                w[0].min_entropy.bits - w[1].min_entropy.bits <= allowance + 1e-9
            })
            .collect()
    }
}

/// Law of `X(Y + Z)` for independent copies of `x`, computed as two
/// pushforwards through `S = Y + Z`.
pub fn condense_step(x: &Dist, budget: Budget) -> Result<Dist> {
    let b = Bindings::iid(&["X", "Y", "Z"], x);
    let s = pushforward_dist(&Expr::add(Expr::var("Y"), Expr::var("Z")), &b, budget)?;
    let b = Bindings::new(x.field()).with("X", x)?.with("S", &s)?;
    pushforward_dist(&Expr::mul(Expr::var("X"), Expr::var("S")), &b, budget)
}

fn exact_level(level: usize, law: Dist) -> ExactLevel {
    let cap = match law.field() {
        FieldSpec::Prime(p) => 2.0 / 3.0 * (p as f64).log2(),
        FieldSpec::Rationals => f64::INFINITY,
    };
    let min_entropy = law.min_entropy();
    ExactLevel {
        level,
        support: law.support_len(),
        shannon: law.shannon().bits,
        prob_zero: rational_text(&law.prob_zero()),
        below_cap: min_entropy.bits <= cap,
        min_entropy,
        law,
    }
}

pub fn condense_exact(x: &Dist, rounds: u32, budget: Budget) -> Result<ExactTrace> {
    let mut levels = vec![exact_level(0, x.clone())];
    for i in 1..=rounds as usize {
        let next = condense_step(&levels[i - 1].law, budget)?;
        levels.push(exact_level(i, next));
    }
    Ok(ExactTrace { field: x.field().to_string(), levels })
}

/// Trials below this are rejected by [`condense_sampled`].
pub const MIN_TRIALS: u64 = 10_000;
/// Significance level of every battery test.
pub const SIGNIFICANCE: f64 = 1e-3;
const BATCHES: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledLevel {
    pub level: usize,
    pub samples: u64,
    pub collision_probability: f64,
    pub collision_se: f64,
    pub collision_entropy: f64,
    pub collision_entropy_se: f64,
    pub prob_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub name: String,
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub tv: f64,
    pub threshold: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampledTrace {
    pub p: u64,
    pub depth: u32,
    pub trials: u64,
    pub seed: u64,
    pub levels: Vec<SampledLevel>,
    /// Uniformity and serial-pair tests over `F_p`, then the same over `F_p^*`
    /// restricted to nonzero outputs (0 is over-weighted by `X(Y+Z)`).
    pub battery: Vec<ChiSquareTest>,
    #[serde(skip)]
    pub outputs: Vec<u64>,
}

impl SampledTrace {
    /// Total variation between the empirical root law and `reference`, flagged
    /// when above `3·√(|support| / trials)`.
    pub fn tv_estimate(&self, reference: &Dist) -> TvEstimate {
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for &v in &self.outputs {
            *counts.entry(v).or_insert(0) += 1;
        }
        let n = self.outputs.len() as f64;
        let mut tv = 0.0;
        for (s, q) in reference.atoms() {
            let r = s.residue().unwrap_or(u64::MAX);
            let c = counts.remove(&r).unwrap_or(0) as f64;
            tv += (c / n - rational_to_f64(q)).abs();
        }
        tv += counts.values().map(|&c| c as f64 / n).sum::<f64>();
        tv *= 0.5;
        let threshold = 3.0 * (reference.support_len() as f64 / n).sqrt();
        TvEstimate { tv, threshold, flagged: tv > threshold }
    }

    pub fn rejected(&self) -> bool {
        self.battery.iter().any(|t| t.reject)
    }
}

enum Sampler {
    Exact(WeightedIndex<u128>),
    Float(WeightedIndex<f64>),
}

impl Sampler {
    fn new(source: &Dist) -> Result<Self> {
        let (weights, den) = source.integer_weights();
        let small: Option<Vec<u128>> = weights.iter().map(|w| w.to_u128()).collect();
        let bad = |e: rand::distributions::WeightedError| Error::InvalidDist(e.to_string());
        Ok(match small {
            Some(w) if w.iter().try_fold(0u128, |a, &b| a.checked_add(b)).is_some() => {
                Sampler::Exact(WeightedIndex::new(w).map_err(bad)?)
            }
            _ => Sampler::Float(WeightedIndex::new(weights.iter().map(|w| ratio_to_f64(w, &den))).map_err(bad)?),
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Sampler::Exact(w) => w.sample(rng),
            Sampler::Float(w) => w.sample(rng),
        }
    }
}

#[derive(Default, Clone)]
struct LevelCounts {
    counts: HashMap<u64, u64>,
    n: u64,
}

impl LevelCounts {
    fn add(&mut self, v: u64) {
        *self.counts.entry(v).or_insert(0) += 1;
        self.n += 1;
    }

    fn merge(&mut self, other: &LevelCounts) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.n += other.n;
    }

    /// Unbiased `Σ c(c−1) / (n(n−1))`.
    fn collision(&self) -> f64 {
        if self.n < 2 {
            return 1.0;
        }
        let pairs: u128 = self.counts.values().map(|&c| c as u128 * c.saturating_sub(1) as u128).sum();
        pairs as f64 / (self.n as f64 * (self.n - 1) as f64)
    }
}

/// Runs `trials` independent evaluations of the depth-`d` tree over `source`.
pub fn condense_sampled(source: &Dist, plan: &CondenserPlan, trials: u64, seed: u64) -> Result<SampledTrace> {
    let p = match source.field() {
        FieldSpec::Prime(p) if p == plan.p => p,
        f => return Err(Error::mismatch(f, FieldSpec::Prime(plan.p))),
    };
    if trials < MIN_TRIALS {
        return Err(Error::Precondition(format!("insufficient samples: {trials} trials, need at least {MIN_TRIALS}")));
    }
    let depth = plan.depth as usize;
    let support: Vec<u64> = source.keys().map(|s| s.residue().expect("prime field")).collect();
    let sampler = Sampler::new(source)?;
    let batch_len = trials.div_ceil(BATCHES);

    let batches: Vec<(Vec<LevelCounts>, Vec<u64>)> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut levels = vec![LevelCounts::default(); depth + 1];
            let mut roots = Vec::new();
            let mut nodes = Vec::with_capacity(plan.leaves as usize);
            for t in b * batch_len..((b + 1) * batch_len).min(trials) {
                let mut rng = substream(seed, "extract", t);
                nodes.clear();
                nodes.extend((0..plan.leaves).map(|_| support[sampler.sample(&mut rng)]));
                for (level, counts) in levels.iter_mut().enumerate() {
                    if level > 0 {
                        let next: Vec<u64> = nodes
                            .chunks_exact(3)
                            .map(|c| ((c[0] as u128 * ((c[1] + c[2]) % p) as u128) % p as u128) as u64)
                            .collect();
                        nodes = next;
                    }
                    nodes.iter().for_each(|&v| counts.add(v));
                }
                roots.push(nodes[0]);
            }
            (levels, roots)
        })
        .collect();

    let mut totals = vec![LevelCounts::default(); depth + 1];
    let mut outputs = Vec::with_capacity(trials as usize);
    for (levels, roots) in &batches {
        for (t, l) in totals.iter_mut().zip(levels) {
            t.merge(l);
        }
        outputs.extend_from_slice(roots);
    }
    let levels = (0..=depth)
        .map(|i| {
            let q = totals[i].collision();
            let per_batch: Vec<f64> =
                batches.iter().filter(|(l, _)| l[i].n >= 2).map(|(l, _)| l[i].collision()).collect();
            let k = per_batch.len() as f64;
            let mean = per_batch.iter().sum::<f64>() / k;
            let var = per_batch.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
            let se = (var / k).sqrt();
            SampledLevel {
                level: i,
                samples: totals[i].n,
                collision_probability: q,
                collision_se: se,
                collision_entropy: -q.log2(),
                collision_entropy_se: se / (q * std::f64::consts::LN_2),
                prob_zero: *totals[i].counts.get(&0).unwrap_or(&0) as f64 / totals[i].n as f64,
            }
        })
        .collect();

    let nonzero: Vec<u64> = outputs.iter().copied().filter(|&v| v != 0).collect();
    let battery = [
        uniformity_test("uniform", &outputs, 0, p),
        serial_test("serial", &outputs, 0, p),
        uniformity_test("uniform-nonzero", &nonzero, 1, p),
        serial_test("serial-nonzero", &nonzero, 1, p),
    ]
    .into_iter()
    .flatten()
    .collect();

    Ok(SampledTrace { p, depth: plan.depth, trials, seed, levels, battery, outputs })
}

/// Splits `[0, n)` into `b` nearly equal buckets; returns each bucket's size.
fn bucket_sizes(n: u64, b: u64) -> Vec<u64> {
    let start = |i: u64| ((i as u128 * n as u128).div_ceil(b as u128)) as u64;
    (0..b).map(|i| start(i + 1) - start(i)).collect()
}

fn bucket_of(v: u64, n: u64, b: u64) -> usize {
    (v as u128 * b as u128 / n as u128) as usize
}

fn chi_square(name: &str, observed: &[u64], expected: &[f64]) -> ChiSquareTest {
    let statistic: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let dof = observed.len() as u64 - 1;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(statistic);
    ChiSquareTest { name: name.into(), statistic, dof, p_value, reject: p_value < SIGNIFICANCE }
}

/// Chi-square against uniform on `[lo, p)`, bucketed so each cell expects at
/// least 5 observations.
fn uniformity_test(name: &str, values: &[u64], lo: u64, p: u64) -> Option<ChiSquareTest> {
    let domain = p - lo;
    let b = domain.min(values.len() as u64 / 5);
    if b < 2 {
        return None;
    }
    let sizes = bucket_sizes(domain, b);
    let mut observed = vec![0u64; b as usize];
    for &v in values {
        observed[bucket_of(v - lo, domain, b)] += 1;
    }
    let n = values.len() as f64;
    let expected: Vec<f64> = sizes.iter().map(|&s| n * s as f64 / domain as f64).collect();
    Some(chi_square(name, &observed, &expected))
}

/// Chi-square on non-overlapping consecutive pairs against the uniform product law.
fn serial_test(name: &str, values: &[u64], lo: u64, p: u64) -> Option<ChiSquareTest> {
    let domain = p - lo;
    let pairs = values.len() as u64 / 2;
    let b = domain.min(((pairs / 5) as f64).sqrt() as u64);
    if b < 2 {
        return None;
    }
    let sizes = bucket_sizes(domain, b);
    let mut observed = vec![0u64; (b * b) as usize];
    for c in values.chunks_exact(2) {
        observed[bucket_of(c[0] - lo, domain, b) * b as usize + bucket_of(c[1] - lo, domain, b)] += 1;
    }
    let n = pairs as f64;
    let d2 = (domain as f64).powi(2);
    let expected: Vec<f64> =
        sizes.iter().flat_map(|&s| sizes.iter().map(move |&t| n * (s * t) as f64 / d2)).collect();
    Some(chi_square(name, &observed, &expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::rational;
    use crate::query::pushforward;

    #[test]
    fn plan_examples() {
        let p = plan(257, &rational(1, 1)).unwrap();
        assert_eq!((p.depth, p.leaves), (0, 1));
        let p = plan(257, &rational(1, 2)).unwrap();
        assert_eq!((p.depth, p.leaves), (2, 9));
        let p = plan(257, &rational(1, 10)).unwrap();
        assert_eq!((p.depth, p.leaves, p.sample_bound), (6, 729, 513));
        assert!(p.rounding_gap);
        assert_eq!(p.target_bits, 8);
        assert_eq!(plan(257, &rational(3, 8)).unwrap().depth, 3);
        assert!(plan(257, &rational(0, 1)).is_err());
        assert!(plan(257, &rational(3, 2)).is_err());
        assert!(plan(256, &rational(1, 2)).is_err());
    }

    #[test]
    fn exact_examples() {
        let f5 = FieldSpec::Prime(5);
        let x = Dist::uniform_ints(f5, [1, 2]).unwrap();
        let t = condense_exact(&x, 1, Budget::default()).unwrap();
        let expected = Dist::new(
            f5,
            vec![
                (f5.from_i64(1), rational(1, 4)),
                (f5.from_i64(2), rational(1, 8)),
                (f5.from_i64(3), rational(3, 8)),
                (f5.from_i64(4), rational(1, 4)),
            ],
        )
        .unwrap();
        assert_eq!(t.levels[1].law, expected);
        assert_eq!(t.levels[1].min_entropy.exact, Some(rational(3, 8)));
        assert!((t.levels[1].min_entropy.bits - (8f64 / 3.0).log2()).abs() < 1e-12);

        let f11 = FieldSpec::Prime(11);
        let x = Dist::uniform_ints(f11, 1..11).unwrap();
        let t = condense_exact(&x, 1, Budget::default()).unwrap();
        assert!(t.levels[1].min_entropy.bits > 11f64.log2() - 1.0);

        let pt = Dist::point(f11.from_i64(1));
        let t = condense_exact(&pt, 3, Budget::default()).unwrap();
        assert!(t.levels.iter().all(|l| l.support == 1 && l.min_entropy.bits == 0.0));
        assert_eq!(t.levels[1].law, Dist::point(f11.from_i64(2)));
    }

    #[test]
    fn two_step_pushforward_matches_direct() {
        let f = FieldSpec::Prime(31);
        let x = Dist::from_weights(f, [(f.from_i64(0), 3u32), (f.from_i64(4), 1), (f.from_i64(9), 5), (f.from_i64(30), 2)])
            .unwrap();
        let direct = pushforward(
            &[crate::expr::parse_expr("X*(Y+Z)").unwrap()],
            &Bindings::iid(&["X", "Y", "Z"], &x),
            Budget::default(),
        )
        .unwrap()
        .map(|k| k[0].clone());
        assert_eq!(condense_step(&x, Budget::default()).unwrap().law(), &direct);
    }

    #[test]
    fn sampled_uniform_source() {
        let f = FieldSpec::Prime(257);
        let u = Dist::uniform(f, f.elements().unwrap()).unwrap();
        let pl = plan(257, &rational(1, 2)).unwrap();
        let pl = CondenserPlan { depth: 1, leaves: 3, ..pl };
        let t = condense_sampled(&u, &pl, 100_000, 7).unwrap();
        let get = |n: &str| t.battery.iter().find(|b| b.name == n).unwrap().clone();
        // P(X(Y+Z) = 0) ≈ 2/p, so the full-range test rejects and the
        // nonzero-conditioned one does not.
        assert!(get("uniform").reject);
        assert!(!get("uniform-nonzero").reject, "{:?}", get("uniform-nonzero"));
        assert!(!get("serial-nonzero").reject, "{:?}", get("serial-nonzero"));
        assert!((t.levels[1].prob_zero - 2.0 / 257.0).abs() < 0.002);

        let again = condense_sampled(&u, &pl, 100_000, 7).unwrap();
        assert_eq!(again.outputs, t.outputs);
    }

    #[test]
    fn sampled_constant_source_is_rejected() {
        let f = FieldSpec::Prime(257);
        let pt = Dist::point(f.from_i64(5));
        let pl = plan(257, &rational(1, 2)).unwrap();
        let t = condense_sampled(&pt, &pl, MIN_TRIALS, 1).unwrap();
        assert!(t.battery.iter().filter(|b| b.name.starts_with("uniform")).all(|b| b.reject && b.statistic > 1e5));
        assert!(matches!(condense_sampled(&pt, &pl, 10, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn sampled_collision_entropy_grows() {
        let f = FieldSpec::Prime(257);
        let x = Dist::uniform_ints(f, [3, 17, 40, 41, 99, 150, 201, 230]).unwrap();
        let pl = plan(257, &rational(3, 8)).unwrap();
        let t = condense_sampled(&x, &pl, MIN_TRIALS, 3).unwrap();
        let h: Vec<f64> = t.levels.iter().map(|l| l.collision_entropy).collect();
        assert!((h[0] - 3.0).abs() < 0.05);
        assert!(h[1] > h[0] && h[2] > h[1], "{h:?}");
    }

    #[test]
    fn sampled_converges_to_exact_law() {
        let f = FieldSpec::Prime(13);
        let x = Dist::uniform_ints(f, [1, 2, 5]).unwrap();
        let exact = condense_exact(&x, 1, Budget::default()).unwrap();
        let pl = CondenserPlan { depth: 1, leaves: 3, ..plan(13, &rational(1, 2)).unwrap() };
        let t = condense_sampled(&x, &pl, 200_000, 11).unwrap();
        let tv = t.tv_estimate(&exact.levels[1].law);
        assert!(!tv.flagged, "{tv:?}");
    }

    #[test]
    fn bucket_sizes_partition() {
        assert_eq!(bucket_sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(bucket_sizes(257, 257), vec![1; 257]);
        for v in 0..10 {
            assert!(bucket_of(v, 10, 3) < 3);
        }
        assert_eq!((0..10).filter(|&v| bucket_of(v, 10, 3) == 0).count(), 4);
    }
}
