//! Numerical search over the probability simplex on a fixed support for laws
//! with small entropic doubling, with exact re-audit of every reported point.

use std::collections::HashMap;
use std::fmt::Debug;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{rational_text, Dist};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::numeric::{compensated_sum, rational_to_f64};
use crate::query::{combine, Budget};
use crate::seeding::substream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `Η(X+X') − Η(X)`.
    AdditiveDoubling,
    /// `Η(XX') − Η(X)`.
    MultiplicativeDoubling,
    /// `max{Η(X+X'), Η(XX')} − Η(X)`.
    MaxDoubling,
    /// `max{Η(X+X'), Η(XX')} − (1 + δ)Η(X)`.
    ConjectureGap { delta: String },
}

impl ObjectiveKind {
    pub fn conjecture_gap(delta: &BigRational) -> Self {
        ObjectiveKind::ConjectureGap { delta: rational_text(delta) }
    }

    fn needs_product(&self) -> bool {
        !matches!(self, ObjectiveKind::AdditiveDoubling)
    }

    fn delta(&self) -> f64 {
        match self {
            ObjectiveKind::ConjectureGap { delta } => {
                crate::dist::parse_rational(delta).map(|d| rational_to_f64(&d)).unwrap_or(f64::NAN)
            }
            _ => 0.0,
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "additive" | "additivedoubling" | "additive-doubling" => ObjectiveKind::AdditiveDoubling,
            "multiplicative" | "multiplicativedoubling" | "multiplicative-doubling" => {
                ObjectiveKind::MultiplicativeDoubling
            }
            "maxdoubling" | "max-doubling" | "max" => ObjectiveKind::MaxDoubling,
            _ => match lower.strip_prefix("conjecturegap:").or_else(|| lower.strip_prefix("conjecture-gap:")) {
                Some(d) => ObjectiveKind::conjecture_gap(&crate::dist::parse_rational(d)?),
                None => return Err(Error::Usage(format!("unknown objective `{s}`"))),
            },
        })
    }
}

/// `(i, j) ↦` index of `s_i ∘ s_j` among the distinct values.
#[derive(Debug, Clone)]
struct ConvolutionTable {
    index: Vec<usize>,
    values: usize,
}

impl ConvolutionTable {
    fn new(support: &[Scalar], op: impl Fn(&Scalar, &Scalar) -> Scalar) -> Self {
        let mut ids: HashMap<Scalar, usize> = HashMap::new();
        let mut index = Vec::with_capacity(support.len() * support.len());
        for a in support {
            for b in support {
                let n = ids.len();
                index.push(*ids.entry(op(a, b)).or_insert(n));
            }
        }
        Self { index, values: ids.len() }
    }

    fn law<T: Float>(&self, p: &[T]) -> Vec<T> {
        let k = p.len();
        let mut q = vec![T::zero(); self.values];
        for i in 0..k {
            for j in 0..k {
                q[self.index[i * k + j]] = q[self.index[i * k + j]] + p[i] * p[j];
            }
        }
        q
    }

    /// `∂Η(Q)/∂p_i = −2 Σ_j p_j (log q_{s(i,j)} + 1/ln 2)`.
    fn entropy_and_gradient<T: Float>(&self, p: &[T]) -> (T, Vec<T>) {
        let k = p.len();
        let q = self.law(p);
        let inv_ln2 = T::from(std::f64::consts::LOG2_E).unwrap();
        let dlog: Vec<T> = q.iter().map(|&x| x.log2() + inv_ln2).collect();
        let two = T::from(2.0).unwrap();
        let grad = (0..k)
            .map(|i| -two * compensated_sum((0..k).map(|j| p[j] * dlog[self.index[i * k + j]])))
            .collect();
        (entropy(&q), grad)
    }
}

fn entropy<T: Float>(q: &[T]) -> T {
    -compensated_sum(q.iter().map(|&x| if x > T::zero() { x * x.log2() } else { T::zero() }))
}

/// A smooth functional of the masses on a fixed support.
#[derive(Debug, Clone)]
pub struct Objective<T: Float> {
    kind: ObjectiveKind,
    field: FieldSpec,
    support: Vec<Scalar>,
    additive: ConvolutionTable,
    multiplicative: Option<ConvolutionTable>,
    delta: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components<T> {
    pub h: T,
    pub h_sum: T,
    pub h_product: Option<T>,
}

impl<T: Float + Debug> Objective<T> {
    pub fn new(kind: ObjectiveKind, field: FieldSpec, support: Vec<Scalar>) -> Result<Self> {
        let mut support = support;
        support.sort();
        support.dedup();
        if support.is_empty() {
            return Err(Error::Usage("empty support".into()));
        }
        if let Some(s) = support.iter().find(|s| s.field() != field) {
            return Err(Error::mismatch(field, s.field()));
        }
        let multiplicative = if kind.needs_product() || !support.iter().any(Scalar::is_zero) {
            if support.iter().any(Scalar::is_zero) {
                return Err(Error::Domain("multiplicative objectives require 0 ∉ support".into()));
            }
            Some(ConvolutionTable::new(&support, |a, b| a * b))
        } else {
            None
        };
        let delta = T::from(kind.delta()).unwrap_or_else(T::nan);
        Ok(Self { additive: ConvolutionTable::new(&support, |a, b| a + b), multiplicative, kind, field, support, delta })
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn support(&self) -> &[Scalar] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    /// `Η(X)` and its gradient `−(log p_i + 1/ln 2)`.
    pub fn self_entropy(&self, p: &[T]) -> (T, Vec<T>) {
        let inv_ln2 = T::from(std::f64::consts::LOG2_E).unwrap();
        (entropy(p), p.iter().map(|&x| -(x.log2() + inv_ln2)).collect())
    }

    /// `Η(X+X')` and its gradient.
    pub fn sum_entropy(&self, p: &[T]) -> (T, Vec<T>) {
        self.additive.entropy_and_gradient(p)
    }

    /// `Η(XX')` and its gradient; `None` when 0 is in the support.
    pub fn product_entropy(&self, p: &[T]) -> Option<(T, Vec<T>)> {
        self.multiplicative.as_ref().map(|t| t.entropy_and_gradient(p))
    }

    pub fn components(&self, p: &[T]) -> Components<T> {
        Components {
            h: entropy(p),
            h_sum: entropy(&self.additive.law(p)),
            h_product: self.multiplicative.as_ref().map(|t| entropy(&t.law(p))),
        }
    }

    pub fn value(&self, p: &[T]) -> T {
        self.value_and_gradient(p, false).0
    }

    pub fn gradient(&self, p: &[T]) -> Vec<T> {
        self.value_and_gradient(p, true).1
    }

    /// Branch ties in the max go to the additive side.
    pub fn value_and_gradient(&self, p: &[T], with_gradient: bool) -> (T, Vec<T>) {
        let (h, gh) = if with_gradient { self.self_entropy(p) } else { (entropy(p), Vec::new()) };
        let sum = || if with_gradient { self.sum_entropy(p) } else { (entropy(&self.additive.law(p)), Vec::new()) };
        let product = || {
            let t = self.multiplicative.as_ref().expect("checked at construction");
            if with_gradient {
                t.entropy_and_gradient(p)
            } else {
                (entropy(&t.law(p)), Vec::new())
            }
        };
        let (branch, gb, scale) = match self.kind {
            ObjectiveKind::AdditiveDoubling => {
                let (s, g) = sum();
                (s, g, T::one())
            }
            ObjectiveKind::MultiplicativeDoubling => {
                let (s, g) = product();
                (s, g, T::one())
            }
            ObjectiveKind::MaxDoubling | ObjectiveKind::ConjectureGap { .. } => {
                let (a, ga) = sum();
                let (m, gm) = product();
                let scale = if matches!(self.kind, ObjectiveKind::MaxDoubling) { T::one() } else { T::one() + self.delta };
                if m > a {
                    (m, gm, scale)
                } else {
                    (a, ga, scale)
                }
            }
        };
        let grad = if with_gradient { gb.iter().zip(&gh).map(|(&b, &g)| b - scale * g).collect() } else { Vec::new() };
        (branch - scale * h, grad)
    }
}

pub type Objective64 = Objective<f64>;
pub type Objective32 = Objective<f32>;

/// Euclidean projection onto `{x : x_i ≥ floor, Σ x_i = 1}` (sort-based).
pub fn project_to_simplex<T: Float>(x: &[T], floor: T) -> Vec<T> {
    let k = x.len();
    let budget = T::one() - floor * T::from(k).unwrap();
    let y: Vec<T> = x.iter().map(|&v| v - floor).collect();
    let mut sorted = y.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (i, &u) in sorted.iter().enumerate() {
        cum = cum + u;
        let t = (cum - budget) / T::from(i + 1).unwrap();
        if u - t > T::zero() {
            theta = t;
        }
    }
    let mut out: Vec<T> = y.iter().map(|&v| (v - theta).max(T::zero()) + floor).collect();
    // Absorb rounding drift in the largest coordinate.
    let drift = T::one() - compensated_sum(out.iter().copied());
    if let Some(i) = (0..k).max_by(|&a, &b| out[a].partial_cmp(&out[b]).unwrap_or(std::cmp::Ordering::Equal)) {
        out[i] = out[i] + drift;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ProjectedGradient,
    SimulatedAnnealing,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pg" | "projected-gradient" => Ok(Method::ProjectedGradient),
            "sa" | "simulated-annealing" => Ok(Method::SimulatedAnnealing),
            _ => Err(Error::Usage(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub method: Method,
    pub iters: usize,
    pub step: f64,
    pub floor: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { method: Method::ProjectedGradient, iters: 2000, step: 0.1, floor: 1e-9, seed: 0, restarts: 1 }
    }
}

/// Denominator of rationalized search points.
pub const DENOMINATOR_BITS: u32 = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub objective: ObjectiveKind,
    pub field: String,
    pub support: Vec<String>,
    /// Rationalized masses with denominator `2^20`, aligned with `support`.
    pub point: Vec<String>,
    /// Objective at the best floating point found.
    pub raw_value: f64,
    /// Objective in floating point at the rationalized point.
    pub value: f64,
    /// Exact pushforwards at the rationalized point.
    pub audit: f64,
    pub iterations: usize,
    pub seed: u64,
    pub method: Method,
    /// Best-so-far objective, sampled along the run.
    pub history: Vec<f64>,
}

struct Trajectory {
    best: Vec<f64>,
    best_value: f64,
    history: Vec<f64>,
}

fn guard(v: f64, iter: usize, history: &[f64]) -> Result<()> {
    if v.is_nan() {
        let tail: Vec<String> = history.iter().rev().take(5).map(|x| format!("{x:.6}")).collect();
        return Err(Error::Domain(format!("objective diverged at iteration {iter}; recent best: [{}]", tail.join(", "))));
    }
    Ok(())
}

fn random_interior(k: usize, floor: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-3f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    project_to_simplex(&raw.iter().map(|x| x / s).collect::<Vec<_>>(), floor)
}

fn projected_gradient(o: &Objective64, start: Vec<f64>, cfg: &SearchConfig) -> Result<Trajectory> {
    let every = (cfg.iters / 100).max(1);
    let mut x = start;
    let (mut fx, mut g) = o.value_and_gradient(&x, true);
    guard(fx, 0, &[])?;
    let mut t = Trajectory { best: x.clone(), best_value: fx, history: vec![fx] };
    let mut step = cfg.step;
    for it in 1..=cfg.iters {
        let mut accepted = false;
        for _ in 0..40 {
            let cand = project_to_simplex(&x.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>(), cfg.floor);
            let fc = o.value(&cand);
            guard(fc, it, &t.history)?;
            let moved: f64 = cand.iter().zip(&x).zip(&g).map(|((c, a), b)| b * (c - a)).sum();
            if fc <= fx + 1e-4 * moved {
                x = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        (fx, g) = o.value_and_gradient(&x, true);
        if fx < t.best_value {
            t.best_value = fx;
            t.best = x.clone();
        }
        step = (step * 2.0).min(cfg.step * 16.0);
        if it % every == 0 {
            t.history.push(t.best_value);
        }
    }
    t.history.push(t.best_value);
    Ok(t)
}

fn annealing(o: &Objective64, start: Vec<f64>, cfg: &SearchConfig, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let every = (cfg.iters / 100).max(1);
    let k = o.dim();
    let mut x = start;
    let mut fx = o.value(&x);
    guard(fx, 0, &[])?;
    let mut t = Trajectory { best: x.clone(), best_value: fx, history: vec![fx] };
    if k < 2 {
        return Ok(t);
    }
    for it in 1..=cfg.iters {
        let temp = cfg.step * (1.0 - it as f64 / (cfg.iters + 1) as f64);
        let i = rng.gen_range(0..k);
        let j = (i + rng.gen_range(1..k)) % k;
        let movable = x[i] - cfg.floor;
        let amount = movable * rng.gen_range(0.0..1.0f64).powi(2);
        let mut cand = x.clone();
        cand[i] -= amount;
        cand[j] += amount;
        let fc = o.value(&cand);
        guard(fc, it, &t.history)?;
        if fc <= fx || rng.gen_range(0.0..1.0f64) < ((fx - fc) / temp.max(1e-12)).exp() {
            x = cand;
            fx = fc;
            if fx < t.best_value {
                t.best_value = fx;
                t.best = x.clone();
            }
        }
        if it % every == 0 {
            t.history.push(t.best_value);
        }
    }
    t.history.push(t.best_value);
    Ok(t)
}

/// Largest-remainder rounding to multiples of `2^-bits`; atoms that round to
/// zero are dropped by the exact audit.
pub fn rationalize(x: &[f64], bits: u32) -> Vec<u64> {
    let den = 1u64 << bits;
    let scaled: Vec<f64> = x.iter().map(|&v| v.max(0.0) * den as f64).collect();
    let mut units: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = units.iter().sum();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    if assigned <= den {
        for &i in order.iter().cycle().take((den - assigned) as usize) {
            units[i] += 1;
        }
    }
    units
}

/// Exact re-evaluation of the objective at `masses` (integer units over `2^bits`).
pub fn audit(o: &Objective64, units: &[u64], bits: u32) -> Result<f64> {
    let den = BigUint::from(1u64 << bits);
    let atoms: Vec<(Scalar, BigRational)> = o
        .support
        .iter()
        .zip(units)
        .filter(|(_, &u)| u > 0)
        .map(|(s, &u)| (s.clone(), BigRational::new(BigUint::from(u).into(), den.clone().into())))
        .collect();
    let x = Dist::new(o.field, atoms)?;
    let h = x.shannon().bits;
    let budget = Budget::default();
    let sum = || -> Result<f64> { Ok(combine(&x, &x, "+", budget)?.shannon().bits) };
    let product = || -> Result<f64> { Ok(combine(&x, &x, "*", budget)?.shannon().bits) };
    Ok(match o.kind {
        ObjectiveKind::AdditiveDoubling => sum()? - h,
        ObjectiveKind::MultiplicativeDoubling => product()? - h,
        ObjectiveKind::MaxDoubling => sum()?.max(product()?) - h,
        ObjectiveKind::ConjectureGap { .. } => sum()?.max(product()?) - (1.0 + o.delta) * h,
    })
}

fn finish(o: &Objective64, t: Trajectory, cfg: &SearchConfig) -> Result<SearchResult> {
    let units = rationalize(&t.best, DENOMINATOR_BITS);
    let den = (1u64 << DENOMINATOR_BITS) as f64;
    let point_f: Vec<f64> = units.iter().map(|&u| u as f64 / den).collect();
    let audit_value = audit(o, &units, DENOMINATOR_BITS)?;
    // Evaluate in floating point on the audited support (atoms rounded to 0 drop out).
    let kept: Vec<usize> = (0..units.len()).filter(|&i| units[i] > 0).collect();
    let value = if kept.len() == units.len() {
        o.value(&point_f)
    } else {
        let sub = Objective64::new(o.kind.clone(), o.field, kept.iter().map(|&i| o.support[i].clone()).collect())?;
        sub.value(&kept.iter().map(|&i| point_f[i]).collect::<Vec<_>>())
    };
    Ok(SearchResult {
        objective: o.kind.clone(),
        field: o.field.to_string(),
        support: o.support.iter().map(ToString::to_string).collect(),
        point: units.iter().map(|&u| rational_text(&BigRational::new(u.into(), (1u64 << DENOMINATOR_BITS).into()))).collect(),
        raw_value: t.best_value,
        value,
        audit: audit_value,
        iterations: cfg.iters,
        seed: cfg.seed,
        method: cfg.method,
        history: t.history,
    })
}

/// Runs `cfg.restarts` independent trajectories from seeded interior starts
/// (restart 0 starts at the uniform point) and reports the best.
pub fn search(o: &Objective64, cfg: &SearchConfig) -> Result<SearchResult> {
    if cfg.floor <= 0.0 || cfg.floor * o.dim() as f64 >= 1.0 {
        return Err(Error::Usage("floor must be positive and below 1/|support|".into()));
    }
    let runs: Vec<Result<Trajectory>> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, "search", r as u64);
            let start = if r == 0 {
                vec![1.0 / o.dim() as f64; o.dim()]
            } else {
                random_interior(o.dim(), cfg.floor, &mut rng)
            };
            match cfg.method {
                Method::ProjectedGradient => projected_gradient(o, start, cfg),
                Method::SimulatedAnnealing => annealing(o, start, cfg, &mut rng),
            }
        })
        .collect();
    let mut best: Option<Trajectory> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.best_value < b.best_value) {
            best = Some(run);
        }
    }
    finish(o, best.expect("at least one restart"), cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportSearchResult {
    pub k: usize,
    pub outer_iters: usize,
    pub best: SearchResult,
    /// Best inner objective after each outer step.
    pub history: Vec<f64>,
}

/// Annealing over `k`-subsets of `F_p` (excluding 0 for multiplicative
/// objectives), each candidate scored by a short inner search.
pub fn search_support(
    kind: ObjectiveKind,
    p: u64,
    k: usize,
    outer_iters: usize,
    inner: &SearchConfig,
) -> Result<SupportSearchResult> {
    let field = FieldSpec::prime(p)?;
    let lo = if kind.needs_product() { 1 } else { 0 };
    let pool: Vec<u64> = (lo..p).collect();
    if k == 0 || k > pool.len() {
        return Err(Error::Usage(format!("cannot choose {k} elements from {} candidates", pool.len())));
    }
    let mut rng = substream(inner.seed, "support-search", 0);
    let mut current: Vec<u64> = pool.choose_multiple(&mut rng, k).copied().collect();
    let score = |set: &[u64], step: usize| -> Result<SearchResult> {
        let support = set.iter().map(|&v| field.from_i64(v as i64)).collect();
        let o = Objective64::new(kind.clone(), field, support)?;
        search(&o, &SearchConfig { seed: inner.seed.wrapping_add(step as u64), ..inner.clone() })
    };
    let mut cur = score(&current, 0)?;
    let mut best = cur.clone();
    let mut history = vec![best.raw_value];
    for step in 1..=outer_iters {
        let temp = 0.1 * (1.0 - step as f64 / (outer_iters + 1) as f64);
        let mut cand = current.clone();
        let out = rng.gen_range(0..k);
        loop {
            let v = pool[rng.gen_range(0..pool.len())];
            if !cand.contains(&v) {
                cand[out] = v;
                break;
            }
        }
        let res = score(&cand, step)?;
        if res.raw_value <= cur.raw_value || rng.gen_range(0.0..1.0f64) < ((cur.raw_value - res.raw_value) / temp.max(1e-12)).exp()
        {
            current = cand;
            cur = res;
            if cur.raw_value < best.raw_value {
                best = cur.clone();
            }
        }
        history.push(best.raw_value);
    }
    Ok(SupportSearchResult { k, outer_iters, best, history })
}
