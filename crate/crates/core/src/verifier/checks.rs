//! Individual inequality checks. Each returns an [`Outcome`]: named values,
//! slacks of exact-constant inequalities (must be ≥ −[`TOL`]), and deficits
//! for statements whose constant is unspecified (reported only).

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::dist::{binary_entropy, dyadic, Dist};
use crate::error::Result;
use crate::expr::{parse_expr, Expr};
use crate::field::FieldSpec;
use crate::numeric::rational_to_f64;
use crate::query::{combine, entropy_of_exprs, Bindings, Budget, EntropyKind};

pub const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub values: BTreeMap<String, f64>,
    pub slacks: BTreeMap<String, f64>,
    pub deficits: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub skipped: Vec<String>,
}

impl Outcome {
    pub fn value(&mut self, k: &str, v: f64) {
        self.values.insert(k.into(), v);
    }

    pub fn slack(&mut self, k: &str, v: f64) {
        self.slacks.insert(k.into(), v);
    }

    pub fn deficit(&mut self, k: &str, v: f64) {
        self.deficits.insert(k.into(), v);
    }

    pub fn flag(&mut self, k: &str, v: bool) {
        self.flags.insert(k.into(), v);
    }

    pub fn skip(&mut self, reason: impl Into<String>) {
        self.skipped.push(reason.into());
    }

    fn skipped_with(reason: impl Into<String>) -> Self {
        let mut o = Self::default();
        o.skip(reason);
        o
    }

    /// Merges `other` with every key prefixed by `prefix.`.
    pub fn absorb(&mut self, prefix: &str, other: Outcome) {
        let key = |k: String| format!("{prefix}.{k}");
        self.values.extend(other.values.into_iter().map(|(k, v)| (key(k), v)));
        self.slacks.extend(other.slacks.into_iter().map(|(k, v)| (key(k), v)));
        self.deficits.extend(other.deficits.into_iter().map(|(k, v)| (key(k), v)));
        self.flags.extend(other.flags.into_iter().map(|(k, v)| (key(k), v)));
        self.skipped.extend(other.skipped.into_iter().map(|r| format!("{prefix}: {r}")));
    }

    /// NaN slacks count as violations.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn violations(&self) -> usize {
        self.slacks.values().filter(|&&s| !(s >= -TOL)).count()
    }

    pub fn min_slack(&self) -> Option<f64> {
        self.slacks.values().copied().reduce(f64::min)
    }
}

fn h(d: &Dist) -> f64 {
    d.shannon().bits
}

/// `Η(X' ∘ Y')` for independent copies, without materializing the law.
fn h_op(x: &Dist, y: &Dist, op: &str, budget: Budget) -> Result<f64> {
    let b = Bindings::new(x.field()).with("A", x)?.with("B", y)?;
    joint(&[&format!("A{op}B")], &b, budget)
}

fn expr(text: &str) -> Expr {
    parse_expr(text).expect("static expression")
}

/// Shannon entropy of a tuple of expression texts.
fn joint(texts: &[&str], b: &Bindings, budget: Budget) -> Result<f64> {
    let es: Vec<Expr> = texts.iter().map(|t| expr(t)).collect();
    Ok(entropy_of_exprs(&es, EntropyKind::Shannon, b, budget)?.bits)
}

/// `Η(X(Y+Z)) ≤ Η(XY, XZ) + Η(X, Y+Z) − Η(X,Y,Z) + 1`, as stated.
///
/// The stated form fails when `P(X=0) > 0`: conditioning on `X = 0` adds
/// `P(X=0)(Η(Y+Z) − Η(Y,Z)) ≤ 0` to the right side. The `corrected` slack
/// asserts the bound with `P(X=0)(Η(Y,Z) − Η(Y+Z))` added back, which
/// holds for independent `X, Y, Z`.
pub fn check_mo_upper(x: &Dist, y: &Dist, z: &Dist, budget: Budget) -> Result<Outcome> {
    let b = Bindings::from_pairs([("X", x), ("Y", y), ("Z", z)])?;
    let lhs = joint(&["X*(Y+Z)"], &b, budget)?;
    let h_sum = joint(&["Y+Z"], &b, budget)?;
    let rhs = joint(&["X*Y", "X*Z"], &b, budget)? + h(x) + h_sum - h(x) - h(y) - h(z) + 1.0;
    let p0 = rational_to_f64(&x.prob_zero());
    let mut o = Outcome::default();
    o.value("lhs", lhs);
    o.value("rhs", rhs);
    o.value("p_zero", p0);
    o.slack("slack", rhs - lhs);
    o.slack("corrected", rhs + p0 * (h(y) + h(z) - h_sum) - lhs);
    Ok(o)
}

/// `Η(X(Y+Z)) ≤ 2Η(XY) + Η(X+Y) − 2Η(X) + 1` for i.i.d. `X, Y, Z`.
pub fn check_mo_upper_iid(x: &Dist, budget: Budget) -> Result<Outcome> {
    let b = Bindings::iid(&["X", "Y", "Z"], x);
    let lhs = joint(&["X*(Y+Z)"], &b, budget)?;
    let rhs = 2.0 * h_op(x, x, "*", budget)? + h_op(x, x, "+", budget)? - 2.0 * h(x) + 1.0;
    let mut o = Outcome::default();
    o.value("lhs", lhs);
    o.value("rhs", rhs);
    o.slack("slack", rhs - lhs);
    Ok(o)
}

/// `Η((X+Y)(Z+W)) ≤ Η(X+Y, Z+W) + Η(XZ, XW, YZ) − Η(X,Y,Z,W) + 1`, given `P(XZ = 0) = 0`.
pub fn check_pohoata_upper(x: &Dist, y: &Dist, z: &Dist, w: &Dist, budget: Budget) -> Result<Outcome> {
    if !x.prob_zero().is_zero() || !z.prob_zero().is_zero() {
        return Ok(Outcome::skipped_with("precondition P(XZ=0)=0 fails"));
    }
    let b = Bindings::from_pairs([("X", x), ("Y", y), ("Z", z), ("W", w)])?;
    let lhs = joint(&["(X+Y)*(Z+W)"], &b, budget)?;
    let rhs = joint(&["X+Y", "Z+W"], &b, budget)? + joint(&["X*Z", "X*W", "Y*Z"], &b, budget)?
        - h(x)
        - h(y)
        - h(z)
        - h(w)
        + 1.0;
    let mut o = Outcome::default();
    o.value("lhs", lhs);
    o.value("rhs", rhs);
    o.slack("slack", rhs - lhs);
    Ok(o)
}

/// `Η((X+Y)(Z+W)) ≤ 2Η(X+Y) + 3Η(XY) − 4Η(X) + 1` for i.i.d. copies with `P(X=0) = 0`.
pub fn check_pohoata_upper_iid(x: &Dist, budget: Budget) -> Result<Outcome> {
    if !x.prob_zero().is_zero() {
        return Ok(Outcome::skipped_with("precondition P(X=0)=0 fails"));
    }
    let b = Bindings::iid(&["X", "Y", "Z", "W"], x);
    let lhs = joint(&["(X+Y)*(Z+W)"], &b, budget)?;
    let rhs = 2.0 * h_op(x, x, "+", budget)? + 3.0 * h_op(x, x, "*", budget)? - 4.0 * h(x) + 1.0;
    let mut o = Outcome::default();
    o.value("lhs", lhs);
    o.value("rhs", rhs);
    o.slack("slack", rhs - lhs);
    Ok(o)
}

/// `p_max ≤ (Η(X+X') − Η(X) + 3/2) / Η(X)`.
pub fn check_maxprob(x: &Dist, budget: Budget) -> Result<Outcome> {
    let hx = h(x);
    if hx <= 0.0 {
        return Ok(Outcome::skipped_with("H(X) = 0"));
    }
    let doubling = h_op(x, x, "+", budget)? - hx;
    let p_max = rational_to_f64(&x.p_max());
    let rhs = (doubling + 1.5) / hx;
    let mut o = Outcome::default();
    o.value("p_max", p_max);
    o.value("rhs", rhs);
    o.value("doubling", doubling);
    // Contrapositive: Η(X+X') ≥ Η(X) + (p_max·Η(X) − 3/2).
    o.value("implied_doubling", p_max * hx - 1.5);
    o.slack("slack", rhs - p_max);
    Ok(o)
}

/// `Ηmin ≤ Η₂ ≤ Η`.
pub fn check_entropy_order(x: &Dist) -> Outcome {
    let (hmin, h2, hs) = (x.min_entropy().bits, x.collision_entropy().bits, h(x));
    let mut o = Outcome::default();
    o.value("hmin", hmin);
    o.value("h2", h2);
    o.value("h", hs);
    o.slack("min_le_collision", h2 - hmin);
    o.slack("collision_le_shannon", hs - h2);
    o
}

/// `Η(X, X+Y) = Η(X) + Η(X+Y | X) = Η(X) + Η(Y)`.
pub fn check_chain_rule(x: &Dist, y: &Dist, budget: Budget) -> Result<Outcome> {
    let b = Bindings::from_pairs([("X", x), ("Y", y)])?;
    let law = crate::query::pushforward(&[expr("X"), expr("X+Y")], &b, budget)?;
    let hj = law.shannon().bits;
    let chain = h(x) + law.conditional_entropy()?.bits;
    let mut o = Outcome::default();
    o.value("joint", hj);
    o.value("chain", chain);
    o.slack("chain_rule", -(hj - chain).abs());
    o.slack("independence", -(hj - h(x) - h(y)).abs());
    Ok(o)
}

/// `d(X, Y) = Η(X' − Y') − ½Η(X) − ½Η(Y)`.
fn ruzsa(x: &Dist, y: &Dist, op: &str, budget: Budget) -> Result<f64> {
    Ok(h_op(x, y, op, budget)? - 0.5 * h(x) - 0.5 * h(y))
}

/// Ruzsa triangle `d(X,Z) ≤ d(X,Y) + d(Y,Z)` and sum-difference `d(X,−Y) ≤ 3d(X,Y)`.
pub fn check_ruzsa(x: &Dist, y: &Dist, z: &Dist, budget: Budget) -> Result<Outcome> {
    let dxy = ruzsa(x, y, "-", budget)?;
    let dyz = ruzsa(y, z, "-", budget)?;
    let dxz = ruzsa(x, z, "-", budget)?;
    let dxny = ruzsa(x, y, "+", budget)?;
    let mut o = Outcome::default();
    o.value("d_xy", dxy);
    o.value("d_yz", dyz);
    o.value("d_xz", dxz);
    o.value("d_x_neg_y", dxny);
    o.slack("triangle", dxy + dyz - dxz);
    o.slack("sum_difference", 3.0 * dxy - dxny);
    Ok(o)
}

/// `Η` window `(lo, log p − hi)` over `F_p`; always open over ℚ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self { lo: 2.0, hi: 3.0 }
    }
}

impl Window {
    pub fn contains(&self, field: FieldSpec, hx: f64) -> bool {
        match field {
            FieldSpec::Prime(p) => hx > self.lo && hx < (p as f64).log2() - self.hi,
            FieldSpec::Rationals => hx > self.lo,
        }
    }
}

/// Non-i.i.d. bound `Η(X+Y) ≥ ½Η(X) + ½Η(Y) + 1/8 − ε` (deficit) and the
/// exact chain `d(X,−X) ≤ d(X,Y) + d(X,−Y) ≤ 4d(X,Y)`.
pub fn check_noniid(x: &Dist, y: &Dist, window: Window, budget: Budget) -> Result<Outcome> {
    let mut o = Outcome::default();
    let dxy = ruzsa(x, y, "-", budget)?;
    let dxny = ruzsa(x, y, "+", budget)?;
    let dxnx = ruzsa(x, x, "+", budget)?;
    o.value("d_xy", dxy);
    o.value("d_x_neg_y", dxny);
    o.value("d_x_neg_x", dxnx);
    o.slack("triangle", dxy + dxny - dxnx);
    o.slack("factor_four", 4.0 * dxy - dxy - dxny);
    let (hx, hy) = (h(x), h(y));
    if window.contains(x.field(), hx) && window.contains(y.field(), hy) {
        let hs = h_op(x, y, "+", budget)?;
        o.value("h_sum", hs);
        o.deficit("eighth", 0.5 * hx + 0.5 * hy + 0.125 - hs);
    } else {
        o.skip("entropy outside window");
    }
    Ok(o)
}

/// Records the doubling `Η(X+X') − Η(X)` inside the window.
pub fn check_epi_fp(x: &Dist, window: Window, budget: Budget) -> Result<Outcome> {
    let hx = h(x);
    if !x.field().is_prime_field() || !window.contains(x.field(), hx) {
        return Ok(Outcome::skipped_with("entropy outside window"));
    }
    let doubling = h_op(x, x, "+", budget)? - hx;
    let mut o = Outcome::default();
    o.value("h", hx);
    o.value("doubling", doubling);
    o.deficit("half", 0.5 - doubling);
    Ok(o)
}

fn cap_ok(x: &Dist, margin_bits: f64) -> bool {
    match x.field() {
        FieldSpec::Prime(p) => x.min_entropy().bits <= 2.0 / 3.0 * (p as f64).log2() - margin_bits,
        FieldSpec::Rationals => true,
    }
}

/// `max{Η(X+X'), Η(XX')} ≥ (4Η + 3Ηmin)/6 − K₂` (and the `/5` form over ℚ);
/// records the constant each trial demands.
pub fn check_minentropy_sumproduct(x: &Dist, margin_bits: f64, budget: Budget) -> Result<Outcome> {
    let hx = h(x);
    if hx <= 0.0 {
        return Ok(Outcome::skipped_with("H(X) = 0"));
    }
    if !cap_ok(x, margin_bits) {
        return Ok(Outcome::skipped_with("min-entropy above (2/3)log p − margin"));
    }
    let rationals = x.field() == FieldSpec::Rationals;
    if rationals && !x.prob_zero().is_zero() {
        return Ok(Outcome::skipped_with("P(X=0) > 0"));
    }
    let hmin = x.min_entropy().bits;
    let best = h_op(x, x, "+", budget)?.max(h_op(x, x, "*", budget)?);
    let mut o = Outcome::default();
    o.value("h", hx);
    o.value("hmin", hmin);
    o.value("max_doubling_entropy", best);
    o.deficit("sixths", (4.0 * hx + 3.0 * hmin) / 6.0 - best);
    if rationals {
        o.deficit("fifths", (4.0 * hx + 2.0 * hmin) / 5.0 - best);
    }
    Ok(o)
}

/// Among laws with `Η(X+X') ≤ Η(X) + C`, records `Η(XX')/Η(X)` against `7/6`.
pub fn check_weak_sumproduct(x: &Dist, c: f64, margin_bits: f64, budget: Budget) -> Result<Outcome> {
    let hx = h(x);
    if hx <= 0.0 {
        return Ok(Outcome::skipped_with("H(X) = 0"));
    }
    let doubling = h_op(x, x, "+", budget)? - hx;
    if doubling > c {
        let mut o = Outcome::skipped_with("additive doubling above C");
        o.value("doubling", doubling);
        return Ok(o);
    }
    if !cap_ok(x, margin_bits) {
        let mut o = Outcome::skipped_with("min-entropy above (2/3)log p − margin");
        o.flag("hypothesis_gate", true);
        return Ok(o);
    }
    let ratio = h_op(x, x, "*", budget)? / hx;
    let mut o = Outcome::default();
    o.value("doubling", doubling);
    o.value("ratio", ratio);
    o.deficit("seven_sixths", 7.0 / 6.0 - ratio);
    Ok(o)
}

/// `Η(X+Y) ≥ min{log p, log((2^Η(X) + 2^Η(Y) − 1)/√2)}` over `F_p`; a
/// candidate statement, so failures are data and not violations.
pub fn check_cd_candidate(x: &Dist, y: &Dist, budget: Budget) -> Result<Outcome> {
    let FieldSpec::Prime(p) = x.field() else {
        return Ok(Outcome::skipped_with("candidate is stated over F_p"));
    };
    let logp = (p as f64).log2();
    let bound = |a: f64, b: f64| logp.min(((a.exp2() + b.exp2() - 1.0) / std::f64::consts::SQRT_2).log2());
    let (hx, hy) = (h(x), h(y));
    let gap = h_op(x, y, "+", budget)? - bound(hx, hy);
    let gap_iid = h_op(x, x, "+", budget)? - bound(hx, hx);
    let mut o = Outcome::default();
    o.value("gap", gap);
    o.value("gap_iid", gap_iid);
    o.flag("holds", gap >= -TOL);
    o.flag("holds_iid", gap_iid >= -TOL);
    Ok(o)
}

/// Thresholding lemma for `X = U + Z` at `δ = 2^-delta_bits`, `A = {z : P(Z=z) ≥ δ}`.
///
/// Always asserted: `P(Z∉A) ≤ C/log(1/δ)` (exact, `C = Η(Z)` rounded up to a
/// multiple of `2^-20`) and the two conditional counterparts, which hold for
/// every `δ`. The stated claims are asserted where `C/log(1/δ) ≤ 1` and
/// `h₂(P(Z∉A)) ≤ C·loglog(1/δ)/log(1/δ)`, the regime the lemma's `δ₀` secures.
pub fn check_zsupport_lemma(u: &Dist, z: &Dist, delta_bits: u32, budget: Budget) -> Result<Outcome> {
    if delta_bits == 0 {
        return Ok(Outcome::skipped_with("δ must be below 1"));
    }
    let delta = dyadic(delta_bits);
    let Some((z_in, p_in)) = z.threshold(&delta).ok() else {
        return Ok(Outcome::skipped_with("A is empty"));
    };
    let grid = 1u64 << 20;
    let hz = h(z);
    let c = BigRational::new(BigInt::from((hz * grid as f64).ceil() as u64), BigInt::from(grid));
    let l = delta_bits as f64;
    let p_out = BigRational::one() - &p_in;
    let cover_bound = &c / BigRational::from_integer(BigInt::from(delta_bits));
    let mut o = Outcome::default();
    let (cf, pa, pout) = (rational_to_f64(&c), rational_to_f64(&p_in), rational_to_f64(&p_out));
    o.value("C", cf);
    o.value("p_in", pa);
    o.slack("cover", if p_out <= cover_bound { rational_to_f64(&(&cover_bound - &p_out)) } else { -1.0 });

    let x = combine(u, z, "+", budget)?;
    let x_in = combine(u, &z_in, "+", budget)?;
    let h_cond = match z.below_threshold(&delta) {
        Some((z_out, _)) => h(&x_in) * pa + h_op(u, &z_out, "+", budget)? * pout,
        None => h(&x_in),
    };
    let (hx, hxi) = (h(&x), h(&x_in));
    let sum = h_op(&x, &x, "+", budget)?;
    let sum_in = h_op(&x_in, &x_in, "+", budget)?;
    o.value("h_x", hx);
    o.value("h_x_given_indicator", h_cond);
    o.value("doubling", sum - hx);
    o.value("doubling_conditioned", sum_in - hxi);
    o.slack("additive_counterpart", sum - (h_cond + (sum_in - hxi) * pa * pa));

    let nonzero = rational_to_f64(&(BigRational::one() - x.prob_zero()));
    let product = (nonzero > 0.0)
        .then(|| -> Result<(f64, f64)> {
            Ok((h_op(&x, &x, "*", budget)?, h_op(&x_in, &x_in, "*", budget)?))
        })
        .transpose()?;
    if let Some((prod, prod_in)) = product {
        o.slack("multiplicative_counterpart", prod / nonzero - (h_cond + (prod_in - hxi) * pa * pa / nonzero));
        o.value("multiplicative_doubling", prod / nonzero - hx);
    }

    let loglog = if l > 1.0 { cf * l.log2() / l } else { 0.0 };
    let in_regime = cf / l <= 1.0 && binary_entropy(pout) <= loglog + TOL;
    o.flag("in_regime", in_regime);
    if in_regime {
        o.slack("first_claim", (sum - hx) - ((sum_in - hxi) * (1.0 - cf / l).powi(2) - loglog));
        if let Some((prod, prod_in)) = product {
            o.slack("second_claim", (prod / nonzero - hx) - ((prod_in - hxi) * pa * pa / nonzero - loglog));
        }
    } else {
        o.skip("outside δ0 regime");
    }
    Ok(o)
}

/// `|A+B| − min{p, |A|+|B|−1}` minimized over all nonempty `B ⊆ F_p`, for
/// each nonempty `A` given as a bitmask (`p ≤ 63`).
pub fn cauchy_davenport_exhaustive(p: u32) -> Vec<(u64, i64)> {
    assert!(p <= 63, "bitmask sumsets need p ≤ 63");
    let full = (1u64 << p) - 1;
    let rotate = |m: u64, a: u32| if a == 0 { m } else { ((m << a) | (m >> (p - a))) & full };
    (1..=full)
        .map(|a| {
            let worst = (1..=full)
                .map(|b| {
                    let sum = (0..p).filter(|&i| a >> i & 1 == 1).fold(0u64, |acc, i| acc | rotate(b, i));
                    let bound = (p as i64).min(a.count_ones() as i64 + b.count_ones() as i64 - 1);
                    sum.count_ones() as i64 - bound
                })
                .min()
                .expect("nonempty");
            (a, worst)
        })
        .collect()
}
