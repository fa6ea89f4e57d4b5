//! Seeded generators of test laws. A sample is a pure function of
//! `(spec, field, trial index, slot)`.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::progression::{CosetProgression, GapSpec};
use crate::query::{combine, Budget};
use crate::seeding::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// Random support, integer weights in `[1, 2^weight_bits]`.
    Random,
    /// Uniform on a random set.
    UniformSet,
    /// Uniform on a proper GAP of rank 1 or 2.
    GapUniform,
    /// `U + Z` with `U` GAP-uniform and `Z` random on at most 3 atoms.
    UPlusZ,
}

impl std::str::FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random" => Structure::Random,
            "uniform-set" => Structure::UniformSet,
            "gap" | "gap-uniform" => Structure::GapUniform,
            "u-plus-z" | "uz" => Structure::UPlusZ,
            _ => return Err(Error::Usage(format!("unknown corpus structure `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub fields: Vec<FieldSpec>,
    pub support_min: usize,
    pub support_max: usize,
    /// Masses are normalized integers in `[1, 2^weight_bits]`.
    pub weight_bits: u32,
    /// Over ℚ, support points are integers in `[1, 2^rational_bits]`.
    pub rational_bits: u32,
    pub structure: Structure,
    /// Trials per field.
    pub trials: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            fields: vec![FieldSpec::Rationals],
            support_min: 1,
            support_max: 12,
            weight_bits: 10,
            rational_bits: 6,
            structure: Structure::Random,
            trials: 100,
            seed: 0,
        }
    }
}

/// A generated law; `parts` holds `(U, Z)` for the `U + Z` structure.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: Dist,
    pub parts: Option<(Dist, Dist)>,
}

impl CorpusSpec {
    fn stream(&self, field: FieldSpec, index: usize) -> ChaCha8Rng {
        let label = format!("corpus/{field}/{:?}", self.structure);
        substream(self.seed, &label, index as u64)
    }

    /// `count` independent samples for one trial.
    pub fn draw(&self, field: FieldSpec, index: usize, count: usize) -> Result<Vec<Sample>> {
        let mut rng = self.stream(field, index);
        (0..count).map(|_| self.sample(field, &mut rng)).collect()
    }

    pub fn sample(&self, field: FieldSpec, rng: &mut ChaCha8Rng) -> Result<Sample> {
        Ok(match self.structure {
            Structure::Random => Sample { x: self.random_dist(field, rng, self.support_min, self.support_max)?, parts: None },
            Structure::UniformSet => {
                let k = self.support_size(field, rng, self.support_min, self.support_max);
                Sample { x: Dist::uniform(field, self.random_set(field, rng, k))?, parts: None }
            }
            Structure::GapUniform => Sample { x: self.gap_uniform(field, rng)?, parts: None },
            Structure::UPlusZ => {
                let u = self.gap_uniform(field, rng)?;
                let z = self.random_dist(field, rng, 1, 3)?;
                Sample { x: combine(&u, &z, "+", Budget::default())?, parts: Some((u, z)) }
            }
        })
    }

    fn support_size(&self, field: FieldSpec, rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
        let cap = match field {
            FieldSpec::Prime(p) => p as usize,
            FieldSpec::Rationals => 1usize << self.rational_bits,
        };
        rng.gen_range(lo.max(1)..=hi.max(lo.max(1))).min(cap)
    }

    fn element(&self, field: FieldSpec, rng: &mut ChaCha8Rng) -> Scalar {
        match field {
            FieldSpec::Prime(p) => field.from_i64(rng.gen_range(0..p) as i64),
            FieldSpec::Rationals => field.from_i64(rng.gen_range(1..=1i64 << self.rational_bits)),
        }
    }

    pub fn random_set(&self, field: FieldSpec, rng: &mut ChaCha8Rng, k: usize) -> Vec<Scalar> {
        let mut set = BTreeSet::new();
        while set.len() < k {
            set.insert(self.element(field, rng));
        }
        set.into_iter().collect()
    }

    fn random_dist(&self, field: FieldSpec, rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Result<Dist> {
        let k = self.support_size(field, rng, lo, hi);
        let set = self.random_set(field, rng, k);
        let top = 1u32 << self.weight_bits;
        Dist::from_weights(field, set.into_iter().map(|s| (s, rng.gen_range(1..=top))))
    }

    /// Uniform on a proper progression `a + n_1 r_1 (+ n_2 r_2)` with size in
    /// the support range; falls back to rank 1 with `r = 1` after 32 misses.
    fn gap_uniform(&self, field: FieldSpec, rng: &mut ChaCha8Rng) -> Result<Dist> {
        let size = self.support_size(field, rng, self.support_min.max(2), self.support_max.max(2));
        let nonzero = |rng: &mut ChaCha8Rng| loop {
            let s = self.element(field, rng);
            if !s.is_zero() {
                break s;
            }
        };
        for _ in 0..32 {
            let rank2 = size >= 4 && rng.gen_bool(0.5);
            let bounds = if rank2 {
                let n1 = rng.gen_range(2..=size / 2);
                vec![n1 as u64, (size / n1) as u64]
            } else {
                vec![size as u64]
            };
            let gens = (0..bounds.len()).map(|_| nonzero(rng)).collect();
            let gap = GapSpec::new(self.element(field, rng), gens, bounds, false)?;
            let e = CosetProgression::from_gap(gap).enumerate(Budget::default())?;
            if e.is_proper() {
                return Dist::uniform(field, e.set.iter().cloned());
            }
        }
        let a = self.element(field, rng);
        let gap = GapSpec::new(a, vec![field.one()], vec![size as u64], false)?;
        Dist::uniform(field, CosetProgression::from_gap(gap).enumerate(Budget::default())?.set.iter().cloned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_identical() {
        for structure in [Structure::Random, Structure::UniformSet, Structure::GapUniform, Structure::UPlusZ] {
            let spec = CorpusSpec { structure, seed: 9, ..Default::default() };
            for field in [FieldSpec::Prime(13), FieldSpec::Rationals] {
                let a = spec.draw(field, 3, 2).unwrap();
                let b = spec.draw(field, 3, 2).unwrap();
                for (s, t) in a.iter().zip(&b) {
                    assert_eq!(s.x.to_tsv_string(), t.x.to_tsv_string());
                    assert!(s.x.support_len() >= 1);
                }
                assert_eq!(a[0].parts.is_some(), structure == Structure::UPlusZ);
            }
        }
    }

    #[test]
    fn random_laws_respect_bounds() {
        let spec = CorpusSpec { seed: 1, ..Default::default() };
        for i in 0..50 {
            let s = &spec.draw(FieldSpec::Rationals, i, 1).unwrap()[0];
            assert!(s.x.support_len() <= 12);
            assert!(s.x.atoms().iter().all(|(k, _)| {
                let v = k.to_f64();
                (1.0..=64.0).contains(&v)
            }));
            let (_, den) = s.x.integer_weights();
            assert!(den <= num_bigint::BigUint::from(12u32 << 10));
        }
    }
}
