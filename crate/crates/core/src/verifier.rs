//! Exhaustive and statistical checks of the per-token ε-LDP bound.
//!
//! For an enumerable scorer, every context of a fixed length over a small
//! token set is scored at every mask position. The worst-case log ratio over
//! all ordered context pairs for output token `v` at position `m` is
//! `max_c ln p_c(v) − min_c' ln p_c'(v)`, so one pass that tracks the per-slot
//! extremes covers all `|contexts|²` pairs exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{
    output_distribution, temperature, tempered_softmax, ClipRange, Epsilon, LogitVector,
    ProbabilityVector,
};
use crate::scorer::{MaskQuery, Scorer};
use crate::seed::rng_from_seed;

pub const MAX_CONTEXT_PAIRS: u128 = 1_000_000;
pub const LOG_RATIO_TOLERANCE: f64 = 1e-9;
pub const MIN_MC_DRAWS: u64 = 10_000;

/// Which mechanism the verifier audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismVariant {
    Clipped,
    /// Debug mutant: temperature from the clip range, but logits left raw.
    Unclipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub context: Vec<String>,
    pub context_prime: Vec<String>,
    pub mask_index: usize,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub epsilon_claimed: f64,
    pub max_log_ratio: f64,
    pub witness: Option<Witness>,
    pub contexts: u64,
    pub pairs_checked: u64,
    pub variant: MechanismVariant,
    pub pass: bool,
}

/// Output distribution over the scorer's candidate tokens for one query.
pub fn candidate_distribution(
    scorer: &dyn Scorer,
    query: &MaskQuery,
    eps: Epsilon,
    clip: &ClipRange,
    variant: MechanismVariant,
) -> Result<ProbabilityVector> {
    let logits = scorer
        .vocabulary()
        .candidate_logits(&scorer.score_masked(query)?)?;
    Ok(match variant {
        MechanismVariant::Clipped => output_distribution(&logits, eps, clip),
        MechanismVariant::Unclipped => tempered_softmax(logits.values(), temperature(eps, clip)),
    })
}

impl Witness {
    /// Re-evaluate `ln p_c(token) − ln p_c'(token)` from scratch.
    pub fn log_ratio(
        &self,
        scorer: &dyn Scorer,
        eps: Epsilon,
        clip: &ClipRange,
        variant: MechanismVariant,
    ) -> Result<f64> {
        let vocab = scorer.vocabulary();
        let k = vocab
            .candidate_ids()
            .iter()
            .position(|&id| vocab.token(id) == self.token)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("token {:?} not a candidate", self.token))
            })?;
        let q = MaskQuery::new(self.context.clone(), self.context.clone(), self.mask_index)?;
        let q_prime = MaskQuery::new(
            self.context_prime.clone(),
            self.context_prime.clone(),
            self.mask_index,
        )?;
        let p = candidate_distribution(scorer, &q, eps, clip, variant)?;
        let p_prime = candidate_distribution(scorer, &q_prime, eps, clip, variant)?;
        Ok(p.values()[k].ln() - p_prime.values()[k].ln())
    }
}

fn context_for(mut index: u64, length: usize, subset: &[String]) -> Vec<String> {
    let base = subset.len() as u64;
    let mut ctx = vec![String::new(); length];
    for slot in ctx.iter_mut().rev() {
        *slot = subset[(index % base) as usize].clone();
        index /= base;
    }
    ctx
}

/// Per (position, token) extremes of ln p over a set of contexts.
#[derive(Clone)]
struct Extremes {
    // (value, context index)
    hi: Vec<(f64, u64)>,
    lo: Vec<(f64, u64)>,
}

impl Extremes {
    fn new(slots: usize) -> Self {
        Self {
            hi: vec![(f64::NEG_INFINITY, u64::MAX); slots],
            lo: vec![(f64::INFINITY, u64::MAX); slots],
        }
    }

    fn observe(&mut self, slot: usize, value: f64, ctx: u64) {
        self.observe_hi(slot, value, ctx);
        self.observe_lo(slot, value, ctx);
    }

    fn merge(mut self, other: Self) -> Self {
        for slot in 0..self.hi.len() {
            let (v, c) = other.hi[slot];
            if c != u64::MAX {
                self.observe_hi(slot, v, c);
            }
            let (v, c) = other.lo[slot];
            if c != u64::MAX {
                self.observe_lo(slot, v, c);
            }
        }
        self
    }

    // ties keep the lower context index, so chunking cannot change the witness
    fn observe_hi(&mut self, slot: usize, value: f64, ctx: u64) {
        if value > self.hi[slot].0 || (value == self.hi[slot].0 && ctx < self.hi[slot].1) {
            self.hi[slot] = (value, ctx);
        }
    }

    fn observe_lo(&mut self, slot: usize, value: f64, ctx: u64) {
        if value < self.lo[slot].0 || (value == self.lo[slot].0 && ctx < self.lo[slot].1) {
            self.lo[slot] = (value, ctx);
        }
    }
}

/// Exhaustively certify the ε bound over all equal-length contexts drawn
/// from `vocab_subset`.
pub fn verify_ldp_exhaustive(
    scorer: &dyn Scorer,
    eps: Epsilon,
    clip: &ClipRange,
    context_length: usize,
    vocab_subset: &[String],
    variant: MechanismVariant,
) -> Result<LdpReport> {
    if context_length == 0 || vocab_subset.is_empty() {
        return Err(Error::InvalidArgument(
            "need a non-empty vocabulary subset and context length".into(),
        ));
    }
    let contexts = (vocab_subset.len() as u128)
        .checked_pow(context_length as u32)
        .unwrap_or(u128::MAX);
    let pairs = contexts.saturating_mul(contexts);
    if pairs > MAX_CONTEXT_PAIRS {
        return Err(Error::StateSpaceTooLarge {
            pairs,
            limit: MAX_CONTEXT_PAIRS,
        });
    }
    let contexts = contexts as u64;
    if !scorer.is_deterministic() {
        return Err(Error::NonDeterministicScorer);
    }
    let probe_ctx = context_for(0, context_length, vocab_subset);
    let probe = MaskQuery::new(probe_ctx.clone(), probe_ctx, 0)?;
    let bits = |l: crate::mechanism::LogitVector| {
        l.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    if bits(scorer.score_masked(&probe)?) != bits(scorer.score_masked(&probe)?) {
        return Err(Error::NonDeterministicScorer);
    }

    let candidates = scorer.vocabulary().candidate_ids().len();
    let slots = context_length * candidates;
    let extremes = (0..contexts)
        .into_par_iter()
        .map(|c| -> Result<Extremes> {
            let ctx = context_for(c, context_length, vocab_subset);
            let mut local = Extremes::new(slots);
            for m in 0..context_length {
                let q = MaskQuery::new(ctx.clone(), ctx.clone(), m)?;
                let p = candidate_distribution(scorer, &q, eps, clip, variant)?;
                for (k, &pk) in p.values().iter().enumerate() {
                    local.observe(m * candidates + k, pk.ln(), c);
                }
            }
            Ok(local)
        })
        .try_reduce(|| Extremes::new(slots), |a, b| Ok(a.merge(b)))?;

    let mut max_log_ratio = 0.0f64;
    let mut witness = None;
    for slot in 0..slots {
        let ((hi, c_hi), (lo, c_lo)) = (extremes.hi[slot], extremes.lo[slot]);
        let ratio = hi - lo;
        if ratio > max_log_ratio {
            max_log_ratio = ratio;
            let vocab = scorer.vocabulary();
            witness = Some(Witness {
                context: context_for(c_hi, context_length, vocab_subset),
                context_prime: context_for(c_lo, context_length, vocab_subset),
                mask_index: slot / candidates,
                token: vocab
                    .token(vocab.candidate_ids()[slot % candidates])
                    .to_string(),
            });
        }
    }

    Ok(LdpReport {
        epsilon_claimed: eps.value(),
        max_log_ratio,
        witness,
        contexts,
        pairs_checked: contexts * contexts,
        variant,
        pass: max_log_ratio <= eps.value() + LOG_RATIO_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub draws: u64,
    pub tv_distance: f64,
    pub chi_square_stat: f64,
    pub degrees_of_freedom: usize,
}

/// Compare empirical frequencies of `draws` mechanism samples to the
/// analytic output distribution.
pub fn monte_carlo_check(
    logits: &LogitVector,
    eps: Epsilon,
    clip: &ClipRange,
    draws: u64,
    seed: u64,
) -> Result<MonteCarloReport> {
    if draws < MIN_MC_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "monte carlo check needs at least {MIN_MC_DRAWS} draws, got {draws}"
        )));
    }
    let p = output_distribution(logits, eps, clip);
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u64; p.len()];
    for _ in 0..draws {
        counts[p.sample(&mut rng)] += 1;
    }
    let n = draws as f64;
    let tv_distance = 0.5
        * counts
            .iter()
            .zip(p.values())
            .map(|(&c, &q)| (c as f64 / n - q).abs())
            .sum::<f64>();
    let mut chi_square_stat = 0.0;
    let mut bins = 0usize;
    for (&c, &q) in counts.iter().zip(p.values()) {
        let expected = n * q;
        if expected > 0.0 {
            chi_square_stat += (c as f64 - expected).powi(2) / expected;
            bins += 1;
        }
    }
    Ok(MonteCarloReport {
        draws,
        tv_distance,
        chi_square_stat,
        degrees_of_freedom: bins.saturating_sub(1),
    })
}
