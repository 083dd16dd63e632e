//! Greedy row selection: the threshold ε_k, the index set I_k and sampling
//! within it.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::LinearSystem;

/// `‖r‖²` at or below this is treated as an exactly solved system.
pub const RESIDUAL_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("residual norm squared {0:e} is below the underflow guard; the system is solved")]
    ConvergedResidual(f64),
    #[error("greedy index set is empty")]
    EmptyIndexSet,
    #[error("unknown probability rule {0:?} (expected residual, uniform or argmax)")]
    UnknownRule(String),
}

/// How `i_k` is drawn from `I_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbabilityRule {
    /// `P(i) = |r_i|² / Σ_{j∈I} |r_j|²`.
    #[default]
    #[serde(rename = "residual")]
    ResidualWeighted,
    Uniform,
    /// Smallest index attaining the largest `|r_i|² / ‖a_i‖²`.
    #[serde(rename = "argmax")]
    DeterministicArgmax,
}

impl ProbabilityRule {
    pub const ALL: [ProbabilityRule; 3] = [
        ProbabilityRule::ResidualWeighted,
        ProbabilityRule::Uniform,
        ProbabilityRule::DeterministicArgmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbabilityRule::ResidualWeighted => "residual",
            ProbabilityRule::Uniform => "uniform",
            ProbabilityRule::DeterministicArgmax => "argmax",
        }
    }

    /// Probability assigned to each member of `set`, in order.
    pub fn probabilities(self, set: &[usize], r: &[f64], row_sq_norms: &[f64]) -> Vec<f64> {
        match self {
            ProbabilityRule::ResidualWeighted => {
                let total: f64 = set.iter().map(|&i| r[i] * r[i]).sum();
                set.iter().map(|&i| r[i] * r[i] / total).collect()
            }
            ProbabilityRule::Uniform => vec![1.0 / set.len() as f64; set.len()],
            ProbabilityRule::DeterministicArgmax => {
                let pick = argmax_in(set, r, row_sq_norms);
                set.iter()
                    .map(|&i| if i == pick { 1.0 } else { 0.0 })
                    .collect()
            }
        }
    }
}

impl fmt::Display for ProbabilityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbabilityRule {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|rule| rule.name() == s)
            .ok_or_else(|| SelectionError::UnknownRule(s.to_string()))
    }
}

/// Threshold schedule `Γ_0 = ‖A‖_F²`, `Γ_1 = γ1`, `Γ_k = γ2` for `k >= 2`,
/// plus the rule used inside `I_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyContext {
    pub frob_sq: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub rule: ProbabilityRule,
}

impl GreedyContext {
    pub fn new(sys: &LinearSystem, rule: ProbabilityRule) -> Self {
        let (gamma1, gamma2) = sys.gammas();
        Self {
            frob_sq: sys.frob_sq(),
            gamma1,
            gamma2,
            rule,
        }
    }

    pub fn gamma_k(&self, k: usize) -> f64 {
        match k {
            0 => self.frob_sq,
            1 => self.gamma1,
            _ => self.gamma2,
        }
    }
}

/// What one greedy selection saw and chose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub epsilon_k: f64,
    pub index_set_size: usize,
    pub chosen_index: usize,
    pub gamma_used: f64,
    /// `max_i |r_i|² / ‖a_i‖²` at selection time.
    pub max_ratio: f64,
    /// `‖r‖²` at selection time.
    pub res_norm_sq: f64,
}

/// One pass over the residual: `‖r‖²` and the largest scaled entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualScan {
    pub res_norm_sq: f64,
    pub max_ratio: f64,
    /// Smallest index attaining `max_ratio`.
    pub argmax: usize,
}

pub fn scan_residual(r: &[f64], row_sq_norms: &[f64]) -> ResidualScan {
    let mut res_norm_sq = 0.0;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut argmax = 0;
    for (i, (&ri, &ni)) in r.iter().zip(row_sq_norms).enumerate() {
        let sq = ri * ri;
        res_norm_sq += sq;
        let ratio = sq / ni;
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax = i;
        }
    }
    ResidualScan {
        res_norm_sq,
        max_ratio,
        argmax,
    }
}

impl ResidualScan {
    fn ensure_unsolved(&self) -> Result<(), SelectionError> {
        if self.res_norm_sq <= RESIDUAL_UNDERFLOW {
            Err(SelectionError::ConvergedResidual(self.res_norm_sq))
        } else {
            Ok(())
        }
    }

    /// `ε = ½ (max_ratio / ‖r‖² + 1/Γ)`.
    pub fn epsilon(&self, gamma: f64) -> f64 {
        0.5 * (self.max_ratio / self.res_norm_sq + 1.0 / gamma)
    }

    /// `ε ‖r‖² = ½ (max_ratio + ‖r‖²/Γ)`, the row-scaled cutoff for `|r_i|²`.
    ///
    /// Clamped to `max_ratio`, which the exact value never exceeds, so the
    /// argmax survives rounding.
    fn cutoff(&self, gamma: f64) -> f64 {
        (0.5 * (self.max_ratio + self.res_norm_sq / gamma)).min(self.max_ratio)
    }
}

/// Greedy threshold with a general `Γ`.
pub fn epsilon_k(r: &[f64], row_sq_norms: &[f64], gamma: f64) -> Result<f64, SelectionError> {
    let scan = scan_residual(r, row_sq_norms);
    scan.ensure_unsolved()?;
    Ok(scan.epsilon(gamma))
}

/// The original greedy threshold, `Γ = ‖A‖_F²` at every iteration.
pub fn grk_epsilon(r: &[f64], row_sq_norms: &[f64], frob_sq: f64) -> Result<f64, SelectionError> {
    epsilon_k(r, row_sq_norms, frob_sq)
}

/// `I = { i : |r_i|² >= ε ‖r‖² ‖a_i‖² }`, in increasing index order.
pub fn build_index_set(
    r: &[f64],
    row_sq_norms: &[f64],
    eps: f64,
) -> Result<Vec<usize>, SelectionError> {
    let scan = scan_residual(r, row_sq_norms);
    scan.ensure_unsolved()?;
    let cutoff = (eps * scan.res_norm_sq).min(scan.max_ratio);
    let mut set = Vec::new();
    collect_index_set(r, row_sq_norms, cutoff, &mut set);
    if set.is_empty() {
        return Err(SelectionError::EmptyIndexSet);
    }
    Ok(set)
}

fn collect_index_set(r: &[f64], row_sq_norms: &[f64], cutoff: f64, out: &mut Vec<usize>) {
    out.clear();
    out.extend(
        r.iter()
            .zip(row_sq_norms)
            .enumerate()
            .filter(|(_, (&ri, &ni))| ri * ri >= cutoff * ni)
            .map(|(i, _)| i),
    );
}

fn argmax_in(set: &[usize], r: &[f64], row_sq_norms: &[f64]) -> usize {
    let mut best = set[0];
    let mut best_ratio = f64::NEG_INFINITY;
    for &i in set {
        let ratio = r[i] * r[i] / row_sq_norms[i];
        if ratio > best_ratio {
            best_ratio = ratio;
            best = i;
        }
    }
    best
}

/// Draws one member of `set` according to `rule`.
pub fn sample_index<R: Rng + ?Sized>(
    set: &[usize],
    r: &[f64],
    row_sq_norms: &[f64],
    rule: ProbabilityRule,
    rng: &mut R,
) -> Result<usize, SelectionError> {
    if set.is_empty() {
        return Err(SelectionError::EmptyIndexSet);
    }
    if set.len() == 1 {
        return Ok(set[0]);
    }
    Ok(match rule {
        ProbabilityRule::ResidualWeighted => {
            let total: f64 = set.iter().map(|&i| r[i] * r[i]).sum();
            let mut target = rng.random::<f64>() * total;
            let mut pick = *set.last().expect("nonempty");
            for &i in set {
                let w = r[i] * r[i];
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        }
        ProbabilityRule::Uniform => set[rng.random_range(0..set.len())],
        ProbabilityRule::DeterministicArgmax => argmax_in(set, r, row_sq_norms),
    })
}

/// Seeded random source with an optional forced index sequence.
///
/// Forced indices are consumed first, one per draw; once exhausted, draws
/// fall back to the seeded generator.
#[derive(Debug, Clone)]
pub struct IndexSource {
    rng: ChaCha8Rng,
    forced: VecDeque<usize>,
}

impl IndexSource {
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            forced: VecDeque::new(),
        }
    }

    pub fn forced(indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
            forced: indices.into_iter().collect(),
        }
    }

    /// Queues `indices` ahead of the seeded draws.
    pub fn with_forced(mut self, indices: impl IntoIterator<Item = usize>) -> Self {
        self.forced.extend(indices);
        self
    }

    pub fn next_forced(&mut self) -> Option<usize> {
        self.forced.pop_front()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Full greedy selection step: scan, threshold, index set, draw.
///
/// `scratch` holds `I_k` afterwards. A forced index from `source` overrides
/// the draw (but `I_k` is still built and recorded).
pub fn greedy_select(
    r: &[f64],
    row_sq_norms: &[f64],
    gamma: f64,
    rule: ProbabilityRule,
    source: &mut IndexSource,
    scratch: &mut Vec<usize>,
) -> Result<SelectionRecord, SelectionError> {
    let scan = scan_residual(r, row_sq_norms);
    scan.ensure_unsolved()?;
    collect_index_set(r, row_sq_norms, scan.cutoff(gamma), scratch);
    if scratch.is_empty() {
        return Err(SelectionError::EmptyIndexSet);
    }
    let chosen_index = match source.next_forced() {
        Some(i) => i,
        None => sample_index(scratch, r, row_sq_norms, rule, source.rng())?,
    };
    Ok(SelectionRecord {
        epsilon_k: scan.epsilon(gamma),
        index_set_size: scratch.len(),
        chosen_index,
        gamma_used: gamma,
        max_ratio: scan.max_ratio,
        res_norm_sq: scan.res_norm_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const R0: [f64; 3] = [-1.0, -2.0, -3.0];
    const R1: [f64; 3] = [0.5, -0.5, 0.0];
    const NORMS: [f64; 3] = [1.0, 1.0, 2.0];

    fn ctx() -> GreedyContext {
        GreedyContext {
            frob_sq: 4.0,
            gamma1: 3.0,
            gamma2: 2.0,
            rule: ProbabilityRule::ResidualWeighted,
        }
    }

    #[test]
    fn gamma_schedule() {
        let c = ctx();
        assert_eq!(c.gamma_k(0), 4.0);
        assert_eq!(c.gamma_k(1), 3.0);
        assert_eq!(c.gamma_k(7), 2.0);
    }

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_k(&R0, &NORMS, 4.0).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!((epsilon_k(&R1, &NORMS, 3.0).unwrap() - 5.0 / 12.0).abs() < 1e-15);
        let r = [0.3; 5];
        assert!((epsilon_k(&r, &[1.0; 5], 5.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(
            epsilon_k(&[0.0; 3], &NORMS, 4.0),
            Err(SelectionError::ConvergedResidual(_))
        ));
    }

    #[test]
    fn grk_epsilon_examples() {
        assert!((grk_epsilon(&R0, &NORMS, 4.0).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!((grk_epsilon(&R1, &NORMS, 4.0).unwrap() - 3.0 / 8.0).abs() < 1e-15);
        assert!((grk_epsilon(&[2.0; 4], &[1.0; 4], 4.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn index_set_examples() {
        assert_eq!(build_index_set(&R0, &NORMS, 2.0 / 7.0).unwrap(), vec![1, 2]);
        assert_eq!(
            build_index_set(&R1, &NORMS, 5.0 / 12.0).unwrap(),
            vec![0, 1]
        );
        assert_eq!(
            build_index_set(&[0.0, 0.0, 1e-3], &NORMS, 0.9).unwrap(),
            vec![2]
        );
    }

    #[test]
    fn index_set_survives_equal_ratio_rounding() {
        // All ratios equal: the exact cutoff equals every ratio.
        for v in [0.1, 0.3, 1.0 / 3.0, 7.77e-9] {
            let r = vec![v; 7];
            let mut source = IndexSource::seeded(1);
            let mut set = Vec::new();
            let rec = greedy_select(
                &r,
                &[1.0; 7],
                7.0,
                ProbabilityRule::Uniform,
                &mut source,
                &mut set,
            )
            .unwrap();
            assert_eq!(rec.index_set_size, 7);
        }
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for rule in ProbabilityRule::ALL {
            assert_eq!(sample_index(&[2], &R0, &NORMS, rule, &mut rng).unwrap(), 2);
        }
        assert_eq!(
            sample_index(
                &[0, 1],
                &R1,
                &NORMS,
                ProbabilityRule::DeterministicArgmax,
                &mut rng
            )
            .unwrap(),
            0
        );
        assert_eq!(
            sample_index(&[], &R1, &NORMS, ProbabilityRule::Uniform, &mut rng),
            Err(SelectionError::EmptyIndexSet)
        );
    }

    #[test]
    fn residual_weighted_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 200_000;
        let hits = (0..draws)
            .filter(|_| {
                sample_index(
                    &[1, 2],
                    &R0,
                    &NORMS,
                    ProbabilityRule::ResidualWeighted,
                    &mut rng,
                )
                .unwrap()
                    == 1
            })
            .count();
        let freq = hits as f64 / draws as f64;
        // binomial std ≈ 0.001
        assert!((freq - 4.0 / 13.0).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = [0usize; 3];
        for _ in 0..60_000 {
            counts[sample_index(&[0, 1, 2], &R0, &NORMS, ProbabilityRule::Uniform, &mut rng)
                .unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 60_000.0 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn probabilities_normalize() {
        for rule in ProbabilityRule::ALL {
            let p = rule.probabilities(&[1, 2], &R0, &NORMS);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let p = ProbabilityRule::ResidualWeighted.probabilities(&[1, 2], &R0, &NORMS);
        assert!((p[0] - 4.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn forced_indices_override_then_fall_back() {
        let mut source = IndexSource::forced([2]);
        let mut set = Vec::new();
        let rec = greedy_select(
            &R1,
            &NORMS,
            3.0,
            ProbabilityRule::DeterministicArgmax,
            &mut source,
            &mut set,
        )
        .unwrap();
        assert_eq!(rec.chosen_index, 2);
        assert_eq!(set, vec![0, 1]);
        let rec = greedy_select(
            &R1,
            &NORMS,
            3.0,
            ProbabilityRule::DeterministicArgmax,
            &mut source,
            &mut set,
        )
        .unwrap();
        assert_eq!(rec.chosen_index, 0);
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in ProbabilityRule::ALL {
            assert_eq!(rule.name().parse::<ProbabilityRule>().unwrap(), rule);
        }
        assert!("greedy".parse::<ProbabilityRule>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn residual_and_norms() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (3usize..40).prop_flat_map(|m| {
                (
                    prop::collection::vec(-5.0f64..5.0, m),
                    prop::collection::vec(0.1f64..10.0, m),
                )
            })
        }

        proptest! {
            #[test]
            fn index_set_contains_every_argmax((r, norms) in residual_and_norms(), gamma_scale in 0.3f64..1.0) {
                prop_assume!(r.iter().any(|v| v.abs() > 1e-6));
                let frob: f64 = norms.iter().sum();
                let gamma = frob * gamma_scale;
                let mut source = IndexSource::seeded(0);
                let mut set = Vec::new();
                let rec = greedy_select(&r, &norms, gamma, ProbabilityRule::ResidualWeighted, &mut source, &mut set).unwrap();
                for i in 0..r.len() {
                    if r[i] * r[i] / norms[i] == rec.max_ratio {
                        prop_assert!(set.contains(&i));
                    }
                }
                prop_assert!(set.contains(&rec.chosen_index));
                let grk = grk_epsilon(&r, &norms, frob).unwrap();
                if gamma < frob {
                    prop_assert!(rec.epsilon_k > grk);
                }
            }

            #[test]
            fn residual_weighted_probabilities_sum_to_one((r, norms) in residual_and_norms()) {
                prop_assume!(r.iter().any(|v| v.abs() > 1e-6));
                let frob: f64 = norms.iter().sum();
                let eps = epsilon_k(&r, &norms, frob).unwrap();
                let set = build_index_set(&r, &norms, eps).unwrap();
                let p = ProbabilityRule::ResidualWeighted.probabilities(&set, &r, &norms);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-15 * set.len() as f64);
            }
        }
    }
}
