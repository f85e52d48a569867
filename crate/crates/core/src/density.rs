//! Monte-Carlo estimation of working-program densities.
//!
//! Densities are measured over length-conditioned random programs: a node
//! count is drawn from a [`LengthDistribution`], then the ordinary generator
//! is rejection-sampled until it produces a tree of that count. The
//! distribution itself comes from [`working_length_distribution`], which
//! evolves a batch of ascending sorters, histograms their node counts, and
//! applies one fixed-point blending pass so the lengths are approximately
//! self-consistent with what evolution actually produces.
//!
//! Estimates stop once `min_hits` successes have accumulated, and carry a
//! Wilson 95% confidence interval.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolution::{run_phase1, EvolutionConfig};
use crate::fitness::{eval_pair, is_f1_working, is_f2_working, make_eval_set, EvalSet};
use crate::program::{random_program, Program, MAX_DEPTH, MAX_NODE_COUNT};
use crate::{derive_seed, rng_for};

/// Attempts at one target node count before the target is redrawn.
pub const MAX_REJECTIONS_PER_TARGET: usize = 10_000;

/// Fixed sampling batch size. Workers split batches internally, but hit
/// counts merge after each whole batch, so the stopping point (and therefore
/// the estimate) does not depend on the worker count.
pub const SAMPLE_BATCH: u64 = 1024;

/// Default cap on conditioned draws per estimate.
pub const DEFAULT_SAMPLE_BUDGET: u64 = 200_000_000;

/// Default conditioned draws allowed per blending pass in
/// [`working_length_distribution`].
const BLEND_SAMPLE_BUDGET: u64 = 50_000_000;

#[derive(Debug, thiserror::Error)]
pub enum DensityError {
    #[error("evolutions produced {got} working programs, needed {needed}")]
    NotEnoughWorking { needed: usize, got: usize },
    #[error(
        "sample budget exhausted at {} draws with {} of {min_hits} hits",
        partial.raw_samples,
        partial.hits
    )]
    SampleBudgetExceeded {
        min_hits: u64,
        partial: DensityEstimate,
    },
    #[error("length distribution weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("length distribution has weight at node count {count}, outside 1..={max}", max = MAX_NODE_COUNT)]
    BadSupport { count: usize },
    #[error("length distribution is empty")]
    Empty,
}

/// Normalized histogram over program node counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    // Index is the node count; index 0 stays zero.
    weights: Vec<f64>,
}

impl LengthDistribution {
    /// Histogram of observed node counts, normalized.
    pub fn from_counts(counts: &[usize]) -> LengthDistribution {
        assert!(!counts.is_empty(), "cannot build a distribution from no observations");
        let mut weights = vec![0.0; MAX_NODE_COUNT + 1];
        for &c in counts {
            assert!(
                (1..=MAX_NODE_COUNT).contains(&c),
                "node count {c} outside 1..={MAX_NODE_COUNT}"
            );
            weights[c] += 1.0;
        }
        let n = counts.len() as f64;
        for w in &mut weights {
            *w /= n;
        }
        LengthDistribution { weights }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<LengthDistribution, DensityError> {
        let mut padded = weights;
        padded.resize(MAX_NODE_COUNT + 1, 0.0);
        let dist = LengthDistribution { weights: padded };
        dist.validate()?;
        Ok(dist)
    }

    pub fn point_mass(count: usize) -> LengthDistribution {
        LengthDistribution::from_counts(&[count])
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        if self.weights.len() > MAX_NODE_COUNT + 1 {
            return Err(DensityError::BadSupport {
                count: self.weights.len() - 1,
            });
        }
        if self.weights.first().copied().unwrap_or(0.0) != 0.0 {
            return Err(DensityError::BadSupport { count: 0 });
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return Err(DensityError::Empty);
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(DensityError::Empty);
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DensityError::NotNormalized { sum });
        }
        Ok(())
    }

    pub fn weight(&self, count: usize) -> f64 {
        self.weights.get(count).copied().unwrap_or(0.0)
    }

    /// Counts with non-zero weight, ascending.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, _)| c)
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(c, &w)| c as f64 * w)
            .sum()
    }

    /// Equal-weight blend of two distributions.
    pub fn blend(&self, other: &LengthDistribution) -> LengthDistribution {
        let len = self.weights.len().max(other.weights.len());
        let weights = (0..len)
            .map(|c| 0.5 * self.weight(c) + 0.5 * other.weight(c))
            .collect();
        LengthDistribution { weights }
    }

    /// Draws a node count by inverse CDF.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 1;
        for (c, &w) in self.weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = c;
            if x < acc {
                return c;
            }
        }
        // Rounding can leave acc fractionally below 1; fall back to the
        // largest supported count.
        last
    }
}

/// Draws a program whose node count matches a target drawn from `dist`.
///
/// Targets that fail [`MAX_REJECTIONS_PER_TARGET`] generator attempts are
/// redrawn, so a hard-to-reach count cannot livelock the sampler. Every
/// count in 1..=63 is reachable at depth 6, but the reachable counts differ
/// wildly in probability under the generator.
pub fn sample_conditioned(dist: &LengthDistribution, v: usize, rng: &mut impl Rng) -> Program {
    loop {
        let target = dist.sample(rng);
        for _ in 0..MAX_REJECTIONS_PER_TARGET {
            let p = random_program(v, MAX_DEPTH, rng);
            if p.node_count() == target {
                return p;
            }
        }
    }
}

/// Point estimate with its sampling meta-data.
///
/// For plain densities `samples` counts conditioned draws. For the
/// conditional density it counts the conditioning set (f1-working draws),
/// while `raw_samples` always counts every conditioned draw made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub predicate_id: String,
    pub hits: u64,
    pub samples: u64,
    pub raw_samples: u64,
    pub density: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityConfig {
    pub v: usize,
    pub min_hits: u64,
    pub sample_budget: u64,
    pub seed: u64,
}

impl DensityConfig {
    pub fn new(v: usize, seed: u64) -> DensityConfig {
        DensityConfig {
            v,
            min_hits: 100,
            sample_budget: DEFAULT_SAMPLE_BUDGET,
            seed,
        }
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(hits: u64, samples: u64) -> (f64, f64) {
    if samples == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96_f64;
    let n = samples as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn make_estimate(id: &str, hits: u64, samples: u64, raw_samples: u64) -> DensityEstimate {
    let (ci_low, ci_high) = wilson_interval(hits, samples);
    DensityEstimate {
        predicate_id: id.to_string(),
        hits,
        samples,
        density: if samples == 0 {
            0.0
        } else {
            hits as f64 / samples as f64
        },
        raw_samples,
        ci_low,
        ci_high,
    }
}

/// Samples conditioned programs until `predicate` has held `min_hits` times.
///
/// Each sampled item gets its own rng derived from `(seed, global index)`
/// and its own fresh [`EvalSet`], so the estimate is reproducible for a
/// given seed no matter how the batches are split across workers. Stopping
/// is checked at batch boundaries only; `samples` is always a whole number
/// of batches.
pub fn estimate_density_with<P>(
    predicate_id: &str,
    predicate: P,
    dist: &LengthDistribution,
    cfg: &DensityConfig,
) -> Result<DensityEstimate, DensityError>
where
    P: Fn(&Program, &EvalSet, &mut ChaCha8Rng) -> bool + Sync,
{
    assert!(cfg.min_hits >= 1, "min_hits must be at least 1");
    dist.validate().expect("invalid length distribution");
    let mut hits = 0u64;
    let mut samples = 0u64;
    loop {
        let batch_hits: u64 = (samples..samples + SAMPLE_BATCH)
            .into_par_iter()
            .map(|idx| {
                let mut rng = rng_for(cfg.seed, idx);
                let p = sample_conditioned(dist, cfg.v, &mut rng);
                let set = make_eval_set(&mut rng);
                u64::from(predicate(&p, &set, &mut rng))
            })
            .sum();
        hits += batch_hits;
        samples += SAMPLE_BATCH;
        if hits >= cfg.min_hits {
            return Ok(make_estimate(predicate_id, hits, samples, samples));
        }
        if samples >= cfg.sample_budget {
            return Err(DensityError::SampleBudgetExceeded {
                min_hits: cfg.min_hits,
                partial: make_estimate(predicate_id, hits, samples, samples),
            });
        }
    }
}

/// Density of programs sorting ascending (f1-working).
pub fn estimate_d1(
    dist: &LengthDistribution,
    cfg: &DensityConfig,
) -> Result<DensityEstimate, DensityError> {
    let v = cfg.v;
    estimate_density_with("f1", move |p, set, _| is_f1_working(p, set, v), dist, cfg)
}

/// Density of programs sorting in both directions (f2-working).
pub fn estimate_d2(
    dist: &LengthDistribution,
    cfg: &DensityConfig,
) -> Result<DensityEstimate, DensityError> {
    let v = cfg.v;
    estimate_density_with("f2", move |p, set, _| is_f2_working(p, set, v), dist, cfg)
}

/// Generic engine for conditional densities.
///
/// `classify` returns (in conditioning set, counted hit) per sample; a hit
/// outside the conditioning set violates containment and panics. Stops once
/// hits reach `min_hits`; the returned density is hits over conditioning-set
/// size, not over raw draws.
pub fn estimate_conditional_with<C>(
    predicate_id: &str,
    classify: C,
    dist: &LengthDistribution,
    cfg: &DensityConfig,
) -> Result<DensityEstimate, DensityError>
where
    C: Fn(&Program, &EvalSet, &mut ChaCha8Rng) -> (bool, bool) + Sync,
{
    assert!(cfg.min_hits >= 1, "min_hits must be at least 1");
    dist.validate().expect("invalid length distribution");
    let mut hits = 0u64;
    let mut base = 0u64;
    let mut raw = 0u64;
    loop {
        let (batch_base, batch_hits) = (raw..raw + SAMPLE_BATCH)
            .into_par_iter()
            .map(|idx| {
                let mut rng = rng_for(cfg.seed, idx);
                let p = sample_conditioned(dist, cfg.v, &mut rng);
                let set = make_eval_set(&mut rng);
                let (in_base, hit) = classify(&p, &set, &mut rng);
                assert!(
                    in_base || !hit,
                    "containment violated: hit outside the conditioning set"
                );
                (u64::from(in_base), u64::from(hit))
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        base += batch_base;
        hits += batch_hits;
        raw += SAMPLE_BATCH;
        if hits >= cfg.min_hits {
            return Ok(make_estimate(predicate_id, hits, base, raw));
        }
        if raw >= cfg.sample_budget {
            return Err(DensityError::SampleBudgetExceeded {
                min_hits: cfg.min_hits,
                partial: make_estimate(predicate_id, hits, base, raw),
            });
        }
    }
}

/// Density of f2-working programs within the f1-working ones.
///
/// For every f1-working draw the exact score pair is recomputed: the
/// ascending score must be exactly 1, re-checking the early-exit working
/// test against the full evaluation, and the sample is a hit when the
/// dual-direction score is exactly 1 as well.
pub fn estimate_conditional_density(
    dist: &LengthDistribution,
    cfg: &DensityConfig,
) -> Result<DensityEstimate, DensityError> {
    let v = cfg.v;
    estimate_conditional_with(
        "f2|f1",
        move |p, set, _| {
            if !is_f1_working(p, set, v) {
                return (false, false);
            }
            let (asc, desc) = eval_pair(p, set, v);
            assert_eq!(asc, 1.0, "early-exit working test disagrees with full evaluation");
            (true, (asc - desc) / 2.0 == 1.0)
        },
        dist,
        cfg,
    )
}

/// Builds the approximately self-consistent length distribution for `cfg.v`.
///
/// Runs phase-1 evolutions (seeded from `cfg.seed`) until `n_working`
/// ascending sorters have been found, taking the first working program of
/// each evolution; up to `4 * n_working` evolutions are attempted. Then for
/// each of `iterations` blending passes, programs are sampled under the
/// current distribution, the node counts of the f1-working ones are
/// histogrammed, and the two distributions are blended equally.
pub fn working_length_distribution(
    cfg: &EvolutionConfig,
    n_working: usize,
    iterations: usize,
) -> Result<LengthDistribution, DensityError> {
    assert!(n_working >= 30, "need at least 30 working programs");
    let evo_stream = derive_seed(cfg.seed, 1);
    let blend_stream = derive_seed(cfg.seed, 2);

    let mut counts = Vec::with_capacity(n_working);
    let max_attempts = 4 * n_working;
    for i in 0..max_attempts {
        if counts.len() == n_working {
            break;
        }
        let mut ecfg = cfg.clone();
        ecfg.seed = derive_seed(evo_stream, i as u64);
        let outcome = run_phase1(&ecfg);
        if let Some(p) = outcome.first_working() {
            counts.push(p.node_count());
        }
    }
    if counts.len() < n_working {
        return Err(DensityError::NotEnoughWorking {
            needed: n_working,
            got: counts.len(),
        });
    }
    let mut dist = LengthDistribution::from_counts(&counts);

    for pass in 0..iterations {
        let pass_stream = derive_seed(blend_stream, pass as u64);
        let mut working_counts = Vec::with_capacity(n_working);
        let mut idx = 0u64;
        while working_counts.len() < n_working {
            if idx >= BLEND_SAMPLE_BUDGET {
                return Err(DensityError::NotEnoughWorking {
                    needed: n_working,
                    got: working_counts.len(),
                });
            }
            let mut rng = rng_for(pass_stream, idx);
            let p = sample_conditioned(&dist, cfg.v, &mut rng);
            let set = make_eval_set(&mut rng);
            if is_f1_working(&p, &set, cfg.v) {
                working_counts.push(p.node_count());
            }
            idx += 1;
        }
        dist = dist.blend(&LengthDistribution::from_counts(&working_counts));
    }
    Ok(dist)
}
