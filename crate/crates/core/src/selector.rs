//! Query selection: `Φ(x) = φ_b(x) · q(x)^β`, ranked in the log domain.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::learner::{LabeledSet, Provenance};
use crate::numerics::Tensor;
use crate::par::Execution;
use crate::teacher::{DensityCalibration, VaeModel};
use crate::{Error, Result};

/// Hidden ground truth for one pool sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolLabel {
    Class(usize),
    Outlier,
}

impl PoolLabel {
    pub fn class(self) -> Option<usize> {
        match self {
            PoolLabel::Class(c) => Some(c),
            PoolLabel::Outlier => None,
        }
    }

    pub fn is_outlier(self) -> bool {
        self == PoolLabel::Outlier
    }
}

impl std::fmt::Display for PoolLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoolLabel::Class(c) => write!(f, "{c}"),
            PoolLabel::Outlier => f.write_str("OUTLIER"),
        }
    }
}

/// Unlabeled candidates with hidden labels and query bookkeeping.
///
/// `queried` marks samples the selector has picked; `revealed` marks samples
/// whose label the oracle has already answered for.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    features: Tensor,
    labels: Vec<PoolLabel>,
    ids: Vec<u64>,
    queried: Vec<bool>,
    revealed: Vec<bool>,
}

impl Pool {
    pub fn new(features: Tensor, labels: Vec<PoolLabel>, ids: Vec<u64>) -> Result<Self> {
        if features.shape().len() != 2
            || features.rows() != labels.len()
            || ids.len() != labels.len()
        {
            return Err(Error::contract(format!(
                "pool features {:?} with {} labels and {} ids",
                features.shape(),
                labels.len(),
                ids.len()
            )));
        }
        let m = labels.len();
        Ok(Self {
            features,
            labels,
            ids,
            queried: vec![false; m],
            revealed: vec![false; m],
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[PoolLabel] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn is_queried(&self, index: usize) -> bool {
        self.queried[index]
    }

    pub fn is_revealed(&self, index: usize) -> bool {
        self.revealed[index]
    }

    pub fn unqueried(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.queried[i]).collect()
    }

    pub fn num_unqueried(&self) -> usize {
        self.queried.iter().filter(|q| !**q).count()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_outlier()).count()
    }

    pub fn mark_queried(&mut self, index: usize) -> Result<()> {
        if self.queried[index] {
            return Err(Error::contract(format!(
                "pool sample {} selected twice",
                self.ids[index]
            )));
        }
        self.queried[index] = true;
        Ok(())
    }

    pub(crate) fn mark_revealed(&mut self, index: usize) -> Result<()> {
        if self.revealed[index] {
            return Err(Error::contract(format!(
                "oracle already answered for pool sample {}",
                self.ids[index]
            )));
        }
        self.revealed[index] = true;
        self.queried[index] = true;
        Ok(())
    }

    /// Features of the listed pool indices.
    pub fn rows(&self, indices: &[usize]) -> Tensor {
        self.features.select_rows(indices)
    }
}

/// One row of the query ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBreakdown {
    pub pool_index: usize,
    pub phi_b: f64,
    pub q: f64,
    pub beta: f64,
    /// `ln φ_b + β ln q`; `-∞` when `φ_b = 0`.
    pub log_phi: f64,
}

impl ScoreBreakdown {
    pub fn phi(&self) -> f64 {
        self.log_phi.exp()
    }
}

/// Scores aligned with `0..m`.
pub fn daal_scores(phi_b: &[f64], q: &[f64], beta: f64) -> Result<Vec<ScoreBreakdown>> {
    let indices: Vec<usize> = (0..phi_b.len()).collect();
    daal_scores_indexed(&indices, phi_b, q, beta)
}

/// Scores for the pool samples `indices`, with `phi_b[i]` and `q[i]` belonging to `indices[i]`.
pub fn daal_scores_indexed(
    indices: &[usize],
    phi_b: &[f64],
    q: &[f64],
    beta: f64,
) -> Result<Vec<ScoreBreakdown>> {
    if phi_b.len() != q.len() || indices.len() != q.len() {
        return Err(Error::contract(format!(
            "{} indices, {} base scores and {} density scores",
            indices.len(),
            phi_b.len(),
            q.len()
        )));
    }
    if !(beta >= 0.0) || beta.is_infinite() {
        return Err(Error::contract(format!(
            "beta must be finite and nonnegative, got {beta}"
        )));
    }
    indices
        .iter()
        .zip(phi_b.iter().zip(q))
        .map(|(&pool_index, (&phi, &q))| {
            if !(phi >= 0.0) {
                return Err(Error::contract(format!("base score {phi} is negative")));
            }
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::contract(format!("density score {q} outside (0, 1)")));
            }
            let log_phi = if phi == 0.0 {
                f64::NEG_INFINITY
            } else if beta == 0.0 {
                phi.ln()
            } else {
                phi.ln() + beta * q.ln()
            };
            Ok(ScoreBreakdown {
                pool_index,
                phi_b: phi,
                q,
                beta,
                log_phi,
            })
        })
        .collect()
}

fn top_k_by<F>(pool: &Pool, candidates: &[usize], key: F, k: usize) -> Result<Vec<usize>>
where
    F: Fn(usize) -> f64,
{
    let remaining = pool.num_unqueried();
    if k > remaining {
        return Err(Error::BudgetExhausted {
            requested: k,
            remaining,
        });
    }
    let mut ranked: Vec<(f64, u64, usize)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, &idx)| !pool.is_queried(idx))
        .map(|(pos, &idx)| (key(pos), pool.ids()[idx], idx))
        .collect();
    if k > ranked.len() {
        return Err(Error::BudgetExhausted {
            requested: k,
            remaining: ranked.len(),
        });
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().take(k).map(|(_, _, idx)| idx).collect())
}

/// The `k` unqueried samples with the largest `log_phi` (ties: smaller id), marked queried.
pub fn select_batch(pool: &mut Pool, scores: &[ScoreBreakdown], k: usize) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = scores.iter().map(|s| s.pool_index).collect();
    if candidates.iter().any(|&i| i >= pool.len()) {
        return Err(Error::contract("score refers to a sample outside the pool"));
    }
    let chosen = top_k_by(pool, &candidates, |pos| scores[pos].log_phi, k)?;
    for &i in &chosen {
        pool.mark_queried(i)?;
    }
    Ok(chosen)
}

/// Plain uncertainty sampling: top-`k` unqueried samples by `φ_b` alone.
pub fn select_by_uncertainty(
    pool: &mut Pool,
    candidates: &[usize],
    phi_b: &[f64],
    k: usize,
) -> Result<Vec<usize>> {
    if candidates.len() != phi_b.len() {
        return Err(Error::contract("one base score per candidate required"));
    }
    let chosen = top_k_by(pool, candidates, |pos| phi_b[pos], k)?;
    for &i in &chosen {
        pool.mark_queried(i)?;
    }
    Ok(chosen)
}

/// Geometric attention schedule `β(t) = max(floor, β₀ · αᵗ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub beta0: f64,
    pub alpha: f64,
    pub floor: f64,
}

impl BetaSchedule {
    pub fn new(beta0: f64, alpha: f64, floor: f64) -> Result<Self> {
        let s = Self {
            beta0,
            alpha,
            floor,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(beta: f64) -> Self {
        Self {
            beta0: beta,
            alpha: 1.0,
            floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 >= 0.0 && self.beta0.is_finite()) {
            return Err(Error::Config(format!(
                "beta0 must be finite and >= 0, got {}",
                self.beta0
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::Config(format!(
                "beta floor must be >= 0, got {}",
                self.floor
            )));
        }
        Ok(())
    }

    pub fn anneal(&self, cycle: usize) -> f64 {
        let exp = i32::try_from(cycle).unwrap_or(i32::MAX);
        (self.beta0 * self.alpha.powi(exp)).max(self.floor)
    }
}

/// How the first labeled set is obtained.
#[derive(Debug, Clone, Copy)]
pub enum InitStrategy<'a> {
    /// `per_class` random inliers from every class.
    Balanced { per_class: usize },
    /// `k` random inliers drawn only from `classes`.
    Biased { classes: &'a [usize], k: usize },
    /// The `k` samples the teacher rates most typical; labels come from the oracle.
    Beta {
        k: usize,
        teacher: &'a VaeModel,
        calibration: &'a DensityCalibration,
    },
}

/// Pool indices picked for the initial set. Balanced and biased picks are all
/// inliers; `beta` picks still need the oracle.
pub fn initial_picks(
    pool: &mut Pool,
    strategy: &InitStrategy<'_>,
    num_classes: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = match *strategy {
        InitStrategy::Balanced { per_class } => {
            let mut picks = Vec::new();
            for class in 0..num_classes {
                picks.extend(sample_class(pool, &[class], per_class, &mut rng)?);
            }
            picks
        }
        InitStrategy::Biased { classes, k } => {
            if classes.is_empty() {
                return Err(Error::contract(
                    "biased initial set needs at least one class",
                ));
            }
            if let Some(&bad) = classes.iter().find(|&&c| c >= num_classes) {
                return Err(Error::contract(format!(
                    "class {bad} outside {num_classes} classes"
                )));
            }
            sample_class(pool, classes, k, &mut rng)?
        }
        InitStrategy::Beta {
            k,
            teacher,
            calibration,
        } => {
            let candidates = pool.unqueried();
            let q = teacher.density_score_with(
                Execution::default(),
                calibration,
                &pool.rows(&candidates),
            )?;
            top_k_by(pool, &candidates, |pos| q[pos], k)?
        }
    };
    for &i in &picks {
        pool.mark_queried(i)?;
    }
    Ok(picks)
}

fn sample_class(
    pool: &Pool,
    classes: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let mut eligible: Vec<usize> = (0..pool.len())
        .filter(|&i| !pool.is_queried(i))
        .filter(|&i| matches!(pool.labels()[i], PoolLabel::Class(c) if classes.contains(&c)))
        .collect();
    if eligible.len() < k {
        return Err(Error::contract(format!(
            "only {} unqueried inliers in classes {classes:?}, need {k}",
            eligible.len()
        )));
    }
    eligible.shuffle(rng);
    eligible.truncate(k);
    Ok(eligible)
}

/// Result of building the first labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSet {
    pub labeled: LabeledSet,
    /// Every pool index consumed, including rejected ones.
    pub picked: Vec<usize>,
    /// Picks the oracle refused (outliers).
    pub rejected: usize,
}

/// Builds the initial labeled set, revealing labels and discarding outliers.
pub fn initial_set(
    pool: &mut Pool,
    strategy: &InitStrategy<'_>,
    num_classes: usize,
    seed: u64,
) -> Result<InitialSet> {
    let picked = initial_picks(pool, strategy, num_classes, seed)?;
    let mut labeled = LabeledSet::empty(pool.dim());
    let mut rejected = 0;
    for &i in &picked {
        pool.mark_revealed(i)?;
        match pool.labels()[i] {
            PoolLabel::Class(c) => {
                labeled.push(pool.features().row(i), c, Provenance::Initial, Some(i))
            }
            PoolLabel::Outlier => rejected += 1,
        }
    }
    Ok(InitialSet {
        labeled,
        picked,
        rejected,
    })
}
