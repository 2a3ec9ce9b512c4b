//! The active-learning loop: train → score → select → label → extend.

use std::time::Instant;

use crate::datasets::{gen_toy, idx, mnist_split, DatasetSplit};
use crate::learner::{ClassifierModel, LabeledSet, Provenance};
use crate::numerics::Tensor;
use crate::par::{self, Execution};
use crate::selector::{
    daal_scores_indexed, initial_set, select_batch, select_by_uncertainty, InitStrategy,
    InitialSet, Pool, PoolLabel,
};
use crate::teacher::{DensityCalibration, TeacherLog, VaeModel};
use crate::{Error, Result};

use super::config::{ALConfig, DatasetConfig, InitConfig, SelectionRule};

/// The simulated annotator's reply for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleAnswer {
    Label(usize),
    /// The sample is an outlier; the query is spent and nothing is learned.
    Reject,
}

/// Reveals the labels of `indices`; each sample may be asked about only once.
pub fn oracle(pool: &mut Pool, indices: &[usize]) -> Result<Vec<OracleAnswer>> {
    if let Some(&i) = indices.iter().find(|&&i| i >= pool.len()) {
        return Err(Error::contract(format!("pool index {i} out of range")));
    }
    if let Some(&i) = indices.iter().find(|&&i| pool.is_revealed(i)) {
        return Err(Error::contract(format!(
            "oracle already answered for pool sample {}",
            pool.ids()[i]
        )));
    }
    indices
        .iter()
        .map(|&i| {
            pool.mark_revealed(i)?;
            Ok(match pool.labels()[i] {
                PoolLabel::Class(c) => OracleAnswer::Label(c),
                PoolLabel::Outlier => OracleAnswer::Reject,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub beta: f64,
    pub test_accuracy: f64,
    pub cumulative_labeled: usize,
    pub outlier_queries: usize,
    pub cumulative_outlier_queries: usize,
    pub wall_time: f64,
}

/// One row of the optional per-cycle score dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub cycle: usize,
    pub pool_id: u64,
    pub phi_b: f64,
    pub q: f64,
    pub beta: f64,
    pub log_phi: f64,
    pub selected: bool,
    pub is_outlier: bool,
}

/// A queried sample with the classifier's prediction before and after the
/// cycle that labeled it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentEntry {
    pub cycle: usize,
    pub pool_index: usize,
    pub pred_before: usize,
    pub pred_after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub cycles: Vec<CycleMetrics>,
    /// Pool ids selected in every cycle, in selection order.
    pub selections: Vec<Vec<u64>>,
    /// Pool indices of the initial picks (including rejected ones).
    pub initial_picks: Vec<usize>,
    pub initial_rejects: usize,
    /// `(pool id, label, provenance)` of the final labeled set.
    pub labeled_manifest: Vec<(u64, usize, Provenance)>,
    /// The pool ran out before the last cycle.
    pub truncated: bool,
    pub score_dump: Vec<ScoreRow>,
    pub latent: Vec<LatentEntry>,
}

impl RunResult {
    /// Copy with wall-clock timings zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunResult {
        let mut r = self.clone();
        r.cycles.iter_mut().for_each(|c| c.wall_time = 0.0);
        r
    }

    pub fn final_accuracy(&self) -> f64 {
        self.cycles.last().map_or(0.0, |c| c.test_accuracy)
    }

    pub fn total_outlier_queries(&self) -> usize {
        self.cycles
            .last()
            .map_or(0, |c| c.cumulative_outlier_queries)
    }

    /// Queries spent, including the initial set.
    pub fn total_queries(&self) -> usize {
        self.initial_picks.len() + self.selections.iter().map(Vec::len).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub execution: Execution,
    pub score_dump: bool,
    pub latent_trace: bool,
}

/// Data split plus the trained, frozen, calibrated teacher for one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub teacher: VaeModel,
    pub calibration: DensityCalibration,
    pub teacher_log: TeacherLog,
    /// Teacher score of every pool sample, in pool order.
    pub pool_q: Vec<f64>,
}

const STREAM_TEACHER_INIT: u64 = 1;
const STREAM_TEACHER_TRAIN: u64 = 2;
const STREAM_INITIAL_SET: u64 = 3;
const STREAM_CLASSIFIER: u64 = 1000;

/// Independent per-purpose seed derived from the run seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the split for `seed`; data files are read fresh every call.
pub fn build_split(config: &ALConfig, seed: u64) -> Result<DatasetSplit> {
    match &config.dataset {
        DatasetConfig::Toy(spec) => gen_toy(&crate::datasets::ToySpec {
            seed,
            ..spec.clone()
        }),
        DatasetConfig::Mnist(m) => {
            let (train_x, train_y) = idx::load_idx(&m.train_images, &m.train_labels)?;
            let (test_x, test_y) = idx::load_idx(&m.test_images, &m.test_labels)?;
            let spec = crate::datasets::MnistSplitSpec {
                seed,
                ..m.split.clone()
            };
            mnist_split(&train_x, &train_y, &test_x, &test_y, &spec)
        }
    }
}

/// Trains the teacher on the split's teacher data and calibrates it on the pool.
pub fn train_teacher(
    config: &ALConfig,
    split: &DatasetSplit,
    seed: u64,
    exec: Execution,
) -> Result<(VaeModel, DensityCalibration, TeacherLog)> {
    let mut teacher = VaeModel::new(
        config.teacher_arch.clone(),
        derive_seed(seed, STREAM_TEACHER_INIT),
    )?;
    let log = teacher.train(
        &split.teacher_train,
        &config.teacher_train,
        derive_seed(seed, STREAM_TEACHER_TRAIN),
    )?;
    let calibration =
        teacher.calibrate_with(exec, split.pool.features(), &format!("pool(seed={seed})"))?;
    Ok((teacher, calibration, log))
}

pub fn prepare(config: &ALConfig, seed: u64, exec: Execution) -> Result<Prepared> {
    config.validate()?;
    let split = build_split(config, seed)?;
    prepare_with_split(config, split, seed, exec)
}

pub fn prepare_with_split(
    config: &ALConfig,
    split: DatasetSplit,
    seed: u64,
    exec: Execution,
) -> Result<Prepared> {
    let (teacher, calibration, teacher_log) = train_teacher(config, &split, seed, exec)?;
    let pool_q = teacher.density_score_with(exec, &calibration, split.pool.features())?;
    Ok(Prepared {
        split,
        teacher,
        calibration,
        teacher_log,
        pool_q,
    })
}

pub fn run_once(config: &ALConfig, seed: u64) -> Result<RunResult> {
    let opts = RunOptions::default();
    run_prepared(config, &prepare(config, seed, opts.execution)?, seed, &opts)
}

/// The run's initial labeled set, drawn from `pool` (which it marks queried).
pub fn build_initial_set(
    config: &ALConfig,
    prep: &Prepared,
    pool: &mut Pool,
    seed: u64,
) -> Result<InitialSet> {
    let classes;
    let strategy = match &config.init {
        InitConfig::Balanced { per_class } => InitStrategy::Balanced {
            per_class: *per_class,
        },
        InitConfig::Biased { classes: c, k } => {
            classes = c.clone();
            InitStrategy::Biased {
                classes: &classes,
                k: *k,
            }
        }
        InitConfig::Beta { k } => InitStrategy::Beta {
            k: *k,
            teacher: &prep.teacher,
            calibration: &prep.calibration,
        },
    };
    initial_set(
        pool,
        &strategy,
        prep.split.num_classes,
        derive_seed(seed, STREAM_INITIAL_SET),
    )
}

/// A fresh classifier trained on `labeled` with the seed stream of `cycle`.
pub fn train_classifier(
    config: &ALConfig,
    labeled: &LabeledSet,
    seed: u64,
    cycle: usize,
) -> Result<ClassifierModel> {
    let mut model = ClassifierModel::new(config.classifier_widths.clone(), 0)?;
    model.train(
        labeled,
        &config.classifier_train,
        derive_seed(seed, STREAM_CLASSIFIER + cycle as u64),
    )?;
    Ok(model)
}

/// Runs the loop for cycles `0..=T` on an already prepared split and teacher.
///
/// Cycle `t` trains a fresh classifier on the current labeled set, records its
/// test accuracy, then spends `k` queries. Counters in cycle `t` include that
/// cycle's queries.
pub fn run_prepared(
    config: &ALConfig,
    prep: &Prepared,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunResult> {
    config.validate()?;
    let split = &prep.split;
    let mut pool = split.pool.clone();
    let k = config.batch_size;

    let init = build_initial_set(config, prep, &mut pool, seed)?;
    if init.labeled.is_empty() {
        return Err(Error::contract(
            "every initial pick was an outlier; nothing to train on",
        ));
    }
    let mut labeled = init.labeled;
    let mut cumulative_outliers = init.rejected;

    let mut result = RunResult {
        seed,
        cycles: Vec::with_capacity(config.num_cycles + 1),
        selections: Vec::new(),
        initial_picks: init.picked,
        initial_rejects: init.rejected,
        labeled_manifest: Vec::new(),
        truncated: false,
        score_dump: Vec::new(),
        latent: Vec::new(),
    };

    for t in 0..=config.num_cycles {
        let start = Instant::now();
        let classifier = train_classifier(config, &labeled, seed, t)?;
        let accuracy = classifier.accuracy(&split.test_x, &split.test_y)?;
        if opts.latent_trace {
            fill_pred_after(&mut result.latent, &classifier, &pool, t)?;
        }
        let beta = config.beta.anneal(t);

        let candidates = pool.unqueried();
        if candidates.len() < k {
            result.truncated = true;
            result.cycles.push(CycleMetrics {
                cycle: t,
                beta,
                test_accuracy: accuracy,
                cumulative_labeled: labeled.len(),
                outlier_queries: 0,
                cumulative_outlier_queries: cumulative_outliers,
                wall_time: start.elapsed().as_secs_f64(),
            });
            break;
        }

        let candidate_x = pool.rows(&candidates);
        let phi = classifier.entropy_scores_with(opts.execution, &candidate_x)?;
        let q: Vec<f64> = candidates.iter().map(|&i| prep.pool_q[i]).collect();
        let score_beta = match config.selection {
            SelectionRule::Daal => beta,
            SelectionRule::Uncertainty => 0.0,
        };
        let scores = daal_scores_indexed(&candidates, &phi, &q, score_beta)?;
        let chosen = match config.selection {
            SelectionRule::Daal => select_batch(&mut pool, &scores, k)?,
            SelectionRule::Uncertainty => select_by_uncertainty(&mut pool, &candidates, &phi, k)?,
        };

        if opts.score_dump {
            let mut picked = vec![false; pool.len()];
            chosen.iter().for_each(|&i| picked[i] = true);
            result.score_dump.extend(scores.iter().map(|s| ScoreRow {
                cycle: t,
                pool_id: pool.ids()[s.pool_index],
                phi_b: s.phi_b,
                q: s.q,
                beta: s.beta,
                log_phi: s.log_phi,
                selected: picked[s.pool_index],
                is_outlier: pool.labels()[s.pool_index].is_outlier(),
            }));
        }
        if opts.latent_trace {
            let before = classifier.predict(&pool.rows(&chosen))?;
            result
                .latent
                .extend(chosen.iter().zip(before).map(|(&i, p)| LatentEntry {
                    cycle: t,
                    pool_index: i,
                    pred_before: p,
                    pred_after: usize::MAX,
                }));
        }

        let answers = oracle(&mut pool, &chosen)?;
        let mut rejected = 0;
        for (&i, answer) in chosen.iter().zip(&answers) {
            match answer {
                OracleAnswer::Label(c) => labeled.push(
                    pool.features().row(i),
                    *c,
                    Provenance::Queried { cycle: t },
                    Some(i),
                ),
                OracleAnswer::Reject => rejected += 1,
            }
        }
        cumulative_outliers += rejected;
        result
            .selections
            .push(chosen.iter().map(|&i| pool.ids()[i]).collect());
        result.cycles.push(CycleMetrics {
            cycle: t,
            beta,
            test_accuracy: accuracy,
            cumulative_labeled: labeled.len(),
            outlier_queries: rejected,
            cumulative_outlier_queries: cumulative_outliers,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }

    if opts.latent_trace && !result.truncated {
        let after = train_classifier(config, &labeled, seed, config.num_cycles + 1)?;
        fill_pred_after(&mut result.latent, &after, &pool, config.num_cycles + 1)?;
    }

    result.labeled_manifest = (0..labeled.len())
        .map(|i| {
            let id = labeled.pool_indices()[i].map_or(u64::MAX, |p| pool.ids()[p]);
            (id, labeled.labels()[i], labeled.provenance()[i])
        })
        .collect();
    Ok(result)
}

fn fill_pred_after(
    latent: &mut [LatentEntry],
    classifier: &ClassifierModel,
    pool: &Pool,
    cycle: usize,
) -> Result<()> {
    if cycle == 0 {
        return Ok(());
    }
    let pending: Vec<usize> = (0..latent.len())
        .filter(|&j| latent[j].cycle + 1 == cycle)
        .collect();
    if pending.is_empty() {
        return Ok(());
    }
    let rows: Vec<usize> = pending.iter().map(|&j| latent[j].pool_index).collect();
    let preds = classifier.predict(&pool.rows(&rows))?;
    for (j, p) in pending.into_iter().zip(preds) {
        latent[j].pred_after = p;
    }
    Ok(())
}

/// Per-cycle statistics across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub cycle: usize,
    pub runs: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_outliers: f64,
    pub std_outliers: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedResult {
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateRow>,
}

/// Sample mean and standard deviation (`n − 1` denominator, 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Mean/std of test accuracy and cumulative outlier queries per cycle.
pub fn aggregate(runs: &[RunResult]) -> Vec<AggregateRow> {
    let cycles = runs.iter().map(|r| r.cycles.len()).max().unwrap_or(0);
    (0..cycles)
        .map(|t| {
            let present: Vec<&CycleMetrics> = runs.iter().filter_map(|r| r.cycles.get(t)).collect();
            let acc: Vec<f64> = present.iter().map(|c| c.test_accuracy).collect();
            let out: Vec<f64> = present
                .iter()
                .map(|c| c.cumulative_outlier_queries as f64)
                .collect();
            let (mean_acc, std_acc) = mean_std(&acc);
            let (mean_outliers, std_outliers) = mean_std(&out);
            AggregateRow {
                cycle: t,
                runs: present.len(),
                mean_acc,
                std_acc,
                mean_outliers,
                std_outliers,
            }
        })
        .collect()
}

/// Seeds used by repeated runs: `base_seed + r`.
pub fn run_seeds(config: &ALConfig, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|r| config.base_seed + r).collect()
}

/// `runs` independent seeded runs, possibly in parallel.
pub fn run_repeated(config: &ALConfig, runs: usize, opts: &RunOptions) -> Result<RepeatedResult> {
    if runs == 0 {
        return Err(Error::Config("at least one run required".into()));
    }
    config.validate()?;
    let seeds = run_seeds(config, runs);
    let results = par::map_indexed(opts.execution, seeds.len(), |r| {
        let seed = seeds[r];
        let prep = prepare(config, seed, Execution::Sequential)?;
        run_prepared(
            config,
            &prep,
            seed,
            &RunOptions {
                execution: Execution::Sequential,
                ..*opts
            },
        )
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RepeatedResult {
        aggregate: aggregate(&runs),
        runs,
    })
}

/// Whether two configs produce the same split and teacher for a given seed.
fn shares_teacher(a: &ALConfig, b: &ALConfig) -> bool {
    a.dataset == b.dataset && a.teacher_arch == b.teacher_arch && a.teacher_train == b.teacher_train
}

/// Runs two configs on the same seeds (`a.base_seed + r`). The split, teacher
/// and, for label-based strategies, initial set are identical across the pair.
pub fn compare(
    a: &ALConfig,
    b: &ALConfig,
    runs: usize,
    opts: &RunOptions,
) -> Result<(RepeatedResult, RepeatedResult)> {
    if runs == 0 {
        return Err(Error::Config("at least one run required".into()));
    }
    a.validate()?;
    b.validate()?;
    let seeds = run_seeds(a, runs);
    let inner = RunOptions {
        execution: Execution::Sequential,
        ..*opts
    };
    let pairs = par::map_indexed(
        opts.execution,
        seeds.len(),
        |r| -> Result<(RunResult, RunResult)> {
            let seed = seeds[r];
            let prep_a = prepare(a, seed, Execution::Sequential)?;
            let ra = run_prepared(a, &prep_a, seed, &inner)?;
            let rb = if shares_teacher(a, b) {
                run_prepared(b, &prep_a, seed, &inner)?
            } else {
                run_prepared(b, &prepare(b, seed, Execution::Sequential)?, seed, &inner)?
            };
            Ok((ra, rb))
        },
    );
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    for p in pairs {
        let (x, y) = p?;
        ra.push(x);
        rb.push(y);
    }
    Ok((
        RepeatedResult {
            aggregate: aggregate(&ra),
            runs: ra,
        },
        RepeatedResult {
            aggregate: aggregate(&rb),
            runs: rb,
        },
    ))
}

/// Encoder means of the listed pool samples.
pub fn latent_coordinates(teacher: &VaeModel, pool: &Pool, indices: &[usize]) -> Result<Tensor> {
    Ok(teacher.encode(&pool.rows(indices))?.0)
}
