use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetSplit;
use crate::numerics::Tensor;
use crate::selector::{Pool, PoolLabel};
use crate::{Error, Result};

/// Inlier/outlier digit protocol for MNIST.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSplitSpec {
    pub inlier_digits: Vec<usize>,
    /// Training images per inlier digit reserved for the teacher.
    pub per_digit_teacher: usize,
    /// Pool outliers per pool inlier.
    pub outlier_multiplier: f64,
    /// Optional cap on pool inliers (random subsample), for reduced runs.
    pub pool_inlier_cap: Option<usize>,
    pub seed: u64,
}

impl Default for MnistSplitSpec {
    fn default() -> Self {
        Self {
            inlier_digits: vec![0, 1, 2, 3, 4],
            per_digit_teacher: 1000,
            outlier_multiplier: 2.0,
            pool_inlier_cap: None,
            seed: 0,
        }
    }
}

/// Splits MNIST training images into teacher data and a contaminated pool;
/// the test split keeps only inlier digits, relabelled `0..k` in the order of
/// `inlier_digits`. Training sample `i` gets id `i`, test sample `j` gets id
/// `train_count + j`.
pub fn mnist_split(
    train_x: &Tensor,
    train_y: &[usize],
    test_x: &Tensor,
    test_y: &[usize],
    spec: &MnistSplitSpec,
) -> Result<DatasetSplit> {
    if train_x.rows() != train_y.len() || test_x.rows() != test_y.len() {
        return Err(Error::contract("image and label counts differ"));
    }
    if spec.inlier_digits.is_empty() {
        return Err(Error::contract("no inlier digits given"));
    }
    if !(spec.outlier_multiplier >= 0.0) {
        return Err(Error::contract("outlier multiplier must be nonnegative"));
    }
    let relabel = |d: usize| spec.inlier_digits.iter().position(|&x| x == d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut notes = Vec::new();

    let mut teacher_idx = Vec::new();
    let mut pool_inliers = Vec::new();
    for &digit in &spec.inlier_digits {
        let mut of_digit: Vec<usize> = (0..train_y.len())
            .filter(|&i| train_y[i] == digit)
            .collect();
        if of_digit.len() < spec.per_digit_teacher {
            return Err(Error::contract(format!(
                "digit {digit} has {} training images, {} needed for the teacher",
                of_digit.len(),
                spec.per_digit_teacher
            )));
        }
        of_digit.shuffle(&mut rng);
        teacher_idx.extend_from_slice(&of_digit[..spec.per_digit_teacher]);
        pool_inliers.extend_from_slice(&of_digit[spec.per_digit_teacher..]);
    }
    if let Some(cap) = spec.pool_inlier_cap {
        if pool_inliers.len() > cap {
            pool_inliers.shuffle(&mut rng);
            pool_inliers.truncate(cap);
        }
    }

    let mut outliers: Vec<usize> = (0..train_y.len())
        .filter(|&i| relabel(train_y[i]).is_none())
        .collect();
    let wanted = (pool_inliers.len() as f64 * spec.outlier_multiplier).round() as usize;
    if outliers.len() < wanted {
        notes.push(format!(
            "outlier cap: wanted {wanted} outliers, only {} available",
            outliers.len()
        ));
    }
    outliers.shuffle(&mut rng);
    outliers.truncate(wanted);

    let mut pool_idx: Vec<usize> = pool_inliers.iter().chain(&outliers).copied().collect();
    pool_idx.sort_unstable();
    pool_idx.shuffle(&mut rng);
    let pool_labels = pool_idx
        .iter()
        .map(|&i| relabel(train_y[i]).map_or(PoolLabel::Outlier, PoolLabel::Class))
        .collect();
    let pool = Pool::new(
        train_x.select_rows(&pool_idx),
        pool_labels,
        pool_idx.iter().map(|&i| i as u64).collect(),
    )?;

    teacher_idx.sort_unstable();
    let test_idx: Vec<usize> = (0..test_y.len())
        .filter(|&j| relabel(test_y[j]).is_some())
        .collect();
    let offset = train_y.len() as u64;

    Ok(DatasetSplit {
        teacher_train: train_x.select_rows(&teacher_idx),
        teacher_labels: teacher_idx
            .iter()
            .map(|&i| relabel(train_y[i]).unwrap())
            .collect(),
        teacher_ids: teacher_idx.iter().map(|&i| i as u64).collect(),
        pool,
        test_x: test_x.select_rows(&test_idx),
        test_y: test_idx
            .iter()
            .map(|&j| relabel(test_y[j]).unwrap())
            .collect(),
        test_ids: test_idx.iter().map(|&j| offset + j as u64).collect(),
        num_classes: spec.inlier_digits.len(),
        bbox: None,
        notes,
    })
}
