use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::DatasetSplit;
use crate::numerics::Tensor;
use crate::selector::{Pool, PoolLabel};
use crate::teacher::BBox;
use crate::{Error, Result};

/// Two-class Gaussian mixture in the plane, contaminated with uniform outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub modes_per_class: usize,
    /// `class_means[c][m]` is the centre of mode `m` of class `c`.
    pub class_means: Vec<Vec<[f64; 2]>>,
    /// Isotropic variance of every mode.
    pub class_var: f64,
    pub n_inliers: usize,
    /// Outlier share μ₂ of the pool; inliers make up μ₁ = 1 − μ₂.
    pub outlier_fraction: f64,
    /// Fractional expansion of the inlier bounding box on each side.
    pub bbox_margin: f64,
    pub seed: u64,
}

/// XOR layout: each class owns two opposite corners of a square, and
/// neighbouring modes of different classes overlap.
impl Default for ToySpec {
    fn default() -> Self {
        Self {
            modes_per_class: 2,
            class_means: vec![
                vec![[-1.0, -1.0], [1.0, 1.0]],
                vec![[-1.0, 1.0], [1.0, -1.0]],
            ],
            class_var: 0.3,
            n_inliers: 1000,
            outlier_fraction: 0.2,
            bbox_margin: 0.1,
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn inlier_weight(&self) -> f64 {
        1.0 - self.outlier_fraction
    }

    fn validate(&self) -> Result<()> {
        if self.modes_per_class == 0 || self.n_inliers == 0 {
            return Err(Error::contract(
                "toy spec needs at least one mode and one inlier",
            ));
        }
        if self.n_inliers < 4 * self.modes_per_class {
            return Err(Error::contract(format!(
                "{} inliers is fewer than 4 per mode ({} modes per class)",
                self.n_inliers, self.modes_per_class
            )));
        }
        if self.class_means.len() != 2
            || self
                .class_means
                .iter()
                .any(|m| m.len() != self.modes_per_class)
        {
            return Err(Error::contract(format!(
                "need 2 classes with {} mode means each",
                self.modes_per_class
            )));
        }
        if !(self.class_var > 0.0 && self.class_var.is_finite()) {
            return Err(Error::contract(format!(
                "class variance must be positive, got {}",
                self.class_var
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::contract(format!(
                "outlier fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            )));
        }
        if !(self.bbox_margin >= 0.0) {
            return Err(Error::contract("bbox margin must be nonnegative"));
        }
        Ok(())
    }
}

/// Samples the toy data: 60% of inliers (plus outliers) form the pool, 20% train
/// the teacher, 20% are held out for testing.
pub fn gen_toy(spec: &ToySpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.class_var.sqrt()).expect("positive variance");

    let n = spec.n_inliers;
    let mut points: Vec<([f64; 2], usize)> = (0..n)
        .map(|i| {
            let class = i % 2;
            let mode = (i / 2) % spec.modes_per_class;
            let [mx, my] = spec.class_means[class][mode];
            (
                [mx + noise.sample(&mut rng), my + noise.sample(&mut rng)],
                class,
            )
        })
        .collect();
    points.shuffle(&mut rng);

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (p, _) in &points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let pad = [
        (hi[0] - lo[0]) * spec.bbox_margin,
        (hi[1] - lo[1]) * spec.bbox_margin,
    ];
    let bbox = BBox {
        x_min: lo[0] - pad[0],
        x_max: hi[0] + pad[0],
        y_min: lo[1] - pad[1],
        y_max: hi[1] + pad[1],
    };

    let n_pool = n * 3 / 5;
    let n_teacher = n / 5;
    let n_outliers = if spec.outlier_fraction == 0.0 {
        0
    } else {
        (n_pool as f64 * spec.outlier_fraction / spec.inlier_weight()).round() as usize
    };

    // ids: inliers keep their draw position, outliers follow
    let mut pool_entries: Vec<(u64, [f64; 2], PoolLabel)> = (0..n_pool)
        .map(|i| (i as u64, points[i].0, PoolLabel::Class(points[i].1)))
        .collect();
    for j in 0..n_outliers {
        let p = [
            rng.random_range(bbox.x_min..bbox.x_max),
            rng.random_range(bbox.y_min..bbox.y_max),
        ];
        pool_entries.push(((n + j) as u64, p, PoolLabel::Outlier));
    }
    pool_entries.shuffle(&mut rng);

    let flat = |ps: &mut dyn Iterator<Item = [f64; 2]>, rows: usize| {
        Tensor::new(vec![rows, 2], ps.flatten().collect()).expect("sized")
    };
    let pool = Pool::new(
        flat(&mut pool_entries.iter().map(|e| e.1), pool_entries.len()),
        pool_entries.iter().map(|e| e.2).collect(),
        pool_entries.iter().map(|e| e.0).collect(),
    )?;
    let teacher = n_pool..n_pool + n_teacher;
    let test = n_pool + n_teacher..n;

    Ok(DatasetSplit {
        teacher_train: flat(
            &mut points[teacher.clone()].iter().map(|p| p.0),
            teacher.len(),
        ),
        teacher_ids: teacher.clone().map(|i| i as u64).collect(),
        teacher_labels: points[teacher].iter().map(|p| p.1).collect(),
        pool,
        test_x: flat(&mut points[test.clone()].iter().map(|p| p.0), test.len()),
        test_y: points[test.clone()].iter().map(|p| p.1).collect(),
        test_ids: test.map(|i| i as u64).collect(),
        num_classes: 2,
        bbox: Some(bbox),
        notes: Vec::new(),
    })
}
