//! Data sources: the 2-D toy mixture with uniform outliers, MNIST IDX files,
//! and the teacher / pool / test split shared by both.

pub mod idx;
mod mnist;
mod toy;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use mnist::{mnist_split, MnistSplitSpec};
pub use toy::{gen_toy, ToySpec};

use crate::numerics::Tensor;
use crate::selector::{Pool, PoolLabel};
use crate::teacher::BBox;
use crate::{Error, Result};

/// Teacher training data, the contaminated active-learning pool, and a clean test set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub teacher_train: Tensor,
    pub teacher_ids: Vec<u64>,
    /// Known classes of the teacher samples; only used for the manifest.
    pub teacher_labels: Vec<usize>,
    pub pool: Pool,
    pub test_x: Tensor,
    pub test_y: Vec<usize>,
    pub test_ids: Vec<u64>,
    pub num_classes: usize,
    /// Region the toy outliers were drawn from.
    pub bbox: Option<BBox>,
    /// Free-form notes such as availability caps.
    pub notes: Vec<String>,
}

impl DatasetSplit {
    pub fn pool_outlier_fraction(&self) -> f64 {
        if self.pool.is_empty() {
            return 0.0;
        }
        self.pool.outlier_count() as f64 / self.pool.len() as f64
    }

    /// `id,split,class_or_OUTLIER` rows: teacher, then pool, then test.
    pub fn manifest_rows(&self) -> Vec<(u64, &'static str, PoolLabel)> {
        let mut rows = Vec::new();
        for (&id, &c) in self.teacher_ids.iter().zip(&self.teacher_labels) {
            rows.push((id, "teacher", PoolLabel::Class(c)));
        }
        for (&id, &l) in self.pool.ids().iter().zip(self.pool.labels()) {
            rows.push((id, "pool", l));
        }
        for (&id, &c) in self.test_ids.iter().zip(&self.test_y) {
            rows.push((id, "test", PoolLabel::Class(c)));
        }
        rows
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "id,split,class_or_OUTLIER").map_err(io)?;
        for (id, split, label) in self.manifest_rows() {
            writeln!(w, "{id},{split},{label}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn manifest_has_every_sample_once() {
        let split = gen_toy(&ToySpec {
            n_inliers: 100,
            ..ToySpec::default()
        })
        .unwrap();
        let rows = split.manifest_rows();
        let ids: HashSet<u64> = rows.iter().map(|r| r.0).collect();
        assert_eq!(ids.len(), rows.len());
        assert_eq!(
            rows.len(),
            split.teacher_ids.len() + split.pool.len() + split.test_ids.len()
        );

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        split.write_manifest(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,split,class_or_OUTLIER\n"));
        assert!(text.contains(",pool,OUTLIER\n"));
    }
}
