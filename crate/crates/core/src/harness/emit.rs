//! CSV tables, PGM heatmaps and latent dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::learner::ClassifierModel;
use crate::selector::{daal_scores, Pool};
use crate::teacher::{BBox, DensityCalibration, VaeModel};
use crate::{Error, Result};

use super::run::{AggregateRow, LatentEntry, RunResult, ScoreRow};

pub const PGM_MAXVAL: u32 = 65535;

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-cycle metrics of every run, one row per `(run, cycle)`.
///
/// With `timing = false` the wall-time column is written as 0 so that the file
/// depends only on the seed.
pub fn emit_csv(results: &[RunResult], timing: bool, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(
        "run,cycle,beta,test_accuracy,cumulative_labeled,outlier_queries,cumulative_outlier_queries,wall_time_s\n",
    );
    for (run, r) in results.iter().enumerate() {
        for c in &r.cycles {
            let wall = if timing { c.wall_time } else { 0.0 };
            writeln!(
                out,
                "{run},{},{},{},{},{},{},{wall}",
                c.cycle,
                c.beta,
                c.test_accuracy,
                c.cumulative_labeled,
                c.outlier_queries,
                c.cumulative_outlier_queries
            )
            .expect("string write");
        }
    }
    write_text(path.as_ref(), &out)
}

pub fn emit_aggregate_csv(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("cycle,mean_acc,std_acc,mean_outliers,std_outliers\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.cycle, r.mean_acc, r.std_acc, r.mean_outliers, r.std_outliers
        )
        .expect("string write");
    }
    write_text(path.as_ref(), &out)
}

pub fn emit_score_dump(rows: &[ScoreRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("cycle,pool_id,phi_b,q,beta,log_phi,selected,is_outlier\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.cycle,
            r.pool_id,
            r.phi_b,
            r.q,
            r.beta,
            r.log_phi,
            r.selected as u8,
            r.is_outlier as u8
        )
        .expect("string write");
    }
    write_text(path.as_ref(), &out)
}

/// Which surface a heatmap shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapKind {
    /// `q^β`
    Density,
    /// `φ_b`
    Base,
    /// `φ_b · q^β`
    Combined,
}

impl HeatmapKind {
    pub fn name(self) -> &'static str {
        match self {
            HeatmapKind::Density => "q_beta",
            HeatmapKind::Base => "phi_b",
            HeatmapKind::Combined => "phi",
        }
    }
}

impl std::str::FromStr for HeatmapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q_beta" | "density" => Ok(HeatmapKind::Density),
            "phi_b" | "base" => Ok(HeatmapKind::Base),
            "phi" | "combined" => Ok(HeatmapKind::Combined),
            other => Err(Error::Config(format!("unknown heatmap kind `{other}`"))),
        }
    }
}

/// Raw heatmap values, row-major with row 0 at the top of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub kind: HeatmapKind,
    pub bbox: BBox,
    pub resolution: usize,
    pub beta: f64,
    pub values: Vec<f64>,
}

impl HeatmapGrid {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values linearly rescaled to `0..=PGM_MAXVAL`; a flat grid maps to 0.
    pub fn levels(&self) -> Vec<u32> {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        self.values
            .iter()
            .map(|&v| {
                if span > 0.0 {
                    ((v - lo) / span * PGM_MAXVAL as f64).round() as u32
                } else {
                    0
                }
            })
            .collect()
    }

    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{0} {0}\n{PGM_MAXVAL}\n", self.resolution);
        for row in self.levels().chunks(self.resolution.max(1)) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn describe(&self) -> String {
        let b = &self.bbox;
        format!(
            "kind {}\nbeta {}\nbbox {} {} {} {}\nresolution {}\nmin {}\nmax {}\n",
            self.kind.name(),
            self.beta,
            b.x_min,
            b.x_max,
            b.y_min,
            b.y_max,
            self.resolution,
            self.min(),
            self.max()
        )
    }
}

/// Evaluates one heatmap surface at the cell centres of `bbox`.
pub fn heatmap_grid(
    teacher: &VaeModel,
    cal: &DensityCalibration,
    classifier: Option<&ClassifierModel>,
    bbox: &BBox,
    resolution: usize,
    beta: f64,
    kind: HeatmapKind,
) -> Result<HeatmapGrid> {
    if resolution == 0 {
        return Err(Error::Config("heatmap resolution must be positive".into()));
    }
    let values = match kind {
        HeatmapKind::Density => teacher.score_grid(cal, bbox, resolution, beta)?,
        HeatmapKind::Base | HeatmapKind::Combined => {
            let classifier = classifier.ok_or_else(|| {
                Error::contract(format!("{} heatmap needs a classifier", kind.name()))
            })?;
            if classifier.input_dim() != 2 {
                return Err(Error::UnsupportedDimension(classifier.input_dim()));
            }
            let points = bbox.grid_points(resolution);
            let phi = classifier.entropy_scores(&points)?;
            if kind == HeatmapKind::Base {
                phi
            } else {
                if teacher.arch().input_dim != 2 {
                    return Err(Error::UnsupportedDimension(teacher.arch().input_dim));
                }
                let q = teacher.density_score(cal, &points)?;
                daal_scores(&phi, &q, beta)?
                    .iter()
                    .map(|s| s.phi())
                    .collect()
            }
        }
    };
    Ok(HeatmapGrid {
        kind,
        bbox: *bbox,
        resolution,
        beta,
        values,
    })
}

/// Companion file of a heatmap: same path with a `.txt` extension.
pub fn heatmap_sidecar(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

/// Writes the grid as a plain PGM plus a text sidecar with its raw range.
pub fn emit_heatmap(grid: &HeatmapGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_text(path, &grid.to_pgm())?;
    write_text(&heatmap_sidecar(path), &grid.describe())
}

/// Queried samples in the teacher's latent space with predictions before and
/// after the cycle that labeled them. `pred_after` is empty when unknown.
pub fn emit_latent_dump(
    teacher: &VaeModel,
    pool: &Pool,
    entries: &[LatentEntry],
    path: impl AsRef<Path>,
) -> Result<()> {
    if teacher.latent_dim() != 2 {
        return Err(Error::UnsupportedDimension(teacher.latent_dim()));
    }
    let indices: Vec<usize> = entries.iter().map(|e| e.pool_index).collect();
    if indices.iter().any(|&i| i >= pool.len()) {
        return Err(Error::contract("latent entry outside the pool"));
    }
    let mu = if indices.is_empty() {
        None
    } else {
        Some(teacher.encode(&pool.rows(&indices))?.0)
    };
    let mut out = String::from("cycle,pool_id,z1,z2,pred_before,pred_after,true_label\n");
    for (j, e) in entries.iter().enumerate() {
        let mu = mu.as_ref().expect("nonempty");
        let after = if e.pred_after == usize::MAX {
            String::new()
        } else {
            e.pred_after.to_string()
        };
        writeln!(
            out,
            "{},{},{},{},{},{after},{}",
            e.cycle,
            pool.ids()[e.pool_index],
            mu.get(j, 0),
            mu.get(j, 1),
            e.pred_before,
            pool.labels()[e.pool_index]
        )
        .expect("string write");
    }
    write_text(path.as_ref(), &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<f64>) -> HeatmapGrid {
        HeatmapGrid {
            kind: HeatmapKind::Density,
            bbox: BBox {
                x_min: 0.0,
                x_max: 1.0,
                y_min: 0.0,
                y_max: 1.0,
            },
            resolution: 2,
            beta: 1.0,
            values,
        }
    }

    #[test]
    fn pgm_rescales_to_full_range() {
        let g = grid(vec![1.0, 2.0, 3.0, 5.0]);
        assert_eq!(g.levels(), vec![0, 16384, 32768, 65535]);
        assert_eq!(g.to_pgm(), "P2\n2 2\n65535\n0 16384\n32768 65535\n");
        assert!(g.describe().contains("min 1\nmax 5\n"));
    }

    #[test]
    fn flat_grid_is_black() {
        assert_eq!(grid(vec![0.5; 4]).levels(), vec![0; 4]);
    }

    #[test]
    fn heatmap_kind_names_parse() {
        for k in [
            HeatmapKind::Density,
            HeatmapKind::Base,
            HeatmapKind::Combined,
        ] {
            assert_eq!(k.name().parse::<HeatmapKind>().unwrap(), k);
        }
        assert!("nope".parse::<HeatmapKind>().is_err());
    }
}
