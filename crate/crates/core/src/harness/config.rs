//! Experiment configuration and its `key = value` text form.
//!
//! Keys use dotted nesting, e.g. `beta.beta0 = 4`, `toy.n_inliers = 1000`,
//! `classifier.widths = 2,8,4,2`. Blank lines and `#` comments are ignored.
//! Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datasets::{MnistSplitSpec, ToySpec};
use crate::learner::TrainConfig;
use crate::selector::BetaSchedule;
use crate::teacher::{DecoderFamily, TeacherTrainConfig, VaeArch};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MnistConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// The split seed is replaced by each run's seed.
    pub split: MnistSplitSpec,
}

impl MnistConfig {
    /// Standard file names inside `dir`, gzipped or not.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let pick = |stem: &str| {
            let gz = dir.join(format!("{stem}.gz"));
            if gz.exists() {
                gz
            } else {
                dir.join(stem)
            }
        };
        Self {
            train_images: pick("train-images-idx3-ubyte"),
            train_labels: pick("train-labels-idx1-ubyte"),
            test_images: pick("t10k-images-idx3-ubyte"),
            test_labels: pick("t10k-labels-idx1-ubyte"),
            split: MnistSplitSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    /// The toy seed is replaced by each run's seed.
    Toy(ToySpec),
    Mnist(MnistConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitConfig {
    Balanced { per_class: usize },
    Biased { classes: Vec<usize>, k: usize },
    Beta { k: usize },
}

/// Which ranking picks the queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// `φ_b · q^β` ranking.
    Daal,
    /// Entropy alone, ignoring the teacher.
    Uncertainty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ALConfig {
    pub dataset: DatasetConfig,
    pub classifier_widths: Vec<usize>,
    pub classifier_train: TrainConfig,
    pub teacher_arch: VaeArch,
    pub teacher_train: TeacherTrainConfig,
    pub beta: BetaSchedule,
    pub selection: SelectionRule,
    pub batch_size: usize,
    pub num_cycles: usize,
    pub init: InitConfig,
    pub num_runs: usize,
    pub base_seed: u64,
}

impl ALConfig {
    /// Two-class toy benchmark: MLP 2-8-4-2, β = 0.8, 10 queries per cycle.
    pub fn toy() -> Self {
        Self {
            dataset: DatasetConfig::Toy(ToySpec::default()),
            classifier_widths: vec![2, 8, 4, 2],
            classifier_train: TrainConfig {
                epochs: 200,
                lr: 0.01,
                batch_size: None,
            },
            teacher_arch: VaeArch::toy(),
            teacher_train: TeacherTrainConfig {
                epochs: 300,
                lr: 0.005,
                batch_size: 32,
            },
            beta: BetaSchedule::constant(0.8),
            selection: SelectionRule::Daal,
            batch_size: 10,
            num_cycles: 20,
            init: InitConfig::Balanced { per_class: 1 },
            num_runs: 10,
            base_seed: 0,
        }
    }

    /// MNIST digits 0–4 with 5–9 as outliers, annealed β from 4 with rate 0.9.
    pub fn mnist(data: MnistConfig) -> Self {
        Self {
            dataset: DatasetConfig::Mnist(data),
            classifier_widths: vec![784, 256, 64, 5],
            classifier_train: TrainConfig {
                epochs: 20,
                lr: 1e-3,
                batch_size: None,
            },
            teacher_arch: VaeArch::mnist(),
            teacher_train: TeacherTrainConfig {
                epochs: 30,
                lr: 1e-3,
                batch_size: 100,
            },
            beta: BetaSchedule {
                beta0: 4.0,
                alpha: 0.9,
                floor: 0.0,
            },
            selection: SelectionRule::Daal,
            batch_size: 32,
            num_cycles: 15,
            init: InitConfig::Beta { k: 32 },
            num_runs: 10,
            base_seed: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        *self.classifier_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.classifier_widths.len() < 2 || self.classifier_widths.contains(&0) {
            return cfg(format!(
                "classifier.widths {:?} is not a valid layer list",
                self.classifier_widths
            ));
        }
        if self.classifier_widths[0] != self.teacher_arch.input_dim {
            return cfg(format!(
                "classifier input width {} differs from teacher input {}",
                self.classifier_widths[0], self.teacher_arch.input_dim
            ));
        }
        let expected_dim = match &self.dataset {
            DatasetConfig::Toy(_) => Some(2),
            DatasetConfig::Mnist(_) => Some(784),
        };
        if expected_dim != Some(self.classifier_widths[0]) {
            return cfg(format!(
                "dataset has {} features, classifier expects {}",
                expected_dim.unwrap_or(0),
                self.classifier_widths[0]
            ));
        }
        let classes = match &self.dataset {
            DatasetConfig::Toy(_) => 2,
            DatasetConfig::Mnist(m) => m.split.inlier_digits.len(),
        };
        if classes != self.num_classes() {
            return cfg(format!(
                "dataset has {classes} classes, classifier outputs {}",
                self.num_classes()
            ));
        }
        self.beta.validate()?;
        if self.batch_size == 0 {
            return cfg("batch_size must be positive".into());
        }
        if self.num_runs == 0 {
            return cfg("num_runs must be at least 1".into());
        }
        if !(self.classifier_train.lr > 0.0) || !(self.teacher_train.lr > 0.0) {
            return cfg("learning rates must be positive".into());
        }
        if self.teacher_train.batch_size == 0 {
            return cfg("teacher.batch_size must be positive".into());
        }
        match &self.init {
            InitConfig::Balanced { per_class: 0 }
            | InitConfig::Biased { k: 0, .. }
            | InitConfig::Beta { k: 0 } => return cfg("initial set size must be positive".into()),
            InitConfig::Biased { classes, .. }
                if classes.is_empty() || classes.iter().any(|&c| c >= self.num_classes()) =>
            {
                return cfg(format!("init.classes {classes:?} invalid"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Parses config text; relative MNIST paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        let mut kv = Entries { map: entries };
        let config = build(&mut kv, base_dir)?;
        if let Some(key) = kv.map.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.dataset {
            DatasetConfig::Toy(t) => {
                put("dataset", "toy".into());
                put("toy.modes_per_class", t.modes_per_class.to_string());
                for (c, means) in t.class_means.iter().enumerate() {
                    let pts: Vec<String> = means.iter().map(|[x, y]| format!("{x},{y}")).collect();
                    put(&format!("toy.class{c}_means"), pts.join("; "));
                }
                put("toy.class_var", t.class_var.to_string());
                put("toy.n_inliers", t.n_inliers.to_string());
                put("toy.outlier_fraction", t.outlier_fraction.to_string());
                put("toy.bbox_margin", t.bbox_margin.to_string());
            }
            DatasetConfig::Mnist(m) => {
                put("dataset", "mnist".into());
                put("mnist.train_images", m.train_images.display().to_string());
                put("mnist.train_labels", m.train_labels.display().to_string());
                put("mnist.test_images", m.test_images.display().to_string());
                put("mnist.test_labels", m.test_labels.display().to_string());
                put("mnist.inlier_digits", join(&m.split.inlier_digits));
                put(
                    "mnist.per_digit_teacher",
                    m.split.per_digit_teacher.to_string(),
                );
                put(
                    "mnist.outlier_multiplier",
                    m.split.outlier_multiplier.to_string(),
                );
                if let Some(cap) = m.split.pool_inlier_cap {
                    put("mnist.pool_inlier_cap", cap.to_string());
                }
            }
        }
        put("classifier.widths", join(&self.classifier_widths));
        put(
            "classifier.epochs",
            self.classifier_train.epochs.to_string(),
        );
        put("classifier.lr", self.classifier_train.lr.to_string());
        if let Some(b) = self.classifier_train.batch_size {
            put("classifier.batch_size", b.to_string());
        }
        put("teacher.hidden", join(&self.teacher_arch.hidden));
        put(
            "teacher.latent_dim",
            self.teacher_arch.latent_dim.to_string(),
        );
        match self.teacher_arch.family {
            DecoderFamily::Bernoulli => put("teacher.decoder", "bernoulli".into()),
            DecoderFamily::Gaussian { sigma } => {
                put("teacher.decoder", "gaussian".into());
                put("teacher.sigma", sigma.to_string());
            }
        }
        put("teacher.epochs", self.teacher_train.epochs.to_string());
        put("teacher.lr", self.teacher_train.lr.to_string());
        put(
            "teacher.batch_size",
            self.teacher_train.batch_size.to_string(),
        );
        put("beta.beta0", self.beta.beta0.to_string());
        put("beta.alpha", self.beta.alpha.to_string());
        put("beta.floor", self.beta.floor.to_string());
        put(
            "selection",
            match self.selection {
                SelectionRule::Daal => "daal",
                SelectionRule::Uncertainty => "uncertainty",
            }
            .into(),
        );
        put("batch_size", self.batch_size.to_string());
        put("num_cycles", self.num_cycles.to_string());
        match &self.init {
            InitConfig::Balanced { per_class } => {
                put("init.strategy", "balanced".into());
                put("init.per_class", per_class.to_string());
            }
            InitConfig::Biased { classes, k } => {
                put("init.strategy", "biased".into());
                put("init.classes", join(classes));
                put("init.k", k.to_string());
            }
            InitConfig::Beta { k } => {
                put("init.strategy", "beta".into());
                put("init.k", k.to_string());
            }
        }
        put("num_runs", self.num_runs.to_string());
        put("base_seed", self.base_seed.to_string());
        s
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    fn set<T: std::str::FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.parse(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) if v.is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| {
                        Error::Config(format!("`{key}`: cannot parse `{v}` as a list"))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn points(&mut self, key: &str) -> Result<Option<Vec<[f64; 2]>>> {
        let Some(v) = self.take(key) else {
            return Ok(None);
        };
        let bad = || Error::Config(format!("`{key}`: expected `x,y; x,y; ...`, got `{v}`"));
        v.split(';')
            .map(|pt| {
                let (x, y) = pt.split_once(',').ok_or_else(bad)?;
                Ok([
                    x.trim().parse().map_err(|_| bad())?,
                    y.trim().parse().map_err(|_| bad())?,
                ])
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

fn build(kv: &mut Entries, base_dir: Option<&Path>) -> Result<ALConfig> {
    let dataset = kv.take("dataset").unwrap_or_else(|| "toy".into());
    let mut config = match dataset.as_str() {
        "toy" => {
            let mut t = ToySpec::default();
            kv.set("toy.modes_per_class", &mut t.modes_per_class)?;
            kv.set("toy.class_var", &mut t.class_var)?;
            kv.set("toy.n_inliers", &mut t.n_inliers)?;
            kv.set("toy.outlier_fraction", &mut t.outlier_fraction)?;
            kv.set("toy.bbox_margin", &mut t.bbox_margin)?;
            for c in 0..2 {
                if let Some(means) = kv.points(&format!("toy.class{c}_means"))? {
                    t.class_means[c] = means;
                }
            }
            let mut c = ALConfig::toy();
            c.dataset = DatasetConfig::Toy(t);
            c
        }
        "mnist" => {
            let resolve = |p: String| {
                let p = PathBuf::from(p);
                match base_dir {
                    Some(base) if p.is_relative() => base.join(p),
                    _ => p,
                }
            };
            let mut path = |key: &str| {
                kv.take(key)
                    .map(resolve)
                    .ok_or_else(|| Error::Config(format!("missing `{key}`")))
            };
            let mut m = MnistConfig {
                train_images: path("mnist.train_images")?,
                train_labels: path("mnist.train_labels")?,
                test_images: path("mnist.test_images")?,
                test_labels: path("mnist.test_labels")?,
                split: MnistSplitSpec::default(),
            };
            if let Some(d) = kv.list("mnist.inlier_digits")? {
                m.split.inlier_digits = d;
            }
            kv.set("mnist.per_digit_teacher", &mut m.split.per_digit_teacher)?;
            kv.set("mnist.outlier_multiplier", &mut m.split.outlier_multiplier)?;
            m.split.pool_inlier_cap = kv.parse("mnist.pool_inlier_cap")?;
            ALConfig::mnist(m)
        }
        other => return Err(Error::Config(format!("unknown dataset `{other}`"))),
    };

    if let Some(w) = kv.list("classifier.widths")? {
        config.classifier_widths = w;
    }
    kv.set("classifier.epochs", &mut config.classifier_train.epochs)?;
    kv.set("classifier.lr", &mut config.classifier_train.lr)?;
    if let Some(b) = kv.parse("classifier.batch_size")? {
        config.classifier_train.batch_size = Some(b);
    }

    if let Some(h) = kv.list("teacher.hidden")? {
        config.teacher_arch.hidden = h;
    }
    kv.set("teacher.latent_dim", &mut config.teacher_arch.latent_dim)?;
    let sigma: Option<f64> = kv.parse("teacher.sigma")?;
    match kv.take("teacher.decoder").as_deref() {
        None => {}
        Some("bernoulli") => config.teacher_arch.family = DecoderFamily::Bernoulli,
        Some("gaussian") => {
            config.teacher_arch.family = DecoderFamily::Gaussian {
                sigma: sigma.unwrap_or(0.1),
            }
        }
        Some(other) => return Err(Error::Config(format!("unknown teacher.decoder `{other}`"))),
    }
    if let (Some(s), DecoderFamily::Gaussian { sigma }) = (sigma, &mut config.teacher_arch.family) {
        *sigma = s;
    }
    config.teacher_arch.input_dim = config.classifier_widths.first().copied().unwrap_or(0);
    kv.set("teacher.epochs", &mut config.teacher_train.epochs)?;
    kv.set("teacher.lr", &mut config.teacher_train.lr)?;
    kv.set("teacher.batch_size", &mut config.teacher_train.batch_size)?;

    kv.set("beta.beta0", &mut config.beta.beta0)?;
    kv.set("beta.alpha", &mut config.beta.alpha)?;
    kv.set("beta.floor", &mut config.beta.floor)?;
    match kv.take("selection").as_deref() {
        None | Some("daal") => config.selection = SelectionRule::Daal,
        Some("uncertainty") => config.selection = SelectionRule::Uncertainty,
        Some(other) => return Err(Error::Config(format!("unknown selection `{other}`"))),
    }
    kv.set("batch_size", &mut config.batch_size)?;
    kv.set("num_cycles", &mut config.num_cycles)?;
    kv.set("num_runs", &mut config.num_runs)?;
    kv.set("base_seed", &mut config.base_seed)?;

    let strategy = kv.take("init.strategy");
    let per_class: Option<usize> = kv.parse("init.per_class")?;
    let k: Option<usize> = kv.parse("init.k")?;
    let classes = kv.list("init.classes")?;
    if let Some(s) = strategy {
        config.init = match s.as_str() {
            "balanced" => InitConfig::Balanced {
                per_class: per_class.unwrap_or(1),
            },
            "biased" => InitConfig::Biased {
                classes: classes
                    .ok_or_else(|| Error::Config("biased init needs `init.classes`".into()))?,
                k: k.ok_or_else(|| Error::Config("biased init needs `init.k`".into()))?,
            },
            "beta" => InitConfig::Beta {
                k: k.ok_or_else(|| Error::Config("beta init needs `init.k`".into()))?,
            },
            other => return Err(Error::Config(format!("unknown init.strategy `{other}`"))),
        };
    } else if per_class.is_some() || k.is_some() || classes.is_some() {
        return Err(Error::Config(
            "init parameters given without `init.strategy`".into(),
        ));
    }
    Ok(config)
}
