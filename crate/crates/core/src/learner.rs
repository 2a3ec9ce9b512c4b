//! The classifier being actively trained, and its predictive-entropy criterion.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{self, Reader};
use crate::numerics::{self, softmax_rows, ParamStore, Tape, Tensor, UpdateRule};
use crate::par::{self, Execution};
use crate::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"DAALCLS1";

/// Where a labeled sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Initial,
    Queried { cycle: usize },
}

/// Labeled training data for the classifier, with a record of each sample's origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    provenance: Vec<Provenance>,
    pool_indices: Vec<Option<usize>>,
}

impl LabeledSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            features: Vec::new(),
            dim,
            labels: Vec::new(),
            provenance: Vec::new(),
            pool_indices: Vec::new(),
        }
    }

    pub fn from_tensor(
        features: &Tensor,
        labels: Vec<usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::contract(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let n = labels.len();
        Ok(Self {
            features: features.data().to_vec(),
            dim: features.cols(),
            labels,
            provenance: vec![provenance; n],
            pool_indices: vec![None; n],
        })
    }

    pub fn push(
        &mut self,
        row: &[f64],
        label: usize,
        provenance: Provenance,
        pool_index: Option<usize>,
    ) {
        assert_eq!(row.len(), self.dim, "feature width");
        self.features.extend_from_slice(row);
        self.labels.push(label);
        self.provenance.push(provenance);
        self.pool_indices.push(pool_index);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn pool_indices(&self) -> &[Option<usize>] {
        &self.pool_indices
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> Tensor {
        Tensor::new(vec![self.len(), self.dim], self.features.clone()).expect("sized")
    }

    fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let x = Tensor::new(vec![indices.len(), self.dim], data).expect("sized");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Minibatch size; `None` means `min(32, n)`.
    pub batch_size: Option<usize>,
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Fully connected ReLU network ending in class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    widths: Vec<usize>,
    params: ParamStore,
}

fn layer_name(i: usize) -> String {
    format!("layer{i}")
}

impl ClassifierModel {
    /// `widths` runs from the feature dimension to the number of classes.
    pub fn new(widths: Vec<usize>, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::contract(format!("invalid layer widths {widths:?}")));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::contract("a classifier needs at least two classes"));
        }
        let params = Self::init_params(&widths, seed)?;
        Ok(Self { widths, params })
    }

    fn init_params(widths: &[usize], seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (i, w) in widths.windows(2).enumerate() {
            numerics::init_dense(&mut params, &layer_name(i), w[0], w[1], &mut rng)?;
        }
        Ok(params)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::contract(format!(
                "classifier expects {} features, got input of shape {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        Ok(())
    }

    fn forward(&self, tape: &mut Tape, x: numerics::Var) -> Result<numerics::Var> {
        let mut h = x;
        for i in 0..self.num_layers() {
            h = numerics::dense(tape, &self.params, &layer_name(i), h)?;
            if i + 1 < self.num_layers() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Mean cross-entropy of the current parameters on a batch, recorded on `tape`.
    pub fn loss(&self, tape: &mut Tape, x: &Tensor, labels: &[usize]) -> Result<numerics::Var> {
        self.check_input(x)?;
        let xv = tape.input(x.clone());
        let logits = self.forward(tape, xv)?;
        Ok(tape.softmax_cross_entropy(logits, labels)?)
    }

    /// Mutable access for gradient checks and checkpoint loading.
    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Re-initialises from `seed` and trains with Adam on shuffled minibatches.
    pub fn train(&mut self, data: &LabeledSet, cfg: &TrainConfig, seed: u64) -> Result<TrainLog> {
        if data.is_empty() {
            return Err(Error::contract("cannot train on an empty labeled set"));
        }
        if data.dim() != self.input_dim() {
            return Err(Error::contract(format!(
                "classifier expects {} features, labeled set has {}",
                self.input_dim(),
                data.dim()
            )));
        }
        if let Some(&bad) = data.labels().iter().find(|&&l| l >= self.num_classes()) {
            return Err(Error::contract(format!(
                "label {bad} outside {} classes",
                self.num_classes()
            )));
        }
        self.params = Self::init_params(&self.widths, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05EE_D0FB_A7C4);
        let n = data.len();
        let batch = cfg.batch_size.unwrap_or(32).clamp(1, n);
        let rule = UpdateRule::adam(cfg.lr);
        let mut order: Vec<usize> = (0..n).collect();
        let mut log = TrainLog::default();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for idx in order.chunks(batch) {
                let (x, y) = data.batch(idx);
                let mut tape = Tape::new();
                let loss = self.loss(&mut tape, &x, &y)?;
                total += tape.value(loss).data()[0] * idx.len() as f64;
                self.params.zero_grad();
                tape.backward(loss, &mut self.params)?;
                self.params.step(rule)?;
            }
            log.epoch_losses.push(total / n as f64);
        }
        Ok(log)
    }

    /// Class logits without gradient tracking.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for i in 0..self.num_layers() {
            let w = self.params.get(&format!("{}.weight", layer_name(i)))?;
            let b = self.params.get(&format!("{}.bias", layer_name(i)))?;
            h = h.matmul(w)?;
            let cols = h.cols();
            let last = i + 1 == self.num_layers();
            for row in h.data_mut().chunks_mut(cols) {
                for (v, bias) in row.iter_mut().zip(b.data()) {
                    *v += bias;
                    if !last {
                        *v = v.max(0.0);
                    }
                }
            }
        }
        Ok(h)
    }

    /// Softmax class probabilities, one row per input row.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    /// Arg-max class per row; ties go to the lower class index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::contract("accuracy of an empty set"));
        }
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// Predictive entropy (nats) of every row.
    pub fn entropy_scores(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.entropy_scores_with(Execution::default(), x)
    }

    pub fn entropy_scores_with(&self, exec: Execution, x: &Tensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        par::score_rows(exec, x, |shard| {
            Ok(entropy_of_rows(&self.predict_proba(shard)?))
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        binio::write_u32(&mut w, self.widths.len() as u32).map_err(io)?;
        for &width in &self.widths {
            binio::write_u32(&mut w, width as u32).map_err(io)?;
        }
        for v in self.params.flatten() {
            binio::write_f64(&mut w, v).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(BufReader::new(file), "classifier checkpoint");
        r.magic(CHECKPOINT_MAGIC)?;
        let count = r.u32()? as usize;
        if count > 64 {
            return Err(Error::Format {
                what: "classifier checkpoint".into(),
                detail: format!("implausible layer count {count}"),
            });
        }
        let widths = (0..count)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self::new(widths, 0)?;
        let values = r.f64s(model.params.num_values())?;
        r.finish()?;
        model.params.assign_flat(&values)?;
        Ok(model)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `-Σ p ln p` per row with `0 · ln 0 = 0`, clamped into `[0, ln C]`.
pub fn entropy_of_rows(probs: &Tensor) -> Vec<f64> {
    let c = probs.cols();
    let max = (c as f64).ln();
    (0..probs.rows())
        .map(|i| {
            let h: f64 = probs
                .row(i)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            h.clamp(0.0, max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> LabeledSet {
        // two classes on either side of x = 0 with margin ≥ 1
        let mut set = LabeledSet::empty(2);
        for i in 0..10 {
            let y = i as f64 * 0.3 - 1.5;
            set.push(
                &[-1.0 - (i % 3) as f64 * 0.4, y],
                0,
                Provenance::Initial,
                None,
            );
            set.push(
                &[1.0 + (i % 4) as f64 * 0.3, -y],
                1,
                Provenance::Initial,
                None,
            );
        }
        set
    }

    fn toy_model() -> ClassifierModel {
        ClassifierModel::new(vec![2, 8, 4, 2], 1).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let p = Tensor::from_rows(&[[0.5, 0.5], [1.0, 0.0], [0.9, 0.1]]).unwrap();
        let h = entropy_of_rows(&p);
        assert!((h[0] - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(h[1], 0.0);
        let expected = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((h[2] - expected).abs() < 1e-12);
        assert!((h[2] - 0.3251).abs() < 1e-4);
    }

    #[test]
    fn learns_separable_set() {
        let data = separable();
        let mut model = toy_model();
        let cfg = TrainConfig {
            epochs: 200,
            lr: 0.01,
            batch_size: None,
        };
        let log = model.train(&data, &cfg, 7).unwrap();
        assert_eq!(log.epoch_losses.len(), 200);
        assert_eq!(
            model.accuracy(&data.features(), data.labels()).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_epochs_keeps_seeded_init() {
        let data = separable();
        let mut model = toy_model();
        let log = model
            .train(
                &data,
                &TrainConfig {
                    epochs: 0,
                    lr: 0.01,
                    batch_size: None,
                },
                11,
            )
            .unwrap();
        assert!(log.epoch_losses.is_empty());
        assert_eq!(
            model.params().flatten(),
            ClassifierModel::new(vec![2, 8, 4, 2], 11)
                .unwrap()
                .params()
                .flatten()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable();
        let cfg = TrainConfig {
            epochs: 20,
            lr: 0.01,
            batch_size: Some(4),
        };
        let mut a = toy_model();
        let mut b = toy_model();
        a.train(&data, &cfg, 3).unwrap();
        b.train(&data, &cfg, 3).unwrap();
        assert_eq!(a.params().flatten(), b.params().flatten());
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let mut model = ClassifierModel::new(vec![3, 4, 2], 0).unwrap();
        let data = separable();
        assert!(model
            .train(
                &data,
                &TrainConfig {
                    epochs: 1,
                    lr: 0.1,
                    batch_size: None
                },
                0
            )
            .is_err());
        assert!(model.predict_proba(&Tensor::zeros(vec![2, 2])).is_err());
        assert!(model
            .train(
                &LabeledSet::empty(3),
                &TrainConfig {
                    epochs: 1,
                    lr: 0.1,
                    batch_size: None
                },
                0
            )
            .is_err());
    }

    #[test]
    fn eager_forward_matches_tape() {
        let model = toy_model();
        let x = Tensor::from_rows(&[[0.3, -1.2], [2.0, 0.5]]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let out = model.forward(&mut tape, xv).unwrap();
        let eager = model.logits(&x).unwrap();
        for (a, b) in tape.value(out).data().iter().zip(eager.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cls.bin");
        let model = toy_model();
        model.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"DAALCLS1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(bytes.len(), 8 + 4 + 16 + 8 * model.params().num_values());
        assert_eq!(ClassifierModel::load(&path).unwrap(), model);

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            ClassifierModel::load(&path),
            Err(Error::Format { .. })
        ));
    }
}
