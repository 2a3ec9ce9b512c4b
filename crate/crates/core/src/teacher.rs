//! VAE density teacher.
//!
//! The per-sample ELBO serves as a log-density surrogate. Scores handed to the
//! selector are `σ((ELBO(x) − mean) / std)` where mean and std come from a
//! calibration pass over the pool, which keeps the scores spread inside
//! `(0, 1)` and preserves the ELBO ranking exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{self, Reader};
use crate::numerics::{self, sigmoid, ParamStore, Tape, Tensor, UpdateRule, Var};
use crate::par::{self, Execution};
use crate::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"DAALVAE1";
const BERNOULLI_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecoderFamily {
    Bernoulli,
    /// Gaussian likelihood with a fixed standard deviation.
    Gaussian {
        sigma: f64,
    },
}

impl DecoderFamily {
    fn tag(self) -> u32 {
        match self {
            DecoderFamily::Bernoulli => 0,
            DecoderFamily::Gaussian { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeArch {
    pub input_dim: usize,
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub family: DecoderFamily,
}

impl VaeArch {
    /// 2 → 16 → (2+2) / 2 → 16 → 2 with a Gaussian decoder, σ = 0.1.
    pub fn toy() -> Self {
        Self {
            input_dim: 2,
            hidden: vec![16],
            latent_dim: 2,
            family: DecoderFamily::Gaussian { sigma: 0.1 },
        }
    }

    /// 784 → 256 → (2+2) / 2 → 256 → 784 with a Bernoulli decoder.
    pub fn mnist() -> Self {
        Self {
            input_dim: 784,
            hidden: vec![256],
            latent_dim: 2,
            family: DecoderFamily::Bernoulli,
        }
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(2 * self.latent_dim);
        w
    }

    fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim];
        w.extend(self.hidden.iter().rev());
        w.push(self.input_dim);
        w
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::contract(format!(
                "invalid VAE architecture {self:?}"
            )));
        }
        if let DecoderFamily::Gaussian { sigma } = self.family {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::contract(format!(
                    "decoder sigma must be positive, got {sigma}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    arch: VaeArch,
    params: ParamStore,
}

/// Pool statistics of the deterministic ELBO, used to standardise scores.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCalibration {
    pub elbo_mean: f64,
    pub elbo_std: f64,
    pub computed_over: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TeacherLog {
    /// Mean single-sample ELBO over each epoch's minibatches.
    pub epoch_elbo: Vec<f64>,
}

/// Axis-aligned rectangle `(x_min, x_max, y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BBox {
    /// Centre of grid cell `(row, col)`; row 0 is the top (`y_max`) edge.
    pub fn cell_center(&self, resolution: usize, row: usize, col: usize) -> [f64; 2] {
        let dx = (self.x_max - self.x_min) / resolution as f64;
        let dy = (self.y_max - self.y_min) / resolution as f64;
        [
            self.x_min + (col as f64 + 0.5) * dx,
            self.y_max - (row as f64 + 0.5) * dy,
        ]
    }

    /// All cell centres in row-major order.
    pub fn grid_points(&self, resolution: usize) -> Tensor {
        let mut data = Vec::with_capacity(resolution * resolution * 2);
        for r in 0..resolution {
            for c in 0..resolution {
                data.extend(self.cell_center(resolution, r, c));
            }
        }
        Tensor::new(vec![resolution * resolution, 2], data).expect("sized")
    }
}

/// Closed-form `KL(N(μ, diag exp(logvar)) ‖ N(0, I))` per row.
pub fn kl_to_standard_normal(mu: &Tensor, logvar: &Tensor) -> Vec<f64> {
    let l = mu.cols();
    (0..mu.rows())
        .map(|i| {
            -0.5 * (0..l)
                .map(|j| {
                    let (m, lv) = (mu.get(i, j), logvar.get(i, j));
                    1.0 + lv - m * m - lv.exp()
                })
                .sum::<f64>()
        })
        .collect()
}

/// `z = μ + exp(logvar / 2) ⊙ ε` on the tape.
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, noise: Var) -> Result<Var> {
    let half = tape.affine(logvar, 0.5, 0.0);
    let std = tape.exp(half);
    let scaled = tape.mul(std, noise)?;
    Ok(tape.add(mu, scaled)?)
}

fn enc_name(i: usize) -> String {
    format!("encoder.layer{i}")
}

fn dec_name(i: usize) -> String {
    format!("decoder.layer{i}")
}

impl VaeModel {
    pub fn new(arch: VaeArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (i, w) in arch.encoder_widths().windows(2).enumerate() {
            numerics::init_dense(&mut params, &enc_name(i), w[0], w[1], &mut rng)?;
        }
        for (i, w) in arch.decoder_widths().windows(2).enumerate() {
            numerics::init_dense(&mut params, &dec_name(i), w[0], w[1], &mut rng)?;
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &VaeArch {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.arch.input_dim {
            return Err(Error::contract(format!(
                "teacher expects {} features, got input of shape {:?}",
                self.arch.input_dim,
                x.shape()
            )));
        }
        if self.arch.family == DecoderFamily::Bernoulli {
            if let Some(&bad) = x.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!(
                    "bernoulli decoder needs inputs in [0, 1], found {bad}"
                )));
            }
        }
        Ok(())
    }

    fn mlp(
        &self,
        tape: &mut Tape,
        x: Var,
        layers: usize,
        name: fn(usize) -> String,
    ) -> Result<Var> {
        let mut h = x;
        for i in 0..layers {
            h = numerics::dense(tape, &self.params, &name(i), h)?;
            if i + 1 < layers {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    fn encode_graph(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
        let layers = self.arch.hidden.len() + 1;
        let out = self.mlp(tape, x, layers, enc_name)?;
        let l = self.arch.latent_dim;
        Ok((tape.slice_cols(out, 0, l)?, tape.slice_cols(out, l, 2 * l)?))
    }

    /// Decoder output: Bernoulli means (clamped) or Gaussian means.
    fn decode_graph(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let layers = self.arch.hidden.len() + 1;
        let out = self.mlp(tape, z, layers, dec_name)?;
        Ok(match self.arch.family {
            DecoderFamily::Bernoulli => {
                let p = tape.sigmoid(out);
                tape.clamp(p, BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP)
            }
            DecoderFamily::Gaussian { .. } => out,
        })
    }

    /// Per-sample ELBO (`n × 1`) recorded on `tape`.
    pub fn elbo_graph(&self, tape: &mut Tape, x: &Tensor, noise: &Tensor) -> Result<Var> {
        self.check_input(x)?;
        let l = self.arch.latent_dim;
        if noise.shape() != [x.rows(), l] {
            return Err(Error::contract(format!(
                "noise shape {:?} does not match [{}, {l}]",
                noise.shape(),
                x.rows()
            )));
        }
        let xv = tape.input(x.clone());
        let (mu, logvar) = self.encode_graph(tape, xv)?;
        let eps = tape.input(noise.clone());
        let z = reparameterize(tape, mu, logvar, eps)?;
        let xhat = self.decode_graph(tape, z)?;

        let recon_terms = match self.arch.family {
            DecoderFamily::Bernoulli => {
                let log_p = tape.log(xhat)?;
                let one_minus = tape.affine(xhat, -1.0, 1.0);
                let log_q = tape.log(one_minus)?;
                let x_c = tape.input(Tensor::new(
                    x.shape().to_vec(),
                    x.data().iter().map(|v| 1.0 - v).collect(),
                )?);
                let a = tape.mul(xv, log_p)?;
                let b = tape.mul(x_c, log_q)?;
                tape.add(a, b)?
            }
            DecoderFamily::Gaussian { sigma } => {
                let diff = tape.sub(xv, xhat)?;
                let sq = tape.mul(diff, diff)?;
                let var = sigma * sigma;
                tape.affine(
                    sq,
                    -0.5 / var,
                    -0.5 * (2.0 * std::f64::consts::PI * var).ln(),
                )
            }
        };
        let recon = tape.row_sum(recon_terms)?;

        let mu2 = tape.mul(mu, mu)?;
        let var = tape.exp(logvar);
        let t = tape.sub(logvar, mu2)?;
        let t = tape.sub(t, var)?;
        let t = tape.affine(t, 1.0, 1.0);
        let kl_sum = tape.row_sum(t)?;
        let kl = tape.affine(kl_sum, -0.5, 0.0);
        Ok(tape.sub(recon, kl)?)
    }

    /// Encoder means and log-variances.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let (mu, logvar) = self.encode_graph(&mut tape, xv)?;
        Ok((tape.value(mu).clone(), tape.value(logvar).clone()))
    }

    /// Single-sample ELBO per row; `noise = None` uses `z = μ`.
    pub fn elbo(&self, x: &Tensor, noise: Option<&Tensor>) -> Result<Vec<f64>> {
        let zeros;
        let noise = match noise {
            Some(n) => n,
            None => {
                zeros = Tensor::zeros(vec![x.rows(), self.arch.latent_dim]);
                &zeros
            }
        };
        let mut tape = Tape::new();
        let out = self.elbo_graph(&mut tape, x, noise)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Deterministic (`z = μ`) ELBO, sharded over rows.
    pub fn elbo_deterministic(&self, exec: Execution, x: &Tensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        par::score_rows(exec, x, |shard| self.elbo(shard, None))
    }

    /// Maximises the mean ELBO with Adam; continues from the current parameters.
    pub fn train(
        &mut self,
        data: &Tensor,
        cfg: &TeacherTrainConfig,
        seed: u64,
    ) -> Result<TeacherLog> {
        self.check_input(data)?;
        let n = data.rows();
        if n < 2 {
            return Err(Error::contract(format!(
                "teacher training needs at least 2 samples, got {n}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = cfg.batch_size.clamp(1, n);
        let rule = UpdateRule::adam(cfg.lr);
        self.params.reset_state();
        let mut order: Vec<usize> = (0..n).collect();
        let mut log = TeacherLog::default();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for idx in order.chunks(batch) {
                let x = data.select_rows(idx);
                let noise = numerics::standard_normal(&mut rng, idx.len(), self.arch.latent_dim);
                let mut tape = Tape::new();
                let elbo = self.elbo_graph(&mut tape, &x, &noise)?;
                total += tape.value(elbo).data().iter().sum::<f64>();
                let mean = tape.mean(elbo);
                let loss = tape.affine(mean, -1.0, 0.0);
                self.params.zero_grad();
                tape.backward(loss, &mut self.params)?;
                self.params.step(rule)?;
            }
            log.epoch_elbo.push(total / n as f64);
        }
        Ok(log)
    }

    /// Mean and population standard deviation of the deterministic ELBO over `pool`.
    pub fn calibrate(&self, pool: &Tensor, pool_name: &str) -> Result<DensityCalibration> {
        self.calibrate_with(Execution::default(), pool, pool_name)
    }

    pub fn calibrate_with(
        &self,
        exec: Execution,
        pool: &Tensor,
        pool_name: &str,
    ) -> Result<DensityCalibration> {
        let m = pool.rows();
        if m < 2 {
            return Err(Error::DegeneratePool(format!(
                "{m} samples in `{pool_name}`"
            )));
        }
        let elbo = self.elbo_deterministic(exec, pool)?;
        let mean = elbo.iter().sum::<f64>() / m as f64;
        let var = elbo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        let std = var.sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::DegeneratePool(format!(
                "ELBO standard deviation {std} over `{pool_name}`"
            )));
        }
        Ok(DensityCalibration {
            elbo_mean: mean,
            elbo_std: std,
            computed_over: pool_name.to_string(),
        })
    }

    /// Calibrated density scores in the open interval `(0, 1)`.
    pub fn density_score(&self, cal: &DensityCalibration, x: &Tensor) -> Result<Vec<f64>> {
        self.density_score_with(Execution::default(), cal, x)
    }

    pub fn density_score_with(
        &self,
        exec: Execution,
        cal: &DensityCalibration,
        x: &Tensor,
    ) -> Result<Vec<f64>> {
        let elbo = self.elbo_deterministic(exec, x)?;
        Ok(elbo
            .into_iter()
            .map(|e| standardized_sigmoid(e, cal))
            .collect())
    }

    /// Row-major `resolution × resolution` grid of `q^β` at cell centres.
    pub fn score_grid(
        &self,
        cal: &DensityCalibration,
        bbox: &BBox,
        resolution: usize,
        beta: f64,
    ) -> Result<Vec<f64>> {
        if self.arch.input_dim != 2 {
            return Err(Error::UnsupportedDimension(self.arch.input_dim));
        }
        if beta < 0.0 {
            return Err(Error::contract(format!(
                "beta must be nonnegative, got {beta}"
            )));
        }
        let q = self.density_score(cal, &bbox.grid_points(resolution))?;
        Ok(q.into_iter().map(|v| v.powf(beta)).collect())
    }

    pub fn save(&self, cal: &DensityCalibration, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        binio::write_u32(&mut w, self.arch.latent_dim as u32).map_err(io)?;
        binio::write_u32(&mut w, self.arch.family.tag()).map_err(io)?;
        if let DecoderFamily::Gaussian { sigma } = self.arch.family {
            binio::write_f64(&mut w, sigma).map_err(io)?;
        }
        for widths in [self.arch.encoder_widths(), self.arch.decoder_widths()] {
            binio::write_u32(&mut w, widths.len() as u32).map_err(io)?;
            for width in widths {
                binio::write_u32(&mut w, width as u32).map_err(io)?;
            }
        }
        for v in self.params.flatten() {
            binio::write_f64(&mut w, v).map_err(io)?;
        }
        binio::write_f64(&mut w, cal.elbo_mean).map_err(io)?;
        binio::write_f64(&mut w, cal.elbo_std).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, DensityCalibration)> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let what = "teacher checkpoint";
        let bad = |detail: String| Error::Format {
            what: what.into(),
            detail,
        };
        let mut r = Reader::new(BufReader::new(file), what);
        r.magic(CHECKPOINT_MAGIC)?;
        let latent_dim = r.u32()? as usize;
        let family = match r.u32()? {
            0 => DecoderFamily::Bernoulli,
            1 => DecoderFamily::Gaussian { sigma: r.f64()? },
            t => return Err(bad(format!("unknown decoder family tag {t}"))),
        };
        let read_widths = |r: &mut Reader<_>| -> Result<Vec<usize>> {
            let n = r.u32()? as usize;
            if !(2..=64).contains(&n) {
                return Err(bad(format!("implausible layer count {n}")));
            }
            (0..n).map(|_| r.u32().map(|w| w as usize)).collect()
        };
        let enc = read_widths(&mut r)?;
        let dec = read_widths(&mut r)?;
        let arch = VaeArch {
            input_dim: enc[0],
            hidden: enc[1..enc.len() - 1].to_vec(),
            latent_dim,
            family,
        };
        if arch.encoder_widths() != enc || arch.decoder_widths() != dec {
            return Err(bad(format!(
                "inconsistent widths {enc:?} / {dec:?} for latent {latent_dim}"
            )));
        }
        let mut model = Self::new(arch, 0)?;
        let values = r.f64s(model.params.num_values())?;
        let cal = DensityCalibration {
            elbo_mean: r.f64()?,
            elbo_std: r.f64()?,
            computed_over: path.display().to_string(),
        };
        r.finish()?;
        model.params.assign_flat(&values)?;
        Ok((model, cal))
    }
}

/// `σ((elbo − mean) / std)` kept strictly inside `(0, 1)`.
pub fn standardized_sigmoid(elbo: f64, cal: &DensityCalibration) -> f64 {
    let q = sigmoid((elbo - cal.elbo_mean) / cal.elbo_std);
    q.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(mean: f64, std: f64) -> DensityCalibration {
        DensityCalibration {
            elbo_mean: mean,
            elbo_std: std,
            computed_over: "test".into(),
        }
    }

    #[test]
    fn kl_closed_form() {
        let zero = Tensor::zeros(vec![1, 3]);
        assert_eq!(kl_to_standard_normal(&zero, &zero), vec![0.0]);
        let mu = Tensor::from_rows(&[[1.0]]).unwrap();
        let lv = Tensor::from_rows(&[[0.0]]).unwrap();
        assert!((kl_to_standard_normal(&mu, &lv)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reparameterize_examples() {
        let mu = Tensor::from_rows(&[[0.5, -1.0]]).unwrap();
        let lv = Tensor::from_rows(&[[0.3, 0.0]]).unwrap();
        let mut tape = Tape::new();
        let (m, l) = (tape.input(mu.clone()), tape.input(lv));
        let zero = tape.input(Tensor::zeros(vec![1, 2]));
        let z = reparameterize(&mut tape, m, l, zero).unwrap();
        assert_eq!(tape.value(z).data(), mu.data());

        let mut tape = Tape::new();
        let m = tape.input(mu.clone());
        let l = tape.input(Tensor::zeros(vec![1, 2]));
        let eps = tape.input(Tensor::from_rows(&[[0.25, -2.0]]).unwrap());
        let z = reparameterize(&mut tape, m, l, eps).unwrap();
        assert_eq!(tape.value(z).data(), &[0.75, -3.0]);
    }

    #[test]
    fn graph_kl_matches_closed_form() {
        let model = VaeModel::new(VaeArch::toy(), 3).unwrap();
        let x = Tensor::from_rows(&[[0.4, -0.2], [1.5, 2.0]]).unwrap();
        let (mu, lv) = model.encode(&x).unwrap();
        let kl = kl_to_standard_normal(&mu, &lv);
        // recon − elbo recovers KL when the reconstruction is evaluated at z = μ
        let elbo = model.elbo(&x, None).unwrap();
        let mut tape = Tape::new();
        let muv = tape.input(mu.clone());
        let xhat = model.decode_graph(&mut tape, muv).unwrap();
        let xhat = tape.value(xhat).clone();
        for i in 0..2 {
            let sq: f64 = (0..2).map(|j| (x.get(i, j) - xhat.get(i, j)).powi(2)).sum();
            let recon = -0.5 * (sq / 0.01 + 2.0 * (2.0 * std::f64::consts::PI * 0.01).ln());
            assert!((recon - elbo[i] - kl[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn bernoulli_elbo_nonpositive_and_domain_checked() {
        let arch = VaeArch {
            input_dim: 6,
            hidden: vec![5],
            latent_dim: 2,
            family: DecoderFamily::Bernoulli,
        };
        let model = VaeModel::new(arch, 1).unwrap();
        let x = Tensor::from_rows(&[[0.0, 1.0, 0.5, 0.2, 1.0, 0.0], [1.0; 6]]).unwrap();
        let noise = Tensor::from_rows(&[[0.3, -1.0], [2.0, 0.1]]).unwrap();
        assert!(model
            .elbo(&x, Some(&noise))
            .unwrap()
            .iter()
            .all(|&e| e <= 0.0));
        let bad = Tensor::from_rows(&[[0.0, 1.2, 0.5, 0.2, 1.0, 0.0]]).unwrap();
        assert!(matches!(model.elbo(&bad, None), Err(Error::Domain(_))));
    }

    #[test]
    fn density_score_examples() {
        let c = cal(-3.0, 2.0);
        assert_eq!(standardized_sigmoid(-3.0, &c), 0.5);
        assert!((standardized_sigmoid(-1.0, &c) - 0.731_058_578_630_004_9).abs() < 1e-12);
        let hi = standardized_sigmoid(1e6, &c);
        let lo = standardized_sigmoid(-1e6, &c);
        assert!(hi < 1.0 && lo > 0.0);
    }

    #[test]
    fn calibrate_rejects_degenerate_pools() {
        let model = VaeModel::new(VaeArch::toy(), 0).unwrap();
        let one = Tensor::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(matches!(
            model.calibrate(&one, "p"),
            Err(Error::DegeneratePool(_))
        ));
        let same = Tensor::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            model.calibrate(&same, "p"),
            Err(Error::DegeneratePool(_))
        ));
    }

    #[test]
    fn score_grid_beta_zero_is_one_and_needs_2d() {
        let model = VaeModel::new(VaeArch::toy(), 0).unwrap();
        let pool = Tensor::from_rows(&[[0.0, 0.0], [1.0, -1.0], [3.0, 2.0]]).unwrap();
        let c = model.calibrate(&pool, "p").unwrap();
        let bbox = BBox {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -2.0,
            y_max: 2.0,
        };
        assert!(model
            .score_grid(&c, &bbox, 5, 0.0)
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));

        let wide = VaeModel::new(
            VaeArch {
                input_dim: 3,
                ..VaeArch::toy()
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            wide.score_grid(&c, &bbox, 5, 1.0),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn grid_cells_are_row_major_from_top() {
        let bbox = BBox {
            x_min: 0.0,
            x_max: 2.0,
            y_min: 0.0,
            y_max: 2.0,
        };
        assert_eq!(bbox.cell_center(2, 0, 0), [0.5, 1.5]);
        assert_eq!(bbox.cell_center(2, 0, 1), [1.5, 1.5]);
        assert_eq!(bbox.cell_center(2, 1, 0), [0.5, 0.5]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.bin");
        let model = VaeModel::new(VaeArch::toy(), 9).unwrap();
        let c = cal(-1.5, 0.25);
        model.save(&c, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"DAALVAE1");
        let (back, back_cal) = VaeModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!((back_cal.elbo_mean, back_cal.elbo_std), (-1.5, 0.25));
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(VaeModel::load(&path).is_err());
    }
}
