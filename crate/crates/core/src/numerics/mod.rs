//! Dense tensors, reverse-mode differentiation and first-order optimizers.

mod params;
mod tape;
mod tensor;

pub use params::{ParamStore, UpdateRule};
pub use tape::{sigmoid, softmax_rows, Elementwise, Tape, Var};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: input {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("index {index} out of range for {bound} classes")]
    Index { index: usize, bound: usize },
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("{0}")]
    Contract(String),
}

/// Draws an `n × d` matrix of independent standard normal values.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("sized")
}

/// He-style initialisation for a dense layer: `W ~ N(0, 2/fan_in)`, `b = 0`.
pub fn init_dense<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<(), NumericsError> {
    let scale = (2.0 / fan_in.max(1) as f64).sqrt();
    let mut w = standard_normal(rng, fan_in, fan_out);
    w.data_mut().iter_mut().for_each(|v| *v *= scale);
    store.insert(format!("{prefix}.weight"), w)?;
    store.insert(format!("{prefix}.bias"), Tensor::zeros(vec![1, fan_out]))?;
    Ok(())
}

/// Records `x · W + b` for the dense layer named `prefix`.
pub fn dense(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    x: Var,
) -> Result<Var, NumericsError> {
    let w = tape.param(store, &format!("{prefix}.weight"))?;
    let b = tape.param(store, &format!("{prefix}.bias"))?;
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}
