use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::{add_col_sums, gemm, sigmoid, Tensor};
use super::NnError;
use crate::rng::Rng;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
    /// Inference-like pass in which batch norm normalizes with batch
    /// statistics and accumulates population statistics.
    Calibrate,
}

/// Per-pass context: the mode and, in training, the dropout stream.
pub struct Ctx<'a> {
    pub mode: Mode,
    pub rng: Option<&'a mut Rng>,
}

impl Ctx<'_> {
    pub fn infer() -> Ctx<'static> {
        Ctx { mode: Mode::Infer, rng: None }
    }
}

/// A named tensor. Non-trainable ones (batch-norm running statistics)
/// carry no gradient and are skipped by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn zeros(name: &str, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param { name: name.into(), shape, value: vec![0.0; n], grad: vec![0.0; n], trainable: true }
    }

    pub fn filled(name: &str, shape: Vec<usize>, v: f64) -> Self {
        let mut p = Param::zeros(name, shape);
        p.value.fill(v);
        p
    }

    pub fn buffer(name: &str, shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Param { name: name.into(), shape, value: vec![v; n], grad: Vec::new(), trainable: false }
    }

    /// Truncated normal at `±2 std`, mean zero.
    pub fn truncated_normal(name: &str, shape: Vec<usize>, std: f64, rng: &mut Rng) -> Self {
        let mut p = Param::zeros(name, shape);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for v in &mut p.value {
            *v = loop {
                let z: f64 = normal.sample(rng);
                if z.abs() <= 2.0 {
                    break z * std;
                }
            };
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub trait Layer: Send + Sync {
    /// Short layer-type tag used in parameter names and reports.
    fn kind(&self) -> &'static str;
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor, NnError>;
    /// Consumes the cache of the last training forward pass.
    fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError>;
    /// Backward pass given the gradient at the pre-activation, used for a
    /// sigmoid head whose derivative cancels against the loss.
    fn backward_from_logits(&mut self, _dz: &Tensor) -> Result<Tensor, NnError> {
        Err(NnError::Spec(format!("{} cannot take logit gradients", self.kind())))
    }
    /// Called around a [`Mode::Calibrate`] sweep.
    fn begin_calibration(&mut self) {}
    fn end_calibration(&mut self) {}
    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

fn check_last(x: &Tensor, want: usize, layer: &str) -> Result<(), NnError> {
    if x.shape.len() < 2 || x.last_dim() != want {
        return Err(NnError::Shape(format!("{layer} expects last axis {want}, got {:?}", x.shape)));
    }
    Ok(())
}

/// Fully connected layer on the last axis; leading axes are treated as
/// rows, so it is applied per time step on sequences.
pub struct Dense {
    pub w: Param,
    pub b: Param,
    pub act: Activation,
    inputs: usize,
    units: usize,
    cache: Option<(Tensor, Vec<f64>, Vec<f64>)>,
}

impl Dense {
    pub fn new(inputs: usize, units: usize, act: Activation, init_std: f64, rng: &mut Rng) -> Self {
        Dense {
            w: Param::truncated_normal("w", vec![inputs, units], init_std, rng),
            b: Param::zeros("b", vec![units]),
            act,
            inputs,
            units,
            cache: None,
        }
    }
}

impl Layer for Dense {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor, NnError> {
        check_last(x, self.inputs, "dense")?;
        let rows = x.rows();
        let mut z = vec![0.0; rows * self.units];
        for row in z.chunks_exact_mut(self.units) {
            row.copy_from_slice(&self.b.value);
        }
        gemm(rows, self.inputs, self.units, 1.0, &x.data, false, &self.w.value, false, 1.0, &mut z);
        let y: Vec<f64> = z.iter().map(|v| self.act.apply(*v)).collect();
        let mut shape = x.shape.clone();
        *shape.last_mut().expect("rank checked") = self.units;
        self.cache = (ctx.mode == Mode::Train).then(|| (x.clone(), z, y.clone()));
        Tensor::new(shape, y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let (x, z, y) = self.cache.take().ok_or(NnError::StaleCache("dense"))?;
        if dy.data.len() != y.len() {
            return Err(NnError::Shape("dense gradient size".into()));
        }
        let dz: Vec<f64> =
            dy.data.iter().zip(z.iter().zip(&y)).map(|(g, (z, y))| g * self.act.derivative(*z, *y)).collect();
        self.backward_linear(x, dz)
    }

    fn backward_from_logits(&mut self, dz: &Tensor) -> Result<Tensor, NnError> {
        let (x, z, _) = self.cache.take().ok_or(NnError::StaleCache("dense"))?;
        if dz.data.len() != z.len() {
            return Err(NnError::Shape("dense gradient size".into()));
        }
        self.backward_linear(x, dz.data.clone())
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

impl Dense {
    fn backward_linear(&mut self, x: Tensor, dz: Vec<f64>) -> Result<Tensor, NnError> {
        let rows = x.rows();
        gemm(self.inputs, rows, self.units, 1.0, &x.data, true, &dz, false, 1.0, &mut self.w.grad);
        add_col_sums(&dz, self.units, &mut self.b.grad);
        let mut dx = vec![0.0; rows * self.inputs];
        gemm(rows, self.units, self.inputs, 1.0, &dz, false, &self.w.value, true, 0.0, &mut dx);
        Tensor::new(x.shape, dx)
    }
}

/// Normalizes each channel (last axis) over all other axes of the batch.
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub epsilon: f64,
    channels: usize,
    updates: u64,
    calib: Option<(f64, Vec<f64>, Vec<f64>)>,
    cache: Option<(Vec<usize>, Vec<f64>, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Self {
        BatchNorm {
            gamma: Param::filled("gamma", vec![channels], 1.0),
            beta: Param::zeros("beta", vec![channels]),
            running_mean: Param::buffer("running_mean", vec![channels], 0.0),
            running_var: Param::buffer("running_var", vec![channels], 1.0),
            momentum,
            epsilon,
            channels,
            updates: 0,
            calib: None,
            cache: None,
        }
    }

    /// Batch statistics per channel: mean and biased variance.
    pub fn batch_stats(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.channels;
        let rows = (x.len() / c) as f64;
        let mut mean = vec![0.0; c];
        add_col_sums(x, c, &mut mean);
        mean.iter_mut().for_each(|m| *m /= rows);
        let mut var = vec![0.0; c];
        for row in x.chunks_exact(c) {
            for j in 0..c {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= rows);
        (mean, var)
    }
}

impl Layer for BatchNorm {
    fn kind(&self) -> &'static str {
        "batch_norm"
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor, NnError> {
        check_last(x, self.channels, "batch_norm")?;
        let c = self.channels;
        let (mean, var) = match ctx.mode {
            Mode::Train | Mode::Calibrate => self.batch_stats(&x.data),
            Mode::Infer => (self.running_mean.value.clone(), self.running_var.value.clone()),
        };
        if ctx.mode == Mode::Calibrate {
            let (n, sum, sq) = self.calib.get_or_insert_with(|| (0.0, vec![0.0; c], vec![0.0; c]));
            for row in x.data.chunks_exact(c) {
                for j in 0..c {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
            }
            *n += (x.data.len() / c) as f64;
        }
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut xhat = vec![0.0; x.data.len()];
        let mut y = vec![0.0; x.data.len()];
        for ((xr, hr), yr) in x.data.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(y.chunks_exact_mut(c)) {
            for j in 0..c {
                hr[j] = (xr[j] - mean[j]) * inv[j];
                yr[j] = self.gamma.value[j] * hr[j] + self.beta.value[j];
            }
        }
        if ctx.mode == Mode::Train {
            // Plain averaging until the exponential window is full, so the
            // running statistics never keep a trace of their initial values.
            let n = self.updates as f64;
            let m = self.momentum.min(n / (n + 1.0));
            self.updates += 1;
            for j in 0..c {
                self.running_mean.value[j] = m * self.running_mean.value[j] + (1.0 - m) * mean[j];
                self.running_var.value[j] = m * self.running_var.value[j] + (1.0 - m) * var[j];
            }
            self.cache = Some((x.shape.clone(), xhat, inv));
        } else {
            self.cache = None;
        }
        Tensor::new(x.shape.clone(), y)
    }

    fn begin_calibration(&mut self) {
        self.calib = None;
    }

    fn end_calibration(&mut self) {
        if let Some((n, sum, sq)) = self.calib.take() {
            if n > 0.0 {
                for j in 0..self.channels {
                    let m = sum[j] / n;
                    self.running_mean.value[j] = m;
                    self.running_var.value[j] = (sq[j] / n - m * m).max(0.0);
                }
            }
        }
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let (shape, xhat, inv) = self.cache.take().ok_or(NnError::StaleCache("batch_norm"))?;
        if dy.data.len() != xhat.len() {
            return Err(NnError::Shape("batch_norm gradient size".into()));
        }
        let c = self.channels;
        let rows = (xhat.len() / c) as f64;
        let mut sum_d = vec![0.0; c];
        let mut sum_dx = vec![0.0; c];
        for (gr, hr) in dy.data.chunks_exact(c).zip(xhat.chunks_exact(c)) {
            for j in 0..c {
                self.gamma.grad[j] += gr[j] * hr[j];
                self.beta.grad[j] += gr[j];
                let dh = gr[j] * self.gamma.value[j];
                sum_d[j] += dh;
                sum_dx[j] += dh * hr[j];
            }
        }
        let mut dx = vec![0.0; xhat.len()];
        for ((out, gr), hr) in dx.chunks_exact_mut(c).zip(dy.data.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
            for j in 0..c {
                let dh = gr[j] * self.gamma.value[j];
                out[j] = inv[j] / rows * (rows * dh - sum_d[j] - hr[j] * sum_dx[j]);
            }
        }
        Tensor::new(shape, dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

/// Inverted dropout; identity at inference.
pub struct Dropout {
    pub rate: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Dropout { rate, mask: None }
    }
}

impl Layer for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor, NnError> {
        if ctx.mode != Mode::Train {
            self.mask = None;
            return Ok(x.clone());
        }
        if self.rate == 0.0 {
            self.mask = Some(vec![1.0; x.data.len()]);
            return Ok(x.clone());
        }
        let rng = ctx.rng.as_deref_mut().ok_or(NnError::MissingRng)?;
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> =
            (0..x.data.len()).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let y = x.data.iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.mask = Some(mask);
        Tensor::new(x.shape.clone(), y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let mask = self.mask.take().ok_or(NnError::StaleCache("dropout"))?;
        if mask.len() != dy.data.len() {
            return Err(NnError::Shape("dropout gradient size".into()));
        }
        Tensor::new(dy.shape.clone(), dy.data.iter().zip(&mask).map(|(g, m)| g * m).collect())
    }
}

/// Reinterprets each sample with a new shape; `Flatten` is the rank-1 case.
pub struct Reshape {
    pub to: Vec<usize>,
    from: Option<Vec<usize>>,
    flatten: bool,
}

impl Reshape {
    pub fn new(to: Vec<usize>) -> Self {
        Reshape { to, from: None, flatten: false }
    }

    pub fn flatten(size: usize) -> Self {
        Reshape { to: vec![size], from: None, flatten: true }
    }
}

impl Layer for Reshape {
    fn kind(&self) -> &'static str {
        if self.flatten {
            "flatten"
        } else {
            "reshape"
        }
    }

    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Tensor, NnError> {
        let per: usize = x.sample_shape().iter().product();
        if per != self.to.iter().product::<usize>() {
            return Err(NnError::Shape(format!("cannot reshape {:?} to {:?}", x.sample_shape(), self.to)));
        }
        self.from = (ctx.mode == Mode::Train).then(|| x.shape.clone());
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.to);
        Tensor::new(shape, x.data.clone())
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let from = self.from.take().ok_or(NnError::StaleCache("reshape"))?;
        Tensor::new(from, dy.data.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn truncated_init_bounds() {
        let p = Param::truncated_normal("w", vec![100, 50], 0.05, &mut rng_from_seed(1));
        assert!(p.value.iter().all(|v| v.abs() <= 0.1));
        let mean = p.value.iter().sum::<f64>() / p.len() as f64;
        assert!(mean.abs() < 0.003);
    }

    #[test]
    fn batch_norm_normalizes_in_training() {
        let mut rng = rng_from_seed(4);
        let x: Vec<f64> = (0..64 * 3).map(|_| 50.0 + 100.0 * rng.random::<f64>()).collect();
        let x = Tensor::new(vec![64, 3], x).unwrap();
        let mut bn = BatchNorm::new(3, 0.99, 1e-5);
        bn.gamma.value = vec![2.0, 3.0, 4.0];
        bn.beta.value = vec![1.0, 1.0, 1.0];
        bn.forward(&x, &mut Ctx { mode: Mode::Train, rng: None }).unwrap();
        let (_, xhat, _) = bn.cache.clone().unwrap();
        let probe = BatchNorm::new(3, 0.99, 1e-5);
        let (m, v) = probe.batch_stats(&xhat);
        for j in 0..3 {
            assert!(m[j].abs() < 1e-6, "{m:?}");
            assert!((v[j] - 1.0).abs() < 1e-6, "{v:?}");
        }
    }

    #[test]
    fn dropout_identity_at_inference() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut d = Dropout::new(0.5);
        assert_eq!(d.forward(&x, &mut Ctx::infer()).unwrap(), x);
        assert!(matches!(d.backward(&x), Err(NnError::StaleCache(_))));
    }
}
