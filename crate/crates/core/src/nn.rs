//! Layer primitives over `candle_core` tensors (NCHW layout) with explicit,
//! seeded initialization and named parameters.

use candle_core::{DType, Device, Tensor, Var};

use crate::error::Result;
use crate::rng::SeededRng;

/// Standard deviation of the zero-mean Gaussian weight initializer.
pub const INIT_STD: f64 = 0.02;
/// Negative-side slope of every leaky rectifier.
pub const LEAK_SLOPE: f64 = 0.2;
/// Running-statistic retention factor for batch normalization.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-stat updates, dropout on.
    Train,
    /// Batch statistics and dropout, but running statistics stay untouched.
    TrainFrozen,
    /// Running statistics; dropout only when requested.
    Inference { dropout: bool },
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train | Mode::TrainFrozen)
    }

    pub fn dropout(self) -> bool {
        match self {
            Mode::Train | Mode::TrainFrozen => true,
            Mode::Inference { dropout } => dropout,
        }
    }
}

/// A named variable. Buffers (running statistics) are saved and restored
/// but never touched by the optimizer.
#[derive(Clone, Debug)]
pub struct NamedVar {
    pub name: String,
    pub var: Var,
    pub trainable: bool,
}

pub(crate) fn gaussian_var(
    shape: &[usize],
    std: f64,
    dtype: DType,
    rng: &mut SeededRng,
) -> Result<Var> {
    let n = shape.iter().product();
    let t = Tensor::from_vec(rng.gaussian_vec(n, std), shape, &Device::Cpu)?.to_dtype(dtype)?;
    Ok(Var::from_tensor(&t)?)
}

pub(crate) fn const_var(shape: &[usize], value: f64, dtype: DType) -> Result<Var> {
    let t = (Tensor::ones(shape, dtype, &Device::Cpu)? * value)?;
    Ok(Var::from_tensor(&t)?)
}

pub fn relu(x: &Tensor) -> Result<Tensor> {
    kinks::note(x, &[0.0])?;
    Ok(x.relu()?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    kinks::note(x, &[0.0])?;
    // (1 - s) * relu(x) + s * x
    Ok(((x.relu()? * (1.0 - slope))? + (x * slope)?)?)
}

/// Records which linear piece every piecewise-linear op is on. Two
/// evaluations with equal patterns lie on the same piece of the loss, so a
/// finite difference between them is free of kink effects.
pub mod kinks {
    use std::cell::RefCell;
    use std::hash::{DefaultHasher, Hash, Hasher};

    use candle_core::{DType, Tensor};

    use crate::error::Result;

    thread_local! {
        static PATTERN: RefCell<Option<Vec<u64>>> = const { RefCell::new(None) };
    }

    /// Runs `f` and returns its result with the pattern of every op it
    /// evaluated, in call order. Nested calls are not supported.
    pub fn record<R>(f: impl FnOnce() -> R) -> (R, Vec<u64>) {
        PATTERN.with(|p| *p.borrow_mut() = Some(Vec::new()));
        let out = f();
        let pattern = PATTERN.with(|p| p.borrow_mut().take()).unwrap_or_default();
        (out, pattern)
    }

    /// Logs, for each element of `x`, how many of `points` lie below it.
    pub(crate) fn note(x: &Tensor, points: &[f64]) -> Result<()> {
        if PATTERN.with(|p| p.borrow().is_none()) {
            return Ok(());
        }
        let v = x.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        let mut h = DefaultHasher::new();
        for e in v {
            points.iter().filter(|&&k| e > k).count().hash(&mut h);
        }
        let digest = h.finish();
        PATTERN.with(|p| {
            if let Some(p) = p.borrow_mut().as_mut() {
                p.push(digest);
            }
        });
        Ok(())
    }
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

pub fn dropout(x: &Tensor, rate: f64, rng: &mut SeededRng) -> Result<Tensor> {
    let mask = Tensor::from_vec(rng.dropout_mask(x.elem_count(), rate), x.dims(), x.device())?
        .to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

#[derive(Debug)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        dtype: DType,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            weight: gaussian_var(&[c_out, c_in, kernel, kernel], INIT_STD, dtype, rng)?,
            bias: if bias {
                Some(const_var(&[c_out], 0.0, dtype)?)
            } else {
                None
            },
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.as_tensor().reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<NamedVar>) {
        push(out, prefix, "weight", &self.weight, true);
        if let Some(b) = &self.bias {
            push(out, prefix, "bias", b, true);
        }
    }
}

/// Transposed convolution; weight layout is `(c_in, c_out, k, k)`.
#[derive(Debug)]
pub struct ConvTranspose2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        dtype: DType,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            weight: gaussian_var(&[c_in, c_out, kernel, kernel], INIT_STD, dtype, rng)?,
            bias: if bias {
                Some(const_var(&[c_out], 0.0, dtype)?)
            } else {
                None
            },
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(self.weight.as_tensor(), self.padding, 0, self.stride, 1)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.as_tensor().reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<NamedVar>) {
        push(out, prefix, "weight", &self.weight, true);
        if let Some(b) = &self.bias {
            push(out, prefix, "bias", b, true);
        }
    }
}

#[derive(Debug)]
pub struct BatchNorm2d {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Var,
    pub running_var: Var,
}

impl BatchNorm2d {
    pub fn new(channels: usize, dtype: DType) -> Result<Self> {
        Ok(Self {
            gamma: const_var(&[channels], 1.0, dtype)?,
            beta: const_var(&[channels], 0.0, dtype)?,
            running_mean: const_var(&[channels], 0.0, dtype)?,
            running_var: const_var(&[channels], 1.0, dtype)?,
        })
    }

    /// Train mode normalizes with batch statistics (biased variance) and
    /// folds them into the running averages; inference uses the averages.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (mean, var) = if mode.is_train() {
            let mean = x.mean_keepdim((0, 2, 3))?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim((0, 2, 3))?;
            if mode == Mode::Train {
                self.track(&mean, &var)?;
            }
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().reshape((1, (), 1, 1))?,
                self.running_var.as_tensor().reshape((1, (), 1, 1))?,
            )
        };
        let xhat = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + BN_EPS)?.sqrt()?)?;
        let gamma = self.gamma.as_tensor().reshape((1, (), 1, 1))?;
        let beta = self.beta.as_tensor().reshape((1, (), 1, 1))?;
        Ok(xhat.broadcast_mul(&gamma)?.broadcast_add(&beta)?)
    }

    fn track(&self, mean: &Tensor, var: &Tensor) -> Result<()> {
        let m = BN_MOMENTUM;
        let rm = ((self.running_mean.as_tensor() * m)? + (mean.flatten_all()?.detach() * (1.0 - m))?)?;
        let rv = ((self.running_var.as_tensor() * m)? + (var.flatten_all()?.detach() * (1.0 - m))?)?;
        self.running_mean.set(&rm)?;
        self.running_var.set(&rv)?;
        Ok(())
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<NamedVar>) {
        push(out, prefix, "gamma", &self.gamma, true);
        push(out, prefix, "beta", &self.beta, true);
        push(out, prefix, "running_mean", &self.running_mean, false);
        push(out, prefix, "running_var", &self.running_var, false);
    }
}

#[derive(Debug)]
pub struct Linear {
    /// `(out, in)`
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, dtype: DType, rng: &mut SeededRng) -> Result<Self> {
        Ok(Self {
            weight: gaussian_var(&[d_out, d_in], INIT_STD, dtype, rng)?,
            bias: const_var(&[d_out], 0.0, dtype)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x
            .matmul(&self.weight.as_tensor().t()?)?
            .broadcast_add(self.bias.as_tensor())?)
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<NamedVar>) {
        push(out, prefix, "weight", &self.weight, true);
        push(out, prefix, "bias", &self.bias, true);
    }
}

fn push(out: &mut Vec<NamedVar>, prefix: &str, leaf: &str, var: &Var, trainable: bool) {
    out.push(NamedVar {
        name: format!("{prefix}.{leaf}"),
        var: var.clone(),
        trainable,
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::new(&[-2.0f64, -0.5, 0.0, 1.5], &Device::Cpu).unwrap();
        let y: Vec<f64> = leaky_relu(&x, 0.2).unwrap().to_vec1().unwrap();
        for (a, b) in y.iter().zip([-0.4, -0.1, 0.0, 1.5]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn batchnorm_train_normalizes_and_tracks() {
        let bn = BatchNorm2d::new(1, DType::F64).unwrap();
        let x = Tensor::new(&[1.0f64, 3.0, 5.0, 7.0], &Device::Cpu)
            .unwrap()
            .reshape((2, 1, 1, 2))
            .unwrap();
        let y: Vec<f64> = bn.forward(&x, Mode::Train).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        let rm: Vec<f64> = bn.running_mean.as_tensor().to_vec1().unwrap();
        assert!((rm[0] - 0.4).abs() < 1e-12);
        // var = 5, running = 0.9 * 1 + 0.1 * 5
        let rv: Vec<f64> = bn.running_var.as_tensor().to_vec1().unwrap();
        assert!((rv[0] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn dropout_mask_is_inverted() {
        let mut rng = SeededRng::new(3);
        let x = Tensor::ones((1000,), DType::F64, &Device::Cpu).unwrap();
        let y: Vec<f64> = dropout(&x, 0.5, &mut rng).unwrap().to_vec1().unwrap();
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
