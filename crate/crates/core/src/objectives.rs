//! Adversarial, differential and reconstruction objectives.
//!
//! All batch reductions are means. Probabilities are clamped to
//! `[EPS, 1 - EPS]` before the logarithm.

use candle_core::{DType, Device, Tensor};

use crate::config::RunConfig;
use crate::error::{shape_err, Result};
use crate::nn::kinks;

pub const EPS: f64 = 1e-7;

fn clamp_probs(p: &Tensor) -> Result<Tensor> {
    kinks::note(p, &[EPS, 1.0 - EPS])?;
    Ok(p.clamp(EPS, 1.0 - EPS)?)
}

/// Number of scores that fall outside `(EPS, 1 - EPS)` and get clamped.
pub fn clamp_count(p: &Tensor) -> Result<usize> {
    let v = p.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    Ok(v.iter().filter(|&&s| s <= EPS || s >= 1.0 - EPS).count())
}

/// `mean(-log D(real)) + mean(-log(1 - D(fake)))`. Serves both the
/// standard and the differential discriminator.
pub fn discriminator_loss(scores_real: &Tensor, scores_fake: &Tensor) -> Result<Tensor> {
    if scores_real.dims() != scores_fake.dims() {
        return Err(shape_err(
            "real/fake score batches",
            format!("{:?}", scores_real.dims()),
            format!("{:?}", scores_fake.dims()),
        ));
    }
    let real = clamp_probs(scores_real)?.log()?.neg()?.mean_all()?;
    let fake = clamp_probs(scores_fake)?.affine(-1.0, 1.0)?.log()?.neg()?.mean_all()?;
    Ok((real + fake)?)
}

/// Non-saturating generator loss `mean(-log D(fake))`.
pub fn generator_loss(scores_fake: &Tensor) -> Result<Tensor> {
    Ok(clamp_probs(scores_fake)?.log()?.neg()?.mean_all()?)
}

/// Mean absolute error over batch, pixels and channels.
pub fn reconstruction_loss(y: &Tensor, g_out: &Tensor) -> Result<Tensor> {
    if y.dims() != g_out.dims() {
        return Err(shape_err(
            "reconstruction operands",
            format!("{:?}", y.dims()),
            format!("{:?}", g_out.dims()),
        ));
    }
    let residual = (y - g_out)?;
    kinks::note(&residual, &[0.0])?;
    Ok(residual.abs()?.mean_all()?)
}

/// A loss value plus whether any score had to be clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarLoss {
    pub value: f64,
    pub clamped: bool,
}

fn to_tensor(v: &[f64]) -> Result<Tensor> {
    Ok(Tensor::from_vec(v.to_vec(), v.len(), &Device::Cpu)?)
}

pub fn loss_d_standard(scores_real: &[f64], scores_fake: &[f64]) -> Result<ScalarLoss> {
    let (r, f) = (to_tensor(scores_real)?, to_tensor(scores_fake)?);
    Ok(ScalarLoss {
        value: discriminator_loss(&r, &f)?.to_scalar::<f64>()?,
        clamped: clamp_count(&r)? + clamp_count(&f)? > 0,
    })
}

pub fn loss_d_diff(scores_real_diff: &[f64], scores_fake_diff: &[f64]) -> Result<ScalarLoss> {
    loss_d_standard(scores_real_diff, scores_fake_diff)
}

pub fn loss_g_standard(scores_fake: &[f64]) -> Result<ScalarLoss> {
    let f = to_tensor(scores_fake)?;
    Ok(ScalarLoss {
        value: generator_loss(&f)?.to_scalar::<f64>()?,
        clamped: clamp_count(&f)? > 0,
    })
}

pub fn loss_g_diff(scores_fake_diff: &[f64]) -> Result<ScalarLoss> {
    loss_g_standard(scores_fake_diff)
}

pub fn loss_recon(y: &[f64], g_out: &[f64]) -> Result<f64> {
    Ok(reconstruction_loss(&to_tensor(y)?, &to_tensor(g_out)?)?.to_scalar::<f64>()?)
}

/// Generator-side loss weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub diff: f64,
    pub standard: f64,
    pub recon: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            diff: cfg.lambda_diff,
            standard: cfg.lambda_standard,
            recon: cfg.lambda_recon,
        }
    }
}

pub fn total_d_loss(d_standard: f64, d_diff: f64) -> f64 {
    d_diff + d_standard
}

pub fn total_g_loss(g_diff: f64, g_standard: f64, recon: f64, w: &LossWeights) -> f64 {
    w.diff * g_diff + w.standard * g_standard + w.recon * recon
}

/// Per-iteration batch-mean losses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub iteration: u64,
    pub d_standard: f64,
    pub d_diff: f64,
    pub d_total: f64,
    pub g_standard: f64,
    pub g_diff: f64,
    pub recon: f64,
    pub g_total: f64,
    /// Some score saturated and was clamped before the logarithm.
    pub clamped: bool,
}

impl LossReport {
    pub const CSV_HEADER: &'static str =
        "iteration,d_standard,d_diff,d_total,g_standard,g_diff,recon,g_total";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.iteration,
            self.d_standard,
            self.d_diff,
            self.d_total,
            self.g_standard,
            self.g_diff,
            self.recon,
            self.g_total
        )
    }

    /// Component values in log order (without the iteration).
    pub fn components(&self) -> [(&'static str, f64); 7] {
        [
            ("d_standard", self.d_standard),
            ("d_diff", self.d_diff),
            ("d_total", self.d_total),
            ("g_standard", self.g_standard),
            ("g_diff", self.g_diff),
            ("recon", self.recon),
            ("g_total", self.g_total),
        ]
    }

    pub fn max_abs_diff(&self, other: &LossReport) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| (a.1 - b.1).abs())
            .fold(0.0, f64::max)
    }
}
