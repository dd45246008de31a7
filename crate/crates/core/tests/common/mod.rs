//! Helpers shared by the integration tests and the acceptance harness.

#![allow(dead_code)]

use candle_core::{DType, Tensor, Var};
use dgan_core::config::{Precision, RunConfig, DEFAULT_LABELS};
use dgan_core::datapipe::{build_pairs, gen_synthetic_dataset, TrainingPair};
use dgan_core::image::images_to_tensor;
use dgan_core::nn::{Mode, NamedVar};
use dgan_core::objectives::{discriminator_loss, generator_loss, reconstruction_loss};
use dgan_core::rng::SeededRng;
use dgan_core::trainer::TrainState;

pub fn labels() -> Vec<String> {
    DEFAULT_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Reduced model used by the gradient check: 16x16 input, three encoder
/// and three decoder blocks, base width 8, f64 arithmetic.
pub fn gradcheck_config() -> RunConfig {
    RunConfig {
        image_size: 16,
        base_width: 8,
        generator_depth: Some(3),
        embed_hidden: 8,
        batch_size: 2,
        max_iterations: Some(1),
        precision: Precision::F64,
        seed: 11,
        ..RunConfig::default()
    }
}

/// Small fast model for trainer-level tests.
pub fn tiny_config(size: usize) -> RunConfig {
    RunConfig {
        image_size: size,
        base_width: 4,
        generator_depth: Some(3),
        embed_hidden: 8,
        batch_size: 2,
        max_iterations: Some(10),
        seed: 3,
        ..RunConfig::default()
    }
}

pub fn synthetic_pairs(subjects: usize, size: usize, seed: u64) -> Vec<TrainingPair> {
    let ds = gen_synthetic_dataset(subjects, &labels(), seed, size).unwrap();
    build_pairs(&ds.records, &labels(), &ds.images).unwrap().pairs
}

/// Generator and discriminator totals recomputed from scratch with every
/// batch-normalization layer in batch-statistics mode and dropout masks
/// drawn from a fresh generator seeded with `mask_seed`, so repeated calls
/// evaluate exactly the same function of the parameters.
pub fn loss_totals(state: &TrainState, batch: &[&TrainingPair], mask_seed: u64) -> (Tensor, Tensor) {
    let cfg = &state.config;
    let dtype = cfg.precision.dtype();
    let src: Vec<_> = batch.iter().map(|p| &*p.source).collect();
    let tgt: Vec<_> = batch.iter().map(|p| &*p.target).collect();
    let codes: Vec<_> = batch.iter().map(|p| &p.code).collect();
    let x = images_to_tensor(&src, dtype).unwrap();
    let y = images_to_tensor(&tgt, dtype).unwrap();
    let label = state.label_channel(&codes).unwrap();
    let mut rng = SeededRng::new(mask_seed);
    let fake = state.generator.forward(&x, &label, Mode::TrainFrozen, &mut rng).unwrap();
    let m = Mode::TrainFrozen;

    let fake_d = fake.detach();
    let d_std = discriminator_loss(
        &state.d_standard.forward(&y, m).unwrap(),
        &state.d_standard.forward(&fake_d, m).unwrap(),
    )
    .unwrap();
    let d_diff = discriminator_loss(
        &state.d_diff.forward(&(&x - &y).unwrap(), m).unwrap(),
        &state.d_diff.forward(&(&x - &fake_d).unwrap(), m).unwrap(),
    )
    .unwrap();
    let d_total = (d_std + d_diff).unwrap();

    let g_std = generator_loss(&state.d_standard.forward(&fake, m).unwrap()).unwrap();
    let g_diff = generator_loss(&state.d_diff.forward(&(&x - &fake).unwrap(), m).unwrap()).unwrap();
    let recon = reconstruction_loss(&y, &fake).unwrap();
    let g_total = ((recon * cfg.lambda_recon).unwrap()
        + (g_std * cfg.lambda_standard).unwrap()
        + (g_diff * cfg.lambda_diff).unwrap())
    .unwrap();
    (g_total, d_total)
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

fn read_elem(var: &Var, idx: usize) -> f64 {
    var.as_tensor().flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap()[idx]
}

fn write_elem(var: &Var, idx: usize, value: f64) {
    let t = var.as_tensor();
    let mut v = t.flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap();
    v[idx] = value;
    let new = Tensor::from_vec(v, t.dims(), t.device()).unwrap().to_dtype(t.dtype()).unwrap();
    var.set(&new).unwrap();
}

#[derive(Debug)]
pub struct GradSample {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// Relative error with a floor on the denominator so that parameters
    /// with a vanishing gradient are judged on absolute error instead.
    pub fn rel_err(&self) -> f64 {
        let denom = self.analytic.abs().max(self.numeric.abs()).max(1e-6);
        (self.analytic - self.numeric).abs() / denom
    }
}

pub struct GradCheck {
    pub samples: Vec<GradSample>,
    /// Draws discarded because `x + eps` or `x - eps` sat on a different
    /// linear piece of some rectifier, absolute value or clamp than `x`.
    pub kink_crossings: usize,
}

impl GradCheck {
    pub fn passing(&self, tol: f64) -> usize {
        self.samples.iter().filter(|s| s.rel_err() < tol).count()
    }
}

/// Compares backprop gradients with central differences of step `eps` at
/// `count` randomly chosen scalar parameters. Generator and embedding
/// parameters are checked against the generator total, discriminator
/// parameters against the discriminator total. A draw whose perturbation
/// crosses a kink is not a valid finite-difference point and is replaced.
pub fn gradient_check(state: &TrainState, batch: &[&TrainingPair], count: usize, eps: f64, seed: u64) -> GradCheck {
    use dgan_core::nn::kinks;
    let mask_seed = 99;
    let ((g_total, d_total), base) = kinks::record(|| loss_totals(state, batch, mask_seed));
    let g_grads = g_total.backward().unwrap();
    let d_grads = d_total.backward().unwrap();
    let vars: Vec<NamedVar> = state.named_vars().into_iter().filter(|v| v.trainable).collect();
    let sizes: Vec<usize> = vars.iter().map(|v| v.var.as_tensor().elem_count()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = SeededRng::new(seed);
    let mut samples = Vec::with_capacity(count);
    let mut kink_crossings = 0;
    while samples.len() < count {
        assert!(kink_crossings < 20 * count, "too many kink crossings");
        let mut pick = rng.below(total);
        let mut vi = 0;
        while pick >= sizes[vi] {
            pick -= sizes[vi];
            vi += 1;
        }
        let nv = &vars[vi];
        let is_d = nv.name.starts_with("d_");
        let grads = if is_d { &d_grads } else { &g_grads };
        let analytic = grads
            .get(nv.var.as_tensor())
            .map(|g| g.flatten_all().unwrap().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap()[pick])
            .unwrap_or(0.0);
        let eval = || {
            let ((g, d), pattern) = kinks::record(|| loss_totals(state, batch, mask_seed));
            (scalar(if is_d { &d } else { &g }), pattern)
        };
        let orig = read_elem(&nv.var, pick);
        write_elem(&nv.var, pick, orig + eps);
        let (plus, p_plus) = eval();
        write_elem(&nv.var, pick, orig - eps);
        let (minus, p_minus) = eval();
        write_elem(&nv.var, pick, orig);
        if p_plus != base || p_minus != base {
            kink_crossings += 1;
            continue;
        }
        samples.push(GradSample {
            name: nv.name.clone(),
            index: pick,
            analytic,
            numeric: (plus - minus) / (2.0 * eps),
        });
    }
    GradCheck { samples, kink_crossings }
}
