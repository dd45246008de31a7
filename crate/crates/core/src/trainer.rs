//! The optimization loop: one discriminator step on the summed
//! discriminator loss, then one generator step (generator and label
//! embedding jointly) per iteration.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::Tensor;

use crate::config::RunConfig;
use crate::datapipe::TrainingPair;
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::image::images_to_tensor;
use crate::label::{LabelCode, LabelEmbedding};
use crate::nn::{Mode, NamedVar};
use crate::objectives::{
    clamp_count, discriminator_loss, generator_loss, reconstruction_loss, LossReport, LossWeights,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::SeededRng;

/// Seeded epoch-wise shuffle over pair indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sampler {
    pub order: Vec<u32>,
    pub cursor: usize,
}

impl Sampler {
    /// Next `batch` indices into a dataset of `n` pairs, reshuffling from
    /// `rng` whenever an epoch runs out.
    pub fn next_batch(&mut self, n: usize, batch: usize, rng: &mut SeededRng) -> Vec<usize> {
        if self.order.len() != n {
            self.order.clear();
            self.cursor = 0;
        }
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            if self.cursor >= self.order.len() {
                self.order = (0..n as u32).collect();
                rng.shuffle(&mut self.order);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor] as usize);
            self.cursor += 1;
        }
        out
    }
}

/// Which parameter group an update touched, in call order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Discriminators,
    Generator,
}

/// Everything needed to continue training bit-for-bit.
#[derive(Debug)]
pub struct TrainState {
    pub config: RunConfig,
    pub generator: Generator,
    pub embedding: LabelEmbedding,
    pub d_standard: Discriminator,
    pub d_diff: Discriminator,
    /// Generator plus embedding.
    pub opt_g: Adam,
    /// The enabled discriminators.
    pub opt_d: Adam,
    pub iteration: u64,
    pub rng: SeededRng,
    pub sampler: Sampler,
}

impl TrainState {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let dtype = config.precision.dtype();
        let mut rng = SeededRng::new(config.seed);
        let generator = Generator::build(config, &mut rng)?;
        let embedding = LabelEmbedding::new(
            config.label_count,
            config.embed_hidden,
            config.image_size,
            dtype,
            &mut rng,
        )?;
        let d_standard = Discriminator::build(config.image_size, config.base_width, dtype, &mut rng)?;
        let d_diff = Discriminator::build(config.image_size, config.base_width, dtype, &mut rng)?;
        let adam = AdamConfig {
            learning_rate: config.learning_rate,
            beta1: config.momentum_beta1,
            beta2: config.momentum_beta2,
            epsilon: config.adam_epsilon,
        };
        let mut g_vars = Vec::new();
        generator.collect("gen", &mut g_vars);
        embedding.collect("embed", &mut g_vars);
        let mut d_vars = Vec::new();
        if config.use_standard_d {
            d_standard.collect("d_std", &mut d_vars);
        }
        if config.use_diff_d {
            d_diff.collect("d_diff", &mut d_vars);
        }
        Ok(Self {
            config: config.clone(),
            opt_g: Adam::new(&g_vars, adam)?,
            opt_d: Adam::new(&d_vars, adam)?,
            generator,
            embedding,
            d_standard,
            d_diff,
            iteration: 0,
            rng,
            sampler: Sampler::default(),
        })
    }

    /// Every parameter and buffer, in checkpoint order.
    pub fn named_vars(&self) -> Vec<NamedVar> {
        let mut out = Vec::new();
        self.generator.collect("gen", &mut out);
        self.embedding.collect("embed", &mut out);
        self.d_standard.collect("d_std", &mut out);
        self.d_diff.collect("d_diff", &mut out);
        out
    }

    /// Deep copy through the checkpoint encoding.
    pub fn try_clone(&self) -> Result<Self> {
        crate::checkpoint::from_bytes(&crate::checkpoint::to_bytes(self)?)
    }

    pub fn label_channel(&self, codes: &[&LabelCode]) -> Result<Tensor> {
        self.embedding.forward(&self.embedding.codes_tensor(codes)?)
    }
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}

fn check_finite(component: &'static str, value: f64, iteration: u64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { component, iteration })
    }
}

/// One iteration on `batch`. See [`train_step_observed`].
pub fn train_step(state: &mut TrainState, batch: &[&TrainingPair]) -> Result<LossReport> {
    train_step_observed(state, batch, &mut |_| {})
}

/// One iteration, reporting each parameter-group update to `observe` as it
/// happens. The discriminator step sees the generator output detached; the
/// generator step regenerates its output and scores it with the updated
/// discriminators (whose running statistics stay untouched).
pub fn train_step_observed(
    state: &mut TrainState,
    batch: &[&TrainingPair],
    observe: &mut dyn FnMut(Phase),
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cfg = &state.config;
    let dtype = cfg.precision.dtype();
    let iteration = state.iteration + 1;
    let sources: Vec<_> = batch.iter().map(|p| &*p.source).collect();
    let targets: Vec<_> = batch.iter().map(|p| &*p.target).collect();
    let codes: Vec<_> = batch.iter().map(|p| &p.code).collect();
    let x = images_to_tensor(&sources, dtype)?;
    let y = images_to_tensor(&targets, dtype)?;
    let code_t = state.embedding.codes_tensor(&codes)?;
    let real_diff = (&x - &y)?;
    let (use_std, use_diff) = (cfg.use_standard_d, cfg.use_diff_d);
    let weights = LossWeights::from_config(cfg);
    let mut clamped = 0;

    // discriminator step
    let label = state.embedding.forward(&code_t)?;
    let fake = state.generator.forward(&x, &label, Mode::Train, &mut state.rng)?.detach();
    let mut d_terms = Vec::new();
    let mut d_standard = 0.0;
    let mut d_diff = 0.0;
    if use_std {
        let real = state.d_standard.forward(&y, Mode::Train)?;
        let fake_s = state.d_standard.forward(&fake, Mode::TrainFrozen)?;
        clamped += clamp_count(&real)? + clamp_count(&fake_s)?;
        let l = discriminator_loss(&real, &fake_s)?;
        d_standard = scalar(&l)?;
        d_terms.push(l);
    }
    if use_diff {
        let real = state.d_diff.forward(&real_diff, Mode::Train)?;
        let fake_s = state.d_diff.forward(&(&x - &fake)?, Mode::TrainFrozen)?;
        clamped += clamp_count(&real)? + clamp_count(&fake_s)?;
        let l = discriminator_loss(&real, &fake_s)?;
        d_diff = scalar(&l)?;
        d_terms.push(l);
    }
    let d_total = d_standard + d_diff;
    check_finite("d_standard", d_standard, iteration)?;
    check_finite("d_diff", d_diff, iteration)?;
    check_finite("d_total", d_total, iteration)?;
    if let Some((first, rest)) = d_terms.split_first() {
        let mut sum = first.clone();
        for t in rest {
            sum = (sum + t)?;
        }
        let grads = sum.backward()?;
        state.opt_d.step(&grads)?;
    }
    observe(Phase::Discriminators);

    // generator step
    let label = state.embedding.forward(&code_t)?;
    let fake = state.generator.forward(&x, &label, Mode::TrainFrozen, &mut state.rng)?;
    let recon_t = reconstruction_loss(&y, &fake)?;
    let mut g_total_t = (&recon_t * weights.recon)?;
    let mut g_standard = 0.0;
    let mut g_diff = 0.0;
    if use_std {
        let s = state.d_standard.forward(&fake, Mode::TrainFrozen)?;
        clamped += clamp_count(&s)?;
        let l = generator_loss(&s)?;
        g_standard = scalar(&l)?;
        g_total_t = (g_total_t + (l * weights.standard)?)?;
    }
    if use_diff {
        let s = state.d_diff.forward(&(&x - &fake)?, Mode::TrainFrozen)?;
        clamped += clamp_count(&s)?;
        let l = generator_loss(&s)?;
        g_diff = scalar(&l)?;
        g_total_t = (g_total_t + (l * weights.diff)?)?;
    }
    let recon = scalar(&recon_t)?;
    let g_total = scalar(&g_total_t)?;
    check_finite("g_standard", g_standard, iteration)?;
    check_finite("g_diff", g_diff, iteration)?;
    check_finite("recon", recon, iteration)?;
    check_finite("g_total", g_total, iteration)?;
    let grads = g_total_t.backward()?;
    state.opt_g.step(&grads)?;
    observe(Phase::Generator);

    state.iteration = iteration;
    Ok(LossReport {
        iteration,
        d_standard,
        d_diff,
        d_total,
        g_standard,
        g_diff,
        recon,
        g_total,
        clamped: clamped > 0,
    })
}

/// Draws the next batch from the state's sampler and takes one step.
pub fn train_next(state: &mut TrainState, pairs: &[TrainingPair]) -> Result<LossReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx = state
        .sampler
        .next_batch(pairs.len(), state.config.batch_size, &mut state.rng);
    let batch: Vec<&TrainingPair> = idx.iter().map(|&i| &pairs[i]).collect();
    train_step(state, &batch)
}

/// Runs `iterations` steps, handing every report to `sink`.
pub fn train_for(
    state: &mut TrainState,
    pairs: &[TrainingPair],
    iterations: u64,
    sink: &mut dyn FnMut(&TrainState, &LossReport) -> Result<()>,
) -> Result<()> {
    for _ in 0..iterations {
        let report = train_next(state, pairs)?;
        sink(state, &report)?;
    }
    Ok(())
}

pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("checkpoint_{iteration:08}.ckpt"))
}

/// Trains a fresh state for `max_iterations` steps. With `out_dir`, appends
/// the loss log there and writes periodic checkpoints plus a final one.
pub fn train(cfg: &RunConfig, pairs: &[TrainingPair], out_dir: Option<&Path>) -> Result<TrainState> {
    let mut state = TrainState::new(cfg)?;
    resume(&mut state, pairs, out_dir)?;
    Ok(state)
}

/// Continues `state` until its configured `max_iterations`.
pub fn resume(state: &mut TrainState, pairs: &[TrainingPair], out_dir: Option<&Path>) -> Result<()> {
    let Some(max) = state.config.max_iterations else {
        return Err(Error::Config {
            line: 0,
            msg: "max_iterations must be set for training".into(),
        });
    };
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let remaining = max.saturating_sub(state.iteration);
    let every = state.config.checkpoint_every;
    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(LOG_FILE);
            let fresh = !path.exists() || std::fs::metadata(&path)?.len() == 0;
            let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
            if fresh {
                writeln!(w, "{}", LossReport::CSV_HEADER)?;
            }
            Some(w)
        }
        None => None,
    };
    train_for(state, pairs, remaining, &mut |s, r| {
        if r.iteration % 100 == 0 || r.iteration == 1 {
            log::info!(
                "iter {} d_total {:.4} g_total {:.4} recon {:.4}",
                r.iteration,
                r.d_total,
                r.g_total,
                r.recon
            );
        }
        if r.clamped {
            log::debug!("iter {}: saturated scores clamped", r.iteration);
        }
        if let Some(w) = log.as_mut() {
            writeln!(w, "{}", r.csv_line())?;
        }
        if let Some(dir) = out_dir {
            if every > 0 && r.iteration % every == 0 {
                crate::checkpoint::save_checkpoint(s, &checkpoint_path(dir, r.iteration))?;
            }
        }
        Ok(())
    })?;
    if let Some(mut w) = log {
        w.flush()?;
    }
    if let Some(dir) = out_dir {
        crate::checkpoint::save_checkpoint(state, &dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageTensor;
    use std::sync::Arc;

    pub(crate) fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.image_size = 16;
        cfg.base_width = 4;
        cfg.embed_hidden = 8;
        cfg.batch_size = 2;
        cfg.generator_depth = Some(3);
        cfg.max_iterations = Some(4);
        cfg
    }

    fn toy_pairs(n: usize, size: usize) -> Vec<TrainingPair> {
        let mut rng = SeededRng::new(99);
        (0..n)
            .map(|i| {
                let mk = |rng: &mut SeededRng| {
                    let v: Vec<f32> = (0..size * size * 3)
                        .map(|_| rng.uniform_range(-1.0, 1.0) as f32)
                        .collect();
                    Arc::new(ImageTensor::from_vec(size, size, 3, v).unwrap())
                };
                TrainingPair {
                    source: mk(&mut rng),
                    target: mk(&mut rng),
                    code: LabelCode::one_hot(7, i % 7, 1.0).unwrap(),
                    subject_id: format!("s{i}"),
                    label: i % 7,
                }
            })
            .collect()
    }

    fn snapshot(vars: &[NamedVar]) -> Vec<Vec<f64>> {
        vars.iter()
            .map(|v| {
                v.var
                    .as_tensor()
                    .flatten_all()
                    .unwrap()
                    .to_dtype(candle_core::DType::F64)
                    .unwrap()
                    .to_vec1::<f64>()
                    .unwrap()
            })
            .collect()
    }

    fn group(state: &TrainState, prefixes: &[&str]) -> Vec<NamedVar> {
        state
            .named_vars()
            .into_iter()
            .filter(|v| v.trainable && prefixes.iter().any(|p| v.name.starts_with(p)))
            .collect()
    }

    #[test]
    fn sampler_covers_each_epoch_once() {
        let mut s = Sampler::default();
        let mut rng = SeededRng::new(1);
        let mut seen = s.next_batch(5, 3, &mut rng);
        seen.extend(s.next_batch(5, 2, &mut rng));
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.next_batch(5, 7, &mut rng).len(), 7);
    }

    #[test]
    fn update_order_is_discriminators_then_generator() {
        let mut state = TrainState::new(&tiny_config()).unwrap();
        let pairs = toy_pairs(2, 16);
        let batch: Vec<_> = pairs.iter().collect();
        let mut seen = Vec::new();
        train_step_observed(&mut state, &batch, &mut |p| seen.push(p)).unwrap();
        assert_eq!(seen, vec![Phase::Discriminators, Phase::Generator]);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn groups_only_move_in_their_own_phase() {
        let mut state = TrainState::new(&tiny_config()).unwrap();
        let pairs = toy_pairs(2, 16);
        let batch: Vec<_> = pairs.iter().collect();
        let g = group(&state, &["gen", "embed"]);
        let d = group(&state, &["d_std", "d_diff"]);
        let (g0, d0) = (snapshot(&g), snapshot(&d));
        let mut checks = Vec::new();
        train_step_observed(&mut state, &batch, &mut |p| match p {
            Phase::Discriminators => checks.push((snapshot(&g) == g0, snapshot(&d) != d0)),
            Phase::Generator => checks.push((snapshot(&g) != g0, true)),
        })
        .unwrap();
        assert_eq!(checks, vec![(true, true), (true, true)]);
        let d1 = snapshot(&d);
        // the generator phase left the discriminators where the D step put them
        let mut after_d = None;
        train_step_observed(&mut state, &batch, &mut |p| {
            if p == Phase::Discriminators {
                after_d = Some(snapshot(&d));
            }
        })
        .unwrap();
        assert_eq!(after_d.unwrap(), snapshot(&d));
        assert_ne!(d1, snapshot(&d));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_bit_identical() {
        let mut cfg = tiny_config();
        cfg.learning_rate = 0.0;
        let mut state = TrainState::new(&cfg).unwrap();
        let pairs = toy_pairs(2, 16);
        let trainable: Vec<_> = state.named_vars().into_iter().filter(|v| v.trainable).collect();
        let before = snapshot(&trainable);
        train_step(&mut state, &pairs.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(before, snapshot(&trainable));
    }

    #[test]
    fn zero_adversarial_weights_reduce_to_l1() {
        let mut cfg = tiny_config();
        cfg.lambda_diff = 0.0;
        cfg.lambda_standard = 0.0;
        let mut state = TrainState::new(&cfg).unwrap();
        let pairs = toy_pairs(2, 16);
        let d = group(&state, &["d_std", "d_diff"]);
        let d0 = snapshot(&d);
        let r = train_step(&mut state, &pairs.iter().collect::<Vec<_>>()).unwrap();
        assert!((r.g_total - 100.0 * r.recon).abs() < 1e-6 * r.g_total.abs().max(1.0));
        assert_ne!(d0, snapshot(&d));
    }

    #[test]
    fn disabled_discriminator_is_frozen_and_reports_zero() {
        let mut cfg = tiny_config();
        cfg.use_diff_d = false;
        cfg.lambda_diff = 0.0;
        let mut state = TrainState::new(&cfg).unwrap();
        let pairs = toy_pairs(2, 16);
        let dd = group(&state, &["d_diff"]);
        let before = snapshot(&dd);
        let r = train_step(&mut state, &pairs.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(before, snapshot(&dd));
        assert_eq!((r.d_diff, r.g_diff), (0.0, 0.0));
        assert!(r.d_standard > 0.0 && r.d_total == r.d_standard);
    }

    #[test]
    fn same_seed_runs_agree() {
        let pairs = toy_pairs(4, 16);
        let run = || {
            let mut s = TrainState::new(&tiny_config()).unwrap();
            let mut out = Vec::new();
            train_for(&mut s, &pairs, 3, &mut |_, r| {
                out.push(*r);
                Ok(())
            })
            .unwrap();
            out
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert!(x.max_abs_diff(y) < 1e-6);
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        let mut state = TrainState::new(&tiny_config()).unwrap();
        assert!(matches!(train_step(&mut state, &[]), Err(Error::EmptyDataset)));
        assert!(matches!(train(&tiny_config(), &[], None), Err(Error::EmptyDataset)));
        let mut cfg = tiny_config();
        cfg.max_iterations = None;
        assert!(train(&cfg, &toy_pairs(1, 16), None).is_err());
    }

    #[test]
    fn non_finite_input_names_component() {
        let mut state = TrainState::new(&tiny_config()).unwrap();
        let mut pairs = toy_pairs(2, 16);
        let mut bad = (*pairs[0].target).clone();
        bad.set(0, 0, 0, f32::NAN);
        pairs[0].target = Arc::new(bad);
        let err = train_step(&mut state, &pairs.iter().collect::<Vec<_>>()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { component: "d_standard", iteration: 1 }), "{err}");
    }

    #[test]
    fn zero_iterations_still_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.max_iterations = Some(0);
        let s = train(&cfg, &toy_pairs(2, 16), Some(dir.path())).unwrap();
        assert_eq!(s.iteration, 0);
        assert!(dir.path().join(FINAL_CHECKPOINT).exists());
        let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(log.trim(), LossReport::CSV_HEADER);
    }

    #[test]
    fn periodic_checkpoints_and_log_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.checkpoint_every = 2;
        train(&cfg, &toy_pairs(3, 16), Some(dir.path())).unwrap();
        assert!(checkpoint_path(dir.path(), 2).exists());
        assert!(checkpoint_path(dir.path(), 4).exists());
        let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(log.lines().count(), 5);
    }
}
