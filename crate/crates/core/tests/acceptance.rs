//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! `DGAN_ACCEPTANCE_ONLY=1,2,8` restricts the run to the listed criteria.
//! `DGAN_ACCEPTANCE_STRICT=1` turns any FAIL into a nonzero exit status.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use candle_core::{Device, Tensor};
use common::{gradcheck_config, gradient_check, labels, synthetic_pairs};
use dgan_core::checkpoint::{load_checkpoint, save_checkpoint};
use dgan_core::config::RunConfig;
use dgan_core::datapipe::{build_pairs, gen_synthetic_dataset, linear_augment, ManifestRecord, MemorySource, SyntheticDataset, TrainingPair};
use dgan_core::eval::{
    augmentation_study, evaluate_transfer, gen_classification_benchmark, run_ablation, spearman, sweep_responses,
    AblationRun, BenchmarkConfig, ClassifierConfig, ModelSynthesizer, Regime,
};
use dgan_core::image::ImageTensor;
use dgan_core::label::{LabelCode, Mask};
use dgan_core::objectives::{discriminator_loss, generator_loss, reconstruction_loss, total_g_loss, LossWeights};
use dgan_core::synthesis::{intensity_sweep, region_compose_synthesis, synthesize, Noise};
use dgan_core::trainer::{train_next, TrainState};

const SIZE: usize = 32;
const ITERATIONS: u64 = 5000;
const SEEDS: [u64; 3] = [1, 2, 3];
const SWEEP_LABEL: &str = "happiness";
const SWEEP_STEPS: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Model used for every trained criterion. The narrow network and short
/// budget want a larger step size than the default.
fn acceptance_config() -> RunConfig {
    RunConfig {
        image_size: SIZE,
        base_width: 4,
        embed_hidden: 64,
        batch_size: 4,
        learning_rate: 1e-3,
        max_iterations: Some(ITERATIONS),
        ..RunConfig::default()
    }
}

fn eval_noise() -> Noise {
    Noise::off()
}

struct Shared {
    dataset: SyntheticDataset,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
    runs: Vec<AblationRun>,
}

impl Shared {
    fn both(&self) -> impl Iterator<Item = &AblationRun> {
        self.runs.iter().filter(|r| r.regime == Regime::Both)
    }

    fn run(&self, regime: Regime, seed: u64) -> &AblationRun {
        self.runs.iter().find(|r| r.regime == regime && r.seed == seed).expect("run")
    }
}

fn shared() -> Shared {
    let dataset = gen_synthetic_dataset(20, &labels(), 0, SIZE).unwrap();
    let ids = dataset.oracle.subject_ids();
    let (train_ids, test_ids) = (ids[..10].to_vec(), ids[10..].to_vec());
    let t = Instant::now();
    let (report, runs) = run_ablation(&acceptance_config(), &Regime::ALL, &dataset, &train_ids, &test_ids, &SEEDS, eval_noise()).unwrap();
    eprintln!("trained {} models in {:.0?}", runs.len(), t.elapsed());
    eprint!("{}", report.summary_table());
    Shared { dataset, train_ids, test_ids, runs }
}

fn criterion_1() -> Outcome {
    let state = TrainState::new(&gradcheck_config()).unwrap();
    let pairs = synthetic_pairs(2, 16, 5);
    let batch: Vec<&TrainingPair> = vec![&pairs[1], &pairs[8]];
    let check = gradient_check(&state, &batch, 100, 1e-4, 7);
    let ok = check.passing(1e-3);
    let worst = check.samples.iter().map(|s| s.rel_err()).fold(0.0, f64::max);
    outcome(
        ok >= 99,
        format!(
            "{ok}/100 parameters within 1e-3 relative error (worst {worst:.2e}; {} kink-crossing draws replaced)",
            check.kink_crossings
        ),
    )
}

fn t1(v: &[f64]) -> Tensor {
    Tensor::new(v, &Device::Cpu).unwrap()
}

fn criterion_2() -> Outcome {
    let s = |t: Tensor| t.to_scalar::<f64>().unwrap();
    let half = t1(&[0.5, 0.5, 0.5, 0.5]);
    let d = s(discriminator_loss(&half, &half).unwrap());
    let g = s(generator_loss(&half).unwrap());
    let y = Tensor::new(&[[[[0.3f64, -0.7], [1.0, -1.0]]]], &Device::Cpu).unwrap();
    let r = s(reconstruction_loss(&y, &y).unwrap());
    let ln2 = std::f64::consts::LN_2;
    let weights = LossWeights::from_config(&RunConfig::default());
    let (g_diff, g_std, recon) = (0.731, 1.917, 0.0625);
    let total = total_g_loss(g_diff, g_std, recon, &weights);
    let expect = 0.5 * 0.731 + 1.0 * 1.917 + 100.0 * 0.0625;
    let checks = [
        (d - 2.0 * ln2).abs() <= 1e-6,
        (g - ln2).abs() <= 1e-6,
        r == 0.0,
        (total - expect).abs() <= 1e-9,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!("d={d:.9} (2ln2), g={g:.9} (ln2), recon(y,y)={r}, weighted total err {:.1e}", (total - expect).abs()),
    )
}

fn criterion_3(sh: &Shared) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for &seed in &SEEDS {
        let (std, diff, both) = (
            sh.run(Regime::StandardOnly, seed).eval,
            sh.run(Regime::DiffOnly, seed).eval,
            sh.run(Regime::Both, seed).eval,
        );
        let transfer_ok = both.transfer_acc >= std.transfer_acc + 0.10;
        let identity_ok = both.identity_err <= 0.9 * diff.identity_err;
        wins += (transfer_ok && identity_ok) as usize;
        parts.push(format!(
            "seed {seed}: transfer both {:.3} vs std {:.3}, id_err both {:.4} vs diff {:.4}",
            both.transfer_acc, std.transfer_acc, both.identity_err, diff.identity_err
        ));
    }
    outcome(wins >= 2, format!("{wins}/3 seeds; {}", parts.join("; ")))
}

/// Counted per seed, passing on at least two of three like the ablation.
fn criterion_4(sh: &Shared) -> Outcome {
    let label = labels().iter().position(|l| l == SWEEP_LABEL).unwrap();
    let intensities = dgan_core::synthesis::sweep_intensities(SWEEP_STEPS, false).unwrap();
    let mut parts = Vec::new();
    let mut wins = 0;
    for run in sh.both() {
        let mut good = 0;
        for s in &sh.test_ids {
            let x = sh.dataset.oracle.neutral(s).unwrap();
            let frames = intensity_sweep(&run.state, &x, label, SWEEP_STEPS, false, eval_noise()).unwrap();
            let resp = sweep_responses(&sh.dataset.oracle, s, label, &frames).unwrap();
            let rho = spearman(&intensities, &resp);
            good += (rho > 0.8) as usize;
        }
        let frac = good as f64 / sh.test_ids.len() as f64;
        wins += (frac >= 0.8) as usize;
        parts.push(format!("seed {}: {good}/{} identities with rho > 0.8", run.seed, sh.test_ids.len()));
    }
    outcome(wins >= 2, format!("{wins}/3 seeds; {}", parts.join("; ")))
}

fn criterion_5(sh: &Shared) -> Outcome {
    let chance = 1.0 / labels().len() as f64;
    let run = sh.run(Regime::Both, SEEDS[0]);
    let non_neutral: Vec<usize> = (1..labels().len()).collect();
    let synth = ModelSynthesizer { state: &run.state, noise: eval_noise() };
    let e = evaluate_transfer(&synth, &sh.dataset.oracle, &sh.test_ids, &non_neutral).unwrap();
    let train_e = evaluate_transfer(&synth, &sh.dataset.oracle, &sh.train_ids, &non_neutral).unwrap();
    outcome(
        e.transfer_acc >= 2.0 * chance,
        format!(
            "held-out transfer {:.3} vs threshold {:.3} (training identities {:.3})",
            e.transfer_acc,
            2.0 * chance,
            train_e.transfer_acc
        ),
    )
}

fn criterion_6(sh: &Shared) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for (i, run) in sh.both().enumerate() {
        let bench = gen_classification_benchmark(&BenchmarkConfig {
            size: SIZE,
            seed: 100 + run.seed,
            ..BenchmarkConfig::default()
        })
        .unwrap();
        let clf = ClassifierConfig { seed: run.seed, ..ClassifierConfig::default() };
        let t = Instant::now();
        let (_, [none, linear, dgan]) =
            augmentation_study(&bench, 5, (&run.state, eval_noise()), &clf, run.seed, i as u64).unwrap();
        eprintln!("augmentation study seed {} took {:.0?}", run.seed, t.elapsed());
        let ok = linear - none >= 0.02 && dgan - linear >= 0.02;
        wins += ok as usize;
        parts.push(format!("seed {}: none {none:.3}, linear {linear:.3}, dgan {dgan:.3}", run.seed));
    }
    outcome(wins >= 2, format!("{wins}/3 seeds; {}", parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let dataset = gen_synthetic_dataset(10, &labels(), 0, SIZE).unwrap();
    let pairs = build_pairs(&dataset.records, &labels(), &dataset.images).unwrap().pairs;
    let cfg = acceptance_config();
    let run = |state: &mut TrainState, n: usize| (0..n).map(|_| train_next(state, &pairs).unwrap()).collect::<Vec<_>>();
    let a = run(&mut TrainState::new(&cfg).unwrap(), 10);
    let b = run(&mut TrainState::new(&cfg).unwrap(), 10);
    let det = a.iter().zip(&b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max);

    let k = 6;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.ckpt");
    let mut st = TrainState::new(&cfg).unwrap();
    run(&mut st, k);
    save_checkpoint(&st, &path).unwrap();
    let continued = run(&mut st, 1);
    let mut restored = load_checkpoint(&path).unwrap();
    let resumed = run(&mut restored, 1);
    let res = continued[0].max_abs_diff(&resumed[0]);
    outcome(
        det <= 1e-6 && res <= 1e-6 && resumed[0].iteration == k as u64 + 1,
        format!("max diff over 10 reports {det:.1e}; resume at iteration {} diff {res:.1e}", k + 1),
    )
}

fn criterion_8() -> Outcome {
    let cfg = RunConfig { max_iterations: Some(1), ..acceptance_config() };
    let state = TrainState::new(&cfg).unwrap();
    let ds = gen_synthetic_dataset(1, &labels(), 0, SIZE).unwrap();
    let x = ds.oracle.neutral("s000").unwrap();
    let code = LabelCode::one_hot(7, 4, 1.0).unwrap();
    let noise = Noise { dropout: true, seed: 17 };
    let plain = synthesize(&state, &x, &code, noise).unwrap();
    let composed = region_compose_synthesis(&state, &x, &code, &code, &Mask::upper_half(SIZE), noise).unwrap();
    let bitwise = plain.data().iter().zip(composed.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let n_aug = linear_augment(&x).len();

    let vocab = labels();
    let img = Arc::new(ImageTensor::filled(16, 16, 3, 0.0));
    let mut source = MemorySource::default();
    let mut records = Vec::new();
    for s in 0..230 {
        for l in &vocab {
            let p = format!("{s}/{l}.png");
            source.0.insert(p.clone(), img.clone());
            records.push(ManifestRecord::new(&format!("p{s}"), l, 1.0, &p));
        }
    }
    let n_pairs = build_pairs(&records, &vocab, &source).unwrap().pairs.len();
    outcome(
        bitwise && n_aug == 28 && n_pairs == 1610,
        format!("compose(a,a)==synthesize(a) bitwise: {bitwise}; linear variants {n_aug}; pairs {n_pairs}"),
    )
}

fn main() {
    let only: Option<BTreeSet<u32>> = std::env::var("DGAN_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let strict = std::env::var("DGAN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |n: u32| only.as_ref().is_none_or(|s| s.contains(&n));
    let needs_shared = (3..=6).any(wanted);
    let sh = if needs_shared { Some(shared()) } else { None };
    let mut failed = 0;
    for n in 1..=8u32 {
        if !wanted(n) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(sh.as_ref().unwrap()),
            4 => criterion_4(sh.as_ref().unwrap()),
            5 => criterion_5(sh.as_ref().unwrap()),
            6 => criterion_6(sh.as_ref().unwrap()),
            7 => criterion_7(),
            _ => criterion_8(),
        }));
        let o = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += (!o.pass) as usize;
        println!(
            "criterion {n}: {} ({}) [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed()
        );
    }
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
