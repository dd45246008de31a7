//! Discriminator ablation: the same budget trained with only the standard
//! discriminator, only the differential one, or both.

use crate::config::RunConfig;
use crate::datapipe::{build_pairs, SyntheticDataset};
use crate::error::{Error, Result};
use crate::eval::metrics::{evaluate_transfer, ModelSynthesizer, TransferEval};
use crate::eval::report::{EvalReport, ReportRow};
use crate::synthesis::Noise;
use crate::trainer::{train, TrainState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    StandardOnly,
    DiffOnly,
    Both,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::StandardOnly, Regime::DiffOnly, Regime::Both];

    pub fn name(self) -> &'static str {
        match self {
            Regime::StandardOnly => "standard-only",
            Regime::DiffOnly => "diff-only",
            Regime::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    /// `base` with the loss weight and update switch of any disabled
    /// discriminator turned off. Nothing else changes.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            Regime::StandardOnly => {
                cfg.lambda_diff = 0.0;
                cfg.use_diff_d = false;
            }
            Regime::DiffOnly => {
                cfg.lambda_standard = 0.0;
                cfg.use_standard_d = false;
            }
            Regime::Both => {}
        }
        cfg
    }
}

pub struct AblationRun {
    pub regime: Regime,
    pub seed: u64,
    pub state: TrainState,
    pub eval: TransferEval,
}

/// Trains every regime for every seed on the records of `train_subjects`
/// and evaluates transfer on `test_subjects` over all non-neutral labels.
pub fn run_ablation(
    base: &RunConfig,
    regimes: &[Regime],
    dataset: &SyntheticDataset,
    train_subjects: &[String],
    test_subjects: &[String],
    seeds: &[u64],
    noise: Noise,
) -> Result<(EvalReport, Vec<AblationRun>)> {
    if !regimes.contains(&Regime::Both) {
        return Err(Error::InvalidValue("ablation needs the both-discriminator regime".into()));
    }
    let vocab = &base.labels;
    let records = dataset.records_for(train_subjects);
    let pairs = build_pairs(&records, vocab, &dataset.images)?.pairs;
    let labels: Vec<usize> = (0..vocab.len()).filter(|&l| vocab[l] != "neutral").collect();
    let mut report = EvalReport::default();
    let mut runs = Vec::new();
    for &seed in seeds {
        for &regime in regimes {
            let mut cfg = regime.apply(base);
            cfg.seed = seed;
            log::info!("ablation: training {} with seed {seed}", regime.name());
            let state = train(&cfg, &pairs, None)?;
            let synth = ModelSynthesizer { state: &state, noise };
            let eval = evaluate_transfer(&synth, &dataset.oracle, test_subjects, &labels)?;
            report.push(ReportRow {
                transfer_acc: Some(eval.transfer_acc),
                identity_err: Some(eval.identity_err),
                ..ReportRow::new(regime.name(), seed, 0)
            })?;
            runs.push(AblationRun {
                regime,
                seed,
                state,
                eval,
            });
        }
    }
    Ok((report, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DEFAULT_LABELS;
    use crate::datapipe::gen_synthetic_dataset;

    #[test]
    fn regimes_touch_only_their_switches() {
        let base = RunConfig::default();
        let keys = ["lambda_diff", "use_diff_d", "lambda_standard", "use_standard_d"];
        for r in Regime::ALL {
            let cfg = r.apply(&base);
            let (before, after) = (base.to_text(), cfg.to_text());
            let changed: Vec<&str> = before
                .lines()
                .zip(after.lines())
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.split('=').next().unwrap().trim())
                .collect();
            assert!(changed.iter().all(|k| keys.contains(k)), "{changed:?}");
            match r {
                Regime::Both => assert!(changed.is_empty()),
                _ => assert_eq!(changed.len(), 2),
            }
            assert_eq!(Regime::parse(r.name()), Some(r));
        }
    }

    #[test]
    fn report_has_one_row_per_regime_and_seed() {
        let labels: Vec<String> = DEFAULT_LABELS.iter().map(|s| s.to_string()).collect();
        let ds = gen_synthetic_dataset(3, &labels, 0, 16).unwrap();
        let mut base = RunConfig::default();
        base.image_size = 16;
        base.base_width = 4;
        base.embed_hidden = 8;
        base.batch_size = 2;
        base.generator_depth = Some(3);
        base.max_iterations = Some(1);
        let subjects = ds.oracle.subject_ids();
        let (report, runs) = run_ablation(
            &base,
            &Regime::ALL,
            &ds,
            &subjects[..2],
            &subjects[2..],
            &[1, 2],
            Noise::off(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 6);
        assert_eq!(runs.len(), 6);
        assert!(run_ablation(&base, &[Regime::DiffOnly], &ds, &subjects, &subjects, &[1], Noise::off()).is_err());
    }
}
