use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dgan_core::checkpoint::load_checkpoint;
use dgan_core::config::RunConfig;
use dgan_core::datapipe::io::{filmstrip, read_png, write_png};
use dgan_core::datapipe::{
    build_pairs, gen_synthetic_dataset, linear_augment, load_manifest, write_manifest, DirSource, ManifestRecord,
};
use dgan_core::eval::{
    augmentation_study, emit_report, gen_classification_benchmark, run_ablation, BenchmarkConfig, ClassifierConfig,
    EvalReport, Regime,
};
use dgan_core::image::ImageTensor;
use dgan_core::label::{LabelCode, Mask};
use dgan_core::synthesis::{
    augment_dataset, compound_grid, compound_sweep, intensity_sweep, plan_missing_labels, region_compose_synthesis,
    synthesize, Noise,
};
use dgan_core::trainer::{resume, train, TrainState};
use dgan_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dgan", version, about = "Differential GAN: train, synthesize, augment, evaluate")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model checkpoint to load (train: resume from it).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Disable dropout at synthesis.
    #[arg(long, global = true)]
    no_dropout: bool,
    /// Extra configuration overrides, `key=value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a manifest of neutral/expression images.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Transfer one label code onto an input face.
    Synth {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 1.0)]
        intensity: f64,
    },
    /// Frames at increasing intensity of one label.
    Sweep {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Start the sweep at intensity 0 instead of 0.1.
        #[arg(long)]
        from_zero: bool,
    },
    /// Mix two labels, as a one-dimensional sweep or a full grid.
    Compound {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        label_a: String,
        #[arg(long)]
        label_b: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        grid: bool,
    },
    /// One label inside a mask, another outside it.
    Compose {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        label_a: String,
        #[arg(long)]
        label_b: String,
        /// upper-half, lower-half, left-half or file:<png>.
        #[arg(long)]
        mask: String,
    },
    /// Fill every missing (subject, label) cell of a manifest.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        /// Also write the 28 geometric variants of every image.
        #[arg(long)]
        linear: bool,
    },
    /// Render the procedural synthetic-face dataset.
    DatasetGen {
        #[arg(long, default_value_t = 20)]
        subjects: usize,
    },
    /// Run an evaluation and write report.csv plus report.txt.
    Eval {
        #[arg(long, value_enum)]
        task: EvalTask,
        /// Seeds to repeat over.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        subjects: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
}

#[derive(Args)]
struct Input {
    /// Input face image (PNG).
    #[arg(long)]
    input: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalTask {
    /// Standard-only vs differential-only vs both, on synthetic faces.
    Ablation,
    /// Classifier accuracy with no, linear and model augmentation.
    Augmentation,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidValue(msg.into())
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let mut c = RunConfig::default();
                c.apply_text(&std::fs::read_to_string(p)?)?;
                c
            }
            None => RunConfig::default(),
        };
        self.apply_overrides(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_overrides(&self, cfg: &mut RunConfig) -> Result<()> {
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| invalid(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v).map_err(|msg| Error::Config { line: 0, msg })?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(())
    }

    fn model(&self) -> Result<TrainState> {
        let path = self
            .checkpoint
            .as_ref()
            .ok_or_else(|| invalid("--checkpoint is required"))?;
        load_checkpoint(path)
    }

    fn noise(&self, state: &TrainState) -> Noise {
        let base = Noise::from_state(state);
        Noise {
            dropout: base.dropout && !self.no_dropout,
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}

fn label_index(state: &TrainState, name: &str) -> Result<usize> {
    state.config.label_index(name)
}

fn load_input(state: &TrainState, input: &Input) -> Result<ImageTensor> {
    read_png(&input.input, state.config.image_size)
}

fn save_frames(dir: &Path, stem: &str, frames: &[ImageTensor]) -> Result<()> {
    for (i, f) in frames.iter().enumerate() {
        write_png(&dir.join(format!("{stem}_{i:02}.png")), f)?;
    }
    write_png(&dir.join(format!("{stem}_strip.png")), &filmstrip(frames)?)
}

fn parse_mask(spec: &str, size: usize) -> Result<Mask> {
    match spec {
        "upper-half" => Ok(Mask::upper_half(size)),
        "lower-half" => Ok(Mask::lower_half(size)),
        "left-half" => Ok(Mask::left_half(size)),
        _ => match spec.strip_prefix("file:") {
            Some(p) => Mask::from_png(Path::new(p), size),
            None => Err(invalid(format!(
                "unknown mask {spec:?}; use upper-half, lower-half, left-half or file:<path>"
            ))),
        },
    }
}

fn manifest_root(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let out = &c.out_dir;
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Train { manifest } => {
            let (mut state, fresh) = match &c.checkpoint {
                Some(p) => {
                    let mut s = load_checkpoint(p)?;
                    let mut cfg = s.config.clone();
                    // only the schedule may change on resume
                    if let Some(path) = &c.config {
                        let mut extra = cfg.clone();
                        extra.apply_text(&std::fs::read_to_string(path)?)?;
                        cfg.max_iterations = extra.max_iterations;
                        cfg.checkpoint_every = extra.checkpoint_every;
                    }
                    let mut over = cfg.clone();
                    c.apply_overrides(&mut over)?;
                    cfg.max_iterations = over.max_iterations;
                    cfg.checkpoint_every = over.checkpoint_every;
                    s.config = cfg;
                    (s, false)
                }
                None => (TrainState::new(&c.run_config()?)?, true),
            };
            let records = load_manifest(manifest, &state.config.labels)?;
            let source = DirSource::new(manifest_root(manifest), state.config.image_size);
            let set = build_pairs(&records, &state.config.labels, &source)?;
            for s in &set.skipped_subjects {
                log::warn!("subject {s} has no neutral image; skipped");
            }
            log::info!("{} training pairs", set.pairs.len());
            if fresh {
                std::fs::write(out.join("config.txt"), state.config.to_text())?;
                state = train(&state.config, &set.pairs, Some(out))?;
            } else {
                resume(&mut state, &set.pairs, Some(out))?;
            }
            println!("trained to iteration {}; outputs in {}", state.iteration, out.display());
        }
        Command::Synth { input, label, intensity } => {
            let state = c.model()?;
            let x = load_input(&state, input)?;
            let code = LabelCode::one_hot(state.config.label_count, label_index(&state, label)?, *intensity)?;
            let img = synthesize(&state, &x, &code, c.noise(&state))?;
            let path = out.join(format!("{label}_{intensity}.png"));
            write_png(&path, &img)?;
            println!("{}", path.display());
        }
        Command::Sweep { input, label, steps, from_zero } => {
            let state = c.model()?;
            let x = load_input(&state, input)?;
            let frames = intensity_sweep(&state, &x, label_index(&state, label)?, *steps, *from_zero, c.noise(&state))?;
            save_frames(out, &format!("sweep_{label}"), &frames)?;
            println!("{} frames in {}", frames.len(), out.display());
        }
        Command::Compound { input, label_a, label_b, steps, grid } => {
            let state = c.model()?;
            let x = load_input(&state, input)?;
            let (a, b) = (label_index(&state, label_a)?, label_index(&state, label_b)?);
            let noise = c.noise(&state);
            let stem = format!("compound_{label_a}_{label_b}");
            if *grid {
                let rows = compound_grid(&state, &x, a, b, *steps, noise)?;
                for (i, row) in rows.iter().enumerate() {
                    save_frames(out, &format!("{stem}_row{i:02}"), row)?;
                }
            } else {
                save_frames(out, &stem, &compound_sweep(&state, &x, a, b, *steps, noise)?)?;
            }
            println!("outputs in {}", out.display());
        }
        Command::Compose { input, label_a, label_b, mask } => {
            let state = c.model()?;
            let x = load_input(&state, input)?;
            let n = state.config.label_count;
            let ca = LabelCode::one_hot(n, label_index(&state, label_a)?, 1.0)?;
            let cb = LabelCode::one_hot(n, label_index(&state, label_b)?, 1.0)?;
            let m = parse_mask(mask, state.config.image_size)?;
            let img = region_compose_synthesis(&state, &x, &ca, &cb, &m, c.noise(&state))?;
            let path = out.join(format!("compose_{label_a}_{label_b}.png"));
            write_png(&path, &img)?;
            println!("{}", path.display());
        }
        Command::Augment { manifest, linear } => {
            let state = c.model()?;
            let vocab = state.config.labels.clone();
            let records = load_manifest(manifest, &vocab)?;
            let source = DirSource::new(manifest_root(manifest), state.config.image_size);
            let plan = plan_missing_labels(&records, &vocab);
            let aug = augment_dataset(&state, &records, &source, &plan, Some(out), c.noise(&state))?;
            let mut rows: Vec<ManifestRecord> = aug.records.clone();
            if *linear {
                let mut extra = Vec::new();
                for r in records.iter().chain(&aug.records) {
                    let img = if r.generated {
                        read_png(&out.join(&r.image_path), state.config.image_size)?
                    } else {
                        read_png(&manifest_root(manifest).join(&r.image_path), state.config.image_size)?
                    };
                    for (i, v) in linear_augment(&img).iter().enumerate() {
                        let rel = format!("linear/{}/{}_{i:02}.png", r.subject_id, r.label_name);
                        write_png(&out.join(&rel), v)?;
                        let mut rec = ManifestRecord::new(&r.subject_id, &r.label_name, r.intensity, &rel);
                        rec.generated = true;
                        extra.push(rec);
                    }
                }
                rows.extend(extra);
            }
            write_manifest(&rows, std::fs::File::create(out.join("augmented.csv"))?)?;
            println!(
                "{} cells filled, {} rows in {}",
                aug.records.len(),
                rows.len(),
                out.join("augmented.csv").display()
            );
        }
        Command::DatasetGen { subjects } => {
            let cfg = c.run_config()?;
            let ds = gen_synthetic_dataset(*subjects, &cfg.labels, cfg.seed, cfg.image_size)?;
            ds.write_to(out)?;
            println!("{} images in {}", ds.records.len(), out.display());
        }
        Command::Eval { task, seeds, subjects, folds } => {
            let cfg = c.run_config()?;
            if cfg.max_iterations.is_none() {
                return Err(invalid("evaluation trains models; set max_iterations"));
            }
            let ds = gen_synthetic_dataset(*subjects, &cfg.labels, cfg.seed, cfg.image_size)?;
            let ids = ds.oracle.subject_ids();
            let half = ids.len() / 2;
            let noise = Noise {
                dropout: cfg.dropout_at_synthesis && !c.no_dropout,
                seed: cfg.seed,
            };
            let report = match task {
                EvalTask::Ablation => run_ablation(&cfg, &Regime::ALL, &ds, &ids[..half], &ids[half..], seeds, noise)?.0,
                EvalTask::Augmentation => {
                    let mut report = EvalReport::default();
                    for (i, &seed) in seeds.iter().enumerate() {
                        let mut run_cfg = cfg.clone();
                        run_cfg.seed = seed;
                        let pairs = build_pairs(&ds.records, &cfg.labels, &ds.images)?.pairs;
                        let state = train(&run_cfg, &pairs, None)?;
                        let bench = gen_classification_benchmark(&BenchmarkConfig {
                            size: cfg.image_size,
                            seed: seed + 1_000_000,
                            ..BenchmarkConfig::default()
                        })?;
                        let clf = ClassifierConfig { seed, ..ClassifierConfig::default() };
                        let (r, _) = augmentation_study(&bench, *folds, (&state, noise), &clf, seed, i as u64)?;
                        report.rows.extend(r.rows);
                    }
                    report
                }
            };
            let path = out.join("report.csv");
            emit_report(&report, &path)?;
            print!("{}", report.summary_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
