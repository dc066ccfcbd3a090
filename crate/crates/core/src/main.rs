use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use diaa::attacks::AttackConfig;
use diaa::dataset::{self, DataFormat, Dataset};
use diaa::dtd::dtd_relevance;
use diaa::error::{Error, Result};
use diaa::explain::export_saliency;
use diaa::model_io::{load_model, model_file_hash, save_model};
use diaa::network::{convnet_arch, dense_arch, fold_batchnorm, Network};
use diaa::suite::{
    hyperparameter_sweep, run_attack_suite, transfer_evaluate, write_suite_csv, write_suite_json,
    write_sweep_csv, write_transfer_csv, AttackKind, ReportHeader,
};
use diaa::train::{
    adversarial_train, evaluate_accuracy, train, AdvTrainConfig, OptimizerKind, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "diaa",
    version,
    about = "Saliency-guided sparse adversarial attacks, baselines, and benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Idx,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Dense,
    Convnet,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (optionally adversarially) and save it as JSON.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long, value_enum, default_value = "dense")]
        arch: ArchArg,
        #[arg(long)]
        out: PathBuf,
        /// Train on PGD-perturbed batches instead of clean ones.
        #[arg(long)]
        adv: bool,
        #[arg(long, default_value_t = 0.1)]
        eps_ball: f64,
        /// Inner PGD steps for adversarial training.
        #[arg(long, default_value_t = 7)]
        steps: usize,
        #[arg(long, default_value_t = 0.025)]
        step_size: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, value_enum, default_value = "adam")]
        optimizer: OptimizerArg,
        /// Hidden units for the dense architecture.
        #[arg(long, default_value_t = 128)]
        hidden: usize,
        /// Use only the first N examples.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one or more attacks over a dataset and write CSV+JSON reports.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Comma-separated list from diaa|fgsm|bim|pgd.
        #[arg(long)]
        attack: String,
        #[command(flatten)]
        attack_opts: AttackOpts,
        #[command(flatten)]
        target_opts: TargetOpts,
        #[arg(long)]
        limit: Option<usize>,
        /// Output stem or .csv path; both .csv and .json are written.
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-sweep the sparse attack's T, eps, and c over a dataset slice.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Iterations grid: `1..21` (inclusive) or `1,5,9`.
        #[arg(long, default_value = "1..21")]
        t_grid: String,
        /// Step-size grid, comma separated.
        #[arg(long, default_value = "0.0032")]
        eps_grid: String,
        /// Distance-weight grid, comma separated.
        #[arg(long, default_value = "1.0")]
        c_grid: String,
        /// Fraction of the dataset to sweep over (prefix slice).
        #[arg(long, default_value_t = 0.1)]
        slice: f64,
        #[command(flatten)]
        attack_opts: AttackOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Craft examples on a source model and measure the accuracy drop they
    /// cause on a target model.
    Transfer {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long, default_value = "diaa")]
        attack: String,
        #[command(flatten)]
        attack_opts: AttackOpts,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the relevance map of one example as CSV and PGM.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        index: usize,
        /// Class to decompose; defaults to the example's label.
        #[arg(long)]
        class: Option<usize>,
        /// Row width for flat feature vectors.
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Generate a seeded synthetic digit dataset (IDX pair or CSV).
    GenData {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "idx")]
        format: FormatArg,
    },
}

/// Attack parameters shared by the attack, sweep, and transfer commands.
#[derive(Args)]
struct AttackOpts {
    /// Perturbation rate (inner gradient step).
    #[arg(long, default_value_t = 0.0032)]
    eps: f64,
    /// Inner iterations T.
    #[arg(long, default_value_t = 21)]
    iters: usize,
    /// Weight of the L2 distance term, in (0,1].
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    max_features: Option<usize>,
    /// L-infinity radius for fgsm/bim/pgd.
    #[arg(long, default_value_t = 0.1)]
    eps_ball: f64,
    #[arg(long, default_value_t = 40)]
    baseline_steps: usize,
    /// Step size for bim/pgd; defaults to eps_ball / 10.
    #[arg(long)]
    baseline_step: Option<f64>,
    /// Keep Adam moment state in the inner loop instead of plain steps.
    #[arg(long)]
    adam_update: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    clip_min: f64,
    #[arg(long, default_value_t = 1.0)]
    clip_max: f64,
}

/// Targeted-attack switches, only meaningful for the sparse attack.
#[derive(Args, Default)]
struct TargetOpts {
    #[arg(long)]
    targeted: bool,
    /// Class the targeted attack steers toward.
    #[arg(long, default_value_t = 0)]
    target: usize,
}

impl AttackOpts {
    fn to_config(&self, target: &TargetOpts) -> AttackConfig {
        AttackConfig {
            step: self.eps,
            inner_iters: self.iters,
            c: self.c,
            clip_min: self.clip_min,
            clip_max: self.clip_max,
            max_features: self.max_features,
            targeted: target.targeted,
            target: target.target,
            epsilon_ball: self.eps_ball,
            baseline_steps: self.baseline_steps,
            baseline_step: self.baseline_step.unwrap_or(self.eps_ball / 10.0),
            adam_update: self.adam_update,
            seed: self.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn infer_format(path: &Path, format: Option<FormatArg>) -> DataFormat {
    match format {
        Some(FormatArg::Idx) => DataFormat::Idx,
        Some(FormatArg::Csv) => DataFormat::Csv,
        None => {
            if path.extension().map(|e| e == "csv").unwrap_or(false) {
                DataFormat::Csv
            } else {
                DataFormat::Idx
            }
        }
    }
}

fn load_data(path: &Path, format: Option<FormatArg>, limit: Option<usize>) -> Result<Dataset> {
    let ds = dataset::load_dataset(path, infer_format(path, format))?;
    Ok(match limit {
        Some(n) => ds.prefix(n),
        None => ds,
    })
}

fn parse_attacks(spec: &str) -> Result<Vec<AttackKind>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(AttackKind::parse)
        .collect()
}

fn parse_usize_grid(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse grid {spec:?}; use a..b or a,b,c"));
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn parse_f64_grid(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse {s:?} in grid {spec:?}")))
        })
        .collect()
}

fn stem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_folded_model(path: &Path) -> Result<(Network, String)> {
    let net = load_model(path)?;
    let folded = fold_batchnorm(&net)?;
    let hash = model_file_hash(path)?;
    Ok((folded, hash))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            format,
            arch,
            out,
            adv,
            eps_ball,
            steps,
            step_size,
            epochs,
            lr,
            batch,
            optimizer,
            hidden,
            limit,
            seed,
        } => {
            let dataset = load_data(&data, format, limit)?;
            let network = match arch {
                ArchArg::Dense => dense_arch(&dataset.shape, hidden, dataset.classes, seed)?,
                ArchArg::Convnet => convnet_arch(&dataset.shape, dataset.classes, seed)?,
            };
            let cfg = TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                optimizer: match optimizer {
                    OptimizerArg::Sgd => OptimizerKind::Sgd,
                    OptimizerArg::Adam => OptimizerKind::Adam,
                },
                seed,
                adversarial: adv.then_some(AdvTrainConfig {
                    eps_ball,
                    steps,
                    step_size,
                }),
            };
            let trained = if adv {
                adversarial_train(&network, &dataset, &cfg)?
            } else {
                train(&network, &dataset, &cfg)?
            };
            let accuracy = evaluate_accuracy(&trained, &dataset)?;
            save_model(&trained, &out)?;
            println!(
                "trained {} on {} ({} examples); train accuracy {:.4}; saved to {}",
                match arch {
                    ArchArg::Dense => "dense",
                    ArchArg::Convnet => "convnet",
                },
                dataset.name,
                dataset.len(),
                accuracy,
                out.display()
            );
            Ok(())
        }
        Command::Attack {
            model,
            data,
            format,
            attack,
            attack_opts,
            target_opts,
            limit,
            out,
        } => {
            let (network, hash) = load_folded_model(&model)?;
            let dataset = load_data(&data, format, limit)?;
            let attacks = parse_attacks(&attack)?;
            if attacks.is_empty() {
                return Err(Error::Config("no attack named".into()));
            }
            let cfg = attack_opts.to_config(&target_opts);
            cfg.validate()?;
            let runs = run_attack_suite(&network, &dataset, &attacks, &cfg)?;
            let reports: Vec<_> = runs.into_iter().map(|r| r.report).collect();
            let header = ReportHeader::new(&dataset, hash, &cfg);
            let csv_path = out.with_extension("csv");
            let json_path = out.with_extension("json");
            write_suite_csv(&csv_path, &header, &reports)?;
            write_suite_json(&json_path, &header, &reports)?;
            for r in &reports {
                println!(
                    "{}: n={} sr={:.4} l0_mean={:.2} l2_mean={:.4} ({} ms)",
                    r.attack, r.n, r.sr, r.l0.mean, r.l2.mean, r.wall_ms
                );
            }
            println!("wrote {} and {}", csv_path.display(), json_path.display());
            Ok(())
        }
        Command::Sweep {
            model,
            data,
            format,
            t_grid,
            eps_grid,
            c_grid,
            slice,
            attack_opts,
            out,
        } => {
            let (network, hash) = load_folded_model(&model)?;
            let dataset = load_data(&data, format, None)?;
            let cfg = attack_opts.to_config(&TargetOpts::default());
            cfg.validate()?;
            let t = parse_usize_grid(&t_grid)?;
            let eps = parse_f64_grid(&eps_grid)?;
            let c = parse_f64_grid(&c_grid)?;
            let rows = hyperparameter_sweep(&network, &dataset, &t, &eps, &c, slice, &cfg)?;
            let header = ReportHeader::new(&dataset.fraction_prefix(slice), hash, &cfg);
            write_sweep_csv(&out, &header, &rows)?;
            println!("swept {} grid points; wrote {}", rows.len(), out.display());
            Ok(())
        }
        Command::Transfer {
            source,
            target,
            data,
            format,
            attack,
            attack_opts,
            limit,
            out,
        } => {
            let (source_net, _) = load_folded_model(&source)?;
            let (target_net, _) = load_folded_model(&target)?;
            let dataset = load_data(&data, format, limit)?;
            let kinds = parse_attacks(&attack)?;
            let cfg = attack_opts.to_config(&TargetOpts::default());
            cfg.validate()?;
            let mut reports = Vec::new();
            for kind in kinds {
                reports.push(transfer_evaluate(
                    &source_net,
                    &target_net,
                    &stem_name(&source),
                    &stem_name(&target),
                    &dataset,
                    kind,
                    &cfg,
                )?);
            }
            write_transfer_csv(&out, &reports)?;
            for r in &reports {
                println!(
                    "{} -> {} via {}: clean {:.4}, adversarial {:.4}, drop {:.2} pp over {} examples",
                    r.source, r.target, r.attack, r.clean_accuracy, r.adversarial_accuracy, r.drop_pp, r.n
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Explain {
            model,
            data,
            format,
            index,
            class,
            width,
            out_prefix,
        } => {
            let (network, _) = load_folded_model(&model)?;
            let dataset = load_data(&data, format, None)?;
            if index >= dataset.len() {
                return Err(Error::Config(format!(
                    "index {index} out of range for {} examples",
                    dataset.len()
                )));
            }
            let class = class.unwrap_or(dataset.labels[index]);
            let map = dtd_relevance(&network, &dataset.examples[index], class)?;
            let (csv, pgm) = export_saliency(&map, width, &out_prefix)?;
            println!(
                "relevance of class {class} for example {index} (start {:.6}, {}): wrote {} and {}",
                map.start_relevance,
                if map.conservative {
                    "decomposed"
                } else {
                    "gradient fallback"
                },
                csv.display(),
                pgm.display()
            );
            Ok(())
        }
        Command::GenData {
            out_dir,
            train,
            test,
            seed,
            format,
        } => {
            let train_set = dataset::synthetic_digits(train, seed, "synth-train");
            let test_set = dataset::synthetic_digits(test, seed.wrapping_add(1), "synth-test");
            match format {
                FormatArg::Idx => {
                    dataset::write_idx_pair(&train_set, &out_dir, "train")?;
                    dataset::write_idx_pair(&test_set, &out_dir, "t10k")?;
                }
                FormatArg::Csv => {
                    std::fs::create_dir_all(&out_dir)?;
                    dataset::write_csv(&train_set, out_dir.join("train.csv"))?;
                    dataset::write_csv(&test_set, out_dir.join("test.csv"))?;
                }
            }
            println!(
                "wrote {train} train and {test} test synthetic digits to {}",
                out_dir.display()
            );
            Ok(())
        }
    }
}
