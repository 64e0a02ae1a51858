use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use vga_core::datamodel::{
    load_dataset, load_image, save_dataset, save_tensor, synth_generate, Dataset, SaveOptions,
    SynthConfig,
};
use vga_core::fusion::{FusionMode, SimMode};
use vga_core::harness::{
    cross_validate, evaluate, fit, gradcheck_suite, grid_search_alpha, load_model, save_model,
    CvOptions, F1Average, ModelConfig, TrainOptions, ALPHA_GRID,
};
use vga_core::vision::{srm_residual, EncoderKind};
use vga_core::VgaError;

#[derive(Parser)]
#[command(
    name = "vga",
    version,
    about = "Vision and graph fused attention network for rumor detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate a model configuration on a dataset.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Eval(EvalArgs),
    /// Finite-difference check of every op and of the full joint loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Write the SRM noise residual of an image as a VGT1 tensor.
    SrmExtract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate once per α and report the best.
    Gridsearch {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated α values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Dataset file (JSON Lines).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p_aug: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Tokens for visual self-attention.
    #[arg(long)]
    tokens: Option<usize>,
    /// Tokens for fusion attention.
    #[arg(long)]
    fusion_tokens: Option<usize>,
    #[arg(long)]
    gcn_layers: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    /// Width of the tiny patch encoder output.
    #[arg(long)]
    enc_dim: Option<usize>,
    #[arg(long)]
    sim_mode: Option<SimMode>,
    #[arg(long)]
    fusion_mode: Option<FusionMode>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long, default_value = "macro")]
    f1: F1Average,
    #[arg(long)]
    no_sim: bool,
    #[arg(long)]
    no_re: bool,
    #[arg(long)]
    no_da: bool,
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    no_ocr: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Where to write the key=value summary; defaults to `<data>.summary`.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Also fit one model on the whole dataset and save it to this directory.
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "macro")]
    f1: F1Average,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    claims: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    separability: f64,
    #[arg(long, default_value_t = 0.9)]
    agreement: f64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    image_size: usize,
    #[arg(long, default_value_t = 32)]
    visual_dim: usize,
    #[arg(long, default_value_t = 0.3)]
    ocr_rate: f64,
    #[arg(long, default_value_t = 3)]
    min_nodes: usize,
    #[arg(long, default_value_t = 10)]
    max_nodes: usize,
    /// Write node embeddings as VGT1 files instead of inline arrays.
    #[arg(long)]
    external: bool,
}

impl ModelArgs {
    /// Config from the flags, with embedding widths taken from the dataset.
    fn config(&self, ds: &Dataset) -> Result<ModelConfig, VgaError> {
        let input_dim = ds.embedding_dim().ok_or_else(|| {
            VgaError::EmptyInput(format!("{} holds no claims", self.data.display()))
        })?;
        let mut c = ModelConfig {
            input_dim,
            ..Default::default()
        };
        macro_rules! set {
            ($($field:ident <- $arg:ident),* $(,)?) => {
                $(if let Some(v) = self.$arg { c.$field = v; })*
            };
        }
        set!(alpha <- alpha, dim <- dim, heads <- heads, lr <- lr, max_epochs <- epochs, patience <- patience,
             folds <- folds, seed <- seed, p_aug <- p_aug, batch_size <- batch_size, vis_tokens <- tokens,
             fusion_tokens <- fusion_tokens, gcn_layers <- gcn_layers, patch_size <- patch_size,
             enc_dim <- enc_dim, sim_mode <- sim_mode, fusion_mode <- fusion_mode, encoder <- encoder);
        if c.encoder == EncoderKind::Precomputed && self.enc_dim.is_none() {
            if let Some(v) = ds.claims.iter().find_map(|cl| cl.visual_embedding.as_ref()) {
                c.enc_dim = v.numel();
            }
        }
        c.no_sim = self.no_sim;
        c.no_re = self.no_re;
        c.no_da = self.no_da;
        c.no_noise = self.no_noise;
        c.no_ocr = self.no_ocr;
        c.validate()?;
        Ok(c)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), VgaError> {
    fs::write(path, text).map_err(|source| VgaError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn default_summary(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".summary");
    PathBuf::from(s)
}

fn run(cmd: Command) -> Result<(), VgaError> {
    match cmd {
        Command::Train(args) => {
            let ds = load_dataset(&args.model.data)?;
            let config = args.model.config(&ds)?;
            info!("cross-validating {} claims", ds.len());
            let opts = CvOptions {
                f1_average: args.model.f1,
                ..Default::default()
            };
            let report = cross_validate(&config, &ds, &opts)?;
            let lines = report.summary_lines();
            for l in &lines {
                println!("{l}");
            }
            let path = args
                .summary
                .unwrap_or_else(|| default_summary(&args.model.data));
            write_text(&path, &(lines.join("\n") + "\n"))?;
            if let Some(dir) = args.save_model {
                let (model, rep) = fit(&config, &ds, &TrainOptions::default())?;
                save_model(&model, &dir)?;
                println!(
                    "saved_model={} epochs={} best_epoch={}",
                    dir.display(),
                    rep.epochs_run(),
                    rep.best_epoch
                );
            }
        }
        Command::Eval(args) => {
            let model = load_model(&args.model)?;
            let ds = load_dataset(&args.data)?;
            let claims = model.prepare_all(&ds)?;
            let eval = evaluate(&model, &claims)?;
            let labels = ds.labels();
            let m = vga_core::harness::compute_metrics_with(&eval.predictions, &labels, args.f1)?;
            println!(
                "claims={} loss={} accuracy={} precision={} recall={} f1={}",
                claims.len(),
                eval.loss,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1
            );
        }
        Command::Gradcheck { seed } => {
            let report = gradcheck_suite(seed)?;
            println!("{report}");
            if !report.passed() {
                return Err(VgaError::Numeric(format!(
                    "gradient check failed (max relative error {:.3e})",
                    report.max_rel_error()
                )));
            }
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                non_rumors: a.claims - a.claims / 2,
                rumors: a.claims / 2,
                min_nodes: a.min_nodes,
                max_nodes: a.max_nodes,
                dim: a.dim,
                image_size: a.image_size,
                visual_dim: a.visual_dim,
                separability: a.separability,
                agreement: a.agreement,
                ocr_rate: a.ocr_rate,
            };
            let ds = synth_generate(&cfg, a.seed)?;
            save_dataset(
                &ds,
                &a.out,
                SaveOptions {
                    external_tensors: a.external,
                },
            )?;
            println!("claims={} path={}", ds.len(), a.out.display());
        }
        Command::SrmExtract { image, out } => {
            let residual = srm_residual(&load_image(&image)?)?;
            save_tensor(&out, &residual)?;
            println!("shape={:?} path={}", residual.shape(), out.display());
        }
        Command::Gridsearch {
            model,
            grid,
            summary,
        } => {
            let ds = load_dataset(&model.data)?;
            let config = model.config(&ds)?;
            let grid = grid.unwrap_or_else(|| ALPHA_GRID.to_vec());
            let opts = CvOptions {
                f1_average: model.f1,
                ..Default::default()
            };
            let gs = grid_search_alpha(&config, &ds, &grid, &opts)?;
            let mut lines: Vec<String> = gs
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "alpha={} accuracy={} precision={} recall={} f1={} seed={}",
                        r.alpha,
                        r.metrics.accuracy,
                        r.metrics.precision,
                        r.metrics.recall,
                        r.metrics.f1,
                        config.seed
                    )
                })
                .collect();
            lines.push(format!("best_alpha={}", gs.best_alpha));
            for l in &lines {
                println!("{l}");
            }
            if let Some(path) = summary {
                write_text(&path, &(lines.join("\n") + "\n"))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
