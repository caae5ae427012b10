//! Command-line surface. Exit codes: 0 success, 1 checked condition failed,
//! 2 usage or input error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::compression::{
    head_importance, prune_heads, prune_layers, prune_magnitude, quantize_params,
    quantized_memory_bytes, CompressionReport,
};
use crate::format::{self, ModelFile};
use crate::model::{
    grad_check_report, init_params, param_count, synth_copy_batch, train_copy_task, ModelConfig,
    ParamSet, GRAD_CHECK_MAX_PARAMS,
};
use crate::profiler::{
    activation_bytes, build_report, compare, config_search, memory_bytes, MonotonicClock,
    SearchBounds,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "retformer", version, about = "Small transformer encoder: build, count, benchmark, compress")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Initialise a model and write it as a version-1 model file.
    Init {
        /// Preset name (paper-baseline, paper-reduced, tiny, small) or path to a config JSON.
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print parameter count and memory figures for a config.
    Count {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        seq: usize,
    },
    /// Benchmark one config and print its resource report as JSON.
    Bench {
        #[arg(long)]
        config: String,
        #[command(flatten)]
        timing: TimingArgs,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Benchmark two configs and print a side-by-side table.
    Compare {
        #[arg(long)]
        baseline: String,
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        timing: TimingArgs,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Train on the copy task and report the loss per iteration.
    Train {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        /// Sequence length; defaults to min(10, max_seq_len).
        #[arg(long)]
        seq: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply a compression pass to a model file.
    #[command(subcommand)]
    Compress(CompressCommand),
    /// Find configs whose full-size and halved parameter counts hit two targets.
    Search {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        target_base: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        target_variant: u64,
        #[arg(long, default_value_t = 2)]
        vs_min: usize,
        #[arg(long, default_value_t = 20_000)]
        vs_max: usize,
        #[arg(long, default_value_t = 10)]
        seq_len: usize,
        #[arg(long, default_value_t = 512)]
        max_d: usize,
        #[arg(long, default_value_t = 4)]
        max_layers: usize,
        #[arg(long)]
        no_bias: bool,
    },
    /// Compare backprop gradients against central finite differences.
    Gradcheck {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub seq: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModelIo {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CompressCommand {
    /// Symmetric per-tensor int8; writes a version-2 file.
    Quantize {
        #[command(flatten)]
        io: ModelIo,
    },
    /// Zero every value with |w| below the threshold.
    PruneMagnitude {
        #[command(flatten)]
        io: ModelIo,
        #[arg(long)]
        threshold: f64,
    },
    /// Remove attention heads from one layer.
    PruneHeads {
        #[command(flatten)]
        io: ModelIo,
        #[arg(long)]
        layer: usize,
        /// Head indices to keep.
        #[arg(long, value_delimiter = ',', conflicts_with = "keep_top", required_unless_present = "keep_top")]
        keep: Vec<usize>,
        /// Keep the k heads with the largest output-projection norm.
        #[arg(long)]
        keep_top: Option<usize>,
    },
    /// Remove whole layers.
    PruneLayers {
        #[command(flatten)]
        io: ModelIo,
        /// Layer indices to keep, increasing; empty keeps none.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        keep: Vec<usize>,
    },
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Resolves a preset name or reads a config JSON file.
pub fn resolve_config(arg: &str) -> crate::Result<ModelConfig> {
    if let Some(cfg) = ModelConfig::preset(arg) {
        return Ok(cfg);
    }
    let text = std::fs::read_to_string(arg).map_err(|e| {
        crate::Error::Config(format!(
            "'{arg}' is neither a preset ({}) nor a readable file: {e}",
            ModelConfig::PRESETS.join(", ")
        ))
    })?;
    let cfg: ModelConfig = serde_json::from_str(&text)
        .map_err(|e| crate::Error::Config(format!("{arg}: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Check(msg)) => {
            let _ = writeln!(err, "{msg}");
            EXIT_CHECK_FAILED
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Init { config, seed, out: path } => cmd_init(&config, seed, &path, out),
        Command::Count { config, batch, seq } => cmd_count(&config, batch, seq, out),
        Command::Bench { config, timing, json } => cmd_bench(&config, &timing, json.as_deref(), out),
        Command::Compare {
            baseline,
            variant,
            timing,
            json,
        } => cmd_compare(&baseline, &variant, &timing, json.as_deref(), out),
        Command::Train {
            config,
            iters,
            batch,
            seq,
            lr,
            seed,
        } => cmd_train(&config, iters, batch, seq, lr, seed, out),
        Command::Compress(c) => cmd_compress(c, out),
        Command::Search {
            target_base,
            target_variant,
            vs_min,
            vs_max,
            seq_len,
            max_d,
            max_layers,
            no_bias,
        } => {
            let bounds = SearchBounds {
                vocab_plus_seq: (vs_min, vs_max),
                max_seq_len: seq_len,
                max_d_model: max_d,
                max_layers,
                try_bias: !no_bias,
                ..SearchBounds::default()
            };
            cmd_search(target_base as usize, target_variant as usize, &bounds, out)
        }
        Command::Gradcheck { config, eps, seed } => cmd_gradcheck(&config, eps, seed, out),
    }
}

fn cmd_init(config: &str, seed: u64, path: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = resolve_config(config)?;
    let params = init_params::<f64>(&cfg, seed)?;
    let file = ModelFile::Float {
        config: cfg.clone(),
        params,
    };
    format::save(path, &file)?;
    let size = std::fs::metadata(path)?.len();
    writeln!(out, "parameters {}", param_count(&cfg))?;
    writeln!(out, "param_bytes {}", memory_bytes(&cfg))?;
    writeln!(out, "wrote {} ({size} bytes)", path.display())?;
    Ok(())
}

fn cmd_count(config: &str, batch: usize, seq: usize, out: &mut dyn Write) -> CmdResult {
    let cfg = resolve_config(config)?;
    let seq = seq.min(cfg.max_seq_len);
    writeln!(out, "parameters {}", param_count(&cfg))?;
    writeln!(out, "param_bytes {}", memory_bytes(&cfg))?;
    writeln!(out, "int8_bytes {}", param_count(&cfg) + 8 * crate::model::tensor_specs(&cfg).len())?;
    writeln!(out, "activation_bytes {} (batch {batch}, seq {seq})", activation_bytes(&cfg, batch, seq)?)?;
    Ok(())
}

fn check_timing(t: &TimingArgs) -> CmdResult {
    if t.reps == 0 || t.batch == 0 || t.seq == 0 {
        return Err(Failure::Usage("--reps, --batch and --seq must be at least 1".into()));
    }
    Ok(())
}

fn cmd_bench(config: &str, t: &TimingArgs, json: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    check_timing(t)?;
    let cfg = resolve_config(config)?;
    let p = init_params::<f64>(&cfg, t.seed)?;
    let mut clock = MonotonicClock::new();
    let rep = build_report(config, &p, &cfg, t.batch, t.seq, t.reps, t.warmup, &mut clock, t.seed)?;
    let doc = serde_json::to_string_pretty(&rep).map_err(crate::Error::from)?;
    writeln!(out, "{doc}")?;
    if let Some(path) = json {
        std::fs::write(path, doc + "\n")?;
    }
    Ok(())
}

fn cmd_compare(
    baseline: &str,
    variant: &str,
    t: &TimingArgs,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    check_timing(t)?;
    let bcfg = resolve_config(baseline)?;
    let vcfg = resolve_config(variant)?;
    let bp = init_params::<f64>(&bcfg, t.seed)?;
    let vp = init_params::<f64>(&vcfg, t.seed)?;
    let mut clock = MonotonicClock::new();
    let brep = build_report(baseline, &bp, &bcfg, t.batch, t.seq, t.reps, t.warmup, &mut clock, t.seed)?;
    let vrep = build_report(variant, &vp, &vcfg, t.batch, t.seq, t.reps, t.warmup, &mut clock, t.seed)?;
    let cmp = compare(&brep, &vrep);
    write!(out, "{}", cmp.render_table())?;
    if let Some(path) = json {
        let doc = serde_json::to_string_pretty(&cmp).map_err(crate::Error::from)?;
        std::fs::write(path, doc + "\n")?;
    }
    Ok(())
}

fn cmd_train(
    config: &str,
    iters: usize,
    batch: usize,
    seq: Option<usize>,
    lr: f64,
    seed: u64,
    out: &mut dyn Write,
) -> CmdResult {
    if iters == 0 || batch == 0 {
        return Err(Failure::Usage("--iters and --batch must be at least 1".into()));
    }
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Failure::Usage(format!("--lr must be finite and non-negative, got {lr}")));
    }
    let cfg = resolve_config(config)?;
    let seq = seq.unwrap_or(cfg.max_seq_len.min(10));
    if seq == 0 || seq > cfg.max_seq_len {
        return Err(Failure::Usage(format!(
            "--seq must be in 1..={}, got {seq}",
            cfg.max_seq_len
        )));
    }
    if cfg.vocab_size < 2 {
        return Err(Failure::Usage("the copy task needs vocab_size >= 2".into()));
    }
    let params = init_params::<f64>(&cfg, seed)?;
    let data = synth_copy_batch(seed.wrapping_add(1), batch, seq, cfg.vocab_size)?;
    let run = train_copy_task(params, &cfg, &data, iters, lr)?;
    for (i, loss) in run.losses.iter().enumerate() {
        writeln!(out, "iter {} loss {loss:.12}", i + 1)?;
    }
    let initial = run.losses[0];
    writeln!(out, "final loss {:.12} (initial {initial:.12}, change {:+.3e})", run.final_loss, run.final_loss - initial)?;
    if run.final_loss < initial {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "loss did not decrease: initial {initial:.6}, final {:.6}",
            run.final_loss
        )))
    }
}

fn load_float(path: &Path, pass: &str) -> std::result::Result<(ModelConfig, ParamSet<f64>), Failure> {
    match format::load(path)? {
        ModelFile::Float { config, params } => Ok((config, params)),
        ModelFile::Quantized(_) => Err(Failure::Usage(format!(
            "{pass} needs a float64 (version 1) model, but {} is an int8 (version 2) file",
            path.display()
        ))),
    }
}

fn finish(report: &CompressionReport, file: &ModelFile, path: &Path, out: &mut dyn Write) -> CmdResult {
    format::save(path, file)?;
    writeln!(out, "{}", report.render())?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn cmd_compress(cmd: CompressCommand, out: &mut dyn Write) -> CmdResult {
    match cmd {
        CompressCommand::Quantize { io } => {
            let (cfg, p) = load_float(&io.model, "quantize")?;
            let q = quantize_params(&p, &cfg)?;
            let n = param_count(&cfg);
            let report = CompressionReport {
                pass: "quantize-int8".into(),
                params_before: n,
                params_after: n,
                bytes_before: memory_bytes(&cfg),
                bytes_after: quantized_memory_bytes(&p),
                sparsity: q.tensors.iter().flat_map(|t| &t.values).filter(|&&v| v == 0).count() as f64
                    / n.max(1) as f64,
                max_error: q.max_error(&p),
            };
            finish(&report, &ModelFile::Quantized(q), &io.out, out)
        }
        CompressCommand::PruneMagnitude { io, threshold } => {
            let (cfg, p) = load_float(&io.model, "prune-magnitude")?;
            let (p, report) = prune_magnitude(&p, threshold)?;
            finish(&report, &ModelFile::Float { config: cfg, params: p }, &io.out, out)
        }
        CompressCommand::PruneHeads {
            io,
            layer,
            keep,
            keep_top,
        } => {
            let (cfg, p) = load_float(&io.model, "prune-heads")?;
            let keep = match keep_top {
                Some(k) => {
                    let scores = head_importance(&p, &cfg, layer)?;
                    let mut order: Vec<usize> = (0..scores.len()).collect();
                    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                    writeln!(out, "head scores {scores:?}")?;
                    order.into_iter().take(k).collect()
                }
                None => keep,
            };
            let (p, cfg, report) = prune_heads(&p, &cfg, layer, &keep)?;
            finish(&report, &ModelFile::Float { config: cfg, params: p }, &io.out, out)
        }
        CompressCommand::PruneLayers { io, keep } => {
            let (cfg, p) = load_float(&io.model, "prune-layers")?;
            let (p, cfg, report) = prune_layers(&p, &cfg, &keep)?;
            finish(&report, &ModelFile::Float { config: cfg, params: p }, &io.out, out)
        }
    }
}

fn cmd_search(base: usize, variant: usize, bounds: &SearchBounds, out: &mut dyn Write) -> CmdResult {
    let pairs = config_search(base, variant, bounds)?;
    for pair in &pairs {
        // every printed pair is re-derived from the closed form
        if param_count(&pair.base) != base || param_count(&pair.variant) != variant {
            return Err(Failure::Check(format!("search returned a non-matching pair: {pair:?}")));
        }
        writeln!(out, "{}", serde_json::to_string(pair).map_err(crate::Error::from)?)?;
    }
    if pairs.is_empty() {
        Err(Failure::Check(format!("no config matches targets ({base}, {variant})")))
    } else {
        Ok(())
    }
}

fn cmd_gradcheck(config: &str, eps: f64, seed: u64, out: &mut dyn Write) -> CmdResult {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Failure::Usage(format!("--eps must be positive, got {eps}")));
    }
    let cfg = resolve_config(config)?;
    let n = param_count(&cfg);
    if n > GRAD_CHECK_MAX_PARAMS {
        return Err(Failure::Usage(format!(
            "{n} parameters is too many to finite-difference (limit {GRAD_CHECK_MAX_PARAMS}); try --config tiny"
        )));
    }
    let r = grad_check_report(&cfg, seed, eps)?;
    writeln!(out, "parameters checked {}", r.params_checked)?;
    writeln!(
        out,
        "max relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})",
        r.max_relative_error, r.worst.0, r.worst.1, r.analytic, r.numeric
    )?;
    if r.max_relative_error < GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "max relative error {:.3e} exceeds {GRAD_TOLERANCE:e}",
            r.max_relative_error
        )))
    }
}
