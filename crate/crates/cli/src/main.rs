use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use glnet_core::analyzer::{
    audit, audit_matches_runtime, check_golden, scaling_benchmark, BlockKind, GoldenCheck,
    EVOLUTION, GOLDEN, GOLDEN_EXTRA, GOLDEN_TOL, RUNTIME_TOL,
};
use glnet_core::glnet::{checkpoint, ModelSpec, ABLATIONS, PRESETS};
use glnet_core::gradcheck::{self, Scope};
use glnet_core::harness::{
    evaluate, train_to_dir, ModelRef, SyntheticDataset, TrainConfig, EVAL_OFFSET,
};
use glnet_core::inspect::{read_pnm, tensor_to_image, visualize, write_ppm, VisualizeOptions};

/// GLMix / GLNet toolkit: cost audits, gradient checks, scaling benchmarks,
/// toy training and slot visualization.
///
/// Training runs on a procedural 4-class image task (oriented stripe patches
/// at class-specific positions), a desk-scale stand-in for ImageNet; it does
/// not reproduce ImageNet accuracies.
#[derive(Parser)]
#[command(name = "glnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the synthetic task; writes metrics CSV, eval CSV,
    /// the config and a checkpoint into --out.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out synthetic samples.
    Eval(EvalArgs),
    /// Closed-form parameter and MAC audit.
    Audit(AuditArgs),
    /// Finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Time one mixer across input resolutions and fit growth exponents.
    Bench(BenchArgs),
    /// Render slot assignment maps of one block for one image.
    Visualize(VisualizeArgs),
    /// Print the default training config as JSON.
    Config,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training config (defaults are used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model name overriding the config (preset, `stl_<ablation>`, `micro_<ablation>`, evolution step).
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
    /// Print every n-th step.
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Config whose data section describes the task (defaults otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    samples: usize,
}

#[derive(Args)]
struct AuditArgs {
    /// Model names; `all` audits every preset, ablation and evolution step.
    #[arg(long, num_args = 1.., default_value = "stl")]
    spec: Vec<String>,
    #[arg(long, default_value_t = 224)]
    resolution: usize,
    /// Write the per-module rows as CSV (one file per model) into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare against the published totals; exit nonzero on any miss beyond 5%.
    #[arg(long)]
    golden: bool,
    /// Also run an instrumented forward pass and compare per module.
    #[arg(long)]
    runtime: bool,
    /// Only print totals.
    #[arg(long)]
    summary: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Ops,
    Block,
    Model,
    All,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(value_enum, default_value = "all")]
    scope: ScopeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Glmix,
    FullAttention,
    Both,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    kind: KindArg,
    #[arg(long, default_value_t = 64)]
    channels: usize,
    #[arg(long, default_value_t = 16)]
    slots: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    /// Input image sides; the mixer sees the stride-4 grid.
    #[arg(long, value_delimiter = ',', default_value = "28,56,112,224")]
    resolution: Vec<usize>,
    /// CSV output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// PPM or PGM input image.
    #[arg(long, conflicts_with = "sample")]
    image: Option<PathBuf>,
    /// Use synthetic sample N (seeded by --seed) instead of an image file.
    #[arg(long)]
    sample: Option<u64>,
    /// Global block index; defaults to the first block of the third stage.
    #[arg(long)]
    block: Option<usize>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs/vis")]
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn cmd_train(a: TrainArgs) -> Result<bool> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(s) = a.spec {
        config.model = ModelRef::Name(s);
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(s) = a.steps {
        config.steps = s;
    }
    config.validate()?;
    let every = a.log_every.max(1);
    let outcome = train_to_dir(&config, &a.out, |r| {
        if r.step % every == 0 {
            eprintln!(
                "step {:>5}  lr {:.2e}  loss {:.4}  acc {:.3}  |g| {:.3}",
                r.step, r.lr, r.loss, r.accuracy, r.grad_norm
            );
        }
    })?;
    for (step, e) in &outcome.evals {
        println!(
            "eval step {step}: loss {:.4} accuracy {:.4} ({} samples)",
            e.loss, e.accuracy, e.samples
        );
    }
    println!("wrote {}", a.out.display());
    Ok(true)
}

fn cmd_eval(a: EvalArgs) -> Result<bool> {
    let config = load_config(a.config.as_deref())?;
    let model = checkpoint::load::<f32>(&a.checkpoint)?;
    let data = SyntheticDataset::new(config.data, a.seed)?;
    let e = evaluate(&model, &data, EVAL_OFFSET, a.samples)?;
    println!(
        "{}: loss {:.4} accuracy {:.4} ({} samples)",
        model.spec().name,
        e.loss,
        e.accuracy,
        e.samples
    );
    Ok(true)
}

fn all_models() -> Vec<String> {
    let mut v: Vec<String> = PRESETS.iter().map(|s| s.to_string()).collect();
    v.extend(ABLATIONS.iter().map(|a| format!("stl_{a}")));
    v.extend(ModelSpec::evolution().into_iter().skip(1).map(|s| s.name));
    v
}

fn print_golden(title: &str, checks: &[GoldenCheck]) -> bool {
    println!("{title}");
    for c in checks {
        println!("  {}", c.line(GOLDEN_TOL));
    }
    checks.iter().all(|c| c.passed(GOLDEN_TOL))
}

fn cmd_audit(a: AuditArgs) -> Result<bool> {
    let names = if a.spec.iter().any(|s| s == "all") {
        all_models()
    } else {
        a.spec.clone()
    };
    let mut ok = true;
    for name in &names {
        let spec = ModelSpec::by_name(name)?;
        let report = audit(&spec, a.resolution)?;
        if a.summary {
            println!(
                "{:<22} {:>8.3}G MACs {:>8.2}M params",
                report.model,
                report.gmacs(),
                report.mparams()
            );
        } else {
            print!("{}", report.to_table());
        }
        if let Some(dir) = &a.out {
            fs::create_dir_all(dir)?;
            fs::write(
                dir.join(format!("{}_{}.csv", report.model, a.resolution)),
                report.to_csv(),
            )?;
        }
        if a.runtime {
            let run = audit_matches_runtime(&spec, a.resolution)?;
            let pass = run.passed(RUNTIME_TOL);
            println!(
                "runtime {}: counted {} vs closed form {} ({:.4}%) {}",
                spec.name,
                run.counted_total(),
                run.closed_total(),
                100.0 * run.total_rel_err(),
                if pass { "ok" } else { "MISMATCH" }
            );
            if !pass {
                println!("  {}", run.defect_report());
                ok = false;
            }
        }
    }
    if a.golden {
        ok &= print_golden("published totals", &check_golden(&GOLDEN)?);
        ok &= print_golden("architecture evolution", &check_golden(&EVOLUTION)?);
        // informative only
        print_golden("other ablation rows", &check_golden(&GOLDEN_EXTRA)?);
    }
    Ok(ok)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<bool> {
    let scopes = match a.scope {
        ScopeArg::Ops => vec![Scope::Ops],
        ScopeArg::Block => vec![Scope::Block],
        ScopeArg::Model => vec![Scope::Model],
        ScopeArg::All => vec![Scope::Ops, Scope::Block, Scope::Model],
    };
    let mut ok = true;
    for scope in scopes {
        println!("{scope}");
        println!(
            "  {:<28} {:>12} {:>10} {:>8}",
            "case", "max rel err", "tol", "checked"
        );
        for r in gradcheck::run(scope, a.seed)? {
            println!(
                "  {:<28} {:>12.3e} {:>10.0e} {:>8}  {}",
                r.name,
                r.report.max_rel_err,
                r.tol,
                r.report.checked,
                if r.passed() { "ok" } else { "FAIL" }
            );
            ok &= r.passed();
        }
    }
    Ok(ok)
}

fn cmd_bench(a: BenchArgs) -> Result<bool> {
    let kinds = match a.kind {
        KindArg::Glmix => vec![BlockKind::GlMix],
        KindArg::FullAttention => vec![BlockKind::FullAttention],
        KindArg::Both => BlockKind::ALL.to_vec(),
    };
    let mut csv = String::new();
    for kind in kinds {
        let r = scaling_benchmark(kind, a.channels, a.slots, a.heads, &a.resolution)?;
        print!("{}", r.to_table());
        let body = r.to_csv();
        if csv.is_empty() {
            csv.push_str(&body);
        } else {
            csv.extend(body.lines().skip(1).map(|l| format!("{l}\n")));
        }
    }
    if let Some(path) = a.out {
        fs::write(&path, csv)?;
    }
    Ok(true)
}

fn cmd_visualize(a: VisualizeArgs) -> Result<bool> {
    let model = checkpoint::load::<f64>(&a.checkpoint)?;
    fs::create_dir_all(&a.out)?;
    let (img, id) = match (&a.image, a.sample) {
        (Some(path), _) => {
            let id = path
                .file_stem()
                .map_or("image".into(), |s| s.to_string_lossy().into_owned());
            (read_pnm(path)?, id)
        }
        (None, Some(n)) => {
            let data = SyntheticDataset::new(TrainConfig::default().data, a.seed)?;
            let (x, label) = data.batch::<f64>(EVAL_OFFSET + n, 1)?;
            let id = format!("sample{n}");
            let img = tensor_to_image(&x, 0)?;
            write_ppm(&a.out.join(format!("{id}_input.ppm")), &img)?;
            println!("synthetic sample {n}: class {}", label[0]);
            (img, id)
        }
        (None, None) => bail!("pass --image <file> or --sample <n>"),
    };
    let opts = VisualizeOptions {
        block: a.block,
        k: a.k,
        seed: a.seed,
        ..Default::default()
    };
    let vis = visualize(&model, &img, &id, &a.out, &opts)?;
    println!(
        "block {}: {} slots, representatives {:?} (cost {:.4})",
        vis.maps.block,
        vis.maps.num_slots(),
        vis.selection.medoids,
        vis.selection.cost
    );
    for f in &vis.files {
        println!("wrote {}", f.display());
    }
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Visualize(a) => cmd_visualize(a),
        Command::Config => {
            println!("{}", TrainConfig::default().to_json()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
