//! Command-line driver for the attack/evaluation pipeline.
//!
//! Subcommands: `gen-dataset`, `mask`, `attack`, `eval`, `reproduce`,
//! `heatmap`. Every knob can come from a flat "key = value" config file
//! (`--config`); explicit flags override file values, which override the
//! built-in defaults. Each run writes a `<command>-config.txt` echo of the
//! fully resolved configuration into its output directory, sufficient to
//! reproduce the run byte-for-byte.
//!
//! Exit codes: 0 success, 1 I/O or file-format failure, 2 validation
//! failure, 3 numerical divergence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use rida_core::dpgnn::{
    initialize_features, predict, propagate_final, train_transform, PropagationConfig,
};
use rida_core::eval::{
    accuracy, run_experiment, train_gcn_target, trimmed_mean, ExperimentConfig, TargetConfig,
};
use rida_core::graphio::{
    load_dataset, load_edges, normalize_adjacency, row_normalize_attributes, save_dataset,
    save_edges, split_labels, AttributeMatrix, Graph,
};
use rida_core::haa::{propagation_matrix_direct, run_attack, save_diff, AttackConfig};
use rida_core::missingness::{apply_missingness, load_mask, save_mask, MissingnessSpec};
use rida_core::synth::{generate, profile};
use rida_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rida",
    about = "Gray-box structure attacks on attribute-incomplete graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a named synthetic dataset (edges.tsv, attrs.tsv, labels.tsv).
    GenDataset(GenDatasetArgs),
    /// Draw a deterministic missingness mask for a dataset.
    Mask(MaskArgs),
    /// Run the gradient attack: pseudo-labels, flip selection, diff output.
    Attack(AttackArgs),
    /// Train the target model on clean and attacked graphs; write results.json.
    Eval(EvalArgs),
    /// Full pipeline on a named dataset with per-dataset defaults; write results.json.
    Reproduce(ReproduceArgs),
    /// Export the propagation-weight matrix as a log10 CSV heatmap.
    Heatmap(HeatmapArgs),
}

/// Flat "key = value" config file; '#' starts a comment line.
struct FileCfg {
    map: BTreeMap<String, String>,
}

impl FileCfg {
    fn empty() -> FileCfg {
        FileCfg {
            map: BTreeMap::new(),
        }
    }

    fn load(path: &Path) -> Result<FileCfg> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(path, idx + 1, "expected 'key = value'"));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileCfg { map })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::validation(format!("config key '{key}': invalid value '{raw}'"))
            }),
        }
    }
}

/// flag > config file > default.
fn resolve<T: FromStr>(flag: Option<T>, file: &FileCfg, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(file.get::<T>(key)?.unwrap_or(default)),
    }
}

fn load_file_cfg(path: &Option<PathBuf>) -> Result<FileCfg> {
    match path {
        Some(p) => FileCfg::load(p),
        None => Ok(FileCfg::empty()),
    }
}

/// Writes the resolved configuration echo into `dir`.
fn write_echo(dir: &Path, command: &str, pairs: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{command}-config.txt"));
    let mut body = format!("command = {command}\n");
    for (key, value) in pairs {
        body.push_str(&format!("{key} = {value}\n"));
    }
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

fn fmt<T: Display>(v: T) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// gen-dataset

#[derive(Args)]
struct GenDatasetArgs {
    /// Dataset name: cora, citeseer, or cora-ml.
    #[arg(long)]
    dataset: Option<String>,
    /// Generation seed.
    #[arg(long = "dataset-seed")]
    dataset_seed: Option<u64>,
    /// Output directory for the dataset files.
    #[arg(long)]
    out: PathBuf,
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_gen_dataset(args: &GenDatasetArgs) -> Result<()> {
    let file = load_file_cfg(&args.config)?;
    let dataset = resolve(args.dataset.clone(), &file, "dataset", String::new())?;
    let seed = resolve(args.dataset_seed, &file, "dataset-seed", 42u64)?;
    let p = profile(&dataset).ok_or_else(|| {
        Error::validation(format!(
            "unknown dataset '{dataset}' (expected cora, citeseer, or cora-ml)"
        ))
    })?;
    let (g, x, labels) = generate(p, seed)?;
    save_dataset(&args.out, &g, &x, &labels)?;
    write_echo(
        &args.out,
        "gen-dataset",
        &[
            ("dataset", dataset.clone()),
            ("dataset-seed", fmt(seed)),
            ("out", args.out.display().to_string()),
        ],
    )?;
    println!(
        "generated {dataset}: {} vertices, {} edges, {} attributes, {} classes -> {}",
        g.n(),
        g.edge_count(),
        x.d(),
        labels.iter().max().map_or(0, |m| m + 1),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// mask

#[derive(Args)]
struct MaskArgs {
    /// Dataset directory (edges.tsv, attrs.tsv, labels.tsv).
    #[arg(long)]
    data: PathBuf,
    /// Fraction of attributes hidden per affected vertex.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fraction of vertices affected.
    #[arg(long)]
    beta: Option<f64>,
    /// Mask seed.
    #[arg(long = "mask-seed")]
    mask_seed: Option<u64>,
    /// Output directory (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_mask(args: &MaskArgs) -> Result<()> {
    let file = load_file_cfg(&args.config)?;
    let alpha = resolve(args.alpha, &file, "alpha", 0.3)?;
    let beta = resolve(args.beta, &file, "beta", 0.7)?;
    let seed = resolve(args.mask_seed, &file, "mask-seed", 1u64)?;
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    let (_, x, _) = load_dataset(&args.data)?;
    let spec = MissingnessSpec::new(alpha, beta, seed)?;
    let x_phi = apply_missingness(&x, &spec)?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mask_path = out.join("mask.tsv");
    save_mask(&x_phi, &mask_path, x_phi.missing_count() == 0)?;
    write_echo(
        &out,
        "mask",
        &[
            ("alpha", fmt(alpha)),
            ("beta", fmt(beta)),
            ("data", args.data.display().to_string()),
            ("mask-seed", fmt(seed)),
            ("out", out.display().to_string()),
        ],
    )?;
    println!(
        "mask: {} missing entries over {} vertices -> {}",
        x_phi.missing_count(),
        x.n(),
        mask_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// attack

#[derive(Args)]
struct AttackArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Mask file (defaults to <data>/mask.tsv).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Perturbation budget as a fraction of the edge count.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Propagation depth K.
    #[arg(long)]
    k: Option<usize>,
    /// Decay scale δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Decay rate γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Feature-optimization mix η.
    #[arg(long)]
    eta: Option<f64>,
    /// Initialization weight ω.
    #[arg(long)]
    omega: Option<f64>,
    /// Labeled fraction of vertices.
    #[arg(long = "split-fraction")]
    split_fraction: Option<f64>,
    /// Split seed.
    #[arg(long = "split-seed")]
    split_seed: Option<u64>,
    /// Attack seed (pseudo-label head + surrogate initialization).
    #[arg(long = "attack-seed")]
    attack_seed: Option<u64>,
    /// Disable the global attention factor.
    #[arg(long = "no-global", action = ArgAction::SetTrue)]
    no_global: Option<bool>,
    /// Disable the local attention factor.
    #[arg(long = "no-local", action = ArgAction::SetTrue)]
    no_local: Option<bool>,
    /// Disable bifocal propagation for incomplete vertices.
    #[arg(long = "no-bfp", action = ArgAction::SetTrue)]
    no_bfp: Option<bool>,
    /// Retrain the surrogate from the previous parameters at each step.
    #[arg(long = "warm-start", action = ArgAction::SetTrue)]
    warm_start: Option<bool>,
    /// Output directory (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_attack(args: &AttackArgs) -> Result<()> {
    let file = load_file_cfg(&args.config)?;
    let epsilon = resolve(args.epsilon, &file, "epsilon", 0.05)?;
    let k = resolve(args.k, &file, "k", 16usize)?;
    let delta = resolve(args.delta, &file, "delta", 0.1)?;
    let gamma = resolve(args.gamma, &file, "gamma", 0.01)?;
    let eta = resolve(args.eta, &file, "eta", 0.05)?;
    let omega = resolve(args.omega, &file, "omega", 0.9)?;
    let split_fraction = resolve(args.split_fraction, &file, "split-fraction", 0.1)?;
    let split_seed = resolve(args.split_seed, &file, "split-seed", 2u64)?;
    let attack_seed = resolve(args.attack_seed, &file, "attack-seed", 3u64)?;
    let no_global = resolve(args.no_global, &file, "no-global", false)?;
    let no_local = resolve(args.no_local, &file, "no-local", false)?;
    let no_bfp = resolve(args.no_bfp, &file, "no-bfp", false)?;
    let warm_start = resolve(args.warm_start, &file, "warm-start", false)?;
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    let mask_path = args.mask.clone().unwrap_or_else(|| args.data.join("mask.tsv"));

    let started = Instant::now();
    let (g, x, labels) = load_dataset(&args.data)?;
    let x_phi = load_mask(&x, &mask_path)?;
    let split = split_labels(&labels, split_fraction, split_seed)?;

    // Pseudo-labels from the propagation surrogate.
    let hat_a = normalize_adjacency(&g, false)?;
    let pcfg = PropagationConfig {
        k,
        delta,
        gamma,
        omega,
        use_global_attention: !no_global,
        use_local_attention: !no_local,
        use_bfp: !no_bfp,
    };
    let xp = initialize_features(&row_normalize_attributes(&x_phi), omega);
    let trace = propagate_final(&xp, &hat_a, &pcfg, &x_phi.mask)?;
    let head = train_transform(trace.final_layer(), &split, 200, 0.01, 16, attack_seed)?;
    let (_, pseudo) = predict(&head, trace.final_layer());

    let attack_cfg = AttackConfig {
        eta,
        delta,
        gamma,
        k,
        warm_start,
        seed: attack_seed,
        ..AttackConfig::default()
    };
    let outcome = run_attack(&g, &x_phi, &split, &pseudo, epsilon, &attack_cfg)?;

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let diff_path = out.join("diff.tsv");
    save_diff(outcome.state.flips(), &diff_path)?;
    let attacked_path = out.join("edges-attacked.tsv");
    save_edges(&outcome.graph, &attacked_path)?;
    write_echo(
        &out,
        "attack",
        &[
            ("attack-seed", fmt(attack_seed)),
            ("data", args.data.display().to_string()),
            ("delta", fmt(delta)),
            ("epsilon", fmt(epsilon)),
            ("eta", fmt(eta)),
            ("gamma", fmt(gamma)),
            ("k", fmt(k)),
            ("mask", mask_path.display().to_string()),
            ("no-bfp", fmt(no_bfp)),
            ("no-global", fmt(no_global)),
            ("no-local", fmt(no_local)),
            ("omega", fmt(omega)),
            ("out", out.display().to_string()),
            ("split-fraction", fmt(split_fraction)),
            ("split-seed", fmt(split_seed)),
            ("warm-start", fmt(warm_start)),
        ],
    )?;
    println!(
        "attack: {} of {} flips in {:.1}s -> {}",
        outcome.state.budget_used(),
        outcome.state.budget_total(),
        started.elapsed().as_secs_f64(),
        diff_path.display()
    );
    if let Some(warning) = &outcome.warning {
        println!("warning: {warning}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Mask file; omit to evaluate on fully observed attributes.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Attacked edge list to evaluate, as label=path; repeatable.
    #[arg(long = "attacked", value_name = "LABEL=PATH", action = ArgAction::Append)]
    attacked: Vec<String>,
    /// Target-model trainings per arm.
    #[arg(long)]
    runs: Option<usize>,
    /// Labeled fraction of vertices.
    #[arg(long = "split-fraction")]
    split_fraction: Option<f64>,
    /// Split seed.
    #[arg(long = "split-seed")]
    split_seed: Option<u64>,
    /// Base seed for the paired target trainings.
    #[arg(long = "target-seed")]
    target_seed: Option<u64>,
    /// Replace missing entries with observed column means before training.
    #[arg(long = "mean-impute", action = ArgAction::SetTrue)]
    mean_impute: Option<bool>,
    /// Output directory (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn eval_graph_arm(
    g: &Graph,
    x: &AttributeMatrix,
    split: &rida_core::graphio::LabeledSplit,
    runs: usize,
    target_seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let mut accs = Vec::with_capacity(runs);
    for run in 0..runs {
        let cfg = TargetConfig {
            seed: target_seed.wrapping_add(run as u64),
            ..TargetConfig::default()
        };
        let params = train_gcn_target(g, x, split, &cfg)?;
        let logits = rida_core::eval::gcn_logits(&params, g, x)?;
        let pred = rida_core::nn::predict_classes(&logits);
        accs.push(accuracy(&pred, &split.labels, &split.test_idx)?);
    }
    let trimmed = trimmed_mean(&accs)?;
    Ok((accs, trimmed))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let file = load_file_cfg(&args.config)?;
    let runs = resolve(args.runs, &file, "runs", 10usize)?;
    let split_fraction = resolve(args.split_fraction, &file, "split-fraction", 0.1)?;
    let split_seed = resolve(args.split_seed, &file, "split-seed", 2u64)?;
    let target_seed = resolve(args.target_seed, &file, "target-seed", 4u64)?;
    let mean_impute = resolve(args.mean_impute, &file, "mean-impute", false)?;
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());

    let started = Instant::now();
    let (g, x, labels) = load_dataset(&args.data)?;
    let x_phi = match &args.mask {
        Some(path) => load_mask(&x, path)?,
        None => x.clone(),
    };
    let x_eval = if mean_impute {
        rida_core::eval::mean_impute(&x_phi)
    } else {
        x_phi.clone()
    };
    let split = split_labels(&labels, split_fraction, split_seed)?;

    let (clean_runs, clean_trimmed) = eval_graph_arm(&g, &x_eval, &split, runs, target_seed)?;
    let mut attacks = serde_json::Map::new();
    let mut attacked_echo = Vec::new();
    for spec in &args.attacked {
        let Some((label, path)) = spec.split_once('=') else {
            return Err(Error::validation(format!(
                "--attacked expects LABEL=PATH, got '{spec}'"
            )));
        };
        attacked_echo.push(spec.clone());
        let attacked = load_edges(Path::new(path), g.n())?;
        let (arm_runs, arm_trimmed) = eval_graph_arm(&attacked, &x_eval, &split, runs, target_seed)?;
        attacks.insert(
            label.to_string(),
            serde_json::json!({"runs": arm_runs, "trimmed_mean": arm_trimmed}),
        );
    }

    let report = serde_json::json!({
        "config": {
            "data": args.data.display().to_string(),
            "mask": args.mask.as_ref().map(|p| p.display().to_string()),
            "mean_impute": mean_impute,
            "runs": runs,
            "split_fraction": split_fraction,
            "split_seed": split_seed,
            "target_seed": target_seed,
        },
        "clean": {"runs": clean_runs, "trimmed_mean": clean_trimmed},
        "attacks": attacks,
        "timings": {"total_s": started.elapsed().as_secs_f64()},
        "warnings": [],
    });
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let results_path = out.join("results.json");
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::validation(format!("results serialization failed: {e}")))?;
    fs::write(&results_path, body).map_err(|e| Error::io(&results_path, e))?;
    write_echo(
        &out,
        "eval",
        &[
            ("attacked", attacked_echo.join(",")),
            ("data", args.data.display().to_string()),
            (
                "mask",
                args.mask
                    .as_ref()
                    .map_or_else(String::new, |p| p.display().to_string()),
            ),
            ("mean-impute", fmt(mean_impute)),
            ("out", out.display().to_string()),
            ("runs", fmt(runs)),
            ("split-fraction", fmt(split_fraction)),
            ("split-seed", fmt(split_seed)),
            ("target-seed", fmt(target_seed)),
        ],
    )?;
    println!(
        "eval: clean trimmed mean {clean_trimmed:.4} over {runs} runs -> {}",
        results_path.display()
    );
    for (label, value) in &attacks {
        println!(
            "eval: {label} trimmed mean {:.4}",
            value["trimmed_mean"].as_f64().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reproduce

#[derive(Args)]
struct ReproduceArgs {
    /// Dataset name: cora, citeseer, or cora-ml.
    #[arg(long)]
    dataset: Option<String>,
    /// Generation seed for the synthetic dataset.
    #[arg(long = "dataset-seed")]
    dataset_seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Propagation depth K (default 8 for citeseer, 16 otherwise).
    #[arg(long)]
    k: Option<usize>,
    /// Decay scale δ (default 0.2 for cora-ml, 0.1 otherwise).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long = "split-fraction")]
    split_fraction: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long = "mask-seed")]
    mask_seed: Option<u64>,
    #[arg(long = "split-seed")]
    split_seed: Option<u64>,
    #[arg(long = "attack-seed")]
    attack_seed: Option<u64>,
    #[arg(long = "target-seed")]
    target_seed: Option<u64>,
    #[arg(long = "no-global", action = ArgAction::SetTrue)]
    no_global: Option<bool>,
    #[arg(long = "no-local", action = ArgAction::SetTrue)]
    no_local: Option<bool>,
    #[arg(long = "no-bfp", action = ArgAction::SetTrue)]
    no_bfp: Option<bool>,
    /// Retrain the surrogate from the previous parameters at each step.
    #[arg(long = "warm-start", action = ArgAction::SetTrue)]
    warm_start: Option<bool>,
    /// Recompute the attacks under each run's seed instead of reusing one attack.
    #[arg(long, action = ArgAction::SetTrue)]
    reattack: Option<bool>,
    /// Replace missing entries with observed column means before training.
    #[arg(long = "mean-impute", action = ArgAction::SetTrue)]
    mean_impute: Option<bool>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<()> {
    let file = load_file_cfg(&args.config)?;
    let dataset = resolve(args.dataset.clone(), &file, "dataset", String::new())?;
    let p = profile(&dataset).ok_or_else(|| {
        Error::validation(format!(
            "unknown dataset '{dataset}' (expected cora, citeseer, or cora-ml)"
        ))
    })?;
    let default_k = if dataset == "citeseer" { 8 } else { 16 };
    let default_delta = if dataset == "cora-ml" { 0.2 } else { 0.1 };
    let dataset_seed = resolve(args.dataset_seed, &file, "dataset-seed", 42u64)?;
    let defaults = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        alpha: resolve(args.alpha, &file, "alpha", defaults.alpha)?,
        beta: resolve(args.beta, &file, "beta", defaults.beta)?,
        split_fraction: resolve(
            args.split_fraction,
            &file,
            "split-fraction",
            defaults.split_fraction,
        )?,
        epsilon: resolve(args.epsilon, &file, "epsilon", defaults.epsilon)?,
        k: resolve(args.k, &file, "k", default_k)?,
        delta: resolve(args.delta, &file, "delta", default_delta)?,
        gamma: resolve(args.gamma, &file, "gamma", defaults.gamma)?,
        eta: resolve(args.eta, &file, "eta", defaults.eta)?,
        omega: resolve(args.omega, &file, "omega", defaults.omega)?,
        use_local_attention: !resolve(args.no_local, &file, "no-local", false)?,
        use_global_attention: !resolve(args.no_global, &file, "no-global", false)?,
        use_bfp: !resolve(args.no_bfp, &file, "no-bfp", false)?,
        runs: resolve(args.runs, &file, "runs", defaults.runs)?,
        warm_start: resolve(args.warm_start, &file, "warm-start", false)?,
        reattack: resolve(args.reattack, &file, "reattack", false)?,
        mean_impute: resolve(args.mean_impute, &file, "mean-impute", false)?,
        mask_seed: resolve(args.mask_seed, &file, "mask-seed", defaults.mask_seed)?,
        split_seed: resolve(args.split_seed, &file, "split-seed", defaults.split_seed)?,
        attack_seed: resolve(args.attack_seed, &file, "attack-seed", defaults.attack_seed)?,
        target_seed: resolve(args.target_seed, &file, "target-seed", defaults.target_seed)?,
        ..defaults
    };

    let (g, x, labels) = generate(p, dataset_seed)?;
    let report = run_experiment(&g, &x, &labels, &cfg)?;

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let results_path = args.out.join("results.json");
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::validation(format!("results serialization failed: {e}")))?;
    fs::write(&results_path, body).map_err(|e| Error::io(&results_path, e))?;
    write_echo(
        &args.out,
        "reproduce",
        &[
            ("alpha", fmt(cfg.alpha)),
            ("attack-seed", fmt(cfg.attack_seed)),
            ("beta", fmt(cfg.beta)),
            ("dataset", dataset.clone()),
            ("dataset-seed", fmt(dataset_seed)),
            ("delta", fmt(cfg.delta)),
            ("epsilon", fmt(cfg.epsilon)),
            ("eta", fmt(cfg.eta)),
            ("gamma", fmt(cfg.gamma)),
            ("k", fmt(cfg.k)),
            ("mask-seed", fmt(cfg.mask_seed)),
            ("mean-impute", fmt(cfg.mean_impute)),
            ("no-bfp", fmt(!cfg.use_bfp)),
            ("no-global", fmt(!cfg.use_global_attention)),
            ("no-local", fmt(!cfg.use_local_attention)),
            ("omega", fmt(cfg.omega)),
            ("out", args.out.display().to_string()),
            ("reattack", fmt(cfg.reattack)),
            ("runs", fmt(cfg.runs)),
            ("split-fraction", fmt(cfg.split_fraction)),
            ("split-seed", fmt(cfg.split_seed)),
            ("target-seed", fmt(cfg.target_seed)),
            ("warm-start", fmt(cfg.warm_start)),
        ],
    )?;
    println!(
        "reproduce {dataset}: clean {:.4}, attacked {:.4} (rida) vs {:.4} (dice) -> {}",
        report.clean.trimmed_mean,
        report.attacks.rida.trimmed_mean,
        report.attacks.dice.trimmed_mean,
        results_path.display()
    );
    for warning in &report.warnings {
        println!("warning: {warning}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// heatmap

#[derive(Args)]
struct HeatmapArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Propagation depth K.
    #[arg(long)]
    k: Option<usize>,
    /// Decay scale δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Decay rate γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory (defaults to the dataset directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_heatmap(args: &HeatmapArgs) -> Result<()> {
    let file = load_file_cfg(&args.config)?;
    let k = resolve(args.k, &file, "k", 16usize)?;
    let delta = resolve(args.delta, &file, "delta", 0.1)?;
    let gamma = resolve(args.gamma, &file, "gamma", 0.01)?;
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    let (g, _, _) = load_dataset(&args.data)?;
    let hat_a = normalize_adjacency(&g, false)?;
    let aphi = propagation_matrix_direct(&hat_a, delta, gamma, k)?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let csv_path = out.join("heatmap.csv");
    rida_core::eval::export_propagation_heatmap(&aphi, &csv_path)?;
    write_echo(
        &out,
        "heatmap",
        &[
            ("data", args.data.display().to_string()),
            ("delta", fmt(delta)),
            ("gamma", fmt(gamma)),
            ("k", fmt(k)),
            ("out", out.display().to_string()),
        ],
    )?;
    println!("heatmap: {}x{} -> {}", g.n(), g.n(), csv_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenDataset(args) => cmd_gen_dataset(args),
        Command::Mask(args) => cmd_mask(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Reproduce(args) => cmd_reproduce(args),
        Command::Heatmap(args) => cmd_heatmap(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Io { .. } | Error::Parse { .. } => 1u8,
                Error::Validation(_) => 2,
                Error::Divergence { .. } => 3,
            };
            ExitCode::from(code)
        }
    }
}
