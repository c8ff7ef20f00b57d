//! Command-line pipeline: generate demonstrations and profiles, fit reward
//! functions, and evaluate them, all through a single run directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical abort,
//! 3 I/O or file-format error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use profile_irl::distributions::{augment, empirical_return_distribution, OptimalityProfile};
use profile_irl::error::{Error, Result};
use profile_irl::eval::{
    self, ablate_ot, best_demo_return, correlate, gamma_sweep, noise_sweep, policy_pool,
    reoptimize_and_score, sample_mixed_trajectories, sample_supervision, EvalBench, EvalReport,
    HELDOUT_EPSILONS, POLICY_GAMMA,
};
use profile_irl::io;
use profile_irl::mdp::{build_gridworld, GridworldSpec};
use profile_irl::presets;
use profile_irl::reward::{FeatureMap, SupervisionSets};
use profile_irl::trainer::{self, Checkpoint, OptimizerKind, Schedule, TrainConfig};

#[derive(Parser)]
#[command(name = "profile-irl", version, about = "Reward learning by matching optimality profiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a gridworld, sample demonstrations from a pool of epsilon-greedy
    /// policies, and write the run artifacts (demos, profile, supervision).
    GenDemos(GenDemosArgs),
    /// Fit a reward model to the demonstrations in a run directory.
    Fit(FitArgs),
    /// Evaluate a trained model: correlations, policy re-optimization, sweeps.
    Eval(EvalArgs),
    /// Run one of the benchmark sweeps (ablation, noise, gamma).
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenDemosArgs {
    /// Directory receiving config.json, demos.jsonl, profile.json, supervision.json.
    #[arg(long)]
    run_dir: PathBuf,
    /// Preset environment: figure1, two-corridor, or grid10.
    #[arg(long, default_value = "figure1", conflicts_with = "env_file")]
    env: String,
    /// Gridworld spec JSON instead of a preset.
    #[arg(long)]
    env_file: Option<PathBuf>,
    /// Number of demonstration trajectories.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Discount factor for the profile and training returns.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Histogram bins for the target profile (0 keeps exact atoms).
    #[arg(long, default_value_t = 30)]
    bins: usize,
    /// Write profile.json and supervision.json (on by default).
    #[arg(long, overrides_with = "no_profile")]
    profile: bool,
    /// Skip the profile and supervision artifacts.
    #[arg(long)]
    no_profile: bool,
    /// Number of ranking pairs in supervision.json.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    /// Number of extreme-return fixed labels in supervision.json.
    #[arg(long, default_value_t = 4)]
    fixed: usize,
    /// Master seed for demonstrations and supervision.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reward model family recorded in config.json: mlp or tabular.
    #[arg(long, default_value = "mlp")]
    model: String,
    /// Hidden width for the mlp model.
    #[arg(long, default_value_t = 16)]
    hidden_dim: usize,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Config file; defaults to <run-dir>/config.json.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Externally supplied profile (.json or .csv); defaults to <run-dir>/profile.json.
    #[arg(long)]
    profile_file: Option<PathBuf>,
    /// Resume training from a checkpoint file.
    #[arg(long)]
    resume_from: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    lr_floor: Option<f64>,
    /// Initial entropy constant (absolute, standardized units).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_decay: Option<f64>,
    #[arg(long)]
    lambda_floor: Option<f64>,
    /// sgd, rmsprop, or adam.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    n_epochs: Option<usize>,
    #[arg(long)]
    c_ot: Option<f64>,
    #[arg(long)]
    c_pw: Option<f64>,
    #[arg(long)]
    c_fix: Option<f64>,
    /// Bins for the per-batch return estimate (0 keeps exact atoms).
    #[arg(long)]
    n_bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gradient-norm clip; 0 disables clipping.
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Model checkpoint to evaluate; defaults to <run-dir>/model.json.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Correlate model returns with ground truth on a held-out set.
    #[arg(long)]
    correlate: bool,
    /// Re-optimize a policy for the learned reward and score it.
    #[arg(long)]
    reoptimize: bool,
    /// Held-out trajectories for correlation.
    #[arg(long, default_value_t = 200)]
    heldout_n: usize,
    /// Rollout episodes for the re-optimized policy.
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Pairs budgets for the transport-loss ablation, e.g. 20,50.
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<usize>,
    /// Noise levels for the profile-noise sweep, e.g. 0.1,0.5,1.
    #[arg(long, value_delimiter = ',')]
    noise: Vec<f64>,
    /// Discount factors for the gamma sweep, e.g. 0,0.5,0.7,0.9.
    #[arg(long, value_delimiter = ',')]
    gamma_sweep: Vec<f64>,
    #[command(flatten)]
    sweep_opts: SweepOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepOpts {
    /// Seeds per sweep cell.
    #[arg(long, default_value_t = 10)]
    n_seeds: usize,
    /// Ranking pairs per sweep cell (noise and gamma sweeps).
    #[arg(long, default_value_t = 20)]
    sweep_pairs: usize,
    /// Fixed labels per sweep cell.
    #[arg(long, default_value_t = 4)]
    fixed_budget: usize,
    /// Target-profile bins used inside sweeps.
    #[arg(long, default_value_t = 30)]
    sweep_bins: usize,
    /// Worker threads for sweep cells (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// ablation, noise, or gamma.
    #[arg(long)]
    kind: String,
    /// Pairs budgets for the ablation sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![20usize, 50])]
    budgets: Vec<usize>,
    /// Noise levels for the noise sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.5, 1.0])]
    sigmas: Vec<f64>,
    /// Discount grid for the gamma sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 0.7, 0.9])]
    gammas: Vec<f64>,
    /// Held-out trajectories for correlation.
    #[arg(long, default_value_t = 200)]
    heldout_n: usize,
    #[command(flatten)]
    sweep_opts: SweepOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenDemos(args) => cmd_gen_demos(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_class())
        }
    }
}

fn resolve_env(name: &str, file: Option<&Path>) -> Result<GridworldSpec> {
    if let Some(path) = file {
        return io::load_gridworld_spec(path);
    }
    presets::by_name(name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown environment preset '{name}'")))
}

fn cmd_gen_demos(args: GenDemosArgs) -> Result<()> {
    let spec = resolve_env(&args.env, args.env_file.as_deref())?;
    if args.n == 0 {
        return Err(Error::EmptyDataset);
    }
    let model_kind = match args.model.as_str() {
        "mlp" => io::ModelKind::Mlp,
        "tabular" => io::ModelKind::Tabular,
        other => return Err(Error::InvalidConfig(format!("unknown model kind '{other}'"))),
    };
    let mdp = build_gridworld(&spec)?;
    let pool = policy_pool(&mdp, &eval::DEMO_EPSILONS)?;
    let demos = sample_mixed_trajectories(&mdp, &pool, args.n, args.seed)?;

    let config = io::RunConfig {
        env: spec.clone(),
        model: io::ModelSpec { kind: model_kind, hidden_dim: args.hidden_dim },
        train: TrainConfig { gamma: args.gamma, seed: args.seed, ..TrainConfig::default() },
    };
    config.validate()?;
    io::save_run_config(&args.run_dir.join("config.json"), &config)?;
    io::save_demos(&args.run_dir.join("demos.jsonl"), &demos)?;

    if !args.no_profile {
        let gt = mdp.gt_reward();
        let aug = augment(&demos)?;
        let profile = empirical_return_distribution(|s| gt[s], &aug, args.gamma, args.bins)?;
        io::save_profile(&args.run_dir.join("profile.json"), &profile)?;
        let gt_vec: Vec<f64> = gt.to_vec();
        let supervision =
            sample_supervision(&gt_vec, &demos, args.gamma, args.pairs, args.fixed, args.seed)?;
        io::save_supervision(&args.run_dir.join("supervision.json"), &supervision)?;
    }
    println!(
        "wrote {} demonstrations to {}",
        demos.len(),
        args.run_dir.join("demos.jsonl").display()
    );
    Ok(())
}

fn apply_overrides(train: &mut TrainConfig, args: &FitArgs) -> Result<()> {
    if let Some(v) = args.gamma {
        train.gamma = v;
    }
    if let Some(v) = args.p {
        train.p = v;
    }
    if let Some(v) = args.lr {
        train.lr_schedule.initial = v;
    }
    if let Some(v) = args.lr_decay {
        train.lr_schedule.decay = v;
    }
    if let Some(v) = args.lr_floor {
        train.lr_schedule.floor = v;
    }
    if args.lambda.is_some() || args.lambda_decay.is_some() || args.lambda_floor.is_some() {
        let mut schedule = train.lambda_schedule.clone().unwrap_or(Schedule {
            initial: 0.1,
            decay: 0.99,
            floor: 0.0,
        });
        if let Some(v) = args.lambda {
            schedule.initial = v;
        }
        if let Some(v) = args.lambda_decay {
            schedule.decay = v;
        }
        if let Some(v) = args.lambda_floor {
            schedule.floor = v;
        }
        train.lambda_schedule = Some(schedule);
    }
    if let Some(kind) = &args.optimizer {
        train.optimizer = match kind.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "rmsprop" => OptimizerKind::Rmsprop,
            "adam" => OptimizerKind::Adam,
            other => return Err(Error::InvalidConfig(format!("unknown optimizer '{other}'"))),
        };
    }
    if let Some(v) = args.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = args.n_epochs {
        train.n_epochs = v;
    }
    if let Some(v) = args.c_ot {
        train.weights.c_ot = v;
    }
    if let Some(v) = args.c_pw {
        train.weights.c_pw = v;
    }
    if let Some(v) = args.c_fix {
        train.weights.c_fix = v;
    }
    if let Some(v) = args.n_bins {
        train.n_bins = v;
    }
    if let Some(v) = args.seed {
        train.seed = v;
    }
    if let Some(v) = args.grad_clip {
        train.grad_clip = if v == 0.0 { None } else { Some(v) };
    }
    if let Some(v) = args.checkpoint_every {
        train.checkpoint_every = v;
    }
    Ok(())
}

fn load_profile_any(path: &Path) -> Result<OptimalityProfile> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => io::load_profile_csv(path),
        _ => io::load_profile(path),
    }
}

fn load_supervision_or_empty(path: &Path) -> Result<SupervisionSets> {
    if path.exists() {
        io::load_supervision(path)
    } else {
        Ok(SupervisionSets::default())
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let config_path = args.config.clone().unwrap_or_else(|| args.run_dir.join("config.json"));
    let mut config = io::load_run_config(&config_path)?;
    apply_overrides(&mut config.train, &args)?;
    config.validate()?;

    let demos = io::load_demos(&args.run_dir.join("demos.jsonl"))?;
    let profile_path =
        args.profile_file.clone().unwrap_or_else(|| args.run_dir.join("profile.json"));
    let target = load_profile_any(&profile_path)?;
    let supervision = load_supervision_or_empty(&args.run_dir.join("supervision.json"))?;

    let ckpt_dir = args.run_dir.join("checkpoints");
    let mut sink = |checkpoint: &Checkpoint| -> Result<()> {
        let path = ckpt_dir.join(format!("ckpt_{:06}.json", checkpoint.epoch));
        io::save_checkpoint(&path, checkpoint)
    };

    let result = if let Some(resume_path) = &args.resume_from {
        let features = match config.model.kind {
            io::ModelKind::Mlp => Some(FeatureMap::for_gridworld(&config.env)?),
            io::ModelKind::Tabular => None,
        };
        let checkpoint = io::load_checkpoint(resume_path, features.as_ref())?;
        trainer::resume(checkpoint, &demos, &target, &supervision, &config.train)?
    } else {
        let model = config.model.build(&config.env, config.train.seed)?;
        trainer::fit_with_sink(&demos, &target, &supervision, model, &config.train, Some(&mut sink))?
    };

    io::save_checkpoint(&args.run_dir.join("model.json"), &result.to_checkpoint())?;
    io::save_run_log(&args.run_dir.join("log.csv"), &result.log)?;
    println!("fit complete: {} epochs logged to log.csv", result.log.records.len());
    Ok(())
}

fn configure_jobs(jobs: usize) {
    if jobs > 0 {
        // Best effort: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

fn load_bench(run_dir: &Path, config: &io::RunConfig, heldout_n: usize, seed: u64) -> Result<EvalBench> {
    let mdp = build_gridworld(&config.env)?;
    let demos = io::load_demos(&run_dir.join("demos.jsonl"))?;
    let heldout_pool = policy_pool(&mdp, &HELDOUT_EPSILONS)?;
    let heldout =
        sample_mixed_trajectories(&mdp, &heldout_pool, heldout_n, seed ^ 0x9e3779b97f4a7c15)?;
    Ok(EvalBench {
        mdp,
        spec: config.env.clone(),
        features: FeatureMap::for_gridworld(&config.env)?,
        hidden_dim: config.model.hidden_dim,
        demos,
        heldout,
    })
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    configure_jobs(args.sweep_opts.jobs);
    let config = io::load_run_config(&args.run_dir.join("config.json"))?;
    let bench = load_bench(&args.run_dir, &config, args.heldout_n, args.seed)?;
    let gt = bench.gt_reward();

    let run_all = !args.correlate
        && !args.reoptimize
        && args.ablate.is_empty()
        && args.noise.is_empty()
        && args.gamma_sweep.is_empty();

    let mut report = EvalReport {
        pearson_returns: None,
        pearson_states: None,
        gt_return_of_reoptimized_policy: None,
        gt_return_of_best_demo: None,
        per_trajectory: Vec::new(),
    };
    let mut wrote_report = false;

    if args.correlate || args.reoptimize || run_all {
        let model_path = args.model_file.clone().unwrap_or_else(|| args.run_dir.join("model.json"));
        let features = match config.model.kind {
            io::ModelKind::Mlp => Some(bench.features.clone()),
            io::ModelKind::Tabular => None,
        };
        let model = io::load_checkpoint(&model_path, features.as_ref())?.model;
        if args.correlate || run_all {
            let correlation = correlate(&model, &bench.heldout, &gt, config.train.gamma)?;
            report.pearson_returns = correlation.pearson_returns;
            report.pearson_states = correlation.pearson_states;
            report.per_trajectory = correlation.per_trajectory;
        }
        if args.reoptimize || run_all {
            let (_, mean) =
                reoptimize_and_score(&bench.mdp, &model, POLICY_GAMMA, args.episodes, args.seed)?;
            report.gt_return_of_reoptimized_policy = Some(mean);
            report.gt_return_of_best_demo = Some(best_demo_return(&bench.demos, &gt));
        }
        io::save_report(&args.run_dir.join("report.json"), &report)?;
        wrote_report = true;
    }

    let target = if args.run_dir.join("profile.json").exists() {
        Some(io::load_profile(&args.run_dir.join("profile.json"))?)
    } else {
        None
    };
    if !args.ablate.is_empty() {
        let target = target.ok_or_else(|| {
            Error::InvalidConfig("the ablation sweep needs profile.json in the run directory".into())
        })?;
        let rows = ablate_ot(
            &bench,
            &target,
            &args.ablate,
            args.sweep_opts.fixed_budget,
            &config.train,
            args.sweep_opts.n_seeds,
        )?;
        io::save_ablation_csv(&args.run_dir.join("ablation.csv"), &rows)?;
    }
    if !args.noise.is_empty() {
        let rows = noise_sweep(
            &bench,
            &args.noise,
            args.sweep_opts.sweep_bins,
            args.sweep_opts.sweep_pairs,
            args.sweep_opts.fixed_budget,
            &config.train,
            args.sweep_opts.n_seeds,
        )?;
        io::save_noise_csv(&args.run_dir.join("noise.csv"), &rows)?;
    }
    if !args.gamma_sweep.is_empty() {
        let rows = gamma_sweep(
            &bench,
            &args.gamma_sweep,
            args.sweep_opts.sweep_bins,
            args.sweep_opts.sweep_pairs,
            args.sweep_opts.fixed_budget,
            &config.train,
            args.sweep_opts.n_seeds,
        )?;
        io::save_gamma_csv(&args.run_dir.join("gamma.csv"), &rows)?;
    }
    if wrote_report {
        println!("report written to {}", args.run_dir.join("report.json").display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    configure_jobs(args.sweep_opts.jobs);
    let config = io::load_run_config(&args.run_dir.join("config.json"))?;
    let bench = load_bench(&args.run_dir, &config, args.heldout_n, args.seed)?;
    match args.kind.as_str() {
        "ablation" => {
            let target = io::load_profile(&args.run_dir.join("profile.json"))?;
            let rows = ablate_ot(
                &bench,
                &target,
                &args.budgets,
                args.sweep_opts.fixed_budget,
                &config.train,
                args.sweep_opts.n_seeds,
            )?;
            io::save_ablation_csv(&args.run_dir.join("ablation.csv"), &rows)?;
            println!("ablation table written to ablation.csv");
        }
        "noise" => {
            let rows = noise_sweep(
                &bench,
                &args.sigmas,
                args.sweep_opts.sweep_bins,
                args.sweep_opts.sweep_pairs,
                args.sweep_opts.fixed_budget,
                &config.train,
                args.sweep_opts.n_seeds,
            )?;
            io::save_noise_csv(&args.run_dir.join("noise.csv"), &rows)?;
            println!("noise table written to noise.csv");
        }
        "gamma" => {
            let rows = gamma_sweep(
                &bench,
                &args.gammas,
                args.sweep_opts.sweep_bins,
                args.sweep_opts.sweep_pairs,
                args.sweep_opts.fixed_budget,
                &config.train,
                args.sweep_opts.n_seeds,
            )?;
            io::save_gamma_csv(&args.run_dir.join("gamma.csv"), &rows)?;
            println!("gamma table written to gamma.csv");
        }
        other => return Err(Error::InvalidConfig(format!("unknown sweep kind '{other}'"))),
    }
    Ok(())
}
