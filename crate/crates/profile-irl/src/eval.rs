//! Evaluation protocols for learned rewards at gridworld scale: correlation
//! against the ground truth, policy re-optimization, and the ablation /
//! noise / discount sweeps. Sweep cells are independent deterministic jobs
//! keyed by (setting, seed) and may run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    augment, empirical_return_distribution, empirical_state_occupancy, traj_return,
    OptimalityProfile,
};
use crate::error::{Error, Result};
use crate::mdp::{
    build_gridworld, sample_trajectory, value_iteration, GridworldSpec, TabularMdp, TabularPolicy,
    Trajectory,
};
use crate::reward::{FeatureMap, LossWeights, RewardArch, RewardModel, SupervisionSets};
use crate::trainer::{fit, TrainConfig};

/// Exploration ladder for the held-out evaluation set; includes the
/// unperturbed optimal policy.
pub const HELDOUT_EPSILONS: [f64; 5] = [0.0, 0.1, 0.3, 0.5, 1.0];

/// Exploration ladder for demonstration pools: suboptimal-to-random only,
/// mirroring the premise that truly optimal demonstrations are scarce.
pub const DEMO_EPSILONS: [f64; 4] = [0.1, 0.3, 0.5, 1.0];

/// Discount used when re-optimizing policies against a reward function.
pub const POLICY_GAMMA: f64 = 0.99;

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let w = vec![1.0; xs.len()];
    weighted_pearson(xs, ys, &w)
}

/// Weighted Pearson correlation with nonnegative weights.
pub fn weighted_pearson(xs: &[f64], ys: &[f64], weights: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() != weights.len() || xs.len() < 2 {
        return None;
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mean = |vs: &[f64]| -> f64 {
        vs.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
    };
    let mx = mean(xs);
    let my = mean(ys);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(weights) {
        cov += w * (x - mx) * (y - my);
        vx += w * (x - mx) * (x - mx);
        vy += w * (y - my) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Correlation slice of an evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Pearson correlation of per-trajectory returns (ground truth vs model).
    pub pearson_returns: Option<f64>,
    /// Occupancy-weighted per-state reward correlation; tabular models only.
    pub pearson_states: Option<f64>,
    /// Per-trajectory (ground-truth return, model return) pairs.
    pub per_trajectory: Vec<(f64, f64)>,
}

/// Compares ground-truth and model returns trajectory by trajectory.
pub fn correlate(
    model: &RewardModel,
    dataset: &[Trajectory],
    gt_reward: &[f64],
    gamma: f64,
) -> Result<CorrelationReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_trajectory: Vec<(f64, f64)> = dataset
        .iter()
        .map(|t| {
            (
                traj_return(|s| gt_reward[s], t, gamma),
                model.return_of(t, gamma),
            )
        })
        .collect();
    let gt: Vec<f64> = per_trajectory.iter().map(|p| p.0).collect();
    let learned: Vec<f64> = per_trajectory.iter().map(|p| p.1).collect();
    let pearson_returns = pearson(&gt, &learned);

    let pearson_states = match model.arch() {
        RewardArch::Tabular { n_states } => {
            let occ = empirical_state_occupancy(dataset, *n_states)?;
            let states: Vec<usize> = (0..*n_states).filter(|&s| occ[s] > 0.0).collect();
            let xs: Vec<f64> = states.iter().map(|&s| gt_reward[s]).collect();
            let ys: Vec<f64> = states.iter().map(|&s| model.forward(s)).collect();
            let ws: Vec<f64> = states.iter().map(|&s| occ[s]).collect();
            weighted_pearson(&xs, &ys, &ws)
        }
        RewardArch::Mlp { .. } => None,
    };

    Ok(CorrelationReport {
        pearson_returns,
        pearson_states,
        per_trajectory,
    })
}

/// Highest undiscounted ground-truth return among the demonstrations.
pub fn best_demo_return(dataset: &[Trajectory], gt_reward: &[f64]) -> f64 {
    dataset
        .iter()
        .map(|t| traj_return(|s| gt_reward[s], t, 1.0))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Re-optimizes a policy for the learned reward by value iteration and
/// scores it on the ground truth: returns the greedy policy and the mean
/// undiscounted ground-truth return over `n_episodes` rollouts.
pub fn reoptimize_and_score(
    mdp: &TabularMdp,
    model: &RewardModel,
    gamma_policy: f64,
    n_episodes: usize,
    seed: u64,
) -> Result<(TabularPolicy, f64)> {
    model.check_mdp(mdp)?;
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("n_episodes must be positive".into()));
    }
    let learned = model.reward_vector();
    let (policy, _) = value_iteration(mdp, &learned, gamma_policy)?;
    let gt = mdp.gt_reward();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_episodes {
        let traj = sample_trajectory(mdp, &policy, rng.gen())?;
        total += traj_return(|s| gt[s], &traj, 1.0);
    }
    Ok((policy, total / n_episodes as f64))
}

/// Pool of epsilon-greedy perturbations of the ground-truth-optimal policy.
pub fn policy_pool(mdp: &TabularMdp, epsilons: &[f64]) -> Result<Vec<TabularPolicy>> {
    let gt: Vec<f64> = mdp.gt_reward().to_vec();
    let (optimal, _) = value_iteration(mdp, &gt, POLICY_GAMMA)?;
    epsilons
        .iter()
        .map(|&eps| TabularPolicy::epsilon_greedy(&optimal, eps))
        .collect()
}

/// Samples `n` trajectories cycling through a policy pool; deterministic for
/// a given seed.
pub fn sample_mixed_trajectories(
    mdp: &TabularMdp,
    pool: &[TabularPolicy],
    n: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if pool.is_empty() {
        return Err(Error::InvalidConfig("empty policy pool".into()));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| sample_trajectory(mdp, &pool[i % pool.len()], rng.gen()))
        .collect()
}

/// Draws ranking pairs uniformly at random over the suffix dataset (ordered
/// by ground-truth return) and picks fixed labels at the extreme returns,
/// alternating between the maximum and minimum end.
pub fn sample_supervision(
    gt_reward: &[f64],
    dataset: &[Trajectory],
    gamma: f64,
    n_pairs: usize,
    n_fixed: usize,
    seed: u64,
) -> Result<SupervisionSets> {
    let aug = augment(dataset)?;
    let returns: Vec<f64> = aug
        .entries
        .iter()
        .map(|e| traj_return(|s| gt_reward[s], &e.suffix, gamma))
        .collect();
    if aug.len() < 2 && n_pairs > 0 {
        return Err(Error::InvalidSupervision(
            "need at least two suffixes to draw pairs".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let a = rng.gen_range(0..aug.len());
        let b = rng.gen_range(0..aug.len());
        if a == b {
            continue;
        }
        if returns[a] <= returns[b] {
            pairs.push((a, b));
        } else {
            pairs.push((b, a));
        }
    }
    let mut by_return: Vec<usize> = (0..aug.len()).collect();
    by_return.sort_by(|&i, &j| returns[i].total_cmp(&returns[j]));
    let mut fixed = Vec::with_capacity(n_fixed);
    let mut lo = 0usize;
    let mut hi = by_return.len();
    for k in 0..n_fixed.min(by_return.len()) {
        let idx = if k % 2 == 0 {
            hi -= 1;
            by_return[hi]
        } else {
            lo += 1;
            by_return[lo - 1]
        };
        fixed.push((idx, returns[idx]));
    }
    Ok(SupervisionSets { pairs, fixed })
}

/// A gridworld benchmark: the world, its feature map, a demonstration set
/// from suboptimal policies, and a held-out set of heterogeneous quality.
#[derive(Debug, Clone)]
pub struct EvalBench {
    pub mdp: TabularMdp,
    pub spec: GridworldSpec,
    pub features: FeatureMap,
    pub hidden_dim: usize,
    pub demos: Vec<Trajectory>,
    pub heldout: Vec<Trajectory>,
}

impl EvalBench {
    pub fn new(spec: &GridworldSpec, n_demos: usize, n_heldout: usize, seed: u64) -> Result<Self> {
        let mdp = build_gridworld(spec)?;
        let features = FeatureMap::for_gridworld(spec)?;
        let demo_pool = policy_pool(&mdp, &DEMO_EPSILONS)?;
        let demos = sample_mixed_trajectories(&mdp, &demo_pool, n_demos, seed)?;
        let heldout_pool = policy_pool(&mdp, &HELDOUT_EPSILONS)?;
        let heldout =
            sample_mixed_trajectories(&mdp, &heldout_pool, n_heldout, seed ^ 0x9e3779b97f4a7c15)?;
        Ok(Self {
            mdp,
            spec: spec.clone(),
            features,
            hidden_dim: 16,
            demos,
            heldout,
        })
    }

    pub fn gt_reward(&self) -> Vec<f64> {
        self.mdp.gt_reward().to_vec()
    }
}

/// Trains one MLP model on the bench and returns its held-out return
/// correlation at `config.gamma`. Undefined correlations count as zero.
fn train_and_correlate(
    bench: &EvalBench,
    target: &OptimalityProfile,
    supervision: &SupervisionSets,
    config: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let mut config = config.clone();
    config.seed = seed;
    let model = RewardModel::mlp(bench.features.clone(), bench.hidden_dim, seed)?;
    let result = fit(&bench.demos, target, supervision, model, &config)?;
    let gt = bench.gt_reward();
    let report = correlate(&result.model, &bench.heldout, &gt, config.gamma)?;
    Ok(report.pearson_returns.unwrap_or(0.0))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row of the pairs-budget ablation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub pairs_budget: usize,
    pub with_ot: bool,
    pub n_seeds: usize,
    pub mean_pearson: f64,
    pub std_pearson: f64,
    #[serde(skip)]
    pub pearson_by_seed: Vec<f64>,
}

/// Compares training with and without the transport loss across ranking-pair
/// budgets. Both conditions share the supervision drawn for a (budget, seed)
/// cell, so the comparison is paired.
pub fn ablate_ot(
    bench: &EvalBench,
    target: &OptimalityProfile,
    pairs_budgets: &[usize],
    fixed_budget: usize,
    config: &TrainConfig,
    n_seeds: usize,
) -> Result<Vec<AblationRow>> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("n_seeds must be positive".into()));
    }
    let gt = bench.gt_reward();
    let mut cells = Vec::new();
    for &budget in pairs_budgets {
        for with_ot in [true, false] {
            for seed in 0..n_seeds as u64 {
                cells.push((budget, with_ot, seed));
            }
        }
    }
    let results: Result<Vec<((usize, bool), f64)>> = cells
        .par_iter()
        .map(|&(budget, with_ot, seed)| {
            let supervision_seed = (budget as u64) << 32 | seed;
            let supervision = sample_supervision(
                &gt,
                &bench.demos,
                config.gamma,
                budget,
                fixed_budget,
                supervision_seed,
            )?;
            let mut cell_config = config.clone();
            if !with_ot {
                cell_config.weights = LossWeights { c_ot: 0.0, ..cell_config.weights };
            }
            cell_config.weights.validate().map_err(|_| {
                Error::InvalidConfig(format!(
                    "budget {budget} without transport loss leaves no active loss term"
                ))
            })?;
            let r = train_and_correlate(bench, target, &supervision, &cell_config, seed)?;
            Ok(((budget, with_ot), r))
        })
        .collect();
    let results = results?;

    let mut rows = Vec::new();
    for &budget in pairs_budgets {
        for with_ot in [true, false] {
            let values: Vec<f64> = results
                .iter()
                .filter(|(key, _)| *key == (budget, with_ot))
                .map(|(_, v)| *v)
                .collect();
            let (mean, std) = mean_std(&values);
            rows.push(AblationRow {
                pairs_budget: budget,
                with_ot,
                n_seeds,
                mean_pearson: mean,
                std_pearson: std,
                pearson_by_seed: values,
            });
        }
    }
    Ok(rows)
}

/// One row of the profile-noise robustness table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseRow {
    pub sigma: f64,
    pub n_seeds: usize,
    pub mean_pearson: f64,
    pub std_pearson: f64,
    #[serde(skip)]
    pub pearson_by_seed: Vec<f64>,
}

/// Trains against profiles whose suffix returns were multiplied by
/// independent N(1, sigma) factors before histogramming.
pub fn noise_sweep(
    bench: &EvalBench,
    sigmas: &[f64],
    target_bins: usize,
    n_pairs: usize,
    n_fixed: usize,
    config: &TrainConfig,
    n_seeds: usize,
) -> Result<Vec<NoiseRow>> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("n_seeds must be positive".into()));
    }
    for &sigma in sigmas {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("sigma {sigma} must be nonnegative")));
        }
    }
    let gt = bench.gt_reward();
    let aug = augment(&bench.demos)?;
    let clean_returns: Vec<f64> = aug
        .entries
        .iter()
        .map(|e| traj_return(|s| gt[s], &e.suffix, config.gamma))
        .collect();

    let mut cells = Vec::new();
    for (sigma_idx, &sigma) in sigmas.iter().enumerate() {
        for seed in 0..n_seeds as u64 {
            cells.push((sigma_idx, sigma, seed));
        }
    }
    let results: Result<Vec<(usize, f64)>> = cells
        .par_iter()
        .map(|&(sigma_idx, sigma, seed)| {
            let noise = Normal::new(1.0, sigma)
                .map_err(|e| Error::InvalidConfig(format!("noise distribution: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0000_0000);
            let noisy: Vec<f64> = clean_returns
                .iter()
                .map(|r| r * noise.sample(&mut rng))
                .collect();
            let (profile, _) = OptimalityProfile::from_values(&noisy, target_bins)?;
            let supervision =
                sample_supervision(&gt, &bench.demos, config.gamma, n_pairs, n_fixed, seed)?;
            let r = train_and_correlate(bench, &profile, &supervision, config, seed)?;
            Ok((sigma_idx, r))
        })
        .collect();
    let results = results?;

    let mut rows = Vec::new();
    for (sigma_idx, &sigma) in sigmas.iter().enumerate() {
        let values: Vec<f64> = results
            .iter()
            .filter(|(k, _)| *k == sigma_idx)
            .map(|(_, v)| *v)
            .collect();
        let (mean, std) = mean_std(&values);
        rows.push(NoiseRow {
            sigma,
            n_seeds,
            mean_pearson: mean,
            std_pearson: std,
            pearson_by_seed: values,
        });
    }
    Ok(rows)
}

/// One row of the discount-factor sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub n_seeds: usize,
    pub mean_pearson: f64,
    pub std_pearson: f64,
    #[serde(skip)]
    pub pearson_by_seed: Vec<f64>,
}

/// Trains against ground-truth profiles computed at each discount factor;
/// every cell trains and evaluates at its own gamma.
pub fn gamma_sweep(
    bench: &EvalBench,
    gammas: &[f64],
    target_bins: usize,
    n_pairs: usize,
    n_fixed: usize,
    config: &TrainConfig,
    n_seeds: usize,
) -> Result<Vec<GammaRow>> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("n_seeds must be positive".into()));
    }
    for &gamma in gammas {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0,1]")));
        }
    }
    let gt = bench.gt_reward();
    let aug = augment(&bench.demos)?;

    let mut cells = Vec::new();
    for (gamma_idx, &gamma) in gammas.iter().enumerate() {
        for seed in 0..n_seeds as u64 {
            cells.push((gamma_idx, gamma, seed));
        }
    }
    let results: Result<Vec<(usize, f64)>> = cells
        .par_iter()
        .map(|&(gamma_idx, gamma, seed)| {
            let profile = empirical_return_distribution(|s| gt[s], &aug, gamma, target_bins)?;
            let supervision =
                sample_supervision(&gt, &bench.demos, gamma, n_pairs, n_fixed, seed)?;
            let mut cell_config = config.clone();
            cell_config.gamma = gamma;
            let r = train_and_correlate(bench, &profile, &supervision, &cell_config, seed)?;
            Ok((gamma_idx, r))
        })
        .collect();
    let results = results?;

    let mut rows = Vec::new();
    for (gamma_idx, &gamma) in gammas.iter().enumerate() {
        let values: Vec<f64> = results
            .iter()
            .filter(|(k, _)| *k == gamma_idx)
            .map(|(_, v)| *v)
            .collect();
        let (mean, std) = mean_std(&values);
        rows.push(GammaRow {
            gamma,
            n_seeds,
            mean_pearson: mean,
            std_pearson: std,
            pearson_by_seed: values,
        });
    }
    Ok(rows)
}

/// Full evaluation report for a trained model on one benchmark. Fields are
/// absent when the corresponding evaluation was not requested or undefined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub pearson_returns: Option<f64>,
    pub pearson_states: Option<f64>,
    pub gt_return_of_reoptimized_policy: Option<f64>,
    pub gt_return_of_best_demo: Option<f64>,
    pub per_trajectory: Vec<(f64, f64)>,
}
