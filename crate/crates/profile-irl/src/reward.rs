//! Parametric reward functions with hand-written gradients, plus the
//! pairwise-ranking, fixed-value, and combined training losses.
//!
//! Two model families are supported: a table with one entry per state, and a
//! one-hidden-layer MLP over a per-state feature map. Gradients of the
//! discounted return are accumulated as the discount-weighted sum of
//! per-state gradients, so no autodiff machinery is involved; transport
//! targets are treated as constants throughout.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{traj_return, AugmentedDataset, OptimalityProfile};
use crate::error::{Error, Result};
use crate::mdp::{GridworldSpec, TabularMdp, Trajectory};
use crate::ot;

/// Per-state feature vectors, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    features: Array2<f64>,
}

impl FeatureMap {
    pub fn new(features: Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidConfig("feature map must be non-empty".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature map has non-finite entries".into()));
        }
        Ok(Self { features })
    }

    /// Gridworld features: normalized column and row position plus one-hot
    /// goal/fail terminal flags. Positions are centered to [-0.5, 0.5] so
    /// hidden units see sign-diverse inputs; an all-nonnegative feature box
    /// leaves rectified units dead from initialization on.
    pub fn for_gridworld(spec: &GridworldSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_states();
        let mut features = Array2::zeros((n, 4));
        for s in 0..n {
            let cell = spec.cell_of(s);
            features[(s, 0)] = cell.col as f64 / (spec.width.max(2) - 1) as f64 - 0.5;
            features[(s, 1)] = cell.row as f64 / (spec.height.max(2) - 1) as f64 - 0.5;
        }
        for tc in &spec.goal_cells {
            features[(tc.row * spec.width + tc.col, 2)] = 1.0;
        }
        for tc in &spec.fail_cells {
            features[(tc.row * spec.width + tc.col, 3)] = 1.0;
        }
        Self::new(features)
    }

    pub fn n_states(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, state: usize) -> ndarray::ArrayView1<'_, f64> {
        self.features.row(state)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.features
    }
}

/// Affine transform applied to targets before training: x -> (x - mean) / std.
/// It is stored with the model for reporting and never inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    /// Transform matching a profile's weighted mean and standard deviation.
    /// A degenerate profile (zero variance) keeps unit scale.
    pub fn for_profile(profile: &OptimalityProfile) -> Self {
        let std = profile.std();
        Self {
            mean: profile.mean(),
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// Architecture of a reward model.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardArch {
    /// One table entry per state.
    Tabular { n_states: usize },
    /// features -> hidden (rectified linear) -> scalar.
    Mlp { feature_map: FeatureMap, hidden_dim: usize },
}

/// A parametric state-reward function with a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    arch: RewardArch,
    params: Vec<f64>,
    standardization: Standardization,
}

impl RewardModel {
    /// Tabular model initialized to zero.
    pub fn tabular_zeros(n_states: usize) -> Self {
        Self {
            arch: RewardArch::Tabular { n_states },
            params: vec![0.0; n_states],
            standardization: Standardization::identity(),
        }
    }

    /// Tabular model with the given table.
    pub fn tabular(table: Vec<f64>) -> Self {
        Self {
            arch: RewardArch::Tabular { n_states: table.len() },
            params: table,
            standardization: Standardization::identity(),
        }
    }

    /// MLP with weights drawn uniformly from [-sqrt(1/fan_in), sqrt(1/fan_in)].
    pub fn mlp(feature_map: FeatureMap, hidden_dim: usize, seed: u64) -> Result<Self> {
        if hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be positive".into()));
        }
        let d = feature_map.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(hidden_dim * d + 2 * hidden_dim + 1);
        let bound_in = (1.0 / d as f64).sqrt();
        for _ in 0..hidden_dim * d + hidden_dim {
            params.push(rng.gen_range(-bound_in..bound_in));
        }
        let bound_out = (1.0 / hidden_dim as f64).sqrt();
        for _ in 0..hidden_dim + 1 {
            params.push(rng.gen_range(-bound_out..bound_out));
        }
        Ok(Self {
            arch: RewardArch::Mlp { feature_map, hidden_dim },
            params,
            standardization: Standardization::identity(),
        })
    }

    pub fn from_parts(arch: RewardArch, params: Vec<f64>, standardization: Standardization) -> Result<Self> {
        let expected = match &arch {
            RewardArch::Tabular { n_states } => *n_states,
            RewardArch::Mlp { feature_map, hidden_dim } => {
                hidden_dim * feature_map.dim() + 2 * hidden_dim + 1
            }
        };
        if params.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite parameter".into()));
        }
        Ok(Self { arch, params, standardization })
    }

    pub fn arch(&self) -> &RewardArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn set_standardization(&mut self, s: Standardization) {
        self.standardization = s;
    }

    pub fn n_states(&self) -> usize {
        match &self.arch {
            RewardArch::Tabular { n_states } => *n_states,
            RewardArch::Mlp { feature_map, .. } => feature_map.n_states(),
        }
    }

    /// Reward of a single state.
    pub fn forward(&self, state: usize) -> f64 {
        match &self.arch {
            RewardArch::Tabular { .. } => self.params[state],
            RewardArch::Mlp { feature_map, hidden_dim } => {
                let d = feature_map.dim();
                let h = *hidden_dim;
                let x = feature_map.row(state);
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let mut out = b2[0];
                for k in 0..h {
                    let mut z = b1[k];
                    for (i, &xi) in x.iter().enumerate() {
                        z += w1[k * d + i] * xi;
                    }
                    if z > 0.0 {
                        out += w2[k] * z;
                    }
                }
                out
            }
        }
    }

    /// Rewards of all states, for feeding a policy optimizer.
    pub fn reward_vector(&self) -> Vec<f64> {
        (0..self.n_states()).map(|s| self.forward(s)).collect()
    }

    /// Wraps the MDP's state count check for policy re-optimization.
    pub fn check_mdp(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states() != mdp.n_states() {
            return Err(Error::InvalidConfig(format!(
                "model covers {} states, mdp has {}",
                self.n_states(),
                mdp.n_states()
            )));
        }
        Ok(())
    }

    /// Discounted return of a trajectory under this model.
    pub fn return_of(&self, traj: &Trajectory, gamma: f64) -> f64 {
        traj_return(|s| self.forward(s), traj, gamma)
    }

    /// Accumulates `scale * d forward(state) / d theta` into `out`.
    pub fn accumulate_state_grad(&self, state: usize, scale: f64, out: &mut [f64]) {
        match &self.arch {
            RewardArch::Tabular { .. } => out[state] += scale,
            RewardArch::Mlp { feature_map, hidden_dim } => {
                let d = feature_map.dim();
                let h = *hidden_dim;
                let x = feature_map.row(state);
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, _) = rest.split_at(h);
                for k in 0..h {
                    let mut z = b1[k];
                    for (i, &xi) in x.iter().enumerate() {
                        z += w1[k * d + i] * xi;
                    }
                    if z > 0.0 {
                        out[h * d + h + k] += scale * z; // w2
                        let back = scale * w2[k];
                        out[h * d + k] += back; // b1
                        for (i, &xi) in x.iter().enumerate() {
                            out[k * d + i] += back * xi; // w1
                        }
                    }
                }
                out[h * d + 2 * h] += scale; // b2
            }
        }
    }

    /// Accumulates `scale * d return(traj) / d theta`, the discount-weighted
    /// sum of per-state gradients.
    pub fn accumulate_return_grad(&self, traj: &Trajectory, gamma: f64, scale: f64, out: &mut [f64]) {
        let mut factor = scale;
        for &s in &traj.states {
            self.accumulate_state_grad(s, factor, out);
            factor *= gamma;
        }
    }
}

/// Ranking pairs and fixed-value labels, both indexing into the suffix
/// dataset. A pair (j, j') asserts return(j) <= return(j').
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SupervisionSets {
    pub pairs: Vec<(usize, usize)>,
    pub fixed: Vec<(usize, f64)>,
}

impl SupervisionSets {
    pub fn validate(&self, n_entries: usize) -> Result<()> {
        for &(j, j2) in &self.pairs {
            if j >= n_entries || j2 >= n_entries {
                return Err(Error::InvalidSupervision(format!(
                    "pair ({j},{j2}) out of range for {n_entries} entries"
                )));
            }
            if j == j2 {
                return Err(Error::InvalidSupervision(format!("pair ({j},{j}) compares an entry to itself")));
            }
        }
        for &(k, y) in &self.fixed {
            if k >= n_entries {
                return Err(Error::InvalidSupervision(format!(
                    "fixed index {k} out of range for {n_entries} entries"
                )));
            }
            if !y.is_finite() {
                return Err(Error::InvalidSupervision(format!("fixed label {y} is not finite")));
            }
        }
        Ok(())
    }

    /// Applies the target standardization to the fixed labels.
    pub fn standardized(&self, t: Standardization) -> Self {
        Self {
            pairs: self.pairs.clone(),
            fixed: self.fixed.iter().map(|&(k, y)| (k, t.apply(y))).collect(),
        }
    }
}

/// Loss-term weights; at least one must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub c_ot: f64,
    pub c_pw: f64,
    pub c_fix: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("c_ot", self.c_ot), ("c_pw", self.c_pw), ("c_fix", self.c_fix)] {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} = {c} must be a nonnegative real")));
            }
        }
        if self.c_ot == 0.0 && self.c_pw == 0.0 && self.c_fix == 0.0 {
            return Err(Error::InvalidConfig("all loss weights are zero".into()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { c_ot: 1.0, c_pw: 1.0, c_fix: 1.0 }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bradley-Terry ranking loss over ordered pairs: the log-likelihood penalty
/// for placing return(j) above return(j'). Computed as
/// softplus(return(j) - return(j')) per pair, which is the stable form.
pub fn pw_loss(
    model: &RewardModel,
    aug: &AugmentedDataset,
    pairs: &[(usize, usize)],
    gamma: f64,
) -> f64 {
    pairs
        .iter()
        .map(|&(j, j2)| {
            let low = model.return_of(aug.suffix(j), gamma);
            let high = model.return_of(aug.suffix(j2), gamma);
            softplus(low - high)
        })
        .sum()
}

/// Euclidean norm of the fixed-label residuals.
pub fn fix_loss(
    model: &RewardModel,
    aug: &AugmentedDataset,
    fixed: &[(usize, f64)],
    gamma: f64,
) -> f64 {
    fixed
        .iter()
        .map(|&(k, y)| (model.return_of(aug.suffix(k), gamma) - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Loss components and the analytic gradient of their weighted sum.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub l_ot: f64,
    pub l_pw: f64,
    pub l_fix: f64,
    pub total: f64,
    pub grad: Vec<f64>,
}

/// Evaluates the weighted training objective on one batch and its gradient.
///
/// The transport term follows the minibatch estimate of [`ot::ot_loss`]; the
/// sampled targets are constants for the gradient. The ranking and
/// fixed-label terms are evaluated on their full index sets. The returned
/// gradient has one entry per model parameter.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_and_grad(
    model: &RewardModel,
    aug: &AugmentedDataset,
    batch: &[usize],
    target: &OptimalityProfile,
    supervision: &SupervisionSets,
    weights: &LossWeights,
    gamma: f64,
    p: f64,
    lambda: f64,
    n_bins: usize,
    seed: u64,
) -> Result<LossBreakdown> {
    weights.validate()?;
    supervision.validate(aug.len())?;
    if weights.c_fix > 0.0 && supervision.fixed.is_empty() {
        return Err(Error::InvalidConfig(
            "c_fix > 0 requires a nonempty fixed-label set".into(),
        ));
    }
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= aug.len()) {
        return Err(Error::InvalidConfig(format!("batch index {i} out of range")));
    }

    let mut grad = vec![0.0; model.n_params()];
    let mut l_ot = 0.0;
    if weights.c_ot > 0.0 {
        let suffixes: Vec<&Trajectory> = batch.iter().map(|&i| aug.suffix(i)).collect();
        let est = ot::ot_loss(
            |s| model.forward(s),
            &suffixes,
            target,
            gamma,
            p,
            lambda,
            n_bins,
            seed,
        )?;
        l_ot = est.loss;
        let (_, dl_dy) = ot::frozen_target_loss_grad(&est.returns, &est.targets, p);
        for (j, &i) in batch.iter().enumerate() {
            if dl_dy[j] != 0.0 {
                model.accumulate_return_grad(aug.suffix(i), gamma, weights.c_ot * dl_dy[j], &mut grad);
            }
        }
    }

    let mut l_pw = 0.0;
    if weights.c_pw > 0.0 {
        for &(j, j2) in &supervision.pairs {
            let low = model.return_of(aug.suffix(j), gamma);
            let high = model.return_of(aug.suffix(j2), gamma);
            let delta = high - low;
            l_pw += softplus(-delta);
            // d softplus(-delta) / d delta = -sigmoid(-delta)
            let dl_ddelta = -sigmoid(-delta);
            model.accumulate_return_grad(aug.suffix(j2), gamma, weights.c_pw * dl_ddelta, &mut grad);
            model.accumulate_return_grad(aug.suffix(j), gamma, -weights.c_pw * dl_ddelta, &mut grad);
        }
    }

    let mut l_fix = 0.0;
    if weights.c_fix > 0.0 {
        let residuals: Vec<(usize, f64)> = supervision
            .fixed
            .iter()
            .map(|&(k, y)| (k, model.return_of(aug.suffix(k), gamma) - y))
            .collect();
        l_fix = residuals.iter().map(|(_, r)| r * r).sum::<f64>().sqrt();
        if l_fix > 0.0 {
            for &(k, r) in &residuals {
                model.accumulate_return_grad(
                    aug.suffix(k),
                    gamma,
                    weights.c_fix * r / l_fix,
                    &mut grad,
                );
            }
        }
    }

    let total = weights.c_ot * l_ot + weights.c_pw * l_pw + weights.c_fix * l_fix;
    Ok(LossBreakdown { l_ot, l_pw, l_fix, total, grad })
}
