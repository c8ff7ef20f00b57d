//! Minibatched stochastic optimization of the combined objective with
//! learning-rate and entropy-constant schedules, checkpointing, and run logs.
//!
//! One epoch is one gradient step: sample a minibatch of suffixes, evaluate
//! the three loss terms, step the optimizer, advance the schedules. All
//! randomness is drawn from per-epoch streams of a single seeded generator,
//! so a run is fully determined by (dataset, config) and can be resumed
//! mid-way without changing the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{augment, AugmentedDataset, OptimalityProfile};
use crate::error::{Error, Result};
use crate::mdp::Trajectory;
use crate::reward::{
    total_loss_and_grad, LossWeights, RewardModel, Standardization, SupervisionSets,
};

/// Entropy constants at or below this fraction of the standardized target
/// spread are treated as zero: the trainer then uses the exact monotone plan
/// instead of Sinkhorn iterations. At this scale the regularized plan is
/// within a fraction of a percent of the exact one, so the anneal has
/// nothing left to smooth.
pub const LAMBDA_EXACT_CUTOFF_FRACTION: f64 = 1e-3;

/// Geometric decay clamped from below: value(t) = max(initial * decay^t, floor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Self { initial: value, decay: 1.0, floor: value }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.initial.is_finite() && self.initial > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{name} schedule initial {} must be positive",
                self.initial
            )));
        }
        if !(self.decay.is_finite() && self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "{name} schedule decay {} must be in (0, 1]",
                self.decay
            )));
        }
        if !(self.floor.is_finite() && self.floor >= 0.0 && self.floor <= self.initial) {
            return Err(Error::InvalidConfig(format!(
                "{name} schedule floor {} must be in [0, initial]",
                self.floor
            )));
        }
        Ok(())
    }

    pub fn value(&self, epoch: usize) -> f64 {
        (self.initial * self.decay.powi(epoch as i32)).max(self.floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
    Adam,
}

/// Optimizer accumulators, serialized into checkpoints so a resumed run
/// continues bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerState {
    Sgd,
    Rmsprop { avg_sq: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Rmsprop => OptimizerState::Rmsprop { avg_sq: vec![0.0; n_params] },
            OptimizerKind::Adam => OptimizerState::Adam {
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Rmsprop { avg_sq } => {
                const ALPHA: f64 = 0.99;
                const EPS: f64 = 1e-8;
                for ((p, g), s) in params.iter_mut().zip(grad).zip(avg_sq.iter_mut()) {
                    *s = ALPHA * *s + (1.0 - ALPHA) * g * g;
                    *p -= lr * g / (s.sqrt() + EPS);
                }
            }
            OptimizerState::Adam { m, v, t } => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let bc1 = 1.0 - BETA1.powi(*t as i32);
                let bc2 = 1.0 - BETA2.powi(*t as i32);
                for ((p, g), (mk, vk)) in
                    params.iter_mut().zip(grad).zip(m.iter_mut().zip(v.iter_mut()))
                {
                    *mk = BETA1 * *mk + (1.0 - BETA1) * g;
                    *vk = BETA2 * *vk + (1.0 - BETA2) * g * g;
                    let m_hat = *mk / bc1;
                    let v_hat = *vk / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

fn default_grad_clip() -> Option<f64> {
    Some(10.0)
}

fn default_checkpoint_every() -> usize {
    100
}

/// Everything that determines a training run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub p: f64,
    /// Entropy-constant schedule; when absent it starts at 0.1 times the
    /// standardized target spread, decays by 0.99 per epoch, and floors at 0
    /// (exact plans once it reaches the cutoff).
    pub lambda_schedule: Option<Schedule>,
    pub lr_schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub weights: LossWeights,
    /// Bin count for the per-batch return histogram; 0 keeps exact atoms.
    pub n_bins: usize,
    pub seed: u64,
    /// Gradient-norm clip in standardized units; `None` disables clipping.
    #[serde(default = "default_grad_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            p: 2.0,
            lambda_schedule: None,
            lr_schedule: Schedule { initial: 1e-2, decay: 0.995, floor: 1e-4 },
            optimizer: OptimizerKind::Adam,
            batch_size: 64,
            n_epochs: 1000,
            weights: LossWeights::default(),
            n_bins: 0,
            seed: 0,
            grad_clip: default_grad_clip(),
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0,1]", self.gamma)));
        }
        if !self.p.is_finite() || self.p < 1.0 {
            return Err(Error::InvalidConfig(format!("p {} must be >= 1", self.p)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidConfig("checkpoint_every must be >= 1".into()));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip.is_finite() && clip > 0.0) {
                return Err(Error::InvalidConfig(format!("grad_clip {clip} must be positive")));
            }
        }
        self.lr_schedule.validate("lr")?;
        if let Some(s) = &self.lambda_schedule {
            s.validate("lambda")?;
        }
        self.weights.validate()
    }
}

/// One row of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: usize,
    pub l_ot: f64,
    pub l_pw: f64,
    pub l_fix: f64,
    pub l_tot: f64,
    pub lr: f64,
    pub lambda: f64,
    pub grad_norm: f64,
}

/// Per-epoch records of one training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub records: Vec<RunRecord>,
}

/// Snapshot of a run after a completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: RewardModel,
    pub optimizer: OptimizerState,
}

/// Callback invoked with periodic checkpoints during [`fit_with_sink`].
pub type CheckpointSink<'a> = &'a mut dyn FnMut(&Checkpoint) -> Result<()>;

/// Outcome of a training run: the model, the per-epoch log, and the final
/// optimizer state so the run can be checkpointed and resumed.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: RewardModel,
    pub log: RunLog,
    pub optimizer: OptimizerState,
    /// Epoch count after the run; equals `config.n_epochs`.
    pub epoch: usize,
}

impl FitResult {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch,
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
        }
    }
}

/// Fits the model to the demonstrations and target profile.
///
/// Targets (profile atom locations and fixed labels) are standardized to
/// zero mean and unit variance over the profile before training and never
/// inverted; the transform is stored on the returned model.
pub fn fit(
    dataset: &[Trajectory],
    target: &OptimalityProfile,
    supervision: &SupervisionSets,
    model: RewardModel,
    config: &TrainConfig,
) -> Result<FitResult> {
    fit_with_sink(dataset, target, supervision, model, config, None)
}

/// [`fit`] with a checkpoint callback fired every `config.checkpoint_every`
/// epochs.
pub fn fit_with_sink(
    dataset: &[Trajectory],
    target: &OptimalityProfile,
    supervision: &SupervisionSets,
    mut model: RewardModel,
    config: &TrainConfig,
    sink: Option<CheckpointSink<'_>>,
) -> Result<FitResult> {
    let standardization = Standardization::for_profile(target);
    model.set_standardization(standardization);
    let optimizer = OptimizerState::new(config.optimizer, model.n_params());
    run_epochs(dataset, target, supervision, model, optimizer, 0, config, sink)
}

/// Continues a checkpointed run up to `config.n_epochs`, reusing the stored
/// parameters, optimizer state, and standardization. With the same seed a
/// split run reproduces the uninterrupted one bit-exactly.
pub fn resume(
    checkpoint: Checkpoint,
    dataset: &[Trajectory],
    target: &OptimalityProfile,
    supervision: &SupervisionSets,
    config: &TrainConfig,
) -> Result<FitResult> {
    run_epochs(
        dataset,
        target,
        supervision,
        checkpoint.model,
        checkpoint.optimizer,
        checkpoint.epoch,
        config,
        None,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    dataset: &[Trajectory],
    target: &OptimalityProfile,
    supervision: &SupervisionSets,
    mut model: RewardModel,
    mut optimizer: OptimizerState,
    start_epoch: usize,
    config: &TrainConfig,
    mut sink: Option<CheckpointSink<'_>>,
) -> Result<FitResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let aug: AugmentedDataset = augment(dataset)?;
    supervision.validate(aug.len())?;
    if config.weights.c_fix > 0.0 && supervision.fixed.is_empty() {
        return Err(Error::InvalidConfig(
            "c_fix > 0 requires a nonempty fixed-label set".into(),
        ));
    }

    let standardization = model.standardization();
    let target_std = target.map_locations(|x| standardization.apply(x))?;
    let supervision_std = supervision.standardized(standardization);

    let lambda_schedule = config.lambda_schedule.clone().unwrap_or_else(|| Schedule {
        initial: (0.1 * target_std.spread()).max(1e-3),
        decay: 0.99,
        floor: 0.0,
    });
    lambda_schedule.validate("lambda")?;
    let lambda_cutoff = LAMBDA_EXACT_CUTOFF_FRACTION * target_std.spread();

    let mut log = RunLog::default();
    for epoch in start_epoch..config.n_epochs {
        let lr = config.lr_schedule.value(epoch);
        let lambda_raw = lambda_schedule.value(epoch);
        let lambda = if lambda_raw <= lambda_cutoff { 0.0 } else { lambda_raw };

        // Independent per-epoch stream: resuming at any epoch replays the
        // exact randomness of an uninterrupted run.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        let batch: Vec<usize> = if config.batch_size >= aug.len() {
            (0..aug.len()).collect()
        } else {
            rand::seq::index::sample(&mut rng, aug.len(), config.batch_size).into_vec()
        };
        let ot_seed: u64 = rng.gen();

        let breakdown = total_loss_and_grad(
            &model,
            &aug,
            &batch,
            &target_std,
            &supervision_std,
            &config.weights,
            config.gamma,
            config.p,
            lambda,
            config.n_bins,
            ot_seed,
        )
        .map_err(|e| match e {
            err @ (Error::InvalidConfig(_) | Error::InvalidSupervision(_)) => err,
            other => Error::NumericalAbort { epoch, detail: other.to_string() },
        })?;
        if !breakdown.total.is_finite() {
            return Err(Error::NumericalAbort { epoch, detail: "loss is not finite".into() });
        }

        let mut grad = breakdown.grad;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if let Some(clip) = config.grad_clip {
            if grad_norm > clip {
                let scale = clip / grad_norm;
                for g in &mut grad {
                    *g *= scale;
                }
            }
        }
        optimizer.step(model.params_mut(), &grad, lr);

        log.records.push(RunRecord {
            epoch,
            l_ot: breakdown.l_ot,
            l_pw: breakdown.l_pw,
            l_fix: breakdown.l_fix,
            l_tot: breakdown.total,
            lr,
            lambda,
            grad_norm,
        });

        if let Some(sink) = sink.as_mut() {
            if (epoch + 1) % config.checkpoint_every == 0 {
                sink(&Checkpoint {
                    epoch: epoch + 1,
                    model: model.clone(),
                    optimizer: optimizer.clone(),
                })?;
            }
        }
    }
    Ok(FitResult {
        model,
        log,
        optimizer,
        epoch: config.n_epochs,
    })
}
