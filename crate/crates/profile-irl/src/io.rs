//! File formats shared between the library, the CLI, and external tooling:
//! versioned JSON documents, JSON-lines trajectory datasets, and CSV tables.
//! JSON schemas for each document live under `docs/` in the repository.
//!
//! Every parser here takes untrusted input: it must return an error rather
//! than panic, whatever the bytes. The `parse_*` string functions are the
//! entry points exercised by the fuzz targets.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};

use crate::distributions::OptimalityProfile;
use crate::error::{Error, Result};
use crate::eval::{AblationRow, EvalReport, GammaRow, NoiseRow};
use crate::mdp::{GridworldSpec, TabularMdp, Trajectory};
use crate::ot::TransportPlan;
use crate::reward::{FeatureMap, RewardArch, RewardModel, Standardization, SupervisionSets};
use crate::trainer::{Checkpoint, OptimizerState, RunLog, RunRecord, TrainConfig};

/// Version embedded in every JSON artifact this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

fn check_version(kind: &'static str, found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { kind, found, expected: SCHEMA_VERSION });
    }
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(fs::write(path, contents)?)
}

// ---------------------------------------------------------------------------
// MDP and gridworld specs (docs/mdp.schema.json)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct MdpDoc {
    schema_version: u32,
    n_states: usize,
    n_actions: usize,
    /// transition[s][a][s2]
    transition: Vec<Vec<Vec<f64>>>,
    initial_dist: Vec<f64>,
    gt_reward: Vec<f64>,
    terminals: Vec<usize>,
    horizon: usize,
}

pub fn mdp_to_json(mdp: &TabularMdp) -> String {
    let (n, a, _) = mdp.transition().dim();
    let transition: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|s| {
            (0..a)
                .map(|act| mdp.transition().slice(ndarray::s![s, act, ..]).to_vec())
                .collect()
        })
        .collect();
    let doc = MdpDoc {
        schema_version: SCHEMA_VERSION,
        n_states: n,
        n_actions: a,
        transition,
        initial_dist: mdp.initial_dist().to_vec(),
        gt_reward: mdp.gt_reward().to_vec(),
        terminals: mdp.terminal_states(),
        horizon: mdp.horizon(),
    };
    serde_json::to_string_pretty(&doc).expect("mdp doc serializes")
}

pub fn parse_mdp_json(text: &str) -> Result<TabularMdp> {
    let doc: MdpDoc = serde_json::from_str(text)?;
    check_version("mdp", doc.schema_version)?;
    if doc.transition.len() != doc.n_states {
        return Err(Error::InvalidMdp(format!(
            "transition has {} state rows, n_states is {}",
            doc.transition.len(),
            doc.n_states
        )));
    }
    let mut flat = Vec::new();
    for row in &doc.transition {
        if row.len() != doc.n_actions {
            return Err(Error::InvalidMdp(format!(
                "state row has {} action rows, n_actions is {}",
                row.len(),
                doc.n_actions
            )));
        }
        for inner in row {
            if inner.len() != doc.n_states {
                return Err(Error::InvalidMdp(format!(
                    "transition row has {} entries, n_states is {}",
                    inner.len(),
                    doc.n_states
                )));
            }
            flat.extend_from_slice(inner);
        }
    }
    let transition = Array3::from_shape_vec((doc.n_states, doc.n_actions, doc.n_states), flat)
        .map_err(|e| Error::InvalidMdp(e.to_string()))?;
    TabularMdp::new(
        transition,
        Array1::from(doc.initial_dist),
        Array1::from(doc.gt_reward),
        &doc.terminals,
        doc.horizon,
    )
}

pub fn save_mdp(path: &Path, mdp: &TabularMdp) -> Result<()> {
    write_string(path, &mdp_to_json(mdp))
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    parse_mdp_json(&read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct GridworldSpecDoc {
    schema_version: u32,
    #[serde(flatten)]
    spec: GridworldSpec,
}

pub fn gridworld_spec_to_json(spec: &GridworldSpec) -> String {
    serde_json::to_string_pretty(&GridworldSpecDoc {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
    })
    .expect("spec doc serializes")
}

pub fn parse_gridworld_spec_json(text: &str) -> Result<GridworldSpec> {
    let doc: GridworldSpecDoc = serde_json::from_str(text)?;
    check_version("gridworld-spec", doc.schema_version)?;
    doc.spec.validate()?;
    Ok(doc.spec)
}

pub fn save_gridworld_spec(path: &Path, spec: &GridworldSpec) -> Result<()> {
    write_string(path, &gridworld_spec_to_json(spec))
}

pub fn load_gridworld_spec(path: &Path) -> Result<GridworldSpec> {
    parse_gridworld_spec_json(&read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Trajectory datasets: JSON lines (docs/trajectory.schema.json per line)
// ---------------------------------------------------------------------------

/// Parses one JSONL line: `{"states":[...],"actions":[...]}`, actions
/// optional.
pub fn parse_trajectory_line(line: &str) -> Result<Trajectory> {
    let raw: Trajectory = serde_json::from_str(line)?;
    Trajectory::new(raw.states, raw.actions)
}

pub fn parse_demos_jsonl(text: &str) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_trajectory_line(line)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

pub fn save_demos(path: &Path, demos: &[Trajectory]) -> Result<()> {
    let mut text = String::new();
    for t in demos {
        text.push_str(&serde_json::to_string(t)?);
        text.push('\n');
    }
    write_string(path, &text)
}

pub fn load_demos(path: &Path) -> Result<Vec<Trajectory>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_trajectory_line(&line)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Optimality profiles (docs/profile.schema.json + CSV import)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ProfileDoc {
    schema_version: u32,
    atoms: Vec<(f64, f64)>,
}

pub fn profile_to_json(profile: &OptimalityProfile) -> String {
    let doc = ProfileDoc {
        schema_version: SCHEMA_VERSION,
        atoms: profile.atoms().iter().map(|a| (a.location, a.weight)).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("profile doc serializes")
}

pub fn parse_profile_json(text: &str) -> Result<OptimalityProfile> {
    let doc: ProfileDoc = serde_json::from_str(text)?;
    check_version("profile", doc.schema_version)?;
    OptimalityProfile::from_atoms(doc.atoms)
}

pub fn save_profile(path: &Path, profile: &OptimalityProfile) -> Result<()> {
    write_string(path, &profile_to_json(profile))
}

pub fn load_profile(path: &Path) -> Result<OptimalityProfile> {
    parse_profile_json(&read_to_string(path)?)
}

/// Imports an externally supplied profile from `location,weight` CSV rows
/// (header required).
pub fn parse_profile_csv(text: &str) -> Result<OptimalityProfile> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    {
        let headers = reader.headers()?;
        if headers.len() != 2 || &headers[0] != "location" || &headers[1] != "weight" {
            return Err(Error::Malformed {
                kind: "profile-csv",
                detail: format!("expected header location,weight; found {headers:?}"),
            });
        }
    }
    let mut atoms = Vec::new();
    for record in reader.deserialize::<(f64, f64)>() {
        atoms.push(record?);
    }
    OptimalityProfile::from_atoms(atoms)
}

pub fn load_profile_csv(path: &Path) -> Result<OptimalityProfile> {
    parse_profile_csv(&read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Supervision sets (docs/supervision.schema.json)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SupervisionDoc {
    schema_version: u32,
    pairs: Vec<(usize, usize)>,
    fixed: Vec<(usize, f64)>,
}

pub fn supervision_to_json(supervision: &SupervisionSets) -> String {
    let doc = SupervisionDoc {
        schema_version: SCHEMA_VERSION,
        pairs: supervision.pairs.clone(),
        fixed: supervision.fixed.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("supervision doc serializes")
}

pub fn parse_supervision_json(text: &str) -> Result<SupervisionSets> {
    let doc: SupervisionDoc = serde_json::from_str(text)?;
    check_version("supervision", doc.schema_version)?;
    let sets = SupervisionSets { pairs: doc.pairs, fixed: doc.fixed };
    // Index ranges are checked against the dataset at use time.
    for &(j, j2) in &sets.pairs {
        if j == j2 {
            return Err(Error::InvalidSupervision(format!(
                "pair ({j},{j}) compares an entry to itself"
            )));
        }
    }
    for &(_, y) in &sets.fixed {
        if !y.is_finite() {
            return Err(Error::InvalidSupervision(format!("fixed label {y} is not finite")));
        }
    }
    Ok(sets)
}

pub fn save_supervision(path: &Path, supervision: &SupervisionSets) -> Result<()> {
    write_string(path, &supervision_to_json(supervision))
}

pub fn load_supervision(path: &Path) -> Result<SupervisionSets> {
    parse_supervision_json(&read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Run configuration (docs/config.schema.json)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tabular,
    Mlp,
}

/// Architecture requested for a run; the feature map comes from the
/// environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_dim: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: ModelKind::Mlp, hidden_dim: 16 }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == ModelKind::Mlp && self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be positive for mlp".into()));
        }
        Ok(())
    }

    pub fn build(&self, spec: &GridworldSpec, seed: u64) -> Result<RewardModel> {
        match self.kind {
            ModelKind::Tabular => Ok(RewardModel::tabular_zeros(spec.n_states())),
            ModelKind::Mlp => {
                RewardModel::mlp(FeatureMap::for_gridworld(spec)?, self.hidden_dim, seed)
            }
        }
    }
}

/// Everything a run directory needs to be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: GridworldSpec,
    #[serde(default)]
    pub model: ModelSpec,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunConfigDoc {
    schema_version: u32,
    #[serde(flatten)]
    config: RunConfig,
}

pub fn run_config_to_json(config: &RunConfig) -> String {
    serde_json::to_string_pretty(&RunConfigDoc {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
    })
    .expect("config doc serializes")
}

pub fn parse_run_config_json(text: &str) -> Result<RunConfig> {
    let doc: RunConfigDoc = serde_json::from_str(text)?;
    check_version("config", doc.schema_version)?;
    doc.config.validate()?;
    Ok(doc.config)
}

pub fn save_run_config(path: &Path, config: &RunConfig) -> Result<()> {
    write_string(path, &run_config_to_json(config))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config_json(&read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Model checkpoints (docs/reward.schema.json)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    kind: ModelKind,
    n_states: usize,
    input_dim: usize,
    hidden_dim: usize,
    params: Vec<f64>,
    standardization: Standardization,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    schema_version: u32,
    epoch: usize,
    model: ModelDoc,
    optimizer: OptimizerState,
}

fn model_to_doc(model: &RewardModel) -> ModelDoc {
    match model.arch() {
        RewardArch::Tabular { n_states } => ModelDoc {
            kind: ModelKind::Tabular,
            n_states: *n_states,
            input_dim: 0,
            hidden_dim: 0,
            params: model.params().to_vec(),
            standardization: model.standardization(),
        },
        RewardArch::Mlp { feature_map, hidden_dim } => ModelDoc {
            kind: ModelKind::Mlp,
            n_states: feature_map.n_states(),
            input_dim: feature_map.dim(),
            hidden_dim: *hidden_dim,
            params: model.params().to_vec(),
            standardization: model.standardization(),
        },
    }
}

fn doc_to_model(doc: ModelDoc, features: Option<&FeatureMap>) -> Result<RewardModel> {
    let s = doc.standardization;
    if !s.mean.is_finite() || !s.std.is_finite() || s.std <= 0.0 {
        return Err(Error::Malformed {
            kind: "checkpoint",
            detail: format!("bad standardization {s:?}"),
        });
    }
    let arch = match doc.kind {
        ModelKind::Tabular => RewardArch::Tabular { n_states: doc.n_states },
        ModelKind::Mlp => {
            let features = features.ok_or(Error::Malformed {
                kind: "checkpoint",
                detail: "mlp checkpoint needs an environment feature map".into(),
            })?;
            if features.n_states() != doc.n_states || features.dim() != doc.input_dim {
                return Err(Error::Malformed {
                    kind: "checkpoint",
                    detail: format!(
                        "feature map is {}x{}, checkpoint expects {}x{}",
                        features.n_states(),
                        features.dim(),
                        doc.n_states,
                        doc.input_dim
                    ),
                });
            }
            RewardArch::Mlp { feature_map: features.clone(), hidden_dim: doc.hidden_dim }
        }
    };
    let mut model = RewardModel::from_parts(arch, doc.params, s)?;
    model.set_standardization(s);
    Ok(model)
}

pub fn checkpoint_to_json(checkpoint: &Checkpoint) -> String {
    let doc = CheckpointDoc {
        schema_version: SCHEMA_VERSION,
        epoch: checkpoint.epoch,
        model: model_to_doc(&checkpoint.model),
        optimizer: checkpoint.optimizer.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("checkpoint doc serializes")
}

pub fn parse_checkpoint_json(text: &str, features: Option<&FeatureMap>) -> Result<Checkpoint> {
    let doc: CheckpointDoc = serde_json::from_str(text)?;
    check_version("checkpoint", doc.schema_version)?;
    let model = doc_to_model(doc.model, features)?;
    let state_len = match &doc.optimizer {
        OptimizerState::Sgd => model.n_params(),
        OptimizerState::Rmsprop { avg_sq } => avg_sq.len(),
        OptimizerState::Adam { m, v, .. } => {
            if m.len() != v.len() {
                return Err(Error::Malformed {
                    kind: "checkpoint",
                    detail: "optimizer moment vectors disagree in length".into(),
                });
            }
            m.len()
        }
    };
    if state_len != model.n_params() {
        return Err(Error::Malformed {
            kind: "checkpoint",
            detail: format!(
                "optimizer state covers {state_len} parameters, model has {}",
                model.n_params()
            ),
        });
    }
    Ok(Checkpoint { epoch: doc.epoch, model, optimizer: doc.optimizer })
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_string(path, &checkpoint_to_json(checkpoint))
}

pub fn load_checkpoint(path: &Path, features: Option<&FeatureMap>) -> Result<Checkpoint> {
    parse_checkpoint_json(&read_to_string(path)?, features)
}

// ---------------------------------------------------------------------------
// Run logs and tables (CSV)
// ---------------------------------------------------------------------------

pub fn run_log_to_csv(log: &RunLog) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in &log.records {
        writer.serialize(record).expect("run record serializes");
    }
    String::from_utf8(writer.into_inner().expect("csv buffer")).expect("csv is utf-8")
}

pub fn parse_run_log_csv(text: &str) -> Result<RunLog> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut records = Vec::new();
    for row in reader.deserialize::<RunRecord>() {
        records.push(row?);
    }
    Ok(RunLog { records })
}

pub fn save_run_log(path: &Path, log: &RunLog) -> Result<()> {
    write_string(path, &run_log_to_csv(log))
}

pub fn load_run_log(path: &Path) -> Result<RunLog> {
    parse_run_log_csv(&read_to_string(path)?)
}

/// Dense transport-plan export for debugging: the first row holds the target
/// atom locations, each following row a source location and its plan row.
pub fn plan_to_csv(plan: &TransportPlan) -> String {
    let mut out = String::from("src\\tgt");
    for atom in &plan.target_atoms {
        out.push(',');
        out.push_str(&atom.location.to_string());
    }
    out.push('\n');
    for (i, atom) in plan.source_atoms.iter().enumerate() {
        out.push_str(&atom.location.to_string());
        for j in 0..plan.target_atoms.len() {
            out.push(',');
            out.push_str(&plan.matrix[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn save_plan_csv(path: &Path, plan: &TransportPlan) -> Result<()> {
    write_string(path, &plan_to_csv(plan))
}

fn rows_to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("sweep row serializes");
    }
    String::from_utf8(writer.into_inner().expect("csv buffer")).expect("csv is utf-8")
}

pub fn save_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    write_string(path, &rows_to_csv(rows))
}

pub fn save_noise_csv(path: &Path, rows: &[NoiseRow]) -> Result<()> {
    write_string(path, &rows_to_csv(rows))
}

pub fn save_gamma_csv(path: &Path, rows: &[GammaRow]) -> Result<()> {
    write_string(path, &rows_to_csv(rows))
}

// ---------------------------------------------------------------------------
// Evaluation reports (docs/report.schema.json)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ReportDoc {
    schema_version: u32,
    #[serde(flatten)]
    report: EvalReport,
}

pub fn report_to_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(&ReportDoc {
        schema_version: SCHEMA_VERSION,
        report: report.clone(),
    })
    .expect("report doc serializes")
}

pub fn parse_report_json(text: &str) -> Result<EvalReport> {
    let doc: ReportDoc = serde_json::from_str(text)?;
    check_version("report", doc.schema_version)?;
    Ok(doc.report)
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_string(path, &report_to_json(report))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    parse_report_json(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::augment;
    use crate::mdp::build_gridworld;
    use crate::presets;
    use crate::trainer::{fit_with_sink, OptimizerKind};

    #[test]
    fn mdp_round_trips_through_json() {
        let mdp = build_gridworld(&presets::two_corridor_spec()).unwrap();
        let text = mdp_to_json(&mdp);
        let back = parse_mdp_json(&text).unwrap();
        assert_eq!(back.n_states(), mdp.n_states());
        assert_eq!(back.transition(), mdp.transition());
        assert_eq!(back.gt_reward(), mdp.gt_reward());
        assert_eq!(back.terminal_states(), mdp.terminal_states());
    }

    #[test]
    fn spec_round_trips_and_validates() {
        let spec = presets::benchmark_grid10();
        let text = gridworld_spec_to_json(&spec);
        assert_eq!(parse_gridworld_spec_json(&text).unwrap(), spec);

        let mut bad = spec.clone();
        bad.slip_prob = 2.0;
        let text = gridworld_spec_to_json(&bad);
        assert!(matches!(parse_gridworld_spec_json(&text), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let spec = presets::figure1_corridor();
        let text = gridworld_spec_to_json(&spec).replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            parse_gridworld_spec_json(&text),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn trajectory_lines_round_trip() {
        let with_actions = Trajectory::new(vec![3, 1, 4], Some(vec![0, 2])).unwrap();
        let without = Trajectory::new(vec![5], None).unwrap();
        let line = serde_json::to_string(&with_actions).unwrap();
        assert_eq!(parse_trajectory_line(&line).unwrap(), with_actions);
        let line = serde_json::to_string(&without).unwrap();
        assert!(!line.contains("actions"));
        assert_eq!(parse_trajectory_line(&line).unwrap(), without);

        assert!(parse_trajectory_line("{\"states\":[]}").is_err());
        assert!(parse_trajectory_line("{\"states\":[1,2],\"actions\":[0,0]}").is_err());
        assert!(parse_trajectory_line("not json").is_err());
    }

    #[test]
    fn demos_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.jsonl");
        let demos = vec![
            Trajectory::new(vec![0, 1, 2], Some(vec![1, 1])).unwrap(),
            Trajectory::new(vec![7], None).unwrap(),
        ];
        save_demos(&path, &demos).unwrap();
        assert_eq!(load_demos(&path).unwrap(), demos);
    }

    #[test]
    fn profile_json_and_csv_agree() {
        let profile =
            OptimalityProfile::from_atoms(vec![(-1.0, 0.25), (0.0, 0.5), (3.5, 0.25)]).unwrap();
        let json = profile_to_json(&profile);
        assert_eq!(parse_profile_json(&json).unwrap(), profile);

        let csv = "location,weight\n-1.0,0.25\n0.0,0.5\n3.5,0.25\n";
        assert_eq!(parse_profile_csv(csv).unwrap(), profile);

        assert!(parse_profile_csv("loc,w\n1,1\n").is_err());
        assert!(parse_profile_csv("location,weight\n0.0,0.4\n").is_err());
    }

    #[test]
    fn supervision_round_trips() {
        let sets = SupervisionSets { pairs: vec![(0, 3), (2, 1)], fixed: vec![(1, -2.5)] };
        let text = supervision_to_json(&sets);
        assert_eq!(parse_supervision_json(&text).unwrap(), sets);
        assert!(parse_supervision_json(
            "{\"schema_version\":1,\"pairs\":[[2,2]],\"fixed\":[]}"
        )
        .is_err());
    }

    #[test]
    fn run_config_round_trips() {
        let config = RunConfig {
            env: presets::figure1_corridor(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
        };
        let text = run_config_to_json(&config);
        assert_eq!(parse_run_config_json(&text).unwrap(), config);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let spec = presets::figure1_corridor();
        let features = FeatureMap::for_gridworld(&spec).unwrap();
        let mut model = RewardModel::mlp(features.clone(), 16, 42).unwrap();
        model.set_standardization(Standardization { mean: 1.25, std: 0.75 });
        let checkpoint = Checkpoint {
            epoch: 137,
            model: model.clone(),
            optimizer: OptimizerState::Adam {
                m: (0..model.n_params()).map(|i| i as f64 * 0.001 + 0.1).collect(),
                v: (0..model.n_params()).map(|i| i as f64 * 1e-6).collect(),
                t: 137,
            },
        };
        let text = checkpoint_to_json(&checkpoint);
        let back = parse_checkpoint_json(&text, Some(&features)).unwrap();
        assert_eq!(back.epoch, checkpoint.epoch);
        assert_eq!(back.optimizer, checkpoint.optimizer);
        let params_bits: Vec<u64> = checkpoint.model.params().iter().map(|p| p.to_bits()).collect();
        let back_bits: Vec<u64> = back.model.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(params_bits, back_bits);
        assert_eq!(back.model.standardization(), model.standardization());
    }

    #[test]
    fn checkpoint_rejects_mismatched_optimizer_state() {
        let model = RewardModel::tabular_zeros(4);
        let checkpoint = Checkpoint {
            epoch: 1,
            model,
            optimizer: OptimizerState::Adam { m: vec![0.0; 3], v: vec![0.0; 3], t: 1 },
        };
        let text = checkpoint_to_json(&checkpoint);
        assert!(matches!(
            parse_checkpoint_json(&text, None),
            Err(Error::Malformed { kind: "checkpoint", .. })
        ));
    }

    #[test]
    fn run_log_round_trips_and_keeps_header_order() {
        let (mdp, policy) = presets::two_corridor();
        let demos = vec![crate::mdp::sample_trajectory(&mdp, &policy, 1).unwrap()];
        let gt = mdp.gt_reward().clone();
        let aug = augment(&demos).unwrap();
        let target =
            crate::distributions::empirical_return_distribution(|s| gt[s], &aug, 0.9, 0).unwrap();
        let supervision = SupervisionSets { pairs: vec![], fixed: vec![(0, 1.0)] };
        let config = TrainConfig {
            n_epochs: 3,
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        };
        let model = RewardModel::tabular_zeros(mdp.n_states());
        let result = fit_with_sink(&demos, &target, &supervision, model, &config, None).unwrap();
        let log = result.log;
        let text = run_log_to_csv(&log);
        assert!(text.starts_with("epoch,l_ot,l_pw,l_fix,l_tot,lr,lambda,grad_norm"));
        assert_eq!(parse_run_log_csv(&text).unwrap(), log);
    }

    #[test]
    fn plan_csv_has_location_headers() {
        let a = OptimalityProfile::from_atoms(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let b = OptimalityProfile::from_atoms(vec![(2.0, 1.0)]).unwrap();
        let (_, plan) = crate::ot::exact_plan(&a, &b, 2.0).unwrap();
        let text = plan_to_csv(&plan);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "src\\tgt,2");
        assert_eq!(lines.next().unwrap(), "0,0.5");
        assert_eq!(lines.next().unwrap(), "1,0.5");
    }

    #[test]
    fn report_round_trips() {
        let report = EvalReport {
            pearson_returns: Some(0.93),
            pearson_states: None,
            gt_return_of_reoptimized_policy: Some(8.2),
            gt_return_of_best_demo: Some(8.0),
            per_trajectory: vec![(8.2, 1.1), (-10.0, -0.4)],
        };
        let text = report_to_json(&report);
        let back = parse_report_json(&text).unwrap();
        assert_eq!(back.pearson_returns, report.pearson_returns);
        assert_eq!(back.per_trajectory, report.per_trajectory);
    }

    #[test]
    fn parsers_survive_garbage() {
        for garbage in ["", "{", "[1,2,3]", "{\"schema_version\":true}", "\u{0}\u{1}\u{2}"] {
            assert!(parse_mdp_json(garbage).is_err());
            assert!(parse_profile_json(garbage).is_err());
            assert!(parse_supervision_json(garbage).is_err());
            assert!(parse_run_config_json(garbage).is_err());
            assert!(parse_checkpoint_json(garbage, None).is_err());
            assert!(parse_trajectory_line(garbage).is_err());
            assert!(parse_gridworld_spec_json(garbage).is_err());
        }
    }
}
