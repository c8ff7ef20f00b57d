//! Distributions derived from demonstrations: suffix augmentation, discounted
//! returns, empirical and exact return distributions, and the length-rescaled
//! trajectory measures they are built on.
//!
//! The conventions follow the cut-off semantics of [`crate::mdp`]: a
//! trajectory of length `l` contributes `l` suffixes, which makes the uniform
//! distribution over suffixes the empirical counterpart of the
//! length-rescaled future measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{enumerate_trajectories, TabularMdp, TabularPolicy, Trajectory};

/// Locations closer than this are treated as the same atom.
pub const LOCATION_MERGE_TOL: f64 = 1e-12;

/// Allowed deviation of profile weights from total mass 1.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// One suffix of a demonstration trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedEntry {
    pub source_index: usize,
    pub start_step: usize,
    pub suffix: Trajectory,
}

/// All suffixes of all demonstrations; contains each full trajectory as the
/// suffix with `start_step == 0`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AugmentedDataset {
    pub entries: Vec<AugmentedEntry>,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn suffix(&self, index: usize) -> &Trajectory {
        &self.entries[index].suffix
    }
}

/// Expands a dataset into the suffix dataset: trajectory `i` of length `l_i`
/// contributes the suffixes starting at steps `0..l_i`.
pub fn augment(dataset: &[Trajectory]) -> Result<AugmentedDataset> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut entries = Vec::with_capacity(dataset.iter().map(Trajectory::len).sum());
    for (source_index, traj) in dataset.iter().enumerate() {
        for start_step in 0..traj.len() {
            entries.push(AugmentedEntry {
                source_index,
                start_step,
                suffix: traj.suffix(start_step)?,
            });
        }
    }
    Ok(AugmentedDataset { entries })
}

/// Discounted return of a trajectory: sum over steps of `gamma^t * R(s_t)`.
/// With `gamma = 0` this is the reward of the first state.
pub fn traj_return<R: Fn(usize) -> f64>(reward: R, traj: &Trajectory, gamma: f64) -> f64 {
    let mut factor = 1.0;
    let mut total = 0.0;
    for &s in &traj.states {
        total += factor * reward(s);
        factor *= gamma;
    }
    total
}

/// A weighted atom of a distribution on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileAtom {
    pub location: f64,
    pub weight: f64,
}

/// A distribution over return values as a sorted list of weighted atoms.
///
/// Weights are positive and sum to 1 within [`WEIGHT_SUM_TOL`]; atoms whose
/// locations coincide within [`LOCATION_MERGE_TOL`] are merged at
/// construction time.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityProfile {
    atoms: Vec<ProfileAtom>,
}

impl OptimalityProfile {
    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidProfile("profile has no atoms".into()));
        }
        for &(loc, w) in &atoms {
            if !loc.is_finite() {
                return Err(Error::InvalidProfile(format!("non-finite location {loc}")));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidProfile(format!(
                    "weight {w} at {loc} is not a positive real"
                )));
            }
        }
        let mut sorted = atoms;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<ProfileAtom> = Vec::with_capacity(sorted.len());
        for (loc, w) in sorted {
            match merged.last_mut() {
                Some(last) if (loc - last.location).abs() <= LOCATION_MERGE_TOL => {
                    last.weight += w;
                }
                _ => merged.push(ProfileAtom { location: loc, weight: w }),
            }
        }
        let total: f64 = merged.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidProfile(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms: merged })
    }

    /// Empirical distribution of a sample: with `n_bins == 0` the atoms sit
    /// at the (merged) sample values with uniform weight, otherwise at the
    /// centers of an equal-width histogram over `[min, max]`. Also returns
    /// the atom index of every input value.
    pub fn from_values(values: &[f64], n_bins: usize) -> Result<(Self, Vec<usize>)> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("non-finite return value {v}")));
        }
        let n = values.len();
        let uniform = 1.0 / n as f64;
        if n_bins == 0 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
            let mut atoms: Vec<ProfileAtom> = Vec::new();
            let mut assignment = vec![0usize; n];
            for &i in &order {
                let v = values[i];
                match atoms.last_mut() {
                    Some(last) if (v - last.location).abs() <= LOCATION_MERGE_TOL => {
                        last.weight += uniform;
                    }
                    _ => atoms.push(ProfileAtom { location: v, weight: uniform }),
                }
                assignment[i] = atoms.len() - 1;
            }
            return Ok((Self { atoms }, assignment));
        }

        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            // Degenerate range: a single atom carries everything.
            return Ok((
                Self {
                    atoms: vec![ProfileAtom { location: min, weight: 1.0 }],
                },
                vec![0; n],
            ));
        }
        let width = (max - min) / n_bins as f64;
        let bin_of = |v: f64| -> usize { (((v - min) / width) as usize).min(n_bins - 1) };
        let mut counts = vec![0usize; n_bins];
        for &v in values {
            counts[bin_of(v)] += 1;
        }
        // Empty bins carry no atom; remap to the surviving indices.
        let mut atom_of_bin = vec![usize::MAX; n_bins];
        let mut atoms = Vec::new();
        for (b, &c) in counts.iter().enumerate() {
            if c > 0 {
                atom_of_bin[b] = atoms.len();
                atoms.push(ProfileAtom {
                    location: min + (b as f64 + 0.5) * width,
                    weight: c as f64 * uniform,
                });
            }
        }
        let assignment = values.iter().map(|&v| atom_of_bin[bin_of(v)]).collect();
        Ok((Self { atoms }, assignment))
    }

    pub fn atoms(&self) -> &[ProfileAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.location)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.weight)
    }

    /// Distance between the outermost atoms.
    pub fn spread(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].location - self.atoms[0].location
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.location).sum()
    }

    pub fn std(&self) -> f64 {
        let mu = self.mean();
        self.atoms
            .iter()
            .map(|a| a.weight * (a.location - mu).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Applies a monotone transform to the atom locations, revalidating the
    /// result (weights are untouched).
    pub fn map_locations<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        Self::from_atoms(self.atoms.iter().map(|a| (f(a.location), a.weight)).collect())
    }

    /// Total-variation distance, matching atoms whose locations agree within
    /// `loc_tol`.
    pub fn total_variation(&self, other: &Self, loc_tol: f64) -> f64 {
        let mut diff = 0.0;
        let (mut i, mut j) = (0, 0);
        let a = &self.atoms;
        let b = &other.atoms;
        while i < a.len() && j < b.len() {
            if (a[i].location - b[j].location).abs() <= loc_tol {
                diff += (a[i].weight - b[j].weight).abs();
                i += 1;
                j += 1;
            } else if a[i].location < b[j].location {
                diff += a[i].weight;
                i += 1;
            } else {
                diff += b[j].weight;
                j += 1;
            }
        }
        diff += a[i..].iter().map(|x| x.weight).sum::<f64>();
        diff += b[j..].iter().map(|x| x.weight).sum::<f64>();
        diff / 2.0
    }
}

/// Empirical return distribution over the suffix dataset. Every suffix has
/// equal weight, which realizes the length-rescaled future measure: longer
/// demonstrations contribute proportionally more suffixes.
pub fn empirical_return_distribution<R: Fn(usize) -> f64>(
    reward: R,
    aug: &AugmentedDataset,
    gamma: f64,
    n_bins: usize,
) -> Result<OptimalityProfile> {
    let returns: Vec<f64> = aug
        .entries
        .iter()
        .map(|e| traj_return(&reward, &e.suffix, gamma))
        .collect();
    Ok(OptimalityProfile::from_values(&returns, n_bins)?.0)
}

/// Rescales trajectory probabilities proportionally to trajectory length:
/// p'(s) = l(s) p(s) / sum l(s') p(s').
pub fn rescaled_traj_distribution(
    trajs_with_probs: &[(Trajectory, f64)],
) -> Result<Vec<(Trajectory, f64)>> {
    let norm = length_weighted_mass(trajs_with_probs)?;
    Ok(trajs_with_probs
        .iter()
        .map(|(t, p)| (t.clone(), t.len() as f64 * p / norm))
        .collect())
}

fn length_weighted_mass(trajs_with_probs: &[(Trajectory, f64)]) -> Result<f64> {
    if trajs_with_probs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    let mut norm = 0.0;
    for (t, p) in trajs_with_probs {
        if !p.is_finite() || *p < 0.0 {
            return Err(Error::InvalidProfile(format!("trajectory probability {p} invalid")));
        }
        total += p;
        norm += t.len() as f64 * p;
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidProfile(format!(
            "trajectory probabilities sum to {total}, not 1"
        )));
    }
    Ok(norm)
}

/// A distribution over trajectories with a marked time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedTrajectoryDist {
    /// Entries ((trajectory, step), probability); steps stay below the length.
    pub entries: Vec<((Trajectory, usize), f64)>,
}

impl MarkedTrajectoryDist {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }
}

/// The marked-step distribution: mass p(s) / sum l(s') p(s') on every
/// (trajectory, step) pair. Equivalent to rescaling by length and then
/// drawing the step uniformly.
pub fn marked_trajectory_dist(
    trajs_with_probs: &[(Trajectory, f64)],
) -> Result<MarkedTrajectoryDist> {
    let norm = length_weighted_mass(trajs_with_probs)?;
    let mut entries = Vec::new();
    for (t, p) in trajs_with_probs {
        let mass = p / norm;
        if mass == 0.0 {
            continue;
        }
        for step in 0..t.len() {
            entries.push(((t.clone(), step), mass));
        }
    }
    Ok(MarkedTrajectoryDist { entries })
}

/// State occupancy induced by a trajectory distribution: the push-forward of
/// the marked-step distribution through (s, t) -> s_t.
pub fn state_occupancy(
    trajs_with_probs: &[(Trajectory, f64)],
    n_states: usize,
) -> Result<Vec<f64>> {
    let norm = length_weighted_mass(trajs_with_probs)?;
    let mut occ = vec![0.0; n_states];
    for (t, p) in trajs_with_probs {
        for &s in &t.states {
            if s >= n_states {
                return Err(Error::InvalidTrajectory(format!("state {s} out of range")));
            }
            occ[s] += p / norm;
        }
    }
    Ok(occ)
}

/// Empirical state occupancy of a dataset: every state visit counts once.
pub fn empirical_state_occupancy(dataset: &[Trajectory], n_states: usize) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let uniform: Vec<(Trajectory, f64)> = dataset
        .iter()
        .map(|t| (t.clone(), 1.0 / dataset.len() as f64))
        .collect();
    state_occupancy(&uniform, n_states)
}

/// The reward distribution: push-forward of a state occupancy through the
/// reward function.
pub fn reward_distribution<R: Fn(usize) -> f64>(
    occupancy: &[f64],
    reward: R,
) -> Result<OptimalityProfile> {
    let atoms: Vec<(f64, f64)> = occupancy
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(s, &w)| (reward(s), w))
        .collect();
    OptimalityProfile::from_atoms(atoms)
}

/// Exact return distribution of an enumerable MDP under a policy: the
/// push-forward of the future measure through the discounted return. Atoms
/// at coinciding return values are merged.
pub fn exact_return_distribution<R: Fn(usize) -> f64>(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    reward: R,
    gamma: f64,
) -> Result<OptimalityProfile> {
    let trajs = enumerate_trajectories(mdp, policy, 0.0)?;
    let marked = marked_trajectory_dist(&trajs)?;
    let atoms: Vec<(f64, f64)> = marked
        .entries
        .iter()
        .map(|((t, step), p)| {
            let suffix = t.suffix(*step).expect("marked step below length");
            (traj_return(&reward, &suffix, gamma), *p)
        })
        .collect();
    OptimalityProfile::from_atoms(atoms)
}
