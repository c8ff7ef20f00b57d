//! Finite MDPs, stochastic policies, trajectory sampling and enumeration,
//! and value-iteration policy optimization.
//!
//! States are integer indices. Trajectories follow the cut-off convention:
//! a rollout stops at the first terminal state or after the step horizon,
//! whichever comes first, so a trajectory holds between 1 and `horizon + 1`
//! states and no state before the last one is terminal.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum / distribution tolerance used by the validators.
pub const PROB_TOL: f64 = 1e-12;

/// Default node budget for exhaustive trajectory enumeration.
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

/// Upper bound on step horizons; rejects nonsensical inputs before they can
/// overflow `horizon + 1` arithmetic or stall samplers.
pub const MAX_HORIZON: usize = 1_000_000;

const VALUE_ITER_TOL: f64 = 1e-9;
const VALUE_ITER_MAX: usize = 100_000;

/// A finite MDP with a state-dependent ground-truth reward and a step horizon.
///
/// Terminal states are absorbing: `transition[(s, a, s)] == 1.0` exactly for
/// every action, so a trajectory that enters one stays there forever and is
/// cut off at the entry step.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Array3<f64>,
    initial_dist: Array1<f64>,
    gt_reward: Array1<f64>,
    terminals: Vec<bool>,
    horizon: usize,
}

impl TabularMdp {
    pub fn new(
        transition: Array3<f64>,
        initial_dist: Array1<f64>,
        gt_reward: Array1<f64>,
        terminals: &[usize],
        horizon: usize,
    ) -> Result<Self> {
        let (n_states, n_actions, n_next) = transition.dim();
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("state and action counts must be positive".into()));
        }
        if n_next != n_states {
            return Err(Error::InvalidMdp(format!(
                "transition tensor is {n_states}x{n_actions}x{n_next}, expected last dim {n_states}"
            )));
        }
        if initial_dist.len() != n_states || gt_reward.len() != n_states {
            return Err(Error::InvalidMdp(
                "initial_dist and gt_reward must have one entry per state".into(),
            ));
        }
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(Error::InvalidMdp(format!(
                "horizon {horizon} outside 1..={MAX_HORIZON}"
            )));
        }
        let mut term_flags = vec![false; n_states];
        for &t in terminals {
            if t >= n_states {
                return Err(Error::InvalidMdp(format!("terminal state {t} out of range")));
            }
            term_flags[t] = true;
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = transition.slice(ndarray::s![s, a, ..]);
                let mut sum = 0.0;
                for &p in row.iter() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::InvalidMdp(format!(
                            "transition({s},{a}) has a negative or non-finite entry"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "transition({s},{a}) sums to {sum}, not 1"
                    )));
                }
                if term_flags[s] && row[s] != 1.0 {
                    return Err(Error::InvalidMdp(format!(
                        "terminal state {s} is not absorbing under action {a}"
                    )));
                }
            }
        }
        let mut p0_sum = 0.0;
        for &p in initial_dist.iter() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidMdp("initial_dist has a negative or non-finite entry".into()));
            }
            p0_sum += p;
        }
        if (p0_sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidMdp(format!("initial_dist sums to {p0_sum}, not 1")));
        }
        if gt_reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp("gt_reward has a non-finite entry".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            initial_dist,
            gt_reward,
            terminals: term_flags,
            horizon,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn initial_dist(&self) -> &Array1<f64> {
        &self.initial_dist
    }

    pub fn gt_reward(&self) -> &Array1<f64> {
        &self.gt_reward
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminals[state]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.terminals[s]).collect()
    }

    /// Policy-marginalized state transition kernel M(s' | s) = sum_a pi(a|s) T(s,a,s').
    pub fn state_kernel(&self, policy: &TabularPolicy) -> Result<Array2<f64>> {
        self.check_policy(policy)?;
        let mut kernel = Array2::zeros((self.n_states, self.n_states));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let pa = policy.probs[(s, a)];
                if pa == 0.0 {
                    continue;
                }
                for s2 in 0..self.n_states {
                    kernel[(s, s2)] += pa * self.transition[(s, a, s2)];
                }
            }
        }
        Ok(kernel)
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::InvalidPolicy(format!(
                "policy is {}x{}, mdp is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// A stationary stochastic policy: one distribution over actions per state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: Array2<f64>,
}

impl TabularPolicy {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for (s, row) in probs.outer_iter().enumerate() {
            let mut sum = 0.0;
            for &p in row.iter() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidPolicy(format!(
                        "policy row {s} has a negative or non-finite entry"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!("policy row {s} sums to {sum}, not 1")));
            }
        }
        Ok(Self { probs })
    }

    /// Deterministic policy from one action index per state.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidPolicy(format!("action {a} out of range in state {s}")));
            }
            probs[(s, a)] = 1.0;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    /// Mixes a deterministic policy with uniform exploration:
    /// with probability `epsilon` the action is uniformly random.
    pub fn epsilon_greedy(greedy: &TabularPolicy, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidPolicy(format!("epsilon {epsilon} outside [0,1]")));
        }
        let n_actions = greedy.n_actions();
        let mut probs = greedy.probs.clone() * (1.0 - epsilon);
        probs += epsilon / n_actions as f64;
        Self::new(probs)
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    /// The greedy action per state (highest probability, lowest index on ties).
    pub fn greedy_actions(&self) -> Vec<usize> {
        self.probs
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                let mut best_p = row[0];
                for (a, &p) in row.iter().enumerate().skip(1) {
                    if p > best_p {
                        best = a;
                        best_p = p;
                    }
                }
                best
            })
            .collect()
    }
}

/// A finite state sequence produced by the cut-off map, with the actions that
/// generated it when they are known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, actions: Option<Vec<usize>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidTrajectory("empty state sequence".into()));
        }
        if let Some(acts) = &actions {
            if acts.len() + 1 != states.len() {
                return Err(Error::InvalidTrajectory(format!(
                    "{} actions do not match {} states",
                    acts.len(),
                    states.len()
                )));
            }
        }
        Ok(Self { states, actions })
    }

    /// Number of states, written ell(s) in the glossary.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The suffix starting at `start`, dropping earlier states and actions.
    pub fn suffix(&self, start: usize) -> Result<Trajectory> {
        if start >= self.len() {
            return Err(Error::InvalidTrajectory(format!(
                "suffix start {start} out of range for length {}",
                self.len()
            )));
        }
        Ok(Trajectory {
            states: self.states[start..].to_vec(),
            actions: self.actions.as_ref().map(|a| a[start..].to_vec()),
        })
    }

    /// Checks the cut-off invariant against an MDP: states in range, length
    /// within `horizon + 1`, and no interior terminal state.
    pub fn check_cut_off(&self, mdp: &TabularMdp) -> Result<()> {
        if self.len() > mdp.horizon() + 1 {
            return Err(Error::InvalidTrajectory(format!(
                "length {} exceeds horizon + 1 = {}",
                self.len(),
                mdp.horizon() + 1
            )));
        }
        for (t, &s) in self.states.iter().enumerate() {
            if s >= mdp.n_states() {
                return Err(Error::InvalidTrajectory(format!("state {s} out of range")));
            }
            if t + 1 < self.len() && mdp.is_terminal(s) {
                return Err(Error::InvalidTrajectory(format!(
                    "terminal state {s} at interior step {t}"
                )));
            }
        }
        if let Some(acts) = &self.actions {
            if let Some(&a) = acts.iter().find(|&&a| a >= mdp.n_actions()) {
                return Err(Error::InvalidTrajectory(format!("action {a} out of range")));
            }
        }
        Ok(())
    }
}

/// A cell address in a gridworld, row-major with row 0 at the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

/// A terminal cell together with the reward collected on entering it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalCell {
    pub row: usize,
    pub col: usize,
    pub reward: f64,
}

/// Declarative description of a gridworld MDP with 4-neighbor moves.
///
/// Moves that would leave the grid keep the agent in place. With probability
/// `slip_prob` the chosen action is replaced by a uniformly random one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub goal_cells: Vec<TerminalCell>,
    pub fail_cells: Vec<TerminalCell>,
    pub step_reward: f64,
    pub slip_prob: f64,
    pub start_cells: Vec<GridCell>,
    pub horizon: usize,
}

/// Grid actions in index order: up, right, down, left.
pub const GRID_ACTIONS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl GridworldSpec {
    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    /// Row-major cell index.
    pub fn index_of(&self, cell: GridCell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_of(&self, index: usize) -> GridCell {
        GridCell {
            row: index / self.width,
            col: index % self.width,
        }
    }

    fn check_cell(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.height || col >= self.width {
            return Err(Error::InvalidSpec(format!(
                "cell ({row},{col}) outside {}x{} grid",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("grid dimensions must be positive".into()));
        }
        if self.width.checked_mul(self.height).is_none() {
            return Err(Error::InvalidSpec("grid dimensions overflow".into()));
        }
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return Err(Error::InvalidSpec(format!("slip_prob {} outside [0,1]", self.slip_prob)));
        }
        if !self.step_reward.is_finite() {
            return Err(Error::InvalidSpec("step_reward must be finite".into()));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(Error::InvalidSpec(format!(
                "horizon {} outside 1..={MAX_HORIZON}",
                self.horizon
            )));
        }
        if self.start_cells.is_empty() {
            return Err(Error::InvalidSpec("start cell set is empty".into()));
        }
        let mut seen = vec![false; self.n_states()];
        for tc in self.goal_cells.iter().chain(self.fail_cells.iter()) {
            self.check_cell(tc.row, tc.col)?;
            if !tc.reward.is_finite() {
                return Err(Error::InvalidSpec("terminal reward must be finite".into()));
            }
            let idx = tc.row * self.width + tc.col;
            if seen[idx] {
                return Err(Error::InvalidSpec(format!(
                    "cell ({},{}) listed as terminal more than once",
                    tc.row, tc.col
                )));
            }
            seen[idx] = true;
        }
        for c in &self.start_cells {
            self.check_cell(c.row, c.col)?;
            if seen[self.index_of(*c)] {
                return Err(Error::InvalidSpec(format!(
                    "start cell ({},{}) is terminal",
                    c.row, c.col
                )));
            }
        }
        Ok(())
    }
}

/// Builds the tabular MDP described by a gridworld spec.
pub fn build_gridworld(spec: &GridworldSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.n_states();
    let n_actions = GRID_ACTIONS.len();

    let mut reward = Array1::from_elem(n, spec.step_reward);
    let mut terminals = Vec::new();
    for tc in spec.goal_cells.iter().chain(spec.fail_cells.iter()) {
        let idx = tc.row * spec.width + tc.col;
        reward[idx] = tc.reward;
        terminals.push(idx);
    }
    let term_flags = {
        let mut flags = vec![false; n];
        for &t in &terminals {
            flags[t] = true;
        }
        flags
    };

    // Destination of an intended move, staying in place at the walls.
    let dest = |s: usize, a: usize| -> usize {
        let cell = spec.cell_of(s);
        let (dr, dc) = GRID_ACTIONS[a];
        let row = cell.row as isize + dr;
        let col = cell.col as isize + dc;
        if row < 0 || col < 0 || row as usize >= spec.height || col as usize >= spec.width {
            s
        } else {
            spec.index_of(GridCell {
                row: row as usize,
                col: col as usize,
            })
        }
    };

    let mut transition = Array3::zeros((n, n_actions, n));
    for s in 0..n {
        if term_flags[s] {
            for a in 0..n_actions {
                transition[(s, a, s)] = 1.0;
            }
            continue;
        }
        for a in 0..n_actions {
            transition[(s, a, dest(s, a))] += 1.0 - spec.slip_prob;
            for slip in 0..n_actions {
                transition[(s, a, dest(s, slip))] += spec.slip_prob / n_actions as f64;
            }
        }
    }

    let mut initial = Array1::zeros(n);
    let w = 1.0 / spec.start_cells.len() as f64;
    for c in &spec.start_cells {
        initial[spec.index_of(*c)] += w;
    }

    TabularMdp::new(transition, initial, reward, &terminals, spec.horizon)
}

/// Samples one cut-off trajectory. Deterministic for a given seed.
pub fn sample_trajectory(mdp: &TabularMdp, policy: &TabularPolicy, seed: u64) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = draw_index(&mut rng, mdp.initial_dist().iter().copied());
    let mut states = vec![state];
    let mut actions = Vec::new();
    for _ in 0..mdp.horizon() {
        if mdp.is_terminal(state) {
            break;
        }
        let action = draw_index(&mut rng, policy.probs().row(state).iter().copied());
        let next = draw_index(
            &mut rng,
            mdp.transition().slice(ndarray::s![state, action, ..]).iter().copied(),
        );
        actions.push(action);
        states.push(next);
        state = next;
    }
    Ok(Trajectory {
        states,
        actions: Some(actions),
    })
}

/// Draws an index from an unnormalized-but-valid distribution iterator.
fn draw_index(rng: &mut impl Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave acc marginally below 1; fall back to the last index.
    last
}

/// Exhaustively enumerates cut-off trajectories and their probabilities under
/// the action-marginalized kernel. Branches with probability below
/// `prob_floor` are pruned. Intended for small MDPs; traversal aborts once
/// `node_budget` tree nodes have been expanded.
pub fn enumerate_trajectories_with_budget(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    prob_floor: f64,
    node_budget: usize,
) -> Result<Vec<(Trajectory, f64)>> {
    if prob_floor < 0.0 {
        return Err(Error::InvalidConfig(format!("prob_floor {prob_floor} is negative")));
    }
    let kernel = mdp.state_kernel(policy)?;
    let mut out = Vec::new();
    let mut visited = 0usize;

    struct Dfs<'a> {
        mdp: &'a TabularMdp,
        kernel: &'a Array2<f64>,
        prob_floor: f64,
        node_budget: usize,
    }

    impl Dfs<'_> {
        fn go(
            &self,
            stack: &mut Vec<usize>,
            prob: f64,
            visited: &mut usize,
            out: &mut Vec<(Trajectory, f64)>,
        ) -> Result<()> {
            *visited += 1;
            if *visited > self.node_budget {
                return Err(Error::EnumerationBudget {
                    budget: self.node_budget,
                });
            }
            let state = *stack.last().expect("stack is never empty");
            if self.mdp.is_terminal(state) || stack.len() == self.mdp.horizon() + 1 {
                out.push((Trajectory { states: stack.clone(), actions: None }, prob));
                return Ok(());
            }
            for next in 0..self.mdp.n_states() {
                let p = prob * self.kernel[(state, next)];
                if p <= 0.0 || p < self.prob_floor {
                    continue;
                }
                stack.push(next);
                self.go(stack, p, visited, out)?;
                stack.pop();
            }
            Ok(())
        }
    }

    let dfs = Dfs {
        mdp,
        kernel: &kernel,
        prob_floor,
        node_budget,
    };
    for s0 in 0..mdp.n_states() {
        let p0 = mdp.initial_dist()[s0];
        if p0 <= 0.0 || p0 < prob_floor {
            continue;
        }
        let mut stack = vec![s0];
        dfs.go(&mut stack, p0, &mut visited, &mut out)?;
    }
    Ok(out)
}

/// [`enumerate_trajectories_with_budget`] with the default node budget.
pub fn enumerate_trajectories(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    prob_floor: f64,
) -> Result<Vec<(Trajectory, f64)>> {
    enumerate_trajectories_with_budget(mdp, policy, prob_floor, DEFAULT_NODE_BUDGET)
}

/// Solves for the optimal policy under an arbitrary state reward.
///
/// The Bellman operator used here sets V = 0 at terminal states so that the
/// terminal reward is collected exactly once, on entry. Returns the greedy
/// deterministic policy (ties toward the lowest action index) and the value
/// vector, with sup-norm Bellman residual below 1e-9.
pub fn value_iteration(
    mdp: &TabularMdp,
    reward: &[f64],
    gamma: f64,
) -> Result<(TabularPolicy, Vec<f64>)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0,1)")));
    }
    if reward.len() != mdp.n_states() {
        return Err(Error::InvalidConfig(format!(
            "reward has {} entries for {} states",
            reward.len(),
            mdp.n_states()
        )));
    }
    let n = mdp.n_states();
    let backup = |values: &[f64], greedy: Option<&mut Vec<usize>>| -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut actions = vec![0usize; n];
        for s in 0..n {
            if mdp.is_terminal(s) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..mdp.n_actions() {
                let mut q = 0.0;
                for s2 in 0..n {
                    let p = mdp.transition()[(s, a, s2)];
                    if p > 0.0 {
                        q += p * (reward[s2] + gamma * values[s2]);
                    }
                }
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            out[s] = best;
            actions[s] = best_a;
        }
        if let Some(g) = greedy {
            *g = actions;
        }
        out
    };

    let mut values = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..VALUE_ITER_MAX {
        let next = backup(&values, None);
        residual = values
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if residual < VALUE_ITER_TOL {
            let mut actions = vec![0usize; n];
            backup(&values, Some(&mut actions));
            let policy = TabularPolicy::deterministic(&actions, mdp.n_actions())?;
            return Ok((policy, values));
        }
    }
    Err(Error::NonConvergence {
        iters: VALUE_ITER_MAX,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    /// 1x1 grid: a single non-terminal state.
    fn single_state_spec(horizon: usize) -> GridworldSpec {
        GridworldSpec {
            width: 1,
            height: 1,
            goal_cells: vec![],
            fail_cells: vec![],
            step_reward: 0.5,
            slip_prob: 0.0,
            start_cells: vec![GridCell { row: 0, col: 0 }],
            horizon,
        }
    }

    #[test]
    fn figure1_corridor_has_two_terminals() {
        let spec = presets::figure1_corridor();
        let mdp = build_gridworld(&spec).unwrap();
        assert_eq!(mdp.terminal_states().len(), 2);
        let goal = spec.index_of(GridCell { row: 0, col: spec.width - 1 });
        let fail = spec.index_of(GridCell { row: 0, col: 0 });
        assert_eq!(mdp.gt_reward()[goal], 10.0);
        assert_eq!(mdp.gt_reward()[fail], -10.0);
    }

    #[test]
    fn single_state_trajectories_run_to_horizon() {
        let mdp = build_gridworld(&single_state_spec(4)).unwrap();
        let policy = TabularPolicy::uniform(1, 4);
        let traj = sample_trajectory(&mdp, &policy, 7).unwrap();
        assert_eq!(traj.states, vec![0, 0, 0, 0, 0]);
    }

    #[test]
    fn build_rejects_overlapping_terminals() {
        let mut spec = presets::figure1_corridor();
        spec.fail_cells.push(TerminalCell {
            row: 0,
            col: spec.width - 1,
            reward: -1.0,
        });
        assert!(matches!(build_gridworld(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn build_rejects_empty_start_set() {
        let mut spec = presets::figure1_corridor();
        spec.start_cells.clear();
        assert!(matches!(build_gridworld(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn deterministic_corridor_walk_is_seed_independent() {
        let mut spec = presets::figure1_corridor();
        spec.slip_prob = 0.0;
        let mdp = build_gridworld(&spec).unwrap();
        // Always move right (action 1) toward the goal.
        let policy = TabularPolicy::deterministic(&vec![1; mdp.n_states()], 4).unwrap();
        let expected = sample_trajectory(&mdp, &policy, 0).unwrap();
        for seed in 1..20 {
            assert_eq!(sample_trajectory(&mdp, &policy, seed).unwrap(), expected);
        }
        let start = spec.index_of(spec.start_cells[0]);
        let goal = spec.index_of(GridCell { row: 0, col: spec.width - 1 });
        assert_eq!(expected.states.first(), Some(&start));
        assert_eq!(expected.states.last(), Some(&goal));
        assert_eq!(expected.len(), spec.width - spec.start_cells[0].col);
    }

    #[test]
    fn two_corridor_frequencies_match_appendix() {
        let (mdp, policy) = presets::two_corridor();
        let mut vertical = 0usize;
        let n = 10_000;
        for seed in 0..n {
            let traj = sample_trajectory(&mdp, &policy, seed as u64).unwrap();
            if traj.len() == 2 {
                vertical += 1;
            } else {
                assert_eq!(traj.len(), 8);
            }
        }
        let freq = vertical as f64 / n as f64;
        assert!((freq - 0.8).abs() < 0.02, "vertical frequency {freq}");
    }

    #[test]
    fn two_corridor_enumeration_is_exact() {
        let (mdp, policy) = presets::two_corridor();
        let mut trajs = enumerate_trajectories(&mdp, &policy, 0.0).unwrap();
        trajs.sort_by_key(|(t, _)| t.len());
        assert_eq!(trajs.len(), 2);
        assert_eq!(trajs[0].0.len(), 2);
        assert!((trajs[0].1 - 0.8).abs() < 1e-12);
        assert_eq!(trajs[1].0.len(), 8);
        assert!((trajs[1].1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn enumeration_of_deterministic_path_is_a_point_mass() {
        let mut spec = presets::figure1_corridor();
        spec.slip_prob = 0.0;
        let mdp = build_gridworld(&spec).unwrap();
        let policy = TabularPolicy::deterministic(&vec![1; mdp.n_states()], 4).unwrap();
        let trajs = enumerate_trajectories(&mdp, &policy, 0.0).unwrap();
        assert_eq!(trajs.len(), 1);
        assert!((trajs[0].1 - 1.0).abs() < 1e-12);
    }

    /// Two states, two actions, transitions ignore the action and flip a fair
    /// coin; no terminals. Expanded by hand over the four branches.
    fn fair_coin_mdp(horizon: usize) -> TabularMdp {
        let mut transition = Array3::zeros((2, 2, 2));
        for s in 0..2 {
            for a in 0..2 {
                transition[(s, a, 0)] = 0.5;
                transition[(s, a, 1)] = 0.5;
            }
        }
        TabularMdp::new(
            transition,
            Array1::from(vec![1.0, 0.0]),
            Array1::from(vec![0.0, 1.0]),
            &[],
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn fair_coin_enumeration_has_four_equiprobable_branches() {
        let mdp = fair_coin_mdp(2);
        let trajs = enumerate_trajectories(&mdp, &TabularPolicy::uniform(2, 2), 0.0).unwrap();
        assert_eq!(trajs.len(), 4);
        for (traj, p) in &trajs {
            assert_eq!(traj.len(), 3);
            assert!((p - 0.25).abs() < 1e-12);
        }
        let total: f64 = trajs.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_respects_node_budget() {
        let mdp = fair_coin_mdp(30);
        let err = enumerate_trajectories_with_budget(&mdp, &TabularPolicy::uniform(2, 2), 0.0, 1000);
        assert!(matches!(err, Err(Error::EnumerationBudget { budget: 1000 })));
    }

    #[test]
    fn empirical_frequencies_match_enumeration_chi_squared() {
        // Small stochastic world with <= 8 trajectories.
        let (mdp, policy) = presets::two_corridor();
        let trajs = enumerate_trajectories(&mdp, &policy, 0.0).unwrap();
        assert!(trajs.len() <= 8);
        let n = 10_000usize;
        let mut counts = vec![0usize; trajs.len()];
        for seed in 0..n {
            let sample = sample_trajectory(&mdp, &policy, seed as u64).unwrap();
            let idx = trajs
                .iter()
                .position(|(t, _)| t.states == sample.states)
                .expect("sampled trajectory must be in the enumerated support");
            counts[idx] += 1;
        }
        let chi2: f64 = trajs
            .iter()
            .zip(&counts)
            .map(|((_, p), &c)| {
                let expected = p * n as f64;
                (c as f64 - expected).powi(2) / expected
            })
            .sum();
        // 99.9% quantile for df = 1 is 10.8; stay generous but meaningful.
        assert!(chi2 < 10.8, "chi-squared statistic {chi2}");
    }

    #[test]
    fn value_iteration_zero_reward_gives_zero_values() {
        let mdp = build_gridworld(&presets::figure1_corridor()).unwrap();
        let (_, values) = value_iteration(&mdp, &vec![0.0; mdp.n_states()], 0.9).unwrap();
        assert!(values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn value_iteration_moves_toward_goal_on_corridor() {
        let spec = presets::figure1_corridor();
        let mdp = build_gridworld(&spec).unwrap();
        let gt: Vec<f64> = mdp.gt_reward().to_vec();
        let (policy, values) = value_iteration(&mdp, &gt, 0.9).unwrap();
        let actions = policy.greedy_actions();
        for col in 1..spec.width - 1 {
            let s = spec.index_of(GridCell { row: 0, col });
            assert_eq!(actions[s], 1, "state {s} should move right");
        }
        // Strictly better than every policy that runs into the fail state,
        // checked by brute force over all deterministic left/right policies
        // on the corridor.
        let start = spec.index_of(spec.start_cells[0]);
        let mut worse = 0;
        let n = mdp.n_states();
        for mask in 0u32..(1 << n) {
            let acts: Vec<usize> = (0..n).map(|s| if mask >> s & 1 == 1 { 1 } else { 3 }).collect();
            let cand = TabularPolicy::deterministic(&acts, 4).unwrap();
            let v = policy_value(&mdp, &cand, &gt, 0.9);
            assert!(v[start] <= values[start] + 1e-7);
            if v[start] < values[start] - 1e-7 {
                worse += 1;
            }
        }
        assert!(worse > 0);
    }

    /// Policy evaluation by linear fixed-point iteration, for the brute-force check.
    fn policy_value(mdp: &TabularMdp, policy: &TabularPolicy, reward: &[f64], gamma: f64) -> Vec<f64> {
        let kernel = mdp.state_kernel(policy).unwrap();
        let n = mdp.n_states();
        let mut v = vec![0.0; n];
        for _ in 0..10_000 {
            let mut next = vec![0.0; n];
            let mut delta = 0.0f64;
            for s in 0..n {
                if mdp.is_terminal(s) {
                    continue;
                }
                let mut acc = 0.0;
                for s2 in 0..n {
                    let p = kernel[(s, s2)];
                    if p > 0.0 {
                        acc += p * (reward[s2] + gamma * v[s2]);
                    }
                }
                next[s] = acc;
                delta = delta.max((next[s] - v[s]).abs());
            }
            v = next;
            if delta < 1e-12 {
                break;
            }
        }
        v
    }

    #[test]
    fn value_iteration_gamma_zero_is_one_step_greedy() {
        let spec = presets::figure1_corridor();
        let mdp = build_gridworld(&spec).unwrap();
        let gt: Vec<f64> = mdp.gt_reward().to_vec();
        let (policy, _) = value_iteration(&mdp, &gt, 0.0).unwrap();
        let actions = policy.greedy_actions();
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..4 {
                let q: f64 = (0..mdp.n_states())
                    .map(|s2| mdp.transition()[(s, a, s2)] * gt[s2])
                    .sum();
                best = best.max(q);
            }
            let chosen: f64 = (0..mdp.n_states())
                .map(|s2| mdp.transition()[(s, actions[s], s2)] * gt[s2])
                .sum();
            assert!((chosen - best).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_transition_rows_are_rejected() {
        let mut transition = Array3::zeros((2, 1, 2));
        transition[(0, 0, 0)] = 0.6;
        transition[(0, 0, 1)] = 0.5;
        transition[(1, 0, 1)] = 1.0;
        let err = TabularMdp::new(
            transition,
            Array1::from(vec![1.0, 0.0]),
            Array1::from(vec![0.0, 0.0]),
            &[],
            3,
        );
        assert!(matches!(err, Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn non_absorbing_terminal_is_rejected() {
        let mut transition = Array3::zeros((2, 1, 2));
        transition[(0, 0, 1)] = 1.0;
        transition[(1, 0, 0)] = 1.0;
        let err = TabularMdp::new(
            transition,
            Array1::from(vec![1.0, 0.0]),
            Array1::from(vec![0.0, 0.0]),
            &[1],
            3,
        );
        assert!(matches!(err, Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn sampled_trajectories_satisfy_cut_off() {
        let spec = presets::figure1_corridor();
        let mdp = build_gridworld(&spec).unwrap();
        let policy = TabularPolicy::uniform(mdp.n_states(), 4);
        for seed in 0..200 {
            let traj = sample_trajectory(&mdp, &policy, seed).unwrap();
            traj.check_cut_off(&mdp).unwrap();
        }
    }
}
