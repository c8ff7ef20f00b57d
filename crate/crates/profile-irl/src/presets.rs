//! Ready-made gridworld instances used by the CLI, the tests, and the
//! evaluation benchmarks.

use ndarray::Array2;

use crate::mdp::{
    build_gridworld, GridCell, GridworldSpec, TabularMdp, TabularPolicy, TerminalCell,
};

/// A 1 x 12 corridor with a -10 terminal at the left end, a +10 terminal at
/// the right end, and reward ~0 everywhere else. Rollouts start from the
/// middle, so both outcomes are reachable and reward signal is sparse.
pub fn figure1_corridor() -> GridworldSpec {
    GridworldSpec {
        width: 12,
        height: 1,
        goal_cells: vec![TerminalCell { row: 0, col: 11, reward: 10.0 }],
        fail_cells: vec![TerminalCell { row: 0, col: 0, reward: -10.0 }],
        step_reward: 0.0,
        slip_prob: 0.1,
        start_cells: vec![GridCell { row: 0, col: 5 }],
        horizon: 40,
    }
}

/// The two-corridor world: from the start corner the only choices are a
/// vertical arm of length 2 and a horizontal arm of length 8, both ending in
/// a terminal state.
pub fn two_corridor_spec() -> GridworldSpec {
    GridworldSpec {
        width: 8,
        height: 2,
        goal_cells: vec![TerminalCell { row: 1, col: 7, reward: 10.0 }],
        fail_cells: vec![TerminalCell { row: 0, col: 0, reward: -10.0 }],
        step_reward: 0.0,
        slip_prob: 0.0,
        start_cells: vec![GridCell { row: 1, col: 0 }],
        horizon: 10,
    }
}

/// The two-corridor world together with the reference policy: from the start
/// state it moves up with probability 0.8 and right with probability 0.2,
/// and it always moves right elsewhere. The two maximal trajectories have
/// probability 0.8 (length 2) and 0.2 (length 8).
pub fn two_corridor() -> (TabularMdp, TabularPolicy) {
    let spec = two_corridor_spec();
    let mdp = build_gridworld(&spec).expect("two-corridor spec is valid");
    let start = spec.index_of(spec.start_cells[0]);
    let mut probs = Array2::zeros((mdp.n_states(), mdp.n_actions()));
    for s in 0..mdp.n_states() {
        if s == start {
            probs[(s, 0)] = 0.8; // up, into the short arm
            probs[(s, 1)] = 0.2; // right, into the long arm
        } else {
            probs[(s, 1)] = 1.0;
        }
    }
    let policy = TabularPolicy::new(probs).expect("rows sum to one");
    (mdp, policy)
}

/// The 10 x 10 evaluation benchmark: +10 goal in the bottom-right corner,
/// -10 fail in the top-right corner, a small per-step penalty, deterministic
/// moves. Policy quality maps cleanly onto episodic return: the shortest
/// goal-reaching path scores 8.2 and every detour costs 0.1.
pub fn benchmark_grid10() -> GridworldSpec {
    GridworldSpec {
        width: 10,
        height: 10,
        goal_cells: vec![TerminalCell { row: 9, col: 9, reward: 10.0 }],
        fail_cells: vec![TerminalCell { row: 0, col: 9, reward: -10.0 }],
        step_reward: -0.1,
        slip_prob: 0.0,
        start_cells: vec![GridCell { row: 0, col: 0 }],
        horizon: 40,
    }
}

/// Looks up a preset spec by CLI name.
pub fn by_name(name: &str) -> Option<GridworldSpec> {
    match name {
        "figure1" => Some(figure1_corridor()),
        "two-corridor" => Some(two_corridor_spec()),
        "grid10" => Some(benchmark_grid10()),
        _ => None,
    }
}
