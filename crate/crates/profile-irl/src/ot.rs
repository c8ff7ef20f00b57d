//! One-dimensional optimal transport between atom distributions: the exact
//! monotone plan, entropy-regularized plans via log-domain Sinkhorn scaling,
//! conditional target sampling, and the minibatch transport-loss estimate.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::{OptimalityProfile, ProfileAtom};
use crate::error::{Error, Result};
use crate::mdp::Trajectory;

/// Default iteration budget for Sinkhorn scaling.
pub const SINKHORN_MAX_ITERS: usize = 10_000;

/// Default marginal tolerance for Sinkhorn scaling.
pub const SINKHORN_TOL: f64 = 1e-6;

/// Marginal tolerance used by the minibatch loss estimate. The plan only
/// feeds target sampling, and rounding restores exact marginals afterwards,
/// so iterating the potentials further buys nothing the sampler can see.
const OT_LOSS_SINKHORN_TOL: f64 = 1e-4;

/// A coupling between two atom sets with prescribed marginals.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub source_atoms: Vec<ProfileAtom>,
    pub target_atoms: Vec<ProfileAtom>,
    /// Nonnegative mass moved from source atom i to target atom j.
    pub matrix: Array2<f64>,
}

impl TransportPlan {
    /// Largest deviation of a row or column sum from its prescribed marginal.
    pub fn marginal_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, atom) in self.source_atoms.iter().enumerate() {
            let sum: f64 = self.matrix.row(i).sum();
            worst = worst.max((sum - atom.weight).abs());
        }
        for (j, atom) in self.target_atoms.iter().enumerate() {
            let sum: f64 = self.matrix.column(j).sum();
            worst = worst.max((sum - atom.weight).abs());
        }
        worst
    }

    /// Unregularized transport cost (sum G_ij |x_i - y_j|^p)^(1/p).
    pub fn cost(&self, p: f64) -> f64 {
        let mut total = 0.0;
        for (i, src) in self.source_atoms.iter().enumerate() {
            for (j, tgt) in self.target_atoms.iter().enumerate() {
                let g = self.matrix[(i, j)];
                if g > 0.0 {
                    total += g * (src.location - tgt.location).abs().powf(p);
                }
            }
        }
        total.powf(1.0 / p)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::InvalidConfig(format!("transport exponent p = {p}, need p >= 1")));
    }
    Ok(())
}

/// The monotone (north-west-corner on sorted atoms) coupling, optimal in one
/// dimension for the convex cost |x - y|^p. Returns the cost and the plan.
pub fn exact_plan(
    source: &OptimalityProfile,
    target: &OptimalityProfile,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    check_p(p)?;
    let src = source.atoms();
    let tgt = target.atoms();
    let (n, m) = (src.len(), tgt.len());

    // Cumulative masses; cell (i, j) receives the overlap of the quantile
    // intervals [A_{i-1}, A_i] and [B_{j-1}, B_j].
    let cum = |atoms: &[ProfileAtom]| -> Vec<f64> {
        let mut acc = 0.0;
        atoms
            .iter()
            .map(|a| {
                acc += a.weight;
                acc
            })
            .collect()
    };
    let a_cum = cum(src);
    let b_cum = cum(tgt);

    let mut matrix = Array2::zeros((n, m));
    let (mut i, mut j) = (0usize, 0usize);
    let (mut a_lo, mut b_lo) = (0.0f64, 0.0f64);
    while i < n && j < m {
        let hi = a_cum[i].min(b_cum[j]);
        let mass = hi - a_lo.max(b_lo);
        if mass > 0.0 {
            matrix[(i, j)] = mass;
        }
        if a_cum[i] <= b_cum[j] {
            a_lo = a_cum[i];
            i += 1;
        } else {
            b_lo = b_cum[j];
            j += 1;
        }
    }

    let plan = TransportPlan {
        source_atoms: src.to_vec(),
        target_atoms: tgt.to_vec(),
        matrix,
    };
    Ok((plan.cost(p), plan))
}

/// Over-relaxation ladder for the final Sinkhorn stage. Ill-conditioned
/// instances (nearly coincident atoms, small lambda) contract arbitrarily
/// slowly under plain updates; whenever a 200-sweep window fails to shrink
/// the marginal violation by 3x, the relaxation factor escalates one level.
/// This approaches the optimal factor without estimating the contraction
/// rate and never leaves a level that is making progress.
const SINKHORN_OMEGA_LEVELS: [f64; 7] = [1.0, 1.5, 1.8, 1.9, 1.95, 1.98, 1.995];
const SINKHORN_WINDOW: usize = 200;
const SINKHORN_WINDOW_GAIN: f64 = 0.3;

/// Entropy-regularized transport via log-domain Sinkhorn iterations with
/// epsilon-scaling: the regularizer starts at the cost scale and halves until
/// it reaches `lambda`, warm-starting the potentials at every stage; the
/// final stage runs over-relaxed sweeps with an escalating factor. Before
/// returning, the plan is rounded onto the transport polytope (row/column
/// rescaling plus a rank-one correction), so its marginals are exact up to
/// float error. The reported cost is the unregularized cost of the returned
/// plan.
pub fn sinkhorn_plan(
    source: &OptimalityProfile,
    target: &OptimalityProfile,
    p: f64,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(f64, TransportPlan)> {
    check_p(p)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("lambda = {lambda}, need lambda > 0")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tol = {tol}, need tol > 0")));
    }
    let src = source.atoms();
    let tgt = target.atoms();
    let (n, m) = (src.len(), tgt.len());
    let a: Vec<f64> = src.iter().map(|x| x.weight).collect();
    let b: Vec<f64> = tgt.iter().map(|x| x.weight).collect();
    let log_a: Vec<f64> = a.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|w| w.ln()).collect();

    let mut cost = Array2::zeros((n, m));
    let mut max_c = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            let c = (src[i].location - tgt[j].location).abs().powf(p);
            cost[(i, j)] = c;
            max_c = max_c.max(c);
        }
    }

    let plan_from = |f: &[f64], g: &[f64], eps: f64| -> Array2<f64> {
        let mut matrix = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                matrix[(i, j)] = ((f[i] + g[j] - cost[(i, j)]) / eps).exp();
            }
        }
        matrix
    };
    let max_violation = |matrix: &Array2<f64>| -> f64 {
        let mut v = 0.0f64;
        for i in 0..n {
            v = v.max((matrix.row(i).sum() - a[i]).abs());
        }
        for j in 0..m {
            v = v.max((matrix.column(j).sum() - b[j]).abs());
        }
        v
    };

    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let mut iters_used = 0usize;
    let mut eps = if max_c > lambda { max_c } else { lambda };
    let mut violation = f64::INFINITY;

    loop {
        let last_stage = eps <= lambda;
        // Intermediate stages only need a rough solution to warm-start from.
        let stage_tol = if last_stage { tol } else { tol.max(1e-3) };
        let mut level = 0usize;
        let mut spent_in_window = 0usize;
        let mut window_start = f64::INFINITY;
        loop {
            if iters_used >= max_iters {
                return Err(Error::NonConvergence {
                    iters: max_iters,
                    residual: violation,
                });
            }
            iters_used += 1;
            let relax = if last_stage { SINKHORN_OMEGA_LEVELS[level] } else { 1.0 };
            for i in 0..n {
                let update =
                    eps * (log_a[i] - log_sum_exp((0..m).map(|j| (g[j] - cost[(i, j)]) / eps)));
                f[i] = (1.0 - relax) * f[i] + relax * update;
            }
            for j in 0..m {
                let update =
                    eps * (log_b[j] - log_sum_exp((0..n).map(|i| (f[i] - cost[(i, j)]) / eps)));
                g[j] = (1.0 - relax) * g[j] + relax * update;
            }
            violation = max_violation(&plan_from(&f, &g, eps));
            if !violation.is_finite() {
                // Transient overshoot; restart the potentials from scratch.
                f.iter_mut().for_each(|x| *x = 0.0);
                g.iter_mut().for_each(|x| *x = 0.0);
                continue;
            }
            if violation <= stage_tol {
                break;
            }
            if last_stage {
                if window_start.is_infinite() {
                    window_start = violation;
                }
                spent_in_window += 1;
                if spent_in_window >= SINKHORN_WINDOW {
                    if violation > SINKHORN_WINDOW_GAIN * window_start
                        && level + 1 < SINKHORN_OMEGA_LEVELS.len()
                    {
                        level += 1;
                    }
                    spent_in_window = 0;
                    window_start = violation;
                }
            }
        }
        if last_stage {
            break;
        }
        eps = (eps / 2.0).max(lambda);
    }

    let mut matrix = plan_from(&f, &g, eps);
    round_to_marginals(&mut matrix, &a, &b);
    let plan = TransportPlan {
        source_atoms: src.to_vec(),
        target_atoms: tgt.to_vec(),
        matrix,
    };
    Ok((plan.cost(p), plan))
}

/// Projects an almost-feasible coupling onto the transport polytope: scale
/// overfull rows and columns down, then distribute the missing mass as a
/// rank-one outer product of the row and column deficits.
fn round_to_marginals(matrix: &mut Array2<f64>, a: &[f64], b: &[f64]) {
    let (n, m) = matrix.dim();
    for i in 0..n {
        let sum = matrix.row(i).sum();
        if sum > a[i] && sum > 0.0 {
            let scale = a[i] / sum;
            matrix.row_mut(i).mapv_inplace(|x| x * scale);
        }
    }
    for j in 0..m {
        let sum = matrix.column(j).sum();
        if sum > b[j] && sum > 0.0 {
            let scale = b[j] / sum;
            matrix.column_mut(j).mapv_inplace(|x| x * scale);
        }
    }
    let err_a: Vec<f64> = (0..n).map(|i| (a[i] - matrix.row(i).sum()).max(0.0)).collect();
    let err_b: Vec<f64> = (0..m).map(|j| (b[j] - matrix.column(j).sum()).max(0.0)).collect();
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            if err_a[i] == 0.0 {
                continue;
            }
            for j in 0..m {
                matrix[(i, j)] += err_a[i] * err_b[j] / total;
            }
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draws one target location per source index, with probability proportional
/// to the plan row of that index. Deterministic for a given seed.
pub fn sample_targets(plan: &TransportPlan, source_indices: &[usize], seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(source_indices.len());
    for &index in source_indices {
        if index >= plan.source_atoms.len() {
            return Err(Error::InvalidConfig(format!("source index {index} out of range")));
        }
        let row = plan.matrix.row(index);
        let total: f64 = row.sum();
        if !(total > 0.0) {
            return Err(Error::ZeroRowMass { index });
        }
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = plan.target_atoms.len() - 1;
        for (j, &mass) in row.iter().enumerate() {
            acc += mass;
            if u < acc {
                chosen = j;
                break;
            }
        }
        out.push(plan.target_atoms[chosen].location);
    }
    Ok(out)
}

/// The transport-loss estimate for one minibatch of trajectory suffixes.
#[derive(Debug, Clone)]
pub struct OtLossEstimate {
    /// (sum_j |y_j - y_tgt_j|^p)^(1/p), summed in nondecreasing return order.
    pub loss: f64,
    /// Batch returns y_j, in batch order.
    pub returns: Vec<f64>,
    /// Sampled transport targets y_tgt_j, in batch order. These are treated
    /// as constants by gradient computations.
    pub targets: Vec<f64>,
}

/// Estimates the transport loss on a batch: compute the batch returns, build
/// their empirical profile, couple it to the target profile (exact plan when
/// `lambda == 0`, Sinkhorn otherwise), sample one target per batch element
/// from its atom's plan row, and aggregate.
///
/// Target draws are consumed in nondecreasing order of the batch returns, so
/// the estimate depends on the returns only through their multiset; rewards
/// that induce the same return multiset give bit-identical losses under the
/// same seed.
pub fn ot_loss<R: Fn(usize) -> f64>(
    reward: R,
    batch: &[&Trajectory],
    target: &OptimalityProfile,
    gamma: f64,
    p: f64,
    lambda: f64,
    n_bins: usize,
    seed: u64,
) -> Result<OtLossEstimate> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda = {lambda}, need lambda >= 0")));
    }
    let returns: Vec<f64> = batch
        .iter()
        .map(|t| crate::distributions::traj_return(&reward, t, gamma))
        .collect();
    let (profile, assignment) = OptimalityProfile::from_values(&returns, n_bins)?;
    let (_, plan) = if lambda == 0.0 {
        exact_plan(&profile, target, p)?
    } else {
        sinkhorn_plan(&profile, target, p, lambda, SINKHORN_MAX_ITERS, OT_LOSS_SINKHORN_TOL)?
    };

    let mut order: Vec<usize> = (0..returns.len()).collect();
    order.sort_by(|&i, &j| returns[i].total_cmp(&returns[j]));
    let sorted_atoms: Vec<usize> = order.iter().map(|&i| assignment[i]).collect();
    let sorted_targets = sample_targets(&plan, &sorted_atoms, seed)?;

    let mut loss_pow = 0.0;
    let mut targets = vec![0.0; returns.len()];
    for (k, &i) in order.iter().enumerate() {
        targets[i] = sorted_targets[k];
        loss_pow += (returns[i] - sorted_targets[k]).abs().powf(p);
    }
    Ok(OtLossEstimate {
        loss: loss_pow.powf(1.0 / p),
        returns,
        targets,
    })
}

/// The loss of [`ot_loss`] as a pure function of returns for fixed targets:
/// (sum_j |y_j - t_j|^p)^(1/p).
pub fn frozen_target_loss(returns: &[f64], targets: &[f64], p: f64) -> f64 {
    returns
        .iter()
        .zip(targets)
        .map(|(y, t)| (y - t).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Derivative of [`frozen_target_loss`] with respect to each return; zero
/// where the loss is not differentiable.
pub fn frozen_target_loss_grad(returns: &[f64], targets: &[f64], p: f64) -> (f64, Vec<f64>) {
    let loss = frozen_target_loss(returns, targets, p);
    if loss == 0.0 {
        return (0.0, vec![0.0; returns.len()]);
    }
    let grad = returns
        .iter()
        .zip(targets)
        .map(|(y, t)| {
            let d = y - t;
            if d == 0.0 {
                0.0
            } else if p == 1.0 {
                d.signum()
            } else if p == 2.0 {
                d / loss
            } else {
                loss.powf(1.0 - p) * d.abs().powf(p - 1.0) * d.signum()
            }
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::augment;
    use rand::Rng;

    fn uniform_profile(locations: &[f64]) -> OptimalityProfile {
        let w = 1.0 / locations.len() as f64;
        OptimalityProfile::from_atoms(locations.iter().map(|&l| (l, w)).collect()).unwrap()
    }

    fn random_profile(rng: &mut impl Rng, max_atoms: usize) -> OptimalityProfile {
        let n = rng.gen_range(1..=max_atoms);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let atoms = raw
            .into_iter()
            .map(|w| (rng.gen_range(-2.0..2.0), w / total))
            .collect();
        OptimalityProfile::from_atoms(atoms).unwrap()
    }

    /// Quantile-function route: integrate |F_src^-1(u) - F_tgt^-1(u)|^p over
    /// the merged breakpoints of both CDFs. Independent of the plan code.
    fn quantile_cost(a: &OptimalityProfile, b: &OptimalityProfile, p: f64) -> f64 {
        let mut breaks = vec![0.0];
        for prof in [a, b] {
            let mut acc = 0.0;
            for atom in prof.atoms() {
                acc += atom.weight;
                breaks.push(acc.min(1.0));
            }
        }
        breaks.sort_by(f64::total_cmp);
        let inv = |prof: &OptimalityProfile, u: f64| -> f64 {
            let mut acc = 0.0;
            for atom in prof.atoms() {
                acc += atom.weight;
                if u <= acc {
                    return atom.location;
                }
            }
            prof.atoms().last().unwrap().location
        };
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let du = w[1] - w[0];
            if du <= 0.0 {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            total += du * (inv(a, mid) - inv(b, mid)).abs().powf(p);
        }
        total.powf(1.0 / p)
    }

    #[test]
    fn identical_profiles_have_zero_cost_and_diagonal_plan() {
        let profile = uniform_profile(&[-1.0, 0.5, 2.0]);
        let (cost, plan) = exact_plan(&profile, &profile, 2.0).unwrap();
        assert_eq!(cost, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((plan.matrix[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn point_masses_cost_their_distance() {
        let a = uniform_profile(&[1.5]);
        let b = uniform_profile(&[-2.0]);
        for p in [1.0, 2.0, 3.5] {
            let (cost, _) = exact_plan(&a, &b, p).unwrap();
            assert!((cost - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_uniform_atoms_cost_one() {
        let a = uniform_profile(&[0.0, 1.0, 2.0]);
        let b = uniform_profile(&[1.0, 2.0, 3.0]);
        let (cost, plan) = exact_plan(&a, &b, 1.0).unwrap();
        assert!((cost - 1.0).abs() < 1e-12);
        // sorted matching: i -> i
        for i in 0..3 {
            assert!((plan.matrix[(i, i)] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_plan_marginals_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_profile(&mut rng, 12);
            let b = random_profile(&mut rng, 12);
            let (_, plan) = exact_plan(&a, &b, 2.0).unwrap();
            assert!(plan.marginal_violation() < 1e-12);
        }
    }

    #[test]
    fn exact_cost_matches_quantile_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..60 {
            let a = random_profile(&mut rng, 100);
            let b = random_profile(&mut rng, 100);
            let p = if trial % 2 == 0 { 1.0 } else { 2.0 };
            let (cost, _) = exact_plan(&a, &b, p).unwrap();
            let oracle = quantile_cost(&a, &b, p);
            assert!(
                (cost - oracle).abs() < 1e-9,
                "trial {trial}: plan cost {cost} vs quantile {oracle}"
            );
        }
    }

    #[test]
    fn wasserstein_is_a_metric_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..40 {
            let a = random_profile(&mut rng, 8);
            let b = random_profile(&mut rng, 8);
            let c = random_profile(&mut rng, 8);
            for p in [1.0, 2.0] {
                let dab = exact_plan(&a, &b, p).unwrap().0;
                let dba = exact_plan(&b, &a, p).unwrap().0;
                let dac = exact_plan(&a, &c, p).unwrap().0;
                let dcb = exact_plan(&c, &b, p).unwrap().0;
                assert!((dab - dba).abs() < 1e-10, "symmetry");
                assert!(dab <= dac + dcb + 1e-10, "triangle inequality");
                assert!(exact_plan(&a, &a, p).unwrap().0 < 1e-12, "identity");
            }
        }
    }

    #[test]
    fn sinkhorn_near_zero_lambda_recovers_zero_cost() {
        let profile = uniform_profile(&[0.0, 1.0, 2.0]);
        let spread = profile.spread();
        let (cost, _) =
            sinkhorn_plan(&profile, &profile, 2.0, 1e-6 * spread, SINKHORN_MAX_ITERS, 1e-6)
                .unwrap();
        assert!(cost < 1e-3 * spread, "cost {cost}");
    }

    #[test]
    fn sinkhorn_marginals_meet_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let a = random_profile(&mut rng, 10);
            let b = random_profile(&mut rng, 10);
            let lambda = rng.gen_range(1e-3..0.5);
            let (_, plan) = sinkhorn_plan(&a, &b, 2.0, lambda, SINKHORN_MAX_ITERS, 1e-6).unwrap();
            assert!(plan.marginal_violation() <= 1e-6);
        }
    }

    #[test]
    fn sinkhorn_approaches_exact_cost() {
        let a = uniform_profile(&[0.0, 1.0, 2.0]);
        let b = uniform_profile(&[1.0, 2.0, 3.0]);
        let (cost, _) = sinkhorn_plan(&a, &b, 1.0, 1e-4, SINKHORN_MAX_ITERS, 1e-6).unwrap();
        assert!((cost - 1.0).abs() < 0.01, "cost {cost}");
    }

    #[test]
    fn sinkhorn_cost_dominates_exact_and_decreases_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..15 {
            let a = random_profile(&mut rng, 8);
            let b = random_profile(&mut rng, 8);
            let spread = (a.spread() + b.spread()).max(1e-3);
            let exact = exact_plan(&a, &b, 2.0).unwrap().0;
            let mut previous = f64::INFINITY;
            for factor in [1e-1, 1e-2, 1e-3] {
                let (cost, _) = sinkhorn_plan(
                    &a,
                    &b,
                    2.0,
                    factor * spread,
                    100_000,
                    1e-10,
                )
                .unwrap();
                assert!(cost >= exact - 1e-9, "cost {cost} below exact {exact}");
                assert!(cost <= previous + 1e-9, "cost not monotone in lambda");
                previous = cost;
            }
        }
    }

    #[test]
    fn sinkhorn_rejects_nonpositive_lambda() {
        let a = uniform_profile(&[0.0, 1.0]);
        assert!(sinkhorn_plan(&a, &a, 2.0, 0.0, 100, 1e-6).is_err());
        assert!(exact_plan(&a, &a, 0.5).is_err());
    }

    #[test]
    fn diagonal_plan_samples_the_matched_atom() {
        let profile = uniform_profile(&[-1.0, 0.0, 1.0]);
        let (_, plan) = exact_plan(&profile, &profile, 2.0).unwrap();
        let targets = sample_targets(&plan, &[0, 1, 2, 2, 0], 9).unwrap();
        assert_eq!(targets, vec![-1.0, 0.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn half_half_row_is_unbiased() {
        let source = uniform_profile(&[0.0]);
        let target = uniform_profile(&[-1.0, 1.0]);
        let (_, plan) = exact_plan(&source, &target, 1.0).unwrap();
        let draws = sample_targets(&plan, &vec![0; 10_000], 123).unwrap();
        let mean: f64 = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn monotone_plan_rows_cover_contiguous_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_profile(&mut rng, 6);
        let b = random_profile(&mut rng, 9);
        let (_, plan) = exact_plan(&a, &b, 2.0).unwrap();
        for i in 0..a.len() {
            let support: Vec<usize> = (0..b.len())
                .filter(|&j| plan.matrix[(i, j)] > 0.0)
                .collect();
            assert!(!support.is_empty());
            for w in support.windows(2) {
                assert_eq!(w[1], w[0] + 1, "row support must be contiguous");
            }
            let lo = plan.target_atoms[support[0]].location;
            let hi = plan.target_atoms[*support.last().unwrap()].location;
            let draws = sample_targets(&plan, &vec![i; 50], 4).unwrap();
            assert!(draws.iter().all(|&y| y >= lo && y <= hi));
        }
    }

    #[test]
    fn zero_row_mass_is_an_error() {
        let profile = uniform_profile(&[0.0, 1.0]);
        let (_, mut plan) = exact_plan(&profile, &profile, 2.0).unwrap();
        plan.matrix.row_mut(0).fill(0.0);
        assert!(matches!(
            sample_targets(&plan, &[0], 1),
            Err(Error::ZeroRowMass { index: 0 })
        ));
    }

    fn traj(states: &[usize]) -> Trajectory {
        Trajectory::new(states.to_vec(), None).unwrap()
    }

    #[test]
    fn self_transport_has_zero_loss() {
        let rewards = [0.0, 1.0, 2.0, 5.0];
        let reward = |s: usize| rewards[s];
        let batch_owned = vec![traj(&[0, 1]), traj(&[2]), traj(&[3, 0])];
        let batch: Vec<&Trajectory> = batch_owned.iter().collect();
        let returns: Vec<f64> = batch
            .iter()
            .map(|t| crate::distributions::traj_return(reward, t, 1.0))
            .collect();
        let (own_profile, _) = OptimalityProfile::from_values(&returns, 0).unwrap();
        let est = ot_loss(reward, &batch, &own_profile, 1.0, 2.0, 0.0, 0, 17).unwrap();
        assert_eq!(est.loss, 0.0);
        assert_eq!(est.targets, est.returns);
    }

    #[test]
    fn single_suffix_against_point_mass() {
        let batch_owned = vec![traj(&[1])];
        let batch: Vec<&Trajectory> = batch_owned.iter().collect();
        let target = uniform_profile(&[4.0]);
        let est = ot_loss(|s| s as f64, &batch, &target, 0.0, 2.0, 0.0, 0, 3).unwrap();
        assert!((est.loss - 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_suffix_monotone_matching() {
        // returns {0, 2}; target atoms {1, 3}: monotone plan sends 0 -> 1 and
        // 2 -> 3, so the p = 1 loss is 2. Verified against both couplings:
        // the swap would cost |0-3| + |2-1| = 4.
        let batch_owned = vec![traj(&[0]), traj(&[2])];
        let batch: Vec<&Trajectory> = batch_owned.iter().collect();
        let target = uniform_profile(&[1.0, 3.0]);
        let est = ot_loss(|s| s as f64, &batch, &target, 0.0, 1.0, 0.0, 0, 5).unwrap();
        assert_eq!(est.targets, vec![1.0, 3.0]);
        assert!((est.loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ot_loss_is_invariant_under_occupancy_preserving_permutations() {
        // Dataset visiting states {0,1,2,3} each exactly twice; any
        // permutation of the four states preserves the empirical occupancy.
        let dataset = vec![traj(&[0, 1, 2, 3]), traj(&[3, 2, 1, 0])];
        let aug = augment(&dataset).unwrap();
        let suffixes: Vec<&Trajectory> = aug.entries.iter().map(|e| &e.suffix).collect();
        let table = [0.3, -1.2, 0.9, 2.2];
        let target = uniform_profile(&[-1.0, 0.0, 1.0]);
        let base = ot_loss(|s| table[s], &suffixes, &target, 0.0, 2.0, 0.0, 0, 42).unwrap();
        let perms: [[usize; 4]; 3] = [[1, 0, 3, 2], [2, 3, 0, 1], [3, 1, 2, 0]];
        for perm in perms {
            let permuted = ot_loss(
                |s| table[perm[s]],
                &suffixes,
                &target,
                0.0,
                2.0,
                0.0,
                0,
                42,
            )
            .unwrap();
            assert_eq!(base.loss.to_bits(), permuted.loss.to_bits());
        }
    }

    #[test]
    fn frozen_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in [1.0, 2.0, 3.0] {
            let returns: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let targets: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (_, grad) = frozen_target_loss_grad(&returns, &targets, p);
            for k in 0..returns.len() {
                let mut plus = returns.clone();
                let mut minus = returns.clone();
                plus[k] += 1e-6;
                minus[k] -= 1e-6;
                let fd = (frozen_target_loss(&plus, &targets, p)
                    - frozen_target_loss(&minus, &targets, p))
                    / 2e-6;
                assert!(
                    (grad[k] - fd).abs() < 1e-6,
                    "p={p} k={k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }
}
