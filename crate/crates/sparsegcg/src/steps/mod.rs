//! Step primitives shared by the solver drivers: the lazified
//! conditional-gradient update, support cleanup (drop / local merge), the
//! local support improver, and the guarded Newton step on the
//! finite-dimensional parametrization.

pub mod coefficient;

pub use coefficient::{coefficient_solve, coefficient_step, positive_gap, PositiveCoefState};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::Result;
use crate::measures::{FiniteParam, SparseMeasure};
use crate::model::{finite_gradient, finite_hessian, finite_objective, DualState, Problem};
use crate::search::{ascent_move, lazy_search, CandidateCache, LazyOutcome, SearchConfig};

/// Which branch the direction oracle took inside an LGCG step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CallKind {
    /// A cheap candidate (zero direction, cached point, support atom, or an
    /// early sweep start) cleared the `M ε` threshold.
    Lazy,
    /// The full multistart sweep ran and certified the global gap `Φ(u)`.
    Exact,
}

/// Everything a driver needs to know about one LGCG update.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// The new iterate `u₊ = (1 − η) u + η v`.
    pub measure: SparseMeasure,
    /// The vertex direction `v`, possibly the zero measure.
    pub direction: SparseMeasure,
    /// Threshold for the next step: unchanged `ε` after a lazy call,
    /// `Φ(u)/(2M)` after an exact one.
    pub eps_out: f64,
    /// Branch taken by the direction oracle.
    pub call: CallKind,
    /// Raw objective change `J(u₊) − J(u)`.
    pub descent: f64,
    /// The gap `φ(u, v)` backing the step; equals `Φ(u)` for exact calls.
    pub phi: f64,
}

/// One lazified conditional-gradient update.
///
/// Runs the lazy direction search at accuracy `eps`. A hit steps with
/// `η = min{1, Mε/C}` and keeps `ε`; an exhausted search certifies `Φ(u)`,
/// steps with `η = min{1, Φ(u)/C}` toward the best vertex (or toward zero
/// when `‖p_u‖∞ < α`), and tightens the threshold to `ε₊ = Φ(u)/(2M)`.
/// Both branches preserve the residual bound `r_J(u₊) ≤ 2 M ε₊`.
pub fn lgcg_step(
    state: &DualState,
    eps: f64,
    c_curv: f64,
    m_bound: f64,
    cache: &mut CandidateCache,
    cfg: &SearchConfig,
) -> Result<StepReport> {
    let support: Vec<&[f64]> = state.measure().positions().collect();
    let (direction, call, phi, eps_out) =
        match lazy_search(state, eps, m_bound, &support, cache, cfg) {
            LazyOutcome::Hit { direction, phi, .. } => (direction, CallKind::Lazy, phi, eps),
            LazyOutcome::Exact { xhat, value, gap } => {
                let direction = if value < state.problem().alpha {
                    SparseMeasure::empty()
                } else {
                    let sign = state.dual_value_raw(&xhat).signum();
                    cache.insert(&xhat);
                    SparseMeasure::from_atoms([(xhat, m_bound * sign)])
                };
                // a float-negative gap just means `u` is numerically optimal
                (direction, CallKind::Exact, gap, gap.max(0.0) / (2.0 * m_bound))
            }
        };
    let eta = match call {
        CallKind::Lazy => m_bound * eps / c_curv,
        CallKind::Exact => phi / c_curv,
    }
    .clamp(0.0, 1.0);
    let measure = state.measure().convex_combine(&direction, eta);
    let descent = state.problem().objective(&measure)? - state.objective();
    Ok(StepReport {
        measure,
        direction,
        eps_out,
        call,
        descent,
        phi,
    })
}

/// Removes atoms whose dual sign disagrees with their weight or whose dual
/// value has dropped to `α − σ/2` or below — but only if the cleanup does
/// not increase the objective. Returns the possibly unchanged measure.
pub fn drop_step(state: &DualState) -> Result<SparseMeasure> {
    let problem = state.problem();
    let band = problem.alpha - problem.params.sigma / 2.0;
    let kept: Vec<(Vec<f64>, f64)> = state
        .measure()
        .atoms()
        .iter()
        .filter(|a| {
            let p = state.dual_value_raw(&a.position);
            p.signum() == a.weight.signum() && p.abs() > band
        })
        .map(|a| (a.position.clone(), a.weight))
        .collect();
    if kept.len() == state.measure().len() {
        return Ok(state.measure().clone());
    }
    let dropped = SparseMeasure::from_atoms(kept);
    if problem.objective(&dropped)? <= state.objective() {
        Ok(dropped)
    } else {
        Ok(state.measure().clone())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Local support improver.
///
/// Walks the support in decreasing `|p_u|` order. For each cluster head `x`
/// it hunts inside the ball `B_2R(x)` — first at `x` itself, then along at
/// most `max_local_iters` sign-fixed ascent iterates — for a point `y` with
///
/// 1. `|p_u(y)| > α − σ/2` (clear of the drop band),
/// 2. `‖∇p_u(y)‖ ≤ Φ_{A_u}(u)` (near-stationary relative to the finite gap),
/// 3. `|p_u(y)| − max{|p_u(z)| : z ∈ A_u ∩ B_2R(x)} ≥ 2R ‖∇p_u(y)‖`
///    (dominates every original support atom near the head).
///
/// The first qualifying point joins the improver list; either way the ball
/// `B_2R(x)` is removed from the working set and the scan continues.
pub fn lsi(state: &DualState, m_bound: f64, cfg: &SearchConfig) -> Result<Vec<Vec<f64>>> {
    let problem = state.problem();
    let u = state.measure();
    if u.is_empty() {
        return Ok(Vec::new());
    }
    let two_r = 2.0 * problem.params.radius;
    let band = problem.alpha - problem.params.sigma / 2.0;
    let support: Vec<&[f64]> = u.positions().collect();
    let phi_a = state.finite_gap(support.iter().copied(), m_bound)?;
    let p_vals: Vec<f64> = support.iter().map(|x| state.dual_value_raw(x)).collect();
    let cell = problem.domain.max_extent() / cfg.grid_per_dim as f64;

    let d = problem.domain.dim();
    let (mut grad, mut hess) = (vec![0.0; d], vec![0.0; d * d]);
    let mut alive = vec![true; support.len()];
    let mut improvers = Vec::new();

    loop {
        let mut head = None;
        for j in 0..support.len() {
            if alive[j] && head.map_or(true, |h: usize| p_vals[j].abs() > p_vals[h].abs()) {
                head = Some(j);
            }
        }
        let Some(h) = head else { break };
        let x = support[h];
        let ball_best = support
            .iter()
            .zip(&p_vals)
            .filter(|(z, _)| dist(z, x) < two_r)
            .map(|(_, p)| p.abs())
            .fold(f64::NEG_INFINITY, f64::max);
        let s = if p_vals[h] >= 0.0 { 1.0 } else { -1.0 };

        let mut y = x.to_vec();
        for attempt in 0..=cfg.max_local_iters {
            if dist(&y, x) < two_r {
                let p = state.dual_all_raw(&y, &mut grad, &mut hess);
                let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if p.abs() > band
                    && gnorm <= phi_a
                    && p.abs() - ball_best >= two_r * gnorm
                {
                    improvers.push(y.clone());
                    break;
                }
            }
            if attempt == cfg.max_local_iters {
                break;
            }
            match ascent_move(state, &y, s, cell, cfg.ascent_tol) {
                Some(y_new) => y = y_new,
                None => break,
            }
        }

        for j in 0..support.len() {
            if alive[j] && dist(support[j], x) < two_r {
                alive[j] = false;
            }
        }
    }
    Ok(improvers)
}

/// Applies the support-improver update for a precomputed improver list:
/// each improver receives the signed mass of its `2R`-ball, and the iterate
/// moves toward that reclustered measure with the conservative step size
///
/// ```text
///   η̃ = min{1, μ̂ / (16 M L C_K'² (2M√(R/θ) + 2M C_K' L/(θ√γ) + √(M/θ))²)},
/// ```
///
/// where `μ̂` is the ball mass of the improver that dominates its cluster the
/// most. With no improvers the iterate is returned unchanged (`η̃ = 0`).
/// Returns the new measure and the step size actually used.
pub fn lsi_step_from(
    state: &DualState,
    improvers: &[Vec<f64>],
    m_bound: f64,
) -> (SparseMeasure, f64) {
    let u = state.measure();
    if improvers.is_empty() {
        return (u.clone(), 0.0);
    }
    let pr = &state.problem().params;
    let two_r = 2.0 * pr.radius;

    let v = SparseMeasure::from_atoms(
        improvers
            .iter()
            .map(|x| (x.clone(), u.ball_mass(x, two_r))),
    );

    let score = |x: &[f64]| -> f64 {
        let near_best = u
            .positions()
            .filter(|z| dist(z, x) < two_r)
            .map(|z| state.dual_value_raw(z).abs())
            .fold(f64::NEG_INFINITY, f64::max);
        state.dual_value_raw(x).abs() - near_best
    };
    let mut head = improvers[0].as_slice();
    let mut head_score = score(head);
    for x in &improvers[1..] {
        let sc = score(x);
        if sc > head_score {
            head = x;
            head_score = sc;
        }
    }

    let mu = u.ball_mass(head, two_r).abs();
    let braced = 2.0 * m_bound * (pr.radius / pr.theta).sqrt()
        + 2.0 * m_bound * pr.c_kernel_prime * pr.lipschitz / (pr.theta * pr.gamma.sqrt())
        + (m_bound / pr.theta).sqrt();
    let denom = 16.0 * m_bound * pr.lipschitz * pr.c_kernel_prime.powi(2) * braced.powi(2);
    let eta = (mu / denom).min(1.0);
    (u.convex_combine(&v, eta), eta)
}

/// [`lsi`] followed by [`lsi_step_from`].
pub fn lsi_step(
    state: &DualState,
    m_bound: f64,
    cfg: &SearchConfig,
) -> Result<(SparseMeasure, f64)> {
    let improvers = lsi(state, m_bound, cfg)?;
    Ok(lsi_step_from(state, &improvers, m_bound))
}

/// Lumps, greedily by decreasing `|p_u|`, all mass within `2R` of each
/// cluster head onto the head itself; zero lumps are pruned. Ball masses are
/// taken over the full measure, so an atom close to two heads contributes to
/// both lumps.
pub fn local_merge(state: &DualState) -> SparseMeasure {
    let u = state.measure();
    let two_r = 2.0 * state.problem().params.radius;
    let support: Vec<&[f64]> = u.positions().collect();
    let p_abs: Vec<f64> = support
        .iter()
        .map(|x| state.dual_value_raw(x).abs())
        .collect();
    let mut alive = vec![true; support.len()];
    let mut lumps: Vec<(Vec<f64>, f64)> = Vec::new();
    loop {
        let mut head = None;
        for j in 0..support.len() {
            if alive[j] && head.map_or(true, |h: usize| p_abs[j] > p_abs[h]) {
                head = Some(j);
            }
        }
        let Some(h) = head else { break };
        let x = support[h];
        lumps.push((x.to_vec(), u.ball_mass(x, two_r)));
        for j in 0..support.len() {
            if alive[j] && dist(support[j], x) < two_r {
                alive[j] = false;
            }
        }
    }
    SparseMeasure::from_atoms(lumps)
}

/// `z + t·d` with every atom position projected back into the box, so a
/// proposal is always feasible even when the direction points through a face.
fn projected_trial(problem: &Problem, z: &FiniteParam, d: &DVector<f64>, t: f64) -> FiniteParam {
    let mut v = z.to_vec();
    for (vi, di) in v.iter_mut().zip(d.iter()) {
        *vi += t * di;
    }
    let dim = problem.domain.dim();
    for j in 0..z.len() {
        problem.domain.clamp(&mut v[j * dim..(j + 1) * dim]);
    }
    FiniteParam::from_vec(dim, z.len(), &v)
}

/// One guarded projected Newton step on the finite-dimensional objective.
///
/// Position coordinates pinned to a box face whose gradient pushes outward
/// are frozen for the step; the Newton system is reduced to the remaining
/// free coordinates (weights are never constrained). On that subspace the
/// raw proposal `z − H⁻¹g` (via a symmetric eigendecomposition, eigenvalues
/// below `10⁻¹⁴‖H‖` treated as singular) is taken whenever it does not
/// increase `J_N` — this covers the positive definite case and the useful
/// indefinite ones, where the full step kills a spurious weight outright.
/// Otherwise two backtracking fallbacks run in order (halving, ≤ 30 trials
/// each, strict decrease required): first the direction that flips the
/// negative eigenvalues (`−Q|Λ|⁻¹Qᵀg`, coinciding with the raw step for
/// definite Hessians), then the projected gradient `−g`, which descends
/// whenever any free coordinate remains. Every trial clamps its atom
/// positions back into the box, so a pinned atom slides along its face
/// instead of rendering the whole direction infeasible. A fully singular
/// Hessian or exhausted backtracks return `z` unchanged, which the descent
/// acceptance test then rejects.
pub fn newton_step(problem: &Problem, z: &FiniteParam) -> Result<FiniteParam> {
    if z.is_empty() {
        return Ok(z.clone());
    }
    let g = finite_gradient(problem, z)?;
    let dim = problem.domain.dim();
    let (lo, hi) = (problem.domain.lo(), problem.domain.hi());
    let v0 = z.to_vec();
    let npos = z.len() * dim;
    let free: Vec<usize> = (0..g.len())
        .filter(|&i| {
            if i >= npos {
                return true;
            }
            let (l, h) = (lo[i % dim], hi[i % dim]);
            let edge = 1e-12 * (h - l);
            let (at_lo, at_hi) = (v0[i] - l <= edge, h - v0[i] <= edge);
            !(at_lo && g[i] > 0.0 || at_hi && g[i] < 0.0)
        })
        .collect();
    if free.is_empty() {
        return Ok(z.clone());
    }
    let h_full = finite_hessian(problem, z)?;
    let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
    let hf = DMatrix::from_fn(free.len(), free.len(), |r, c| h_full[(free[r], free[c])]);
    let eig = SymmetricEigen::new(hf);
    let lmax = eig.eigenvalues.amax();
    if !(lmax > 0.0) {
        return Ok(z.clone());
    }
    let floor = 1e-14 * lmax;
    let mut df_raw = DVector::zeros(free.len());
    let mut df_desc = DVector::zeros(free.len());
    for i in 0..free.len() {
        let lam = eig.eigenvalues[i];
        if lam.abs() > floor {
            let q = eig.eigenvectors.column(i);
            let coef = q.dot(&gf);
            df_raw.axpy(-coef / lam, &q, 1.0);
            df_desc.axpy(-coef / lam.abs(), &q, 1.0);
        }
    }
    if !(df_raw.amax() > 0.0) {
        return Ok(z.clone());
    }
    let scatter = |df: &DVector<f64>| {
        let mut d = DVector::zeros(g.len());
        for (slot, &i) in free.iter().enumerate() {
            d[i] = df[slot];
        }
        d
    };
    let j0 = finite_objective(problem, z)?;
    let raw = projected_trial(problem, z, &scatter(&df_raw), 1.0);
    if finite_objective(problem, &raw).is_ok_and(|jt| jt <= j0) {
        return Ok(raw);
    }
    let d_pg = scatter(&(-&gf / lmax));
    for d in [scatter(&df_desc), d_pg] {
        let mut t = 1.0;
        for _ in 0..30 {
            let zt = projected_trial(problem, z, &d, t);
            if finite_objective(problem, &zt).is_ok_and(|jt| jt < j0) {
                return Ok(zt);
            }
            t *= 0.5;
        }
    }
    Ok(z.clone())
}

/// First Newton acceptance test: the proposal stays in the box, keeps total
/// mass at most `M`, and decreases the finite objective by at least
/// `(m/8)‖∇J_N(z)‖²`. Any NaN fails the test.
pub fn accept_newton_descent(
    problem: &Problem,
    z: &FiniteParam,
    z_plus: &FiniteParam,
    grad_norm_sq: f64,
    m_lo: f64,
    m_bound: f64,
) -> bool {
    if !(0..z_plus.len()).all(|j| problem.domain.contains(z_plus.position(j))) {
        return false;
    }
    let mass: f64 = z_plus.weights.iter().map(|w| w.abs()).sum();
    if !(mass <= m_bound) {
        return false;
    }
    let (Ok(j_new), Ok(j_old)) = (
        finite_objective(problem, z_plus),
        finite_objective(problem, z),
    ) else {
        return false;
    };
    j_new - j_old <= -(m_lo / 8.0) * grad_norm_sq
}

/// Second Newton acceptance test: the gradient is still large relative to
/// what the residual bound `r_J(u) ≤ 2Mε` permits. The threshold is
/// piecewise in `Mε` against the curvature constant and continuous at the
/// seam `Mε = C`; at `ε = 0` every gradient passes.
pub fn accept_newton_progress(
    grad_norm_sq: f64,
    eps: f64,
    m_hi: f64,
    c_curv: f64,
    m_bound: f64,
) -> bool {
    let me = m_bound * eps;
    let floor = if me <= c_curv {
        me * me / (2.0 * c_curv * m_hi)
    } else {
        (2.0 * me - c_curv) / (2.0 * m_hi)
    };
    grad_norm_sq >= floor
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::bench::experiments::build_heat_problem;
    use crate::fixtures::{Affine1d, GaussianBumps, LinearFidelity};
    use crate::model::{DomainBox, HyperParams, Quadratic};

    fn params(radius: f64, sigma: f64) -> HyperParams {
        HyperParams {
            gamma: 1.0,
            theta: 0.1,
            radius,
            sigma,
            lipschitz: 1.0,
            c_kernel: 1.0,
            c_kernel_prime: 1.0,
            m_lo: 0.001,
            m_hi: 0.1,
            merge_every: 5,
            m_bound: 10.0,
        }
    }

    /// One Gaussian bump at (0.5, 0.5), scalar observation, quadratic fit.
    fn one_bump(target: f64, alpha: f64) -> Problem {
        Problem::new(
            DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            Arc::new(GaussianBumps::new(vec![vec![0.5, 0.5]], 0.2)),
            Arc::new(Quadratic::new(vec![target])),
            alpha,
            params(0.05, 0.02),
        )
        .unwrap()
    }

    /// 1-D problem whose dual is the fixed function `p(x) = κ₁(x)`,
    /// independent of the measure.
    fn pinned_dual_1d(center: f64, radius: f64) -> Problem {
        Problem::new(
            DomainBox::new(vec![0.0], vec![1.0]).unwrap(),
            Arc::new(GaussianBumps::new(vec![vec![center]], 0.2)),
            Arc::new(LinearFidelity { g: vec![-1.0] }),
            0.1,
            params(radius, 0.02),
        )
        .unwrap()
    }

    #[test]
    fn lazy_hit_with_tiny_curvature_jumps_to_the_vertex() {
        let problem = one_bump(2.0, 0.1);
        let state = DualState::new(&problem, &SparseMeasure::empty()).unwrap();
        let cfg = SearchConfig::for_dim(2);
        let mut cache = CandidateCache::new(8);
        let (m_bound, eps) = (5.0, 1.0);
        let report = lgcg_step(&state, eps, 1e-9, m_bound, &mut cache, &cfg).unwrap();
        assert_eq!(report.call, CallKind::Lazy);
        assert_eq!(report.eps_out, eps);
        assert!(report.phi >= m_bound * eps);
        // η clamps to 1, so the iterate is exactly the vertex M sign δ
        assert_eq!(report.measure, report.direction);
        assert_eq!(report.measure.len(), 1);
        assert!((report.measure.atoms()[0].weight - m_bound).abs() < 1e-12);
    }

    #[test]
    fn exact_call_at_a_minimizer_certifies_and_stalls() {
        // u* = (t − α) δ_c minimizes the one-bump problem
        let problem = one_bump(2.0, 0.1);
        let ustar = SparseMeasure::from_atoms([(vec![0.5, 0.5], 1.9)]);
        let state = DualState::new(&problem, &ustar).unwrap();
        let cfg = SearchConfig::for_dim(2);
        let mut cache = CandidateCache::new(8);
        let m_bound = 5.0;
        let c = problem.params.curvature(m_bound);
        let report = lgcg_step(&state, 1e-3, c, m_bound, &mut cache, &cfg).unwrap();
        assert_eq!(report.call, CallKind::Exact);
        assert!(report.phi.abs() <= 1e-12, "Φ = {}", report.phi);
        assert!((0.0..=1e-10).contains(&report.eps_out));
        assert!(
            (report.measure.total_variation() - ustar.total_variation()).abs() <= 1e-9,
            "the iterate should barely move"
        );
    }

    #[test]
    fn descent_matches_the_lemma_bound_on_random_iterates() {
        let (problem, _) = build_heat_problem();
        let cfg = SearchConfig::for_dim(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = rng.gen_range(1..=3);
            let u = SparseMeasure::from_atoms((0..n).map(|_| {
                (
                    vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                    rng.gen_range(0.1..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                )
            }));
            let eps = rng.gen_range(1e-4..1.0);
            let m_bound = u.total_variation() + 1.0;
            let c = problem.params.curvature(m_bound);
            let state = DualState::new(&problem, &u).unwrap();
            let mut cache = CandidateCache::new(0);
            let report = lgcg_step(&state, eps, c, m_bound, &mut cache, &cfg).unwrap();
            let me = m_bound * report.eps_out;
            let bound = if me <= c { -me * me / (2.0 * c) } else { c / 2.0 - me };
            let slop = 1e-12 * state.objective().abs().max(1.0);
            assert!(
                report.descent <= bound + slop,
                "trial {trial}: descent {} vs bound {bound}",
                report.descent
            );
        }
    }

    #[test]
    fn drop_keeps_a_healthy_support() {
        let problem = one_bump(2.0, 0.1);
        let ustar = SparseMeasure::from_atoms([(vec![0.5, 0.5], 1.9)]);
        let state = DualState::new(&problem, &ustar).unwrap();
        assert_eq!(drop_step(&state).unwrap(), ustar);
    }

    #[test]
    fn drop_removes_an_atom_the_dual_no_longer_supports() {
        // the far atom sits where κ ≈ 0: |p| below the band, J drops with it
        let problem = Problem::new(
            DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            Arc::new(GaussianBumps::new(vec![vec![0.25, 0.5]], 0.05)),
            Arc::new(Quadratic::new(vec![1.0])),
            0.1,
            params(0.05, 0.02),
        )
        .unwrap();
        let u = SparseMeasure::from_atoms([(vec![0.25, 0.5], 0.5), (vec![0.9, 0.5], 0.3)]);
        let state = DualState::new(&problem, &u).unwrap();
        let dropped = drop_step(&state).unwrap();
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped.atoms()[0].position, vec![0.25, 0.5]);
        assert_eq!(dropped.atoms()[0].weight, 0.5);
    }

    #[test]
    fn drop_is_vetoed_when_it_would_increase_the_objective() {
        // p(c) = −0.2 disagrees with the positive weight, but J(0) > J(u)
        let problem = one_bump(1.0, 0.1);
        let u = SparseMeasure::from_atoms([(vec![0.5, 0.5], 1.2)]);
        let state = DualState::new(&problem, &u).unwrap();
        assert!(state.dual_value(&[0.5, 0.5]).unwrap() < 0.0);
        assert_eq!(drop_step(&state).unwrap(), u);
    }

    #[test]
    fn lsi_accepts_a_stationary_cluster_head_in_place() {
        // exact arithmetic: t − w = α, so p(c) = α and ∇p(c) = 0 exactly
        let problem = one_bump(2.25, 0.25);
        let ustar = SparseMeasure::from_atoms([(vec![0.5, 0.5], 2.0)]);
        let state = DualState::new(&problem, &ustar).unwrap();
        let cfg = SearchConfig::for_dim(2);
        let improvers = lsi(&state, 5.0, &cfg).unwrap();
        assert_eq!(improvers, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn lsi_skips_a_cluster_that_cannot_qualify() {
        let problem = one_bump(2.25, 0.25);
        let u = SparseMeasure::from_atoms([
            (vec![0.5, 0.5], 2.0),
            (vec![0.05, 0.05], 0.001), // κ ≈ 0 here: |p| ≈ 0, flat dual
        ]);
        let state = DualState::new(&problem, &u).unwrap();
        let cfg = SearchConfig::for_dim(2);
        let improvers = lsi(&state, 5.0, &cfg).unwrap();
        assert_eq!(improvers, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn lsi_step_without_improvers_is_the_identity() {
        let problem = one_bump(2.0, 0.1);
        let u = SparseMeasure::from_atoms([(vec![0.5, 0.5], 1.0)]);
        let state = DualState::new(&problem, &u).unwrap();
        let (u_plus, eta) = lsi_step_from(&state, &[], 5.0);
        assert_eq!(u_plus, u);
        assert_eq!(eta, 0.0);
    }

    #[test]
    fn lsi_step_with_tiny_constants_takes_a_full_step() {
        // shrink the curvature constants until η̃ clamps at 1
        let problem = Problem::new(
            DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            Arc::new(GaussianBumps::new(vec![vec![0.5, 0.5]], 0.2)),
            Arc::new(Quadratic::new(vec![2.25])),
            0.25,
            HyperParams {
                lipschitz: 1e-6,
                c_kernel_prime: 1e-3,
                ..params(0.05, 0.02)
            },
        )
        .unwrap();
        let ustar = SparseMeasure::from_atoms([(vec![0.5, 0.5], 2.0)]);
        let state = DualState::new(&problem, &ustar).unwrap();
        let cfg = SearchConfig::for_dim(2);
        let (u_plus, eta) = lsi_step(&state, 5.0, &cfg).unwrap();
        assert_eq!(eta, 1.0);
        assert_eq!(u_plus, ustar, "the full step re-lumps the mass in place");
    }

    #[test]
    fn local_merge_lumps_clusters_onto_their_heads() {
        // p(x) = exp(−(x − 0.5)²/0.08) is largest at the 0.5 cluster
        let problem = pinned_dual_1d(0.5, 0.075);
        let u = SparseMeasure::from_atoms([
            (vec![0.1], 0.5),
            (vec![0.2], 0.25),
            (vec![0.5], 1.0),
            (vec![0.58], 0.5),
        ]);
        let state = DualState::new(&problem, &u).unwrap();
        let merged = local_merge(&state);
        // heads: 0.5 (lumps 0.5 and 0.58), then 0.2 (lumps 0.1 and 0.2)
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.atoms()[0].position, vec![0.5]);
        assert!((merged.atoms()[0].weight - 1.5).abs() < 1e-15);
        assert_eq!(merged.atoms()[1].position, vec![0.2]);
        assert!((merged.atoms()[1].weight - 0.75).abs() < 1e-15);
    }

    #[test]
    fn local_merge_prunes_a_cancelled_lump() {
        let problem = pinned_dual_1d(0.3, 0.055);
        let u = SparseMeasure::from_atoms([
            (vec![0.3], 0.5),
            (vec![0.395], -0.5),
            (vec![0.5], 0.3),
        ]);
        let state = DualState::new(&problem, &u).unwrap();
        let merged = local_merge(&state);
        // the 0.3 lump cancels exactly; 0.395 also lands in the 0.5 ball
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.atoms()[0].position, vec![0.5]);
        assert!((merged.atoms()[0].weight - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn local_merge_counts_a_shared_atom_in_both_lumps() {
        let problem = pinned_dual_1d(0.3, 0.055);
        let u = SparseMeasure::from_atoms([
            (vec![0.3], 1.0),
            (vec![0.395], 0.25),
            (vec![0.5], -0.5),
        ]);
        let state = DualState::new(&problem, &u).unwrap();
        let merged = local_merge(&state);
        assert_eq!(merged.len(), 2);
        assert!((merged.atoms()[0].weight - 1.25).abs() < 1e-15);
        assert!((merged.atoms()[1].weight - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn newton_step_solves_the_bilinear_problem_in_one_move() {
        // J_N(x, λ) = g(ax + b)λ + α|λ|: the step lands on (−(gb + α)/(ga), 0)
        let (a, b, g, alpha) = (2.0, 0.5, 1.5, 0.1);
        let problem = Problem::new(
            DomainBox::new(vec![-1.0], vec![1.0]).unwrap(),
            Arc::new(Affine1d {
                slopes: vec![a],
                offsets: vec![b],
            }),
            Arc::new(LinearFidelity { g: vec![g] }),
            alpha,
            params(0.05, 0.02),
        )
        .unwrap();
        let z = FiniteParam {
            dim: 1,
            positions: vec![0.4],
            weights: vec![0.8],
        };
        let z_plus = newton_step(&problem, &z).unwrap();
        let x_expected = -(g * b + alpha) / (g * a);
        assert!((z_plus.positions[0] - x_expected).abs() <= 1e-13);
        assert!(z_plus.weights[0].abs() <= 1e-14);
    }

    #[test]
    fn newton_step_with_a_singular_hessian_stays_put() {
        // constant kernel: the finite Hessian vanishes identically
        let problem = Problem::new(
            DomainBox::new(vec![-1.0], vec![1.0]).unwrap(),
            Arc::new(Affine1d {
                slopes: vec![0.0],
                offsets: vec![1.0],
            }),
            Arc::new(LinearFidelity { g: vec![1.0] }),
            0.1,
            params(0.05, 0.02),
        )
        .unwrap();
        let z = FiniteParam {
            dim: 1,
            positions: vec![0.4],
            weights: vec![0.8],
        };
        assert_eq!(newton_step(&problem, &z).unwrap(), z);
    }

    #[test]
    fn newton_contracts_superlinearly_near_the_minimizer() {
        let problem = one_bump(2.0, 0.1);
        let mut z = FiniteParam {
            dim: 2,
            positions: vec![0.505, 0.503],
            weights: vec![1.91],
        };
        let mut g_norm = finite_gradient(&problem, &z).unwrap().norm();
        for _ in 0..4 {
            z = newton_step(&problem, &z).unwrap();
            let g_next = finite_gradient(&problem, &z).unwrap().norm();
            assert!(
                g_next <= g_norm.powf(1.5),
                "‖g₊‖ = {g_next} vs ‖g‖ = {g_norm}"
            );
            g_norm = g_next;
        }
        assert!(g_norm <= 1e-12);
    }

    #[test]
    fn descent_acceptance_checks_box_mass_and_sufficient_decrease() {
        let problem = one_bump(2.0, 0.1);
        let z = FiniteParam {
            dim: 2,
            positions: vec![0.5, 0.5],
            weights: vec![2.2],
        };
        let g_sq = finite_gradient(&problem, &z).unwrap().norm_squared();
        let good = FiniteParam {
            dim: 2,
            positions: vec![0.5, 0.5],
            weights: vec![1.9],
        };
        assert!(accept_newton_descent(&problem, &z, &good, g_sq, 0.001, 5.0));

        let out_of_box = FiniteParam {
            dim: 2,
            positions: vec![1.5, 0.5],
            weights: vec![1.9],
        };
        assert!(!accept_newton_descent(&problem, &z, &out_of_box, g_sq, 0.001, 5.0));
        assert!(
            !accept_newton_descent(&problem, &z, &good, g_sq, 0.001, 1.0),
            "mass bound M = 1 rejects λ = 1.9"
        );
        assert!(
            !accept_newton_descent(&problem, &z, &z, g_sq, 0.001, 5.0),
            "zero decrease is not sufficient"
        );
    }

    #[test]
    fn progress_acceptance_is_continuous_across_the_seam() {
        let (m_hi, c, m_bound) = (0.1, 2.0, 4.0);
        // at Mε = C both branches give the floor C/(2 m̄) = 10
        for eps in [0.5 * (1.0 - 1e-12), 0.5, 0.5 * (1.0 + 1e-12)] {
            assert!(accept_newton_progress(10.0 + 1e-7, eps, m_hi, c, m_bound));
            assert!(!accept_newton_progress(10.0 - 1e-7, eps, m_hi, c, m_bound));
        }
        assert!(
            accept_newton_progress(0.0, 0.0, m_hi, c, m_bound),
            "ε = 0 accepts any gradient"
        );
    }
}
