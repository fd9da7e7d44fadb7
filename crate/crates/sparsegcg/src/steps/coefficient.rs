//! The sign-fixed nonnegative coefficient problem and its inexact solver.
//!
//! For a sparse `u` with support `{x_j}` and signs `s_j = sign(u({x_j}))`,
//! the coefficient update minimizes
//!
//! ```text
//!   J^u(w) = F(Σ_j s_j c_j κ(x_j)) + α Σ_j c_j     over c ≥ 0,
//! ```
//!
//! i.e. it reoptimizes the weights on the frozen support with the sign of
//! every atom fixed. The solver only has to produce an iterate whose
//! primal-dual certificate
//!
//! ```text
//!   Φ^u(w) = M(max_j p^u_w(x_j) − α)₊ + α‖w‖ − ⟨p^u_w, w⟩
//!          = M(−min_j g_j)₊ + Σ_j c_j g_j,      g_j = α − p^u_w(x_j),
//! ```
//!
//! drops below the requested accuracy `Ψ` without increasing `J^u` above its
//! warm-start value. The default method is an active-set (semismooth Newton)
//! iteration on the free variables with a projected line search; a projected
//! gradient step with a conservative `1/λ_max` step size serves as fallback
//! whenever the Newton direction is unavailable or rejected.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::measures::SparseMeasure;
use crate::model::Problem;

/// One iterate of the sign-fixed coefficient problem.
#[derive(Clone, Debug)]
pub struct PositiveCoefState {
    /// Frozen support points `x_j` in atom order.
    pub positions: Vec<Vec<f64>>,
    /// Frozen signs `s_j = sign(u({x_j}))`.
    pub signs: Vec<f64>,
    /// Nonnegative weights `c_j`.
    pub weights: Vec<f64>,
    /// Certificate `Φ^u` evaluated at `weights`.
    pub certificate: f64,
}

/// Signed kernel columns `s_j κ(x_j)` plus evaluation helpers.
struct CoefProblem<'a> {
    problem: &'a Problem,
    cols: Vec<Vec<f64>>,
}

impl<'a> CoefProblem<'a> {
    fn new(problem: &'a Problem, positions: &[Vec<f64>], signs: &[f64]) -> Result<Self> {
        let m = problem.kernel.obs_dim();
        let mut cols = Vec::with_capacity(positions.len());
        let mut buf = vec![0.0; m];
        for (x, s) in positions.iter().zip(signs) {
            if !problem.domain.contains(x) {
                return Err(Error::OutOfDomain {
                    position: x.clone(),
                });
            }
            problem.kernel.value(x, &mut buf);
            cols.push(buf.iter().map(|v| s * v).collect());
        }
        Ok(Self { problem, cols })
    }

    fn n(&self) -> usize {
        self.cols.len()
    }

    fn observe(&self, c: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.problem.kernel.obs_dim()];
        for (col, cj) in self.cols.iter().zip(c) {
            for (yi, ai) in y.iter_mut().zip(col) {
                *yi += cj * ai;
            }
        }
        y
    }

    fn objective(&self, c: &[f64]) -> f64 {
        self.problem.fidelity.value(&self.observe(c))
            + self.problem.alpha * c.iter().sum::<f64>()
    }

    /// KKT residuals `g_j = α − p^u_w(x_j)` and the objective, one forward pass.
    fn kkt(&self, c: &[f64]) -> (Vec<f64>, f64) {
        let y = self.observe(c);
        let mut q = vec![0.0; y.len()];
        self.problem.fidelity.gradient(&y, &mut q);
        let obj = self.problem.fidelity.value(&y) + self.problem.alpha * c.iter().sum::<f64>();
        let g = self
            .cols
            .iter()
            .map(|col| col.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() + self.problem.alpha)
            .collect();
        (g, obj)
    }

    fn certificate(&self, c: &[f64], g: &[f64], m_bound: f64) -> f64 {
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        m_bound * (-gmin).max(0.0) + c.iter().zip(g).map(|(cj, gj)| cj * gj).sum::<f64>()
    }

    /// Reduced Hessian `H_ij = (s_i κ(x_i), ∇²F · s_j κ(x_j))`.
    fn hessian(&self, c: &[f64]) -> DMatrix<f64> {
        let y = self.observe(c);
        let n = self.n();
        let mut bcols = vec![vec![0.0; y.len()]; n];
        for (j, col) in self.cols.iter().enumerate() {
            self.problem.fidelity.hessian_apply(&y, col, &mut bcols[j]);
        }
        DMatrix::from_fn(n, n, |i, j| {
            self.cols[i].iter().zip(&bcols[j]).map(|(a, b)| a * b).sum()
        })
    }
}

/// Evaluates the certificate `Φ^u` at an arbitrary iterate of the positive
/// problem. Mathematically nonnegative; the returned value is the raw
/// floating-point evaluation.
pub fn positive_gap(problem: &Problem, w: &PositiveCoefState, m_bound: f64) -> Result<f64> {
    let cp = CoefProblem::new(problem, &w.positions, &w.signs)?;
    let (g, _) = cp.kkt(&w.weights);
    Ok(cp.certificate(&w.weights, &g, m_bound))
}

/// Newton direction `−H_FF⁺ g_F` on the free block via a rank-truncated
/// symmetric eigendecomposition, plus the projection of `−g_F` onto the
/// dropped eigenspace.
///
/// Clustered atoms make `H_FF` singular to working precision. A Cholesky
/// factorization can still "succeed" on such a block and return a direction
/// that is wrong by a factor of order one, and a general SVD may pair
/// inconsistent left/right bases within the noise-level spectral cluster,
/// yielding an *ascent* direction. Inverting on the kept eigenspace of one
/// orthogonal basis guarantees `gᵀd = −Σ (qᵢᵀg)²/λᵢ ≤ 0`. The dropped-space
/// projection is returned separately: along it the objective is effectively
/// linear, so the caller handles it with a boundary jump instead of a solve.
fn newton_direction(
    hff: &DMatrix<f64>,
    minus_gf: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let eig = SymmetricEigen::new(hff.clone());
    let lmax = eig.eigenvalues.amax();
    if !(lmax > 0.0) {
        return None;
    }
    let cut = 1e-14 * lmax;
    let n = minus_gf.len();
    let mut d = DVector::zeros(n);
    let mut dropped = DVector::zeros(n);
    for i in 0..n {
        let q = eig.eigenvectors.column(i);
        let coef = q.dot(minus_gf);
        if eig.eigenvalues[i] > cut {
            d.axpy(coef / eig.eigenvalues[i], &q, 1.0);
        } else {
            dropped.axpy(coef, &q, 1.0);
        }
    }
    Some((d, dropped))
}

/// One Newton-or-fallback update of `c`; `false` means no progress possible.
fn descend(cp: &CoefProblem, c: &mut Vec<f64>, g: &[f64], obj: f64) -> bool {
    let n = cp.n();
    let h = cp.hessian(c);

    // active-set Newton: variables clamped at zero with inward gradient stay put
    let free: Vec<usize> = (0..n).filter(|&j| c[j] > 0.0 || g[j] < 0.0).collect();
    if !free.is_empty() {
        let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let minus_gf = DVector::from_iterator(free.len(), free.iter().map(|&j| -g[j]));
        if let Some((mut d, nu)) = newton_direction(&hff, &minus_gf) {
            // Gradient in the dropped eigenspace — for clustered atoms a mass
            // swap between near-duplicate columns, along which the objective
            // is effectively linear. No curvature limits that move, so jump
            // to the first boundary along it; the ratio test below lands the
            // donor weight on zero exactly. Gate against the evaluation noise
            // of `g` so a pure-noise projection does not cause wandering.
            let gate = minus_gf.amax().max(cp.problem.alpha.abs());
            if nu.amax() > 1024.0 * f64::EPSILON * gate {
                let mass: f64 = free.iter().map(|&j| c[j]).sum();
                let mut t_b = (1.0 + mass) / nu.amax().max(f64::MIN_POSITIVE);
                for (a, &j) in free.iter().enumerate() {
                    if nu[a] < 0.0 && c[j] > 0.0 {
                        t_b = t_b.min(c[j] / -nu[a]);
                    }
                }
                d += nu * t_b;
            }
            // primal ratio test: stop at the first weight driven to zero and
            // land on the boundary exactly — clamping instead leaves residue
            // behind that keeps the complementarity term of Φ^u nonzero
            let mut t_max = 1.0;
            let mut blocking = None;
            for (a, &j) in free.iter().enumerate() {
                if c[j] > 0.0 && d[a] < 0.0 {
                    let ratio = -c[j] / d[a];
                    if ratio < t_max {
                        t_max = ratio;
                        blocking = Some(j);
                    }
                }
            }
            // near the minimizer a genuine Newton improvement is smaller than
            // the evaluation noise of the objective, so allow a few ulps of
            // slack; along a damped Newton step of a convex model the exact
            // objective cannot rise, only its floating-point image can
            let accept = obj + 4.0 * f64::EPSILON * obj.abs();
            let mut t = t_max;
            for _ in 0..40 {
                let mut trial = c.clone();
                for (a, &j) in free.iter().enumerate() {
                    trial[j] = (trial[j] + t * d[a]).max(0.0);
                }
                if t == t_max {
                    if let Some(j) = blocking {
                        trial[j] = 0.0;
                    }
                }
                if trial != *c && cp.objective(&trial) <= accept {
                    *c = trial;
                    return true;
                }
                t *= 0.5;
            }
        }
    }

    // projected gradient fallback, step 1/λ_max via a row-sum bound; strict
    // descent only, so exhaustion here ends the solve instead of cycling
    let lam = (0..n)
        .map(|i| (0..n).map(|j| h[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut t = 1.0 / lam;
    for _ in 0..60 {
        let trial: Vec<f64> = c.iter().zip(g).map(|(cj, gj)| (cj - t * gj).max(0.0)).collect();
        if trial != *c && cp.objective(&trial) < obj {
            *c = trial;
            return true;
        }
        t *= 0.5;
    }
    false
}

/// Inexact coefficient update: warm-starts at `w₀ = |u|` and iterates until
/// `Φ^u(w) ≤ psi` (the objective never rises above the warm start, so the
/// second exit condition `J^u(w₊) ≤ J^u(w₀)` holds throughout). Returns the
/// reweighted measure `u₊ = Σ_j s_j c_j δ_{x_j}` (pruned) together with the
/// solver state.
///
/// Fails with [`Error::CoefficientStall`] if the certificate has not dropped
/// below `psi` after `max_inner` updates.
pub fn coefficient_step(
    problem: &Problem,
    u: &SparseMeasure,
    psi: f64,
    m_bound: f64,
    max_inner: usize,
) -> Result<(SparseMeasure, PositiveCoefState)> {
    if u.atoms().is_empty() {
        return Err(Error::EmptyRepresenter);
    }
    let positions = u.atoms().iter().map(|a| a.position.clone()).collect();
    let signs = u.atoms().iter().map(|a| a.weight.signum()).collect();
    let warm = u.atoms().iter().map(|a| a.weight.abs()).collect();
    coefficient_solve(problem, positions, signs, warm, psi, m_bound, max_inner)
}

/// [`coefficient_step`] with an explicit support, sign pattern, and warm
/// start. Entries of `warm` may be zero — this is how a freshly inserted
/// atom enters the problem before it carries any mass.
pub fn coefficient_solve(
    problem: &Problem,
    positions: Vec<Vec<f64>>,
    signs: Vec<f64>,
    warm: Vec<f64>,
    psi: f64,
    m_bound: f64,
    max_inner: usize,
) -> Result<(SparseMeasure, PositiveCoefState)> {
    debug_assert!(psi > 0.0, "coefficient accuracy must be positive");
    debug_assert!(positions.len() == signs.len() && signs.len() == warm.len());
    let cp = CoefProblem::new(problem, &positions, &signs)?;
    let mut c = warm;

    for iters in 0..max_inner {
        let (g, obj) = cp.kkt(&c);
        let cert = cp.certificate(&c, &g, m_bound);
        if cert <= psi {
            return Ok(assemble(positions, signs, c, cert));
        }
        if !descend(&cp, &mut c, &g, obj) {
            return Err(Error::CoefficientStall {
                iters,
                certificate: cert,
                target: psi,
            });
        }
    }
    let (g, _) = cp.kkt(&c);
    let cert = cp.certificate(&c, &g, m_bound);
    if cert <= psi {
        return Ok(assemble(positions, signs, c, cert));
    }
    Err(Error::CoefficientStall {
        iters: max_inner,
        certificate: cert,
        target: psi,
    })
}

fn assemble(
    positions: Vec<Vec<f64>>,
    signs: Vec<f64>,
    weights: Vec<f64>,
    certificate: f64,
) -> (SparseMeasure, PositiveCoefState) {
    let u_plus = SparseMeasure::from_atoms(
        positions
            .iter()
            .cloned()
            .zip(signs.iter().zip(&weights).map(|(s, c)| s * c)),
    );
    (
        u_plus,
        PositiveCoefState {
            positions,
            signs,
            weights,
            certificate,
        },
    )
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bench::experiments::build_heat_problem;
    use crate::fixtures::GaussianBumps;
    use crate::model::{DomainBox, DualState, HyperParams, Problem, Quadratic};

    fn one_bump(target: f64) -> Problem {
        Problem::new(
            DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            Arc::new(GaussianBumps::new(vec![vec![0.5, 0.5]], 0.2)),
            Arc::new(Quadratic::new(vec![target])),
            0.1,
            HyperParams {
                gamma: 1.0,
                theta: 0.1,
                radius: 0.05,
                sigma: 0.02,
                lipschitz: 1.0,
                c_kernel: 1.0,
                c_kernel_prime: 1.0,
                m_lo: 0.001,
                m_hi: 0.1,
                merge_every: 5,
                m_bound: 10.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn one_atom_reaches_the_soft_threshold() {
        // single atom, quadratic fidelity: c* = ((κ(x), y†) − α)₊ / ‖κ(x)‖²
        let (problem, truth) = build_heat_problem();
        let y_dagger = problem.forward(&truth).unwrap();
        let x = vec![0.3, 0.4];
        let mut kappa = vec![0.0; 16];
        problem.kernel.value(&x, &mut kappa);
        let corr: f64 = kappa.iter().zip(&y_dagger).map(|(a, b)| a * b).sum();
        let norm2: f64 = kappa.iter().map(|v| v * v).sum();
        let c_star = ((corr - 0.1) / norm2).max(0.0);
        assert!((c_star - 0.4282223979354529).abs() < 1e-13, "frozen oracle");

        let u = SparseMeasure::from_atoms([(x, 1.0)]);
        let m_bound = problem.params.m_bound;
        let (u_plus, state) = coefficient_step(&problem, &u, 1e-12, m_bound, 500).unwrap();
        assert!((state.weights[0] - c_star).abs() <= 1e-10, "{}", state.weights[0]);
        assert!(state.certificate <= 1e-12);
        assert!((u_plus.atoms()[0].weight - c_star).abs() <= 1e-10);
    }

    #[test]
    fn infinite_accuracy_accepts_the_warm_start() {
        let (problem, truth) = build_heat_problem();
        let (u_plus, state) =
            coefficient_step(&problem, &truth, f64::INFINITY, 200.0, 500).unwrap();
        assert_eq!(u_plus, truth);
        let warm: Vec<f64> = truth.atoms().iter().map(|a| a.weight.abs()).collect();
        assert_eq!(state.weights, warm);
    }

    #[test]
    fn optimal_warm_start_certifies_immediately() {
        // u* = (t − α) δ_c is the exact minimizer of the one-bump problem
        let problem = one_bump(2.0);
        let ustar = SparseMeasure::from_atoms([(vec![0.5, 0.5], 1.9)]);
        let (u_plus, state) = coefficient_step(&problem, &ustar, 1e-12, 5.0, 500).unwrap();
        assert!(state.certificate.abs() <= 1e-14, "Φ = {}", state.certificate);
        assert_eq!(u_plus, ustar);
        // and a suboptimal warm start converges back to it
        let u0 = SparseMeasure::from_atoms([(vec![0.5, 0.5], 0.4)]);
        let (_, state) = coefficient_step(&problem, &u0, 1e-12, 5.0, 500).unwrap();
        assert!((state.weights[0] - 1.9).abs() <= 1e-10, "{}", state.weights[0]);
    }

    #[test]
    fn certificate_matches_finite_gap_near_optimality() {
        // Φ^u(w) = Φ_{A_u}(v^u_w) whenever J(v^u_w) ≤ J(u) and signs match
        let problem = one_bump(2.0);
        let u = SparseMeasure::from_atoms([(vec![0.5, 0.5], 1.92)]);
        let w = PositiveCoefState {
            positions: vec![vec![0.5, 0.5]],
            signs: vec![1.0],
            weights: vec![1.91],
            certificate: 0.0,
        };
        let m_bound = 5.0;
        let phi_u = positive_gap(&problem, &w, m_bound).unwrap();
        let v = SparseMeasure::from_atoms([(vec![0.5, 0.5], 1.91)]);
        assert!(problem.objective(&v).unwrap() <= problem.objective(&u).unwrap());
        let state = DualState::new(&problem, &v).unwrap();
        let phi_a = state.finite_gap([&[0.5, 0.5][..]], m_bound).unwrap();
        assert!((phi_u - phi_a).abs() <= 1e-12, "{phi_u} vs {phi_a}");
    }

    #[test]
    fn zero_weights_certificate_is_the_positive_part_term() {
        let (problem, truth) = build_heat_problem();
        let y_dagger = problem.forward(&truth).unwrap();
        let positions = vec![vec![0.3, 0.4], vec![0.7, 0.5]];
        let signs = vec![1.0, -1.0];
        let w = PositiveCoefState {
            positions: positions.clone(),
            signs: signs.clone(),
            weights: vec![0.0, 0.0],
            certificate: 0.0,
        };
        let m_bound = 50.0;
        // at w = 0 the dual of the positive problem is s_j (κ(x_j), y†)
        let mut best = f64::NEG_INFINITY;
        let mut buf = vec![0.0; 16];
        for (x, s) in positions.iter().zip(&signs) {
            problem.kernel.value(x, &mut buf);
            let p: f64 = buf.iter().zip(&y_dagger).map(|(a, b)| a * b).sum::<f64>() * s;
            best = best.max(p);
        }
        let want = m_bound * (best - 0.1).max(0.0);
        let got = positive_gap(&problem, &w, m_bound).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn unreachable_accuracy_reports_a_stall() {
        let (problem, truth) = build_heat_problem();
        let err = coefficient_step(&problem, &truth, 1e-300, 200.0, 3).unwrap_err();
        match err {
            Error::CoefficientStall { iters, certificate, target } => {
                assert!(iters <= 3);
                assert!(certificate > target);
            }
            other => panic!("expected a stall, got {other:?}"),
        }
        assert!(matches!(
            coefficient_step(&problem, &SparseMeasure::empty(), 1.0, 1.0, 10),
            Err(Error::EmptyRepresenter)
        ));
    }

    #[test]
    fn solver_reoptimizes_the_bench_support_to_tight_certificates() {
        // three-atom heat support, badly scaled warm start; the certificate
        // target here is close to the noise floor used by reference solves
        let (problem, truth) = build_heat_problem();
        let u0 = SparseMeasure::from_atoms(
            truth
                .atoms()
                .iter()
                .map(|a| (a.position.clone(), 2.0 * a.weight)),
        );
        let m_bound = 10.0;
        let (u_plus, state) = coefficient_step(&problem, &u0, 1e-13, m_bound, 500).unwrap();
        assert!(state.certificate <= 1e-13);
        assert!(
            problem.objective(&u_plus).unwrap() <= problem.objective(&u0).unwrap(),
            "no ascent over the warm start"
        );
        // the fidelity is quadratic, so the certificate should recompute cleanly
        let recheck = positive_gap(&problem, &state, m_bound).unwrap();
        assert!((recheck - state.certificate).abs() <= 1e-14);
    }
}
