//! The four top-level solvers — PDAP, LGCG, LPDAP, NLGCG — with ε/Ψ
//! bookkeeping, recompute loops, termination tests, and trace recording.
//!
//! All drivers start from the zero measure, share the step primitives from
//! [`crate::steps`], and record one [`TraceRow`] per event. Accepted iterates
//! have nonincreasing objective values; candidate rows (`Newton`, `Merge`)
//! may sit above the accepted chain because each driver selects the best
//! candidate afterwards.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::measures::{measure_of, SparseMeasure};
use crate::model::{finite_gradient, DualState, Problem};
use crate::search::{exact_max, same_bits, CandidateCache, SearchConfig};
use crate::steps::{
    accept_newton_descent, accept_newton_progress, coefficient_solve, coefficient_step,
    drop_step, lgcg_step, local_merge, lsi, lsi_step_from, newton_step, CallKind,
};

/// Safety cap on the Newton phase within one outer iteration.
const INNER_CAP: usize = 10_000;

/// Configuration shared by all four drivers.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Termination tolerance for the driver's gap proxy.
    pub tol: f64,
    /// Hard cap on outer iterations; reaching it means non-convergence.
    pub max_outer: usize,
    /// Initial lazy accuracy `ε₁`; `None` picks `J(u₀)/(2M₀)`, which makes
    /// the precondition `r_J(u₁) ≤ 2Mε₁` hold because `min J ≥ 0`.
    pub eps_init: Option<f64>,
    /// Initial coefficient accuracy `Ψ₁`; `None` picks `max(1, J(u₀))`.
    pub psi_init: Option<f64>,
    /// Shrink the mass bound to `M_k = J(u_k)/β` after every accepted
    /// iterate (valid since `α‖u‖ ≤ J(u)`), updating `C` in lockstep.
    pub dynamic_m: bool,
    /// The `β` in `M_k = J(u_k)/β`; `None` uses `α`. Values above `α` are
    /// not mass-safe in general.
    pub m_beta: Option<f64>,
    /// Search configuration; `None` picks [`SearchConfig::for_dim`].
    pub search: Option<SearchConfig>,
    /// Iteration cap for each inner coefficient solve.
    pub coef_max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_outer: 10_000,
            eps_init: None,
            psi_init: None,
            dynamic_m: true,
            m_beta: None,
            search: None,
            coef_max_iters: 500,
        }
    }
}

/// Event type of a [`TraceRow`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceCall {
    Lazy,
    Exact,
    Newton,
    Merge,
    Drop,
    Coef,
    Recompute,
}

impl TraceCall {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceCall::Lazy => "lazy",
            TraceCall::Exact => "exact",
            TraceCall::Newton => "newton",
            TraceCall::Merge => "merge",
            TraceCall::Drop => "drop",
            TraceCall::Coef => "coef",
            TraceCall::Recompute => "recompute",
        }
    }
}

impl From<CallKind> for TraceCall {
    fn from(k: CallKind) -> Self {
        match k {
            CallKind::Lazy => TraceCall::Lazy,
            CallKind::Exact => TraceCall::Exact,
        }
    }
}

/// One recorded solver event.
#[derive(Clone, Debug)]
pub struct TraceRow {
    /// Outer iteration.
    pub k: usize,
    /// Inner step (Newton phase) or recompute pass; 0 otherwise.
    pub s: usize,
    /// Seconds since the driver started.
    pub time_s: f64,
    /// Objective of the measure this event produced (∞ if infeasible).
    pub j: f64,
    /// Gap or gap estimate attached to the event: `φ(u, v)` for LGCG calls,
    /// the certificate `Φ^u(w)` for coefficient solves, `‖∇J_N‖²` for
    /// Newton proposals, 0 where nothing applies.
    pub gap_est: f64,
    /// Lazy accuracy `ε` in effect after the event.
    pub eps: f64,
    /// Support size of the produced measure.
    pub support_size: usize,
    /// Event type.
    pub call: TraceCall,
    /// Mass bound `M` in effect.
    pub m_bound: f64,
    /// Curvature constant `C` in effect.
    pub c_curv: f64,
}

/// Full record of one driver run.
#[derive(Clone, Debug)]
pub struct Trace {
    /// `"pdap" | "lgcg" | "lpdap" | "nlgcg"`.
    pub solver: &'static str,
    pub rows: Vec<TraceRow>,
    /// Whether the driver's termination test fired (vs. hitting `max_outer`
    /// or stalling).
    pub converged: bool,
    /// Diagnostic for aborted runs (e.g. a coefficient stall).
    pub failure: Option<String>,
    pub lazy_calls: usize,
    pub exact_calls: usize,
    pub recomputes: usize,
    /// Final iterate.
    pub final_measure: SparseMeasure,
    /// Objective of the final iterate.
    pub final_j: f64,
    /// Total wall-clock seconds.
    pub wall_s: f64,
}

/// Per-row residuals `max(J − J_ref, 0)` against a converged reference value.
pub fn estimate_residual(trace: &Trace, reference_j: f64) -> Vec<f64> {
    trace
        .rows
        .iter()
        .map(|r| (r.j - reference_j).max(0.0))
        .collect()
}

/// Observer invoked on every recorded row together with the measure the
/// event produced. Used by tests to monitor invariants mid-run.
pub type Observer<'a> = &'a mut dyn FnMut(&TraceRow, &SparseMeasure);

struct Recorder<'a> {
    t0: Instant,
    rows: Vec<TraceRow>,
    lazy: usize,
    exact: usize,
    recomputes: usize,
    observer: Option<Observer<'a>>,
}

impl<'a> Recorder<'a> {
    fn new(observer: Option<Observer<'a>>) -> Self {
        Self {
            t0: Instant::now(),
            rows: Vec::new(),
            lazy: 0,
            exact: 0,
            recomputes: 0,
            observer,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        k: usize,
        s: usize,
        j: f64,
        gap_est: f64,
        eps: f64,
        call: TraceCall,
        m_bound: f64,
        c_curv: f64,
        measure: &SparseMeasure,
    ) {
        match call {
            TraceCall::Lazy => self.lazy += 1,
            TraceCall::Exact => self.exact += 1,
            TraceCall::Recompute => self.recomputes += 1,
            _ => {}
        }
        let row = TraceRow {
            k,
            s,
            time_s: self.t0.elapsed().as_secs_f64(),
            j,
            gap_est,
            eps,
            support_size: measure.len(),
            call,
            m_bound,
            c_curv,
        };
        if let Some(obs) = self.observer.as_mut() {
            obs(&row, measure);
        }
        self.rows.push(row);
    }

    fn finish(
        self,
        solver: &'static str,
        converged: bool,
        failure: Option<String>,
        final_measure: SparseMeasure,
        final_j: f64,
    ) -> Trace {
        Trace {
            solver,
            rows: self.rows,
            converged,
            failure,
            lazy_calls: self.lazy,
            exact_calls: self.exact,
            recomputes: self.recomputes,
            final_measure,
            final_j,
            wall_s: self.t0.elapsed().as_secs_f64(),
        }
    }
}

/// Mass-bound policy: either the static `HyperParams::m_bound` or the
/// dynamic `J(u_k)/β`.
struct MassBound {
    dynamic: bool,
    beta: f64,
    static_m: f64,
}

impl MassBound {
    fn new(problem: &Problem, opts: &SolverOptions) -> Self {
        Self {
            dynamic: opts.dynamic_m,
            beta: opts.m_beta.unwrap_or(problem.alpha),
            static_m: problem.params.m_bound,
        }
    }

    fn at(&self, j: f64) -> f64 {
        if self.dynamic {
            j / self.beta
        } else {
            self.static_m
        }
    }
}

fn search_config(problem: &Problem, opts: &SolverOptions) -> SearchConfig {
    opts.search
        .clone()
        .unwrap_or_else(|| SearchConfig::for_dim(problem.domain.dim()))
}

fn eps_auto(j0: f64, m0: f64, opts: &SolverOptions) -> f64 {
    opts.eps_init.unwrap_or(j0 / (2.0 * m0))
}

fn psi_auto(j0: f64, opts: &SolverOptions) -> f64 {
    opts.psi_init.unwrap_or_else(|| j0.max(1.0))
}

fn stall_message(e: &Error) -> String {
    format!("coefficient solve stalled: {e}")
}

/// Primal-dual active point baseline: exact global search, insert the found
/// point, re-optimize all coefficients to the fixed accuracy
/// `Ψ = 10⁻¹⁴·max(1, J(u₀))`, prune, repeat. Every direction call is exact;
/// terminates when `Φ(u_k) ≤ tol`.
pub fn run_pdap(problem: &Problem, opts: &SolverOptions) -> Result<Trace> {
    pdap_impl(problem, opts, None)
}

/// [`run_pdap`] with an observer.
pub fn run_pdap_with(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Observer<'_>,
) -> Result<Trace> {
    pdap_impl(problem, opts, Some(observer))
}

fn pdap_impl(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Option<Observer<'_>>,
) -> Result<Trace> {
    let cfg = search_config(problem, opts);
    let bounds = MassBound::new(problem, opts);
    let mut rec = Recorder::new(observer);

    let mut u = SparseMeasure::empty();
    let mut j = problem.objective(&u)?;
    let psi = 1e-14 * j.max(1.0);

    let mut converged = false;
    let mut failure = None;
    for k in 1..=opts.max_outer {
        let m = bounds.at(j);
        let c = problem.params.curvature(m);
        let state = DualState::new(problem, &u)?;
        let support: Vec<&[f64]> = u.positions().collect();
        let (xhat, value) = exact_max(&state, &support, &cfg);
        let phi = m * (value - problem.alpha).max(0.0) + state.slack();
        let eps = phi.max(0.0) / (2.0 * m);
        rec.push(k, 0, j, phi, eps, TraceCall::Exact, m, c, &u);
        if phi <= opts.tol {
            converged = true;
            break;
        }

        let mut positions: Vec<Vec<f64>> = u.atoms().iter().map(|a| a.position.clone()).collect();
        let mut signs: Vec<f64> = u.atoms().iter().map(|a| a.weight.signum()).collect();
        let mut warm: Vec<f64> = u.atoms().iter().map(|a| a.weight.abs()).collect();
        if !positions.iter().any(|p| same_bits(p, &xhat)) {
            signs.push(state.dual_value_raw(&xhat).signum());
            warm.push(0.0);
            positions.push(xhat);
        }
        match coefficient_solve(problem, positions, signs, warm, psi, m, opts.coef_max_iters) {
            Ok((u_next, coef)) => {
                u = u_next;
                j = problem.objective(&u)?;
                rec.push(k, 0, j, coef.certificate, eps, TraceCall::Coef, m, c, &u);
            }
            Err(e @ Error::CoefficientStall { .. }) => {
                failure = Some(stall_message(&e));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(rec.finish("pdap", converged, failure, u, j))
}

/// Pure lazified conditional gradient: one [`lgcg_step`] per iteration,
/// terminating when `2Mε_k ≤ tol` or an exact call certifies `ε_{k+1} = 0`.
pub fn run_lgcg(problem: &Problem, opts: &SolverOptions) -> Result<Trace> {
    lgcg_impl(problem, opts, None)
}

/// [`run_lgcg`] with an observer.
pub fn run_lgcg_with(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Observer<'_>,
) -> Result<Trace> {
    lgcg_impl(problem, opts, Some(observer))
}

fn lgcg_impl(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Option<Observer<'_>>,
) -> Result<Trace> {
    let cfg = search_config(problem, opts);
    let bounds = MassBound::new(problem, opts);
    let mut rec = Recorder::new(observer);
    let mut cache = CandidateCache::new(cfg.cache_size);

    let mut u = SparseMeasure::empty();
    let mut j = problem.objective(&u)?;
    let mut eps = eps_auto(j, bounds.at(j), opts);

    let mut converged = false;
    for k in 1..=opts.max_outer {
        let m = bounds.at(j);
        let c = problem.params.curvature(m);
        if 2.0 * m * eps <= opts.tol {
            converged = true;
            break;
        }
        let state = DualState::new(problem, &u)?;
        let report = lgcg_step(&state, eps, c, m, &mut cache, &cfg)?;
        u = report.measure;
        j = problem.objective(&u)?;
        eps = report.eps_out;
        rec.push(k, 0, j, report.phi, eps, report.call.into(), m, c, &u);
        if eps == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(rec.finish("lgcg", converged, None, u, j))
}

/// Lazified PDAP: per outer iteration an inexact coefficient solve at
/// accuracy `Ψ_k`, a local-support-improver step (whose improver points
/// prime the lazy search cache), and one LGCG step at the unchanged `ε_k`.
/// If the achieved coefficient certificate exceeds `φ(u_k, v_k)/2` the
/// iteration restarts from the coefficient solve with `Ψ_k/2` (a
/// *recompute*). Otherwise the better of the two proposals is accepted and
/// cleaned by a drop step. Terminates with `u_k` once `φ(u_k, v_k) ≤ tol`
/// or an exact call certifies `ε_{k+1} = 0`.
pub fn run_lpdap(problem: &Problem, opts: &SolverOptions) -> Result<Trace> {
    lpdap_impl(problem, opts, None)
}

/// [`run_lpdap`] with an observer.
pub fn run_lpdap_with(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Observer<'_>,
) -> Result<Trace> {
    lpdap_impl(problem, opts, Some(observer))
}

fn lpdap_impl(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Option<Observer<'_>>,
) -> Result<Trace> {
    let cfg = search_config(problem, opts);
    let bounds = MassBound::new(problem, opts);
    let mut rec = Recorder::new(observer);
    let mut cache = CandidateCache::new(cfg.cache_size);

    // u₀ = 0 and DropStep(0) = 0
    let mut u_minus = SparseMeasure::empty();
    let mut j = problem.objective(&u_minus)?;
    let mut eps = eps_auto(j, bounds.at(j), opts);
    let mut psi = psi_auto(j, opts);

    let mut final_u = u_minus.clone();
    let mut final_j = j;
    let mut converged = false;
    let mut failure = None;
    'outer: for k in 1..=opts.max_outer {
        let m = bounds.at(j);
        let c = problem.params.curvature(m);
        let mut s = 0; // recompute passes within this k
        loop {
            // coefficient solve on the frozen support (no-op when empty)
            let (u_k, cert) = if u_minus.is_empty() {
                (u_minus.clone(), 0.0)
            } else {
                match coefficient_step(problem, &u_minus, psi, m, opts.coef_max_iters) {
                    Ok((u_k, w)) => (u_k, w.certificate),
                    Err(e @ Error::CoefficientStall { .. }) => {
                        failure = Some(stall_message(&e));
                        final_u = u_minus.clone();
                        final_j = j;
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                }
            };
            let state_k = DualState::new(problem, &u_k)?;
            let j_k = state_k.objective();
            rec.push(k, s, j_k, cert, eps, TraceCall::Coef, m, c, &u_k);

            // local support improvers; found points prime the lazy oracle
            let improvers = lsi(&state_k, m, &cfg)?;
            for x in &improvers {
                cache.insert(x);
            }
            let (u_tilde, _eta) = lsi_step_from(&state_k, &improvers, m);
            let j_tilde = problem.objective(&u_tilde)?;
            rec.push(k, s, j_tilde, 0.0, eps, TraceCall::Merge, m, c, &u_tilde);

            // one LGCG step from u_k at the unchanged ε_k
            let report = lgcg_step(&state_k, eps, c, m, &mut cache, &cfg)?;
            let j_hat = problem.objective(&report.measure)?;
            rec.push(
                k,
                s,
                j_hat,
                report.phi,
                report.eps_out,
                report.call.into(),
                m,
                c,
                &report.measure,
            );

            if report.eps_out == 0.0 || report.phi <= opts.tol {
                final_u = u_k;
                final_j = j_k;
                converged = true;
                break 'outer;
            }
            if cert > report.phi / 2.0 {
                // the coefficient solve was too loose for this gap: halve Ψ
                // and redo the pass from the same u_{k−} at the same ε_k
                psi /= 2.0;
                s += 1;
                rec.push(k, s, j_k, cert, eps, TraceCall::Recompute, m, c, &u_k);
                continue;
            }

            // accept the better of the LSI and LGCG proposals, then clean up;
            // ties go to the LGCG measure — it carries the freshly inserted
            // atom, whose objective change can round to zero, and the next
            // coefficient solve is what turns it into actual descent
            let u_plus = if j_hat <= j_tilde {
                report.measure
            } else {
                u_tilde
            };
            let state_plus = DualState::new(problem, &u_plus)?;
            u_minus = drop_step(&state_plus)?;
            j = problem.objective(&u_minus)?;
            eps = report.eps_out;
            rec.push(k, s, j, 0.0, eps, TraceCall::Drop, m, c, &u_minus);
            final_u = u_minus.clone();
            final_j = j;
            break;
        }
    }
    Ok(rec.finish("lpdap", converged, failure, final_u, final_j))
}

/// Semismooth-Newton-accelerated LGCG: each outer iteration performs one
/// LGCG step, a drop, a coefficient solve, and a local merge, then runs an
/// inner Newton phase on the minimal representer guarded by two acceptance
/// tests (a progress test against `ε` that is rechecked after an
/// interleaved LGCG step before giving up, and a sufficient-decrease test),
/// with a periodic drop+merge every `S = merge_every` inner steps. Merging
/// trades objective change against the lazy accuracy via `ε ← ε + ΔJ/(2M)`.
/// The next outer iterate is the candidate with the least objective.
/// Terminates when any `ε` reaches 0 or `2Mε ≤ tol`.
pub fn run_nlgcg(problem: &Problem, opts: &SolverOptions) -> Result<Trace> {
    nlgcg_impl(problem, opts, None)
}

/// [`run_nlgcg`] with an observer.
pub fn run_nlgcg_with(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Observer<'_>,
) -> Result<Trace> {
    nlgcg_impl(problem, opts, Some(observer))
}

fn nlgcg_impl(
    problem: &Problem,
    opts: &SolverOptions,
    observer: Option<Observer<'_>>,
) -> Result<Trace> {
    let cfg = search_config(problem, opts);
    let bounds = MassBound::new(problem, opts);
    let mut rec = Recorder::new(observer);
    let mut cache = CandidateCache::new(cfg.cache_size);
    let merge_every = problem.params.merge_every;

    let mut u = SparseMeasure::empty();
    let mut j = problem.objective(&u)?;
    let mut eps = eps_auto(j, bounds.at(j), opts);
    let mut psi = psi_auto(j, opts);

    let mut converged = false;
    let mut failure = None;
    for k in 1..=opts.max_outer {
        let m = bounds.at(j);
        let c = problem.params.curvature(m);
        if 2.0 * m * eps <= opts.tol {
            converged = true;
            break;
        }

        // outer LGCG step
        let state = DualState::new(problem, &u)?;
        let report = lgcg_step(&state, eps, c, m, &mut cache, &cfg)?;
        let u_gcg = report.measure;
        let j_gcg = problem.objective(&u_gcg)?;
        let eps_next = report.eps_out;
        if std::env::var_os("NLGCG_DEBUG").is_some() {
            eprintln!(
                "k={k} outer-{:?} phi={:.3e} Meps={:.3e} dir={:?} n={} J={j_gcg:.12}",
                report.call,
                report.phi,
                m * eps,
                report
                    .direction
                    .atoms()
                    .first()
                    .map(|a| (a.position.clone(), a.weight)),
                u_gcg.len()
            );
        }
        rec.push(k, 0, j_gcg, report.phi, eps_next, report.call.into(), m, c, &u_gcg);
        if eps_next == 0.0 {
            // the exact call certified Φ(u_k) ≤ 0, so u_k — which u_gcg
            // equals, the step length was zero — is a minimizer
            u = u_gcg;
            j = j_gcg;
            converged = true;
            break;
        }

        // drop, coefficient solve, local merge
        let u_drop = drop_step(&DualState::new(problem, &u_gcg)?)?;
        let j_drop = problem.objective(&u_drop)?;
        rec.push(k, 0, j_drop, 0.0, eps_next, TraceCall::Drop, m, c, &u_drop);
        let (u_coef, cert) = if u_drop.is_empty() {
            (u_drop.clone(), 0.0)
        } else {
            match coefficient_step(problem, &u_drop, psi, m, opts.coef_max_iters) {
                Ok((u_coef, w)) => (u_coef, w.certificate),
                Err(e @ Error::CoefficientStall { .. }) => {
                    failure = Some(stall_message(&e));
                    u = u_drop;
                    j = j_drop;
                    break;
                }
                Err(e) => return Err(e),
            }
        };
        let j_coef = problem.objective(&u_coef)?;
        rec.push(k, 0, j_coef, cert, eps_next, TraceCall::Coef, m, c, &u_coef);

        let u_k1 = local_merge(&DualState::new(problem, &u_coef)?);
        let j_k1 = problem.objective(&u_k1)?;
        // merging trades objective change against the lazy accuracy
        let mut eps_s = eps_next + (j_k1 - j_coef) / (2.0 * m);
        rec.push(k, 0, j_k1, 0.0, eps_s, TraceCall::Merge, m, c, &u_k1);
        if std::env::var_os("NLGCG_DEBUG").is_some() {
            eprintln!(
                "k={k} coef cert={cert:.3e} psi={psi:.3e} J={j_coef:.12} n={} | merge n={} J={j_k1:.12} eps_s={eps_s:.3e}",
                u_coef.len(),
                u_k1.len()
            );
        }

        // candidate pool for the end-of-iteration argmin; proposals whose
        // forward evaluation fails rank last via J = ∞
        let mut best_u = u_coef.clone();
        let mut best_j = j_coef;
        if j_k1 < best_j {
            best_u = u_k1.clone();
            best_j = j_k1;
        }

        // inner Newton phase (skipped outright for an empty iterate)
        let mut u_s = u_k1;
        if !u_s.is_empty() {
            for s in 1..=INNER_CAP {
                let z = u_s.minimal_representer()?;
                let g_sq = finite_gradient(problem, &z)?.norm_squared();
                let z_new = newton_step(problem, &z)?;
                let u_new = measure_of(&z_new);
                let j_new = problem.objective(&u_new).unwrap_or(f64::INFINITY);
                rec.push(k, s, j_new, g_sq, eps_s, TraceCall::Newton, m, c, &u_new);

                let mut u_gcg_s = u_s.clone();
                let mut j_gcg_s = problem.objective(&u_gcg_s)?;
                let mut eps_s1 = eps_s;
                let mut eps_zero = false;
                if !accept_newton_progress(g_sq, eps_s, problem.params.m_hi, c, m) {
                    // the Newton gradient is too small for the current ε:
                    // tighten ε with one LGCG step and retest before breaking
                    let state_s = DualState::new(problem, &u_s)?;
                    let rep2 = lgcg_step(&state_s, eps_s, c, m, &mut cache, &cfg)?;
                    u_gcg_s = rep2.measure;
                    j_gcg_s = problem.objective(&u_gcg_s)?;
                    eps_s1 = rep2.eps_out;
                    rec.push(
                        k,
                        s,
                        j_gcg_s,
                        rep2.phi,
                        eps_s1,
                        rep2.call.into(),
                        m,
                        c,
                        &u_gcg_s,
                    );
                    eps_zero = eps_s1 == 0.0;
                }
                if j_gcg_s < best_j {
                    best_u = u_gcg_s.clone();
                    best_j = j_gcg_s;
                }
                if j_new < best_j {
                    best_u = u_new.clone();
                    best_j = j_new;
                }
                let dbg = std::env::var_os("NLGCG_DEBUG").is_some();
                if eps_zero {
                    // u_s is a minimizer; the zero-length LGCG step kept it
                    // in the candidate pool
                    converged = true;
                    break;
                }
                if !accept_newton_progress(g_sq, eps_s1, problem.params.m_hi, c, m) {
                    if dbg {
                        eprintln!(
                            "k={k} s={s} BREAK accept2: g2={g_sq:.3e} eps_s1={eps_s1:.3e} n={}",
                            u_s.len()
                        );
                    }
                    break;
                }
                if !accept_newton_descent(problem, &z, &z_new, g_sq, problem.params.m_lo, m) {
                    if dbg {
                        eprintln!(
                            "k={k} s={s} BREAK accept1: g2={g_sq:.3e} dJ={:.3e} n={}->{}",
                            j_new - problem.objective(&u_s).unwrap_or(f64::NAN),
                            u_s.len(),
                            u_new.len()
                        );
                    }
                    break;
                }
                if u_new.is_empty() {
                    break;
                }

                if s % merge_every == 0 {
                    let u_drop_s = drop_step(&DualState::new(problem, &u_new)?)?;
                    let j_drop_s = problem.objective(&u_drop_s)?;
                    rec.push(k, s, j_drop_s, 0.0, eps_s1, TraceCall::Drop, m, c, &u_drop_s);
                    let u_merged = local_merge(&DualState::new(problem, &u_drop_s)?);
                    let j_merged = problem.objective(&u_merged)?;
                    eps_s1 += (j_merged - j_drop_s) / (2.0 * m);
                    rec.push(k, s, j_merged, 0.0, eps_s1, TraceCall::Merge, m, c, &u_merged);
                    if dbg {
                        eprintln!(
                            "k={k} s={s} drop n={} merge n={} J={j_merged:.12} eps_s1={eps_s1:.3e}",
                            u_drop_s.len(),
                            u_merged.len()
                        );
                    }
                    if j_merged < best_j {
                        best_u = u_merged.clone();
                        best_j = j_merged;
                    }
                    u_s = u_merged;
                } else {
                    u_s = u_new;
                }
                eps_s = eps_s1;
                if 2.0 * m * eps_s <= opts.tol {
                    converged = true;
                    break;
                }
                if u_s.is_empty() {
                    break;
                }
            }
        }

        if std::env::var_os("NLGCG_DEBUG").is_some() {
            eprintln!("k={k} POOL J={best_j:.12} n={}", best_u.len());
        }
        u = best_u;
        j = best_j;
        psi /= 2.0;
        eps = eps_next;
        if converged || failure.is_some() {
            break;
        }
    }
    Ok(rec.finish("nlgcg", converged, failure, u, j))
}
