// Temporary diagnostic: run all solvers on the heat problem and report the
// acceptance-relevant statistics.
use sparsegcg::bench::experiments::build_heat_problem;
use sparsegcg::drivers::{run_lpdap, run_nlgcg, run_pdap, SolverOptions, Trace, TraceCall};
use sparsegcg::measures::SparseMeasure;
use sparsegcg::model::{DualState, Problem};
use sparsegcg::measures::measure_of;
use sparsegcg::search::{exact_max, SearchConfig};
use sparsegcg::steps::newton_step;

fn report(t: &Trace) {
    let last = t.rows.last();
    let final_gap = t
        .rows
        .iter()
        .rev()
        .find(|r| matches!(r.call, TraceCall::Lazy | TraceCall::Exact))
        .map(|r| r.gap_est)
        .unwrap_or(f64::NAN);
    let two_m_eps = last.map(|r| 2.0 * r.m_bound * r.eps).unwrap_or(f64::NAN);
    let k_max = t.rows.iter().map(|r| r.k).max().unwrap_or(0);
    println!(
        "{:6}  conv={} k_max={} lazy={} exact={} rec={} J={:.15} gap_last={:.3e} 2Meps={:.3e} support={} wall={:.2}s",
        t.solver,
        t.converged,
        k_max,
        t.lazy_calls,
        t.exact_calls,
        t.recomputes,
        t.final_j,
        final_gap,
        two_m_eps,
        t.final_measure.len(),
        t.wall_s
    );
    if let Some(f) = &t.failure {
        println!("        FAILURE: {f}");
    }
}

fn audit(problem: &Problem, u: &SparseMeasure, label: &str) {
    let j = problem.objective(u).unwrap();
    let state = DualState::new(problem, u).unwrap();
    let cfg = SearchConfig {
        grid_per_dim: 120,
        ..SearchConfig::for_dim(2)
    };
    let support: Vec<&[f64]> = u.positions().collect();
    let (xhat, val) = exact_max(&state, &support, &cfg);
    let slack: f64 = u
        .atoms()
        .iter()
        .map(|a| a.weight.abs() * problem.alpha - state.dual_value(&a.position).unwrap() * a.weight)
        .sum();
    println!(
        "AUDIT {label}: J={j:.16} max|p|-a={:+.3e} at {:?} slack={:.3e}",
        val - problem.alpha,
        xhat,
        slack
    );
    for a in u.atoms() {
        let p = state.dual_value(&a.position).unwrap();
        println!(
            "    x={:?} w={:+.8e} a-|p|={:+.3e}",
            a.position,
            a.weight,
            problem.alpha - p.abs()
        );
    }
}

fn main() {
    let (problem, _) = build_heat_problem();
    let opts = SolverOptions::default();

    let t_n = run_nlgcg(&problem, &opts).unwrap();
    report(&t_n);
    let t_l = run_lpdap(&problem, &opts).unwrap();
    report(&t_l);
    let t_p = run_pdap(&problem, &opts).unwrap();
    report(&t_p);

    audit(&problem, &t_n.final_measure, "nlgcg");
    audit(&problem, &t_p.final_measure, "pdap");

    // independent 3-atom polish: keep the three heaviest atoms of the NLGCG
    // iterate, run Newton to machine precision, and report the limit
    let mut atoms: Vec<_> = t_n.final_measure.atoms().to_vec();
    atoms.sort_by(|a, b| b.weight.abs().partial_cmp(&a.weight.abs()).unwrap());
    atoms.truncate(3);
    let mut u3 = SparseMeasure::from_atoms(atoms.into_iter().map(|a| (a.position, a.weight)));
    for _ in 0..60 {
        let z = u3.minimal_representer().unwrap();
        let z_new = newton_step(&problem, &z).unwrap();
        u3 = measure_of(&z_new);
    }
    audit(&problem, &u3, "3-atom polish");
}
