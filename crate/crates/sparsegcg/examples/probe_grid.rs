// Temporary diagnostic: how does the optimal support depend on the sensor
// layout reading? Runs NLGCG on each candidate 4×4 grid.
use std::sync::Arc;

use sparsegcg::drivers::{run_nlgcg, SolverOptions};
use sparsegcg::measures::SparseMeasure;
use sparsegcg::model::{DomainBox, Heat2d, HyperParams, Problem, Quadratic};

fn heat_with(nodes: &[f64]) -> Problem {
    let sensors: Vec<[f64; 2]> = nodes
        .iter()
        .flat_map(|&a| nodes.iter().map(move |&b| [a, b]))
        .collect();
    let kernel = Arc::new(Heat2d { t: 0.025, sensors });
    let truth = SparseMeasure::from_atoms([
        (vec![0.28, 0.71], 1.0),
        (vec![0.51, 0.27], -0.7),
        (vec![0.71, 0.53], 0.8),
    ]);
    let mut y = vec![0.0; 16];
    let mut buf = vec![0.0; 16];
    for a in truth.atoms() {
        use sparsegcg::model::Kernel;
        kernel.value(&a.position, &mut buf);
        for (yi, bi) in y.iter_mut().zip(&buf) {
            *yi += a.weight * bi;
        }
    }
    let j0: f64 = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
    Problem::new(
        DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        kernel,
        Arc::new(Quadratic::new(y)),
        0.1,
        HyperParams {
            gamma: 1.0,
            theta: 0.1,
            radius: 0.01,
            sigma: 0.002,
            lipschitz: 1.0,
            c_kernel: 6.26,
            c_kernel_prime: 27.13,
            m_lo: 0.001,
            m_hi: 0.1,
            merge_every: 5,
            m_bound: j0 / 0.1,
        },
    )
    .unwrap()
}

fn main() {
    let variants: Vec<(&str, Vec<f64>)> = vec![
        ("corners {0,1/3,2/3,1}", vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]),
        ("centers {1/8,3/8,5/8,7/8}", vec![0.125, 0.375, 0.625, 0.875]),
        ("interior {1/5,2/5,3/5,4/5}", vec![0.2, 0.4, 0.6, 0.8]),
    ];
    for (name, nodes) in variants {
        let problem = heat_with(&nodes);
        let t = run_nlgcg(&problem, &SolverOptions::default()).unwrap();
        println!(
            "{name}: conv={} k_max={} lazy={} exact={} J={:.15} support={}",
            t.converged,
            t.rows.iter().map(|r| r.k).max().unwrap_or(0),
            t.lazy_calls,
            t.exact_calls,
            t.final_j,
            t.final_measure.len()
        );
        for a in t.final_measure.atoms() {
            println!("    x=[{:.6}, {:.6}] w={:+.6e}", a.position[0], a.position[1], a.weight);
        }
    }
}
