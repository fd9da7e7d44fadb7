//! The two benchmark problems and the on-disk problem-config schema.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measures::SparseMeasure;
use crate::model::{DomainBox, Heat2d, HyperParams, Problem, Quadratic, Sine1d};

/// Serializable description of a problem instance. This is the canonical
/// object hashed to key reference solutions on disk.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub alpha: f64,
    pub params: ParamsConfig,
    pub data: DataConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DomainConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelConfig {
    /// `κ_i(x) = (4tπ)⁻¹ exp(−‖x−x_i‖²/4t)` on an `n × n` tensor sensor grid.
    /// Nodes default to the uniform interior layout `i/(n+1)`; `sensor_nodes`
    /// overrides the per-axis node list (e.g. to place sensors on the
    /// boundary). The interior default is what reproduces the reported
    /// kernel constants `C_K = 6.26`, `C_K' = 27.13` for the heat benchmark.
    Heat2d {
        t: f64,
        sensors_per_side: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sensor_nodes: Option<Vec<f64>>,
    },
    /// `κ_i(x) = sin(2π t_i x)` with `t_i = (i − 1 + offset)/n`, `i = 1..=n`.
    /// The default `offset = 0` samples `[0, 1)` including `t = 0` (a zero
    /// kernel row); this convention reproduces the reported `C_K' = 39.49`
    /// for the signal benchmark. `offset = 1` gives `t_i = i/n` instead.
    Sine1d {
        n_times: usize,
        #[serde(default, skip_serializing_if = "is_zero")]
        offset: f64,
    },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamsConfig {
    pub gamma: f64,
    pub theta: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub sigma: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(rename = "C_K")]
    pub c_kernel: f64,
    #[serde(rename = "C_Kp")]
    pub c_kernel_prime: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    #[serde(rename = "S", default = "default_merge_every")]
    pub merge_every: usize,
}

fn default_merge_every() -> usize {
    5
}

/// Either raw observation data or a ground-truth measure to synthesize it from.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum DataConfig {
    YDagger(Vec<f64>),
    GroundTruth(Vec<crate::measures::Atom>),
}

impl ProblemConfig {
    /// The Gaussian-source benchmark: 16 heat sensors on `[0,1]²`, three
    /// sources of weights `+1, −0.7, +0.8`.
    pub fn heat() -> Self {
        Self {
            name: "heat".into(),
            domain: DomainConfig {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            },
            kernel: KernelConfig::Heat2d {
                t: 0.025,
                sensors_per_side: 4,
                sensor_nodes: None,
            },
            alpha: 0.1,
            params: ParamsConfig {
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
            },
            data: DataConfig::GroundTruth(
                SparseMeasure::from_atoms([
                    (vec![0.28, 0.71], 1.0),
                    (vec![0.51, 0.27], -0.7),
                    (vec![0.71, 0.53], 0.8),
                ])
                .atoms()
                .to_vec(),
            ),
        }
    }

    /// The frequency-recovery benchmark: 120 sinusoidal samples on `[0, 60]`,
    /// three spikes at `3.125`, `7`, `√179`.
    pub fn signal() -> Self {
        Self {
            name: "signal".into(),
            domain: DomainConfig {
                lo: vec![0.0],
                hi: vec![60.0],
            },
            kernel: KernelConfig::Sine1d {
                n_times: 120,
                offset: 0.0,
            },
            alpha: 0.1,
            params: ParamsConfig {
                gamma: 1.0,
                theta: 0.1,
                radius: 0.1,
                sigma: 0.05,
                lipschitz: 1.0,
                c_kernel: 8.44,
                c_kernel_prime: 39.49,
                m_lo: 0.001,
                m_hi: 0.1,
                merge_every: 5,
            },
            data: DataConfig::GroundTruth(
                SparseMeasure::from_atoms([
                    (vec![3.125], -1.0),
                    (vec![7.0], 0.7),
                    (vec![179f64.sqrt()], 0.5),
                ])
                .atoms()
                .to_vec(),
            ),
        }
    }

    /// Parse a config file; the format is chosen by extension (`.toml` or `.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidProblem(format!("cannot read {}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::InvalidProblem(format!("bad TOML config: {e}")))?,
            _ => serde_json::from_str(&text)
                .map_err(|e| Error::InvalidProblem(format!("bad JSON config: {e}")))?,
        };
        Ok(parsed)
    }

    /// SHA-256 of the canonical JSON serialization; keys reference solutions.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Instantiate the problem. The ground truth (when given) is returned so
    /// callers can report recovery errors; `m_bound` is initialized to
    /// `J(0)/α`, the dynamic bound at the zero measure.
    pub fn build(&self) -> Result<(Problem, Option<SparseMeasure>)> {
        let domain = DomainBox::new(self.domain.lo.clone(), self.domain.hi.clone())?;
        let kernel: Arc<dyn crate::model::Kernel> = match &self.kernel {
            KernelConfig::Heat2d {
                t,
                sensors_per_side,
                sensor_nodes,
            } => match sensor_nodes {
                Some(nodes) => Arc::new(Heat2d::from_nodes(*t, nodes)),
                None => Arc::new(Heat2d::grid(*t, *sensors_per_side)),
            },
            KernelConfig::Sine1d { n_times, offset } => Arc::new(Sine1d {
                times: (0..*n_times)
                    .map(|i| (i as f64 + offset) / *n_times as f64)
                    .collect(),
            }),
        };
        let (y_dagger, truth) = match &self.data {
            DataConfig::YDagger(y) => (y.clone(), None),
            DataConfig::GroundTruth(atoms) => {
                let truth = SparseMeasure::from_atoms(
                    atoms.iter().map(|a| (a.position.clone(), a.weight)),
                );
                // forward pass of the truth through the bare kernel
                let m = kernel.obs_dim();
                let mut y = vec![0.0; m];
                let mut buf = vec![0.0; m];
                for a in truth.atoms() {
                    kernel.value(&a.position, &mut buf);
                    for (yi, bi) in y.iter_mut().zip(&buf) {
                        *yi += a.weight * bi;
                    }
                }
                (y, Some(truth))
            }
        };
        if y_dagger.len() != kernel.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.obs_dim(),
                got: y_dagger.len(),
            });
        }
        let fidelity = Arc::new(Quadratic::new(y_dagger.clone()));
        let j_zero = fidelity.value(&vec![0.0; y_dagger.len()]);
        let params = HyperParams {
            gamma: self.params.gamma,
            theta: self.params.theta,
            radius: self.params.radius,
            sigma: self.params.sigma,
            lipschitz: self.params.lipschitz,
            c_kernel: self.params.c_kernel,
            c_kernel_prime: self.params.c_kernel_prime,
            m_lo: self.params.m_lo,
            m_hi: self.params.m_hi,
            merge_every: self.params.merge_every,
            m_bound: j_zero / self.alpha,
        };
        let problem = Problem::new(domain, kernel, fidelity, self.alpha, params)?;
        Ok((problem, truth))
    }
}

/// Convenience: the heat benchmark with its ground truth.
pub fn build_heat_problem() -> (Problem, SparseMeasure) {
    let (p, t) = ProblemConfig::heat().build().expect("heat config is valid");
    (p, t.expect("heat config carries a ground truth"))
}

/// Convenience: the signal benchmark with its ground truth.
pub fn build_signal_problem() -> (Problem, SparseMeasure) {
    let (p, t) = ProblemConfig::signal()
        .build()
        .expect("signal config is valid");
    (p, t.expect("signal config carries a ground truth"))
}

use crate::model::Fidelity;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_problem_matches_reported_values() {
        let (p, truth) = build_heat_problem();
        assert_eq!(truth.total_variation(), 2.5);
        // J(u†) = α‖u†‖ because the data are exact
        let j = p.objective(&truth).unwrap();
        assert!((j - 0.25).abs() < 1e-12, "J(u†) = {j}");
        // J(0) = ½‖y†‖², frozen from an independent computation
        let j0 = p.objective(&SparseMeasure::empty()).unwrap();
        assert!((j0 - 25.901746198268484).abs() < 1e-10, "J(0) = {j0}");
        assert!((p.params.m_bound - j0 / 0.1).abs() < 1e-9);
    }

    #[test]
    fn signal_problem_matches_reported_values() {
        let (p, truth) = build_signal_problem();
        assert!((truth.total_variation() - 2.2).abs() < 1e-15);
        let j = p.objective(&truth).unwrap();
        assert!((j - 0.22).abs() < 1e-12, "J(u†) = {j}");
        let j0 = p.objective(&SparseMeasure::empty()).unwrap();
        assert!((j0 - 52.91269403006611).abs() < 1e-9, "J(0) = {j0}");
    }

    // The Table-reported kernel constants are sup-norms of κ and ∇κ over the
    // domain; they pin down the grid conventions. The interior heat layout and
    // the [0,1) time sampling are the readings that reproduce them.
    #[test]
    fn defaults_reproduce_reported_kernel_constants() {
        use crate::model::Kernel;
        let (p, _) = build_heat_problem();
        let (mut ck, mut ckp) = (0.0f64, 0.0f64);
        let mut val = vec![0.0; 16];
        let mut jac = vec![0.0; 32];
        for i in 0..=200 {
            for j in 0..=200 {
                let x = [i as f64 / 200.0, j as f64 / 200.0];
                p.kernel.value(&x, &mut val);
                p.kernel.jacobian(&x, &mut jac);
                ck = ck.max(val.iter().map(|v| v * v).sum::<f64>().sqrt());
                ckp = ckp.max(jac.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        assert!((ck - 6.26).abs() < 0.02, "heat sup‖κ‖ = {ck}");
        assert!((ckp - 27.13).abs() < 0.02, "heat sup‖∇κ‖ = {ckp}");

        let (p, _) = build_signal_problem();
        let mut ckp = 0.0f64;
        let mut jac = vec![0.0; 120];
        for i in 0..=60_000 {
            let x = [60.0 * i as f64 / 60_000.0];
            p.kernel.jacobian(&x, &mut jac);
            ckp = ckp.max(jac.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        assert!((ckp - 39.49).abs() < 0.02, "signal sup‖∇κ‖ = {ckp}");
    }

    #[test]
    fn hash_is_stable_and_discriminates() {
        let a = ProblemConfig::heat().hash();
        let b = ProblemConfig::heat().hash();
        assert_eq!(a, b);
        assert_ne!(a, ProblemConfig::signal().hash());
        let mut tweaked = ProblemConfig::heat();
        tweaked.alpha = 0.2;
        assert_ne!(a, tweaked.hash());
    }

    #[test]
    fn config_roundtrips_through_toml_and_json() {
        let cfg = ProblemConfig::signal();
        let toml_text = toml::to_string(&cfg).unwrap();
        let back: ProblemConfig = toml::from_str(&toml_text).unwrap();
        assert_eq!(back, cfg);
        let json_text = serde_json::to_string(&cfg).unwrap();
        let back: ProblemConfig = serde_json::from_str(&json_text).unwrap();
        assert_eq!(back, cfg);
    }
}
