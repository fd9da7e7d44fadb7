//! Continuous problem data and everything derived from an iterate.
//!
//! The variational problem is
//!
//! ```text
//!   min_u  J(u) = F(Ku) + α‖u‖_M      over sparse measures u on a box Ω,
//! ```
//!
//! with `Ku = Σ_j w_j κ(x_j)`. A [`DualState`] caches, for one measure `u`,
//! the observation `y = Ku`, the fidelity gradient `q = ∇F(y)`, the objective
//! `J(u)` and the pairing `⟨p_u, u⟩`, where `p_u(x) = −(κ(x), q)` is the dual
//! variable. All gap functionals and step routines run off this cache.

pub mod fidelity;
pub mod kernel;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measures::{FiniteParam, SparseMeasure};

pub use fidelity::{Fidelity, Quadratic};
pub use kernel::{Heat2d, Kernel, Sine1d};

/// Axis-aligned closed box `Ω = Π_i [lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidProblem("box bounds of unequal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidProblem("box needs lo < hi per axis".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(c, (l, h))| *c >= *l && *c <= *h)
    }

    /// Componentwise projection into the box.
    pub fn clamp(&self, x: &mut [f64]) {
        for (c, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *c = c.clamp(*l, *h);
        }
    }

    /// Largest edge length, used to scale fallback step sizes.
    pub fn max_extent(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l)
            .fold(0.0, f64::max)
    }
}

/// Model constants used by the step-size and acceptance formulas.
///
/// `m_bound` is the total-variation bound `M`; drivers running with a dynamic
/// bound overwrite it per iterate with `J(u_k)/β`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Strong convexity constant `γ` of the fidelity.
    pub gamma: f64,
    /// Curvature floor `θ` of the dual at optimal support points.
    pub theta: f64,
    /// Structural radius `R` (separation of optimal atoms, merge scale).
    pub radius: f64,
    /// Drop margin `σ` (atoms with `|p| ≤ α − σ/2` get dropped).
    pub sigma: f64,
    /// Lipschitz constant `L` of `∇F` on the relevant sublevel set.
    pub lipschitz: f64,
    /// Kernel bound `C_K` (`‖Ku‖ ≤ C_K‖u‖_M`).
    pub c_kernel: f64,
    /// First-order kernel bound `C_K'`.
    pub c_kernel_prime: f64,
    /// Newton descent constant `m`.
    pub m_lo: f64,
    /// Newton progress constant `m̄`.
    pub m_hi: f64,
    /// Merge/drop cadence `S` of the semismooth Newton phase.
    pub merge_every: usize,
    /// Total-variation bound `M`.
    pub m_bound: f64,
}

impl HyperParams {
    fn validate(&self, alpha: f64) -> Result<()> {
        let positives = [
            ("gamma", self.gamma),
            ("theta", self.theta),
            ("radius", self.radius),
            ("sigma", self.sigma),
            ("lipschitz", self.lipschitz),
            ("c_kernel", self.c_kernel),
            ("c_kernel_prime", self.c_kernel_prime),
            ("m_lo", self.m_lo),
            ("m_hi", self.m_hi),
            ("m_bound", self.m_bound),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidProblem(format!("{name} must be positive")));
            }
        }
        if self.sigma >= alpha {
            return Err(Error::InvalidProblem("sigma must be < alpha".into()));
        }
        if self.merge_every == 0 {
            return Err(Error::InvalidProblem("merge_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Curvature constant `C = 4 L M² C_K²` for a given bound `M`.
    pub fn curvature(&self, m_bound: f64) -> f64 {
        4.0 * self.lipschitz * m_bound * m_bound * self.c_kernel * self.c_kernel
    }
}

/// One instance of the sparse recovery problem.
pub struct Problem {
    pub domain: DomainBox,
    pub kernel: Arc<dyn Kernel>,
    pub fidelity: Arc<dyn Fidelity>,
    pub alpha: f64,
    pub params: HyperParams,
}

impl Problem {
    pub fn new(
        domain: DomainBox,
        kernel: Arc<dyn Kernel>,
        fidelity: Arc<dyn Fidelity>,
        alpha: f64,
        params: HyperParams,
    ) -> Result<Self> {
        if kernel.space_dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: kernel.space_dim(),
            });
        }
        if kernel.obs_dim() != fidelity.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.obs_dim(),
                got: fidelity.obs_dim(),
            });
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidProblem("alpha must be positive".into()));
        }
        params.validate(alpha)?;
        Ok(Self {
            domain,
            kernel,
            fidelity,
            alpha,
            params,
        })
    }

    fn check_in_domain(&self, x: &[f64]) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                position: x.to_vec(),
            })
        }
    }

    /// Observation `Ku = Σ_j w_j κ(x_j)`.
    pub fn forward(&self, u: &SparseMeasure) -> Result<Vec<f64>> {
        let m = self.kernel.obs_dim();
        let mut y = vec![0.0; m];
        let mut buf = vec![0.0; m];
        for atom in u.atoms() {
            self.check_in_domain(&atom.position)?;
            self.kernel.value(&atom.position, &mut buf);
            for (yi, bi) in y.iter_mut().zip(&buf) {
                *yi += atom.weight * bi;
            }
        }
        Ok(y)
    }

    /// `J(u) = F(Ku) + α‖u‖_M`.
    pub fn objective(&self, u: &SparseMeasure) -> Result<f64> {
        let y = self.forward(u)?;
        Ok(self.fidelity.value(&y) + self.alpha * u.total_variation())
    }
}

/// Cached dual data for one iterate.
pub struct DualState<'a> {
    problem: &'a Problem,
    u: SparseMeasure,
    y: Vec<f64>,
    q: Vec<f64>,
    j: f64,
    tv: f64,
    pu_dot_u: f64,
}

impl<'a> DualState<'a> {
    pub fn new(problem: &'a Problem, u: &SparseMeasure) -> Result<Self> {
        let y = problem.forward(u)?;
        let mut q = vec![0.0; y.len()];
        problem.fidelity.gradient(&y, &mut q);
        let tv = u.total_variation();
        let j = problem.fidelity.value(&y) + problem.alpha * tv;
        let mut state = Self {
            problem,
            u: u.clone(),
            y,
            q,
            j,
            tv,
            pu_dot_u: 0.0,
        };
        state.pu_dot_u = u
            .atoms()
            .iter()
            .map(|a| a.weight * state.dual_value_raw(&a.position))
            .sum();
        Ok(state)
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn measure(&self) -> &SparseMeasure {
        &self.u
    }

    /// Cached observation `Ku`.
    pub fn observation(&self) -> &[f64] {
        &self.y
    }

    /// Cached objective `J(u)`.
    pub fn objective(&self) -> f64 {
        self.j
    }

    /// Cached `‖u‖_M`.
    pub fn total_variation(&self) -> f64 {
        self.tv
    }

    /// Cached `⟨p_u, u⟩`.
    pub fn pairing_with_u(&self) -> f64 {
        self.pu_dot_u
    }

    /// Complementarity slack `α‖u‖_M − ⟨p_u, u⟩` (`= φ(u, 0)`).
    pub fn slack(&self) -> f64 {
        self.problem.alpha * self.tv - self.pu_dot_u
    }

    pub(crate) fn dual_value_raw(&self, x: &[f64]) -> f64 {
        -self.problem.kernel.dot_value(x, &self.q)
    }

    /// Dual variable `p_u(x) = −(κ(x), ∇F(Ku))`.
    pub fn dual_value(&self, x: &[f64]) -> Result<f64> {
        self.problem.check_in_domain(x)?;
        Ok(self.dual_value_raw(x))
    }

    /// Spatial gradient `∇p_u(x)`.
    pub fn dual_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.problem.check_in_domain(x)?;
        let d = self.problem.kernel.space_dim();
        let (mut g, mut h) = (vec![0.0; d], vec![0.0; d * d]);
        self.problem.kernel.dot_all(x, &self.q, &mut g, &mut h);
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }

    /// Spatial Hessian `∇²p_u(x)`, row-major `d × d`.
    pub fn dual_hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.problem.check_in_domain(x)?;
        let d = self.problem.kernel.space_dim();
        let (mut g, mut h) = (vec![0.0; d], vec![0.0; d * d]);
        self.problem.kernel.dot_all(x, &self.q, &mut g, &mut h);
        h.iter_mut().for_each(|v| *v = -*v);
        Ok(h)
    }

    /// Fused `(p_u(x), ∇p_u(x), ∇²p_u(x))` without domain checks; the search
    /// clips its iterates into the box before calling this.
    pub(crate) fn dual_all_raw(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let v = self.problem.kernel.dot_all(x, &self.q, grad, hess);
        grad.iter_mut().for_each(|g| *g = -*g);
        hess.iter_mut().for_each(|h| *h = -*h);
        -v
    }

    /// Primal-dual pairing gap `φ(u, v) = ⟨p_u, v − u⟩ + α‖u‖_M − α‖v‖_M`.
    pub fn pairing_phi(&self, v: &SparseMeasure) -> Result<f64> {
        let mut pv = 0.0;
        for atom in v.atoms() {
            pv += atom.weight * self.dual_value(&atom.position)?;
        }
        Ok(pv - self.pu_dot_u + self.problem.alpha * (self.tv - v.total_variation()))
    }

    /// Finite gap `Φ_A(u) = M(max_{x∈A}|p_u(x)| − α)₊ + α‖u‖_M − ⟨p_u, u⟩`.
    /// An empty `support` leaves only the slack term.
    pub fn finite_gap<'b, I>(&self, support: I, m_bound: f64) -> Result<f64>
    where
        I: IntoIterator<Item = &'b [f64]>,
    {
        let mut pmax = 0.0f64;
        for x in support {
            pmax = pmax.max(self.dual_value(x)?.abs());
        }
        Ok(m_bound * (pmax - self.problem.alpha).max(0.0) + self.slack())
    }

    /// Global gap `Φ(u)` given the maximizer `x̂` of `|p_u|`:
    /// `M(|p_u(x̂)| − α)₊ + α‖u‖_M − ⟨p_u, u⟩`.
    pub fn global_gap(&self, xhat: &[f64], m_bound: f64) -> Result<f64> {
        let pmax = self.dual_value(xhat)?.abs();
        Ok(m_bound * (pmax - self.problem.alpha).max(0.0) + self.slack())
    }
}

/// Value of the finite-dimensional objective
/// `J_N(z) = F(K U(z)) + α|λ|_1` at `z = (x, λ)`.
pub fn finite_objective(problem: &Problem, z: &FiniteParam) -> Result<f64> {
    let m = problem.kernel.obs_dim();
    let mut y = vec![0.0; m];
    let mut buf = vec![0.0; m];
    for j in 0..z.len() {
        problem.check_in_domain(z.position(j))?;
        problem.kernel.value(z.position(j), &mut buf);
        for (yi, bi) in y.iter_mut().zip(&buf) {
            *yi += z.weights[j] * bi;
        }
    }
    Ok(problem.fidelity.value(&y) + problem.alpha * z.weights.iter().map(|w| w.abs()).sum::<f64>())
}

fn check_weights_nonzero(z: &FiniteParam) -> Result<()> {
    match z.weights.iter().position(|w| *w == 0.0) {
        Some(index) => Err(Error::DegenerateWeight { index }),
        None => Ok(()),
    }
}

/// Gradient of `J_N` in the layout `[x_1, …, x_N, λ_1, …, λ_N]`:
///
/// ```text
///   ∂J/∂x_j = λ_j ∇κ(x_j)ᵀ q,      ∂J/∂λ_j = (κ(x_j), q) + α sign(λ_j),
/// ```
///
/// with `q = ∇F(K U(z))`. Requires every weight nonzero.
pub fn finite_gradient(problem: &Problem, z: &FiniteParam) -> Result<DVector<f64>> {
    check_weights_nonzero(z)?;
    let (d, m, n) = (z.dim, problem.kernel.obs_dim(), z.len());
    let mut y = vec![0.0; m];
    let mut buf = vec![0.0; m];
    for j in 0..n {
        problem.check_in_domain(z.position(j))?;
        problem.kernel.value(z.position(j), &mut buf);
        for (yi, bi) in y.iter_mut().zip(&buf) {
            *yi += z.weights[j] * bi;
        }
    }
    let mut q = vec![0.0; m];
    problem.fidelity.gradient(&y, &mut q);

    let mut grad = DVector::zeros(n * (d + 1));
    let (mut g, mut h) = (vec![0.0; d], vec![0.0; d * d]);
    for j in 0..n {
        let v = problem.kernel.dot_all(z.position(j), &q, &mut g, &mut h);
        for a in 0..d {
            grad[j * d + a] = z.weights[j] * g[a];
        }
        grad[n * d + j] = v + problem.alpha * z.weights[j].signum();
    }
    Ok(grad)
}

/// Hessian of `J_N` in the `[x, λ]` layout. Blocks, with `q = ∇F(KU(z))`
/// and `B = ∇²F(KU(z))`:
///
/// ```text
///   ∂²J/∂λ_i∂λ_j = (κ(x_i), B κ(x_j))
///   ∂²J/∂x_i∂λ_j = [i=j] ∇κ(x_j)ᵀ q + λ_i ∇κ(x_i)ᵀ B κ(x_j)
///   ∂²J/∂x_i∂x_j = [i=j] λ_j ∇²κ(x_j)·q + λ_i λ_j ∇κ(x_i)ᵀ B ∇κ(x_j)
/// ```
pub fn finite_hessian(problem: &Problem, z: &FiniteParam) -> Result<DMatrix<f64>> {
    check_weights_nonzero(z)?;
    let (d, m, n) = (z.dim, problem.kernel.obs_dim(), z.len());

    // forward pass + per-atom kernel data
    let mut y = vec![0.0; m];
    let mut kv = vec![vec![0.0; m]; n];
    let mut jac = vec![vec![0.0; m * d]; n];
    for j in 0..n {
        problem.check_in_domain(z.position(j))?;
        problem.kernel.value(z.position(j), &mut kv[j]);
        problem.kernel.jacobian(z.position(j), &mut jac[j]);
        for (yi, bi) in y.iter_mut().zip(&kv[j]) {
            *yi += z.weights[j] * bi;
        }
    }
    let mut q = vec![0.0; m];
    problem.fidelity.gradient(&y, &mut q);

    // B·κ(x_j) and B·(columns of ∇κ(x_j))
    let mut bk = vec![vec![0.0; m]; n];
    let mut bjac = vec![vec![0.0; m * d]; n];
    let mut col = vec![0.0; m];
    let mut out = vec![0.0; m];
    for j in 0..n {
        problem.fidelity.hessian_apply(&y, &kv[j], &mut bk[j]);
        for a in 0..d {
            for i in 0..m {
                col[i] = jac[j][i * d + a];
            }
            problem.fidelity.hessian_apply(&y, &col, &mut out);
            for i in 0..m {
                bjac[j][i * d + a] = out[i];
            }
        }
    }

    let np = n * (d + 1);
    let mut hess = DMatrix::zeros(np, np);
    let (mut g, mut hq) = (vec![0.0; d], vec![0.0; d * d]);
    for i in 0..n {
        for j in 0..n {
            // λ_i λ_j
            let mut s = 0.0;
            for t in 0..m {
                s += kv[i][t] * bk[j][t];
            }
            hess[(n * d + i, n * d + j)] = s;

            // x_i λ_j
            for a in 0..d {
                let mut v = 0.0;
                for t in 0..m {
                    v += jac[i][t * d + a] * bk[j][t];
                }
                v *= z.weights[i];
                if i == j {
                    let mut gq = 0.0;
                    for t in 0..m {
                        gq += jac[j][t * d + a] * q[t];
                    }
                    v += gq;
                }
                hess[(i * d + a, n * d + j)] = v;
                hess[(n * d + j, i * d + a)] = v;
            }

            // x_i x_j
            for a in 0..d {
                for b in 0..d {
                    let mut v = 0.0;
                    for t in 0..m {
                        v += jac[i][t * d + a] * bjac[j][t * d + b];
                    }
                    v *= z.weights[i] * z.weights[j];
                    hess[(i * d + a, j * d + b)] += v;
                }
            }
        }
        // diagonal ∇²κ·q term
        problem.kernel.dot_all(z.position(i), &q, &mut g, &mut hq);
        for a in 0..d {
            for b in 0..d {
                hess[(i * d + a, i * d + b)] += z.weights[i] * hq[a * d + b];
            }
        }
    }
    Ok(hess)
}
