//! Data-fidelity terms `F: ℝ^m → ℝ`.

/// Smooth convex fidelity with gradient and Hessian-vector products.
pub trait Fidelity: Send + Sync {
    fn obs_dim(&self) -> usize;
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64], out: &mut [f64]);
    /// `out = ∇²F(y) · v`.
    fn hessian_apply(&self, y: &[f64], v: &[f64], out: &mut [f64]);
}

/// Quadratic misfit `F(y) = ½‖y − y†‖²` with identity Hessian.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub target: Vec<f64>,
}

impl Quadratic {
    pub fn new(target: Vec<f64>) -> Self {
        Self { target }
    }
}

impl Fidelity for Quadratic {
    fn obs_dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, y: &[f64]) -> f64 {
        0.5 * y
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(y).zip(&self.target) {
            *o = a - b;
        }
    }

    fn hessian_apply(&self, _y: &[f64], v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }
}
