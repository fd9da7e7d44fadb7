//! Small synthetic kernels and fidelities used by tests and examples.

use crate::model::{Fidelity, Kernel};

/// Isotropic Gaussian bumps `κ_i(x) = exp(−‖x − c_i‖² / 2s²)` — a convenient
/// unimodal/multimodal stand-in for search and step tests.
#[derive(Clone, Debug)]
pub struct GaussianBumps {
    pub centers: Vec<Vec<f64>>,
    pub width: f64,
}

impl GaussianBumps {
    pub fn new(centers: Vec<Vec<f64>>, width: f64) -> Self {
        assert!(width > 0.0 && !centers.is_empty());
        Self { centers, width }
    }
}

impl Kernel for GaussianBumps {
    fn space_dim(&self) -> usize {
        self.centers[0].len()
    }

    fn obs_dim(&self) -> usize {
        self.centers.len()
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        let s2 = self.width * self.width;
        for (o, c) in out.iter_mut().zip(&self.centers) {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            *o = (-d2 / (2.0 * s2)).exp();
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.space_dim();
        let s2 = self.width * self.width;
        for (i, c) in self.centers.iter().enumerate() {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = (-d2 / (2.0 * s2)).exp();
            for a in 0..d {
                out[i * d + a] = -v * (x[a] - c[a]) / s2;
            }
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.space_dim();
        let s2 = self.width * self.width;
        for (i, c) in self.centers.iter().enumerate() {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = (-d2 / (2.0 * s2)).exp();
            for a in 0..d {
                for b in 0..d {
                    let mut h = v * (x[a] - c[a]) * (x[b] - c[b]) / (s2 * s2);
                    if a == b {
                        h -= v / s2;
                    }
                    out[i * d * d + a * d + b] = h;
                }
            }
        }
    }
}

/// Affine 1-D kernel `κ_i(x) = a_i x + b_i`. Together with [`LinearFidelity`]
/// it makes the finite objective exactly quadratic (bilinear in `(x, λ)`),
/// so a single Newton step must land on the stationary point.
#[derive(Clone, Debug)]
pub struct Affine1d {
    pub slopes: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl Kernel for Affine1d {
    fn space_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.slopes.len()
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(&self.slopes).zip(&self.offsets) {
            *o = a * x[0] + b;
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let _ = x;
        out.copy_from_slice(&self.slopes);
    }

    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Linear fidelity `F(y) = (g, y)` (test-only; zero curvature).
#[derive(Clone, Debug)]
pub struct LinearFidelity {
    pub g: Vec<f64>,
}

impl Fidelity for LinearFidelity {
    fn obs_dim(&self) -> usize {
        self.g.len()
    }

    fn value(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.g).map(|(a, b)| a * b).sum()
    }

    fn gradient(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.g);
    }

    fn hessian_apply(&self, _y: &[f64], _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}
