//! Forward kernels `κ: Ω → ℝ^m` with first and second spatial derivatives.

/// A smooth observation kernel. `value` fills `κ(x)` (length `m = obs_dim`),
/// `jacobian` fills `∇κ` component-major (`m` rows of length `d`), and
/// `hessian` fills `∇²κ` component-major (`m` blocks of `d·d`, row-major).
///
/// `dot_*` evaluate contractions `Σ_i y_i ∂^k κ_i(x)` against a fixed vector
/// `y ∈ ℝ^m` without materializing the full tensors; they are the hot path of
/// every dual-variable evaluation and have hand-fused overrides in the
/// built-in kernels.
pub trait Kernel: Send + Sync {
    fn space_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    fn value(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64], out: &mut [f64]);

    /// `(κ(x), y)`.
    fn dot_value(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.obs_dim()];
        self.value(x, &mut buf);
        buf.iter().zip(y).map(|(k, w)| k * w).sum()
    }

    /// Fused `(value, gradient, hessian)` of `x ↦ (κ(x), y)`.
    /// `grad` has length `d`, `hess` length `d·d` (row-major, symmetric).
    fn dot_all(&self, x: &[f64], y: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let (d, m) = (self.space_dim(), self.obs_dim());
        let mut jac = vec![0.0; m * d];
        let mut hes = vec![0.0; m * d * d];
        self.jacobian(x, &mut jac);
        self.hessian(x, &mut hes);
        grad.fill(0.0);
        hess.fill(0.0);
        for i in 0..m {
            for a in 0..d {
                grad[a] += y[i] * jac[i * d + a];
            }
            for a in 0..d * d {
                hess[a] += y[i] * hes[i * d * d + a];
            }
        }
        self.dot_value(x, y)
    }
}

/// 2-D heat kernel: `κ_i(x) = (4tπ)⁻¹ exp(−‖x − x_i‖² / 4t)` at fixed sensor
/// locations `x_i`.
#[derive(Clone, Debug)]
pub struct Heat2d {
    pub t: f64,
    pub sensors: Vec<[f64; 2]>,
}

impl Heat2d {
    /// Sensors on the uniform `n × n` interior grid over `[0,1]²`: nodes at
    /// `i/(n+1)` per axis, row-major (first coordinate varies slowest),
    /// evaluated at diffusion time `t`.
    pub fn grid(t: f64, n: usize) -> Self {
        assert!(n >= 1 && t > 0.0);
        let nodes: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        Self::from_nodes(t, &nodes)
    }

    /// Sensors on the tensor-product grid `nodes × nodes`, row-major.
    pub fn from_nodes(t: f64, nodes: &[f64]) -> Self {
        assert!(t > 0.0);
        let sensors = nodes
            .iter()
            .flat_map(|&a| nodes.iter().map(move |&b| [a, b]))
            .collect();
        Self { t, sensors }
    }

    fn amplitude(&self) -> f64 {
        1.0 / (4.0 * self.t * std::f64::consts::PI)
    }
}

impl Kernel for Heat2d {
    fn space_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        self.sensors.len()
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        let a = self.amplitude();
        for (o, s) in out.iter_mut().zip(&self.sensors) {
            let d2 = (x[0] - s[0]).powi(2) + (x[1] - s[1]).powi(2);
            *o = a * (-d2 / (4.0 * self.t)).exp();
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let a = self.amplitude();
        for (i, s) in self.sensors.iter().enumerate() {
            let (dx, dy) = (x[0] - s[0], x[1] - s[1]);
            let v = a * (-(dx * dx + dy * dy) / (4.0 * self.t)).exp();
            out[2 * i] = -v * dx / (2.0 * self.t);
            out[2 * i + 1] = -v * dy / (2.0 * self.t);
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let a = self.amplitude();
        let c = 2.0 * self.t;
        for (i, s) in self.sensors.iter().enumerate() {
            let (dx, dy) = (x[0] - s[0], x[1] - s[1]);
            let v = a * (-(dx * dx + dy * dy) / (4.0 * self.t)).exp();
            let b = &mut out[4 * i..4 * i + 4];
            b[0] = v * (dx * dx / (c * c) - 1.0 / c);
            b[1] = v * dx * dy / (c * c);
            b[2] = b[1];
            b[3] = v * (dy * dy / (c * c) - 1.0 / c);
        }
    }

    fn dot_value(&self, x: &[f64], y: &[f64]) -> f64 {
        let a = self.amplitude();
        let mut acc = 0.0;
        for (s, w) in self.sensors.iter().zip(y) {
            let d2 = (x[0] - s[0]).powi(2) + (x[1] - s[1]).powi(2);
            acc += w * a * (-d2 / (4.0 * self.t)).exp();
        }
        acc
    }

    fn dot_all(&self, x: &[f64], y: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let a = self.amplitude();
        let c = 2.0 * self.t;
        let (mut v0, mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (s, w) in self.sensors.iter().zip(y) {
            let (dx, dy) = (x[0] - s[0], x[1] - s[1]);
            let v = w * a * (-(dx * dx + dy * dy) / (4.0 * self.t)).exp();
            v0 += v;
            g0 -= v * dx / c;
            g1 -= v * dy / c;
            h00 += v * (dx * dx / (c * c) - 1.0 / c);
            h01 += v * dx * dy / (c * c);
            h11 += v * (dy * dy / (c * c) - 1.0 / c);
        }
        grad[0] = g0;
        grad[1] = g1;
        hess[0] = h00;
        hess[1] = h01;
        hess[2] = h01;
        hess[3] = h11;
        v0
    }
}

/// 1-D sinusoidal kernel: `κ_i(x) = sin(2π t_i x)` at fixed sample times `t_i`.
#[derive(Clone, Debug)]
pub struct Sine1d {
    pub times: Vec<f64>,
}

impl Sine1d {
    /// Sample times `t_i = (i − 1) / n` for `i = 1..=n` (equidistant on
    /// `[0, 1)`, first row identically zero).
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1);
        Self {
            times: (0..n).map(|i| i as f64 / n as f64).collect(),
        }
    }
}

impl Kernel for Sine1d {
    fn space_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.times.len()
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        let tau = std::f64::consts::TAU;
        for (o, t) in out.iter_mut().zip(&self.times) {
            *o = (tau * t * x[0]).sin();
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let tau = std::f64::consts::TAU;
        for (o, t) in out.iter_mut().zip(&self.times) {
            *o = tau * t * (tau * t * x[0]).cos();
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let tau = std::f64::consts::TAU;
        for (o, t) in out.iter_mut().zip(&self.times) {
            let om = tau * t;
            *o = -om * om * (om * x[0]).sin();
        }
    }

    fn dot_value(&self, x: &[f64], y: &[f64]) -> f64 {
        let tau = std::f64::consts::TAU;
        self.times
            .iter()
            .zip(y)
            .map(|(t, w)| w * (tau * t * x[0]).sin())
            .sum()
    }

    fn dot_all(&self, x: &[f64], y: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let tau = std::f64::consts::TAU;
        let (mut v, mut g, mut h) = (0.0, 0.0, 0.0);
        for (t, w) in self.times.iter().zip(y) {
            let om = tau * t;
            let (s, c) = (om * x[0]).sin_cos();
            v += w * s;
            g += w * om * c;
            h -= w * om * om * s;
        }
        grad[0] = g;
        hess[0] = h;
        v
    }
}
