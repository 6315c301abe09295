//! Trajectory producers.
//!
//! Gradient-descent training runs are iterated maps with one time unit per
//! update. Continuous systems (the gradient flow, 2-D linear systems and the
//! Lorenz system) are advanced with the classical fixed-step RK4 scheme.
//! Every producer stops at the last finite state and flags the trajectory as
//! diverged instead of failing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mlp::{self, Dataset, NetworkConfig};

/// Ordered states of equal dimension, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    data: Vec<f64>,
    dim: usize,
    losses: Option<Vec<f64>>,
    dt: f64,
    diverged: bool,
}

impl Trajectory {
    pub fn new(initial: &[f64], dt: f64) -> Result<Self> {
        if initial.is_empty() {
            return Err(invalid("initial", "state dimension must be at least 1"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "time increment must be positive and finite"));
        }
        Ok(Trajectory {
            data: initial.to_vec(),
            dim: initial.len(),
            losses: None,
            dt,
            diverged: false,
        })
    }

    pub fn from_states<S: AsRef<[f64]>>(states: &[S], dt: f64) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| invalid("states", "trajectory needs at least one state"))?;
        let mut traj = Trajectory::new(first.as_ref(), dt)?;
        for s in &states[1..] {
            traj.push(s.as_ref())?;
        }
        Ok(traj)
    }

    fn with_loss(initial: &[f64], loss: f64, dt: f64) -> Result<Self> {
        let mut t = Trajectory::new(initial, dt)?;
        t.losses = Some(vec![loss]);
        Ok(t)
    }

    pub fn push(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "trajectory state",
                expected: self.dim,
                found: state.len(),
            });
        }
        if self.losses.is_some() {
            return Err(invalid("state", "trajectory records losses; use push_with_loss"));
        }
        self.data.extend_from_slice(state);
        Ok(())
    }

    fn push_with_loss(&mut self, state: &[f64], loss: f64) {
        self.data.extend_from_slice(state);
        if let Some(l) = self.losses.as_mut() {
            l.push(loss);
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false: a trajectory holds at least its initial state.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn losses(&self) -> Option<&[f64]> {
        self.losses.as_deref()
    }

    /// The same states relabelled with a different time increment.
    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "time increment must be positive and finite"));
        }
        self.dt = dt;
        Ok(self)
    }

    /// Applies `f` to every state component.
    pub fn map_states(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    /// States `start..` as a new trajectory (transient removal).
    pub fn skip(&self, start: usize) -> Result<Self> {
        if start >= self.len() {
            return Err(Error::TooShort {
                len: self.len(),
                required: start + 1,
            });
        }
        Ok(Trajectory {
            data: self.data[start * self.dim..].to_vec(),
            dim: self.dim,
            losses: self.losses.as_ref().map(|l| l[start..].to_vec()),
            dt: self.dt,
            diverged: self.diverged,
        })
    }

    /// Per-dimension standard deviation, averaged over dimensions.
    pub fn mean_std(&self) -> f64 {
        let n = self.len() as f64;
        let mut total = 0.0;
        for d in 0..self.dim {
            let mean = self.states().map(|s| s[d]).sum::<f64>() / n;
            let var = self.states().map(|s| (s[d] - mean).powi(2)).sum::<f64>() / n;
            total += var.sqrt();
        }
        total / self.dim as f64
    }
}

/// Autonomous vector field `dx/dt = f(x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], dx: &mut [f64]);
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        (self.f)(x, dx)
    }
}

/// Scratch buffers for [`Rk4::step`].
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` in place by one classical Runge-Kutta step.
    pub fn step<F: VectorField + ?Sized>(&mut self, field: &F, x: &mut [f64], h: f64) {
        let Rk4 { k1, k2, k3, k4, tmp } = self;
        field.eval(x, k1);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        field.eval(tmp, k2);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        field.eval(tmp, k3);
        for i in 0..x.len() {
            tmp[i] = x[i] + h * k3[i];
        }
        field.eval(tmp, k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Integrates `field` with fixed-step RK4 for `steps` steps.
pub fn integrate<F: VectorField + ?Sized>(field: &F, x0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    check_dim(field.dim(), x0.len())?;
    let mut traj = Trajectory::new(x0, dt)?;
    traj.data.reserve(steps * x0.len());
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    for _ in 0..steps {
        rk.step(field, &mut x, dt);
        if !x.iter().all(|v| v.is_finite()) {
            traj.diverged = true;
            break;
        }
        traj.data.extend_from_slice(&x);
    }
    Ok(traj)
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected,
            found,
        });
    }
    Ok(())
}

/// Negative loss gradient of a network on a fixed dataset.
pub struct GradientFlow<'a> {
    net: &'a NetworkConfig,
    data: &'a Dataset,
}

impl<'a> GradientFlow<'a> {
    pub fn new(net: &'a NetworkConfig, data: &'a Dataset) -> Result<Self> {
        net.validate()?;
        // shape check on a throwaway point
        mlp::mse_loss(net, &vec![0.0; net.param_dim()], data)?;
        Ok(GradientFlow { net, data })
    }
}

impl VectorField for GradientFlow<'_> {
    fn dim(&self) -> usize {
        self.net.param_dim()
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        let mut hidden = vec![(0.0, 0.0); self.net.hidden_width];
        mlp::gradient_unchecked(self.net, x, self.data, dx, &mut hidden);
        dx.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Full-batch gradient descent from `init`, one time unit per update.
pub fn run_training_trajectory(
    net: &NetworkConfig,
    init: &[f64],
    data: &Dataset,
    alpha: f64,
    steps: usize,
) -> Result<Trajectory> {
    GradientDescentMap::new(net, data, alpha)?.trajectory(init, steps)
}

/// RK4 integration of the gradient flow, with losses recorded per state.
pub fn integrate_gradient_flow(
    net: &NetworkConfig,
    init: &[f64],
    data: &Dataset,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    let flow = GradientFlow::new(net, data)?;
    check_dim(flow.dim(), init.len())?;
    let mut hidden = vec![(0.0, 0.0); net.hidden_width];
    let mut traj = Trajectory::with_loss(init, mlp::loss_unchecked(net, init, data, &mut hidden), dt)?;
    let mut rk = Rk4::new(init.len());
    let mut x = init.to_vec();
    for _ in 0..steps {
        rk.step(&flow, &mut x, dt);
        let loss = mlp::loss_unchecked(net, &x, data, &mut hidden);
        if !(x.iter().all(|v| v.is_finite()) && loss.is_finite()) {
            traj.diverged = true;
            break;
        }
        traj.push_with_loss(&x, loss);
    }
    Ok(traj)
}

/// A discrete-time map `x -> step(x)` covering `step_time` units of time.
pub trait StepMap {
    fn dim(&self) -> usize;
    fn step_time(&self) -> f64;
    fn step(&self, x: &mut [f64]);
}

/// Gradient descent as a [`StepMap`].
pub struct GradientDescentMap<'a> {
    net: &'a NetworkConfig,
    data: &'a Dataset,
    alpha: f64,
}

impl<'a> GradientDescentMap<'a> {
    pub fn new(net: &'a NetworkConfig, data: &'a Dataset, alpha: f64) -> Result<Self> {
        GradientFlow::new(net, data)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", "learning rate must be non-negative and finite"));
        }
        Ok(GradientDescentMap { net, data, alpha })
    }

    /// Iterates the map, recording every state and its loss.
    pub fn trajectory(&self, init: &[f64], steps: usize) -> Result<Trajectory> {
        check_dim(self.net.param_dim(), init.len())?;
        let net = self.net;
        let mut hidden = vec![(0.0, 0.0); net.hidden_width];
        let mut grad = vec![0.0; init.len()];
        let mut x = init.to_vec();
        let mut loss = mlp::gradient_unchecked(net, &x, self.data, &mut grad, &mut hidden);
        let mut traj = Trajectory::with_loss(init, loss, 1.0)?;
        traj.data.reserve(steps * init.len());
        if !(loss.is_finite() && x.iter().all(|v| v.is_finite())) {
            traj.diverged = true;
            return Ok(traj);
        }
        for _ in 0..steps {
            for (p, g) in x.iter_mut().zip(&grad) {
                *p -= self.alpha * g;
            }
            loss = mlp::gradient_unchecked(net, &x, self.data, &mut grad, &mut hidden);
            if !(loss.is_finite() && x.iter().all(|v| v.is_finite())) {
                traj.diverged = true;
                break;
            }
            traj.push_with_loss(&x, loss);
        }
        Ok(traj)
    }
}

impl StepMap for GradientDescentMap<'_> {
    fn dim(&self) -> usize {
        self.net.param_dim()
    }

    fn step_time(&self) -> f64 {
        1.0
    }

    fn step(&self, x: &mut [f64]) {
        let mut grad = vec![0.0; x.len()];
        let mut hidden = vec![(0.0, 0.0); self.net.hidden_width];
        mlp::gradient_unchecked(self.net, x, self.data, &mut grad, &mut hidden);
        for (p, g) in x.iter_mut().zip(&grad) {
            *p -= self.alpha * g;
        }
    }
}

/// Time-`dt` RK4 flow map of a vector field.
pub struct FlowMap<F> {
    pub field: F,
    pub dt: f64,
}

impl<F: VectorField> StepMap for FlowMap<F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn step_time(&self) -> f64 {
        self.dt
    }

    fn step(&self, x: &mut [f64]) {
        Rk4::new(x.len()).step(&self.field, x, self.dt);
    }
}

/// Closure-backed [`StepMap`].
pub struct FnMap<F> {
    dim: usize,
    step_time: f64,
    f: F,
}

impl<F: Fn(&mut [f64])> FnMap<F> {
    pub fn new(dim: usize, step_time: f64, f: F) -> Self {
        FnMap { dim, step_time, f }
    }
}

impl<F: Fn(&mut [f64])> StepMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn step_time(&self) -> f64 {
        self.step_time
    }

    fn step(&self, x: &mut [f64]) {
        (self.f)(x)
    }
}

/// `dx/dt = a x + b y`, `dy/dt = c x + d y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem2D {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl LinearSystem2D {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        LinearSystem2D { a, b, c, d }
    }

    pub fn diagonal(a: f64, d: f64) -> Self {
        LinearSystem2D::new(a, 0.0, 0.0, d)
    }

    fn half_trace(&self) -> f64 {
        0.5 * (self.a + self.d)
    }

    /// `(half trace)^2 - det`; eigenvalues are `s ± sqrt(disc)`.
    fn discriminant(&self) -> f64 {
        let s = self.half_trace();
        s * s - (self.a * self.d - self.b * self.c)
    }

    /// Eigenvalues ordered by decreasing real part (then imaginary part).
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let s = self.half_trace();
        let q = Complex64::new(self.discriminant(), 0.0).sqrt();
        let l1 = Complex64::new(s, 0.0) + q;
        let l2 = Complex64::new(s, 0.0) - q;
        if (l1.re, l1.im) >= (l2.re, l2.im) {
            [l1, l2]
        } else {
            [l2, l1]
        }
    }

    /// Unit eigenvectors matching [`Self::eigenvalues`]. A defective matrix
    /// yields the same vector twice.
    pub fn eigenvectors(&self) -> [[Complex64; 2]; 2] {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        if self.b == 0.0 && self.c == 0.0 {
            // eigenvalues are a and d, largest first
            let (ex, ey) = ([one, zero], [zero, one]);
            return if self.a >= self.d { [ex, ey] } else { [ey, ex] };
        }
        self.eigenvalues().map(|lam| {
            let v = if self.b.abs() >= self.c.abs() {
                [Complex64::new(self.b, 0.0), lam - self.a]
            } else {
                [lam - self.d, Complex64::new(self.c, 0.0)]
            };
            let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            [v[0] / norm, v[1] / norm]
        })
    }

    /// Coefficients `(c1, c2)` with `x0 = c1 v1 + c2 v2`; `None` when the
    /// eigenvectors do not span the plane.
    pub fn solution_constants(&self, x0: [f64; 2]) -> Option<[Complex64; 2]> {
        let [v1, v2] = self.eigenvectors();
        let det = v1[0] * v2[1] - v2[0] * v1[1];
        if det.norm() < 1e-12 {
            return None;
        }
        let x = Complex64::new(x0[0], 0.0);
        let y = Complex64::new(x0[1], 0.0);
        Some([(x * v2[1] - v2[0] * y) / det, (v1[0] * y - x * v1[1]) / det])
    }

    /// Largest real part of the eigenvalues: the system's top Lyapunov
    /// exponent in nats per unit time.
    pub fn largest_exponent(&self) -> f64 {
        self.eigenvalues()[0].re
    }

    /// Closed-form solution `exp(A t) x0`.
    pub fn exact_state(&self, x0: [f64; 2], t: f64) -> [f64; 2] {
        let s = self.half_trace();
        let disc = self.discriminant();
        // exp(At) = e^{st} [ f0(t) I + f1(t) (A - sI) ]
        let (f0, f1) = if disc > 0.0 {
            let q = disc.sqrt();
            ((q * t).cosh(), (q * t).sinh() / q)
        } else if disc < 0.0 {
            let w = (-disc).sqrt();
            ((w * t).cos(), (w * t).sin() / w)
        } else {
            (1.0, t)
        };
        let e = (s * t).exp();
        let (x, y) = (x0[0], x0[1]);
        let mx = (self.a - s) * x + self.b * y;
        let my = self.c * x + (self.d - s) * y;
        [e * (f0 * x + f1 * mx), e * (f0 * y + f1 * my)]
    }
}

impl VectorField for LinearSystem2D {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        dx[0] = self.a * x[0] + self.b * x[1];
        dx[1] = self.c * x[0] + self.d * x[1];
    }
}

pub fn simulate_linear_ode(sys: &LinearSystem2D, x0: [f64; 2], dt: f64, steps: usize) -> Result<Trajectory> {
    integrate(sys, &x0, dt, steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl VectorField for LorenzParams {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, x: &[f64], dx: &mut [f64]) {
        dx[0] = self.sigma * (x[1] - x[0]);
        dx[1] = x[0] * (self.rho - x[2]) - x[1];
        dx[2] = x[0] * x[1] - self.beta * x[2];
    }
}

pub fn simulate_lorenz(p: &LorenzParams, x0: [f64; 3], dt: f64, steps: usize) -> Result<Trajectory> {
    if ![p.sigma, p.rho, p.beta].iter().all(|v| v.is_finite()) {
        return Err(invalid("lorenz", "parameters must be finite"));
    }
    integrate(p, &x0, dt, steps)
}
