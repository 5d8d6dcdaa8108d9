//! Transient simulation: first-order conversion of second-order systems,
//! an embedded Dormand-Prince 5(4) integrator with PI step control and
//! dense output, the chirp excitation, Galerkin runs with PC statistics,
//! and quadrature-ensemble reference simulations.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::paramodel::ConstantSecondOrderSystem;
use crate::phform::hamiltonian_second_order;
use crate::quadrature::{pairwise_sum, QuadratureRule};
use crate::sgalerkin::{pc_statistics, split_modes, GalerkinSecondOrderSystem};

/// Input signal with the PC mode-placement rule for deterministic
/// excitation: the signal occupies mode 1, modes 2..s are zero.
#[derive(Clone)]
pub enum InputSignal {
    Zero,
    Chirp,
    Custom(std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl InputSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            InputSignal::Zero => 0.0,
            InputSignal::Chirp => chirp(t),
            InputSignal::Custom(f) => f(t),
        }
    }
}

impl std::fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputSignal::Zero => write!(f, "Zero"),
            InputSignal::Chirp => write!(f, "Chirp"),
            InputSignal::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Harmonic oscillation with linearly increasing frequency.
pub fn chirp(t: f64) -> f64 {
    (t * t / 10.0).sin()
}

/// Result of one IVP solve on the accepted-step grid.
#[derive(Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub eps_rel: f64,
    pub eps_abs: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Stage slopes k1..k7 per accepted step, for dense output.
    dense: Vec<[DVector<f64>; 7]>,
    /// Input signal handle, for evaluation between stored samples.
    input_fn: std::sync::Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("samples", &self.times.len())
            .field("span", &self.span())
            .field("steps_accepted", &self.steps_accepted)
            .field("steps_rejected", &self.steps_rejected)
            .finish()
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    /// Index of the stored sample closest to t.
    pub fn nearest_index(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.times.len() => self.times.len() - 1,
            Err(i) => {
                if (self.times[i] - t).abs() < (t - self.times[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        }
    }

    /// Fifth-order dense interpolation of the state at time t within the
    /// stored span.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let (t0, t1) = self.span();
        assert!(t >= t0 && t <= t1, "t outside trajectory span");
        let seg = match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => {
                if i == self.times.len() - 1 {
                    return self.states[i].clone();
                }
                i
            }
            Err(i) => i - 1,
        };
        let h = self.times[seg + 1] - self.times[seg];
        let theta = (t - self.times[seg]) / h;
        dense_eval(&self.states[seg], &self.dense[seg], h, theta)
    }

    /// Evaluate the driving input at an arbitrary time.
    pub fn input_at(&self, t: f64) -> DVector<f64> {
        (self.input_fn)(t)
    }
}

// Dormand-Prince 5(4) Butcher tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
// Dense-output coefficients (Hairer, Norsett, Wanner).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Continuous extension of the accepted step (rcont form): y0 is the state
/// at the step start, k the stage slopes, h the step size, theta in [0,1].
fn dense_eval(y0: &DVector<f64>, k: &[DVector<f64>; 7], h: f64, theta: f64) -> DVector<f64> {
    let mut ydiff = DVector::zeros(y0.len());
    for i in 0..7 {
        if B5[i] != 0.0 {
            ydiff += &k[i] * B5[i];
        }
    }
    let rcont1 = y0.clone();
    let rcont2 = &ydiff * h; // y1 - y0
    let rcont3 = &k[0] * h - &rcont2;
    let rcont4 = &rcont2 - &k[6] * h - &rcont3;
    let mut rcont5 = DVector::zeros(y0.len());
    for i in 0..7 {
        if D[i] != 0.0 {
            rcont5 += &k[i] * D[i];
        }
    }
    rcont5 *= h;
    let one_minus = 1.0 - theta;
    rcont1 + (rcont2 + (rcont3 + (rcont4 + rcont5 * one_minus) * theta) * one_minus) * theta
}

/// Right-hand side with port bookkeeping: f(t, x) plus output and input
/// evaluation at stored samples.
pub struct FirstOrderEvaluator {
    rhs: Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    output: Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    input: std::sync::Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
    dim: usize,
}

impl FirstOrderEvaluator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rhs(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.rhs)(t, x)
    }

    pub fn new(
        dim: usize,
        rhs: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        output: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        input: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            rhs: Box::new(rhs),
            output: Box::new(output),
            input: std::sync::Arc::new(input),
            dim,
        }
    }
}

/// Convert a constant second-order system to a first-order evaluator with
/// state x = (v, p), v = dp/dt: M v' = B'u - Dv - Kp, p' = v and output
/// y = F p + G v. M is factorized once.
///
/// The input closure maps t to the full n_in-dimensional input vector.
pub fn to_first_order(
    sys: &ConstantSecondOrderSystem,
    input: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
) -> Result<FirstOrderEvaluator> {
    let n = sys.n();
    let chol = sys
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("mass matrix is not SPD".into()))?;
    let minv_d = chol.solve(&sys.d);
    let minv_k = chol.solve(&sys.k);
    let minv_b = chol.solve(&sys.bprime);
    let f = sys.f.clone();
    let g = sys.g.clone();
    let input = std::sync::Arc::new(input);
    let input_rhs = input.clone();
    Ok(FirstOrderEvaluator::new(
        2 * n,
        move |t, x| {
            let v = x.rows(0, n);
            let p = x.rows(n, n);
            let u = input_rhs(t);
            let mut dx = DVector::zeros(2 * n);
            let vdot = &minv_b * u - &minv_d * v - &minv_k * p;
            dx.rows_mut(0, n).copy_from(&vdot);
            dx.rows_mut(n, n).copy_from(&v.clone_owned());
            dx
        },
        move |_t, x| {
            let v = x.rows(0, n);
            let p = x.rows(n, n);
            &f * p + &g * v
        },
        move |t| input(t),
    ))
}

/// Adaptive Dormand-Prince 5(4) integration with weighted-RMS error
/// control and PI step-size selection. Samples are stored at every
/// accepted step; the final step hits the endpoint exactly.
pub fn integrate_rk45(
    ev: &FirstOrderEvaluator,
    x0: DVector<f64>,
    t_end: f64,
    eps_rel: f64,
    eps_abs: f64,
) -> Result<Trajectory> {
    if !(t_end > 0.0) || eps_rel <= 0.0 || eps_abs <= 0.0 {
        return Err(Error::InvalidArgument(
            "need positive horizon and tolerances".into(),
        ));
    }
    let dim = ev.dim();
    assert_eq!(x0.len(), dim);
    let order = 5.0;
    let (k_i, k_p) = (0.4 / order, 0.7 / order); // integral / proportional gains
    let safety = 0.9;
    let (fac_min, fac_max) = (0.2, 5.0);
    let h_min = t_end * 1e-14;

    let mut t = 0.0;
    let mut x = x0;
    let mut h = initial_step(ev, &x, eps_rel, eps_abs, t_end);
    let mut err_prev: f64 = 1.0;

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        outputs: vec![(ev.output)(0.0, &x)],
        inputs: vec![(ev.input)(0.0)],
        eps_rel,
        eps_abs,
        steps_accepted: 0,
        steps_rejected: 0,
        dense: Vec::new(),
        input_fn: ev.input.clone(),
    };

    let mut k: [DVector<f64>; 7] = std::array::from_fn(|_| DVector::zeros(dim));
    k[0] = ev.rhs(t, &x);

    while t < t_end {
        if h < h_min {
            return Err(Error::Solver {
                t,
                reason: format!("step size underflow (h = {h:.3e})"),
            });
        }
        let mut last = false;
        if t + h >= t_end {
            h = t_end - t;
            last = true;
        }
        for i in 1..7 {
            let mut xi = x.clone();
            for (j, kj) in k.iter().enumerate().take(i) {
                if A[i][j] != 0.0 {
                    xi += kj * (h * A[i][j]);
                }
            }
            k[i] = ev.rhs(t + C[i] * h, &xi);
        }
        let mut x5 = x.clone();
        let mut err_vec = DVector::zeros(dim);
        for i in 0..7 {
            if B5[i] != 0.0 {
                x5 += &k[i] * (h * B5[i]);
            }
            let diff = B5[i] - B4[i];
            if diff != 0.0 {
                err_vec += &k[i] * (h * diff);
            }
        }
        // weighted RMS error norm
        let mut acc = 0.0;
        for i in 0..dim {
            let scale = eps_abs + eps_rel * x[i].abs().max(x5[i].abs());
            let e = err_vec[i] / scale;
            acc += e * e;
        }
        let err = (acc / dim as f64).sqrt().max(1e-300);

        if err <= 1.0 {
            traj.steps_accepted += 1;
            traj.dense.push(k.clone());
            t += h;
            if last {
                t = t_end;
            }
            x = x5;
            traj.times.push(t);
            traj.states.push(x.clone());
            traj.outputs.push((ev.output)(t, &x));
            traj.inputs.push((ev.input)(t));
            // FSAL
            k[0] = k[6].clone();
            let fac = safety * err.powf(-k_p) * err_prev.powf(k_i);
            h *= fac.clamp(fac_min, fac_max);
            err_prev = err;
        } else {
            traj.steps_rejected += 1;
            let fac = safety * err.powf(-k_p);
            h *= fac.clamp(fac_min, 1.0);
        }
    }
    Ok(traj)
}

fn initial_step(
    ev: &FirstOrderEvaluator,
    x0: &DVector<f64>,
    eps_rel: f64,
    eps_abs: f64,
    t_end: f64,
) -> f64 {
    let f0 = ev.rhs(0.0, x0);
    let d0 = x0.norm().max(1e-10);
    let d1 = f0.norm().max(1e-10);
    let h = 0.01 * (d0 / d1) * (eps_rel.min(eps_abs)).powf(0.2).max(1e-3);
    h.min(t_end / 10.0).max(t_end * 1e-10)
}

/// Result of a Galerkin-system run: raw trajectory, output statistics and
/// Hamiltonian series on the accepted grid.
#[derive(Debug, Clone)]
pub struct GalerkinRun {
    pub trajectory: Trajectory,
    /// Per-time (mean, std) of the QoI, componentwise over n_out.
    pub mean: Vec<DVector<f64>>,
    pub std: Vec<DVector<f64>>,
    pub hamiltonian: Vec<f64>,
}

/// Simulate the Galerkin system with a deterministic input occupying PC
/// mode 1 and compute per-time output statistics and the Hamiltonian.
pub fn run_galerkin(
    gal: &GalerkinSecondOrderSystem,
    signal: &InputSignal,
    t_end: f64,
    eps_rel: f64,
    eps_abs: f64,
) -> Result<GalerkinRun> {
    let sys = gal.as_constant();
    let n_in_total = sys.n_in();
    let signal = signal.clone();
    let ev = to_first_order(sys, move |t| {
        // deterministic input: mode 1 carries the signal, modes 2..s zero
        let mut u = DVector::zeros(n_in_total);
        u[0] = signal.eval(t);
        u
    })?;
    let ns = gal.ns();
    let traj = integrate_rk45(&ev, DVector::zeros(2 * ns), t_end, eps_rel, eps_abs)?;

    let n_out = sys.n_out() / gal.s();
    let mut mean = Vec::with_capacity(traj.len());
    let mut std = Vec::with_capacity(traj.len());
    let mut ham = Vec::with_capacity(traj.len());
    for (state, y) in traj.states.iter().zip(&traj.outputs) {
        let modes = split_modes(y, n_out, gal.s());
        let (m, s) = pc_statistics(&modes);
        mean.push(m);
        std.push(s);
        let v = state.rows(0, ns).clone_owned();
        let p = state.rows(ns, ns).clone_owned();
        ham.push(hamiltonian_second_order(gal.mhat(), gal.khat(), &v, &p));
    }
    Ok(GalerkinRun {
        trajectory: traj,
        mean,
        std,
        hamiltonian: ham,
    })
}

/// Hamiltonian time series on a uniform output grid.
#[derive(Debug, Clone)]
pub struct HamiltonianSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| t_end * i as f64 / (points - 1) as f64)
        .collect()
}

/// Expected Hamiltonian over the parameter box: one IVP per quadrature
/// node, Hamiltonians interpolated onto a common uniform grid and combined
/// with the rule weights in fixed node order. `threads` > 1 fans node
/// solves out to a worker pool; the reduction order stays deterministic.
pub fn ensemble_expected_hamiltonian(
    sys: &crate::paramodel::ParametricSecondOrderSystem,
    rule: &QuadratureRule,
    signal: &InputSignal,
    t_end: f64,
    eps_rel: f64,
    eps_abs: f64,
    grid_points: usize,
    threads: usize,
) -> Result<HamiltonianSeries> {
    let grid = uniform_grid(t_end, grid_points);
    let node_count = rule.len();
    let solve_node = |j: usize| -> Result<Vec<f64>> {
        let xi = &rule.nodes()[j];
        let mu = sys.domain.to_physical(xi);
        let det = sys.at(&mu).map_err(|e| Error::NodeEvaluation {
            node: j,
            reason: e.to_string(),
        })?;
        let n_in = det.n_in();
        let sig = signal.clone();
        let ev = to_first_order(&det, move |t| {
            let mut u = DVector::zeros(n_in);
            u[0] = sig.eval(t);
            u
        })?;
        let n = det.n();
        let traj = integrate_rk45(&ev, DVector::zeros(2 * n), t_end, eps_rel, eps_abs)
            .map_err(|e| Error::NodeEvaluation {
                node: j,
                reason: e.to_string(),
            })?;
        Ok(grid
            .iter()
            .map(|&t| {
                let x = traj.interpolate(t);
                let v = x.rows(0, n).clone_owned();
                let p = x.rows(n, n).clone_owned();
                hamiltonian_second_order(&det.m, &det.k, &v, &p)
            })
            .collect())
    };

    let per_node: Vec<Vec<f64>> = if threads <= 1 {
        (0..node_count).map(solve_node).collect::<Result<_>>()?
    } else {
        let results: Vec<std::sync::Mutex<Option<Result<Vec<f64>>>>> =
            (0..node_count).map(|_| std::sync::Mutex::new(None)).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..threads.min(node_count) {
                scope.spawn(|| loop {
                    let j = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if j >= node_count {
                        break;
                    }
                    let r = solve_node(j);
                    *results[j].lock().unwrap() = Some(r);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap().unwrap())
            .collect::<Result<_>>()?
    };

    let values = (0..grid.len())
        .map(|ti| {
            let terms: Vec<f64> = (0..node_count)
                .map(|j| rule.weights()[j] * per_node[j][ti])
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    Ok(HamiltonianSeries { times: grid, values })
}

/// Hamiltonian of a Galerkin run resampled onto a uniform grid via dense
/// output.
pub fn galerkin_hamiltonian_on_grid(
    gal: &GalerkinSecondOrderSystem,
    run: &GalerkinRun,
    grid: &[f64],
) -> Vec<f64> {
    let ns = gal.ns();
    grid.iter()
        .map(|&t| {
            let x = run.trajectory.interpolate(t);
            let v = x.rows(0, ns).clone_owned();
            let p = x.rows(ns, ns).clone_owned();
            hamiltonian_second_order(gal.mhat(), gal.khat(), &v, &p)
        })
        .collect()
}

/// Evaluate a PC-coefficient time series of a scalar quantity on a grid.
pub fn sample_statistics_on_grid(
    gal: &GalerkinSecondOrderSystem,
    run: &GalerkinRun,
    grid: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let sys = gal.as_constant();
    let ns = gal.ns();
    let n_out = sys.n_out() / gal.s();
    let mut means = Vec::with_capacity(grid.len());
    let mut stds = Vec::with_capacity(grid.len());
    for &t in grid {
        let x = run.trajectory.interpolate(t);
        let v = x.rows(0, ns).clone_owned();
        let p = x.rows(ns, ns).clone_owned();
        let y = &sys.f * &p + &sys.g * &v;
        let modes = split_modes(&y, n_out, gal.s());
        let (m, s) = pc_statistics(&modes);
        means.push(m[0]);
        stds.push(s[0]);
    }
    (means, stds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramodel::build_msd;
    use crate::pcbasis::PcBasis;
    use nalgebra::DMatrix;
    use crate::sgalerkin::assemble;

    fn scalar_oscillator(d: f64) -> ConstantSecondOrderSystem {
        ConstantSecondOrderSystem::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, d),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn chirp_values() {
        assert_eq!(chirp(0.0), 0.0);
        assert!((chirp((5.0 * std::f64::consts::PI).sqrt()) - 1.0).abs() < 1e-12);
        assert!((chirp(10.0) - 10.0_f64.sin()).abs() < 1e-15);
        assert!((chirp(10.0) + 0.5440).abs() < 1e-4);
    }

    #[test]
    fn harmonic_oscillator_closed_form() {
        let sys = scalar_oscillator(0.0);
        let ev = to_first_order(&sys, |_| DVector::zeros(1)).unwrap();
        let x0 = DVector::from_vec(vec![0.0, 1.0]); // (v, p)
        let traj =
            integrate_rk45(&ev, x0, std::f64::consts::PI, 1e-6, 1e-9).unwrap();
        let x_end = traj.states.last().unwrap();
        assert!((x_end[1] - (-1.0)).abs() < 1e-3, "p(pi) = {}", x_end[1]);
    }

    #[test]
    fn equilibrium_stays_zero() {
        let sys = scalar_oscillator(1.0);
        let ev = to_first_order(&sys, |_| DVector::zeros(1)).unwrap();
        let traj = integrate_rk45(&ev, DVector::zeros(2), 10.0, 1e-4, 1e-6).unwrap();
        for x in &traj.states {
            assert_eq!(x.amax(), 0.0);
        }
    }

    #[test]
    fn rhs_is_linear_in_state() {
        let sys = scalar_oscillator(0.5);
        let ev = to_first_order(&sys, |_| DVector::zeros(1)).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.8]);
        let fx = ev.rhs(1.0, &x);
        let f2x = ev.rhs(1.0, &(&x * 2.0));
        assert!((&f2x - &fx * 2.0).amax() < 1e-15);
    }

    #[test]
    fn exponential_decay_accuracy() {
        let ev = FirstOrderEvaluator::new(
            1,
            |_, x| -x.clone(),
            |_, x| x.clone(),
            |_| DVector::zeros(1),
        );
        let traj = integrate_rk45(
            &ev,
            DVector::from_vec(vec![1.0]),
            1.0,
            1e-4,
            1e-6,
        )
        .unwrap();
        let x1 = traj.states.last().unwrap()[0];
        assert!((x1 - (-1.0_f64).exp()).abs() < 10.0 * 1e-4);
    }

    #[test]
    fn constant_rhs_uses_few_steps() {
        let ev = FirstOrderEvaluator::new(
            1,
            |_, _| DVector::zeros(1),
            |_, x| x.clone(),
            |_| DVector::zeros(1),
        );
        let traj =
            integrate_rk45(&ev, DVector::from_vec(vec![2.0]), 1.0, 1e-4, 1e-6).unwrap();
        assert!(traj.steps_accepted <= 12, "{} steps", traj.steps_accepted);
        assert_eq!(traj.states.last().unwrap()[0], 2.0);
    }

    #[test]
    fn dense_output_matches_stored_samples_and_is_accurate() {
        let sys = scalar_oscillator(0.0);
        let ev = to_first_order(&sys, |_| DVector::zeros(1)).unwrap();
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let traj = integrate_rk45(&ev, x0, 6.0, 1e-7, 1e-10).unwrap();
        for (i, &t) in traj.times.iter().enumerate() {
            let xi = traj.interpolate(t);
            assert!((&xi - &traj.states[i]).amax() < 1e-12);
        }
        // interior points against the closed form p = cos t, v = -sin t
        for &t in &[0.37, 1.91, 4.63, 5.99] {
            let x = traj.interpolate(t);
            assert!((x[1] - t.cos()).abs() < 1e-5, "p({t}) = {}", x[1]);
            assert!((x[0] + t.sin()).abs() < 1e-5, "v({t}) = {}", x[0]);
        }
    }

    #[test]
    fn galerkin_run_zero_input_is_zero() {
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let basis = PcBasis::new(sys.domain.clone(), 1).unwrap();
        let gal = assemble(&sys, &basis).unwrap();
        let run = run_galerkin(&gal, &InputSignal::Zero, 5.0, 1e-4, 1e-6).unwrap();
        for (m, (s, h)) in run.mean.iter().zip(run.std.iter().zip(&run.hamiltonian)) {
            assert_eq!(m.amax(), 0.0);
            assert_eq!(s.amax(), 0.0);
            assert_eq!(*h, 0.0);
        }
    }

    #[test]
    fn galerkin_output_is_velocity_port() {
        // stored y equals Bhat^T * velocity block exactly
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let basis = PcBasis::new(sys.domain.clone(), 1).unwrap();
        let gal = assemble(&sys, &basis).unwrap();
        let run = run_galerkin(&gal, &InputSignal::Chirp, 3.0, 1e-4, 1e-6).unwrap();
        let ns = gal.ns();
        for (x, y) in run.trajectory.states.iter().zip(&run.trajectory.outputs) {
            let v = x.rows(0, ns).clone_owned();
            let expect = gal.ghat() * &v;
            assert!((y - &expect).amax() == 0.0);
        }
    }

    #[test]
    fn determinism_bitwise() {
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let basis = PcBasis::new(sys.domain.clone(), 1).unwrap();
        let gal = assemble(&sys, &basis).unwrap();
        let a = run_galerkin(&gal, &InputSignal::Chirp, 5.0, 1e-4, 1e-6).unwrap();
        let b = run_galerkin(&gal, &InputSignal::Chirp, 5.0, 1e-4, 1e-6).unwrap();
        assert_eq!(a.trajectory.times, b.trajectory.times);
        for (x, y) in a.trajectory.states.iter().zip(&b.trajectory.states) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn ensemble_zero_input_and_degenerate_box() {
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let rule = crate::quadrature::stroud5(14).unwrap();
        let series = ensemble_expected_hamiltonian(
            &sys,
            &rule,
            &InputSignal::Zero,
            1.0,
            1e-4,
            1e-6,
            11,
            2,
        )
        .unwrap();
        assert!(series.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ensemble_parallel_matches_sequential() {
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let rule = crate::quadrature::gauss_tensor(14, 1).unwrap();
        let seq = ensemble_expected_hamiltonian(
            &sys, &rule, &InputSignal::Chirp, 2.0, 1e-4, 1e-6, 21, 1,
        )
        .unwrap();
        let par = ensemble_expected_hamiltonian(
            &sys, &rule, &InputSignal::Chirp, 2.0, 1e-4, 1e-6, 21, 4,
        )
        .unwrap();
        assert_eq!(seq.values, par.values);
    }
}
