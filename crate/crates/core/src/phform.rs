//! Port-Hamiltonian first-order embedding of second-order systems,
//! structure validation, Hamiltonian evaluation, dissipation accounting
//! and the Hamiltonian-expectation identity for Galerkin systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::paramodel::{ConstantSecondOrderSystem, Definiteness, ParametricSecondOrderSystem};
use crate::pcbasis::PcBasis;
use crate::quadrature::{expectation, QuadratureRule};
use crate::sgalerkin::expand_approximant;
use crate::simulate::Trajectory;

/// Origin of a pH system, carried for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Provenance {
    Deterministic,
    Galerkin,
    Reduced,
}

/// First-order structure (E, J, R, Q, B, P, S, N) with m ports.
#[derive(Debug, Clone)]
pub struct PhSystem {
    pub e: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub provenance: Provenance,
}

impl PhSystem {
    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn ports(&self) -> usize {
        self.b.ncols()
    }

    /// Energy matrix E^T Q.
    pub fn energy_matrix(&self) -> DMatrix<f64> {
        self.e.transpose() * &self.q
    }

    /// Structure matrix W = [[Q^T R Q, Q^T P], [P^T Q, S]].
    pub fn structure_matrix(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let m = self.ports();
        let qrq = self.q.transpose() * &self.r * &self.q;
        let qp = self.q.transpose() * &self.p;
        let mut w = DMatrix::zeros(dim + m, dim + m);
        w.view_mut((0, 0), (dim, dim)).copy_from(&qrq);
        w.view_mut((0, dim), (dim, m)).copy_from(&qp);
        w.view_mut((dim, 0), (m, dim)).copy_from(&qp.transpose());
        w.view_mut((dim, dim), (m, m)).copy_from(&self.s);
        w
    }
}

/// Validation tolerance tied to the dense symmetric eigensolve accuracy
/// at the given dimension.
pub fn default_validation_tol(dim: usize) -> f64 {
    if dim >= 1000 {
        1e-8
    } else {
        1e-10
    }
}

/// Block embedding of a second-order system with SPD M, K and SPSD D:
/// E = diag(M, I), J = [[0,-I],[I,0]], R = diag(D, 0), Q = diag(I, K),
/// B = [B'; 0], P = S = N = 0, state x = (dp/dt, p). The output matrices
/// are overridden to F = 0, G = B'^T, so y = B'^T dp/dt.
pub fn embed_second_order(
    sys: &ConstantSecondOrderSystem,
    provenance: Provenance,
) -> Result<PhSystem> {
    let n = sys.n();
    let tol = default_validation_tol(2 * n);
    let (cm, cd, ck) = sys.certify(tol);
    if cm != Definiteness::Spd {
        return Err(Error::Certification {
            matrix: "M".into(),
            lambda_min: crate::paramodel::lambda_min(&sys.m),
        });
    }
    if ck != Definiteness::Spd {
        return Err(Error::Certification {
            matrix: "K".into(),
            lambda_min: crate::paramodel::lambda_min(&sys.k),
        });
    }
    if cd != Definiteness::Spd && cd != Definiteness::Spsd {
        return Err(Error::Certification {
            matrix: "D".into(),
            lambda_min: crate::paramodel::lambda_min(&sys.d),
        });
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    e.view_mut((0, 0), (n, n)).copy_from(&sys.m);
    e.view_mut((n, n), (n, n)).copy_from(&id);
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).copy_from(&(-&id));
    j.view_mut((n, 0), (n, n)).copy_from(&id);
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    r.view_mut((0, 0), (n, n)).copy_from(&sys.d);
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    q.view_mut((0, 0), (n, n)).copy_from(&id);
    q.view_mut((n, n), (n, n)).copy_from(&sys.k);
    let m_ports = sys.n_in();
    let mut b = DMatrix::zeros(2 * n, m_ports);
    b.view_mut((0, 0), (n, m_ports)).copy_from(&sys.bprime);
    Ok(PhSystem {
        e,
        j,
        r,
        q,
        b,
        p: DMatrix::zeros(2 * n, m_ports),
        s: DMatrix::zeros(m_ports, m_ports),
        n: DMatrix::zeros(m_ports, m_ports),
        provenance,
    })
}

/// Structural check results; serializable for reporting.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub dim: usize,
    pub ports: usize,
    pub provenance: Provenance,
    pub skew_residual_j: f64,
    pub skew_residual_n: f64,
    pub energy_symmetry_residual: f64,
    pub lambda_min_energy: f64,
    pub lambda_min_w: f64,
    pub norm_w: f64,
    pub tol: f64,
    pub energy_spd: bool,
    pub w_spsd: bool,
    pub pass: bool,
}

/// Check the defining conditions: skew-symmetry of J and N, SPD of E^T Q
/// and positive semi-definiteness of the structure matrix W.
pub fn validate_ph(ph: &PhSystem, tol: f64) -> ValidationReport {
    let skew_j = (&ph.j + ph.j.transpose()).amax();
    let skew_n = (&ph.n + ph.n.transpose()).amax();
    let etq = ph.energy_matrix();
    let energy_sym = (&etq - etq.transpose()).amax();
    let etq_sym = (&etq + etq.transpose()) * 0.5;
    let eig = etq_sym.symmetric_eigenvalues();
    let lambda_min_energy = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let w = ph.structure_matrix();
    let w_sym = (&w + w.transpose()) * 0.5;
    let weig = w_sym.symmetric_eigenvalues();
    let lambda_min_w = weig.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm_w = weig.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let scale_j = ph.j.amax().max(1.0);
    let scale_n = ph.n.amax().max(1.0);
    let energy_scale = eig.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())).max(1.0);
    let energy_spd = energy_sym <= tol * energy_scale && lambda_min_energy > 0.0;
    let w_spsd = lambda_min_w >= -tol * norm_w.max(1.0);
    let pass = skew_j <= tol * scale_j && skew_n <= tol * scale_n && energy_spd && w_spsd;
    ValidationReport {
        dim: ph.dim(),
        ports: ph.ports(),
        provenance: ph.provenance,
        skew_residual_j: skew_j,
        skew_residual_n: skew_n,
        energy_symmetry_residual: energy_sym,
        lambda_min_energy,
        lambda_min_w,
        norm_w,
        tol,
        energy_spd,
        w_spsd,
        pass,
    }
}

/// H(x) = 1/2 x^T (E^T Q) x.
pub fn hamiltonian(ph: &PhSystem, x: &DVector<f64>) -> f64 {
    assert_eq!(x.len(), ph.dim());
    0.5 * x.dot(&(ph.e.transpose() * (&ph.q * x)))
}

/// Block form of the embedded Hamiltonian, 1/2 (v^T M v + p^T K p).
pub fn hamiltonian_second_order(
    m: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DVector<f64>,
    p: &DVector<f64>,
) -> f64 {
    0.5 * (v.dot(&(m * v)) + p.dot(&(k * p)))
}

/// Energy bookkeeping between two stored samples: trapezoidal supplied
/// power and dissipation on the accepted grid, balance residual and the
/// dissipation inequality with a tolerance tied to the solver tolerances.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DissipationAudit {
    pub t1: f64,
    pub t2: f64,
    pub delta_h: f64,
    pub supplied: f64,
    pub dissipated: f64,
    pub balance_residual: f64,
    pub audit_tol: f64,
    pub inequality_ok: bool,
}

/// Audit energy balance and the dissipation inequality between times t1
/// and t2, snapped to the nearest stored samples.
pub fn dissipation_audit(
    ph: &PhSystem,
    traj: &Trajectory,
    t1: f64,
    t2: f64,
) -> Result<DissipationAudit> {
    let (lo, hi) = traj.span();
    if t1 > t2 || t1 < lo || t2 > hi {
        return Err(Error::InvalidArgument(format!(
            "audit times [{t1}, {t2}] outside trajectory span [{lo}, {hi}]"
        )));
    }
    let i1 = traj.nearest_index(t1);
    let i2 = traj.nearest_index(t2);
    let (t1, t2) = (traj.times[i1], traj.times[i2]);
    let h1 = hamiltonian(ph, &traj.states[i1]);
    let h2 = hamiltonian(ph, &traj.states[i2]);
    let delta_h = h2 - h1;

    // Integrands evaluated anywhere via dense output; the port power uses
    // the collocated pH output y = B^T Q x.
    let qrq = ph.q.transpose() * &ph.r * &ph.q;
    let btq = ph.b.transpose() * &ph.q;
    let power = |t: f64| {
        let x = traj.interpolate(t);
        (&btq * &x).dot(&traj.input_at(t))
    };
    let diss = |t: f64| {
        let x = traj.interpolate(t);
        (&qrq * &x).dot(&x)
    };
    // composite Simpson with 4 panels inside each accepted step
    let simpson = |f: &dyn Fn(f64) -> f64| {
        let mut acc = 0.0;
        for w in i1..i2 {
            let (a, b) = (traj.times[w], traj.times[w + 1]);
            let h = (b - a) / 4.0;
            for p in 0..4 {
                let (x0, x1) = (a + h * p as f64, a + h * (p + 1) as f64);
                acc += h / 6.0 * (f(x0) + 4.0 * f(0.5 * (x0 + x1)) + f(x1));
            }
        }
        acc
    };
    let supplied = simpson(&power);
    let dissipated = simpson(&diss);
    let energy_scale = traj
        .states
        .iter()
        .map(|x| hamiltonian(ph, x))
        .fold(0.0_f64, f64::max);
    let audit_tol = 10.0 * (traj.eps_rel * energy_scale + traj.eps_abs) * (t2 - t1).max(1.0);
    let balance_residual = (delta_h - (supplied - dissipated)).abs();
    let inequality_ok = delta_h <= supplied + audit_tol;
    Ok(DissipationAudit {
        t1,
        t2,
        delta_h,
        supplied,
        dissipated,
        balance_residual,
        audit_tol,
        inequality_ok,
    })
}

/// Expected Hamiltonian of the PC approximant built from coefficient sets
/// for p and dp/dt: E[ 1/2 (v~^T M(mu) v~ + p~^T K(mu) p~) ] by quadrature.
pub fn expected_hamiltonian_of_approximant(
    sys: &ParametricSecondOrderSystem,
    basis: &PcBasis,
    p_coeffs: &[DVector<f64>],
    v_coeffs: &[DVector<f64>],
    rule: &QuadratureRule,
) -> Result<f64> {
    expectation(rule, |xi| {
        let mu = basis.domain().to_physical(xi);
        let m = sys.m.eval(&mu);
        let k = sys.k.eval(&mu);
        let p = expand_approximant(p_coeffs, basis, xi);
        let v = expand_approximant(v_coeffs, basis, xi);
        Ok(hamiltonian_second_order(&m, &k, &v, &p))
    })
}
