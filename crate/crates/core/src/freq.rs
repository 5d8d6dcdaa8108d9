//! Frequency-domain analysis: transfer function evaluation, Bode data,
//! H2 norms via dense Schur-based Lyapunov solves, and relative H2 errors
//! between full and reduced models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::paramodel::ConstantSecondOrderSystem;

/// Transfer function H(s) = (F + sG)(s^2 M + s D + K)^{-1} B' of a
/// constant second-order system.
#[derive(Debug, Clone)]
pub struct TransferEvaluator {
    m: DMatrix<f64>,
    d: DMatrix<f64>,
    k: DMatrix<f64>,
    bprime: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
}

impl TransferEvaluator {
    pub fn new(sys: &ConstantSecondOrderSystem) -> Self {
        Self {
            m: sys.m.clone(),
            d: sys.d.clone(),
            k: sys.k.clone(),
            bprime: sys.bprime.clone(),
            f: sys.f.clone(),
            g: sys.g.clone(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.bprime.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.f.nrows()
    }

    /// Solve the quadratic pencil at s, then multiply; no explicit
    /// inverse is formed.
    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.m.nrows();
        let pencil = DMatrix::from_fn(n, n, |i, j| {
            s * s * self.m[(i, j)] + s * self.d[(i, j)] + self.k[(i, j)]
        });
        let pencil_scale = pencil.iter().fold(0.0_f64, |a, x| a.max(x.norm()));
        let lu = pencil.lu();
        let b = self.bprime.map(|x| Complex64::new(x, 0.0));
        let solved = lu.solve(&b).ok_or_else(|| Error::SingularPencil {
            s: format!("{s}"),
            cond: f64::INFINITY,
        })?;
        // reject numerically singular pencils that LU still "solved"
        let min_pivot = (0..n)
            .map(|i| lu.u()[(i, i)].norm())
            .fold(f64::INFINITY, f64::min);
        if min_pivot < 1e-14 * pencil_scale {
            return Err(Error::SingularPencil {
                s: format!("{s}"),
                cond: pencil_scale / min_pivot,
            });
        }
        let fg = self.f.map(|x| Complex64::new(x, 0.0))
            + self.g.map(|x| Complex64::new(x, 0.0)) * s;
        Ok(fg * solved)
    }
}

/// One Bode sample: angular frequency, magnitude in dB, phase in degrees.
#[derive(Debug, Clone, Copy)]
pub struct BodePoint {
    pub omega: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

/// Logarithmically spaced Bode data for a SISO system; phase unwrapped
/// continuously (cumulative, threshold pi).
pub fn bode_grid(
    te: &TransferEvaluator,
    omega_min: f64,
    omega_max: f64,
    points: usize,
) -> Result<Vec<BodePoint>> {
    if !(0.0 < omega_min && omega_min < omega_max) || points < 2 {
        return Err(Error::InvalidArgument(
            "need 0 < omega_min < omega_max and at least 2 points".into(),
        ));
    }
    if te.n_in() != 1 || te.n_out() != 1 {
        return Err(Error::InvalidArgument(
            "Bode data is defined for SISO systems only".into(),
        ));
    }
    let log_min = omega_min.ln();
    let log_max = omega_max.ln();
    let mut out = Vec::with_capacity(points);
    let mut prev_phase = 0.0;
    let mut offset = 0.0;
    for i in 0..points {
        let omega = if i == 0 {
            omega_min
        } else if i == points - 1 {
            omega_max
        } else {
            (log_min + (log_max - log_min) * i as f64 / (points - 1) as f64).exp()
        };
        let h = te.eval(Complex64::new(0.0, omega))?[(0, 0)];
        let mag_db = 20.0 * h.norm().log10();
        let raw_phase = h.arg();
        if i > 0 {
            let mut delta = raw_phase + offset - prev_phase;
            while delta > std::f64::consts::PI {
                offset -= 2.0 * std::f64::consts::PI;
                delta -= 2.0 * std::f64::consts::PI;
            }
            while delta < -std::f64::consts::PI {
                offset += 2.0 * std::f64::consts::PI;
                delta += 2.0 * std::f64::consts::PI;
            }
        }
        let phase = raw_phase + offset;
        prev_phase = phase;
        out.push(BodePoint {
            omega,
            mag_db,
            phase_deg: phase.to_degrees(),
        });
    }
    Ok(out)
}

/// First-order realization (A, B, C) of a second-order system with state
/// (p, v): p' = v, M v' = B'u - Dv - Kp, y = F p + G v.
pub fn first_order_realization(
    sys: &ConstantSecondOrderSystem,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = sys.n();
    let chol = sys
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("mass matrix is not SPD".into()))?;
    let minv_k = chol.solve(&sys.k);
    let minv_d = chol.solve(&sys.d);
    let minv_b = chol.solve(&sys.bprime);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    a.view_mut((n, 0), (n, n)).copy_from(&(-&minv_k));
    a.view_mut((n, n), (n, n)).copy_from(&(-&minv_d));
    let mut b = DMatrix::zeros(2 * n, sys.n_in());
    b.view_mut((n, 0), (n, sys.n_in())).copy_from(&minv_b);
    let mut c = DMatrix::zeros(sys.n_out(), 2 * n);
    c.view_mut((0, 0), (sys.n_out(), n)).copy_from(&sys.f);
    c.view_mut((0, n), (sys.n_out(), n)).copy_from(&sys.g);
    Ok((a, b, c))
}

/// Real Schur form with an explicit convergence threshold and iteration
/// cap; the library default (machine epsilon, unbounded) can fail to
/// terminate on clustered spectra.
fn bounded_schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let scale = a.amax().max(1.0);
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-13 * scale, 100_000)
        .ok_or_else(|| Error::Factorization("Schur iteration did not converge".into()))?;
    Ok(schur.unpack())
}

/// Largest eigenvalue real part read off a quasi-triangular Schur factor.
fn max_re_of_quasi_triangular(t: &DMatrix<f64>) -> f64 {
    let n = t.nrows();
    let mut max_re = f64::NEG_INFINITY;
    let mut i = 0;
    while i < n {
        let two = i + 1 < n
            && t[(i + 1, i)].abs()
                > f64::EPSILON * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs()).max(1e-300);
        if two {
            // complex pair: real part is half the block trace
            max_re = max_re.max(0.5 * (t[(i, i)] + t[(i + 1, i + 1)]));
            i += 2;
        } else {
            max_re = max_re.max(t[(i, i)]);
            i += 1;
        }
    }
    max_re
}

fn assert_stable(a: &DMatrix<f64>) -> Result<()> {
    let (_, t) = bounded_schur(a)?;
    let max_re = max_re_of_quasi_triangular(&t);
    if max_re >= 0.0 {
        return Err(Error::Unstable { max_re });
    }
    Ok(())
}

/// Schur-based solve of the continuous Lyapunov equation
/// A P + P A^T + B B^T = 0 (Bartels-Stewart with block back-substitution
/// over the real Schur form). The residual is verified against 1e-8
/// relative before the solution is returned.
pub fn lyapunov_gramian(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let bbt = b * b.transpose();
    let (u, t) = bounded_schur(a)?;
    let c = u.transpose() * &bbt * &u;

    // Partition the quasi-triangular T into 1x1 / 2x2 diagonal blocks.
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let two = i + 1 < n
            && t[(i + 1, i)].abs()
                > f64::EPSILON * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs()).max(1e-300);
        let size = if two { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    let nb = blocks.len();

    // Solve T Y + Y T^T = -C block by block: both block indices descend,
    // so the required later blocks are already known.
    let mut y = DMatrix::<f64>::zeros(n, n);
    for bj in (0..nb).rev() {
        let (j0, js) = blocks[bj];
        for bi in (0..nb).rev() {
            let (i0, is) = blocks[bi];
            let mut rhs = -c.view((i0, j0), (is, js)).clone_owned();
            for &(k0, ks) in &blocks[bi + 1..] {
                let t_ik = t.view((i0, k0), (is, ks));
                let y_kj = y.view((k0, j0), (ks, js));
                rhs -= t_ik * y_kj;
            }
            for &(k0, ks) in &blocks[bj + 1..] {
                let y_ik = y.view((i0, k0), (is, ks));
                let t_jk = t.view((j0, k0), (js, ks));
                rhs -= y_ik * t_jk.transpose();
            }
            // small Sylvester block via Kronecker:
            // (I (x) T_ii + T_jj (x) I) vec(Y_ij) = vec(rhs)
            let t_ii = t.view((i0, i0), (is, is)).clone_owned();
            let t_jj = t.view((j0, j0), (js, js)).clone_owned();
            let dim = is * js;
            let mut sys = DMatrix::<f64>::zeros(dim, dim);
            for col in 0..js {
                for row in 0..is {
                    let eq = col * is + row;
                    for r2 in 0..is {
                        sys[(eq, col * is + r2)] += t_ii[(row, r2)];
                    }
                    for c2 in 0..js {
                        sys[(eq, c2 * is + row)] += t_jj[(col, c2)];
                    }
                }
            }
            let rhs_vec = DVector::from_fn(dim, |idx, _| rhs[(idx % is, idx / is)]);
            let sol = sys
                .lu()
                .solve(&rhs_vec)
                .ok_or_else(|| Error::Factorization("singular Sylvester block".into()))?;
            for col in 0..js {
                for row in 0..is {
                    y[(i0 + row, j0 + col)] = sol[col * is + row];
                }
            }
        }
    }
    let p = &u * y * u.transpose();
    let p = (&p + p.transpose()) * 0.5;

    let residual = (a * &p + &p * a.transpose() + &bbt).norm();
    let scale = bbt.norm().max(1e-300);
    let rel = residual / scale;
    if rel > 1e-8 {
        return Err(Error::LyapunovResidual {
            residual: rel,
            tol: 1e-8,
        });
    }
    Ok(p)
}

/// H2 norm of a stable first-order realization: sqrt(trace(C P C^T)) with
/// the controllability Gramian P.
pub fn h2_norm_first_order(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<f64> {
    assert_stable(a)?;
    let p = lyapunov_gramian(a, b)?;
    let cpc = c * &p * c.transpose();
    Ok(cpc.trace().max(0.0).sqrt())
}

/// H2 norm of a stable second-order system.
pub fn h2_norm(sys: &ConstantSecondOrderSystem) -> Result<f64> {
    let (a, b, c) = first_order_realization(sys)?;
    h2_norm_first_order(&a, &b, &c)
}

/// ||H_fom - H_rom||_H2 via the block-diagonal difference realization.
/// Stability is checked per block, which is equivalent and much cheaper
/// than an eigensolve of the joined system.
pub fn h2_error_norm(
    fom: &ConstantSecondOrderSystem,
    rom: &ConstantSecondOrderSystem,
) -> Result<f64> {
    if fom.n_in() != rom.n_in() || fom.n_out() != rom.n_out() {
        return Err(Error::InvalidArgument(
            "port dimensions of the two systems differ".into(),
        ));
    }
    let (a1, b1, c1) = first_order_realization(fom)?;
    let (a2, b2, c2) = first_order_realization(rom)?;
    assert_stable(&a1)?;
    assert_stable(&a2)?;
    let (n1, n2) = (a1.nrows(), a2.nrows());
    let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&a1);
    a.view_mut((n1, n1), (n2, n2)).copy_from(&a2);
    let mut b = DMatrix::zeros(n1 + n2, b1.ncols());
    b.view_mut((0, 0), (n1, b1.ncols())).copy_from(&b1);
    b.view_mut((n1, 0), (n2, b2.ncols())).copy_from(&b2);
    let mut c = DMatrix::zeros(c1.nrows(), n1 + n2);
    c.view_mut((0, 0), (c1.nrows(), n1)).copy_from(&c1);
    c.view_mut((0, n1), (c2.nrows(), n2)).copy_from(&(-&c2));
    let p = lyapunov_gramian(&a, &b)?;
    let cpc = &c * &p * c.transpose();
    let t_err = cpc.trace();
    // The error trace is a difference of two nearly equal positive
    // energies when the ROM is (almost) exact; values below the rounding
    // noise of those energies are numerically zero.
    let e1 = (&c1 * p.view((0, 0), (n1, n1)) * c1.transpose()).trace();
    let e2 = (&c2 * p.view((n1, n1), (n2, n2)) * c2.transpose()).trace();
    let noise_floor = 4.0 * f64::EPSILON * (e1.abs() + e2.abs());
    if t_err <= noise_floor {
        return Ok(0.0);
    }
    Ok(t_err.sqrt())
}

/// ||H_fom - H_rom||_H2 / ||H_fom||_H2.
pub fn relative_h2_error(
    fom: &ConstantSecondOrderSystem,
    rom: &ConstantSecondOrderSystem,
) -> Result<f64> {
    let num = h2_error_norm(fom, rom)?;
    let den = h2_norm(fom)?;
    Ok(num / den)
}

/// Restrict a multi-port system to one output row and one input column,
/// e.g. the expected-value output and the deterministic input mode of a
/// Galerkin system.
pub fn siso_restriction(
    sys: &ConstantSecondOrderSystem,
    out_row: usize,
    in_col: usize,
) -> Result<ConstantSecondOrderSystem> {
    if out_row >= sys.n_out() || in_col >= sys.n_in() {
        return Err(Error::InvalidArgument("port selection out of range".into()));
    }
    ConstantSecondOrderSystem::new(
        sys.m.clone(),
        sys.d.clone(),
        sys.k.clone(),
        DMatrix::from_column_slice(sys.n(), 1, sys.bprime.column(in_col).as_slice()),
        DMatrix::from_fn(1, sys.n(), |_, j| sys.f[(out_row, j)]),
        DMatrix::from_fn(1, sys.n(), |_, j| sys.g[(out_row, j)]),
    )
}
