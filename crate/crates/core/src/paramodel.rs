//! Parametric second-order linear dynamical systems with affine parameter
//! dependence, definiteness classification, and the four-mass
//! mass-spring-damper benchmark.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pcbasis::ParameterDomain;

/// A(mu) = A0 + sum_k mu_k * A_k with sparse term list.
#[derive(Debug, Clone)]
pub struct AffineMatrixFamily {
    a0: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineMatrixFamily {
    pub fn new(a0: DMatrix<f64>, terms: Vec<(usize, DMatrix<f64>)>) -> Result<Self> {
        for (_, t) in &terms {
            if t.shape() != a0.shape() {
                return Err(Error::InvalidArgument(
                    "affine family terms must share the base matrix shape".into(),
                ));
            }
        }
        Ok(Self { a0, terms })
    }

    pub fn constant(a0: DMatrix<f64>) -> Self {
        Self { a0, terms: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.a0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a0.ncols()
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn terms(&self) -> &[(usize, DMatrix<f64>)] {
        &self.terms
    }

    pub fn max_parameter_index(&self) -> Option<usize> {
        self.terms.iter().map(|(k, _)| *k).max()
    }

    /// Evaluate the family at a physical parameter point.
    pub fn eval(&self, mu: &[f64]) -> DMatrix<f64> {
        let mut a = self.a0.clone();
        for (k, t) in &self.terms {
            a += t * mu[*k];
        }
        a
    }
}

/// Outcome of the symmetry/eigenvalue classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Definiteness {
    Spd,
    Spsd,
    Indefinite,
    Unsymmetric,
}

/// Symmetry check on max norms, then the smallest eigenvalue of the
/// symmetric part: SPD if lambda_min > tol*||A||_2, SPSD if
/// lambda_min >= -tol*||A||_2.
pub fn classify_definiteness(a: &DMatrix<f64>, tol: f64) -> Definiteness {
    assert_eq!(a.nrows(), a.ncols());
    let max_norm = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let asym = (a - a.transpose())
        .iter()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if asym > tol * max_norm {
        return Definiteness::Unsymmetric;
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let lambda_min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let spectral = eig.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if lambda_min > tol * spectral {
        Definiteness::Spd
    } else if lambda_min >= -tol * spectral {
        Definiteness::Spsd
    } else {
        Definiteness::Indefinite
    }
}

/// Smallest eigenvalue of the symmetric part, for diagnostics.
pub fn lambda_min(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Second-order system with constant matrices, as produced by evaluating
/// a parametric system, by Galerkin assembly, or by reduction.
#[derive(Debug, Clone)]
pub struct ConstantSecondOrderSystem {
    pub m: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub bprime: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl ConstantSecondOrderSystem {
    pub fn new(
        m: DMatrix<f64>,
        d: DMatrix<f64>,
        k: DMatrix<f64>,
        bprime: DMatrix<f64>,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
    ) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || d.shape() != (n, n) || k.shape() != (n, n) {
            return Err(Error::InvalidArgument("M, D, K must be n x n".into()));
        }
        if bprime.nrows() != n || f.ncols() != n || g.ncols() != n || f.nrows() != g.nrows() {
            return Err(Error::InvalidArgument(
                "port matrix dimensions inconsistent".into(),
            ));
        }
        Ok(Self { m, d, k, bprime, f, g })
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.bprime.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.f.nrows()
    }

    /// Definiteness of (M, D, K) at the given tolerance.
    pub fn certify(&self, tol: f64) -> (Definiteness, Definiteness, Definiteness) {
        (
            classify_definiteness(&self.m, tol),
            classify_definiteness(&self.d, tol),
            classify_definiteness(&self.k, tol),
        )
    }
}

/// Second-order system whose matrices are affine families over a
/// parameter box.
#[derive(Debug, Clone)]
pub struct ParametricSecondOrderSystem {
    pub m: AffineMatrixFamily,
    pub d: AffineMatrixFamily,
    pub k: AffineMatrixFamily,
    pub bprime: AffineMatrixFamily,
    pub f: AffineMatrixFamily,
    pub g: AffineMatrixFamily,
    pub domain: ParameterDomain,
}

impl ParametricSecondOrderSystem {
    pub fn n(&self) -> usize {
        self.m.rows()
    }

    pub fn n_in(&self) -> usize {
        self.bprime.cols()
    }

    pub fn n_out(&self) -> usize {
        self.f.rows()
    }

    /// Evaluate every family at a physical parameter point.
    pub fn at(&self, mu: &[f64]) -> Result<ConstantSecondOrderSystem> {
        if !self.domain.contains(mu) {
            return Err(Error::InvalidArgument(
                "parameter point outside the domain box".into(),
            ));
        }
        ConstantSecondOrderSystem::new(
            self.m.eval(mu),
            self.d.eval(mu),
            self.k.eval(mu),
            self.bprime.eval(mu),
            self.f.eval(mu),
            self.g.eval(mu),
        )
    }

    /// Evaluation at the domain center.
    pub fn at_center(&self) -> ConstantSecondOrderSystem {
        let mu: Vec<f64> = (0..self.domain.q()).map(|k| self.domain.center(k)).collect();
        self.at(&mu).expect("center lies in the box")
    }

    /// Check SPD of M, K and SPSD of D on the vertices of the parameter
    /// box: all 2^q vertices for q <= 12, a deterministic 1000-vertex
    /// sample otherwise.
    pub fn certify_on_vertices(&self, tol: f64) -> Result<()> {
        let q = self.domain.q();
        let check = |mu: &[f64]| -> Result<()> {
            let m = self.m.eval(mu);
            let d = self.d.eval(mu);
            let k = self.k.eval(mu);
            if classify_definiteness(&m, tol) != Definiteness::Spd {
                return Err(Error::Certification {
                    matrix: "M".into(),
                    lambda_min: lambda_min(&m),
                });
            }
            if classify_definiteness(&k, tol) != Definiteness::Spd {
                return Err(Error::Certification {
                    matrix: "K".into(),
                    lambda_min: lambda_min(&k),
                });
            }
            match classify_definiteness(&d, tol) {
                Definiteness::Spd | Definiteness::Spsd => Ok(()),
                _ => Err(Error::Certification {
                    matrix: "D".into(),
                    lambda_min: lambda_min(&d),
                }),
            }
        };
        let vertex = |bits: u64| -> Vec<f64> {
            (0..q)
                .map(|k| {
                    if bits >> k & 1 == 1 {
                        self.domain.upper()[k]
                    } else {
                        self.domain.lower()[k]
                    }
                })
                .collect()
        };
        if q <= 12 {
            for bits in 0..(1u64 << q) {
                check(&vertex(bits))?;
            }
        } else {
            let mut state = 0x9e3779b97f4a7c15u64;
            for _ in 0..1000 {
                // xorshift64*
                state ^= state >> 12;
                state ^= state << 25;
                state ^= state >> 27;
                let bits = state.wrapping_mul(0x2545f4914f6cdd1d);
                check(&vertex(bits))?;
            }
        }
        Ok(())
    }
}

/// Uniform box with the given relative half-width around the mean values.
pub fn randomize_domain(mean: &[f64], relative_halfwidth: f64) -> Result<ParameterDomain> {
    if !(0.0 < relative_halfwidth && relative_halfwidth < 1.0) {
        return Err(Error::InvalidArgument(
            "relative halfwidth must lie in (0,1)".into(),
        ));
    }
    if mean.iter().any(|m| *m <= 0.0) {
        return Err(Error::InvalidArgument("mean parameters must be positive".into()));
    }
    let lower: Vec<f64> = mean.iter().map(|m| (1.0 - relative_halfwidth) * m).collect();
    let upper: Vec<f64> = mean.iter().map(|m| (1.0 + relative_halfwidth) * m).collect();
    ParameterDomain::new(lower, upper)
}

/// Number of physical parameters of the mass-spring-damper benchmark:
/// four masses, four dampers, six springs.
pub const MSD_PARAMS: usize = 14;

/// Four-degree-of-freedom mass-spring-damper system.
///
/// Topology: chain of four masses with springs k1..k4 between
/// ground-mass1-mass2-mass3-mass4, skip springs k5 (mass1-mass3) and
/// k6 (mass2-mass4), and damper d_i from mass i to ground. The single
/// input is the excitation transmitted through the grounded bottom
/// spring, B' = k1 * e1; the output matrices are F = 0, G = B'^T
/// (velocity of the bottom mass scaled by k1), so the system is SISO and
/// directly compatible with the port-Hamiltonian embedding.
///
/// Parameter ordering: mu = (m1..m4, d1..d4, k1..k6). Every physical
/// parameter appears affinely in exactly one of M, D, K, B'.
pub fn build_msd(means: &[f64], relative_halfwidth: f64) -> Result<ParametricSecondOrderSystem> {
    if means.len() != MSD_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "mass-spring-damper model needs {MSD_PARAMS} parameters, got {}",
            means.len()
        )));
    }
    for (i, v) in means.iter().enumerate() {
        if *v <= 0.0 {
            let name = msd_parameter_name(i);
            return Err(Error::InvalidArgument(format!(
                "parameter {name} must be positive, got {v}"
            )));
        }
    }
    let domain = randomize_domain(means, relative_halfwidth)?;
    let n = 4;
    let zero = || DMatrix::<f64>::zeros(n, n);

    let mut m_terms = Vec::new();
    for i in 0..4 {
        let mut t = zero();
        t[(i, i)] = 1.0;
        m_terms.push((i, t));
    }
    let mut d_terms = Vec::new();
    for i in 0..4 {
        let mut t = zero();
        t[(i, i)] = 1.0;
        d_terms.push((4 + i, t));
    }
    // Spring incidence: (parameter index, mass a, mass b); b = None is ground.
    let springs: [(usize, usize, Option<usize>); 6] = [
        (8, 0, None),     // k1: ground - mass1
        (9, 0, Some(1)),  // k2
        (10, 1, Some(2)), // k3
        (11, 2, Some(3)), // k4
        (12, 0, Some(2)), // k5: skip spring mass1 - mass3
        (13, 1, Some(3)), // k6: skip spring mass2 - mass4
    ];
    let mut k_terms = Vec::new();
    for (param, a, b) in springs {
        let mut t = zero();
        t[(a, a)] = 1.0;
        if let Some(b) = b {
            t[(b, b)] = 1.0;
            t[(a, b)] = -1.0;
            t[(b, a)] = -1.0;
        }
        k_terms.push((param, t));
    }
    let mut b_term = DMatrix::<f64>::zeros(n, 1);
    b_term[(0, 0)] = 1.0;
    let g_term = b_term.transpose();

    Ok(ParametricSecondOrderSystem {
        m: AffineMatrixFamily::new(zero(), m_terms)?,
        d: AffineMatrixFamily::new(zero(), d_terms)?,
        k: AffineMatrixFamily::new(zero(), k_terms)?,
        bprime: AffineMatrixFamily::new(DMatrix::zeros(n, 1), vec![(8, b_term)])?,
        f: AffineMatrixFamily::constant(DMatrix::zeros(1, n)),
        g: AffineMatrixFamily::new(DMatrix::zeros(1, n), vec![(8, g_term)])?,
        domain,
    })
}

/// Freeze all but the listed parameters of a parametric system at the
/// domain center, renumbering the remaining parameters in listing order.
/// Used to derive desk-scale variants with few random parameters.
pub fn freeze_parameters(
    sys: &ParametricSecondOrderSystem,
    free: &[usize],
) -> Result<ParametricSecondOrderSystem> {
    let q = sys.domain.q();
    if free.is_empty() || free.iter().any(|k| *k >= q) {
        return Err(Error::InvalidArgument(
            "free parameter indices must be nonempty and within the domain".into(),
        ));
    }
    let renumber: std::collections::HashMap<usize, usize> =
        free.iter().enumerate().map(|(new, old)| (*old, new)).collect();
    let reduce = |fam: &AffineMatrixFamily| -> Result<AffineMatrixFamily> {
        let mut base = fam.base().clone();
        let mut terms = Vec::new();
        for (k, t) in fam.terms() {
            match renumber.get(k) {
                Some(new_k) => terms.push((*new_k, t.clone())),
                None => base += t * sys.domain.center(*k),
            }
        }
        AffineMatrixFamily::new(base, terms)
    };
    let lower: Vec<f64> = free.iter().map(|k| sys.domain.lower()[*k]).collect();
    let upper: Vec<f64> = free.iter().map(|k| sys.domain.upper()[*k]).collect();
    Ok(ParametricSecondOrderSystem {
        m: reduce(&sys.m)?,
        d: reduce(&sys.d)?,
        k: reduce(&sys.k)?,
        bprime: reduce(&sys.bprime)?,
        f: reduce(&sys.f)?,
        g: reduce(&sys.g)?,
        domain: ParameterDomain::new(lower, upper)?,
    })
}

/// Desk-scale mass-spring-damper with two random parameters (m1 and k1).
pub fn build_msd_q2(halfwidth: f64) -> Result<ParametricSecondOrderSystem> {
    let full = build_msd(&[1.0; 14], halfwidth)?;
    freeze_parameters(&full, &[0, 8])
}

pub fn msd_parameter_name(i: usize) -> String {
    match i {
        0..=3 => format!("m{}", i + 1),
        4..=7 => format!("d{}", i - 3),
        _ => format!("k{}", i - 7),
    }
}
