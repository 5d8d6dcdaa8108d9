//! Structure-preserving Galerkin-type model order reduction of the
//! stochastic Galerkin system via the second-order Arnoldi (SOAR)
//! procedure.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::paramodel::{
    classify_definiteness, lambda_min, ConstantSecondOrderSystem, Definiteness,
};
use crate::sgalerkin::GalerkinSecondOrderSystem;

/// Orthonormal Krylov basis for projection. Columns are ordered by
/// generation, so truncation to the first r columns is valid for any
/// r up to the recorded rank.
#[derive(Debug, Clone)]
pub struct ProjectionBasis {
    v: DMatrix<f64>,
    /// True if the recurrence exhausted the subspace before reaching the
    /// requested size.
    pub exhausted: bool,
}

impl ProjectionBasis {
    /// Wrap an externally built orthonormal basis matrix.
    pub fn from_matrix(v: DMatrix<f64>, exhausted: bool) -> Self {
        Self { v, exhausted }
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn truncated(&self, r: usize) -> DMatrix<f64> {
        assert!(r <= self.rank());
        self.v.columns(0, r).clone_owned()
    }

    /// Max deviation of V^T V from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        let r = self.rank();
        (self.v.transpose() * &self.v - DMatrix::identity(r, r)).amax()
    }
}

/// Second-order Arnoldi procedure for the second-order Krylov subspace
/// generated by A = -K^{-1} D and B = -K^{-1} M with start vector
/// K^{-1} b (expansion point 0). Modified Gram-Schmidt with one
/// reorthogonalization pass; candidates whose post-orthogonalization norm
/// falls below defl_tol (relative to the pre-orthogonalization norm) are
/// deflated and the recurrence continues on the auxiliary sequence.
pub fn soar(
    khat: &DMatrix<f64>,
    dhat: &DMatrix<f64>,
    mhat: &DMatrix<f64>,
    b: &DVector<f64>,
    r_max: usize,
    defl_tol: f64,
) -> Result<ProjectionBasis> {
    let ns = khat.nrows();
    if r_max == 0 || r_max > ns {
        return Err(Error::InvalidArgument(format!(
            "requested basis size {r_max} outside 1..={ns}"
        )));
    }
    if b.amax() == 0.0 {
        return Err(Error::InvalidArgument("start vector is zero".into()));
    }
    let chol: Cholesky<f64, Dyn> = khat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("stiffness block is not SPD".into()))?;

    let v1 = chol.solve(b);
    let v1_norm = v1.norm();
    if v1_norm == 0.0 {
        return Err(Error::InvalidArgument("start vector is zero after solve".into()));
    }

    // Full sequences including deflated (zero) q vectors; V collects the
    // nonzero ones.
    let mut qs: Vec<DVector<f64>> = vec![&v1 / v1_norm];
    let mut ps: Vec<DVector<f64>> = vec![DVector::zeros(ns)];
    let mut columns: Vec<DVector<f64>> = vec![qs[0].clone()];
    let mut exhausted = false;

    let max_iters = 2 * ns;
    let mut j = 0;
    while columns.len() < r_max && j < max_iters {
        // r = A q_j + B p_j via one K-solve
        let rhs = dhat * &qs[j] + mhat * &ps[j];
        let mut r = -chol.solve(&rhs);
        let mut s = qs[j].clone();
        let pre_norm = r.norm();

        // MGS with one reorthogonalization pass; the auxiliary vector is
        // updated with the same coefficients.
        for _pass in 0..2 {
            for (qi, pi) in qs.iter().zip(&ps) {
                let t = qi.dot(&r);
                if t != 0.0 {
                    r -= qi * t;
                    s -= pi * t;
                }
            }
        }
        let t = r.norm();
        if t > defl_tol * pre_norm.max(1e-300) {
            let q_next = &r / t;
            let p_next = &s / t;
            columns.push(q_next.clone());
            qs.push(q_next);
            ps.push(p_next);
        } else {
            // deflation: drop the direction, continue on the auxiliary
            // sequence
            let s_norm = s.norm();
            if s_norm <= defl_tol {
                exhausted = true;
                break;
            }
            qs.push(DVector::zeros(ns));
            ps.push(&s / s_norm);
        }
        j += 1;
    }
    if columns.len() < r_max && !exhausted {
        exhausted = true;
    }
    let v = DMatrix::from_columns(&columns);
    Ok(ProjectionBasis { v, exhausted })
}

/// Extend a basis to a full orthogonal matrix by Gram-Schmidt over the
/// coordinate directions; used for full-order sanity reductions.
pub fn complete_basis(basis: &ProjectionBasis, ns: usize) -> ProjectionBasis {
    let mut columns: Vec<DVector<f64>> = (0..basis.rank())
        .map(|i| basis.v.column(i).clone_owned())
        .collect();
    for k in 0..ns {
        if columns.len() == ns {
            break;
        }
        let mut cand = DVector::zeros(ns);
        cand[k] = 1.0;
        for _pass in 0..2 {
            for c in &columns {
                let t = c.dot(&cand);
                cand -= c * t;
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            columns.push(cand / norm);
        }
    }
    ProjectionBasis {
        v: DMatrix::from_columns(&columns),
        exhausted: false,
    }
}

/// ROM produced by a Galerkin projection of the block system.
#[derive(Debug, Clone)]
pub struct ReducedSecondOrderSystem {
    sys: ConstantSecondOrderSystem,
    r: usize,
}

impl ReducedSecondOrderSystem {
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn as_constant(&self) -> &ConstantSecondOrderSystem {
        &self.sys
    }
}

/// Congruence reduction with the first r basis columns:
/// Abar = V_r^T Ahat V_r for M, D, K; Bbar = V_r^T Bhat; Fbar = Fhat V_r,
/// Gbar = Ghat V_r. Definiteness is re-certified.
pub fn reduce(
    gal: &GalerkinSecondOrderSystem,
    basis: &ProjectionBasis,
    r: usize,
) -> Result<ReducedSecondOrderSystem> {
    if r == 0 || r > basis.rank() {
        return Err(Error::InvalidArgument(format!(
            "reduced dimension {r} outside 1..={}",
            basis.rank()
        )));
    }
    let v = basis.v.columns(0, r);
    let project = |a: &DMatrix<f64>| v.transpose() * a * v;
    let mbar = project(gal.mhat());
    let dbar = project(gal.dhat());
    let kbar = project(gal.khat());
    let bbar = v.transpose() * gal.bhat();
    let fbar = gal.fhat() * v;
    let gbar = gal.ghat() * v;

    let tol = 1e-10;
    if classify_definiteness(&mbar, tol) != Definiteness::Spd {
        return Err(Error::Certification {
            matrix: "Mbar".into(),
            lambda_min: lambda_min(&mbar),
        });
    }
    if classify_definiteness(&kbar, tol) != Definiteness::Spd {
        return Err(Error::Certification {
            matrix: "Kbar".into(),
            lambda_min: lambda_min(&kbar),
        });
    }
    Ok(ReducedSecondOrderSystem {
        sys: ConstantSecondOrderSystem::new(mbar, dbar, kbar, bbar, fbar, gbar)?,
        r,
    })
}

/// Symmetry and definiteness bookkeeping of a ROM.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StructureReport {
    pub r: usize,
    pub sym_residual_m: f64,
    pub sym_residual_d: f64,
    pub sym_residual_k: f64,
    pub lambda_min_m: f64,
    pub lambda_min_d: f64,
    pub lambda_min_k: f64,
    pub class_m: Definiteness,
    pub class_d: Definiteness,
    pub class_k: Definiteness,
    /// Set when Dbar is SPD, which guarantees asymptotic stability.
    pub asymptotically_stable: bool,
}

pub fn structure_report(rom: &ReducedSecondOrderSystem) -> StructureReport {
    let sys = rom.as_constant();
    let sym = |a: &DMatrix<f64>| (a - a.transpose()).amax();
    let tol = 1e-10;
    let class_d = classify_definiteness(&sys.d, tol);
    StructureReport {
        r: rom.r(),
        sym_residual_m: sym(&sys.m),
        sym_residual_d: sym(&sys.d),
        sym_residual_k: sym(&sys.k),
        lambda_min_m: lambda_min(&sys.m),
        lambda_min_d: lambda_min(&sys.d),
        lambda_min_k: lambda_min(&sys.k),
        class_m: classify_definiteness(&sys.m, tol),
        class_d,
        class_k: classify_definiteness(&sys.k, tol),
        asymptotically_stable: class_d == Definiteness::Spd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramodel::{build_msd, build_msd_q2};
    use crate::pcbasis::PcBasis;
    use crate::sgalerkin::assemble;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn desk_galerkin() -> GalerkinSecondOrderSystem {
        let sys = build_msd_q2(0.1).unwrap();
        let basis = PcBasis::new(sys.domain.clone(), 2).unwrap();
        assemble(&sys, &basis).unwrap()
    }

    #[test]
    fn first_krylov_vector() {
        let gal = desk_galerkin();
        let b = gal.bhat().column(0).clone_owned();
        let basis = soar(gal.khat(), gal.dhat(), gal.mhat(), &b, 1, 1e-12).unwrap();
        assert_eq!(basis.rank(), 1);
        let expect = gal.khat().clone().cholesky().unwrap().solve(&b);
        let expect = &expect / expect.norm();
        let got = basis.matrix().column(0).clone_owned();
        assert!((&got - &expect).amax() < 1e-12 || (&got + &expect).amax() < 1e-12);
    }

    #[test]
    fn orthonormality_contract() {
        let gal = desk_galerkin();
        let b = gal.bhat().column(0).clone_owned();
        for r in [1, 5, 10, 20] {
            let basis = soar(gal.khat(), gal.dhat(), gal.mhat(), &b, r, 1e-12).unwrap();
            assert!(basis.orthonormality_residual() <= 1e-10, "r={r}");
        }
    }

    #[test]
    fn soar_rejects_zero_start_vector() {
        let gal = desk_galerkin();
        let b = DVector::zeros(gal.ns());
        assert!(soar(gal.khat(), gal.dhat(), gal.mhat(), &b, 3, 1e-12).is_err());
    }

    /// Small-matrix oracle: for diagonal M, D, K the second Krylov vector
    /// spans K^{-1} D K^{-1} b alongside K^{-1} b.
    #[test]
    fn span_matches_explicit_krylov_oracle() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7]));
        let m = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let basis = soar(&k, &d, &m, &b, 2, 1e-12).unwrap();
        assert_eq!(basis.rank(), 2);
        let kinv_b = k.clone().cholesky().unwrap().solve(&b);
        let kdk_b = k.clone().cholesky().unwrap().solve(&(&d * &kinv_b));
        // subspace angle check: both oracle vectors lie in span(V)
        let v = basis.matrix();
        for target in [&kinv_b, &kdk_b] {
            let proj = v * (v.transpose() * target);
            let angle = (target - &proj).norm() / target.norm();
            assert!(angle <= 1e-8, "angle residual {angle}");
        }
    }

    #[test]
    fn coordinate_projection_takes_principal_submatrix() {
        let gal = desk_galerkin();
        let ns = gal.ns();
        let r = 5;
        let mut v = DMatrix::zeros(ns, r);
        for i in 0..r {
            v[(i, i)] = 1.0;
        }
        let basis = ProjectionBasis { v, exhausted: false };
        let rom = reduce(&gal, &basis, r).unwrap();
        let expect = gal.mhat().view((0, 0), (r, r)).clone_owned();
        assert!((&rom.as_constant().m - expect).amax() < 1e-15);
    }

    #[test]
    fn reduction_preserves_definiteness() {
        let gal = desk_galerkin();
        let b = gal.bhat().column(0).clone_owned();
        let basis = soar(gal.khat(), gal.dhat(), gal.mhat(), &b, 20, 1e-12).unwrap();
        // the Krylov space may saturate below the requested size
        for r in [1, 5, 10, basis.rank()] {
            let rom = reduce(&gal, &basis, r).unwrap();
            let report = structure_report(&rom);
            assert_eq!(report.class_m, Definiteness::Spd, "r={r}");
            assert_eq!(report.class_k, Definiteness::Spd, "r={r}");
            assert!(
                report.class_d == Definiteness::Spd || report.class_d == Definiteness::Spsd
            );
            assert!(report.sym_residual_m <= 1e-12 * gal.mhat().amax());
        }
    }

    #[test]
    fn truncation_consistency() {
        let gal = desk_galerkin();
        let b = gal.bhat().column(0).clone_owned();
        let basis = soar(gal.khat(), gal.dhat(), gal.mhat(), &b, 15, 1e-12).unwrap();
        let truncated = ProjectionBasis {
            v: basis.truncated(8),
            exhausted: false,
        };
        let a = reduce(&gal, &basis, 8).unwrap();
        let b2 = reduce(&gal, &truncated, 8).unwrap();
        assert_eq!(a.as_constant().m, b2.as_constant().m);
        assert_eq!(a.as_constant().k, b2.as_constant().k);
    }

    #[test]
    fn congruence_definiteness_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let n = rng.gen_range(3..=8);
            let r = rng.gen_range(1..=n);
            let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let spd = &x * x.transpose() + DMatrix::identity(n, n) * 0.1;
            // random orthonormal V from QR
            let raw = DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
            let qr = raw.qr();
            let v = qr.q().columns(0, r).clone_owned();
            let reduced = v.transpose() * &spd * &v;
            assert!(lambda_min(&reduced) > 0.0);
            // SPSD case
            let y = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
            let psd = &y * y.transpose();
            let reduced = v.transpose() * &psd * &v;
            assert!(lambda_min(&reduced) >= -1e-10);
        }
    }

    #[test]
    fn petrov_galerkin_destroys_symmetry() {
        let gal = desk_galerkin();
        let ns = gal.ns();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let v = DMatrix::from_fn(ns, 3, |_, _| rng.gen_range(-1.0..1.0));
        let w = DMatrix::from_fn(ns, 3, |_, _| rng.gen_range(-1.0..1.0));
        let reduced = w.transpose() * gal.khat() * &v;
        assert_eq!(
            classify_definiteness(&reduced, 1e-10),
            Definiteness::Unsymmetric
        );
    }

    #[test]
    fn full_scale_basis_on_q14_d1() {
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let basis = PcBasis::new(sys.domain.clone(), 1).unwrap();
        let gal = assemble(&sys, &basis).unwrap();
        let b = gal.bhat().column(0).clone_owned();
        let pb = soar(gal.khat(), gal.dhat(), gal.mhat(), &b, 50, 1e-12).unwrap();
        // the reachable second-order Krylov space saturates below ns here;
        // completion must still provide a full-size orthonormal basis
        assert!(pb.rank() >= 20, "rank {}", pb.rank());
        assert!(pb.orthonormality_residual() <= 1e-10);
        let full = complete_basis(&pb, gal.ns());
        assert_eq!(full.rank(), gal.ns());
        assert!(full.orthonormality_residual() <= 1e-8);
        let rom = reduce(&gal, &full, 40).unwrap();
        assert_eq!(structure_report(&rom).class_m, Definiteness::Spd);
    }
}
