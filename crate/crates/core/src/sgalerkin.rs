//! Stochastic Galerkin projection: exact block assembly for affine matrix
//! families, a quadrature-based projection path for general families, and
//! PC post-processing (approximant evaluation, mean/std).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::paramodel::{
    classify_definiteness, lambda_min, ConstantSecondOrderSystem, Definiteness,
    ParametricSecondOrderSystem,
};
use crate::pcbasis::PcBasis;
use crate::quadrature::QuadratureRule;

/// Constant block system produced by projecting a parametric second-order
/// system onto a chaos basis. Block (i,j) of each n*s matrix sits at
/// offsets (i*n, j*n).
#[derive(Debug, Clone)]
pub struct GalerkinSecondOrderSystem {
    sys: ConstantSecondOrderSystem,
    n: usize,
    s: usize,
    cert: (Definiteness, Definiteness, Definiteness),
    margins: (f64, f64, f64),
}

impl GalerkinSecondOrderSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn ns(&self) -> usize {
        self.n * self.s
    }

    pub fn as_constant(&self) -> &ConstantSecondOrderSystem {
        &self.sys
    }

    pub fn mhat(&self) -> &DMatrix<f64> {
        &self.sys.m
    }

    pub fn dhat(&self) -> &DMatrix<f64> {
        &self.sys.d
    }

    pub fn khat(&self) -> &DMatrix<f64> {
        &self.sys.k
    }

    pub fn bhat(&self) -> &DMatrix<f64> {
        &self.sys.bprime
    }

    pub fn fhat(&self) -> &DMatrix<f64> {
        &self.sys.f
    }

    pub fn ghat(&self) -> &DMatrix<f64> {
        &self.sys.g
    }

    /// Definiteness certificates for (Mhat, Dhat, Khat).
    pub fn certificates(&self) -> (Definiteness, Definiteness, Definiteness) {
        self.cert
    }

    /// Smallest eigenvalues of (Mhat, Dhat, Khat).
    pub fn margins(&self) -> (f64, f64, f64) {
        self.margins
    }
}

/// Exact Galerkin projection of an affine family: block (i,j) equals
/// delta_ij * A(center) + sum_k h_k * E[xi_k Phi_i Phi_j] * A_k, using the
/// affine map mu = c + h*xi. No quadrature involved.
pub fn galerkin_project_affine(
    fam: &crate::paramodel::AffineMatrixFamily,
    basis: &PcBasis,
) -> DMatrix<f64> {
    let s = basis.len();
    let (rows, cols) = (fam.rows(), fam.cols());
    let dom = basis.domain();
    let center: Vec<f64> = (0..dom.q()).map(|k| dom.center(k)).collect();
    let a_center = fam.eval(&center);
    let mut out = DMatrix::<f64>::zeros(rows * s, cols * s);
    for i in 0..s {
        out.view_mut((i * rows, i * cols), (rows, cols))
            .copy_from(&a_center);
    }
    for (k, a_k) in fam.terms() {
        let h = dom.halfwidth(*k);
        if h == 0.0 {
            continue;
        }
        for i in 0..s {
            for j in 0..s {
                let c = basis.linear_triple_product(*k, i, j);
                if c != 0.0 {
                    let mut block = out.view_mut((i * rows, j * cols), (rows, cols));
                    block += a_k * (h * c);
                }
            }
        }
    }
    out
}

/// Quadrature-based projection for general matrix-valued functions of mu:
/// block (i,j) = sum_nodes w * f(mu(xi)) * Phi_i(xi) * Phi_j(xi).
pub fn galerkin_project_quadrature<F>(
    f: F,
    basis: &PcBasis,
    rule: &QuadratureRule,
) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let s = basis.len();
    let mut out: Option<DMatrix<f64>> = None;
    for (node_idx, (xi, w)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
        let mu = basis.domain().to_physical(xi);
        let val = f(&mu).map_err(|e| Error::NodeEvaluation {
            node: node_idx,
            reason: e.to_string(),
        })?;
        let (rows, cols) = val.shape();
        let acc = out.get_or_insert_with(|| DMatrix::zeros(rows * s, cols * s));
        let phi = basis.eval(xi);
        for i in 0..s {
            for j in 0..s {
                let scale = w * phi[i] * phi[j];
                if scale != 0.0 {
                    let mut block = acc.view_mut((i * rows, j * cols), (rows, cols));
                    block += &val * scale;
                }
            }
        }
    }
    out.ok_or_else(|| Error::InvalidArgument("quadrature rule has no nodes".into()))
}

/// Project all six system matrices and certify definiteness. Fails with
/// the smallest-eigenvalue diagnostic when Mhat or Khat is not SPD.
pub fn assemble(
    sys: &ParametricSecondOrderSystem,
    basis: &PcBasis,
) -> Result<GalerkinSecondOrderSystem> {
    let mhat = galerkin_project_affine(&sys.m, basis);
    let dhat = galerkin_project_affine(&sys.d, basis);
    let khat = galerkin_project_affine(&sys.k, basis);
    let bhat = galerkin_project_affine(&sys.bprime, basis);
    let fhat = galerkin_project_affine(&sys.f, basis);
    let ghat = galerkin_project_affine(&sys.g, basis);

    let n = sys.n();
    let s = basis.len();
    let tol = if n * s >= 1000 { 1e-8 } else { 1e-10 };
    let cert_m = classify_definiteness(&mhat, tol);
    let cert_d = classify_definiteness(&dhat, tol);
    let cert_k = classify_definiteness(&khat, tol);
    let margins = (lambda_min(&mhat), lambda_min(&dhat), lambda_min(&khat));
    if cert_m != Definiteness::Spd {
        return Err(Error::Certification {
            matrix: "Mhat".into(),
            lambda_min: margins.0,
        });
    }
    if cert_k != Definiteness::Spd {
        return Err(Error::Certification {
            matrix: "Khat".into(),
            lambda_min: margins.2,
        });
    }
    Ok(GalerkinSecondOrderSystem {
        sys: ConstantSecondOrderSystem::new(mhat, dhat, khat, bhat, fhat, ghat)?,
        n,
        s,
        cert: (cert_m, cert_d, cert_k),
        margins,
    })
}

/// Evaluate the truncated expansion sum_i coeffs_i * Phi_i(xi).
pub fn expand_approximant(coeffs: &[DVector<f64>], basis: &PcBasis, xi: &[f64]) -> DVector<f64> {
    assert_eq!(coeffs.len(), basis.len());
    let phi = basis.eval(xi);
    let mut out = DVector::zeros(coeffs[0].len());
    for (c, p) in coeffs.iter().zip(phi) {
        out += c * p;
    }
    out
}

/// Mean and componentwise standard deviation of an orthonormal PC
/// coefficient set: mean is the constant mode, variance the sum of the
/// squared higher modes.
pub fn pc_statistics(coeffs: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    assert!(!coeffs.is_empty());
    let mean = coeffs[0].clone();
    let mut var = DVector::zeros(mean.len());
    for c in &coeffs[1..] {
        for (v, x) in var.iter_mut().zip(c.iter()) {
            *v += x * x;
        }
    }
    (mean, var.map(f64::sqrt))
}

/// Split a stacked coefficient vector of dimension n*s into s blocks.
pub fn split_modes(stacked: &DVector<f64>, n: usize, s: usize) -> Vec<DVector<f64>> {
    assert_eq!(stacked.len(), n * s);
    (0..s)
        .map(|i| DVector::from(stacked.rows(i * n, n).clone_owned()))
        .collect()
}

/// Dense row-major CSV export with a dimension header line.
pub fn matrix_to_csv(m: &DMatrix<f64>, n: usize, s: usize) -> String {
    let mut out = format!("# ns={} n={} s={}\n", n * s, n, s);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramodel::{build_msd, AffineMatrixFamily};
    use crate::pcbasis::{ParameterDomain, PcBasis};
    use crate::quadrature::gauss_tensor;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_box(q: usize) -> ParameterDomain {
        ParameterDomain::new(vec![-1.0; q], vec![1.0; q]).unwrap()
    }

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn constant_family_is_block_diagonal() {
        let a0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let basis = PcBasis::new(unit_box(2), 2).unwrap();
        let proj = galerkin_project_affine(&AffineMatrixFamily::constant(a0.clone()), &basis);
        let s = basis.len();
        for i in 0..s {
            for j in 0..s {
                let block = proj.view((i * 2, j * 2), (2, 2)).clone_owned();
                if i == j {
                    assert_eq!(block, a0);
                } else {
                    assert_eq!(block, DMatrix::zeros(2, 2));
                }
            }
        }
    }

    #[test]
    fn scalar_linear_family_unit_box() {
        // A(mu) = mu, q=1, d=1, domain [-1,1]: [[0, 1/sqrt(3)], [1/sqrt(3), 0]]
        let basis = PcBasis::new(unit_box(1), 1).unwrap();
        let fam = AffineMatrixFamily::new(
            DMatrix::zeros(1, 1),
            vec![(0, DMatrix::from_element(1, 1, 1.0))],
        )
        .unwrap();
        let proj = galerkin_project_affine(&fam, &basis);
        let c = 1.0 / 3.0_f64.sqrt();
        assert!((proj[(0, 0)]).abs() < 1e-15);
        assert!((proj[(0, 1)] - c).abs() < 1e-15);
        assert!((proj[(1, 0)] - c).abs() < 1e-15);
        assert!((proj[(1, 1)]).abs() < 1e-15);
    }

    #[test]
    fn scalar_linear_family_shifted_box() {
        // domain [0.9, 1.1]: [[1, 0.1/sqrt(3)], [0.1/sqrt(3), 1]]
        let dom = ParameterDomain::new(vec![0.9], vec![1.1]).unwrap();
        let basis = PcBasis::new(dom, 1).unwrap();
        let fam = AffineMatrixFamily::new(
            DMatrix::zeros(1, 1),
            vec![(0, DMatrix::from_element(1, 1, 1.0))],
        )
        .unwrap();
        let proj = galerkin_project_affine(&fam, &basis);
        let c = 0.1 / 3.0_f64.sqrt();
        assert!((proj[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((proj[(0, 1)] - c).abs() < 1e-15);
        assert!((proj[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_path_matches_affine_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for q in 1..=3 {
            for d in 0..=2 {
                let dom = ParameterDomain::new(vec![0.5; q], vec![1.5; q]).unwrap();
                let basis = PcBasis::new(dom, d).unwrap();
                let n = 2;
                let terms: Vec<_> = (0..q)
                    .map(|k| (k, random_symmetric(n, &mut rng)))
                    .collect();
                let fam =
                    AffineMatrixFamily::new(random_symmetric(n, &mut rng), terms).unwrap();
                let exact = galerkin_project_affine(&fam, &basis);
                let rule = gauss_tensor(q, d + 1).unwrap();
                let quad =
                    galerkin_project_quadrature(|mu| Ok(fam.eval(mu)), &basis, &rule).unwrap();
                assert!((&exact - &quad).amax() < 1e-12, "q={q} d={d}");
            }
        }
    }

    #[test]
    fn quadrature_path_identity_and_moment() {
        let basis = PcBasis::new(unit_box(1), 1).unwrap();
        let rule = gauss_tensor(1, 3).unwrap();
        let proj = galerkin_project_quadrature(
            |_| Ok(DMatrix::identity(3, 3)),
            &basis,
            &rule,
        )
        .unwrap();
        assert!((&proj - DMatrix::identity(6, 6)).amax() < 1e-14);

        // f(mu) = mu^2 with d=0 on [-1,1] -> [1/3]
        let basis0 = PcBasis::new(unit_box(1), 0).unwrap();
        let rule = gauss_tensor(1, 2).unwrap();
        let proj = galerkin_project_quadrature(
            |mu| Ok(DMatrix::from_element(1, 1, mu[0] * mu[0])),
            &basis0,
            &rule,
        )
        .unwrap();
        assert!((proj[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn projection_linearity_and_mean_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dom = ParameterDomain::new(vec![0.5, 0.8], vec![1.5, 1.2]).unwrap();
        let basis = PcBasis::new(dom.clone(), 2).unwrap();
        let n = 3;
        let fam_a = AffineMatrixFamily::new(
            random_symmetric(n, &mut rng),
            vec![(0, random_symmetric(n, &mut rng))],
        )
        .unwrap();
        let fam_b = AffineMatrixFamily::new(
            random_symmetric(n, &mut rng),
            vec![(1, random_symmetric(n, &mut rng))],
        )
        .unwrap();
        let sum = AffineMatrixFamily::new(
            fam_a.base() + fam_b.base(),
            fam_a
                .terms()
                .iter()
                .chain(fam_b.terms())
                .cloned()
                .collect(),
        )
        .unwrap();
        let pa = galerkin_project_affine(&fam_a, &basis);
        let pb = galerkin_project_affine(&fam_b, &basis);
        let ps = galerkin_project_affine(&sum, &basis);
        assert!((&ps - (&pa + &pb)).amax() == 0.0);

        // Block (1,1) equals the family at the domain center.
        let center: Vec<f64> = (0..2).map(|k| dom.center(k)).collect();
        let block11 = ps.view((0, 0), (n, n)).clone_owned();
        assert!((&block11 - sum.eval(&center)).amax() < 1e-15);
    }

    /// Definiteness transfer of the projection, checked over random
    /// affine families that are SPD / SPSD / skew on the whole box.
    #[test]
    fn projection_preserves_definiteness_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..60 {
            let q = rng.gen_range(1..=3);
            let d = rng.gen_range(1..=3);
            let n = rng.gen_range(1..=4);
            let dom = ParameterDomain::new(vec![0.8; q], vec![1.2; q]).unwrap();
            let basis = PcBasis::new(dom, d).unwrap();

            // SPD on the box: diagonally dominant base plus small terms.
            let base = random_symmetric(n, &mut rng) + DMatrix::identity(n, n) * (n as f64 + 2.0);
            let terms: Vec<_> = (0..q)
                .map(|k| (k, random_symmetric(n, &mut rng) * 0.1))
                .collect();
            let fam = AffineMatrixFamily::new(base, terms).unwrap();
            let proj = galerkin_project_affine(&fam, &basis);
            assert_eq!(
                classify_definiteness(&proj, 1e-10),
                Definiteness::Spd,
                "trial {trial}"
            );

            // SPSD: congruence X^T X scaled by a nonnegative affine factor.
            let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let psd = x.transpose() * &x;
            let fam = AffineMatrixFamily::new(psd.clone(), vec![(0, psd * 0.3)]).unwrap();
            let proj = galerkin_project_affine(&fam, &basis);
            let cls = classify_definiteness(&proj, 1e-10);
            assert!(
                cls == Definiteness::Spsd || cls == Definiteness::Spd,
                "trial {trial}: {cls:?}"
            );

            // Skew-symmetric family stays skew-symmetric.
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let skew = &a - a.transpose();
            let fam = AffineMatrixFamily::new(skew.clone(), vec![(0, skew * 0.5)]).unwrap();
            let proj = galerkin_project_affine(&fam, &basis);
            assert!((&proj + proj.transpose()).amax() < 1e-14);
        }
    }

    #[test]
    fn assemble_msd_dimensions() {
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let basis = PcBasis::new(sys.domain.clone(), 1).unwrap();
        let gal = assemble(&sys, &basis).unwrap();
        assert_eq!(gal.s(), 15);
        assert_eq!(gal.ns(), 60);
        assert_eq!(gal.bhat().shape(), (60, 15));
        assert_eq!(gal.ghat().shape(), (15, 60));
        assert_eq!(gal.certificates().0, Definiteness::Spd);
        assert_eq!(gal.certificates().2, Definiteness::Spd);
    }

    #[test]
    fn assemble_degree_zero_equals_center() {
        let sys = build_msd(&[1.0; 14], 0.1).unwrap();
        let basis = PcBasis::new(sys.domain.clone(), 0).unwrap();
        let gal = assemble(&sys, &basis).unwrap();
        let center = sys.at_center();
        assert!((gal.mhat() - &center.m).amax() < 1e-15);
        assert!((gal.khat() - &center.k).amax() < 1e-15);
        assert!((gal.bhat() - &center.bprime).amax() < 1e-15);
    }

    #[test]
    fn expand_and_statistics() {
        let basis = PcBasis::new(unit_box(1), 1).unwrap();
        let v = DVector::from_vec(vec![2.0, -1.0]);
        let coeffs = vec![v.clone(), DVector::zeros(2)];
        assert_eq!(expand_approximant(&coeffs, &basis, &[0.3]), v);

        let coeffs = vec![DVector::zeros(1), DVector::from_vec(vec![1.0])];
        assert_eq!(expand_approximant(&coeffs, &basis, &[0.0])[0], 0.0);

        let (mean, std) = pc_statistics(&coeffs);
        assert_eq!(mean[0], 0.0);
        assert_eq!(std[0], 1.0);

        let coeffs = vec![DVector::from_vec(vec![3.0]), DVector::zeros(1)];
        let (mean, std) = pc_statistics(&coeffs);
        assert_eq!(mean[0], 3.0);
        assert_eq!(std[0], 0.0);
    }

    /// Monte Carlo oracle for the PC statistics.
    #[test]
    fn statistics_match_monte_carlo() {
        let basis = PcBasis::new(unit_box(2), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let coeffs: Vec<DVector<f64>> = (0..basis.len())
            .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let (mean, std) = pc_statistics(&coeffs);

        let n_mc = 100_000;
        let mut sum = DVector::<f64>::zeros(2);
        let mut sumsq = DVector::<f64>::zeros(2);
        for _ in 0..n_mc {
            let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let v = expand_approximant(&coeffs, &basis, &xi);
            sum += &v;
            sumsq += v.map(|x| x * x);
        }
        let mc_mean = &sum / n_mc as f64;
        for i in 0..2 {
            let mc_var = sumsq[i] / n_mc as f64 - mc_mean[i] * mc_mean[i];
            let se_mean = (mc_var / n_mc as f64).sqrt();
            assert!(
                (mc_mean[i] - mean[i]).abs() < 3.0 * se_mean + 1e-12,
                "mean component {i}"
            );
            // crude standard error for the std estimate
            let se_std = std[i].max(0.1) / (n_mc as f64).sqrt() * 3.0;
            assert!((mc_var.sqrt() - std[i]).abs() < 3.0 * se_std + 1e-3);
        }
    }

    #[test]
    fn csv_export_has_dimension_header() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let csv = matrix_to_csv(&m, 1, 2);
        assert!(csv.starts_with("# ns=2 n=1 s=2\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
