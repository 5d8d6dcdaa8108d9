//! Multivariate orthonormal Legendre polynomial chaos basis over
//! independent uniform random parameters.
//!
//! All polynomial machinery operates in standardized variables
//! `xi in [-1,1]^q` with product density `(1/2)^q`; physical parameters
//! enter only through the affine map `mu_k = c_k + h_k * xi_k` held by
//! [`ParameterDomain`]. The univariate factors are the Legendre
//! polynomials scaled by `sqrt(2n+1)`, which makes them orthonormal with
//! respect to the density 1/2 on [-1,1].

use crate::error::{Error, Result};

/// Largest admissible number of basis polynomials.
pub const MAX_BASIS_SIZE: u128 = 200_000;

/// Box of independent uniformly distributed parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(
                "parameter domain needs q >= 1 matching bounds".into(),
            ));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {k}: lower bound {lo} must be below upper bound {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Degenerate-tolerant constructor used by ensemble sanity checks:
    /// allows lower == upper (one-point measure).
    pub fn possibly_degenerate(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(
                "parameter domain needs q >= 1 matching bounds".into(),
            ));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {k}: lower bound {lo} must not exceed upper bound {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn q(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self, k: usize) -> f64 {
        0.5 * (self.lower[k] + self.upper[k])
    }

    pub fn halfwidth(&self, k: usize) -> f64 {
        0.5 * (self.upper[k] - self.lower[k])
    }

    /// Affine map from standardized `xi in [-1,1]^q` to physical parameters.
    pub fn to_physical(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.q());
        (0..self.q())
            .map(|k| self.center(k) + self.halfwidth(k) * xi[k])
            .collect()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.q()
            && mu
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(m, (lo, hi))| *lo <= *m && *m <= *hi)
    }
}

/// Total-degree multi-index set in graded lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    q: usize,
    d: usize,
    indices: Vec<Vec<usize>>,
}

/// Number of multivariate polynomials of total degree <= d in q variables,
/// i.e. binomial(q+d, d), with overflow detection.
pub fn basis_count(q: usize, d: usize) -> Result<u128> {
    let mut s: u128 = 1;
    for i in 1..=d as u128 {
        s = s
            .checked_mul(q as u128 + i)
            .ok_or(Error::BasisTooLarge {
                size: u128::MAX,
                max: MAX_BASIS_SIZE,
            })?
            / i;
        if s > MAX_BASIS_SIZE {
            return Err(Error::BasisTooLarge {
                size: s,
                max: MAX_BASIS_SIZE,
            });
        }
    }
    Ok(s)
}

/// Enumerate all multi-indices of total degree <= d over q variables in
/// graded lexicographic order (by total degree, then lexicographic).
pub fn build_index_set(q: usize, d: usize) -> Result<MultiIndexSet> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be >= 1".into()));
    }
    let s = basis_count(q, d)? as usize;
    let mut indices = Vec::with_capacity(s);
    let mut current = vec![0usize; q];
    for degree in 0..=d {
        enumerate_degree(q, degree, 0, &mut current, &mut indices);
    }
    debug_assert_eq!(indices.len(), s);
    Ok(MultiIndexSet { q, d, indices })
}

fn enumerate_degree(
    q: usize,
    remaining: usize,
    pos: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pos == q - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        enumerate_degree(q, remaining - v, pos + 1, current, out);
    }
    current[pos] = 0;
}

impl MultiIndexSet {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }
}

/// Orthonormal Legendre chaos basis attached to a parameter box.
#[derive(Debug, Clone)]
pub struct PcBasis {
    domain: ParameterDomain,
    index_set: MultiIndexSet,
}

impl PcBasis {
    pub fn new(domain: ParameterDomain, d: usize) -> Result<Self> {
        let index_set = build_index_set(domain.q(), d)?;
        Ok(Self { domain, index_set })
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    pub fn q(&self) -> usize {
        self.domain.q()
    }

    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    /// Evaluate all s basis polynomials at a standardized point.
    /// Out-of-range components are a precondition violation (debug assert,
    /// no clamping).
    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        debug_assert!(xi.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(xi.len(), self.q());
        let d = self.index_set.degree();
        // Univariate orthonormal values per axis, degrees 0..=d.
        let per_axis: Vec<Vec<f64>> = xi
            .iter()
            .map(|&x| legendre_orthonormal(x, d))
            .collect();
        self.index_set
            .indices()
            .iter()
            .map(|idx| {
                idx.iter()
                    .enumerate()
                    .map(|(k, &n)| per_axis[k][n])
                    .product()
            })
            .collect()
    }

    /// <Phi_i, Phi_j> = delta_ij for the orthonormal basis; no quadrature.
    pub fn pairing_constant(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.len() && j < self.len());
        if i == j {
            1.0
        } else {
            0.0
        }
    }

    /// E[xi_k * Phi_i * Phi_j].
    ///
    /// Nonzero iff the multi-indices agree in every position except k and
    /// differ by exactly one there; the value is the Legendre recurrence
    /// coefficient alpha_n = (n+1)/sqrt((2n+1)(2n+3)) with n the smaller
    /// of the two degrees in position k.
    pub fn linear_triple_product(&self, k: usize, i: usize, j: usize) -> f64 {
        assert!(k < self.q() && i < self.len() && j < self.len());
        let a = self.index_set.index(i);
        let b = self.index_set.index(j);
        for (pos, (&ai, &bi)) in a.iter().zip(b).enumerate() {
            if pos != k && ai != bi {
                return 0.0;
            }
        }
        let (ai, bi) = (a[k], b[k]);
        if ai.abs_diff(bi) != 1 {
            return 0.0;
        }
        let n = ai.min(bi) as f64;
        (n + 1.0) / ((2.0 * n + 1.0) * (2.0 * n + 3.0)).sqrt()
    }
}

/// Values of the orthonormal Legendre polynomials sqrt(2n+1) * P_n(x)
/// for n = 0..=max_deg, via the stable three-term recurrence.
pub fn legendre_orthonormal(x: f64, max_deg: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(max_deg + 1);
    let mut p_prev = 1.0; // P_0
    p.push(1.0);
    if max_deg == 0 {
        return p;
    }
    let mut p_cur = x; // P_1
    p.push(3.0_f64.sqrt() * p_cur);
    for n in 1..max_deg {
        let nf = n as f64;
        let p_next = ((2.0 * nf + 1.0) * x * p_cur - nf * p_prev) / (nf + 1.0);
        p.push((2.0 * (nf + 1.0) + 1.0).sqrt() * p_next);
        p_prev = p_cur;
        p_cur = p_next;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_tensor;

    fn unit_box(q: usize) -> ParameterDomain {
        ParameterDomain::new(vec![-1.0; q], vec![1.0; q]).unwrap()
    }

    #[test]
    fn count_matches_closed_form() {
        assert_eq!(basis_count(14, 3).unwrap(), 680);
        assert_eq!(basis_count(1, 0).unwrap(), 1);
        assert_eq!(basis_count(2, 2).unwrap(), 6);
        for q in 1..=20 {
            for d in 0..=5 {
                let set = build_index_set(q, d).unwrap();
                assert_eq!(set.len() as u128, basis_count(q, d).unwrap());
            }
        }
    }

    #[test]
    fn index_set_ordering_and_uniqueness() {
        let set = build_index_set(3, 3).unwrap();
        assert_eq!(set.index(0), &[0, 0, 0]);
        for w in set.indices().windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (da, db): (usize, usize) = (a.iter().sum(), b.iter().sum());
            assert!(da < db || (da == db && a < b), "graded-lex violated");
        }
        assert_eq!(build_index_set(1, 0).unwrap().indices(), &[vec![0]]);
    }

    #[test]
    fn basis_size_overflow_rejected() {
        assert!(matches!(
            basis_count(100, 20),
            Err(Error::BasisTooLarge { .. })
        ));
    }

    #[test]
    fn constant_mode_is_one() {
        let basis = PcBasis::new(unit_box(3), 2).unwrap();
        let vals = basis.eval(&[0.3, -0.7, 0.0]);
        assert_eq!(vals[0], 1.0);
    }

    #[test]
    fn univariate_values() {
        let basis = PcBasis::new(unit_box(1), 1).unwrap();
        let vals = basis.eval(&[0.0]);
        assert_eq!(vals, vec![1.0, 0.0]);

        // p~_n(1) = sqrt(2n+1)
        let basis = PcBasis::new(unit_box(1), 2).unwrap();
        let vals = basis.eval(&[1.0]);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0_f64.sqrt()).abs() < 1e-14);
        assert!((vals[2] - 5.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn pairing_is_kronecker_delta() {
        let basis = PcBasis::new(unit_box(2), 2).unwrap();
        assert_eq!(basis.pairing_constant(0, 0), 1.0);
        assert_eq!(basis.pairing_constant(0, 1), 0.0);
        assert_eq!(basis.pairing_constant(4, 4), 1.0);
    }

    /// Gram matrix by tensor quadrature equals the identity.
    #[test]
    fn gram_matrix_identity_by_quadrature() {
        for q in 1..=3 {
            for d in 0..=4 {
                let basis = PcBasis::new(unit_box(q), d).unwrap();
                let rule = gauss_tensor(q, d + 1).unwrap();
                let s = basis.len();
                let mut gram = vec![vec![0.0; s]; s];
                for (node, w) in rule.nodes().iter().zip(rule.weights()) {
                    let phi = basis.eval(node);
                    for i in 0..s {
                        for j in 0..s {
                            gram[i][j] += w * phi[i] * phi[j];
                        }
                    }
                }
                for i in 0..s {
                    for j in 0..s {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (gram[i][j] - expect).abs() < 1e-12,
                            "q={q} d={d} G[{i}][{j}]={}",
                            gram[i][j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn triple_product_univariate_values() {
        let basis = PcBasis::new(unit_box(1), 2).unwrap();
        // E[xi phi_0 phi_1] = 1/sqrt(3)
        assert!((basis.linear_triple_product(0, 0, 1) - 1.0 / 3.0_f64.sqrt()).abs() < 1e-15);
        // odd integrand
        assert_eq!(basis.linear_triple_product(0, 1, 1), 0.0);
        // E[xi phi_1 phi_2] = 2/sqrt(15)
        assert!((basis.linear_triple_product(0, 1, 2) - 2.0 / 15.0_f64.sqrt()).abs() < 1e-15);
    }

    /// Quadrature oracle for the triple products: a (d+1)-point rule per
    /// axis is exact for the degree-(2d+1) integrand.
    #[test]
    fn triple_product_matches_quadrature_oracle() {
        for q in 1..=3 {
            for d in 0..=3 {
                let basis = PcBasis::new(unit_box(q), d).unwrap();
                let rule = gauss_tensor(q, d + 1).unwrap();
                let s = basis.len();
                for k in 0..q {
                    for i in 0..s {
                        for j in 0..s {
                            let mut quad = 0.0;
                            for (node, w) in rule.nodes().iter().zip(rule.weights()) {
                                let phi = basis.eval(node);
                                quad += w * node[k] * phi[i] * phi[j];
                            }
                            let exact = basis.linear_triple_product(k, i, j);
                            assert!(
                                (quad - exact).abs() < 1e-12,
                                "q={q} d={d} k={k} i={i} j={j}: {quad} vs {exact}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn domain_validation_and_map() {
        assert!(ParameterDomain::new(vec![1.0], vec![1.0]).is_err());
        let dom = ParameterDomain::new(vec![0.9, 1.8], vec![1.1, 2.2]).unwrap();
        assert_eq!(dom.center(0), 1.0);
        assert!((dom.halfwidth(1) - 0.2).abs() < 1e-15);
        let mu = dom.to_physical(&[1.0, -1.0]);
        assert!((mu[0] - 1.1).abs() < 1e-15);
        assert!((mu[1] - 1.8).abs() < 1e-15);
        assert!(dom.contains(&[1.0, 2.0]));
        assert!(!dom.contains(&[0.0, 2.0]));
    }
}
