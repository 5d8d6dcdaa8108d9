//! Multivariate quadrature over the standardized box [-1,1]^q with the
//! uniform product density: tensor Gauss-Legendre rules and a degree-5
//! cubature with 2q^2+1 nodes.

use crate::error::{Error, Result};

/// Upper bound on the node count of a tensor rule.
pub const NODE_BUDGET: u128 = 5_000_000;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    q: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    exact_degree: usize,
}

impl QuadratureRule {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    /// CSV dump, one row per node: coordinates then weight.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.q {
            out.push_str(&format!("xi{},", k + 1));
        }
        out.push_str("weight\n");
        for (node, w) in self.nodes.iter().zip(&self.weights) {
            for x in node {
                out.push_str(&format!("{x:.16e},"));
            }
            out.push_str(&format!("{w:.16e}\n"));
        }
        out
    }
}

/// Nodes and weights of the m-point Gauss-Legendre rule on [-1,1]
/// (weights summing to 2), by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre_1d(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi-style initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Tensor product of m-point Gauss-Legendre rules, weights normalized to
/// the uniform density (sum 1); exact for total degree 2m-1 per axis.
pub fn gauss_tensor(q: usize, m: usize) -> Result<QuadratureRule> {
    if q == 0 || m == 0 {
        return Err(Error::InvalidArgument("gauss_tensor needs q,m >= 1".into()));
    }
    let count = (m as u128).checked_pow(q as u32).unwrap_or(u128::MAX);
    if count > NODE_BUDGET {
        return Err(Error::NodeBudgetExceeded {
            requested: count,
            budget: NODE_BUDGET,
        });
    }
    let (x1, w1) = gauss_legendre_1d(m);
    let total = count as usize;
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut node = vec![0.0; q];
        let mut w = 1.0;
        let mut rest = flat;
        for k in 0..q {
            let idx = rest % m;
            rest /= m;
            node[k] = x1[idx];
            w *= 0.5 * w1[idx];
        }
        nodes.push(node);
        weights.push(w);
    }
    Ok(QuadratureRule {
        q,
        nodes,
        weights,
        exact_degree: 2 * m - 1,
    })
}

/// Degree-5 cubature for the uniform density on [-1,1]^q with exactly
/// 2q^2+1 nodes: the center, the 2q axis points at +-sqrt(3/5) and the
/// 2q(q-1) pair points with +-sqrt(3/5) in two coordinates. Weights are
/// fixed by matching the moments 1, xi^2 -> 1/3, xi^4 -> 1/5 and
/// xi_i^2 xi_j^2 -> 1/9. For q=1 the rule degenerates to the 3-point
/// Gauss-Legendre rule.
pub fn stroud5(q: usize) -> Result<QuadratureRule> {
    if q == 0 {
        return Err(Error::InvalidArgument("stroud5 needs q >= 1".into()));
    }
    if q == 1 {
        return gauss_tensor(1, 3);
    }
    let qf = q as f64;
    let r = (3.0_f64 / 5.0).sqrt();
    let w2 = 25.0 / 324.0;
    let w1 = 5.0 / 18.0 - 25.0 * (qf - 1.0) / 162.0;
    let w0 = 1.0 - 2.0 * qf * w1 - 2.0 * qf * (qf - 1.0) * w2;

    let mut nodes = Vec::with_capacity(2 * q * q + 1);
    let mut weights = Vec::with_capacity(2 * q * q + 1);
    nodes.push(vec![0.0; q]);
    weights.push(w0);
    for k in 0..q {
        for sign in [1.0, -1.0] {
            let mut node = vec![0.0; q];
            node[k] = sign * r;
            nodes.push(node);
            weights.push(w1);
        }
    }
    for i in 0..q {
        for j in (i + 1)..q {
            for si in [1.0, -1.0] {
                for sj in [1.0, -1.0] {
                    let mut node = vec![0.0; q];
                    node[i] = si * r;
                    node[j] = sj * r;
                    nodes.push(node);
                    weights.push(w2);
                }
            }
        }
    }
    debug_assert_eq!(nodes.len(), 2 * q * q + 1);
    Ok(QuadratureRule {
        q,
        nodes,
        weights,
        exact_degree: 5,
    })
}

/// Discretized expected value: sum of w_i f(node_i), accumulated by
/// pairwise summation in node order for bit-stable results.
pub fn expectation<F>(rule: &QuadratureRule, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut terms = Vec::with_capacity(rule.len());
    for (i, (node, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = f(node).map_err(|e| Error::NodeEvaluation {
            node: i,
            reason: e.to_string(),
        })?;
        terms.push(w * v);
    }
    Ok(pairwise_sum(&terms))
}

/// Pairwise (cascade) summation; deterministic for a fixed term order.
pub fn pairwise_sum(terms: &[f64]) -> f64 {
    match terms.len() {
        0 => 0.0,
        1 => terms[0],
        2 => terms[0] + terms[1],
        n => pairwise_sum(&terms[..n / 2]) + pairwise_sum(&terms[n / 2..]),
    }
}
