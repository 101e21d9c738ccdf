//! Gaussian quadrature rules with singular or infinite weights.
//!
//! Nodes are found by Newton iteration on the three-term recurrence of the
//! orthogonal polynomials, started from the classical asymptotic guesses.
//! Weights use the closed-form Christoffel numbers.

use statrs::function::beta::beta;

use crate::error::{Error, Result};

const NEWTON_EPS: f64 = 3.0e-15;
const MAX_NEWTON: usize = 100;

/// A quadrature rule `∫ w(x) f(x) dx ≈ Σ weights[i] f(nodes[i])`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Jacobi rule on `[-1, 1]` for the weight `(1 - x)^a (1 + x)^b`,
/// `a, b > -1`. Nodes are returned in increasing order.
// The initial guesses use empirical constants; 6.28 is not τ.
#[allow(clippy::approx_constant)]
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Result<Rule> {
    if n == 0 {
        return Err(Error::invalid("n", "quadrature needs at least one node"));
    }
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::invalid(
            "a, b",
            format!("exponents must exceed -1 (a = {a}, b = {b})"),
        ));
    }
    let nf = n as f64;
    let ab = a + b;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mu0 = 2f64.powf(ab + 1.0) * beta(1.0 + a, 1.0 + b);
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => {
                let an = a / nf;
                let bn = b / nf;
                let r1 = (1.0 + a) * (2.78 / (4.0 + nf * nf) + 0.768 * an / nf);
                let r2 = 1.0 + 1.48 * an + 0.96 * bn + 0.452 * an * an + 0.83 * an * bn;
                1.0 - r1 / r2
            }
            1 => {
                let r1 = (4.1 + a) / ((1.0 + a) * (1.0 + 0.156 * a));
                let r2 = 1.0 + 0.06 * (nf - 8.0) * (1.0 + 0.12 * a) / nf;
                let r3 = 1.0 + 0.012 * b * (1.0 + 0.25 * a.abs()) / nf;
                z - (1.0 - z) * r1 * r2 * r3
            }
            2 => {
                let r1 = (1.67 + 0.28 * a) / (1.0 + 0.37 * a);
                let r2 = 1.0 + 0.22 * (nf - 8.0) / nf;
                let r3 = 1.0 + 8.0 * b / ((6.28 + b) * nf * nf);
                z - (x[0] - z) * r1 * r2 * r3
            }
            _ if i == n - 2 => {
                let r1 = (1.0 + 0.235 * b) / (0.766 + 0.119 * b);
                let r2 = 1.0 / (1.0 + 0.639 * (nf - 4.0) / (1.0 + 0.71 * (nf - 4.0)));
                let r3 = 1.0 / (1.0 + 20.0 * a / ((7.5 + a) * nf * nf));
                z + (z - x[n - 4]) * r1 * r2 * r3
            }
            _ if i == n - 1 => {
                let r1 = (1.0 + 0.37 * b) / (1.67 + 0.28 * b);
                let r2 = 1.0 / (1.0 + 0.22 * (nf - 8.0) / nf);
                let r3 = 1.0 / (1.0 + 8.0 * a / ((6.28 + a) * nf * nf));
                z + (z - x[n - 3]) * r1 * r2 * r3
            }
            _ => 3.0 * x[i - 1] - 3.0 * x[i - 2] + x[i - 3],
        };
        let mut converged = false;
        for _ in 0..MAX_NEWTON {
            let (p1, pp) = jacobi_eval(n, a, b, z);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= NEWTON_EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Internal(format!(
                "Gauss-Jacobi node {i} of {n} did not converge"
            )));
        }
        x[i] = z;
        w[i] = christoffel_weight(n, a, b, mu0, z);
    }
    // The recurrence produces nodes from +1 downwards.
    x.reverse();
    w.reverse();
    Ok(Rule {
        nodes: x,
        weights: w,
    })
}

/// `P_n(z)` and `P_n'(z)` for the Jacobi polynomials with parameters `(a, b)`.
fn jacobi_eval(n: usize, a: f64, b: f64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let ab = a + b;
    let mut temp = 2.0 + ab;
    let mut p1 = (a - b + temp * z) / 2.0;
    let mut p2 = 1.0;
    for j in 2..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        temp = 2.0 * jf + ab;
        let aa = 2.0 * jf * (jf + ab) * (temp - 2.0);
        let bb = (temp - 1.0) * (a * a - b * b + temp * (temp - 2.0) * z);
        let cc = 2.0 * (jf - 1.0 + a) * (jf - 1.0 + b) * temp;
        p1 = (bb * p2 - cc * p3) / aa;
    }
    let pp =
        (nf * (a - b - temp * z) * p1 + 2.0 * (nf + a) * (nf + b) * p2) / (temp * (1.0 - z * z));
    (p1, pp)
}

/// `1 / Σ_{k<n} p̂_k(z)²` over the orthonormal Jacobi polynomials; a sum of
/// positive terms, accurate up to the endpoints.
fn christoffel_weight(n: usize, a: f64, b: f64, mu0: f64, z: f64) -> f64 {
    let ab = a + b;
    let alpha = |k: usize| {
        if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            let t = 2.0 * k as f64 + ab;
            (b * b - a * a) / (t * (t + 2.0))
        }
    };
    let off = |k: usize| {
        let kf = k as f64;
        let t = 2.0 * kf + ab;
        let sq = if k == 1 {
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (t * t * (t + 1.0) * (t - 1.0))
        };
        sq.sqrt()
    };
    let mut prev = 0.0;
    let mut cur = 1.0 / mu0.sqrt();
    let mut sum = cur * cur;
    for k in 0..n.saturating_sub(1) {
        let next = ((z - alpha(k)) * cur - if k == 0 { 0.0 } else { off(k) * prev }) / off(k + 1);
        prev = cur;
        cur = next;
        sum += cur * cur;
    }
    1.0 / sum
}

/// Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Rule {
    let rule = gauss_jacobi(n, 0.0, 0.0).expect("Legendre exponents are valid");
    Rule {
        nodes: rule.nodes.iter().map(|x| 0.5 * (1.0 + x)).collect(),
        weights: rule.weights.iter().map(|w| 0.5 * w).collect(),
    }
}

/// Gauss–Laguerre rule on `[0, ∞)` for the weight `e^{-u}`.
pub fn gauss_laguerre(n: usize) -> Result<Rule> {
    if n == 0 {
        return Err(Error::invalid("n", "quadrature needs at least one node"));
    }
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z: f64 = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - x[i - 2])
            }
        };
        let mut converged = false;
        let (mut pp, mut p2) = (0.0, 0.0);
        for _ in 0..MAX_NEWTON {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = (nf * p1 - nf * p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= NEWTON_EPS * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Internal(format!(
                "Gauss-Laguerre node {i} of {n} did not converge"
            )));
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    Ok(Rule {
        nodes: x,
        weights: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::beta::beta;

    #[test]
    fn legendre_limit_integrates_polynomials() {
        let rule = gauss_jacobi(10, 0.0, 0.0).unwrap();
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        // ∫ x^18 = 2/19, exact at degree 2n-1 = 19.
        assert_relative_eq!(rule.integrate(|x| x.powi(18)), 2.0 / 19.0, epsilon = 1e-14);
        assert!(rule.nodes.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn singular_weights_match_beta_moments() {
        for &(a, b) in &[(-0.5, -0.5), (-0.75, -0.75), (0.0, -0.3), (-0.9, 0.4)] {
            for &n in &[8usize, 32, 64] {
                let rule = gauss_jacobi(n, a, b).unwrap();
                // ∫ (1-x)^a (1+x)^b (1+x)^k dx = 2^{a+b+k+1} B(a+1, b+k+1).
                for k in 0..4 {
                    let exact =
                        2f64.powf(a + b + k as f64 + 1.0) * beta(a + 1.0, b + k as f64 + 1.0);
                    let got = rule.integrate(|x| (1.0 + x).powi(k));
                    assert_relative_eq!(got, exact, max_relative = 1e-13);
                }
            }
        }
    }

    #[test]
    fn chebyshev_nodes_are_cosines() {
        let n = 12;
        let rule = gauss_jacobi(n, -0.5, -0.5).unwrap();
        for (i, &x) in rule.nodes.iter().enumerate() {
            let expect = -((2 * i + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
            assert!((x - expect).abs() < 1e-14, "{x} vs {expect}");
        }
        for &w in &rule.weights {
            assert_relative_eq!(w, std::f64::consts::PI / n as f64, max_relative = 1e-13);
        }
    }

    #[test]
    fn laguerre_moments() {
        let rule = gauss_laguerre(8).unwrap();
        let mut fact = 1.0;
        for k in 0..16 {
            if k > 0 {
                fact *= k as f64;
            }
            assert_relative_eq!(rule.integrate(|u| u.powi(k)), fact, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(gauss_jacobi(4, -1.0, 0.0).is_err());
        assert!(gauss_jacobi(0, 0.0, 0.0).is_err());
    }
}
