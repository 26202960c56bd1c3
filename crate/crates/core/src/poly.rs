//! Dense real polynomials in ascending coefficient order.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// p(-x).
    pub fn reflect(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| if k % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    /// q(y) = p(a + s*y).
    pub fn affine(&self, a: f64, s: f64) -> Poly {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        // Horner with polynomial arithmetic: acc <- acc*(a + s y) + c
        for &c in self.coeffs.iter().rev() {
            let mut next = vec![0.0; n];
            for (k, &v) in out.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                next[k] += v * a;
                if k + 1 < n {
                    next[k + 1] += v * s;
                }
            }
            next[0] += c;
            out = next;
        }
        Poly::new(out)
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

/// Binomial coefficient as a float; exact for the small degrees used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_direct_evaluation() {
        let p = Poly::new(vec![0.25, 0.0, -0.5, 0.0, 0.25]);
        let q = p.affine(1.0, -1.0);
        for &y in &[0.0, 0.1, 0.7, 1.3] {
            assert!((q.eval(y) - p.eval(1.0 - y)).abs() < 1e-14);
        }
        assert_eq!(q.coeff(0), 0.0);
        assert_eq!(q.coeff(1), 0.0);
    }

    #[test]
    fn derivative_and_reflect() {
        let p = Poly::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.derivative().coeffs(), &[2.0, 6.0]);
        assert_eq!(p.reflect().coeffs(), &[1.0, -2.0, 3.0]);
        assert_eq!(binomial(5, 2), 10.0);
    }
}
