//! Fixed-order Gaussian quadrature rules.
//!
//! Two families are used: Gauss-Hermite in probabilist normalization for
//! expectations against a (possibly degenerate) Gaussian, and Gauss-Legendre
//! on the reference interval `[-1, 1]` for integrals over a truncated
//! support. Node and weight computation is delegated to the `gauss-quad`
//! crate; this module fixes the normalization, the ascending node order, and
//! the summation order so results are bit-reproducible.

use serde::Serialize;

use crate::error::{Error, Result};

/// Quadrature family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    GaussHermite,
    GaussLegendre,
}

impl RuleKind {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            RuleKind::GaussHermite => "gauss_hermite",
            RuleKind::GaussLegendre => "gauss_legendre",
        }
    }
}

/// An immutable node/weight table with ascending nodes.
///
/// For [`RuleKind::GaussHermite`] the rule is stored in probabilist form:
/// `E[f(Z)] ~= sum_i w_i f(z_i)` for `Z ~ N(0, 1)`, with weights summing
/// to 1. For [`RuleKind::GaussLegendre`] nodes lie in `(-1, 1)` and weights
/// sum to 2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: RuleKind,
}

impl QuadratureRule {
    /// Probabilist Gauss-Hermite rule of the given size (`n >= 2`).
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        let raw = gauss_quad::GaussHermite::new(n).map_err(|_| Error::InvalidInput {
            what: "rule size",
            why: format!("Gauss-Hermite rule needs n >= 2, got {n}"),
        })?;
        let mut pairs: Vec<(f64, f64)> = raw.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Physicist's convention (weight e^{-x^2}, weights summing to
        // sqrt(pi)) -> probabilist: z = sqrt(2) x, w -> w / sqrt(pi).
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let nodes = pairs
            .iter()
            .map(|(x, _)| std::f64::consts::SQRT_2 * x)
            .collect();
        let weights = pairs.iter().map(|(_, w)| w / sqrt_pi).collect();
        Ok(Self {
            nodes,
            weights,
            kind: RuleKind::GaussHermite,
        })
    }

    /// Gauss-Legendre rule of the given size on `[-1, 1]` (`n >= 2`).
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        let raw = gauss_quad::GaussLegendre::new(n).map_err(|_| Error::InvalidInput {
            what: "rule size",
            why: format!("Gauss-Legendre rule needs n >= 2, got {n}"),
        })?;
        let mut pairs: Vec<(f64, f64)> = raw.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|(x, _)| *x).collect(),
            weights: pairs.iter().map(|(_, w)| *w).collect(),
            kind: RuleKind::GaussLegendre,
        })
    }

    /// A rule of the same family with 1.5x the nodes, used as the
    /// convergence cross-check.
    pub fn refined(&self) -> Result<Self> {
        let n = self.len() + self.len() / 2;
        match self.kind {
            RuleKind::GaussHermite => Self::gauss_hermite(n),
            RuleKind::GaussLegendre => Self::gauss_legendre(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ N(mean, std^2)` (Gauss-Hermite rules only).
    /// Summation runs in ascending node order.
    pub fn expect_gaussian<F: FnMut(f64) -> f64>(&self, mean: f64, std: f64, mut f: F) -> f64 {
        debug_assert_eq!(self.kind, RuleKind::GaussHermite);
        let mut acc = 0.0;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mean + std * z);
        }
        acc
    }

    /// `integral of f over [lo, hi]` (Gauss-Legendre rules only).
    pub fn integrate_interval<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        debug_assert_eq!(self.kind, RuleKind::GaussLegendre);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * t);
        }
        acc * half
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_weights_normalized() {
        for n in [10, 80, 120] {
            let rule = QuadratureRule::gauss_hermite(n).unwrap();
            let sum: f64 = rule.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "n={n}: sum={sum}");
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            assert!(rule.nodes().windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn legendre_weights_normalized() {
        for n in [10, 200, 300] {
            let rule = QuadratureRule::gauss_legendre(n).unwrap();
            let sum: f64 = rule.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-12, "n={n}: sum={sum}");
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            assert!(rule.nodes().windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn hermite_integrates_monomials_exactly() {
        // Standard normal moments: E[z^k] = (k-1)!! for even k, 0 for odd.
        let n = 6;
        let rule = QuadratureRule::gauss_hermite(n).unwrap();
        let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0, 0.0, 945.0];
        for k in 0..=(2 * n - 1) {
            let got = rule.expect_gaussian(0.0, 1.0, |z| z.powi(k as i32));
            let want = moments[k];
            let scale = 1.0_f64.max(want.abs());
            assert!(
                (got - want).abs() < 1e-9 * scale,
                "k={k}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn legendre_integrates_monomials_exactly() {
        let n = 6;
        let rule = QuadratureRule::gauss_legendre(n).unwrap();
        for k in 0..=(2 * n - 1) {
            let got = rule.integrate_interval(-1.0, 1.0, |t| t.powi(k as i32));
            let want = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!(
                (got - want).abs() < 1e-9,
                "k={k}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn hermite_matches_lognormal_mean() {
        // E[e^{aX}] = e^{a mu + a^2 s^2 / 2} for X ~ N(mu, s^2).
        let rule = QuadratureRule::gauss_hermite(80).unwrap();
        let (mu, s) = (1.0, 2.0);
        for a in [-3.0, -1.0, 1.0, 3.0] {
            let got = rule.expect_gaussian(mu, s, |p| (a * p).exp());
            let want = (a * mu + 0.5 * a * a * s * s).exp();
            assert!(
                ((got - want) / want).abs() < 1e-9,
                "a={a}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn refined_grows_by_half() {
        let rule = QuadratureRule::gauss_hermite(80).unwrap();
        assert_eq!(rule.refined().unwrap().len(), 120);
        let rule = QuadratureRule::gauss_legendre(200).unwrap();
        assert_eq!(rule.refined().unwrap().len(), 300);
    }

    #[test]
    fn rejects_tiny_rules() {
        assert!(QuadratureRule::gauss_hermite(1).is_err());
        assert!(QuadratureRule::gauss_legendre(0).is_err());
    }
}
