//! Closed-form conditional expected cost under measurement noise, and its
//! marginalization over the plant belief by quadrature.
//!
//! With measurement noise of strength sigma the closed loop is the linear
//! SDE `dx = (p + theta) x dt + theta sigma dW`, and the conditional
//! expectation of the finite-horizon quadratic cost given `p` is
//!
//! ```text
//! E[J | p] = -(1/4) (q + r theta^2)/(p + theta)
//!            [ theta^2 sigma^2 T
//!              + (1 - e^{2T(p+theta)}) (1 + theta^2 sigma^2 / (2(p+theta))) ]
//! ```
//!
//! Internally the equivalent form `E[J|p] = (G/2)(I1 + c I2)` is used, with
//! `G = q + r theta^2`, `c = theta^2 sigma^2`, `I1 = expm1(2aT)/(2a)` and
//! `I2 = (expm1(2aT) - 2aT)/(4a^2)`; both integrals are positive, which
//! keeps the evaluation free of the cancellation the bracketed form suffers
//! near `a = p + theta = 0`. A truncated series handles the neighborhood of
//! the singularity and a log-space path handles exponent overflow for
//! strongly unstable quadrature nodes.

use crate::error::{Error, Result};
use crate::model::{CostSpec, MeasurementNoise, PlantPrior, PriorKind};
use crate::quad::{QuadratureRule, RuleKind};

/// Relative half-width of the singular neighborhood around `p + theta = 0`;
/// scaled by `1 + |theta|`.
pub const SINGULARITY_EPS: f64 = 1e-6;
/// Relative disagreement allowed between the n and 1.5n node marginals.
pub const MARGINAL_CONVERGENCE_TOL: f64 = 1e-6;
/// Default Gauss-Hermite size for Gaussian priors.
pub const GAUSSIAN_RULE_SIZE: usize = 80;
/// Default Gauss-Legendre size for truncated priors.
pub const TRUNCATED_RULE_SIZE: usize = 200;
/// Above this exponent `2aT`, evaluation moves to log space.
const LOG_SPACE_EXPONENT: f64 = 600.0;

fn cost_terms(theta: f64, cost: &CostSpec, noise: &MeasurementNoise) -> (f64, f64) {
    let big_g = cost.q() + cost.r() * theta * theta;
    let c = theta * theta * noise.sigma() * noise.sigma();
    (big_g, c)
}

fn require_finite_horizon(cost: &CostSpec) -> Result<f64> {
    if !cost.has_finite_horizon() {
        return Err(Error::NonFiniteHorizon);
    }
    Ok(cost.horizon())
}

/// Direct evaluation of the closed form; valid away from `p + theta = 0`.
pub fn expected_cost_closed_form(
    p: f64,
    theta: f64,
    cost: &CostSpec,
    noise: &MeasurementNoise,
) -> Result<f64> {
    let t = require_finite_horizon(cost)?;
    let (big_g, c) = cost_terms(theta, cost, noise);
    let a = p + theta;
    let em = (2.0 * a * t).exp_m1();
    let i1 = em / (2.0 * a);
    let i2 = (em - 2.0 * a * t) / (4.0 * a * a);
    Ok(0.5 * big_g * (i1 + c * i2))
}

/// Series expansion of the closed form about `p + theta = 0`, exact in the
/// limit and accurate to `O((aT)^3)` nearby. At `a = 0` it reduces to
/// `(q + r theta^2)(T/2 + T^2 theta^2 sigma^2 / 4)`.
pub fn expected_cost_near_singularity(
    p: f64,
    theta: f64,
    cost: &CostSpec,
    noise: &MeasurementNoise,
) -> Result<f64> {
    let t = require_finite_horizon(cost)?;
    let (big_g, c) = cost_terms(theta, cost, noise);
    let x = (p + theta) * t;
    let i1 = t * (1.0 + x * (1.0 + x * (2.0 / 3.0)));
    let i2 = 0.5 * t * t * (1.0 + x * (2.0 / 3.0 + x / 3.0));
    Ok(0.5 * big_g * (i1 + c * i2))
}

/// Conditional expected cost `E[J | p]` of the noisy closed loop over a
/// finite horizon. Total in `p + theta`: dispatches to the series branch
/// inside `|p + theta| < 1e-6 (1 + |theta|)` and the closed form elsewhere.
pub fn expected_cost_given_p(
    p: f64,
    theta: f64,
    cost: &CostSpec,
    noise: &MeasurementNoise,
) -> Result<f64> {
    let a = p + theta;
    if a.abs() < SINGULARITY_EPS * (1.0 + theta.abs()) {
        expected_cost_near_singularity(p, theta, cost, noise)
    } else {
        expected_cost_closed_form(p, theta, cost, noise)
    }
}

/// `ln E[J | p]`, finite even where the plain value overflows `f64`.
///
/// For exponents `2aT` beyond the overflow guard the identity
/// `I1 + c I2 = e^{2aT} K - L` with `K = 1/(2a) + c/(4a^2)` and
/// `L = K + cT/(2a)` gives `ln` directly.
pub fn ln_expected_cost_given_p(
    p: f64,
    theta: f64,
    cost: &CostSpec,
    noise: &MeasurementNoise,
) -> Result<f64> {
    let t = require_finite_horizon(cost)?;
    let a = p + theta;
    let two_at = 2.0 * a * t;
    if two_at <= LOG_SPACE_EXPONENT {
        return Ok(expected_cost_given_p(p, theta, cost, noise)?.ln());
    }
    let (big_g, c) = cost_terms(theta, cost, noise);
    let k = 1.0 / (2.0 * a) + c / (4.0 * a * a);
    let l = k + c * t / (2.0 * a);
    Ok((0.5 * big_g).ln() + two_at + k.ln() + (-l / k * (-two_at).exp()).ln_1p())
}

fn degenerate_marginal(
    theta: f64,
    prior: &PlantPrior,
    cost: &CostSpec,
    noise: &MeasurementNoise,
) -> Result<f64> {
    expected_cost_given_p(prior.p_hat(), theta, cost, noise)
}

/// One quadrature pass; terms are combined by log-sum-exp in ascending node
/// order so strongly unstable nodes cannot overflow intermediates.
fn marginal_pass(
    theta: f64,
    prior: &PlantPrior,
    cost: &CostSpec,
    noise: &MeasurementNoise,
    rule: &QuadratureRule,
) -> Result<f64> {
    let mut log_terms = Vec::with_capacity(rule.len());
    match prior.kind() {
        PriorKind::Gaussian => {
            for (z, w) in rule.nodes().iter().zip(rule.weights()) {
                let p = prior.p_hat() + prior.sigma_p() * z;
                log_terms.push(w.ln() + ln_expected_cost_given_p(p, theta, cost, noise)?);
            }
        }
        PriorKind::TruncatedGaussian => {
            let (lo, hi) = prior.bounds().expect("truncated prior has bounds");
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (node, w) in rule.nodes().iter().zip(rule.weights()) {
                let p = mid + half * node;
                let weight = w * half * prior.pdf(p);
                log_terms.push(weight.ln() + ln_expected_cost_given_p(p, theta, cost, noise)?);
            }
        }
    }
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // Either every term underflowed (impossible for positive costs) or
        // one overflowed past f64; surface the honest infinity.
        return Ok(if max == f64::INFINITY { f64::INFINITY } else { 0.0 });
    }
    let mut sum = 0.0;
    for term in &log_terms {
        sum += (term - max).exp();
    }
    Ok((max + sum.ln()).exp())
}

fn check_rule_matches(prior: &PlantPrior, rule: &QuadratureRule) -> Result<()> {
    let ok = matches!(
        (prior.kind(), rule.kind()),
        (PriorKind::Gaussian, RuleKind::GaussHermite)
            | (PriorKind::TruncatedGaussian, RuleKind::GaussLegendre)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::RuleMismatch {
            rule: rule.kind().name(),
            prior: match prior.kind() {
                PriorKind::Gaussian => "gaussian",
                PriorKind::TruncatedGaussian => "truncated_gaussian",
            },
        })
    }
}

/// Marginal expected cost `E[J] = E_p[E_W[J | p]]` at the given gain.
///
/// Evaluates with `rule` and its 1.5x refinement and errors with
/// [`Error::QuadratureDivergence`] if the two disagree by more than 1e-6
/// relative; otherwise returns the refined value.
pub fn marginal_expected_cost(
    theta: f64,
    prior: &PlantPrior,
    cost: &CostSpec,
    noise: &MeasurementNoise,
    rule: &QuadratureRule,
) -> Result<f64> {
    check_rule_matches(prior, rule)?;
    if prior.is_degenerate() {
        return degenerate_marginal(theta, prior, cost, noise);
    }
    let fine_rule = rule.refined()?;
    let coarse = marginal_pass(theta, prior, cost, noise, rule)?;
    let fine = marginal_pass(theta, prior, cost, noise, &fine_rule)?;
    if (coarse - fine).abs() > MARGINAL_CONVERGENCE_TOL * (1.0 + fine.abs()) {
        return Err(Error::QuadratureDivergence { coarse, fine });
    }
    Ok(fine)
}

/// A reusable marginal-cost objective: the prior, cost, noise, and both
/// quadrature rules are fixed once so repeated evaluations inside a scalar
/// search do not rebuild node tables.
pub struct MarginalCost<'a> {
    prior: &'a PlantPrior,
    cost: &'a CostSpec,
    noise: MeasurementNoise,
    rule: QuadratureRule,
    fine_rule: QuadratureRule,
}

impl<'a> MarginalCost<'a> {
    /// Uses the default rule for the prior family (Gauss-Hermite 80 for
    /// Gaussian, Gauss-Legendre 200 for truncated).
    pub fn new(prior: &'a PlantPrior, cost: &'a CostSpec, noise: MeasurementNoise) -> Result<Self> {
        let rule = match prior.kind() {
            PriorKind::Gaussian => QuadratureRule::gauss_hermite(GAUSSIAN_RULE_SIZE)?,
            PriorKind::TruncatedGaussian => QuadratureRule::gauss_legendre(TRUNCATED_RULE_SIZE)?,
        };
        Self::with_rule(prior, cost, noise, rule)
    }

    /// Same, with a caller-supplied base rule.
    pub fn with_rule(
        prior: &'a PlantPrior,
        cost: &'a CostSpec,
        noise: MeasurementNoise,
        rule: QuadratureRule,
    ) -> Result<Self> {
        check_rule_matches(prior, &rule)?;
        require_finite_horizon(cost)?;
        let fine_rule = rule.refined()?;
        Ok(Self {
            prior,
            cost,
            noise,
            rule,
            fine_rule,
        })
    }

    pub fn prior(&self) -> &PlantPrior {
        self.prior
    }

    /// Marginal expected cost at `theta`, with the convergence cross-check.
    pub fn eval(&self, theta: f64) -> Result<f64> {
        if self.prior.is_degenerate() {
            return degenerate_marginal(theta, self.prior, self.cost, &self.noise);
        }
        let coarse = marginal_pass(theta, self.prior, self.cost, &self.noise, &self.rule)?;
        let fine = marginal_pass(theta, self.prior, self.cost, &self.noise, &self.fine_rule)?;
        if (coarse - fine).abs() > MARGINAL_CONVERGENCE_TOL * (1.0 + fine.abs()) {
            return Err(Error::QuadratureDivergence { coarse, fine });
        }
        Ok(fine)
    }
}
