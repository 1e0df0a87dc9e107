//! Domain types and the closed-form solution of the noiseless problem.
//!
//! The plant is the scalar system `x' = p x + u` closed with linear feedback
//! `u = theta x`, so `x(t) = exp((p + theta) t)` from `x(0) = 1`. Under the
//! quadratic running cost `q x^2 / 2 + r u^2 / 2` the infinite-horizon cost,
//! its minimizing gain, and both inverse maps have closed forms; this module
//! houses those maps together with the belief types (`PlantPrior`,
//! `CostSpec`, `MeasurementNoise`) shared by the rest of the crate.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub(crate) fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via `erfc`, accurate far into both tails.
pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn require_finite(what: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput {
            what,
            why: format!("must be finite, got {value}"),
        })
    }
}

/// Family of the belief over the plant parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Gaussian,
    TruncatedGaussian,
}

/// Belief over the scalar plant parameter `p` (units 1/time).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlantPrior {
    p_hat: f64,
    sigma_p: f64,
    kind: PriorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
}

impl PlantPrior {
    /// Gaussian belief `p ~ N(p_hat, sigma_p^2)`. `sigma_p = 0` is the
    /// degenerate point mass used to recover deterministic settings.
    pub fn gaussian(p_hat: f64, sigma_p: f64) -> Result<Self> {
        require_finite("p_hat", p_hat)?;
        require_finite("sigma_p", sigma_p)?;
        if sigma_p < 0.0 {
            return Err(Error::InvalidInput {
                what: "sigma_p",
                why: format!("must be >= 0, got {sigma_p}"),
            });
        }
        Ok(Self {
            p_hat,
            sigma_p,
            kind: PriorKind::Gaussian,
            lower: None,
            upper: None,
        })
    }

    /// Gaussian belief truncated (and renormalized) to `[lower, upper]`.
    pub fn truncated_gaussian(p_hat: f64, sigma_p: f64, lower: f64, upper: f64) -> Result<Self> {
        require_finite("p_hat", p_hat)?;
        require_finite("sigma_p", sigma_p)?;
        require_finite("lower", lower)?;
        require_finite("upper", upper)?;
        if sigma_p < 0.0 {
            return Err(Error::InvalidInput {
                what: "sigma_p",
                why: format!("must be >= 0, got {sigma_p}"),
            });
        }
        if !(lower < upper) {
            return Err(Error::InvalidInput {
                what: "bounds",
                why: format!("lower < upper required, got [{lower}, {upper}]"),
            });
        }
        if p_hat < lower || p_hat > upper {
            return Err(Error::InvalidInput {
                what: "p_hat",
                why: format!("must lie in [{lower}, {upper}], got {p_hat}"),
            });
        }
        Ok(Self {
            p_hat,
            sigma_p,
            kind: PriorKind::TruncatedGaussian,
            lower: Some(lower),
            upper: Some(upper),
        })
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    /// Truncation bounds, present only for [`PriorKind::TruncatedGaussian`].
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.lower.zip(self.upper)
    }

    /// True for the `sigma_p = 0` point mass.
    pub fn is_degenerate(&self) -> bool {
        self.sigma_p == 0.0
    }

    /// Same belief with the width replaced; used by parameter sweeps.
    pub fn with_sigma_p(&self, sigma_p: f64) -> Result<Self> {
        match self.kind {
            PriorKind::Gaussian => Self::gaussian(self.p_hat, sigma_p),
            PriorKind::TruncatedGaussian => {
                let (lo, hi) = self.bounds().expect("truncated prior has bounds");
                Self::truncated_gaussian(self.p_hat, sigma_p, lo, hi)
            }
        }
    }

    /// Normalizing constant of the truncated family: prior mass of the
    /// untruncated Gaussian inside the bounds. 1 for the plain Gaussian.
    fn mass_in_bounds(&self) -> f64 {
        match self.bounds() {
            None => 1.0,
            Some((lo, hi)) => {
                let a = (lo - self.p_hat) / self.sigma_p;
                let b = (hi - self.p_hat) / self.sigma_p;
                std_normal_cdf(b) - std_normal_cdf(a)
            }
        }
    }

    /// Probability density at `p`. Undefined for the degenerate point mass;
    /// callers that need a density must reject `sigma_p = 0` first.
    pub fn pdf(&self, p: f64) -> f64 {
        debug_assert!(!self.is_degenerate(), "density of a point mass");
        let z = (p - self.p_hat) / self.sigma_p;
        match self.bounds() {
            None => std_normal_pdf(z) / self.sigma_p,
            Some((lo, hi)) => {
                if p < lo || p > hi {
                    0.0
                } else {
                    std_normal_pdf(z) / (self.sigma_p * self.mass_in_bounds())
                }
            }
        }
    }

    /// Cumulative distribution at `p`.
    pub fn cdf(&self, p: f64) -> f64 {
        if self.is_degenerate() {
            return if p >= self.p_hat { 1.0 } else { 0.0 };
        }
        let z = (p - self.p_hat) / self.sigma_p;
        match self.bounds() {
            None => std_normal_cdf(z),
            Some((lo, hi)) => {
                if p <= lo {
                    0.0
                } else if p >= hi {
                    1.0
                } else {
                    let a = (lo - self.p_hat) / self.sigma_p;
                    ((std_normal_cdf(z) - std_normal_cdf(a)) / self.mass_in_bounds())
                        .clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Draw one plant parameter from the belief.
    ///
    /// Truncated sampling is by rejection with an inverse-CDF bisection
    /// fallback for beliefs with almost no mass inside the bounds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_degenerate() {
            return self.p_hat;
        }
        let normal = Normal::new(self.p_hat, self.sigma_p).expect("validated at construction");
        match self.bounds() {
            None => normal.sample(rng),
            Some((lo, hi)) => {
                for _ in 0..10_000 {
                    let p = normal.sample(rng);
                    if (lo..=hi).contains(&p) {
                        return p;
                    }
                }
                // Essentially all mass is outside the bounds; invert the CDF.
                let u = Uniform::new(0.0, 1.0).sample(rng);
                let target = {
                    let a = (lo - self.p_hat) / self.sigma_p;
                    std_normal_cdf(a) + u * self.mass_in_bounds()
                };
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    let z = (mid - self.p_hat) / self.sigma_p;
                    if std_normal_cdf(z) < target {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            }
        }
    }
}

fn ser_horizon<S: Serializer>(horizon: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    // JSON has no infinity; an absent/null horizon means infinite.
    if horizon.is_finite() {
        ser.serialize_some(horizon)
    } else {
        ser.serialize_none()
    }
}

/// Quadratic cost weights and horizon of the performance index.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostSpec {
    q: f64,
    r: f64,
    #[serde(rename = "T", serialize_with = "ser_horizon")]
    horizon: f64,
}

impl CostSpec {
    /// `q >= 0`, `r > 0`, `horizon > 0` (may be `f64::INFINITY`).
    pub fn new(q: f64, r: f64, horizon: f64) -> Result<Self> {
        require_finite("q", q)?;
        require_finite("r", r)?;
        if q < 0.0 {
            return Err(Error::InvalidInput {
                what: "q",
                why: format!("must be >= 0, got {q}"),
            });
        }
        if r <= 0.0 {
            return Err(Error::InvalidInput {
                what: "r",
                why: format!("must be positive, got {r}"),
            });
        }
        if !(horizon > 0.0) || horizon.is_nan() {
            return Err(Error::InvalidInput {
                what: "T",
                why: format!("must be positive, got {horizon}"),
            });
        }
        Ok(Self { q, r, horizon })
    }

    /// Cost with `T = infinity`.
    pub fn infinite_horizon(q: f64, r: f64) -> Result<Self> {
        Self::new(q, r, f64::INFINITY)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn has_finite_horizon(&self) -> bool {
        self.horizon.is_finite()
    }

    /// The ratio q/r that sets the scale of the optimal gain.
    pub(crate) fn q_over_r(&self) -> f64 {
        self.q / self.r
    }
}

/// Standard deviation of the state-measurement error. `sigma = 0` recovers
/// the noiseless setting.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasurementNoise {
    sigma: f64,
}

impl MeasurementNoise {
    pub fn new(sigma: f64) -> Result<Self> {
        require_finite("sigma", sigma)?;
        if sigma < 0.0 {
            return Err(Error::InvalidInput {
                what: "sigma",
                why: format!("must be >= 0, got {sigma}"),
            });
        }
        Ok(Self { sigma })
    }

    pub fn none() -> Self {
        Self { sigma: 0.0 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Feedback gain of the linear controller `u = theta x` (units 1/time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlGain {
    pub theta: f64,
}

impl ControlGain {
    pub fn new(theta: f64) -> Self {
        Self { theta }
    }

    /// Whether the gain stabilizes a plant with the given parameter.
    pub fn stabilizes(&self, p: f64) -> bool {
        p + self.theta < 0.0
    }
}

/// How a [`GainSolution`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Deterministic,
    Bayesian,
}

/// A synthesized gain bundled with its achieved expected cost and the prior
/// probability that it stabilizes the plant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GainSolution {
    pub gain: ControlGain,
    pub expected_cost: f64,
    pub method: SolveMethod,
    pub stability_prob: f64,
}

/// Noiseless closed-loop state `x(t) = exp((p + theta) t)` from `x(0) = 1`.
///
/// Requires `t >= 0`.
pub fn closed_loop_state(p: f64, theta: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    ((p + theta) * t).exp()
}

/// Infinite-horizon cost `-(q + r theta^2) / (4 (p + theta))` of the stable
/// closed loop.
///
/// Errors with [`Error::Unstable`] when `p + theta >= 0` (the integral
/// diverges).
pub fn infinite_horizon_cost(p: f64, theta: f64, cost: &CostSpec) -> Result<f64> {
    let pole = p + theta;
    if pole >= 0.0 {
        return Err(Error::Unstable { pole });
    }
    Ok(-0.25 * (cost.q + cost.r * theta * theta) / pole)
}

/// The gain minimizing the infinite-horizon cost for a known plant:
/// `g(p) = -p - sqrt(p^2 + q/r)`.
///
/// For `q > 0` the closed loop is stable for every real `p`, since
/// `p + g(p) = -sqrt(p^2 + q/r) < 0`.
pub fn deterministic_optimal_gain(p: f64, cost: &CostSpec) -> ControlGain {
    ControlGain::new(-p - (p * p + cost.q_over_r()).sqrt())
}

/// Inverse of [`deterministic_optimal_gain`]:
/// `g^{-1}(theta) = q / (2 r theta) - theta / 2`.
///
/// Defined on `theta < 0`, the range of `g` when `q/r > 0`.
pub fn gain_inverse(theta: f64, cost: &CostSpec) -> Result<f64> {
    if theta >= 0.0 {
        return Err(Error::Domain(format!(
            "gain_inverse requires theta < 0, got {theta}"
        )));
    }
    Ok(cost.q / (2.0 * cost.r * theta) - 0.5 * theta)
}

/// Optimal cost as a function of the plant parameter:
/// `h(p) = (r/2)(p + sqrt(p^2 + q/r))`, positive for all `p` when `q > 0`.
pub fn optimal_cost_of_p(p: f64, cost: &CostSpec) -> f64 {
    0.5 * cost.r * (p + (p * p + cost.q_over_r()).sqrt())
}

/// Inverse of [`optimal_cost_of_p`]: `h^{-1}(J) = J/r - q/(4J)`, on `J > 0`.
pub fn optimal_cost_inverse(j: f64, cost: &CostSpec) -> Result<f64> {
    if j <= 0.0 {
        return Err(Error::Domain(format!(
            "optimal_cost_inverse requires J > 0, got {j}"
        )));
    }
    Ok(j / cost.r - cost.q / (4.0 * j))
}

/// Prior probability that the gain stabilizes the plant:
/// `P[p + theta < 0]` under the belief over `p`.
pub fn stability_probability(theta: f64, prior: &PlantPrior) -> f64 {
    if prior.is_degenerate() {
        return if prior.p_hat() + theta < 0.0 { 1.0 } else { 0.0 };
    }
    prior.cdf(-theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cost(q: f64, r: f64) -> CostSpec {
        CostSpec::infinite_horizon(q, r).unwrap()
    }

    #[test]
    fn closed_loop_state_examples() {
        assert_eq!(closed_loop_state(1.0, -1.0, 7.0), 1.0);
        assert_eq!(closed_loop_state(0.0, 0.0, 5.0), 1.0);
        assert!((closed_loop_state(2.0, -3.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn infinite_horizon_cost_examples() {
        assert!((infinite_horizon_cost(0.0, -1.0, &cost(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        // Evaluating at the 4-digit gains used in the headline configurations.
        let j = infinite_horizon_cost(5.0, -16.1803, &cost(100.0, 1.0)).unwrap();
        assert!((j - 8.0902).abs() < 1e-4);
        let j = infinite_horizon_cost(3.0, -6.1623, &cost(1.0, 1.0)).unwrap();
        assert!((j - 3.0811).abs() < 1e-4);
    }

    #[test]
    fn infinite_horizon_cost_rejects_unstable_loop() {
        assert!(matches!(
            infinite_horizon_cost(2.0, -1.0, &cost(1.0, 1.0)),
            Err(Error::Unstable { .. })
        ));
        assert!(matches!(
            infinite_horizon_cost(1.0, -1.0, &cost(1.0, 1.0)),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn deterministic_gain_examples() {
        assert!((deterministic_optimal_gain(5.0, &cost(100.0, 1.0)).theta + 16.180).abs() < 1e-3);
        assert!((deterministic_optimal_gain(3.0, &cost(1.0, 1.0)).theta + 6.162).abs() < 1e-3);
        assert!((deterministic_optimal_gain(0.0, &cost(1.0, 1.0)).theta + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_inverse_round_trips() {
        let c = cost(100.0, 1.0);
        assert!((gain_inverse(-16.1803, &c).unwrap() - 5.0).abs() < 1e-3);
        let c = cost(1.0, 1.0);
        assert!((gain_inverse(-1.0, &c).unwrap()).abs() < 1e-15);
        assert!((gain_inverse(-6.1623, &c).unwrap() - 3.0).abs() < 1e-3);
        assert!(matches!(gain_inverse(0.0, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn optimal_cost_examples() {
        assert!((optimal_cost_of_p(5.0, &cost(100.0, 1.0)) - 8.090).abs() < 1e-3);
        assert!((optimal_cost_of_p(0.0, &cost(1.0, 1.0)) - 0.5).abs() < 1e-15);
        assert!((optimal_cost_of_p(3.0, &cost(1.0, 1.0)) - 3.081).abs() < 1e-3);
    }

    #[test]
    fn optimal_cost_inverse_round_trips() {
        assert!((optimal_cost_inverse(8.090, &cost(100.0, 1.0)).unwrap() - 5.0).abs() < 2e-3);
        assert!((optimal_cost_inverse(0.5, &cost(1.0, 1.0)).unwrap()).abs() < 1e-12);
        assert!((optimal_cost_inverse(3.081, &cost(1.0, 1.0)).unwrap() - 3.0).abs() < 2e-3);
        assert!(matches!(
            optimal_cost_inverse(0.0, &cost(1.0, 1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stability_probability_examples() {
        let prior = PlantPrior::gaussian(5.0, 5.0).unwrap();
        assert!((stability_probability(-5.0, &prior) - 0.5).abs() < 1e-15);
        // Phi(2.23606...) evaluated through an independent erf implementation.
        assert!((stability_probability(-16.1803, &prior) - 0.98736).abs() < 1e-4);

        let trunc = PlantPrior::truncated_gaussian(3.0, 2.0, 0.0, 6.0).unwrap();
        assert_eq!(stability_probability(-7.0, &trunc), 1.0);
        assert_eq!(stability_probability(0.5, &trunc), 0.0);
    }

    #[test]
    fn stability_probability_degenerate_prior() {
        let point = PlantPrior::gaussian(3.0, 0.0).unwrap();
        assert_eq!(stability_probability(-4.0, &point), 1.0);
        assert_eq!(stability_probability(-3.0, &point), 0.0);
        assert_eq!(stability_probability(-2.0, &point), 0.0);
    }

    #[test]
    fn normal_cdf_tail_accuracy() {
        // Reference values from the complementary error function at double
        // precision; the tail must not saturate prematurely.
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(-5.0) - 2.866515718791939e-7).abs() < 1e-13);
        assert!((std_normal_cdf(5.0) - (1.0 - 2.866515718791939e-7)).abs() < 1e-13);
        assert!(std_normal_cdf(-8.0) > 0.0);
    }

    #[test]
    fn truncated_prior_validation() {
        assert!(PlantPrior::truncated_gaussian(3.0, 2.0, 6.0, 0.0).is_err());
        assert!(PlantPrior::truncated_gaussian(7.0, 2.0, 0.0, 6.0).is_err());
        assert!(PlantPrior::gaussian(3.0, -1.0).is_err());
    }

    #[test]
    fn cost_spec_validation() {
        assert!(CostSpec::new(1.0, 0.0, 1.0).is_err());
        assert!(CostSpec::new(-1.0, 1.0, 1.0).is_err());
        assert!(CostSpec::new(1.0, 1.0, 0.0).is_err());
        assert!(CostSpec::new(1.0, 1.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn prior_density_normalizes() {
        // Trapezoid over a wide window; the invariant asks for 1e-8.
        let priors = [
            PlantPrior::gaussian(5.0, 5.0).unwrap(),
            PlantPrior::truncated_gaussian(3.0, 2.0, 0.0, 6.0).unwrap(),
        ];
        for prior in priors {
            let (lo, hi) = match prior.bounds() {
                Some((a, b)) => (a, b),
                None => (prior.p_hat() - 10.0 * prior.sigma_p(), prior.p_hat() + 10.0 * prior.sigma_p()),
            };
            let n = 400_001;
            let h = (hi - lo) / (n - 1) as f64;
            let mut mass = 0.5 * (prior.pdf(lo) + prior.pdf(hi));
            for i in 1..n - 1 {
                mass += prior.pdf(lo + i as f64 * h);
            }
            mass *= h;
            assert!((mass - 1.0).abs() < 1e-8, "mass = {mass}");
        }
    }

    #[test]
    fn truncated_sampling_stays_in_bounds() {
        let prior = PlantPrior::truncated_gaussian(3.0, 2.0, 0.0, 6.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut mean = 0.0;
        for _ in 0..20_000 {
            let p = prior.sample(&mut rng);
            assert!((0.0..=6.0).contains(&p));
            mean += p;
        }
        mean /= 20_000.0;
        // Symmetric truncation about p_hat keeps the mean at p_hat.
        assert!((mean - 3.0).abs() < 0.05, "mean = {mean}");
    }

    #[test]
    fn truncated_cdf_matches_renormalization() {
        let prior = PlantPrior::truncated_gaussian(3.0, 2.0, 0.0, 6.0).unwrap();
        assert_eq!(prior.cdf(-1.0), 0.0);
        assert_eq!(prior.cdf(7.0), 1.0);
        assert!((prior.cdf(3.0) - 0.5).abs() < 1e-12);
    }
}
