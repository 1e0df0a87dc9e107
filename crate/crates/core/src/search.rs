//! Scalar minimization of the marginal expected cost, optimality
//! diagnostics, and (sigma, sigma_p) parameter sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    stability_probability, ControlGain, CostSpec, GainSolution, MeasurementNoise, PlantPrior,
    SolveMethod,
};
use crate::stochastic::MarginalCost;

/// Default upper end of the search bracket; the optimal gain for this plant
/// family is always strictly negative.
pub const DEFAULT_BRACKET_HI: f64 = -1e-3;
/// Default gain tolerance.
pub const DEFAULT_TOL_THETA: f64 = 1e-6;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: u32 = 200;
/// Audit-grid size for the post-hoc unimodality check.
const AUDIT_POINTS: usize = 33;
/// Relative slack used by the audit comparisons.
const AUDIT_SLACK: f64 = 1e-6;

/// Bracket and stopping parameters for the derivative-free scalar search.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SearchConfig {
    bracket_lo: f64,
    bracket_hi: f64,
    tol_theta: f64,
    max_iters: u32,
}

impl SearchConfig {
    pub fn new(bracket_lo: f64, bracket_hi: f64, tol_theta: f64, max_iters: u32) -> Result<Self> {
        if !(bracket_lo < bracket_hi) {
            return Err(Error::InvalidInput {
                what: "bracket",
                why: format!("bracket_lo < bracket_hi required, got [{bracket_lo}, {bracket_hi}]"),
            });
        }
        if !(tol_theta > 0.0) {
            return Err(Error::InvalidInput {
                what: "tol_theta",
                why: format!("must be positive, got {tol_theta}"),
            });
        }
        if max_iters == 0 {
            return Err(Error::InvalidInput {
                what: "max_iters",
                why: "must be at least 1".into(),
            });
        }
        Ok(Self {
            bracket_lo,
            bracket_hi,
            tol_theta,
            max_iters,
        })
    }

    /// Default bracket `[-40 (1 + sigma_p), -1e-3]`: the optimum magnitude
    /// grows with parameter uncertainty, so the bracket widens with it.
    pub fn default_for_sigma_p(sigma_p: f64) -> Self {
        Self {
            bracket_lo: -40.0 * (1.0 + sigma_p),
            bracket_hi: DEFAULT_BRACKET_HI,
            tol_theta: DEFAULT_TOL_THETA,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn bracket_lo(&self) -> f64 {
        self.bracket_lo
    }

    pub fn bracket_hi(&self) -> f64 {
        self.bracket_hi
    }

    pub fn tol_theta(&self) -> f64 {
        self.tol_theta
    }

    pub fn max_iters(&self) -> u32 {
        self.max_iters
    }
}

/// Brent's bracketed minimization (golden-section with parabolic steps).
///
/// Returns `(x_min, f_min)` once the interval shrinks below `tol`; errors
/// if the iteration cap is reached first.
pub(crate) fn brent_minimize<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iters: u32,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const GOLDEN: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..max_iters {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs().max(1.0) * 0.5 + f64::EPSILON * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok((x, fx));
        }

        let mut take_golden = true;
        if e.abs() > tol1 {
            // Parabola through (v, fv), (w, fw), (x, fx).
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                take_golden = false;
            }
        }
        if take_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d >= 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u)?;

        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u >= x {
                b = u;
            } else {
                a = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(Error::MaxIterations { max_iters })
}

/// Reject minima that landed on a bracket endpoint and audit unimodality on
/// a coarse grid: values must descend to the found minimum and ascend after
/// it, and no audited point may undercut the found minimum.
fn audit_bracket<F>(mut f: F, cfg: &SearchConfig, theta: f64, f_theta: f64) -> Result<()>
where
    F: FnMut(f64) -> Result<f64>,
{
    let margin = (2.0 * cfg.tol_theta).max(1e-9 * (cfg.bracket_hi - cfg.bracket_lo));
    if theta - cfg.bracket_lo <= margin {
        return Err(Error::BracketEndpoint {
            endpoint: cfg.bracket_lo,
        });
    }
    if cfg.bracket_hi - theta <= margin {
        return Err(Error::BracketEndpoint {
            endpoint: cfg.bracket_hi,
        });
    }

    let step = (cfg.bracket_hi - cfg.bracket_lo) / (AUDIT_POINTS - 1) as f64;
    let mut values = Vec::with_capacity(AUDIT_POINTS);
    for i in 0..AUDIT_POINTS {
        let t = cfg.bracket_lo + i as f64 * step;
        values.push((t, f(t)?));
    }
    let slack = |v: f64| AUDIT_SLACK * (1.0 + v.abs());
    for (t, v) in &values {
        if *v < f_theta - slack(f_theta) {
            return Err(Error::NotUnimodal { near: *t });
        }
    }
    let min_idx = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    for i in 1..=min_idx {
        if values[i].1 > values[i - 1].1 + slack(values[i - 1].1) {
            return Err(Error::NotUnimodal { near: values[i].0 });
        }
    }
    for i in min_idx..AUDIT_POINTS - 1 {
        if values[i + 1].1 < values[i].1 - slack(values[i].1) {
            return Err(Error::NotUnimodal {
                near: values[i + 1].0,
            });
        }
    }
    Ok(())
}

/// Minimize the marginal expected cost over the gain.
///
/// Returns the minimizer with its achieved cost and prior stability
/// probability. Errors if the bracket endpoint wins, the audit finds the
/// objective non-unimodal, or the iteration cap is hit.
pub fn bayes_optimal_gain(
    prior: &PlantPrior,
    cost: &CostSpec,
    noise: MeasurementNoise,
    cfg: &SearchConfig,
) -> Result<GainSolution> {
    let objective = MarginalCost::new(prior, cost, noise)?;
    let (theta, achieved) = brent_minimize(
        |t| objective.eval(t),
        cfg.bracket_lo,
        cfg.bracket_hi,
        cfg.tol_theta,
        cfg.max_iters,
    )?;
    audit_bracket(|t| objective.eval(t), cfg, theta, achieved)?;
    Ok(GainSolution {
        gain: ControlGain::new(theta),
        expected_cost: achieved,
        method: SolveMethod::Bayesian,
        stability_prob: stability_probability(theta, prior),
    })
}

/// Central finite-difference derivative of the marginal expected cost at the
/// solution's gain; small magnitude certifies first-order optimality.
pub fn verify_first_order(
    solution: &GainSolution,
    prior: &PlantPrior,
    cost: &CostSpec,
    noise: MeasurementNoise,
) -> Result<f64> {
    let objective = MarginalCost::new(prior, cost, noise)?;
    let theta = solution.gain.theta;
    let h = 1e-4 * (1.0 + theta.abs());
    let hi = objective.eval(theta + h)?;
    let lo = objective.eval(theta - h)?;
    Ok((hi - lo) / (2.0 * h))
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub sigma: f64,
    pub sigma_p: f64,
    /// NaN when `status` is not "ok".
    pub theta_star: f64,
    pub expected_cost: f64,
    pub stability_prob: f64,
    pub status: String,
}

/// Per-cell optimal gains and costs over a rectangular (sigma, sigma_p)
/// grid, stored row-major with sigma_p as the row index.
#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    sigma_values: Vec<f64>,
    sigma_p_values: Vec<f64>,
    cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn sigma_values(&self) -> &[f64] {
        &self.sigma_values
    }

    pub fn sigma_p_values(&self) -> &[f64] {
        &self.sigma_p_values
    }

    /// Cells in row-major order (outer sigma_p, inner sigma).
    pub fn cells(&self) -> &[SweepCell] {
        &self.cells
    }

    pub fn cell(&self, sigma_p_idx: usize, sigma_idx: usize) -> &SweepCell {
        &self.cells[sigma_p_idx * self.sigma_values.len() + sigma_idx]
    }
}

fn sorted_ascending(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

/// Solve every cell of the grid. `cfg = None` uses the per-cell default
/// bracket, which widens with the cell's sigma_p. Per-cell failures are
/// recorded in the cell status instead of aborting the sweep.
pub fn sweep(
    sigma_values: &[f64],
    sigma_p_values: &[f64],
    prior_template: &PlantPrior,
    cost: &CostSpec,
    cfg: Option<&SearchConfig>,
) -> Result<SweepGrid> {
    if sigma_values.is_empty() || sigma_p_values.is_empty() {
        return Err(Error::InvalidInput {
            what: "grid",
            why: "sigma and sigma_p grids must be nonempty".into(),
        });
    }
    if !sorted_ascending(sigma_values) || !sorted_ascending(sigma_p_values) {
        return Err(Error::InvalidInput {
            what: "grid",
            why: "grid values must be strictly ascending".into(),
        });
    }
    if sigma_values.iter().chain(sigma_p_values).any(|&v| v < 0.0) {
        return Err(Error::InvalidInput {
            what: "grid",
            why: "grid values must be >= 0".into(),
        });
    }

    let n_sigma = sigma_values.len();
    let cells: Vec<SweepCell> = (0..n_sigma * sigma_p_values.len())
        .into_par_iter()
        .map(|idx| {
            let sigma_p = sigma_p_values[idx / n_sigma];
            let sigma = sigma_values[idx % n_sigma];
            let cell_cfg = match cfg {
                Some(c) => *c,
                None => SearchConfig::default_for_sigma_p(sigma_p),
            };
            let outcome = prior_template
                .with_sigma_p(sigma_p)
                .and_then(|prior| {
                    let noise = MeasurementNoise::new(sigma)?;
                    bayes_optimal_gain(&prior, cost, noise, &cell_cfg)
                });
            match outcome {
                Ok(sol) => SweepCell {
                    sigma,
                    sigma_p,
                    theta_star: sol.gain.theta,
                    expected_cost: sol.expected_cost,
                    stability_prob: sol.stability_prob,
                    status: "ok".to_string(),
                },
                Err(err) => SweepCell {
                    sigma,
                    sigma_p,
                    theta_star: f64::NAN,
                    expected_cost: f64::NAN,
                    stability_prob: f64::NAN,
                    status: format!("failed: {err}"),
                },
            }
        })
        .collect();

    Ok(SweepGrid {
        sigma_values: sigma_values.to_vec(),
        sigma_p_values: sigma_p_values.to_vec(),
        cells,
    })
}

/// Side-by-side evaluation of two gains under the same belief and noise.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GainComparison {
    pub theta_d: f64,
    pub theta_s: f64,
    pub cost_at_theta_d: f64,
    pub cost_at_theta_s: f64,
    pub stability_prob_d: f64,
    pub stability_prob_s: f64,
    /// `cost_at_theta_d - cost_at_theta_s`; nonnegative when `theta_s` is
    /// the argmin.
    pub cost_gap: f64,
    pub stability_gap: f64,
}

/// Evaluate the marginal expected cost and stability probability of both
/// gains under the same prior and noise.
pub fn compare_gains(
    theta_d: ControlGain,
    theta_s: ControlGain,
    prior: &PlantPrior,
    cost: &CostSpec,
    noise: MeasurementNoise,
) -> Result<GainComparison> {
    let objective = MarginalCost::new(prior, cost, noise)?;
    let cost_d = objective.eval(theta_d.theta)?;
    let cost_s = objective.eval(theta_s.theta)?;
    let stab_d = stability_probability(theta_d.theta, prior);
    let stab_s = stability_probability(theta_s.theta, prior);
    Ok(GainComparison {
        theta_d: theta_d.theta,
        theta_s: theta_s.theta,
        cost_at_theta_d: cost_d,
        cost_at_theta_s: cost_s,
        stability_prob_d: stab_d,
        stability_prob_s: stab_s,
        cost_gap: cost_d - cost_s,
        stability_gap: stab_s - stab_d,
    })
}
