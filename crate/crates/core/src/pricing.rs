//! Closed-form and Monte Carlo prices for the two-regime hazard model.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::engine::{par_map, RngStream};
use crate::error::{domain, Error, Result};
use crate::model::ModelParams;
use crate::special::{bessel_i0, erf, singular_integral, QuadratureSpec};
use crate::stats::{batch_means, DEFAULT_BATCHES};

/// Below this time to maturity the pre-default value is taken to be 1.
const MATURITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMethod {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceResult {
    pub value: f64,
    pub std_error: f64,
    pub method: PriceMethod,
    pub n_paths: usize,
}

impl PriceResult {
    fn closed(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            method: PriceMethod::ClosedForm,
            n_paths: 0,
        }
    }
}

/// `Q(t < τ) = e^{−(λ₊+λ₋)t/2} I₀((λ₊−λ₋)t/2)`.
pub fn survival_probability(t: f64, p: &ModelParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain(format!("survival probability needs t >= 0, got {t}")));
    }
    let mean = 0.5 * (p.lambda_plus + p.lambda_minus) * t;
    let half_diff = 0.5 * (p.lambda_plus - p.lambda_minus) * t;
    Ok((-mean).exp() * bessel_i0(half_diff)?)
}

/// Time-0 price `D(0,T) = e^{−rT} Q(T < τ)`.
pub fn bond_price_0(p: &ModelParams) -> Result<PriceResult> {
    let q = survival_probability(p.maturity, p)?;
    Ok(PriceResult::closed((-p.r * p.maturity).exp() * q))
}

/// Pre-default value `c(t)` given `W(t) = w`.
///
/// For `w >= 0`
/// `c = e^{−(r+λ₊)(T−t)}[erf(|w|/√(2(T−t))) + (1/π)∫ₜᵀ e^{(λ₊−λ₋)(T−s)} e^{−w²/(2(s−t))}/√((T−s)(s−t)) ds]`,
/// and for `w < 0` the same with `λ₊` and `λ₋` exchanged. Both branches
/// agree at `w = 0`.
pub fn pre_default_value(t: f64, w: f64, p: &ModelParams) -> Result<f64> {
    pre_default_value_with(t, w, p, &QuadratureSpec::default())
}

pub fn pre_default_value_with(t: f64, w: f64, p: &ModelParams, spec: &QuadratureSpec) -> Result<f64> {
    check_time(t, p)?;
    if !w.is_finite() {
        return Err(Error::NotFinite { field: "w" });
    }
    let h = p.maturity - t;
    if h < MATURITY_EPS {
        return Ok(1.0);
    }
    let diff = p.lambda_plus - p.lambda_minus;
    if diff == 0.0 {
        // erf + integral/π is 1 for every w; skip the quadrature rounding.
        return Ok((-(p.r + p.lambda_plus) * h).exp());
    }
    let (lambda, a) = if w >= 0.0 {
        (p.lambda_plus, diff)
    } else {
        (p.lambda_minus, -diff)
    };
    let x = w.abs() / (2.0 * h).sqrt();
    let integral = singular_integral(a, t, p.maturity, w, spec)?;
    let bracket = erf(x) + integral / PI;
    Ok((-(p.r + lambda) * h).exp() * bracket)
}

/// Monte Carlo estimate of `c(t)` from `W(t) = w`:
/// `e^{−(r+λ₋)(T−t)} E[e^{−(λ₊−λ₋)(γ₊(T)−γ₊(t))}]` over `n` Brownian
/// segments on `[t, T]` with `steps` cells and the same left-endpoint
/// sojourn rule as the path engine. Path `k` uses stream `(seed, k)`.
pub fn pre_default_value_mc(t: f64, w: f64, p: &ModelParams, steps: usize, n: usize, seed: u64) -> Result<PriceResult> {
    check_time(t, p)?;
    if t >= p.maturity {
        return Err(domain(format!("Monte Carlo pre-default value needs t < T, got t={t}")));
    }
    if n < 100 {
        return Err(domain(format!("Monte Carlo needs at least 100 paths, got {n}")));
    }
    if steps == 0 {
        return Err(Error::NotPositive { field: "steps" });
    }
    let h = p.maturity - t;
    let diff = p.lambda_plus - p.lambda_minus;
    let samples = par_map(n, |k| {
        let gp = crate::engine::sojourn_from(w, h, steps, &RngStream::new(seed, k));
        (-diff * gp).exp()
    });
    let est = batch_means(&samples, DEFAULT_BATCHES);
    let pre = (-(p.r + p.lambda_minus) * h).exp();
    Ok(PriceResult {
        value: pre * est.mean,
        std_error: pre * est.se,
        method: PriceMethod::MonteCarlo,
        n_paths: n,
    })
}

/// `e^{−(r+λ)(T−t)}`, the pre-default value under a constant hazard `λ`.
pub fn constant_hazard_curve(t: f64, lambda: f64, p: &ModelParams) -> Result<f64> {
    check_time(t, p)?;
    if !(lambda > 0.0) {
        return Err(Error::NotPositive { field: "lambda" });
    }
    Ok((-(p.r + lambda) * (p.maturity - t)).exp())
}

fn check_time(t: f64, p: &ModelParams) -> Result<()> {
    if !(t >= 0.0 && t <= p.maturity) {
        return Err(domain(format!("time {t} outside [0, {}]", p.maturity)));
    }
    Ok(())
}

/// A pre-default value that depends on `(t, W(t))` only.
///
/// The two-regime closed form is the model itself; the other
/// implementations are candidates used to exercise the arbitrage and
/// detector machinery.
pub trait PreDefaultValue: Send + Sync {
    fn value(&self, t: f64, w: f64) -> Result<f64>;
}

impl<F> PreDefaultValue for F
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    fn value(&self, t: f64, w: f64) -> Result<f64> {
        Ok(self(t, w))
    }
}

/// The two-regime closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRegimeModel {
    pub params: ModelParams,
    pub quadrature: QuadratureSpec,
}

impl TwoRegimeModel {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            quadrature: QuadratureSpec::default(),
        }
    }
}

impl PreDefaultValue for TwoRegimeModel {
    fn value(&self, t: f64, w: f64) -> Result<f64> {
        pre_default_value_with(t, w, &self.params, &self.quadrature)
    }
}

/// Path-independent candidate, linear between `(t, c)` knots.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicCurve {
    knots: Vec<(f64, f64)>,
}

impl DeterministicCurve {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(domain("deterministic curve needs at least one knot"));
        }
        if knots.iter().any(|(t, c)| !t.is_finite() || !c.is_finite()) {
            return Err(Error::NotFinite { field: "curve knot" });
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|k| k[0].0 == k[1].0) {
            return Err(domain("deterministic curve has repeated knot times"));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        if t >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let j = k.partition_point(|&(x, _)| x <= t);
        let (t0, c0) = k[j - 1];
        let (t1, c1) = k[j];
        c0 + (c1 - c0) * (t - t0) / (t1 - t0)
    }
}

impl PreDefaultValue for DeterministicCurve {
    fn value(&self, t: f64, _w: f64) -> Result<f64> {
        Ok(self.at(t))
    }
}

/// Candidate that agrees with `base` except that, from time `from` until
/// maturity, `c` is replaced by `value` whenever `W > level`.
#[derive(Clone)]
pub struct RangeViolation {
    pub base: Arc<dyn PreDefaultValue>,
    pub from: f64,
    pub maturity: f64,
    pub level: f64,
    pub value: f64,
}

impl PreDefaultValue for RangeViolation {
    fn value(&self, t: f64, w: f64) -> Result<f64> {
        if t >= self.from && t < self.maturity && w > self.level {
            Ok(self.value)
        } else {
            self.base.value(t, w)
        }
    }
}
