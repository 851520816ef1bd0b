//! Market model types shared by every other module.
//!
//! The market holds a riskless zero-coupon bond `B(t,T) = e^{-r(T-t)}`, a
//! Black–Scholes stock driven by a Brownian motion `W`, and a zero-recovery
//! defaultable bond `D(t,T) = c(t)·1{t<τ}`, where `c` is the pre-default
//! value and `τ` the default time. All simulation happens under the
//! risk-neutral Black–Scholes measure (stock drift `r`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the two-regime hazard model.
///
/// The hazard rate is `lambda_plus` while `W(t) >= 0` and `lambda_minus`
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub sigma: f64,
    pub s0: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

impl ModelParams {
    /// `T = 2`, `r = 0.1`, `λ₊ = 0.5`, `λ₋ = 0.1`, with a stock at
    /// `S₀ = 100`, `σ = 0.2`. The time-0 bond price is 0.4675.
    pub fn reference() -> Self {
        Self {
            r: 0.1,
            maturity: 2.0,
            sigma: 0.2,
            s0: 100.0,
            lambda_plus: 0.5,
            lambda_minus: 0.1,
        }
    }

    /// Same market with a single hazard level `lambda` in both regimes.
    pub fn with_constant_hazard(self, lambda: f64) -> Self {
        Self {
            lambda_plus: lambda,
            lambda_minus: lambda,
            ..self
        }
    }

    /// `B(t,T) = e^{-r(T-t)}`, evaluated in closed form.
    pub fn riskless_bond(&self, t: f64) -> f64 {
        (-self.r * (self.maturity - t)).exp()
    }

    pub fn discount(&self, t: f64) -> f64 {
        (-self.r * t).exp()
    }

    /// Hazard level for a Brownian value `w` (ties at zero go to `λ₊`).
    pub fn hazard(&self, w: f64) -> f64 {
        if w >= 0.0 {
            self.lambda_plus
        } else {
            self.lambda_minus
        }
    }

    /// Lower and upper envelope `e^{-(r+λ₊)(T-t)}`, `e^{-(r+λ₋)(T-t)}` of the
    /// pre-default value, ordered so that `lo <= hi`.
    pub fn envelope(&self, t: f64) -> (f64, f64) {
        let h = self.maturity - t;
        let a = (-(self.r + self.lambda_plus) * h).exp();
        let b = (-(self.r + self.lambda_minus) * h).exp();
        (a.min(b), a.max(b))
    }
}

/// Checks every field invariant and returns the parameters unchanged.
pub fn validate_params(p: ModelParams) -> Result<ModelParams> {
    let fields = [
        ("r", p.r),
        ("T", p.maturity),
        ("sigma", p.sigma),
        ("s0", p.s0),
        ("lambda_plus", p.lambda_plus),
        ("lambda_minus", p.lambda_minus),
    ];
    for (field, v) in fields {
        if !v.is_finite() {
            return Err(Error::NotFinite { field });
        }
    }
    if p.r < 0.0 {
        return Err(Error::Negative { field: "r" });
    }
    for (field, v) in &fields[1..] {
        if *v <= 0.0 {
            return Err(Error::NotPositive { field });
        }
    }
    Ok(p)
}

/// Uniform discretisation of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::NotPositive { field: "T" });
        }
        if steps == 0 {
            return Err(Error::NotPositive { field: "steps" });
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_i = i·dt`; the last node is exactly `T`.
    pub fn t(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.t(i)).collect()
    }

    /// Index of the node equal to `t` (up to `1e-9·dt`).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let x = t / dt;
        let i = x.round();
        if !(0.0..=self.steps as f64).contains(&i) || (x - i).abs() > 1e-9 {
            return Err(Error::OffGrid { t, dt });
        }
        Ok(i as usize)
    }
}

/// Discretised Brownian path with `w[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: TimeGrid,
    pub w: Vec<f64>,
}

impl BrownianPath {
    pub fn new(grid: TimeGrid, w: Vec<f64>) -> Result<Self> {
        if w.len() != grid.len() {
            return Err(Error::Shape(format!(
                "path has {} values for a grid of {} nodes",
                w.len(),
                grid.len()
            )));
        }
        if w[0] != 0.0 {
            return Err(Error::Domain("Brownian path must start at 0".into()));
        }
        Ok(Self { grid, w })
    }
}

/// Survival process `G` and sojourn time `γ₊` along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPath {
    pub grid: TimeGrid,
    pub g: Vec<f64>,
    pub gamma_plus: Vec<f64>,
    /// Hazard in force on `[t_i, t_{i+1})`; the last entry repeats the
    /// previous one and is never used for inversion.
    pub hazard: Vec<f64>,
}

impl SurvivalPath {
    /// Time spent below zero, `γ₋(t_i) = t_i − γ₊(t_i)`.
    pub fn gamma_minus(&self, i: usize) -> f64 {
        self.grid.t(i) - self.gamma_plus[i]
    }

    /// Hazard process `Γ = −log G`.
    pub fn hazard_process(&self, i: usize) -> f64 {
        -self.g[i].ln()
    }
}

/// When the default happens relative to the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DefaultTime {
    /// `τ ∈ (0, T]`.
    InHorizon(f64),
    /// `τ > T`.
    BeyondHorizon,
}

impl DefaultTime {
    /// `1{t < τ}`.
    pub fn survives(&self, t: f64) -> bool {
        match *self {
            DefaultTime::InHorizon(tau) => t < tau,
            DefaultTime::BeyondHorizon => true,
        }
    }

    /// Default indicator `I(t) = 1{τ <= t}`.
    pub fn indicator(&self, t: f64) -> f64 {
        if self.survives(t) {
            0.0
        } else {
            1.0
        }
    }

    pub fn time(&self) -> Option<f64> {
        match *self {
            DefaultTime::InHorizon(tau) => Some(tau),
            DefaultTime::BeyondHorizon => None,
        }
    }

    /// `1{s < τ <= t}`.
    pub fn in_window(&self, s: f64, t: f64) -> bool {
        self.survives(s) && !self.survives(t)
    }
}

/// One joint draw of the Brownian path, default time and prices.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub w: BrownianPath,
    pub survival: SurvivalPath,
    pub tau: DefaultTime,
    /// Stock prices `S(t_i)`.
    pub s: Vec<f64>,
    /// Defaultable bond prices `D(t_i,T) = c(t_i)·1{t_i<τ}`.
    pub d: Vec<f64>,
    /// Pre-default values `c(t_i)`.
    pub c: Vec<f64>,
}

impl Scenario {
    pub fn grid(&self) -> &TimeGrid {
        &self.w.grid
    }
}

/// `D = c·1{t<τ}` on every node of `grid`.
pub fn defaultable_prices(grid: &TimeGrid, c: &[f64], tau: DefaultTime) -> Vec<f64> {
    c.iter()
        .enumerate()
        .map(|(i, &ci)| if tau.survives(grid.t(i)) { ci } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_params_are_valid() {
        let p = ModelParams::reference();
        assert_eq!(validate_params(p), Ok(p));
    }

    #[test]
    fn rejects_zero_hazard() {
        let p = ModelParams {
            lambda_plus: 0.0,
            ..ModelParams::reference()
        };
        let err = validate_params(p).unwrap_err();
        assert_eq!(err.to_string(), "lambda_plus must be > 0");
    }

    #[test]
    fn rejects_negative_maturity() {
        let p = ModelParams {
            maturity: -1.0,
            ..ModelParams::reference()
        };
        assert_eq!(validate_params(p).unwrap_err().to_string(), "T must be > 0");
    }

    #[test]
    fn rejects_negative_rate_and_names_each_field() {
        let base = ModelParams::reference();
        let r = validate_params(ModelParams { r: -0.01, ..base }).unwrap_err();
        assert_eq!(r.to_string(), "r must be >= 0");
        assert!(validate_params(ModelParams { r: 0.0, ..base }).is_ok());
        let cases: [(ModelParams, &str); 4] = [
            (ModelParams { sigma: 0.0, ..base }, "sigma"),
            (ModelParams { s0: -5.0, ..base }, "s0"),
            (
                ModelParams {
                    lambda_minus: -0.1,
                    ..base
                },
                "lambda_minus",
            ),
            (ModelParams { maturity: 0.0, ..base }, "T"),
        ];
        for (p, field) in cases {
            let msg = validate_params(p).unwrap_err().to_string();
            assert!(msg.starts_with(field), "{msg}");
        }
        let nan = validate_params(ModelParams {
            sigma: f64::NAN,
            ..base
        });
        assert_eq!(nan, Err(Error::NotFinite { field: "sigma" }));
    }

    #[test]
    fn grid_ends_exactly_at_horizon() {
        let g = TimeGrid::new(2.0, 3).unwrap();
        let nodes = g.nodes();
        assert_eq!(nodes.len(), 4);
        assert_eq!(*nodes.last().unwrap(), 2.0);
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        let g = TimeGrid::new(0.7, 2000).unwrap();
        assert_eq!(g.t(2000), 0.7);
        assert_eq!(g.index_of(0.35).unwrap(), 1000);
        assert!(g.index_of(0.35 + 1e-5).is_err());
        assert!(g.index_of(0.8).is_err());
    }

    #[test]
    fn default_time_indicator_is_right_continuous() {
        let tau = DefaultTime::InHorizon(1.0);
        assert!(tau.survives(0.999));
        assert!(!tau.survives(1.0));
        assert_eq!(tau.indicator(1.0), 1.0);
        assert!(tau.in_window(0.5, 1.0));
        assert!(!tau.in_window(1.0, 1.5));
        assert!(DefaultTime::BeyondHorizon.survives(1e9));
    }

    #[test]
    fn envelope_is_ordered_and_meets_at_maturity() {
        let p = ModelParams::reference();
        let (lo, hi) = p.envelope(0.0);
        assert!((lo - (-1.2f64).exp()).abs() < 1e-15);
        assert!((hi - (-0.4f64).exp()).abs() < 1e-15);
        assert_eq!(p.envelope(2.0), (1.0, 1.0));
    }
}
