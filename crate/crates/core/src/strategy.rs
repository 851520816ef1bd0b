//! Quasi-simple and BD-simple trading strategies, their value processes,
//! and the constructive arbitrages that expose a mispriced defaultable
//! bond.
//!
//! A quasi-simple strategy trades an admissible Black–Scholes leg (riskless
//! bonds, stock and European claims on `W`) freely, but changes its
//! defaultable bond position only at `s_0 = 0 < s_1 < … < s_N = T`, and
//! stops rebalancing once default has occurred. Legs are represented by
//! their value processes, so a claim is worth its discounted conditional
//! expectation at every time.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::engine::{draw_path, par_map, stock_price, RngStream, TauCoupling};
use crate::error::{domain, Error, Result};
use crate::model::{DefaultTime, ModelParams, Scenario, TimeGrid};
use crate::pricing::PreDefaultValue;
use crate::special::{normal_cdf, GaussLegendre};
use crate::stats::{batch_means, Estimate, DEFAULT_BATCHES};

const TIME_TOL: f64 = 1e-9;

/// Payoff of a European claim as a function of `W` at expiry.
#[derive(Clone)]
pub enum Payoff {
    /// `Φ((x − strike)/width)`, priced in closed form.
    SmoothDigital { strike: f64, width: f64 },
    /// Any bounded function, priced by quadrature.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Payoff {
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Payoff::SmoothDigital { strike, width } => normal_cdf((x - strike) / width),
            Payoff::Custom(f) => f(x),
        }
    }

    /// `E[payoff(w + √h Z)]`.
    pub fn expectation(&self, w: f64, h: f64) -> f64 {
        match self {
            Payoff::SmoothDigital { strike, width } => normal_cdf((w - strike) / (width * width + h).sqrt()),
            Payoff::Custom(f) => normal_expectation(w, h.sqrt(), &**f),
        }
    }
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Payoff::SmoothDigital { strike, width } => f
                .debug_struct("SmoothDigital")
                .field("strike", strike)
                .field("width", width)
                .finish(),
            Payoff::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// `units` of a claim paying `payoff(W(expiry))` at `expiry`.
#[derive(Debug, Clone)]
pub struct ClaimHolding {
    pub units: f64,
    pub expiry: f64,
    pub payoff: Payoff,
}

/// `E[f(mean + sd·Z)]` by Gauss–Legendre on `mean ± 9·sd`, split at zero
/// where payoffs built from the pre-default value have a kink.
fn normal_expectation(mean: f64, sd: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    let rule = RULE.get_or_init(|| GaussLegendre::new(24));
    if sd == 0.0 {
        return f(mean);
    }
    let density = |x: f64| {
        let z = (x - mean) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    let (lo, hi) = (mean - 9.0 * sd, mean + 9.0 * sd);
    let g = |x: f64| f(x) * density(x);
    if lo < 0.0 && hi > 0.0 {
        rule.integrate(lo, 0.0, g) + rule.integrate(0.0, hi, g)
    } else {
        rule.integrate(lo, hi, g)
    }
}

impl ClaimHolding {
    /// Value at `t` given `W(t) = w`, for `t < expiry`.
    pub fn value_before_expiry(&self, t: f64, w: f64, p: &ModelParams) -> f64 {
        let h = self.expiry - t;
        self.units * (-p.r * h).exp() * self.payoff.expectation(w, h)
    }
}

/// Admissible Black–Scholes leg: riskless zero-coupon bonds `B(·,T)`,
/// stock, and European claims on `W`.
#[derive(Debug, Clone, Default)]
pub struct BsLeg {
    pub bonds: f64,
    pub stock: f64,
    pub claims: Vec<ClaimHolding>,
}

impl BsLeg {
    pub fn bonds(units: f64) -> Self {
        Self {
            bonds: units,
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bonds == 0.0 && self.stock == 0.0 && self.claims.iter().all(|c| c.units == 0.0)
    }

    /// Value of everything except the riskless bonds.
    fn risky_value(&self, t: f64, path: &Observed, p: &ModelParams) -> Result<f64> {
        let w = path.w_at(t)?;
        let mut v = self.stock * stock_price(t, w, p);
        for claim in &self.claims {
            v += if t < claim.expiry - TIME_TOL {
                claim.value_before_expiry(t, w, p)
            } else {
                let we = path.w_at(claim.expiry)?;
                claim.units * claim.payoff.at(we) * (p.r * (t - claim.expiry)).exp()
            };
        }
        Ok(v)
    }

    pub fn value(&self, t: f64, path: &Observed, p: &ModelParams) -> Result<f64> {
        Ok(self.bonds * p.riskless_bond(t) + self.risky_value(t, path, p)?)
    }
}

/// Positions held over one period `(s_{n−1}, s_n]`.
#[derive(Debug, Clone, Default)]
pub struct Period {
    pub leg: BsLeg,
    /// Defaultable bond units `y_n`.
    pub defaultable: f64,
}

/// What a strategy may use when choosing the positions of period `n`:
/// values at `s_0, …, s_{n−1}` and the previous period.
pub struct Information<'a> {
    pub n: usize,
    pub time: f64,
    pub w: &'a [f64],
    pub c: &'a [f64],
    pub previous: Option<&'a Period>,
}

pub type Rule = Arc<dyn Fn(&Information) -> Period + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Funding {
    /// Riskless bond holdings are set at each rebalance so the portfolio
    /// value is unchanged (`initial` at time 0).
    SelfFinanced { initial: f64 },
    /// Positions are used exactly as the rule returns them.
    AsSpecified,
}

#[derive(Clone)]
pub struct QuasiSimpleStrategy {
    pub name: String,
    times: Vec<f64>,
    rule: Rule,
    funding: Funding,
}

impl std::fmt::Debug for QuasiSimpleStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuasiSimpleStrategy")
            .field("name", &self.name)
            .field("times", &self.times)
            .field("funding", &self.funding)
            .finish_non_exhaustive()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 || times[0] != 0.0 {
        return Err(domain(
            "rebalance times must start at 0 and contain at least two points",
        ));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain("rebalance times must be strictly increasing"));
    }
    Ok(())
}

impl QuasiSimpleStrategy {
    /// `times` must run from 0 to the bond maturity.
    pub fn new(name: impl Into<String>, times: Vec<f64>, rule: Rule, funding: Funding) -> Result<Self> {
        check_times(&times)?;
        Ok(Self {
            name: name.into(),
            times,
            rule,
            funding,
        })
    }

    /// Self-financed strategy starting from zero capital.
    pub fn zero_cost(name: impl Into<String>, times: Vec<f64>, rule: Rule) -> Result<Self> {
        Self::new(name, times, rule, Funding::SelfFinanced { initial: 0.0 })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn periods(&self) -> usize {
        self.times.len() - 1
    }

    /// Positions of periods `1..=μ` on one path, where
    /// `μ = max{m : s_{m−1} < τ}`.
    pub fn resolve(&self, path: &Observed, p: &ModelParams) -> Result<Resolved> {
        let n_periods = self.periods();
        let mu = (1..=n_periods)
            .rev()
            .find(|&m| path.tau.survives(self.times[m - 1]))
            .unwrap_or(1);
        let idx = self.times.iter().map(|&s| path.index(s)).collect::<Result<Vec<_>>>()?;
        let w: Vec<f64> = idx.iter().map(|&i| path.w[i]).collect();
        let c: Vec<f64> = idx.iter().map(|&i| path.c[i]).collect();
        let mut periods: Vec<Period> = Vec::with_capacity(mu);
        let mut carried = match self.funding {
            Funding::SelfFinanced { initial } => initial,
            Funding::AsSpecified => 0.0,
        };
        for n in 1..=mu {
            let s = self.times[n - 1];
            let info = Information {
                n,
                time: s,
                w: &w[..n],
                c: &c[..n],
                previous: periods.last(),
            };
            let mut period = (self.rule)(&info);
            if let Funding::SelfFinanced { .. } = self.funding {
                let rest = period.leg.risky_value(s, path, p)? + period.defaultable * c[n - 1];
                period.leg.bonds = (carried - rest) / p.riskless_bond(s);
            }
            if n < mu {
                let next = self.times[n];
                carried = period.leg.value(next, path, p)? + period.defaultable * c[n];
            }
            periods.push(period);
        }
        Ok(Resolved {
            times: self.times.clone(),
            periods,
            mu,
        })
    }
}

/// Positions actually held on one path.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub times: Vec<f64>,
    /// Periods `1..=μ`; later periods repeat period `μ`.
    pub periods: Vec<Period>,
    pub mu: usize,
}

impl Resolved {
    /// Period in force at `t`: the `n` with `t ∈ (s_{n−1}, s_n]`, clamped
    /// to `μ`.
    pub fn period_at(&self, t: f64) -> &Period {
        let n = self.times[1..].partition_point(|&s| s < t - TIME_TOL) + 1;
        &self.periods[n.min(self.mu) - 1]
    }

    pub fn value_at(&self, t: f64, path: &Observed, p: &ModelParams) -> Result<f64> {
        let period = self.period_at(t);
        let i = path.index(t)?;
        let d = if path.tau.survives(t) { path.c[i] } else { 0.0 };
        Ok(period.leg.value(t, path, p)? + period.defaultable * d)
    }

    /// `Σ_k U_k(T)1{s_{k−1}<τ≤s_k} + (U_N(T) + y_N c(T))1{s_N<τ}`.
    pub fn terminal_expansion(&self, path: &Observed, p: &ModelParams) -> Result<f64> {
        let t_end = *self.times.last().unwrap();
        let n_periods = self.times.len() - 1;
        let mut v = 0.0;
        for k in 1..=n_periods {
            if path.tau.in_window(self.times[k - 1], self.times[k]) {
                v += self.periods[k.min(self.mu) - 1].leg.value(t_end, path, p)?;
            }
        }
        if path.tau.survives(t_end) {
            let last = &self.periods[n_periods.min(self.mu) - 1];
            let c_end = path.c[path.index(t_end)?];
            v += last.leg.value(t_end, path, p)? + last.defaultable * c_end;
        }
        Ok(v)
    }
}

/// Values of `W` and `c` at a sorted set of times, plus the default time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub c: Vec<f64>,
    pub tau: DefaultTime,
}

impl Observed {
    pub fn from_scenario(scen: &Scenario) -> Self {
        Self {
            times: scen.grid().nodes(),
            w: scen.w.w.clone(),
            c: scen.c.clone(),
            tau: scen.tau,
        }
    }

    /// Observes a path at grid `times`, evaluating `model` only there.
    pub fn at_times(
        grid: &TimeGrid,
        w: &[f64],
        tau: DefaultTime,
        times: &[f64],
        model: &dyn PreDefaultValue,
    ) -> Result<Self> {
        let mut w_obs = Vec::with_capacity(times.len());
        let mut c_obs = Vec::with_capacity(times.len());
        for &t in times {
            let i = grid.index_of(t)?;
            w_obs.push(w[i]);
            c_obs.push(model.value(grid.t(i), w[i])?);
        }
        Ok(Self {
            times: times.to_vec(),
            w: w_obs,
            c: c_obs,
            tau,
        })
    }

    pub fn index(&self, t: f64) -> Result<usize> {
        let i = self.times.partition_point(|&s| s < t - TIME_TOL);
        if i < self.times.len() && (self.times[i] - t).abs() <= TIME_TOL {
            Ok(i)
        } else {
            Err(domain(format!("time {t} is not an observation time")))
        }
    }

    pub fn w_at(&self, t: f64) -> Result<f64> {
        Ok(self.w[self.index(t)?])
    }
}

/// `V(t_i)` at every observation time of `path`.
pub fn value_process_on(strat: &QuasiSimpleStrategy, path: &Observed, p: &ModelParams) -> Result<Vec<f64>> {
    let res = strat.resolve(path, p)?;
    path.times.iter().map(|&t| res.value_at(t, path, p)).collect()
}

/// `V(t_i) = U_{n∧μ}(t_i) + y_{n∧μ}c(t_i)1{t_i<τ}` on every grid node.
pub fn value_process(strat: &QuasiSimpleStrategy, scen: &Scenario, p: &ModelParams) -> Result<Vec<f64>> {
    value_process_on(strat, &Observed::from_scenario(scen), p)
}

pub fn terminal_value(strat: &QuasiSimpleStrategy, path: &Observed, p: &ModelParams) -> Result<f64> {
    let res = strat.resolve(path, p)?;
    res.value_at(*strat.times.last().unwrap(), path, p)
}

/// At every rebalance `s_n` before default, compares the value of the
/// period-`n` portfolio with that of the period-`n+1` portfolio. Returns
/// the largest gap.
pub fn self_financing_gap(strat: &QuasiSimpleStrategy, path: &Observed, p: &ModelParams) -> Result<f64> {
    let res = strat.resolve(path, p)?;
    let mut worst: f64 = 0.0;
    for n in 1..res.mu {
        let s = res.times[n];
        let c = path.c[path.index(s)?];
        let before = &res.periods[n - 1];
        let after = &res.periods[n];
        let vb = before.leg.value(s, path, p)? + before.defaultable * c;
        let va = after.leg.value(s, path, p)? + after.defaultable * c;
        worst = worst.max((vb - va).abs());
    }
    Ok(worst)
}

pub fn check_self_financing(strat: &QuasiSimpleStrategy, scen: &Scenario, p: &ModelParams, tol: f64) -> Result<bool> {
    Ok(self_financing_gap(strat, &Observed::from_scenario(scen), p)? <= tol)
}

/// Claim paying `model(expiry, W(expiry))` at `expiry`.
pub fn pre_default_claim(model: Arc<dyn PreDefaultValue>, expiry: f64, units: f64) -> ClaimHolding {
    ClaimHolding {
        units,
        expiry,
        payoff: Payoff::Custom(Arc::new(move |w| model.value(expiry, w).unwrap_or(f64::NAN))),
    }
}

/// Finite-difference stock delta of a claim, `∂U/∂S = (∂U/∂w)/(σS)`.
/// Central differences with step `1e-4` in `w`; the error is of order
/// `1e-8` relative for smooth payoffs.
pub fn claim_delta(claim: &ClaimHolding, t: f64, w: f64, p: &ModelParams) -> f64 {
    let h = 1e-4;
    let du = (claim.value_before_expiry(t, w + h, p) - claim.value_before_expiry(t, w - h, p)) / (2.0 * h);
    du / (p.sigma * stock_price(t, w, p))
}

/// The arbitrage of the submartingale theorem for a candidate `c`.
///
/// Rebalances at `0, t1, t2, T`. At `t1`, on
/// `A = {c(t1) >= U(t1)}` with `U(t1)` the price of the claim paying
/// `c(t2, W(t2))` at `t2`, it sells one defaultable bond, buys the claim
/// and puts `c(t1) − U(t1)` into riskless bonds. At `t2` the claim pays off
/// and buys back the defaultable bond, leaving only riskless bonds. The
/// terminal value is `c(t2)e^{r(T−t2)}1{t1<τ<=t2} + (c(t1) − U(t1))e^{r(T−t1)}1{t1<τ}`
/// on `A` and zero elsewhere.
pub fn build_theorem_arbitrage(
    t1: f64,
    t2: f64,
    p: &ModelParams,
    model: Arc<dyn PreDefaultValue>,
) -> Result<QuasiSimpleStrategy> {
    if !(0.0 <= t1 && t1 < t2 && t2 <= p.maturity) {
        return Err(domain(format!(
            "arbitrage needs 0 <= t1 < t2 <= T, got t1={t1}, t2={t2}"
        )));
    }
    let mut times = vec![0.0];
    for t in [t1, t2, p.maturity] {
        if t > *times.last().unwrap() {
            times.push(t);
        }
    }
    let params = *p;
    let claim = pre_default_claim(model, t2, 1.0);
    let rule: Rule = Arc::new(move |info: &Information| {
        if (info.time - t1).abs() <= TIME_TOL {
            let w1 = info.w[info.n - 1];
            let c1 = info.c[info.n - 1];
            let u1 = claim.value_before_expiry(t1, w1, &params);
            if c1 >= u1 {
                return Period {
                    leg: BsLeg {
                        claims: vec![claim.clone()],
                        ..BsLeg::default()
                    },
                    defaultable: -1.0,
                };
            }
        }
        // After t2 only riskless bonds remain; funding sets the amount.
        Period::default()
    });
    QuasiSimpleStrategy::zero_cost("theorem-arbitrage", times, rule)
}

/// `k = c(t1) − U(t1)` on the activation event, `None` outside it.
pub fn arbitrage_margin(
    t1: f64,
    t2: f64,
    w1: f64,
    c1: f64,
    p: &ModelParams,
    model: Arc<dyn PreDefaultValue>,
) -> Option<f64> {
    let u = pre_default_claim(model, t2, 1.0).value_before_expiry(t1, w1, p);
    (c1 >= u).then_some(c1 - u)
}

/// Random zero-cost strategy with rebalance times drawn from `slots`
/// (which must contain 0 and `T`), defaultable positions `|y_n| <= 10`
/// depending on the sign of `W(s_{n−1})`, stock holdings `|units| <= 10`
/// and bounded claims on `W` that expire at the next rebalance time.
pub fn random_strategy(index: u64, seed: u64, slots: &[f64]) -> Result<QuasiSimpleStrategy> {
    use rand::Rng;
    let mut rng = RngStream::new(seed, index).gaussian();
    let last = slots.len() - 1;
    let mut times = vec![slots[0]];
    for &s in &slots[1..last] {
        if rng.random_bool(0.5) {
            times.push(s);
        }
    }
    times.push(slots[last]);
    let n_periods = times.len() - 1;
    struct Plan {
        y_up: f64,
        y_down: f64,
        stock: f64,
        claim_units: f64,
        strike: f64,
    }
    let plans: Vec<Plan> = (0..n_periods)
        .map(|_| Plan {
            y_up: rng.random_range(-10.0..10.0),
            y_down: rng.random_range(-10.0..10.0),
            stock: rng.random_range(-2.0..2.0),
            claim_units: if rng.random_bool(0.5) {
                rng.random_range(-5.0..5.0)
            } else {
                0.0
            },
            strike: rng.random_range(-1.0..1.0),
        })
        .collect();
    let expiries: Vec<f64> = times[1..].to_vec();
    let rule: Rule = Arc::new(move |info: &Information| {
        let plan = &plans[info.n - 1];
        let w = info.w[info.n - 1];
        let claims = if plan.claim_units != 0.0 {
            vec![ClaimHolding {
                units: plan.claim_units,
                expiry: expiries[info.n - 1],
                payoff: Payoff::SmoothDigital {
                    strike: plan.strike,
                    width: 1.0,
                },
            }]
        } else {
            Vec::new()
        };
        Period {
            leg: BsLeg {
                bonds: 0.0,
                stock: plan.stock,
                claims,
            },
            defaultable: if w >= 0.0 { plan.y_up } else { plan.y_down },
        }
    });
    QuasiSimpleStrategy::zero_cost(format!("random-{index}"), times, rule)
}

/// Summary of discounted terminal values of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyStats {
    pub name: String,
    /// `e^{−rT}V(T)`.
    pub discounted_terminal: Estimate,
    /// Largest `|V(0)|` seen.
    pub initial_value: f64,
    pub min_terminal: f64,
    pub max_terminal: f64,
    /// Frequency of `V(T) > 1e-10`.
    pub positive: Estimate,
    /// `|mean| <= 4 SE`.
    pub martingale_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryReport {
    pub n: usize,
    pub strategies: Vec<StrategyStats>,
}

impl BatteryReport {
    pub fn all_pass(&self) -> bool {
        self.strategies.iter().all(|s| s.martingale_pass)
    }

    pub fn get(&self, name: &str) -> Option<&StrategyStats> {
        self.strategies.iter().find(|s| s.name == name)
    }
}

/// Terminal and initial values of each strategy on `n` paths drawn under
/// `Q` (default time from the two-regime survival process of `p`), with
/// the defaultable bond priced by `model`. Path `k` uses stream `(seed, k)`.
pub fn simulate_strategies(
    p: &ModelParams,
    model: &dyn PreDefaultValue,
    strategies: &[QuasiSimpleStrategy],
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let grid = TimeGrid::new(p.maturity, steps)?;
    let mut times: Vec<f64> = strategies.iter().flat_map(|s| s.times.iter().copied()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= TIME_TOL);
    let per_path = par_map(n, |k| -> Result<Vec<(f64, f64)>> {
        let draw = draw_path(&RngStream::new(seed, k), p, &grid, TauCoupling::Independent)?;
        let obs = Observed::at_times(&grid, &draw.w.w, draw.tau, &times, model)?;
        strategies
            .iter()
            .map(|s| {
                let res = s.resolve(&obs, p)?;
                Ok((res.value_at(0.0, &obs, p)?, res.value_at(p.maturity, &obs, p)?))
            })
            .collect()
    });
    per_path.into_iter().collect()
}

/// Zero-cost martingale test for each strategy: the mean discounted
/// terminal value must lie within 4 standard errors of 0.
pub fn nqsa_battery(
    p: &ModelParams,
    model: &dyn PreDefaultValue,
    strategies: &[QuasiSimpleStrategy],
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<BatteryReport> {
    let sims = simulate_strategies(p, model, strategies, steps, n, seed)?;
    let disc = p.discount(p.maturity);
    let stats = strategies
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let term: Vec<f64> = sims.iter().map(|v| v[j].1).collect();
            let dterm: Vec<f64> = term.iter().map(|v| disc * v).collect();
            let pos: Vec<f64> = term.iter().map(|&v| if v > 1e-10 { 1.0 } else { 0.0 }).collect();
            let est = batch_means(&dterm, DEFAULT_BATCHES);
            StrategyStats {
                name: s.name.clone(),
                discounted_terminal: est,
                initial_value: sims.iter().map(|v| v[j].0.abs()).fold(0.0, f64::max),
                min_terminal: term.iter().copied().fold(f64::INFINITY, f64::min),
                max_terminal: term.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                positive: batch_means(&pos, DEFAULT_BATCHES),
                martingale_pass: est.z_score(0.0) <= 4.0,
            }
        })
        .collect();
    Ok(BatteryReport { n, strategies: stats })
}

/// What a BD-simple strategy may use at `s_{n−1}`: defaultable bond
/// prices at `s_0, …, s_{n−1}` and whether default has occurred.
pub struct BdInformation<'a> {
    pub n: usize,
    pub time: f64,
    pub d: &'a [f64],
    pub defaulted: bool,
}

/// Returns `(ψ^B, ψ^D)`, the riskless and defaultable bond units.
pub type BdRule = Arc<dyn Fn(&BdInformation) -> (f64, f64) + Send + Sync>;

/// Strategy in riskless and defaultable bonds only, rebalanced at fixed
/// times.
#[derive(Clone)]
pub struct BDSimpleStrategy {
    pub name: String,
    times: Vec<f64>,
    rule: BdRule,
}

impl BDSimpleStrategy {
    pub fn new(name: impl Into<String>, times: Vec<f64>, rule: BdRule) -> Result<Self> {
        check_times(&times)?;
        Ok(Self {
            name: name.into(),
            times,
            rule,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Positions for each period on one path.
    pub fn positions(&self, times: &[f64], d: &[f64], tau: DefaultTime) -> Result<Vec<(f64, f64)>> {
        let path = Observed {
            times: times.to_vec(),
            w: vec![0.0; times.len()],
            c: vec![0.0; times.len()],
            tau,
        };
        let dvals = self
            .times
            .iter()
            .map(|&s| Ok(d[path.index(s)?]))
            .collect::<Result<Vec<_>>>()?;
        Ok((1..self.times.len())
            .map(|n| {
                let s = self.times[n - 1];
                (self.rule)(&BdInformation {
                    n,
                    time: s,
                    d: &dvals[..n],
                    defaulted: !tau.survives(s),
                })
            })
            .collect())
    }
}

/// `V(t) = ψ^B_n B(t,T) + ψ^D_n D(t)` on `t ∈ (s_{n−1}, s_n]`, for every
/// observation time. `d` holds the (possibly faulty) defaultable bond
/// prices at `times`.
pub fn bd_value_process(
    strat: &BDSimpleStrategy,
    times: &[f64],
    d: &[f64],
    tau: DefaultTime,
    p: &ModelParams,
) -> Result<Vec<f64>> {
    if d.len() != times.len() {
        return Err(Error::Shape(format!("{} prices for {} times", d.len(), times.len())));
    }
    let pos = strat.positions(times, d, tau)?;
    Ok(times
        .iter()
        .zip(d)
        .map(|(&t, &di)| {
            let n = strat.times[1..].partition_point(|&s| s < t - TIME_TOL) + 1;
            let (x, y) = pos[n.min(pos.len()) - 1];
            x * p.riskless_bond(t) + y * di
        })
        .collect())
}

/// Largest value jump across rebalance times.
pub fn bd_self_financing_gap(
    strat: &BDSimpleStrategy,
    times: &[f64],
    d: &[f64],
    tau: DefaultTime,
    p: &ModelParams,
) -> Result<f64> {
    let pos = strat.positions(times, d, tau)?;
    let path = Observed {
        times: times.to_vec(),
        w: vec![0.0; times.len()],
        c: vec![0.0; times.len()],
        tau,
    };
    let mut worst: f64 = 0.0;
    for n in 1..pos.len() {
        let s = strat.times[n];
        let di = d[path.index(s)?];
        let b = p.riskless_bond(s);
        let before = pos[n - 1].0 * b + pos[n - 1].1 * di;
        let after = pos[n].0 * b + pos[n].1 * di;
        worst = worst.max((before - after).abs());
    }
    Ok(worst)
}

/// Detector for a non-zero price after default. At `t`, on
/// `A = {D(t) > 0, τ <= t}` it sells one defaultable bond and on
/// `A' = {D(t) < 0, τ <= t}` it buys one, investing the proceeds in
/// riskless bonds. If the price at `T` is zero after default, the terminal
/// value is `|D(t)|e^{r(T−t)}` on `A ∪ A'` and zero elsewhere.
pub fn build_postdefault_detector(t: f64, p: &ModelParams) -> Result<BDSimpleStrategy> {
    if !(t > 0.0 && t < p.maturity) {
        return Err(domain(format!("detector time must lie in (0, T), got {t}")));
    }
    let b = p.riskless_bond(t);
    let rule: BdRule = Arc::new(move |info: &BdInformation| {
        if info.n == 1 || !info.defaulted {
            return (0.0, 0.0);
        }
        let d = info.d[info.n - 1];
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        (sign * d / b, -sign)
    });
    BDSimpleStrategy::new("postdefault-detector", vec![0.0, t, p.maturity], rule)
}

/// Detector for a pre-default value outside `(0, 1)` at `t`. With
/// `B = {c(t) <= 0}` and `B' = {c(t) >= 1}` it holds
/// `−(1_{B'} − 1_B)1{t<τ}` defaultable bonds from `t`, financed in
/// riskless bonds. The terminal value is
/// `c(t)e^{r(T−t)}(1_{B'} − 1_B)1{t<τ} − (1_{B'} − 1_B)D(T)`.
pub fn build_range_detector(t: f64, p: &ModelParams) -> Result<BDSimpleStrategy> {
    if !(t > 0.0 && t < p.maturity) {
        return Err(domain(format!("detector time must lie in (0, T), got {t}")));
    }
    let b = p.riskless_bond(t);
    let rule: BdRule = Arc::new(move |info: &BdInformation| {
        if info.n == 1 || info.defaulted {
            return (0.0, 0.0);
        }
        let c = info.d[info.n - 1];
        let side = if c >= 1.0 {
            1.0
        } else if c <= 0.0 {
            -1.0
        } else {
            0.0
        };
        (side * c / b, -side)
    });
    BDSimpleStrategy::new("range-detector", vec![0.0, t, p.maturity], rule)
}

/// Sets the price to `eps` on `τ <= t_i < T`.
pub fn inject_postdefault_value(times: &[f64], d: &mut [f64], tau: DefaultTime, maturity: f64, eps: f64) {
    for (t, di) in times.iter().zip(d.iter_mut()) {
        if !tau.survives(*t) && *t < maturity {
            *di = eps;
        }
    }
}
