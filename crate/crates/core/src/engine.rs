//! Path generation under the Black–Scholes measure and default-time
//! sampling under the extended measure.
//!
//! Each path owns two ChaCha8 streams derived from `(seed, stream_id)`: one
//! for the Gaussian increments and one for the uniform that fixes `τ`. The
//! default time is obtained by inverse transform, `τ = inf{t : G(t) <= u}`,
//! so that conditionally on the Brownian path `P(τ > t) = G(t)`.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::model::{defaultable_prices, BrownianPath, DefaultTime, ModelParams, Scenario, SurvivalPath, TimeGrid};
use crate::pricing::{PreDefaultValue, TwoRegimeModel};
use crate::special::normal_cdf;

/// Reproducible random source for one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Generator for the Brownian increments.
    pub fn gaussian(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id.wrapping_mul(2));
        rng
    }

    /// Generator for the default-time uniform, disjoint from [`Self::gaussian`].
    pub fn uniform(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id.wrapping_mul(2).wrapping_add(1));
        rng
    }

    /// The uniform on `(0,1)` used to place `τ`.
    pub fn default_uniform(&self) -> f64 {
        self.uniform().sample(Open01)
    }
}

/// Brownian path on `grid` with independent `N(0, dt)` increments.
pub fn simulate_brownian(grid: &TimeGrid, rng: &RngStream) -> BrownianPath {
    let mut g = rng.gaussian();
    let sd = grid.dt().sqrt();
    let mut w = Vec::with_capacity(grid.len());
    let mut x = 0.0;
    w.push(x);
    for _ in 0..grid.steps() {
        let z: f64 = g.sample(StandardNormal);
        x += sd * z;
        w.push(x);
    }
    BrownianPath { grid: *grid, w }
}

/// `S(t) = S₀ exp((r − σ²/2)t + σW(t))`.
pub fn stock_price(t: f64, w: f64, p: &ModelParams) -> f64 {
    p.s0 * ((p.r - 0.5 * p.sigma * p.sigma) * t + p.sigma * w).exp()
}

pub fn stock_path(w: &BrownianPath, p: &ModelParams) -> Vec<f64> {
    w.w.iter()
        .enumerate()
        .map(|(i, &wi)| stock_price(w.grid.t(i), wi, p))
        .collect()
}

/// Time spent at or above zero, left-endpoint rule:
/// `γ₊[i+1] = γ₊[i] + dt·1{w[i] >= 0}`.
pub fn sojourn_plus(w: &BrownianPath) -> Vec<f64> {
    let dt = w.grid.dt();
    let mut out = Vec::with_capacity(w.w.len());
    let mut count = 0usize;
    out.push(0.0);
    for &wi in &w.w[..w.w.len() - 1] {
        if wi >= 0.0 {
            count += 1;
        }
        // Counting whole steps keeps γ₊ exact on paths that never switch.
        out.push(count as f64 * dt);
    }
    let last = out.len() - 1;
    if count == w.grid.steps() {
        out[last] = w.grid.horizon();
    }
    out
}

/// Terminal sojourn above zero of a Brownian segment of length `h` started
/// at `w0`, with `steps` cells and the same left-endpoint rule as
/// [`sojourn_plus`]. Uses the Gaussian sub-stream of `rng`.
pub fn sojourn_from(w0: f64, h: f64, steps: usize, rng: &RngStream) -> f64 {
    let mut g = rng.gaussian();
    let dt = h / steps as f64;
    let sd = dt.sqrt();
    let mut x = w0;
    let mut count = 0usize;
    for _ in 0..steps {
        if x >= 0.0 {
            count += 1;
        }
        let z: f64 = g.sample(StandardNormal);
        x += sd * z;
    }
    if count == steps {
        h
    } else {
        count as f64 * dt
    }
}

/// `G(t_i) = exp(−(λ₊−λ₋)γ₊(t_i) − λ₋t_i)`.
pub fn survival_path(w: &BrownianPath, p: &ModelParams) -> SurvivalPath {
    let gamma_plus = sojourn_plus(w);
    let diff = p.lambda_plus - p.lambda_minus;
    let g = gamma_plus
        .iter()
        .enumerate()
        .map(|(i, &gp)| (-diff * gp - p.lambda_minus * w.grid.t(i)).exp())
        .collect();
    let hazard = w.w.iter().map(|&wi| p.hazard(wi)).collect();
    SurvivalPath {
        grid: w.grid,
        g,
        gamma_plus,
        hazard,
    }
}

/// `τ = inf{t : G(t) <= u}` with `G` interpolated exponentially between
/// nodes (constant hazard on each cell).
pub fn sample_default_time(g: &SurvivalPath, u: f64) -> Result<DefaultTime> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(format!("default uniform must lie in (0,1), got {u}")));
    }
    let n = g.grid.steps();
    if u < g.g[n] {
        return Ok(DefaultTime::BeyondHorizon);
    }
    // g is strictly decreasing from g[0] = 1 > u.
    let j = g.g.partition_point(|&x| x > u);
    if g.g[j] == u {
        return Ok(DefaultTime::InHorizon(g.grid.t(j)));
    }
    let i = j - 1;
    let (lo, hi) = (g.grid.t(i), g.grid.t(j));
    let tau = lo + (g.g[i] / u).ln() / g.hazard[i];
    Ok(DefaultTime::InHorizon(tau.clamp(f64::MIN_POSITIVE.max(lo), hi)))
}

/// How the default-time uniform is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauCoupling {
    /// Fresh uniform from the dedicated sub-stream.
    #[default]
    Independent,
    /// Fault injection: reuses the Gaussian draws, `u = Φ(W(T)/√T)`, which
    /// ties `τ` to the path and breaks the conditional survival law.
    MisWired,
}

/// Brownian path, survival process and default time of one path, without
/// the price arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDraw {
    pub w: BrownianPath,
    pub survival: SurvivalPath,
    pub tau: DefaultTime,
}

impl PathDraw {
    pub fn grid(&self) -> &TimeGrid {
        &self.w.grid
    }

    pub fn w_at(&self, i: usize) -> f64 {
        self.w.w[i]
    }

    pub fn g_at(&self, i: usize) -> f64 {
        self.survival.g[i]
    }
}

pub fn draw_path(rng: &RngStream, p: &ModelParams, grid: &TimeGrid, coupling: TauCoupling) -> Result<PathDraw> {
    let w = simulate_brownian(grid, rng);
    let survival = survival_path(&w, p);
    let u = match coupling {
        TauCoupling::Independent => rng.default_uniform(),
        TauCoupling::MisWired => {
            let z = w.w[grid.steps()] / grid.horizon().sqrt();
            normal_cdf(z).clamp(1e-300, 1.0 - f64::EPSILON)
        }
    };
    let tau = sample_default_time(&survival, u)?;
    Ok(PathDraw { w, survival, tau })
}

/// Full scenario with `c` from the closed-form two-regime price.
pub fn make_scenario(rng: &RngStream, p: &ModelParams, grid: &TimeGrid) -> Result<Scenario> {
    make_scenario_with(rng, p, grid, &TwoRegimeModel::new(*p))
}

/// Full scenario with pre-default values taken from `model`.
pub fn make_scenario_with(
    rng: &RngStream,
    p: &ModelParams,
    grid: &TimeGrid,
    model: &dyn PreDefaultValue,
) -> Result<Scenario> {
    let draw = draw_path(rng, p, grid, TauCoupling::Independent)?;
    scenario_from_draw(draw, p, model)
}

pub fn scenario_from_draw(draw: PathDraw, p: &ModelParams, model: &dyn PreDefaultValue) -> Result<Scenario> {
    let grid = draw.w.grid;
    let s = stock_path(&draw.w, p);
    let c = draw
        .w
        .w
        .iter()
        .enumerate()
        .map(|(i, &wi)| model.value(grid.t(i), wi))
        .collect::<Result<Vec<_>>>()?;
    let d = defaultable_prices(&grid, &c, draw.tau);
    Ok(Scenario {
        w: draw.w,
        survival: draw.survival,
        tau: draw.tau,
        s,
        d,
        c,
    })
}

/// Evaluates `f` for stream ids `0..n` in parallel and returns the results
/// in stream order, so any reduction over them is independent of the
/// number of workers.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::batch_means;

    fn grid() -> TimeGrid {
        TimeGrid::new(2.0, 200).unwrap()
    }

    #[test]
    fn brownian_is_deterministic_per_stream() {
        let g = grid();
        let a = simulate_brownian(&g, &RngStream::new(1, 0));
        let b = simulate_brownian(&g, &RngStream::new(1, 0));
        assert_eq!(a, b);
        assert_eq!(a.w[0], 0.0);
        let c = simulate_brownian(&g, &RngStream::new(1, 1));
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_stream_is_disjoint_from_gaussian_and_grid_independent() {
        let rng = RngStream::new(9, 4);
        let u1 = rng.default_uniform();
        assert!(u1 > 0.0 && u1 < 1.0);
        let p = ModelParams::reference();
        let a = draw_path(&rng, &p, &TimeGrid::new(2.0, 50).unwrap(), TauCoupling::Independent).unwrap();
        let b = draw_path(&rng, &p, &TimeGrid::new(2.0, 51).unwrap(), TauCoupling::Independent).unwrap();
        // Same uniform on both grids, so {τ > T} only moves through G(T).
        assert_eq!(rng.default_uniform(), u1);
        for d in [&a, &b] {
            let last = *d.survival.g.last().unwrap();
            assert_eq!(d.tau == DefaultTime::BeyondHorizon, u1 < last);
        }
        let first: f64 = rng.gaussian().sample(StandardNormal);
        let other: f64 = rng.uniform().sample(StandardNormal);
        assert_ne!(first, other);
    }

    #[test]
    fn stock_on_flat_path_grows_deterministically() {
        let p = ModelParams::reference();
        let g = TimeGrid::new(2.0, 4).unwrap();
        let w = BrownianPath::new(g, vec![0.0; 5]).unwrap();
        let s = stock_path(&w, &p);
        assert_eq!(s[0], p.s0);
        for (i, si) in s.iter().enumerate() {
            let expect = p.s0 * ((p.r - 0.5 * p.sigma * p.sigma) * g.t(i)).exp();
            assert!((si - expect).abs() < 1e-12);
        }
        let p0 = ModelParams { r: 0.0, ..p };
        assert_eq!(stock_price(0.0, 0.0, &p0), p0.s0);
    }

    #[test]
    fn sojourn_conventions() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let above = BrownianPath::new(g, (0..=10).map(|i| i as f64 * 0.1).collect()).unwrap();
        let gp = sojourn_plus(&above);
        for (i, v) in gp.iter().enumerate() {
            assert_eq!(*v, g.t(i));
        }
        let below = BrownianPath::new(g, (0..=10).map(|i| -(i as f64) * 0.1).collect()).unwrap();
        let gp = sojourn_plus(&below);
        assert_eq!(gp[0], 0.0);
        for v in &gp[1..] {
            assert_eq!(*v, g.dt());
        }
    }

    #[test]
    fn survival_reduces_to_exponential() {
        let g = grid();
        let p = ModelParams::reference().with_constant_hazard(0.3);
        let w = simulate_brownian(&g, &RngStream::new(3, 3));
        let s = survival_path(&w, &p);
        for i in 0..g.len() {
            let expect = (-0.3 * g.t(i)).exp();
            assert!((s.g[i] - expect).abs() <= 1e-15 * expect.max(1.0));
            assert!((s.gamma_plus[i] + s.gamma_minus(i) - g.t(i)).abs() < 1e-15);
        }
        let p = ModelParams::reference();
        let up = BrownianPath::new(g, (0..=200).map(|i| i as f64).collect()).unwrap();
        let s = survival_path(&up, &p);
        for i in 0..g.len() {
            let expect = (-p.lambda_plus * g.t(i)).exp();
            assert!((s.g[i] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn survival_is_strictly_decreasing() {
        let p = ModelParams::reference();
        let g = grid();
        for k in 0..20 {
            let s = survival_path(&simulate_brownian(&g, &RngStream::new(5, k)), &p);
            assert_eq!(s.g[0], 1.0);
            assert!(s.g.windows(2).all(|x| x[1] < x[0]));
            assert!(s.gamma_plus.windows(2).all(|x| x[1] >= x[0]));
            assert!(s.g.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn default_time_inversion_is_exact_on_nodes() {
        let g = grid();
        let p = ModelParams::reference().with_constant_hazard(0.4);
        let s = survival_path(&simulate_brownian(&g, &RngStream::new(1, 1)), &p);
        for k in [1usize, 17, 100, 200] {
            let u = (-0.4 * g.t(k)).exp();
            assert_eq!(sample_default_time(&s, u).unwrap(), DefaultTime::InHorizon(g.t(k)));
        }
        // Between nodes the exponential interpolant inverts exactly.
        let t0 = 0.5 * (g.t(10) + g.t(11));
        match sample_default_time(&s, (-0.4 * t0).exp()).unwrap() {
            DefaultTime::InHorizon(tau) => assert!((tau - t0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let below = 0.5 * s.g[200];
        assert_eq!(sample_default_time(&s, below).unwrap(), DefaultTime::BeyondHorizon);
        assert!(sample_default_time(&s, 0.0).is_err());
        assert!(sample_default_time(&s, 1.0).is_err());
    }

    #[test]
    fn scenario_prices_follow_the_indicator() {
        let p = ModelParams::reference();
        let g = TimeGrid::new(2.0, 40).unwrap();
        for k in 0..10 {
            let sc = make_scenario(&RngStream::new(11, k), &p, &g).unwrap();
            for i in 0..g.len() {
                let expect = if sc.tau.survives(g.t(i)) { sc.c[i] } else { 0.0 };
                assert_eq!(sc.d[i].to_bits(), expect.to_bits());
                if g.t(i) < p.maturity {
                    assert!(sc.c[i] > 0.0 && sc.c[i] < 1.0);
                }
            }
            assert_eq!(sc.c[40], 1.0);
            assert_eq!(sc.d[40], if sc.tau.survives(2.0) { 1.0 } else { 0.0 });
            if let Some(first) = sc.d.iter().position(|&x| x == 0.0) {
                assert!(sc.d[first..].iter().all(|&x| x == 0.0));
            }
            let again = make_scenario(&RngStream::new(11, k), &p, &g).unwrap();
            assert_eq!(sc, again);
        }
    }

    #[test]
    fn terminal_brownian_moments() {
        let g = TimeGrid::new(2.0, 20).unwrap();
        let n = 100_000;
        let end: Vec<f64> = par_map(n, |k| *simulate_brownian(&g, &RngStream::new(1, k)).w.last().unwrap());
        let e = batch_means(&end, 50);
        assert!(
            e.mean.abs() < 4.0 * (2.0f64).sqrt() / (n as f64).sqrt(),
            "mean {}",
            e.mean
        );
        let var = end.iter().map(|x| x * x).sum::<f64>() / n as f64 - e.mean * e.mean;
        assert!((var - 2.0).abs() < 0.05 * 2.0, "var {var}");
    }

    #[test]
    fn discounted_stock_is_unbiased() {
        let p = ModelParams::reference();
        let g = TimeGrid::new(2.0, 4).unwrap();
        let xs: Vec<f64> = par_map(100_000, |k| {
            let w = simulate_brownian(&g, &RngStream::new(2, k));
            p.discount(2.0) * stock_path(&w, &p)[4]
        });
        let e = batch_means(&xs, 50);
        assert!(e.z_score(p.s0) < 4.0, "{e:?}");
    }
}
