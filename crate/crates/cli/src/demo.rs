//! `demo-arbitrage`: runs the strategy matching a broken price process
//! and summarises its terminal values.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use hazard_core::engine::{draw_path, par_map, RngStream, TauCoupling};
use hazard_core::pricing::DeterministicCurve;
use hazard_core::stats::{batch_means, DEFAULT_BATCHES};
use hazard_core::strategy::{
    bd_value_process, build_postdefault_detector, build_range_detector, build_theorem_arbitrage, nqsa_battery,
    random_strategy, BDSimpleStrategy, Observed, QuasiSimpleStrategy,
};
use hazard_core::{survival_probability, DefaultTime, ModelParams, PreDefaultValue, TimeGrid, TwoRegimeModel};

use crate::config::RunConfig;
use crate::output::{io_err, num, open};
use crate::{Broken, CliError};

pub const CSV_HEADER: &str = "strategy,path_id,t,value";

/// Post-default price injected by the `postdefault_value` demo.
const POSTDEFAULT_EPS: f64 = 0.05;
/// Pre-default value used by the `range_violation` demo on survival.
const RANGE_VALUE: f64 = 1.2;
const GAIN_TOL: f64 = 1e-10;
const RANDOM_STRATEGIES: u64 = 20;

/// One path of a BD-simple strategy rebalanced at `0, t, T`.
pub struct BdRow {
    pub values: [f64; 3],
    pub tau: DefaultTime,
}

impl BdRow {
    pub fn v0(&self) -> f64 {
        self.values[0]
    }

    pub fn vt(&self) -> f64 {
        self.values[2]
    }
}

/// Runs `strat` on `n` paths. `price_at_t(τ, W(t), D(t))` returns the
/// price used at `t`, where `D(t)` is the correct one; the price at `0`
/// is `c(0)` and at `T` it is `1{T<τ}`.
pub fn run_bd(
    p: &ModelParams,
    cfg: &RunConfig,
    strat: &BDSimpleStrategy,
    t: f64,
    n: usize,
    price_at_t: impl Fn(DefaultTime, f64, f64) -> f64 + Sync + Send,
) -> Result<Vec<BdRow>, CliError> {
    let grid = TimeGrid::new(p.maturity, cfg.steps)?;
    let it = grid.index_of(t)?;
    let model = TwoRegimeModel::new(*p);
    let c0 = model.value(0.0, 0.0)?;
    let times = [0.0, grid.t(it), p.maturity];
    let rows = par_map(n, |k| -> Result<BdRow, CliError> {
        let draw = draw_path(&RngStream::new(cfg.seed, k), p, &grid, TauCoupling::Independent)?;
        let wt = draw.w.w[it];
        let dt = if draw.tau.survives(times[1]) {
            model.value(times[1], wt)?
        } else {
            0.0
        };
        let at_maturity = if draw.tau.survives(p.maturity) { 1.0 } else { 0.0 };
        let d = [c0, price_at_t(draw.tau, wt, dt), at_maturity];
        let v = bd_value_process(strat, &times, &d, draw.tau, p)?;
        Ok(BdRow {
            values: [v[0], v[1], v[2]],
            tau: draw.tau,
        })
    });
    rows.into_iter().collect()
}

/// `V` at the rebalance times of `strat` (and `T`) on path `k`.
fn qss_values(
    p: &ModelParams,
    cfg: &RunConfig,
    grid: &TimeGrid,
    strat: &QuasiSimpleStrategy,
    model: &dyn PreDefaultValue,
    k: u64,
) -> Result<Vec<(f64, f64)>, CliError> {
    let draw = draw_path(&RngStream::new(cfg.seed, k), p, grid, TauCoupling::Independent)?;
    let obs = Observed::at_times(grid, &draw.w.w, draw.tau, strat.times(), model)?;
    let res = strat.resolve(&obs, p)?;
    let mut out = Vec::with_capacity(obs.times.len());
    for &t in &obs.times {
        out.push((t, res.value_at(t, &obs, p)?));
    }
    Ok(out)
}

struct Summary {
    v0: f64,
    min: f64,
    mean: f64,
    se: f64,
    positive: f64,
}

fn summarize(v0: impl Iterator<Item = f64>, vt: &[f64]) -> Summary {
    let est = batch_means(vt, DEFAULT_BATCHES);
    Summary {
        v0: v0.map(f64::abs).fold(0.0, f64::max),
        min: vt.iter().copied().fold(f64::INFINITY, f64::min),
        mean: est.mean,
        se: est.se,
        positive: vt.iter().filter(|&&v| v > GAIN_TOL).count() as f64 / vt.len() as f64,
    }
}

impl Summary {
    fn print(&self) {
        println!("  max |V(0)|       {:.3e}", self.v0);
        println!("  min V(T)         {:.6e}", self.min);
        println!("  mean V(T)        {:.6e} (SE {:.2e})", self.mean, self.se);
        println!("  P(V(T) > 0)      {:.4}", self.positive);
    }

    /// Zero cost, no loss, strictly positive gain with positive frequency.
    fn is_arbitrage(&self) -> bool {
        self.v0 <= GAIN_TOL && self.min >= -GAIN_TOL && self.positive > 0.0
    }
}

type CsvRows = Vec<(String, u64, Vec<(f64, f64)>)>;

fn write_csv(out: Option<&Path>, rows: &CsvRows) -> Result<(), CliError> {
    let Some(path) = out else { return Ok(()) };
    let mut w = open(Some(path))?;
    writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
    for (name, k, vals) in rows {
        for &(t, v) in vals {
            writeln!(w, "{name},{k},{},{}", num(t), num(v)).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    println!("value paths written to {}", path.display());
    Ok(())
}

pub fn run(cfg: &RunConfig, broken: Option<Broken>, count: usize, out: Option<&Path>) -> Result<u8, CliError> {
    let p = cfg.params;
    let grid = TimeGrid::new(p.maturity, cfg.steps)?;
    let n = grid.steps();
    let (t1, t2) = (grid.t(n / 4), grid.t(n / 2));
    let export = count.min(cfg.n_paths) as u64;
    match broken {
        None => correct_model(cfg, &grid, t1, t2, export, out),
        Some(Broken::DecreasingC) => decreasing_c(cfg, &grid, t1, t2, export, out),
        Some(Broken::PostdefaultValue) => {
            let strat = build_postdefault_detector(t2, &p)?;
            println!("Broken model: after default the bond still trades at {POSTDEFAULT_EPS} instead of 0.");
            println!("Strategy: at t = {t2}, if default has happened and the price is positive, sell one");
            println!("defaultable bond and hold the proceeds in riskless bonds; the short position costs");
            println!("nothing to close at T because the bond pays 0.");
            let rows = run_bd(&p, cfg, &strat, t2, cfg.n_paths, |tau, _, d| {
                if tau.survives(t2) {
                    d
                } else {
                    POSTDEFAULT_EPS
                }
            })?;
            let gain = POSTDEFAULT_EPS * (p.r * (p.maturity - t2)).exp();
            println!("Expected: V(T) in {{0, {gain:.6}}} (= {POSTDEFAULT_EPS}·e^(r(T-t))), positive iff tau <= t.");
            finish_bd(&strat, &rows, 1.0 - survival_probability(t2, &p)?, export, out)
        }
        Some(Broken::RangeViolation) => {
            let strat = build_range_detector(t2, &p)?;
            println!("Broken model: before default the bond trades at {RANGE_VALUE} from t = {t2}, above");
            println!("the riskless bond price and above 1.");
            println!("Strategy: at t = {t2}, if no default and c(t) >= 1, sell one defaultable bond and");
            println!("hold the proceeds in riskless bonds until T.");
            let rows = run_bd(&p, cfg, &strat, t2, cfg.n_paths, |tau, _, _| {
                if tau.survives(t2) {
                    RANGE_VALUE
                } else {
                    0.0
                }
            })?;
            finish_bd(&strat, &rows, survival_probability(t2, &p)?, export, out)
        }
    }
}

fn finish_bd(
    strat: &BDSimpleStrategy,
    rows: &[BdRow],
    expected: f64,
    export: u64,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let vt: Vec<f64> = rows.iter().map(|r| r.vt()).collect();
    let s = summarize(rows.iter().map(|r| r.v0()), &vt);
    println!("Result over {} paths:", rows.len());
    s.print();
    println!("  expected P(V(T) > 0) = {expected:.4}");
    let csv: CsvRows = rows
        .iter()
        .take(export as usize)
        .enumerate()
        .map(|(k, r)| {
            (
                strat.name.clone(),
                k as u64,
                strat.times().iter().copied().zip(r.values).collect(),
            )
        })
        .collect();
    write_csv(out, &csv)?;
    report_arbitrage(&s)
}

fn report_arbitrage(s: &Summary) -> Result<u8, CliError> {
    if s.is_arbitrage() {
        println!("Arbitrage: zero initial cost, V(T) >= 0 on every path and V(T) > 0 with positive frequency.");
        Ok(0)
    } else {
        println!("No arbitrage demonstrated.");
        Ok(1)
    }
}

fn decreasing_c(
    cfg: &RunConfig,
    grid: &TimeGrid,
    t1: f64,
    t2: f64,
    export: u64,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let p = cfg.params;
    let curve = DeterministicCurve::new(vec![(0.0, 0.85), (t1, 0.9), (t2, 0.8), (p.maturity, 1.0)])?;
    let model: Arc<dyn PreDefaultValue> = Arc::new(curve);
    let strat = build_theorem_arbitrage(t1, t2, &p, model.clone())?;
    println!("Broken model: the pre-default value is deterministic and falls from 0.9 at t1 = {t1}");
    println!("to 0.8 at t2 = {t2}, so the discounted price is not a strict submartingale.");
    println!("Strategy: at t1 sell one defaultable bond, buy the claim paying c(t2) at t2 and put the");
    println!("difference in riskless bonds; at t2 the claim buys the bond back.");
    let paths = par_map(cfg.n_paths, |k| qss_values(&p, cfg, grid, &strat, model.as_ref(), k));
    let paths: Vec<Vec<(f64, f64)>> = paths.into_iter().collect::<Result<_, _>>()?;
    let vt: Vec<f64> = paths.iter().map(|v| v[v.len() - 1].1).collect();
    let s = summarize(paths.iter().map(|v| v[0].1), &vt);
    println!("Result over {} paths:", paths.len());
    s.print();
    println!(
        "  expected P(V(T) > 0) = Q(t1 < tau) = {:.4}",
        survival_probability(t1, &p)?
    );
    let csv: CsvRows = paths
        .into_iter()
        .take(export as usize)
        .enumerate()
        .map(|(k, v)| (strat.name.clone(), k as u64, v))
        .collect();
    write_csv(out, &csv)?;
    report_arbitrage(&s)
}

fn correct_model(
    cfg: &RunConfig,
    grid: &TimeGrid,
    t1: f64,
    t2: f64,
    export: u64,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let p = cfg.params;
    let model: Arc<dyn PreDefaultValue> = Arc::new(TwoRegimeModel::new(p));
    let n = grid.steps();
    let slots: Vec<f64> = (0..=8).map(|i| grid.t(i * n / 8)).collect();
    let mut strategies = (0..RANDOM_STRATEGIES)
        .map(|i| random_strategy(i, cfg.seed, &slots))
        .collect::<Result<Vec<_>, _>>()?;
    strategies.push(build_theorem_arbitrage(t1, t2, &p, model.clone())?);
    println!(
        "Correct model: {} zero-cost strategies (random holdings of stock, riskless and",
        strategies.len()
    );
    println!("defaultable bonds, plus the submartingale arbitrage at t1 = {t1}, t2 = {t2}).");
    let battery = nqsa_battery(&p, model.as_ref(), &strategies, cfg.steps, cfg.n_paths, cfg.seed)?;
    let mut found = false;
    for s in &battery.strategies {
        let z = s.discounted_terminal.z_score(0.0);
        let arb = s.initial_value <= GAIN_TOL && s.min_terminal >= -GAIN_TOL && s.positive.mean > 0.0;
        found |= arb || !s.martingale_pass;
        println!(
            "  {:<20} mean e^(-rT)V(T) {:+.3e} (SE {:.2e}, |z| {z:.2}), min V(T) {:+.3e}, P(V(T)>0) {:.4}",
            s.name, s.discounted_terminal.mean, s.discounted_terminal.se, s.min_terminal, s.positive.mean
        );
    }
    let csv: CsvRows = if out.is_some() {
        let mut rows = Vec::new();
        for strat in &strategies {
            for k in 0..export {
                rows.push((
                    strat.name.clone(),
                    k,
                    qss_values(&p, cfg, grid, strat, model.as_ref(), k)?,
                ));
            }
        }
        rows
    } else {
        Vec::new()
    };
    write_csv(out, &csv)?;
    if found {
        println!("A strategy deviates from zero mean or gains without risk: arbitrage found.");
        Ok(1)
    } else {
        println!("All discounted terminal values are consistent with zero mean: no arbitrage found.");
        Ok(0)
    }
}
