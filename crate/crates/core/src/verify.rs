//! Statistical checks of the defining identities of the default-time
//! measure, its martingale properties and the strict submartingale
//! property of the discounted pre-default value.
//!
//! Conditional statements are tested through test events: `X` is a
//! martingale on `[t1, t2]` when `E[1_E (X(t2) − X(t1))] = 0` for every `E`
//! in a generating class. Standard errors come from batch means over
//! independent scenarios, so every verdict depends only on the seed, the
//! sample size and the threshold.

use serde::Serialize;

use crate::engine::{draw_path, par_map, stock_price, PathDraw, RngStream, TauCoupling};
use crate::error::{domain, Error, Result};
use crate::model::{ModelParams, TimeGrid};
use crate::pricing::PreDefaultValue;
use crate::special::{normal_cdf, GaussLegendre};
use crate::stats::{batch_means, quantile_buckets, Estimate, DEFAULT_BATCHES};

/// Two-sided threshold in standard errors.
pub const TWO_SIDED_SE: f64 = 4.0;
/// One-sided threshold in standard errors for strictness.
pub const ONE_SIDED_SE: f64 = 2.0;

/// `{W(z_1) ∈ [a_1, b_1], …, W(z_n) ∈ [a_n, b_n]}` with closed boxes;
/// infinite ends are allowed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderEvent {
    times: Vec<f64>,
    boxes: Vec<(f64, f64)>,
}

impl CylinderEvent {
    pub fn new(times: Vec<f64>, boxes: Vec<(f64, f64)>) -> Result<Self> {
        if times.is_empty() || times.len() != boxes.len() {
            return Err(domain("cylinder event needs one box per time and at least one time"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times[0] < 0.0 {
            return Err(domain("cylinder times must be non-negative and strictly increasing"));
        }
        if boxes.iter().any(|(a, b)| !(a < b)) {
            return Err(domain("cylinder boxes must be non-degenerate intervals"));
        }
        Ok(Self { times, boxes })
    }

    /// The whole space, written as a condition at time `t`.
    pub fn full(t: f64) -> Self {
        Self {
            times: vec![t],
            boxes: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn single(t: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![t], vec![(lo, hi)])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn boxes(&self) -> &[(f64, f64)] {
        &self.boxes
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Grid indices of the event times.
    pub fn indices(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        self.times.iter().map(|&t| grid.index_of(t)).collect()
    }

    pub fn contains_at(&self, idx: &[usize], w: &[f64]) -> bool {
        idx.iter().zip(&self.boxes).all(|(&i, &(a, b))| a <= w[i] && w[i] <= b)
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .times
            .iter()
            .zip(&self.boxes)
            .map(|(t, (a, b))| format!("W({t})∈[{a},{b}]"))
            .collect();
        parts.join("&")
    }
}

/// Exact `Q_BS(A)` for events on one or two times.
pub fn cylinder_probability(ev: &CylinderEvent) -> Result<f64> {
    let interval = |lo: f64, hi: f64, mean: f64, sd: f64| normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
    match ev.times.len() {
        1 => {
            let (a, b) = ev.boxes[0];
            let z = ev.times[0];
            if z == 0.0 {
                return Ok(if a <= 0.0 && 0.0 <= b { 1.0 } else { 0.0 });
            }
            Ok(interval(a, b, 0.0, z.sqrt()))
        }
        2 => {
            let (z1, z2) = (ev.times[0], ev.times[1]);
            let (a1, b1) = ev.boxes[0];
            let (a2, b2) = ev.boxes[1];
            let s2 = (z2 - z1).sqrt();
            if z1 == 0.0 {
                return Ok(if a1 <= 0.0 && 0.0 <= b1 {
                    interval(a2, b2, 0.0, s2)
                } else {
                    0.0
                });
            }
            let s1 = z1.sqrt();
            let lo = a1.max(-12.0 * s1);
            let hi = b1.min(12.0 * s1);
            if lo >= hi {
                return Ok(0.0);
            }
            let rule = GaussLegendre::new(96);
            let dens = |x: f64| (-0.5 * (x / s1).powi(2)).exp() / (s1 * (2.0 * std::f64::consts::PI).sqrt());
            // Split the outer range in pieces of at most one sd for accuracy.
            let pieces = ((hi - lo) / s1).ceil().max(1.0) as usize;
            let width = (hi - lo) / pieces as f64;
            Ok((0..pieces)
                .map(|k| {
                    let l = lo + k as f64 * width;
                    rule.integrate(l, l + width, |x| dens(x) * interval(a2, b2, x, s2))
                })
                .sum())
        }
        n => Err(domain(format!(
            "exact cylinder probability supports at most 2 times, got {n}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// How a statistic is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// Pass iff `|statistic| <= threshold`.
    TwoSided,
    /// Pass iff `statistic > threshold`.
    Greater,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub statistic: f64,
    pub se: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub n: usize,
    pub sidedness: Sidedness,
}

impl CheckRecord {
    /// Two-sided check of `est.mean − target` at `k` standard errors.
    pub fn two_sided(name: impl Into<String>, est: Estimate, target: f64, k: f64) -> Self {
        let statistic = est.mean - target;
        let threshold = k * est.se;
        let verdict = if statistic.abs() <= threshold || statistic == 0.0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            name: name.into(),
            statistic,
            se: est.se,
            threshold,
            verdict,
            n: est.n,
            sidedness: Sidedness::TwoSided,
        }
    }

    /// One-sided check that `est.mean` exceeds `k` standard errors.
    pub fn greater(name: impl Into<String>, est: Estimate, k: f64) -> Self {
        let threshold = k * est.se;
        let verdict = if est.mean > threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            name: name.into(),
            statistic: est.mean,
            se: est.se,
            threshold,
            verdict,
            n: est.n,
            sidedness: Sidedness::Greater,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TestReport {
    pub checks: Vec<CheckRecord>,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckRecord::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn extend(&mut self, other: TestReport) {
        self.checks.extend(other.checks);
    }

    pub fn push(&mut self, check: CheckRecord) {
        self.checks.push(check);
    }
}

/// Simulation settings shared by every check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub steps: usize,
    pub n: usize,
    pub seed: u64,
    pub coupling: TauCoupling,
}

impl SimConfig {
    pub fn new(steps: usize, n: usize, seed: u64) -> Self {
        Self {
            steps,
            n,
            seed,
            coupling: TauCoupling::Independent,
        }
    }

    pub fn with_coupling(self, coupling: TauCoupling) -> Self {
        Self { coupling, ..self }
    }

    pub fn grid(&self, p: &ModelParams) -> Result<TimeGrid> {
        TimeGrid::new(p.maturity, self.steps)
    }
}

/// Runs `f` on `cfg.n` independent paths and returns one column of
/// samples per output of `f`, in path order.
pub fn sample_columns<F>(p: &ModelParams, cfg: &SimConfig, width: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&PathDraw) -> Result<Vec<f64>> + Sync + Send,
{
    let grid = cfg.grid(p)?;
    let rows = par_map(cfg.n, |k| {
        let draw = draw_path(&RngStream::new(cfg.seed, k), p, &grid, cfg.coupling)?;
        f(&draw)
    });
    let mut cols = vec![Vec::with_capacity(cfg.n); width];
    for row in rows {
        let row = row?;
        if row.len() != width {
            return Err(Error::Shape(format!(
                "sample row has {} entries, expected {width}",
                row.len()
            )));
        }
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    Ok(cols)
}

fn estimate(col: &[f64]) -> Estimate {
    batch_means(col, DEFAULT_BATCHES)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `Q(A ∩ {s < τ <= t}) = E[1_A (G(s) − G(t))]` and
/// `Q(A ∩ {T < τ}) = E[1_A G(T)]`, each tested as the mean of the
/// per-path difference.
pub fn verify_q_identity(p: &ModelParams, ev: &CylinderEvent, s: f64, t: f64, cfg: &SimConfig) -> Result<TestReport> {
    if !(0.0 <= s && s < t && t <= p.maturity) {
        return Err(domain(format!("identity needs 0 <= s < t <= T, got s={s}, t={t}")));
    }
    let grid = cfg.grid(p)?;
    let idx = ev.indices(&grid)?;
    let (is, it, iend) = (grid.index_of(s)?, grid.index_of(t)?, grid.steps());
    let cols = sample_columns(p, cfg, 4, |d| {
        let a = indicator(ev.contains_at(&idx, &d.w.w));
        let g = &d.survival.g;
        let window = a * indicator(d.tau.in_window(grid.t(is), grid.t(it)));
        let beyond = a * indicator(d.tau.survives(grid.t(iend)));
        Ok(vec![
            window - a * (g[is] - g[it]),
            beyond - a * g[iend],
            window,
            a * (g[is] - g[it]),
        ])
    })?;
    let label = ev.label();
    Ok(TestReport {
        checks: vec![
            CheckRecord::two_sided(
                format!("q_identity[{label}; {s}<tau<={t}]"),
                estimate(&cols[0]),
                0.0,
                TWO_SIDED_SE,
            ),
            CheckRecord::two_sided(
                format!("q_identity[{label}; T<tau]"),
                estimate(&cols[1]),
                0.0,
                TWO_SIDED_SE,
            ),
        ],
    })
}

/// Frequency of `A` along the joint simulation of `(W, τ)` against the
/// Brownian law alone: exact for events on at most two times, otherwise
/// a second, independent Brownian-only sample.
pub fn verify_restriction(p: &ModelParams, ev: &CylinderEvent, cfg: &SimConfig) -> Result<TestReport> {
    let grid = cfg.grid(p)?;
    let idx = ev.indices(&grid)?;
    let cols = sample_columns(p, cfg, 1, |d| {
        // Marginalise τ out explicitly: A = (A ∩ {τ <= T}) ∪ (A ∩ {T < τ}).
        let a = ev.contains_at(&idx, &d.w.w);
        let before = a && !d.tau.survives(p.maturity);
        let after = a && d.tau.survives(p.maturity);
        Ok(vec![indicator(before) + indicator(after)])
    })?;
    let est = estimate(&cols[0]);
    let name = format!("restriction[{}]", ev.label());
    if ev.times.len() <= 2 {
        return Ok(TestReport {
            checks: vec![CheckRecord::two_sided(
                name,
                est,
                cylinder_probability(ev)?,
                TWO_SIDED_SE,
            )],
        });
    }
    let other = SimConfig {
        seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
        ..*cfg
    };
    let cols_bs = sample_columns(p, &other, 1, |d| Ok(vec![indicator(ev.contains_at(&idx, &d.w.w))]))?;
    let bs = estimate(&cols_bs[0]);
    let diff = Estimate {
        mean: est.mean - bs.mean,
        se: (est.se * est.se + bs.se * bs.se).sqrt(),
        n: est.n,
    };
    Ok(TestReport {
        checks: vec![CheckRecord::two_sided(name, diff, 0.0, TWO_SIDED_SE)],
    })
}

/// Buckets paths by the rank of `G(t)` and compares, within each bucket,
/// the survival frequency `1{t<τ}` with the mean of `G(t)`.
pub fn verify_conditional_survival(p: &ModelParams, t: f64, buckets: usize, cfg: &SimConfig) -> Result<TestReport> {
    if !(t > 0.0 && t <= p.maturity) {
        return Err(domain(format!("conditional survival needs t in (0, T], got {t}")));
    }
    if buckets == 0 || buckets > cfg.n {
        return Err(domain(format!("bucket count {buckets} invalid for {} paths", cfg.n)));
    }
    let grid = cfg.grid(p)?;
    let it = grid.index_of(t)?;
    let cols = sample_columns(p, cfg, 2, |d| {
        Ok(vec![d.survival.g[it], indicator(d.tau.survives(grid.t(it)))])
    })?;
    let labels = quantile_buckets(&cols[0], buckets);
    let mut report = TestReport::default();
    for b in 0..buckets {
        let diffs: Vec<f64> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == b)
            .map(|(k, _)| cols[1][k] - cols[0][k])
            .collect();
        report.push(CheckRecord::two_sided(
            format!("conditional_survival[t={t}; bucket {b}]"),
            estimate(&diffs),
            0.0,
            TWO_SIDED_SE,
        ));
    }
    Ok(report)
}

/// Process whose increments are tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleProcess {
    /// `e^{−rt}S(t)` under `Q`.
    DiscountedStock,
    /// `e^{−rt}D(t,T)` under `Q`.
    DiscountedBond,
    /// `e^{−rt}c(t)G(t)` under `Q_BS`.
    DiscountedCG,
    /// `S(t)` without discounting; a negative control.
    UndiscountedStock,
}

impl MartingaleProcess {
    pub fn name(&self) -> &'static str {
        match self {
            MartingaleProcess::DiscountedStock => "discounted_stock",
            MartingaleProcess::DiscountedBond => "discounted_bond",
            MartingaleProcess::DiscountedCG => "discounted_cg",
            MartingaleProcess::UndiscountedStock => "undiscounted_stock",
        }
    }

    fn uses_default_information(&self) -> bool {
        !matches!(self, MartingaleProcess::DiscountedCG)
    }
}

/// `A ∩ {s < τ}`, or the cylinder `A` alone when `survived` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestEvent {
    pub cylinder: CylinderEvent,
    pub survived: Option<f64>,
}

impl TestEvent {
    pub fn label(&self) -> String {
        match self.survived {
            Some(s) => format!("{}&{s}<tau", self.cylinder.label()),
            None => self.cylinder.label(),
        }
    }
}

/// A family of at least 20 cylinder events on times `t1/2` and `t1`,
/// combined with survival conditions at `0`, `t1/2` and `t1` when
/// `with_default` is set.
pub fn standard_events(t1: f64, with_default: bool) -> Result<Vec<TestEvent>> {
    let h = 0.5 * t1;
    let inf = f64::INFINITY;
    let sd = t1.sqrt();
    let cylinders = vec![
        CylinderEvent::full(t1),
        CylinderEvent::single(t1, 0.0, inf)?,
        CylinderEvent::single(t1, -inf, 0.0)?,
        CylinderEvent::single(t1, -0.5 * sd, 0.5 * sd)?,
        CylinderEvent::single(t1, sd, inf)?,
        CylinderEvent::single(t1, -inf, -sd)?,
        CylinderEvent::single(h, 0.0, inf)?,
        CylinderEvent::new(vec![h, t1], vec![(0.0, inf), (0.0, inf)])?,
        CylinderEvent::new(vec![h, t1], vec![(-inf, 0.0), (0.0, inf)])?,
        CylinderEvent::new(vec![h, t1], vec![(0.0, inf), (-inf, 0.0)])?,
        CylinderEvent::new(vec![h, t1], vec![(-inf, 0.0), (-inf, 0.0)])?,
    ];
    if !with_default {
        let mut out: Vec<TestEvent> = cylinders
            .into_iter()
            .map(|c| TestEvent {
                cylinder: c,
                survived: None,
            })
            .collect();
        for (lo, hi) in [
            (-2.0, -1.0),
            (-1.0, -0.5),
            (-0.5, 0.0),
            (0.0, 0.5),
            (0.5, 1.0),
            (1.0, 2.0),
        ] {
            out.push(TestEvent {
                cylinder: CylinderEvent::single(t1, lo * sd, hi * sd)?,
                survived: None,
            });
        }
        for (lo, hi) in [(-inf, -0.5), (-0.5, 0.5), (0.5, inf)] {
            out.push(TestEvent {
                cylinder: CylinderEvent::new(vec![h, t1], vec![(lo * sd, hi * sd), (-inf, inf)])?,
                survived: None,
            });
        }
        return Ok(out);
    }
    let mut out = Vec::new();
    for c in &cylinders {
        out.push(TestEvent {
            cylinder: c.clone(),
            survived: None,
        });
        out.push(TestEvent {
            cylinder: c.clone(),
            survived: Some(t1),
        });
    }
    for c in cylinders.iter().take(4) {
        out.push(TestEvent {
            cylinder: c.clone(),
            survived: Some(h),
        });
    }
    Ok(out)
}

/// Tests `E[1_E (X(t2) − X(t1))] = 0` for every event in `events`.
pub fn verify_martingale(
    p: &ModelParams,
    process: MartingaleProcess,
    model: &dyn PreDefaultValue,
    t1: f64,
    t2: f64,
    events: &[TestEvent],
    cfg: &SimConfig,
) -> Result<TestReport> {
    if !(0.0 <= t1 && t1 < t2 && t2 <= p.maturity) {
        return Err(domain(format!(
            "martingale test needs 0 <= t1 < t2 <= T, got t1={t1}, t2={t2}"
        )));
    }
    let grid = cfg.grid(p)?;
    let (i1, i2) = (grid.index_of(t1)?, grid.index_of(t2)?);
    let (s1, s2) = (grid.t(i1), grid.t(i2));
    let mut prepared = Vec::with_capacity(events.len());
    for ev in events {
        if ev.cylinder.last_time() > t1 + 1e-12 || ev.survived.is_some_and(|s| s > t1 + 1e-12) {
            return Err(domain(format!("test event {} is not known at t1={t1}", ev.label())));
        }
        if ev.survived.is_some() && !process.uses_default_information() {
            return Err(domain(
                "the Brownian-filtration martingale is tested on cylinder events only",
            ));
        }
        prepared.push((&ev.cylinder, ev.cylinder.indices(&grid)?, ev.survived));
    }
    let cols = sample_columns(p, cfg, events.len(), |d| {
        let w = &d.w.w;
        let value = |i: usize, t: f64| -> Result<f64> {
            Ok(match process {
                MartingaleProcess::DiscountedStock => p.discount(t) * stock_price(t, w[i], p),
                MartingaleProcess::UndiscountedStock => stock_price(t, w[i], p),
                MartingaleProcess::DiscountedBond => {
                    if d.tau.survives(t) {
                        p.discount(t) * model.value(t, w[i])?
                    } else {
                        0.0
                    }
                }
                MartingaleProcess::DiscountedCG => p.discount(t) * model.value(t, w[i])? * d.survival.g[i],
            })
        };
        let inc = value(i2, s2)? - value(i1, s1)?;
        Ok(prepared
            .iter()
            .map(|(cyl, idx, surv)| {
                let inside = cyl.contains_at(idx, w) && surv.is_none_or(|s| d.tau.survives(s));
                indicator(inside) * inc
            })
            .collect())
    })?;
    Ok(TestReport {
        checks: events
            .iter()
            .zip(&cols)
            .map(|(ev, col)| {
                CheckRecord::two_sided(
                    format!("martingale[{}; {t1}->{t2}; {}]", process.name(), ev.label()),
                    estimate(col),
                    0.0,
                    TWO_SIDED_SE,
                )
            })
            .collect(),
    })
}

/// For each pair `(t1, t2)` and each bucket of `W(t1)` ranks, tests that
/// `e^{−rt2}c(t2) − e^{−rt1}c(t1)` has a mean above 2 standard errors and
/// that `G(t1) − G(t2)` does too.
pub fn verify_strict_submartingale(
    p: &ModelParams,
    model: &dyn PreDefaultValue,
    pairs: &[(f64, f64)],
    buckets: usize,
    cfg: &SimConfig,
) -> Result<TestReport> {
    if buckets == 0 || buckets > cfg.n {
        return Err(domain(format!("bucket count {buckets} invalid for {} paths", cfg.n)));
    }
    let grid = cfg.grid(p)?;
    let mut nodes = Vec::with_capacity(pairs.len());
    for &(t1, t2) in pairs {
        if !(0.0 <= t1 && t1 < t2 && t2 <= p.maturity) {
            return Err(domain(format!("pair ({t1}, {t2}) must satisfy 0 <= t1 < t2 <= T")));
        }
        nodes.push((grid.index_of(t1)?, grid.index_of(t2)?));
    }
    // Per pair: W(t1), discounted c increment, G decrement.
    let cols = sample_columns(p, cfg, 3 * pairs.len(), |d| {
        let w = &d.w.w;
        let g = &d.survival.g;
        let mut row = Vec::with_capacity(3 * nodes.len());
        for &(i1, i2) in &nodes {
            let (t1, t2) = (grid.t(i1), grid.t(i2));
            let dc = p.discount(t2) * model.value(t2, w[i2])? - p.discount(t1) * model.value(t1, w[i1])?;
            row.extend([w[i1], dc, g[i1] - g[i2]]);
        }
        Ok(row)
    })?;
    let mut report = TestReport::default();
    for (k, &(t1, t2)) in pairs.iter().enumerate() {
        let labels = if t1 == 0.0 {
            // W(0) = 0 everywhere: a single bucket carries all the information.
            vec![0; cfg.n]
        } else {
            quantile_buckets(&cols[3 * k], buckets)
        };
        let used = if t1 == 0.0 { 1 } else { buckets };
        for b in 0..used {
            let pick = |col: &[f64]| -> Vec<f64> {
                labels
                    .iter()
                    .zip(col)
                    .filter(|(&l, _)| l == b)
                    .map(|(_, &v)| v)
                    .collect()
            };
            report.push(CheckRecord::greater(
                format!("strict_submartingale[c; {t1}->{t2}; bucket {b}]"),
                estimate(&pick(&cols[3 * k + 1])),
                ONE_SIDED_SE,
            ));
            report.push(CheckRecord::greater(
                format!("strict_decrease[G; {t1}->{t2}; bucket {b}]"),
                estimate(&pick(&cols[3 * k + 2])),
                ONE_SIDED_SE,
            ));
        }
    }
    Ok(report)
}
