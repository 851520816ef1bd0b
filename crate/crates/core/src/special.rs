//! Special functions and quadrature used by the closed-form prices.
//!
//! Everything here is written from scratch so results do not depend on a
//! platform libm beyond `exp`, `ln`, `cos` and `sqrt`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_2_SQRT_PI, PI};
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{domain, Error, Result};

const FRAC_1_SQRT_PI: f64 = 0.5 * FRAC_2_SQRT_PI;

/// Split between the power series and the continued fraction for `erf`.
const ERF_SPLIT: f64 = 3.0;
/// `erfc(x)` is below the smallest subnormal beyond this point.
const ERFC_UNDERFLOW: f64 = 27.3;
/// `I₀` uses the power series up to this `|x|` and the integral beyond.
const I0_SERIES_LIMIT: f64 = 15.0;
const I0_INTEGRAL_NODES: usize = 512;
const I0_MAX_ARG: f64 = 700.0;
const MAX_DOUBLED_NODES: usize = 1 << 16;
const GRADED_LAYER: f64 = 0.25;
const GRADED_PIECE_NODES: usize = 16;
const MAX_GRADED_PIECE_NODES: usize = 1 << 10;

/// Error function `erf(x) = (2/√π)∫₀ˣ e^{-t²} dt`.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    let v = if ax < ERF_SPLIT {
        erf_series(ax)
    } else if ax > ERFC_UNDERFLOW {
        1.0
    } else {
        1.0 - erfc_continued_fraction(ax)
    };
    v.copysign(x)
}

/// Complementary error function `1 − erf(x)`, accurate in the right tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x < 0.0 {
        2.0 - erfc(-x)
    } else if x < 2.0 {
        1.0 - erf_series(x)
    } else if x > ERFC_UNDERFLOW {
        0.0
    } else {
        erfc_continued_fraction(x)
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

// erf(x) = (2/√π) x e^{-x²} Σ (2x²)^k / (1·3·…·(2k+1)); every term is positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * x * (-x2).exp() * sum
}

// erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))), modified Lentz.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..2000 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI * (-x * x).exp() / f
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series for `|x| <= 15`, the integral `(1/π)∫₀^π e^{x cos θ} dθ`
/// beyond. Arguments with `|x| > 700` are rejected as overflowing.
pub fn bessel_i0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NotFinite { field: "x" });
    }
    let ax = x.abs();
    if ax > I0_MAX_ARG {
        return Err(Error::Overflow(format!("I0({x}) exceeds the floating range")));
    }
    if ax <= I0_SERIES_LIMIT {
        Ok(bessel_i0_series(ax))
    } else {
        Ok(bessel_i0_integral(ax, I0_INTEGRAL_NODES))
    }
}

/// `Σ (x/2)^{2k} / (k!)²` summed to convergence.
pub fn bessel_i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `(1/π)∫₀^π e^{x cos θ} dθ` by Gauss–Legendre in `θ` with `nodes` points.
pub fn bessel_i0_integral(x: f64, nodes: usize) -> f64 {
    let rule = theta_rule(nodes);
    let ax = x.abs();
    // e^{|x|}·∫ e^{-|x|(1-cos θ)} keeps the integrand in [0, 1].
    let s: f64 = rule
        .one_minus_cos
        .iter()
        .zip(&rule.weights)
        .map(|(&omc, &wt)| wt * (-ax * omc).exp())
        .sum();
    ax.exp() * s / PI
}

/// Point count and accuracy target for the endpoint-singular integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    nodes: usize,
    tol: f64,
}

impl QuadratureSpec {
    pub fn new(nodes: usize, tol: f64) -> Result<Self> {
        if nodes < 8 {
            return Err(domain(format!("quadrature needs at least 8 nodes, got {nodes}")));
        }
        if !(tol > 0.0) {
            return Err(Error::NotPositive { field: "tol" });
        }
        Ok(Self { nodes, tol })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes: 256, tol: 1e-10 }
    }
}

/// `∫ₜᵀ e^{a(T−s)} e^{−w²/(2(s−t))} / √((T−s)(s−t)) ds`.
///
/// With `s = t + (T−t)(1−cos θ)/2` the weight `1/√((T−s)(s−t))` cancels
/// against `ds`, leaving `∫₀^π exp(a h (1+cos θ)/2 − w²/(h(1−cos θ))) dθ`
/// with `h = T − t`. That integrand is smooth, so Gauss–Legendre in `θ`
/// converges fast. The node count is doubled from `spec.nodes()` until two
/// successive estimates agree to `spec.tol()` relative.
pub fn singular_integral(a: f64, t: f64, maturity: f64, w: f64, spec: &QuadratureSpec) -> Result<f64> {
    singular_integral_checked(a, t, maturity, w, spec).map(|(v, _)| v)
}

/// As [`singular_integral`], also returning the final node count used.
pub fn singular_integral_checked(a: f64, t: f64, maturity: f64, w: f64, spec: &QuadratureSpec) -> Result<(f64, usize)> {
    if !(a.is_finite() && w.is_finite() && t.is_finite() && maturity.is_finite()) {
        return Err(domain("singular_integral needs finite arguments"));
    }
    if t >= maturity {
        return Err(domain(format!(
            "singular_integral needs t < T, got t={t}, T={maturity}"
        )));
    }
    let h = maturity - t;
    // Near θ = 0 the Gaussian factor is about exp(−(layer/θ)²). A thin layer
    // defeats a single rule, so it gets a mesh graded geometrically from it.
    let layer = w.abs() * (2.0 / h).sqrt();
    if layer > 0.0 && layer < GRADED_LAYER {
        let mut n = GRADED_PIECE_NODES;
        let mut prev = graded_theta_integral(a, h, w, layer, n);
        while n < MAX_GRADED_PIECE_NODES {
            n *= 2;
            let next = graded_theta_integral(a, h, w, layer, n);
            let diff = (next - prev).abs();
            if diff <= spec.tol * next.abs() || diff < f64::MIN_POSITIVE {
                return Ok((next, n));
            }
            prev = next;
        }
        return Ok((prev, n));
    }
    let mut n = spec.nodes;
    let mut prev = theta_integral(a, h, w, n);
    while n < MAX_DOUBLED_NODES {
        n *= 2;
        let next = theta_integral(a, h, w, n);
        let diff = (next - prev).abs();
        if diff <= spec.tol * next.abs() || diff < f64::MIN_POSITIVE {
            return Ok((next, n));
        }
        prev = next;
    }
    Ok((prev, n))
}

// Pieces [0, layer], [layer, 2·layer], ... up to π, `nodes` points each.
fn graded_theta_integral(a: f64, h: f64, w: f64, layer: f64, nodes: usize) -> f64 {
    let rule = gl_rule(nodes);
    let ah = 0.5 * a * h;
    let w2h = w * w / h;
    let mut sum = 0.0;
    let mut lo = 0.0;
    let mut hi = layer;
    loop {
        let top = hi.min(PI);
        let (mid, half) = (0.5 * (lo + top), 0.5 * (top - lo));
        for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let (s, c) = (0.5 * (mid + half * x)).sin_cos();
            sum += half * wt * (2.0 * ah * c * c - w2h / (2.0 * s * s)).exp();
        }
        if top >= PI {
            return sum;
        }
        lo = top;
        hi = 2.0 * top;
    }
}

/// Fixed-node evaluation of the `θ`-substituted integral.
pub fn theta_integral(a: f64, h: f64, w: f64, nodes: usize) -> f64 {
    let rule = theta_rule(nodes);
    let ah = 0.5 * a * h;
    let w2h = w * w / h;
    rule.one_minus_cos
        .iter()
        .zip(&rule.one_plus_cos)
        .zip(&rule.weights)
        .map(|((&omc, &opc), &wt)| {
            let gauss = if w2h == 0.0 { 0.0 } else { w2h / omc };
            wt * (ah * opc - gauss).exp()
        })
        .sum()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp;
            loop {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let z1 = z;
                z = z1 - p / dp;
                if (z - z1).abs() <= 1e-15 {
                    let (_, d) = legendre_with_derivative(n, z);
                    dp = d;
                    break;
                }
            }
            let wt = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = wt;
            weights[n - 1 - i] = wt;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// `∫ₐᵇ f` with this rule.
    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Gauss–Hermite rule for `E[f(Z)]`, `Z ~ N(0,1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    /// Standard-normal abscissae (`√2·x_k`).
    pub points: Vec<f64>,
    /// Probability weights summing to one.
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        // Orthonormal Hermite recurrence (weight e^{-x²}), Newton on the roots.
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-14 {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt_pi = PI.sqrt();
        let points = x.iter().rev().map(|&xi| std::f64::consts::SQRT_2 * xi).collect();
        let weights = w.iter().rev().map(|&wi| wi / sqrt_pi).collect();
        Self { points, weights }
    }

    /// `E[f(mean + sd·Z)]`.
    pub fn expect(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(mean + sd * z))
            .sum()
    }
}

struct ThetaRule {
    one_minus_cos: Vec<f64>,
    one_plus_cos: Vec<f64>,
    weights: Vec<f64>,
}

fn gl_rule(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(rule) = cache.read().unwrap_or_else(|e| e.into_inner()).get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(GaussLegendre::new(n));
    cache
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .entry(n)
        .or_insert(rule)
        .clone()
}

// Gauss–Legendre mapped to θ ∈ [0, π]; 1 ∓ cos θ stored as 2 sin²(θ/2), 2 cos²(θ/2).
fn theta_rule(n: usize) -> Arc<ThetaRule> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<ThetaRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(rule) = cache.read().unwrap_or_else(|e| e.into_inner()).get(&n) {
        return Arc::clone(rule);
    }
    let gl = GaussLegendre::new(n);
    let half = 0.5 * PI;
    let mut one_minus_cos = Vec::with_capacity(n);
    let mut one_plus_cos = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
        let theta = half * (x + 1.0);
        let (s, c) = (0.5 * theta).sin_cos();
        one_minus_cos.push(2.0 * s * s);
        one_plus_cos.push(2.0 * c * c);
        weights.push(half * w);
    }
    let rule = Arc::new(ThetaRule {
        one_minus_cos,
        one_plus_cos,
        weights,
    });
    cache
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .entry(n)
        .or_insert(rule)
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Alternating Maclaurin series, independent of the implementation.
    fn erf_maclaurin(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut pow = x;
        let mut fact = 1.0;
        for k in 0..200 {
            let term = pow / (fact * (2 * k + 1) as f64);
            sum += if k % 2 == 0 { term } else { -term };
            if term.abs() < 1e-20 {
                break;
            }
            pow *= x * x;
            fact *= (k + 1) as f64;
        }
        FRAC_2_SQRT_PI * sum
    }

    // Composite Gauss–Legendre of the defining integral.
    fn erf_quadrature(x: f64) -> f64 {
        let gl = GaussLegendre::new(40);
        let panels = 64;
        let h = x / panels as f64;
        (0..panels)
            .map(|k| gl.integrate(k as f64 * h, (k + 1) as f64 * h, |t| (-t * t).exp()))
            .sum::<f64>()
            * FRAC_2_SQRT_PI
    }

    #[test]
    fn erf_examples() {
        assert_eq!(erf(0.0), 0.0);
        assert_relative_eq!(erf(1.0), 0.8427007929497149, max_relative = 1e-14);
        assert!((erf(6.0) - 1.0).abs() < 1e-12);
        assert_eq!(erf(-1.3), -erf(1.3));
    }

    #[test]
    fn erf_matches_series_oracle() {
        for i in 1..=40 {
            let x = 0.05 * i as f64;
            let rel = (erf(x) - erf_maclaurin(x)).abs() / erf_maclaurin(x);
            assert!(rel <= 1e-12, "x={x} rel={rel}");
        }
    }

    #[test]
    fn erf_matches_quadrature_across_split() {
        for i in 0..=40 {
            let x = 2.0 + 0.1 * i as f64;
            let rel = (erf(x) - erf_quadrature(x)).abs() / erf_quadrature(x);
            assert!(rel <= 1e-12, "x={x} rel={rel}");
        }
    }

    #[test]
    fn erf_is_monotone_on_mesh() {
        let mut prev = erf(-7.0);
        for i in 1..=1400 {
            let x = -7.0 + 0.01 * i as f64;
            let v = erf(x);
            assert!(v >= prev, "x={x}");
            if x.abs() < 5.0 {
                assert!(v > prev, "x={x}");
            }
            assert!(v.abs() <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn erfc_tail_and_normal_cdf() {
        assert_relative_eq!(erfc(3.0), 2.209049699858544e-5, max_relative = 1e-12);
        assert_relative_eq!(erfc(5.0), 1.537_459_794_428_035e-12, max_relative = 1e-12);
        assert_relative_eq!(erfc(1.0), 1.0 - erf(1.0), max_relative = 1e-14);
        assert_relative_eq!(erfc(-2.5), 1.0 + erf(2.5), max_relative = 1e-15);
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, max_relative = 1e-12);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(erf(f64::NEG_INFINITY), -1.0);
        assert!(erfc(27.0) > 0.0);
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        // 10 terms of Σ (x/2)^{2k}/(k!)².
        let mut oracle = 0.0;
        let mut fact = 1.0;
        for k in 0..10 {
            if k > 0 {
                fact *= k as f64;
            }
            oracle += 0.2f64.powi(2 * k) / (fact * fact);
        }
        assert_relative_eq!(bessel_i0(0.4).unwrap(), oracle, max_relative = 1e-15);
        assert!((bessel_i0(0.4).unwrap() - 1.040402).abs() < 5e-7);
        assert_eq!(bessel_i0(-0.4).unwrap(), bessel_i0(0.4).unwrap());
    }

    #[test]
    fn bessel_series_and_integral_agree() {
        let mut worst: f64 = 0.0;
        for i in 0..=400 {
            let x = -10.0 + 0.05 * i as f64;
            let s = bessel_i0_series(x.abs());
            let q = bessel_i0_integral(x, I0_INTEGRAL_NODES);
            worst = worst.max((s - q).abs() / s);
            assert!(s >= 1.0);
        }
        assert!(worst <= 1e-10, "worst={worst}");
        // Either side of the switch.
        for x in [14.0, 15.0, 16.0, 20.0] {
            let rel = (bessel_i0_series(x) - bessel_i0_integral(x, 1024)).abs() / bessel_i0_series(x);
            assert!(rel < 1e-12, "x={x} rel={rel}");
        }
    }

    #[test]
    fn bessel_overflow_is_an_error() {
        assert!(bessel_i0(700.0).unwrap().is_finite());
        assert!(matches!(bessel_i0(701.0), Err(Error::Overflow(_))));
        assert!(bessel_i0(f64::NAN).is_err());
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let gl = GaussLegendre::new(7);
        assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        // Exact through degree 13.
        let v = gl.integrate(0.0, 2.0, |x| x.powi(13));
        assert_relative_eq!(v, 2f64.powi(14) / 14.0, max_relative = 1e-13);
    }

    #[test]
    fn hermite_rule_reproduces_gaussian_moments() {
        let gh = GaussHermite::new(48);
        assert_relative_eq!(gh.weights.iter().sum::<f64>(), 1.0, max_relative = 1e-13);
        assert!(gh.expect(0.0, 1.0, |z| z).abs() < 1e-13);
        assert_relative_eq!(gh.expect(0.0, 1.0, |z| z * z), 1.0, max_relative = 1e-12);
        assert_relative_eq!(gh.expect(0.0, 1.0, |z| z.powi(4)), 3.0, max_relative = 1e-12);
        assert_relative_eq!(
            gh.expect(0.3, 2.0, |x| x.exp()),
            (0.3f64 + 2.0).exp(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn singular_integral_constant_integrand_is_pi() {
        let spec = QuadratureSpec::default();
        for (t, tt) in [(0.0, 1.0), (0.3, 2.0), (1.999, 2.0)] {
            let v = singular_integral(0.0, t, tt, 0.0, &spec).unwrap();
            assert!((v - PI).abs() < 1e-12, "t={t} v={v}");
        }
    }

    // With a = 0 the bracket erf + I/π is identically 1; the pricer
    // short-circuits this case, so the quadrature route is checked here.
    #[test]
    fn zero_rate_gap_bracket_is_one() {
        let spec = QuadratureSpec::default();
        for (t, tt) in [(0.0, 2.0), (1.2, 2.0)] {
            for w in [-2.5, -0.3, 1e-7, 0.8, 3.0] {
                let h: f64 = tt - t;
                let v = erf(f64::abs(w) / (2.0 * h).sqrt()) + singular_integral(0.0, t, tt, w, &spec).unwrap() / PI;
                assert!((v - 1.0).abs() < 1e-12, "t={t} w={w} v={v}");
            }
        }
    }

    #[test]
    fn singular_integral_at_zero_level_is_bessel() {
        let spec = QuadratureSpec::default();
        for (a, t, tt) in [(0.4, 0.0, 2.0), (-0.4, 0.5, 2.0), (1.3, 0.0, 3.0), (-2.0, 1.0, 4.0)] {
            let h: f64 = tt - t;
            let expect = PI * (0.5 * a * h).exp() * bessel_i0(0.5 * a * h).unwrap();
            let v = singular_integral(a, t, tt, 0.0, &spec).unwrap();
            assert_relative_eq!(v, expect, max_relative = 1e-12);
        }
        let v = singular_integral(0.4, 0.0, 2.0, 0.0, &spec).unwrap();
        assert!((v - 4.87606).abs() < 5e-6, "{v}");
    }

    // Independent check in the original variable: split at the midpoint and
    // remove each endpoint singularity with s = t + u² / s = T − u².
    #[test]
    fn singular_integral_matches_direct_quadrature() {
        let spec = QuadratureSpec::default();
        let gl = GaussLegendre::new(200);
        for (a, t, tt, w) in [(0.4, 0.0, 2.0, 0.7), (-0.4, 0.5, 2.0, -1.2), (0.9, 1.0, 1.5, 0.3)] {
            let h: f64 = tt - t;
            let mid = t + 0.5 * h;
            let f = |s: f64| (a * (tt - s)).exp() * (-w * w / (2.0 * (s - t))).exp();
            let left = gl.integrate(0.0, (mid - t).sqrt(), |u| {
                let s = t + u * u;
                2.0 * f(s) / (tt - s).sqrt()
            });
            let right = gl.integrate(0.0, (tt - mid).sqrt(), |u| {
                let s = tt - u * u;
                2.0 * f(s) / (s - t).sqrt()
            });
            let v = singular_integral(a, t, tt, w, &spec).unwrap();
            assert_relative_eq!(v, left + right, max_relative = 1e-9);
        }
    }

    // A level within a thin layer of zero used to exhaust node doubling.
    #[test]
    fn singular_integral_near_zero_level_is_fast_and_continuous() {
        let spec = QuadratureSpec::default();
        let at_zero = singular_integral(0.4, 0.0, 2.0, 0.0, &spec).unwrap();
        for w in [1.5e-7, -1.8e-6, 1e-12] {
            let start = std::time::Instant::now();
            let v = singular_integral(0.4, 0.0, 2.0, w, &spec).unwrap();
            assert!(start.elapsed() < std::time::Duration::from_millis(50));
            assert!((v - at_zero).abs() < 10.0 * w.abs(), "w={w} v={v}");
        }
        // Graded mesh against a plain high-order rule where both are accurate.
        for w in [0.01, 0.05, 0.17, 0.18] {
            let (v, _) = singular_integral_checked(-0.3, 0.5, 2.0, w, &spec).unwrap();
            let plain = theta_integral(-0.3, 1.5, w, 1 << 14);
            assert_relative_eq!(v, plain, max_relative = 1e-10);
        }
    }

    #[test]
    fn singular_integral_vanishes_for_far_level() {
        let spec = QuadratureSpec::default();
        let v = singular_integral(0.0, 0.0, 1.0, 1e3, &spec).unwrap();
        assert!(v.abs() < 1e-12);
        assert!(singular_integral(0.0, 1.0, 1.0, 0.0, &spec).is_err());
        assert!(QuadratureSpec::new(4, 1e-10).is_err());
        assert!(QuadratureSpec::new(16, 0.0).is_err());
    }
}
