//! Discrete multiplicative decomposition `c = M / A`, `G = 1/A`, of a
//! positive process on binomial lattices and binary trees.
//!
//! On a tree every node has its own history, so `G` and `M = c·G` are
//! stored per node. On the recombining lattice a node is reached by many
//! histories and `G` is a path functional, so the lattice stores the
//! one-step factor `ρ = c / E[c_next | node]` per node and `G` along a path
//! is the product of the factors of the nodes it leaves.

use serde::Serialize;

use crate::engine::RngStream;
use crate::error::{domain, Error, Result};
use crate::model::ModelParams;
use crate::pricing::pre_default_value;
use rand::Rng;

/// Martingale residual tolerance for exact decompositions.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Recombining binomial lattice for `W` on `[0, T]` with moves `±√dt`
/// of probability one half. Node `(i, j)` sits at step `i` after `j` up
/// moves, at level `(2j − i)√dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    steps: usize,
    horizon: f64,
}

impl Lattice {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::NotPositive { field: "T" });
        }
        if steps == 0 {
            return Err(Error::NotPositive { field: "steps" });
        }
        Ok(Self { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn w(&self, i: usize, j: usize) -> f64 {
        (2.0 * j as f64 - i as f64) * self.dt().sqrt()
    }

    /// A process with `value(i, j)` at every node.
    pub fn process(&self, mut value: impl FnMut(usize, usize) -> f64) -> LatticeProcess {
        let values = (0..=self.steps)
            .map(|i| (0..=i).map(|j| value(i, j)).collect())
            .collect();
        LatticeProcess { values }
    }

    pub fn try_process(&self, mut value: impl FnMut(usize, usize) -> Result<f64>) -> Result<LatticeProcess> {
        let values = (0..=self.steps)
            .map(|i| (0..=i).map(|j| value(i, j)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(LatticeProcess { values })
    }

    /// Node indices visited by a path given as up/down moves.
    pub fn path_nodes(&self, ups: &[bool]) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(ups.len() + 1);
        let mut j = 0;
        out.push((0, 0));
        for (i, &up) in ups.iter().enumerate() {
            if up {
                j += 1;
            }
            out.push((i + 1, j));
        }
        out
    }
}

/// One real value per lattice node, `values[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeProcess {
    pub values: Vec<Vec<f64>>,
}

impl LatticeProcess {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// `(v(i+1, j) + v(i+1, j+1)) / 2`.
    pub fn child_mean(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.values[i + 1][j] + self.values[i + 1][j + 1])
    }

    fn check_shape(&self, lat: &Lattice) -> Result<()> {
        let ok = self.values.len() == lat.steps + 1 && self.values.iter().enumerate().all(|(i, v)| v.len() == i + 1);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "process does not match a {}-step lattice",
                lat.steps
            )))
        }
    }
}

/// Lattice with the closed-form pre-default value `c(t_i, w_ij)` at each
/// node. The terminal layer is 1.
pub fn lattice_from_model(p: &ModelParams, steps: usize) -> Result<(Lattice, LatticeProcess)> {
    if steps < 2 {
        return Err(domain(format!("lattice needs at least 2 steps, got {steps}")));
    }
    let lat = Lattice::new(p.maturity, steps)?;
    let c = lat.try_process(|i, j| pre_default_value(lat.t(i), lat.w(i, j), p))?;
    Ok((lat, c))
}

/// `e^{−r t_i} v(i, j)`.
pub fn discounted(lat: &Lattice, v: &LatticeProcess, r: f64) -> LatticeProcess {
    lat.process(|i, j| (-r * lat.t(i)).exp() * v.at(i, j))
}

/// Pre-default value computed on the lattice itself by backward induction,
/// `V(i,j) = e^{−(r+λ(w_ij))dt} (V(i+1,j) + V(i+1,j+1))/2`, `V(steps,·) = 1`.
pub fn lattice_price(p: &ModelParams, steps: usize) -> Result<(Lattice, LatticeProcess)> {
    let lat = Lattice::new(p.maturity, steps)?;
    let dt = lat.dt();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); steps + 1];
    values[steps] = vec![1.0; steps + 1];
    for i in (0..steps).rev() {
        let next = &values[i + 1];
        values[i] = (0..=i)
            .map(|j| {
                let disc = (-(p.r + p.hazard(lat.w(i, j))) * dt).exp();
                disc * 0.5 * (next[j] + next[j + 1])
            })
            .collect();
    }
    Ok((lat, LatticeProcess { values }))
}

/// One-step factors `ρ(i, j) = c(i, j) / E[c_{i+1} | (i, j)]` of the
/// multiplicative decomposition on a recombining lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDecomposition {
    /// Defined for `i < steps`.
    pub factor: LatticeProcess,
}

impl LatticeDecomposition {
    /// `G` at each node of the path given by `ups`; `G(0) = 1` and
    /// `G(t_{i+1}) = G(t_i)·ρ(node_i)`.
    pub fn g_along(&self, lat: &Lattice, ups: &[bool]) -> Vec<f64> {
        let nodes = lat.path_nodes(ups);
        let mut g = Vec::with_capacity(nodes.len());
        let mut x = 1.0;
        g.push(x);
        for &(i, j) in &nodes[..nodes.len() - 1] {
            x *= self.factor.at(i, j);
            g.push(x);
        }
        g
    }

    /// `M = c·G` along the path given by `ups`.
    pub fn m_along(&self, lat: &Lattice, c: &LatticeProcess, ups: &[bool]) -> Vec<f64> {
        let g = self.g_along(lat, ups);
        lat.path_nodes(ups)
            .iter()
            .zip(g)
            .map(|(&(i, j), gi)| c.at(i, j) * gi)
            .collect()
    }
}

/// Decomposes a strictly positive lattice process, visiting nodes
/// step by step.
pub fn multiplicative_decompose(lat: &Lattice, c: &LatticeProcess) -> Result<LatticeDecomposition> {
    let order: Vec<(usize, usize)> = (0..lat.steps).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    multiplicative_decompose_ordered(lat, c, &order)
}

/// Same as [`multiplicative_decompose`] with the non-terminal nodes visited
/// in `order`, which must list each of them once.
pub fn multiplicative_decompose_ordered(
    lat: &Lattice,
    c: &LatticeProcess,
    order: &[(usize, usize)],
) -> Result<LatticeDecomposition> {
    c.check_shape(lat)?;
    if let Some(v) = c.values.iter().flatten().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(domain(format!(
            "decomposition needs a strictly positive process, found {v}"
        )));
    }
    let expected = lat.steps * (lat.steps + 1) / 2;
    if order.len() != expected {
        return Err(Error::Shape(format!(
            "node order has {} entries, expected {expected}",
            order.len()
        )));
    }
    let mut factor: Vec<Vec<f64>> = (0..=lat.steps).map(|i| vec![f64::NAN; i + 1]).collect();
    for &(i, j) in order {
        if i >= lat.steps || j > i || !factor[i][j].is_nan() {
            return Err(domain(format!("invalid or repeated node ({i}, {j}) in order")));
        }
        factor[i][j] = c.at(i, j) / c.child_mean(i, j);
    }
    factor[lat.steps].fill(1.0);
    Ok(LatticeDecomposition {
        factor: LatticeProcess { values: factor },
    })
}

/// Outcome of re-checking a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    /// Largest `|M − E[M_next]|` over nodes.
    pub max_residual: f64,
    /// Largest `|c·G − M|` over nodes where `M` is stored separately.
    pub max_product_gap: f64,
    pub g_non_increasing: bool,
    pub g_positive: bool,
    pub g_root_is_one: bool,
    /// Every node has `E[c_next | node] > c`.
    pub c_strict_submartingale: bool,
    /// `G` strictly decreases on every edge.
    pub g_strictly_decreasing: bool,
}

impl DecompositionReport {
    /// All structural checks hold and the strictness equivalence is
    /// consistent.
    pub fn passed(&self) -> bool {
        self.max_residual <= RESIDUAL_TOL
            && self.max_product_gap <= RESIDUAL_TOL
            && self.g_non_increasing
            && self.g_positive
            && self.g_root_is_one
            && self.strictness_consistent()
    }

    pub fn strictness_consistent(&self) -> bool {
        self.c_strict_submartingale == self.g_strictly_decreasing
    }
}

/// Checks a lattice decomposition node by node. The martingale residual is
/// expressed per unit of `G` entering the node, `|ρ·E[c_next] − c|`, which
/// bounds `|M − E[M_next]|` on every path since `G <= 1`.
pub fn verify_decomposition(
    lat: &Lattice,
    c: &LatticeProcess,
    dec: &LatticeDecomposition,
) -> Result<DecompositionReport> {
    c.check_shape(lat)?;
    dec.factor.check_shape(lat)?;
    let mut max_residual: f64 = 0.0;
    let mut non_inc = true;
    let mut positive = true;
    let mut strict_c = true;
    let mut strict_g = true;
    for i in 0..lat.steps {
        for j in 0..=i {
            let rho = dec.factor.at(i, j);
            let mean = c.child_mean(i, j);
            max_residual = max_residual.max((rho * mean - c.at(i, j)).abs());
            non_inc &= rho <= 1.0;
            positive &= rho > 0.0;
            strict_g &= rho < 1.0;
            strict_c &= mean > c.at(i, j);
        }
    }
    Ok(DecompositionReport {
        max_residual,
        max_product_gap: 0.0,
        g_non_increasing: non_inc,
        g_positive: positive,
        g_root_is_one: true,
        c_strict_submartingale: strict_c,
        g_strictly_decreasing: strict_g,
    })
}

/// Path-level re-check: along each path, `M = c·G` must satisfy
/// `M(node) = (c(up)·G_next + c(down)·G_next)/2` with the `G_next` shared
/// by both children, and `G` must start at 1.
pub fn verify_along_paths(lat: &Lattice, c: &LatticeProcess, dec: &LatticeDecomposition, paths: &[Vec<bool>]) -> f64 {
    let mut worst: f64 = 0.0;
    for ups in paths {
        let g = dec.g_along(lat, ups);
        for (k, &(i, j)) in lat.path_nodes(ups)[..ups.len()].iter().enumerate() {
            let m = c.at(i, j) * g[k];
            let m_next = 0.5 * (c.at(i + 1, j) + c.at(i + 1, j + 1)) * g[k + 1];
            worst = worst.max((m - m_next).abs());
        }
    }
    worst
}

/// Random up/down paths through `lat`, path `k` from stream `(seed, k)`.
pub fn sample_lattice_paths(lat: &Lattice, n: usize, seed: u64) -> Vec<Vec<bool>> {
    (0..n as u64)
        .map(|k| {
            let mut rng = RngStream::new(seed, k).gaussian();
            (0..lat.steps).map(|_| rng.random::<bool>()).collect()
        })
        .collect()
}

/// Distance between the decomposed `G` and `e^{−(λ₊−λ₋)γ₊(t)−λ₋t}` along
/// lattice paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalComparison {
    pub steps: usize,
    pub n_paths: usize,
    /// Largest relative deviation over all paths and nodes.
    pub max_rel_deviation: f64,
    /// Relative deviation averaged over paths at `T`.
    pub mean_terminal_deviation: f64,
}

/// `e^{−(λ₊−λ₋)γ₊(t_i)−λ₋t_i}` along a lattice path, with the sojourn
/// accumulated by the left-endpoint rule.
pub fn exponential_survival_along(lat: &Lattice, p: &ModelParams, ups: &[bool]) -> Vec<f64> {
    let dt = lat.dt();
    let diff = p.lambda_plus - p.lambda_minus;
    let nodes = lat.path_nodes(ups);
    let mut count = 0usize;
    let mut out = Vec::with_capacity(nodes.len());
    for (k, &(i, j)) in nodes.iter().enumerate() {
        let t = lat.t(i);
        let gp = if count == k { t } else { count as f64 * dt };
        out.push((-diff * gp - p.lambda_minus * t).exp());
        if lat.w(i, j) >= 0.0 {
            count += 1;
        }
    }
    out
}

/// Decomposes the discounted closed-form `c` on a `steps`-lattice and
/// compares `G` with the exponential sojourn formula along `n_paths`
/// sampled paths.
pub fn lattice_survival_comparison(
    p: &ModelParams,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SurvivalComparison> {
    let (lat, c) = lattice_from_model(p, steps)?;
    let paths = sample_lattice_paths(&lat, n_paths, seed);
    compare_survival(&lat, &c, p, &paths)
}

pub fn compare_survival(
    lat: &Lattice,
    c: &LatticeProcess,
    p: &ModelParams,
    paths: &[Vec<bool>],
) -> Result<SurvivalComparison> {
    let dc = discounted(lat, c, p.r);
    let dec = multiplicative_decompose(lat, &dc)?;
    let mut worst: f64 = 0.0;
    let mut terminal = 0.0;
    for ups in paths {
        let g = dec.g_along(lat, ups);
        let e = exponential_survival_along(lat, p, ups);
        for (a, b) in g.iter().zip(&e) {
            worst = worst.max(((a - b) / b).abs());
        }
        let n = g.len() - 1;
        terminal += ((g[n] - e[n]) / e[n]).abs();
    }
    Ok(SurvivalComparison {
        steps: lat.steps,
        n_paths: paths.len(),
        max_rel_deviation: worst,
        mean_terminal_deviation: terminal / paths.len().max(1) as f64,
    })
}

/// Complete (non-recombining) binary tree stored in heap order: node `k`
/// has children `2k+1` (up) and `2k+2` (down), transition probability one
/// half each.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTree {
    pub depth: usize,
    pub values: Vec<f64>,
}

impl BinaryTree {
    pub fn new(depth: usize, values: Vec<f64>) -> Result<Self> {
        let n = (1usize << (depth + 1)) - 1;
        if values.len() != n {
            return Err(Error::Shape(format!(
                "depth-{depth} tree needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self { depth, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of nodes that have children.
    pub fn internal(&self) -> usize {
        (1usize << self.depth) - 1
    }

    pub fn child_mean(&self, k: usize) -> f64 {
        0.5 * (self.values[2 * k + 1] + self.values[2 * k + 2])
    }

    pub fn parent(k: usize) -> Option<usize> {
        (k > 0).then(|| (k - 1) / 2)
    }
}

/// `M` and `G` per tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDecomposition {
    pub m: Vec<f64>,
    pub g: Vec<f64>,
}

/// Forward recursion `G(root) = 1`, `G(child) = G(k)·c(k)/E[c_child | k]`.
pub fn decompose_tree(c: &BinaryTree) -> Result<TreeDecomposition> {
    if let Some(v) = c.values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(domain(format!(
            "decomposition needs a strictly positive process, found {v}"
        )));
    }
    let mut g = vec![1.0; c.len()];
    for k in 0..c.internal() {
        let next = g[k] * (c.values[k] / c.child_mean(k));
        g[2 * k + 1] = next;
        g[2 * k + 2] = next;
    }
    let m = c.values.iter().zip(&g).map(|(a, b)| a * b).collect();
    Ok(TreeDecomposition { m, g })
}

pub fn verify_tree(c: &BinaryTree, dec: &TreeDecomposition) -> DecompositionReport {
    let mut max_residual: f64 = 0.0;
    let mut non_inc = true;
    let mut strict_g = true;
    let mut strict_c = true;
    for k in 0..c.internal() {
        let (u, d) = (2 * k + 1, 2 * k + 2);
        max_residual = max_residual.max((dec.m[k] - 0.5 * (dec.m[u] + dec.m[d])).abs());
        for ch in [u, d] {
            non_inc &= dec.g[ch] <= dec.g[k];
            strict_g &= dec.g[ch] < dec.g[k];
        }
        strict_c &= c.child_mean(k) > c.values[k];
    }
    let max_product_gap = c
        .values
        .iter()
        .zip(dec.g.iter().zip(&dec.m))
        .map(|(ci, (gi, mi))| (ci * gi - mi).abs())
        .fold(0.0, f64::max);
    DecompositionReport {
        max_residual,
        max_product_gap,
        g_non_increasing: non_inc,
        g_positive: dec.g.iter().all(|&x| x > 0.0),
        g_root_is_one: dec.g[0] == 1.0,
        c_strict_submartingale: strict_c,
        g_strictly_decreasing: strict_g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_levels_and_paths() {
        let lat = Lattice::new(1.0, 4).unwrap();
        assert_eq!(lat.w(0, 0), 0.0);
        assert_eq!(lat.w(2, 1), 0.0);
        assert!((lat.w(4, 4) - 2.0).abs() < 1e-15);
        assert_eq!(
            lat.path_nodes(&[true, false, true, true]),
            vec![(0, 0), (1, 1), (2, 1), (3, 2), (4, 3)]
        );
        assert_eq!(lat.t(4), 1.0);
    }

    #[test]
    fn martingale_input_has_trivial_compensator() {
        let lat = Lattice::new(1.0, 10).unwrap();
        let c = lat.process(|_, _| 1.0);
        let dec = multiplicative_decompose(&lat, &c).unwrap();
        assert!(dec.factor.values.iter().flatten().all(|&x| x == 1.0));
        let rep = verify_decomposition(&lat, &c, &dec).unwrap();
        assert!(rep.passed());
        assert!(!rep.c_strict_submartingale && !rep.g_strictly_decreasing);
    }

    #[test]
    fn deterministic_increasing_input() {
        let lat = Lattice::new(1.0, 6).unwrap();
        let a = |i: usize| 0.5 + 0.05 * i as f64;
        let c = lat.process(|i, _| a(i));
        let dec = multiplicative_decompose(&lat, &c).unwrap();
        let ups = [true, false, false, true, true, false];
        let g = dec.g_along(&lat, &ups);
        let m = dec.m_along(&lat, &c, &ups);
        for i in 0..=6 {
            assert!((g[i] - a(0) / a(i)).abs() < 1e-15);
            assert!((m[i] - a(0)).abs() < 1e-15);
        }
        assert!(verify_decomposition(&lat, &c, &dec).unwrap().passed());
    }

    #[test]
    fn rejects_non_positive_values() {
        let lat = Lattice::new(1.0, 3).unwrap();
        let c = lat.process(|i, j| if (i, j) == (2, 1) { 0.0 } else { 1.0 });
        assert!(multiplicative_decompose(&lat, &c).is_err());
        let short = LatticeProcess {
            values: vec![vec![1.0]],
        };
        assert!(multiplicative_decompose(&lat, &short).is_err());
    }

    #[test]
    fn lattice_price_with_constant_hazard_is_exponential() {
        let p = ModelParams::reference().with_constant_hazard(0.3);
        let (lat, v) = lattice_price(&p, 100).unwrap();
        for i in (0..=100).step_by(7) {
            let target = (-(p.r + 0.3) * (p.maturity - lat.t(i))).exp();
            for j in 0..=i {
                assert!((v.at(i, j) - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tree_recursion_on_hand_example() {
        // c(root)=0.5; children 0.6, 0.7; grandchildren chosen so every
        // node is a strict submartingale.
        let c = BinaryTree::new(2, vec![0.5, 0.6, 0.7, 0.65, 0.7, 0.72, 0.8]).unwrap();
        let dec = decompose_tree(&c).unwrap();
        assert!((dec.g[1] - 0.5 / 0.65).abs() < 1e-15);
        assert_eq!(dec.g[1], dec.g[2]);
        assert!((dec.g[3] - dec.g[1] * 0.6 / 0.675).abs() < 1e-15);
        assert!((dec.g[5] - dec.g[2] * 0.7 / 0.76).abs() < 1e-15);
        let rep = verify_tree(&c, &dec);
        assert!(rep.passed() && rep.c_strict_submartingale, "{rep:?}");
    }
}
