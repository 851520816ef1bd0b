//! Oracles shared by the integration tests.

#![allow(dead_code)]

use hazard_core::decomposition::BinaryTree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        assert!(a[col][col].abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let pivot_row = a[col].clone();
                for (x, y) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * y;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `G` on every tree node from the defining equations, solved jointly:
/// `G(root) = 1`, siblings share `G` (previsibility), and
/// `c(k)G(k) = (c(u)G(u) + c(d)G(d))/2` (martingale).
pub fn brute_force_tree_g(c: &BinaryTree) -> Vec<f64> {
    let n = c.len();
    let m = n - 1; // unknowns: G(1..n)
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    let mut row = 0;
    for k in 0..c.internal() {
        let (u, d) = (2 * k + 1, 2 * k + 2);
        a[row][u - 1] = 1.0;
        a[row][d - 1] = -1.0;
        row += 1;
        a[row][u - 1] = -0.5 * c.values[u];
        a[row][d - 1] = -0.5 * c.values[d];
        if k == 0 {
            b[row] = -c.values[0];
        } else {
            a[row][k - 1] = c.values[k];
        }
        row += 1;
    }
    let x = solve_dense(a, b);
    std::iter::once(1.0).chain(x).collect()
}

/// How the parent values of a random tree relate to their children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    /// Every parent strictly below the mean of its children.
    Strict,
    /// As `Strict` except one parent equal to its child mean.
    Flat,
    /// As `Strict` except one parent strictly above its child mean.
    Broken,
}

/// Random positive tree of the given kind, built from the leaves up.
pub fn random_tree(seed: u64, depth: usize, kind: TreeKind) -> BinaryTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (1usize << (depth + 1)) - 1;
    let internal = (1usize << depth) - 1;
    let mut v = vec![0.0; n];
    for x in v.iter_mut().skip(internal) {
        *x = rng.random_range(0.3..1.0);
    }
    let special = rng.random_range(0..internal);
    for k in (0..internal).rev() {
        let mean = 0.5 * (v[2 * k + 1] + v[2 * k + 2]);
        let f = match kind {
            TreeKind::Flat if k == special => 1.0,
            TreeKind::Broken if k == special => rng.random_range(1.01..1.2),
            _ => rng.random_range(0.8..0.999),
        };
        v[k] = mean * f;
    }
    BinaryTree::new(depth, v).unwrap()
}
