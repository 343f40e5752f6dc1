//! Gauss–Legendre rules and adaptive panel integration.

use crate::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate<F>(&self, a: f64, b: f64, mut f: F) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        Ok(self.integrate_many(a, b, |x| Ok([f(x)?]))?[0])
    }

    /// Applies the rule to a vector-valued integrand.
    pub fn integrate_many<const K: usize, F>(&self, a: f64, b: f64, mut f: F) -> Result<[f64; K]>
    where
        F: FnMut(f64) -> Result<[f64; K]>,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = [0.0; K];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x)?;
            for c in 0..K {
                sum[c] += w * v[c];
            }
        }
        Ok(sum.map(|s| s * half))
    }
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive integration by recursive panel halving: a panel of relative
/// width `w` is accepted once the rule on the panel and the sum over its two
/// halves agree to `rel_tol·√w` times the magnitude of the whole integral.
pub fn adaptive<F>(rule: &GaussLegendre, a: f64, b: f64, rel_tol: f64, max_levels: u32, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok(adaptive_many(rule, a, b, rel_tol, max_levels, |x| Ok([f(x)?]))?[0])
}

/// [`adaptive`] for a vector-valued integrand; a panel is accepted when
/// every component meets its own tolerance.
pub fn adaptive_many<const K: usize, F>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_levels: u32,
    mut f: F,
) -> Result<[f64; K]>
where
    F: FnMut(f64) -> Result<[f64; K]>,
{
    if a == b {
        return Ok([0.0; K]);
    }
    let whole = rule.integrate_many(a, b, &mut f)?;
    let mut scale = whole.map(f64::abs);
    let mut total = [0.0; K];
    // Explicit stack of (a, b, estimate, level) keeps evaluation order fixed.
    let mut stack = vec![(a, b, whole, 0u32)];
    while let Some((lo, hi, estimate, level)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate_many(lo, mid, &mut f)?;
        let right = rule.integrate_many(mid, hi, &mut f)?;
        let width_fraction = ((hi - lo) / (b - a)).abs().sqrt();
        let mut accepted = true;
        for c in 0..K {
            let refined = left[c] + right[c];
            scale[c] = scale[c].max(refined.abs());
            let gap = (refined - estimate[c]).abs();
            accepted &= gap <= rel_tol * scale[c] * width_fraction || gap <= 1e-300;
        }
        if accepted {
            for c in 0..K {
                total[c] += left[c] + right[c];
            }
        } else if level + 1 >= max_levels {
            return Err(Error::Quadrature {
                a,
                b,
                tol: rel_tol,
                levels: max_levels,
            });
        } else {
            stack.push((mid, hi, right, level + 1));
            stack.push((lo, mid, left, level + 1));
        }
    }
    Ok(total)
}
