//! Composite Gauss-Legendre rules on finite intervals.

use std::f64::consts::PI;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m > 0, "rule needs at least one node");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let dp = m as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// A fixed composite rule: `panels` equal sub-intervals of `[a, b]`, each
/// with an `order`-point Gauss-Legendre rule.
#[derive(Clone, Debug)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let width = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * width * xi);
                weights.push(0.5 * width * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}
