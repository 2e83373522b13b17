//! One-dimensional quadrature building blocks: Gauss-Legendre rules, composite
//! panel rules, adaptive bisection and barycentric interpolation.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// ordered by increasing node.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
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
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
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

/// A Gauss-Legendre rule mapped to `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn gauss(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        Self::from_reference(&x, &w, a, b)
    }

    pub fn from_reference(x: &[f64], w: &[f64], a: f64, b: f64) -> Self {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        Self {
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|v| half * v).collect(),
        }
    }

    /// Composite rule: `n` Gauss points on each interval between consecutive breakpoints.
    pub fn composite(n: usize, breaks: &[f64]) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut nodes = Vec::with_capacity(n * breaks.len());
        let mut weights = Vec::with_capacity(n * breaks.len());
        for pair in breaks.windows(2) {
            if pair[1] > pair[0] {
                let r = Self::from_reference(&x, &w, pair[0], pair[1]);
                nodes.extend(r.nodes);
                weights.extend(r.weights);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Uniformly spaced breakpoints on `[a, b]` with spacing at most `h`, always
/// including every point of `extra` that falls strictly inside.
pub fn breakpoints(a: f64, b: f64, h: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(extra.iter().copied().filter(|&e| e > a && e < b));
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut out = vec![pts[0]];
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let pieces = (len / h).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(w[0] + len * k as f64 / pieces as f64);
        }
    }
    out
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Globally adaptive Gauss-Legendre bisection. The interval with the largest
/// error estimate (10-point rule against the sum of its halves) is split until
/// the summed estimate drops below `max(rel_tol * int |f|, abs_tol)` or the
/// interval budget is spent.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Adaptive {
    const START: usize = 4;
    const MAX_INTERVALS: usize = 4000;
    let (x, w) = gauss_legendre(10);
    let single = |lo: f64, hi: f64| -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        x.iter().zip(&w).map(|(t, wt)| wt * f(mid + half * t)).sum::<f64>() * half
    };
    let len = b - a;
    if len == 0.0 {
        return Adaptive { value: 0.0, error: 0.0, converged: true };
    }
    // ((lo, hi, refined value, error estimate), (left half, right half))
    let split = |lo: f64, hi: f64, whole: f64| {
        let mid = 0.5 * (lo + hi);
        let (l, r) = (single(lo, mid), single(mid, hi));
        let refined = l + r;
        let err = (refined - whole).abs();
        ((lo, hi, refined, if err.is_finite() { err } else { f64::INFINITY }), (l, r))
    };
    let mut parts = Vec::with_capacity(MAX_INTERVALS);
    for k in 0..START {
        let lo = a + len * k as f64 / START as f64;
        let hi = a + len * (k + 1) as f64 / START as f64;
        parts.push(split(lo, hi, single(lo, hi)));
    }
    loop {
        let value: f64 = parts.iter().map(|(p, _)| p.2).sum();
        let l1: f64 = parts.iter().map(|(p, _)| p.2.abs()).sum();
        let error: f64 = parts.iter().map(|(p, _)| p.3).sum();
        let tol = (rel_tol * l1).max(abs_tol);
        if error <= tol || parts.len() >= MAX_INTERVALS {
            return Adaptive { value, error, converged: error <= tol };
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].0 .3.partial_cmp(&parts[j].0 .3).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        let ((lo, hi, _, _), (l, r)) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push(split(lo, mid, l));
        parts.push(split(mid, hi, r));
    }
}

/// Barycentric Lagrange interpolation on a fixed node set.
#[derive(Debug, Clone)]
pub struct Barycentric {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    pub fn new(nodes: &[f64]) -> Self {
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                let prod: f64 = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, &xk)| xj - xk)
                    .product();
                1.0 / prod
            })
            .collect();
        Self { nodes: nodes.to_vec(), weights }
    }

    /// Values of every Lagrange basis polynomial at `x`.
    pub fn basis(&self, x: f64) -> Vec<f64> {
        if let Some(j) = self.nodes.iter().position(|&n| n == x) {
            let mut out = vec![0.0; self.nodes.len()];
            out[j] = 1.0;
            return out;
        }
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&n, &w)| w / (x - n))
            .collect();
        let denom: f64 = terms.iter().sum();
        terms.into_iter().map(|t| t / denom).collect()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_to_degree_2n_minus_1() {
        for n in [1, 2, 5, 16, 40] {
            let r = Rule::gauss(n, 0.0, 2.0);
            let deg = 2 * n - 1;
            let got = r.integrate(|x| x.powi(deg as i32));
            let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert!((got - exact).abs() < 1e-12 * exact, "n={n}: {got} vs {exact}");
        }
    }

    #[test]
    fn weights_are_positive_and_sum_to_length() {
        let (x, w) = gauss_legendre(33);
        assert!(w.iter().all(|&v| v > 0.0));
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let res = adaptive(&|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 1e-14);
        assert!((res.value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn breakpoints_include_extra_points() {
        let b = breakpoints(0.0, 3.0, 1.0, &[1.5]);
        assert!(b.contains(&1.5));
        assert!(b.windows(2).all(|p| p[1] - p[0] <= 1.0 + 1e-12));
    }

    #[test]
    fn barycentric_reproduces_polynomials() {
        let r = Rule::gauss(8, -1.0, 1.0);
        let bary = Barycentric::new(&r.nodes);
        let vals: Vec<f64> = r.nodes.iter().map(|x| x.powi(5) - 2.0 * x).collect();
        let b = bary.basis(0.3);
        let interp: f64 = b.iter().zip(&vals).map(|(a, v)| a * v).sum();
        assert!((interp - (0.3f64.powi(5) - 0.6)).abs() < 1e-13);
    }
}
