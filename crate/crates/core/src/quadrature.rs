//! Quadrature on triangles (barycentric points, weights normalised to sum 1)
//! and two-point Gauss on edges.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: u32,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::seven_point()
    }
}

impl QuadratureRule {
    pub fn centroid() -> Self {
        QuadratureRule { points: vec![[1.0 / 3.0; 3]], weights: vec![1.0], degree: 1 }
    }

    pub fn three_point() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        QuadratureRule {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }

    /// Radon's 7-point rule, exact for degree 5.
    pub fn seven_point() -> Self {
        let s = 15f64.sqrt();
        let (a1, a2) = ((6.0 - s) / 21.0, (6.0 + s) / 21.0);
        let (w1, w2) = ((155.0 - s) / 1200.0, (155.0 + s) / 1200.0);
        let mut points = vec![[1.0 / 3.0; 3]];
        let mut weights = vec![9.0 / 40.0];
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            points.extend([[b, a, a], [a, b, a], [a, a, b]]);
            weights.extend([w; 3]);
        }
        QuadratureRule { points, weights, degree: 5 }
    }

    /// Conical product of Gauss-Legendre rules through the collapsed square.
    /// `m` points per direction integrate total degree `2m - 2` exactly.
    pub fn collapsed(degree: u32) -> Self {
        let m = (degree as usize + 3) / 2;
        let (nodes, gw) = gauss_legendre_unit(m);
        let mut points = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for (&u, &wu) in nodes.iter().zip(&gw) {
            for (&v, &wv) in nodes.iter().zip(&gw) {
                let (x, y) = (u, v * (1.0 - u));
                points.push([1.0 - x - y, x, y]);
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        QuadratureRule { points, weights, degree: (2 * m - 2) as u32 }
    }

    /// Cheapest built-in rule exact for polynomials of `degree`.
    pub fn with_degree(degree: u32) -> Self {
        match degree {
            0 | 1 => QuadratureRule::centroid(),
            2 => QuadratureRule::three_point(),
            3..=5 => QuadratureRule::seven_point(),
            _ => QuadratureRule::collapsed(degree),
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(barycentric point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        // Chebyshev initial guess, then Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
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
        if d.is_finite() {
            dp = d;
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// `P_m(x)` and `P_m'(x)` by the three-term recurrence.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Two-point Gauss rule on `[0, 1]`, exact for cubics.
pub fn edge_gauss2() -> [(f64, f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `int_T x^a y^b` over the reference triangle, normalised by its area 1/2:
    /// `2 a! b! / (a + b + 2)!`.
    fn monomial_exact(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        2.0 * fact(a) * fact(b) / fact(a + b + 2)
    }

    fn check_exactness(rule: &QuadratureRule) {
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
        for a in 0..=rule.degree() {
            for b in 0..=rule.degree() - a {
                let approx: f64 = rule.iter().map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32)).sum();
                let exact = monomial_exact(a, b);
                assert!(
                    (approx - exact).abs() < 1e-14,
                    "degree {} rule fails on x^{a} y^{b}: {approx} vs {exact}",
                    rule.degree()
                );
            }
        }
    }

    #[test]
    fn builtin_rules_are_exact() {
        check_exactness(&QuadratureRule::centroid());
        check_exactness(&QuadratureRule::three_point());
        check_exactness(&QuadratureRule::seven_point());
        for d in 0..=10 {
            let rule = QuadratureRule::with_degree(d);
            assert!(rule.degree() >= d);
            check_exactness(&rule);
        }
    }

    #[test]
    fn seven_point_misses_degree_six() {
        let rule = QuadratureRule::seven_point();
        let approx: f64 = rule.iter().map(|(p, w)| w * p[1].powi(6)).sum();
        assert!((approx - monomial_exact(6, 0)).abs() > 1e-6);
    }

    #[test]
    fn gauss_legendre_weights() {
        for m in 1..8 {
            let (x, w) = gauss_legendre_unit(m);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for k in 0..2 * m {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((approx - 1.0 / (k as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn edge_rule_exact_for_cubics() {
        let rule = edge_gauss2();
        for k in 0..4 {
            let approx: f64 = rule.iter().map(|(t, w)| w * t.powi(k)).sum();
            assert!((approx - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
