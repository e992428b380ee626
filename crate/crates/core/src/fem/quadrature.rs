//! One-dimensional Gauss–Legendre rules on `[−1, 1]`.

use super::basis::legendre_with_derivative;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule, exact for polynomials of degree `2n − 1`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a quadrature rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..n.div_ceil(2) {
            // Chebyshev initial guess, refined by Newton on P_n.
            let mut x = -(std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let dp = legendre_with_derivative(n, x).1;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[k] = x;
            weights[k] = w;
            points[n - 1 - k] = -x;
            weights[n - 1 - k] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Tensor-product points `(x, y, w)` with `x` running fastest.
    pub fn tensor(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len() * self.len());
        for (&y, &wy) in self.points.iter().zip(&self.weights) {
            for (&x, &wx) in self.points.iter().zip(&self.weights) {
                out.push((x, y, wx * wy));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_rule() {
        let r = GaussRule::new(2);
        let s = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(r.points[0], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(r.points[1], s, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        for n in 1..=12 {
            let r = GaussRule::new(n);
            assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for d in 0..2 * n {
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
                assert_abs_diff_eq!(r.integrate(|x| x.powi(d as i32)), exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn points_sorted_and_interior() {
        let r = GaussRule::new(9);
        assert!(r.points.windows(2).all(|w| w[0] < w[1]));
        assert!(r.points.iter().all(|x| x.abs() < 1.0));
    }
}
