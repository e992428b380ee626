//! One-dimensional polynomial families on `[−1, 1]`.
//!
//! `Legendre` is the `L²`-orthonormal family `√((2k+1)/2) P_k`. `Lobatto`
//! consists of the two hat functions followed by the integrated Legendre
//! bubbles `(P_k − P_{k−2})/√(2(2k−1))`, which vanish at both endpoints and
//! have derivative `√((2k−1)/2) P_{k−1}`.

use faer::prelude::Solve;
use faer::Mat;
use num_complex::Complex64 as c64;

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut d0, mut d1) = (0.0, 1.0);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        let d2 = d0 + (2.0 * kf - 1.0) * p1;
        (p0, p1) = (p1, p2);
        (d0, d1) = (d1, d2);
    }
    (p1, d1)
}

/// `P_0(x), …, P_n(x)`.
fn legendre_values(n: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n >= 1 {
        p.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        p.push(((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf);
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Legendre,
    Lobatto,
}

impl Family {
    /// Values and derivatives of the first `degree + 1` members at `x`.
    pub fn eval(self, degree: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            Family::Legendre => {
                let p = legendre_values(degree + 1, x);
                let mut vals = Vec::with_capacity(degree + 1);
                let mut ders = Vec::with_capacity(degree + 1);
                for k in 0..=degree {
                    let s = ((2 * k + 1) as f64 / 2.0).sqrt();
                    vals.push(s * p[k]);
                    // P_k' = Σ (2j+1) P_j over j = k−1, k−3, …
                    let mut d = 0.0;
                    let mut j = k as isize - 1;
                    while j >= 0 {
                        d += (2 * j + 1) as f64 * p[j as usize];
                        j -= 2;
                    }
                    ders.push(s * d);
                }
                (vals, ders)
            }
            Family::Lobatto => {
                assert!(degree >= 1, "Lobatto family needs degree at least 1");
                let p = legendre_values(degree, x);
                let mut vals = vec![0.5 * (1.0 - x), 0.5 * (1.0 + x)];
                let mut ders = vec![-0.5, 0.5];
                for k in 2..=degree {
                    let kf = k as f64;
                    vals.push((p[k] - p[k - 2]) / (2.0 * (2.0 * kf - 1.0)).sqrt());
                    ders.push(((2.0 * kf - 1.0) / 2.0).sqrt() * p[k - 1]);
                }
                (vals, ders)
            }
        }
    }

    pub fn values(self, degree: usize, x: f64) -> Vec<f64> {
        self.eval(degree, x).0
    }
}

/// Interior Chebyshev–Lobatto points of `[−1, 1]` for `n` bubbles.
pub fn chebyshev_lobatto_interior(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| -(std::f64::consts::PI * k as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Coefficients of the degree-`degree` member of `family` interpolating `g`.
///
/// Legendre expansions interpolate at the `degree + 1` Gauss points. Lobatto
/// expansions match `g` at both endpoints and at the interior
/// Chebyshev–Lobatto points.
pub fn interpolate(family: Family, degree: usize, g: impl Fn(f64) -> c64) -> Vec<c64> {
    let n = degree + 1;
    let (points, fixed) = match family {
        Family::Legendre => (super::quadrature::GaussRule::new(n).points, 0),
        Family::Lobatto => (chebyshev_lobatto_interior(degree - 1), 2),
    };
    let mut coef = vec![c64::new(0.0, 0.0); n];
    if fixed == 2 {
        coef[0] = g(-1.0);
        coef[1] = g(1.0);
    }
    let m = n - fixed;
    if m == 0 {
        return coef;
    }
    let mut vander = Mat::<c64>::zeros(m, m);
    let mut rhs = Mat::<c64>::zeros(m, 1);
    for (r, &x) in points.iter().enumerate() {
        let v = family.values(degree, x);
        rhs[(r, 0)] = g(x) - (0..fixed).map(|k| coef[k] * v[k]).sum::<c64>();
        for c in 0..m {
            vander[(r, c)] = v[fixed + c].into();
        }
    }
    let sol = vander.partial_piv_lu().solve(&rhs);
    for c in 0..m {
        coef[fixed + c] = sol[(c, 0)];
    }
    coef
}
