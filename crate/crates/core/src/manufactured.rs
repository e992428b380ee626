//! Exact solutions, derived sources and boundary data, and error norms.

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{DpgError, Result};
use crate::model::{Model, Regime, Sample, StateSample};

const I: c64 = c64::new(0.0, 1.0);

/// Value with first and second partial derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: c64,
    pub d_tau: c64,
    pub d_xi: c64,
    pub d_tautau: c64,
    pub d_tauxi: c64,
    pub d_xixi: c64,
}

impl Jet {
    pub fn sample(&self) -> Sample {
        Sample::new(self.value, self.d_tau, self.d_xi)
    }

    fn scale(self, s: c64) -> Self {
        Self {
            value: s * self.value,
            d_tau: s * self.d_tau,
            d_xi: s * self.d_xi,
            d_tautau: s * self.d_tautau,
            d_tauxi: s * self.d_tauxi,
            d_xixi: s * self.d_xixi,
        }
    }

    /// `n / d` by the quotient rule.
    fn quotient(n: Jet, d: Jet) -> Jet {
        let u = n.value / d.value;
        let ut = (n.d_tau - u * d.d_tau) / d.value;
        let ux = (n.d_xi - u * d.d_xi) / d.value;
        Jet {
            value: u,
            d_tau: ut,
            d_xi: ux,
            d_tautau: (n.d_tautau - 2.0 * ut * d.d_tau - u * d.d_tautau) / d.value,
            d_tauxi: (n.d_tauxi - ut * d.d_xi - ux * d.d_tau - u * d.d_tauxi) / d.value,
            d_xixi: (n.d_xixi - 2.0 * ux * d.d_xi - u * d.d_xixi) / d.value,
        }
    }
}

/// Closed-form fields with analytic derivatives. `τ` is centered at 0.5 in
/// the soliton and beam profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactField {
    /// `sech(a₀(τ − ½)) e^{iωξ}`.
    SolitonFirst { omega: f64, a0: f64 },
    /// The second-order soliton with temporal frequency `ω`.
    SolitonSecond { omega: f64 },
    /// `(2πω)^{−1/2} exp(−(τ − ½)²/(2ω)) + i sin ξ`.
    GaussianBeam { omega: f64 },
    /// `cos τ + i sin ξ`.
    Auxiliary,
    /// `Σ c τ^m ξ^n` over `((m, n), c)` terms.
    Polynomial { terms: Vec<((u32, u32), c64)> },
}

impl ExactField {
    pub fn soliton_first() -> Self {
        Self::SolitonFirst { omega: 8.0 * std::f64::consts::PI, a0: 5.0 }
    }

    pub fn soliton_second() -> Self {
        Self::SolitonSecond { omega: std::f64::consts::PI }
    }

    pub fn gaussian_beam() -> Self {
        Self::GaussianBeam { omega: 0.001 }
    }

    pub fn zero() -> Self {
        Self::Polynomial { terms: Vec::new() }
    }

    /// Largest total polynomial degree, if the field is a polynomial.
    pub fn polynomial_degree(&self) -> Option<(u32, u32)> {
        match self {
            Self::Polynomial { terms } => Some(terms.iter().fold((0, 0), |(a, b), ((m, n), _)| (a.max(*m), b.max(*n)))),
            _ => None,
        }
    }

    pub fn value(&self, tau: f64, xi: f64) -> c64 {
        self.jet(tau, xi).value
    }

    pub fn jet(&self, tau: f64, xi: f64) -> Jet {
        match *self {
            Self::SolitonFirst { omega, a0 } => {
                let x = a0 * (tau - 0.5);
                let s = 1.0 / x.cosh();
                let th = x.tanh();
                let phase = c64::from_polar(1.0, omega * xi);
                let (f, ft, ftt) = (s, -a0 * s * th, a0 * a0 * s * (1.0 - 2.0 * s * s));
                let w = I * omega;
                Jet {
                    value: f * phase,
                    d_tau: ft * phase,
                    d_xi: w * f * phase,
                    d_tautau: ftt * phase,
                    d_tauxi: w * ft * phase,
                    d_xixi: w * w * f * phase,
                }
            }
            Self::SolitonSecond { omega } => {
                let x = tau - 0.5;
                let e4 = c64::from_polar(1.0, 4.0 * xi);
                let (c1, s1, c3, s3) = (x.cosh(), x.sinh(), (3.0 * x).cosh(), (3.0 * x).sinh());
                // A = cosh 3x + 3 cosh x e^{4iξ}; N = 4 A e^{iωξ/2}.
                let a = c3 + 3.0 * c1 * e4;
                let a_t = 3.0 * s3 + 3.0 * s1 * e4;
                let a_tt = 9.0 * c3 + 3.0 * c1 * e4;
                let a_x = 12.0 * I * c1 * e4;
                let a_tx = 12.0 * I * s1 * e4;
                let a_xx = -48.0 * c1 * e4;
                let k = I * omega / 2.0;
                let n = Jet {
                    value: a,
                    d_tau: a_t,
                    d_xi: a_x + k * a,
                    d_tautau: a_tt,
                    d_tauxi: a_tx + k * a_t,
                    d_xixi: a_xx + 2.0 * k * a_x + k * k * a,
                }
                .scale(4.0 * c64::from_polar(1.0, omega * xi / 2.0));
                let arg = 4.0 * omega * xi;
                let d = Jet {
                    value: ((4.0 * x).cosh() + 4.0 * (2.0 * x).cosh() + 3.0 * arg.cos()).into(),
                    d_tau: (4.0 * (4.0 * x).sinh() + 8.0 * (2.0 * x).sinh()).into(),
                    d_xi: (-12.0 * omega * arg.sin()).into(),
                    d_tautau: (16.0 * (4.0 * x).cosh() + 16.0 * (2.0 * x).cosh()).into(),
                    d_tauxi: c64::new(0.0, 0.0),
                    d_xixi: (-48.0 * omega * omega * arg.cos()).into(),
                };
                Jet::quotient(n, d)
            }
            Self::GaussianBeam { omega } => {
                let x = tau - 0.5;
                let g = (-0.5 * x * x / omega).exp() / (2.0 * std::f64::consts::PI * omega).sqrt();
                Jet {
                    value: c64::new(g, xi.sin()),
                    d_tau: (-x / omega * g).into(),
                    d_xi: I * xi.cos(),
                    d_tautau: ((x * x / (omega * omega) - 1.0 / omega) * g).into(),
                    d_tauxi: c64::new(0.0, 0.0),
                    d_xixi: -I * xi.sin(),
                }
            }
            Self::Auxiliary => Jet {
                value: c64::new(tau.cos(), xi.sin()),
                d_tau: (-tau.sin()).into(),
                d_xi: I * xi.cos(),
                d_tautau: (-tau.cos()).into(),
                d_tauxi: c64::new(0.0, 0.0),
                d_xixi: -I * xi.sin(),
            },
            Self::Polynomial { ref terms } => {
                // d^k/dx^k x^m at x, as a real number.
                let mono = |x: f64, m: u32, k: u32| -> f64 {
                    if k > m {
                        return 0.0;
                    }
                    let coef: f64 = (0..k).map(|j| (m - j) as f64).product();
                    coef * x.powi((m - k) as i32)
                };
                let mut j = Jet::default();
                for &((m, n), c) in terms {
                    let t = |a: u32, b: u32| c * mono(tau, m, a) * mono(xi, n, b);
                    j.value += t(0, 0);
                    j.d_tau += t(1, 0);
                    j.d_xi += t(0, 1);
                    j.d_tautau += t(2, 0);
                    j.d_tauxi += t(1, 1);
                    j.d_xixi += t(0, 2);
                }
                j
            }
        }
    }
}

/// Named manufactured cases selectable from configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseName {
    Soliton1,
    Soliton2,
    GaussianBeam,
}

impl std::str::FromStr for CaseName {
    type Err = DpgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soliton1" => Ok(Self::Soliton1),
            "soliton2" => Ok(Self::Soliton2),
            "gaussian_beam" => Ok(Self::GaussianBeam),
            other => Err(DpgError::Config(format!("unknown case {other:?}"))),
        }
    }
}

impl CaseName {
    pub fn field(self) -> ExactField {
        match self {
            Self::Soliton1 => ExactField::soliton_first(),
            Self::Soliton2 => ExactField::soliton_second(),
            Self::GaussianBeam => ExactField::gaussian_beam(),
        }
    }
}

/// A model together with exact fields, from which sources and boundary data
/// follow.
///
/// Hyperbolic cases carry `(u, v)`; the sources are the first-order operator
/// applied to them. Elliptic cases carry `u` and, optionally, an explicit flux
/// `σ`; without one, `σ = c⁻¹A∇u` and `g = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseData {
    pub model: Model,
    pub u: ExactField,
    pub v: Option<ExactField>,
    pub sigma: Option<[ExactField; 2]>,
}

impl CaseData {
    pub fn new(model: Model, u: ExactField, v: Option<ExactField>) -> Result<Self> {
        match model.regime() {
            Regime::Hyperbolic if v.is_none() => Err(DpgError::MissingField("v")),
            Regime::Hyperbolic => Ok(Self { model, u, v, sigma: None }),
            Regime::Elliptic => Ok(Self { model, u, v: None, sigma: None }),
        }
    }

    /// Elliptic case with a prescribed flux, giving a nonzero `g`.
    pub fn with_flux(mut self, sigma: [ExactField; 2]) -> Result<Self> {
        self.model.params.require(Regime::Elliptic)?;
        self.sigma = Some(sigma);
        Ok(self)
    }

    /// Standard case: hyperbolic cases pair `u` with `v = cos τ + i sin ξ`.
    pub fn named(model: Model, name: CaseName) -> Result<Self> {
        let v = (model.regime() == Regime::Hyperbolic).then_some(ExactField::Auxiliary);
        Self::new(model, name.field(), v)
    }

    pub fn regime(&self) -> Regime {
        self.model.regime()
    }

    pub fn num_fields(&self) -> usize {
        match self.regime() {
            Regime::Hyperbolic => 2,
            Regime::Elliptic => 3,
        }
    }

    fn flux_samples(&self, tau: f64, xi: f64, u: &Jet) -> Result<[Sample; 2]> {
        if let Some([st, sx]) = &self.sigma {
            return Ok([st.jet(tau, xi).sample(), sx.jet(tau, xi).sample()]);
        }
        let p = &self.model.params;
        let ci = 1.0 / p.c;
        let (a, b1) = (p.a, p.beta1);
        // σ = c⁻¹A∇u; only the derivatives entering div σ are needed.
        let st = Sample {
            value: ci * (a * u.d_tau - b1 * u.d_xi),
            d_tau: Some(ci * (a * u.d_tautau - b1 * u.d_tauxi)),
            d_xi: Some(ci * (a * u.d_tauxi - b1 * u.d_xixi)),
        };
        let sx = Sample {
            value: ci * (-b1 * u.d_tau + u.d_xi),
            d_tau: Some(ci * (-b1 * u.d_tautau + u.d_tauxi)),
            d_xi: Some(ci * (-b1 * u.d_tauxi + u.d_xixi)),
        };
        Ok([st, sx])
    }

    pub fn exact_sample(&self, tau: f64, xi: f64) -> Result<StateSample> {
        let u = self.u.jet(tau, xi);
        match self.regime() {
            Regime::Hyperbolic => {
                let v = self.v.as_ref().ok_or(DpgError::MissingField("v"))?.jet(tau, xi);
                Ok(StateSample::Hyperbolic { u: u.sample(), v: v.sample() })
            }
            Regime::Elliptic => {
                let [flux_tau, flux_xi] = self.flux_samples(tau, xi, &u)?;
                Ok(StateSample::Elliptic { u: u.sample(), flux_tau, flux_xi })
            }
        }
    }

    /// Exact field values `(u, v)` or `(u, σ_τ, σ_ξ)`.
    pub fn exact_fields(&self, tau: f64, xi: f64) -> Vec<c64> {
        match self.exact_sample(tau, xi).expect("case fields validated at construction") {
            StateSample::Hyperbolic { u, v } => vec![u.value, v.value],
            StateSample::Elliptic { u, flux_tau, flux_xi } => vec![u.value, flux_tau.value, flux_xi.value],
        }
    }

    /// Sources of the first-order system: `(f₁, f₂)` or `(g_τ, g_ξ, f)`.
    pub fn sources(&self, tau: f64, xi: f64) -> Vec<c64> {
        let sample = self.exact_sample(tau, xi).expect("case fields validated at construction");
        match self.regime() {
            Regime::Hyperbolic => self.model.apply_forward(&sample).expect("complete sample"),
            Regime::Elliptic => {
                let p = &self.model.params;
                let u = self.u.jet(tau, xi);
                let [st, sx] = self.flux_samples(tau, xi, &u).expect("flux available");
                let t = self.model.tensors().expect("elliptic tensors");
                let grad = t.apply([u.d_tau, u.d_xi]);
                let div = st.d_tau.unwrap() + sx.d_xi.unwrap();
                vec![
                    p.c * st.value - grad[0],
                    p.c * sx.value - grad[1],
                    p.c * div + 2.0 * p.beta0 * I * u.d_xi,
                ]
            }
        }
    }

    /// Load density paired with each test component: `(f₁, f₂)` against
    /// `(δu, δv)`, or `(c⁻¹f, A⁻¹g)` against `(v, τ)`.
    pub fn load(&self, tau: f64, xi: f64) -> Vec<c64> {
        let s = self.sources(tau, xi);
        match self.regime() {
            Regime::Hyperbolic => s,
            Regime::Elliptic => {
                let p = &self.model.params;
                let ag = self.model.tensors().expect("elliptic tensors").apply_inv([s[0], s[1]]);
                vec![s[2] / p.c, ag[0], ag[1]]
            }
        }
    }

    /// Exact value of trace component `comp` at a skeleton point.
    ///
    /// Hyperbolic: `r` (0) or `t` (1). Elliptic: `û = u` (0) or the flux
    /// along the reference normal, `σ_ξ` on horizontal and `σ_τ` on vertical
    /// edges (1).
    pub fn trace_value(&self, comp: usize, tau: f64, xi: f64, horizontal: bool) -> c64 {
        let f = self.exact_fields(tau, xi);
        match self.regime() {
            Regime::Hyperbolic => {
                let d = self.model.decomposition().expect("hyperbolic decomposition");
                if comp == 0 {
                    d.trace_r(f[0], f[1])
                } else {
                    d.trace_t(f[0], f[1])
                }
            }
            Regime::Elliptic => match (comp, horizontal) {
                (0, _) => f[0],
                (_, true) => f[2],
                (_, false) => f[1],
            },
        }
    }
}

/// Which part of the complex fields the error norm measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    RealPart,
    Complex,
}

impl NormKind {
    pub fn abs2(self, z: c64) -> f64 {
        match self {
            NormKind::RealPart => z.re * z.re,
            NormKind::Complex => z.norm_sqr(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    /// Combined relative error over all fields (absolute if `absolute`).
    pub rel_l2: f64,
    /// Per-field errors, relative to each field's own norm when nonzero.
    pub per_field: Vec<f64>,
    /// Set when the exact norm vanished and absolute errors are reported.
    pub absolute: bool,
}

impl ErrorReport {
    /// Builds the report from squared error and exact-norm integrals per field.
    pub fn from_integrals(err2: &[f64], exact2: &[f64]) -> Self {
        let e: f64 = err2.iter().sum();
        let x: f64 = exact2.iter().sum();
        let absolute = x == 0.0;
        let rel_l2 = if absolute { e.sqrt() } else { (e / x).sqrt() };
        let per_field = err2
            .iter()
            .zip(exact2)
            .map(|(&e, &x)| if x > 0.0 { (e / x).sqrt() } else { e.sqrt() })
            .collect();
        Self { rel_l2, per_field, absolute }
    }
}
