//! PDE coefficients and pointwise operators.
//!
//! The second-order model is
//!
//! ```text
//! u_ξξ − 2β₁ u_τξ − α u_ττ + 2β₀ i u_ξ = f,     α = β₀β₂ − β₁²,
//! ```
//!
//! hyperbolic for β₂ > 0 and elliptic for β₂ < 0. Both first-order
//! reformulations used by the solver live here: the Friedrichs system
//! `A^ξ U_ξ + A^τ U_τ + Z U = F` with `U = (u, v)`, and the scaled flux system
//! `cσ − A∇u = g`, `div σ + 2c⁻¹β₀ i u_ξ = c⁻¹f` with the diffusion tensor
//! `A = [[a, −β₁], [−β₁, 1]]`, `a = −α`.
//!
//! Vectors in (τ, ξ) space are always ordered τ first.

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{DpgError, Result};

const I: c64 = c64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Hyperbolic,
    Elliptic,
}

/// Nondimensional coefficients of the model.
///
/// `a` is the positive diffusion coefficient `−α` of the elliptic regime; it
/// is stored as `−α` in both regimes, so it is only meaningful when elliptic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub alpha: f64,
    pub regime: Regime,
    pub c: f64,
    pub a: f64,
}

impl ModelParams {
    pub const DEFAULT_BETA0: f64 = 1.0e6;
    pub const DEFAULT_BETA1: f64 = 1.0;
    pub const DEFAULT_BETA2_ABS: f64 = 1.0e-4;

    pub fn derive(beta0: f64, beta1: f64, beta2: f64, c: f64) -> Result<Self> {
        if !(beta0.is_finite() && beta1.is_finite() && beta2.is_finite()) {
            return Err(DpgError::InvalidParameter("non-finite beta coefficient".into()));
        }
        if beta0 <= 0.0 {
            return Err(DpgError::InvalidParameter(format!("beta0 = {beta0} must be positive")));
        }
        if beta2 == 0.0 {
            return Err(DpgError::RegimeUndetermined);
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(DpgError::InvalidScaling(c));
        }
        let alpha = beta0 * beta2 - beta1 * beta1;
        let regime = if beta2 > 0.0 {
            Regime::Hyperbolic
        } else {
            Regime::Elliptic
        };
        let a = -alpha;
        match regime {
            // β₂ > 0 does not force α > 0 when β₁² ≥ β₀β₂; such data has no real
            // characteristic splitting with the required signs.
            Regime::Hyperbolic if alpha <= 0.0 => {
                return Err(DpgError::InvalidParameter(format!(
                    "hyperbolic regime needs alpha > 0, got {alpha}"
                )))
            }
            Regime::Elliptic if a - beta1 * beta1 <= 0.0 => {
                return Err(DpgError::DegenerateTensor(a - beta1 * beta1))
            }
            _ => {}
        }
        Ok(Self { beta0, beta1, beta2, alpha, regime, c, a })
    }

    /// Default hyperbolic coefficients (β₂ = +10⁻⁴), c = 1.
    pub fn default_hyperbolic() -> Self {
        Self::derive(Self::DEFAULT_BETA0, Self::DEFAULT_BETA1, Self::DEFAULT_BETA2_ABS, 1.0)
            .expect("default hyperbolic parameters are admissible")
    }

    /// Default elliptic coefficients (β₂ = −10⁻⁴) with flux scaling `c`.
    pub fn default_elliptic(c: f64) -> Result<Self> {
        Self::derive(Self::DEFAULT_BETA0, Self::DEFAULT_BETA1, -Self::DEFAULT_BETA2_ABS, c)
    }

    pub fn require(&self, regime: Regime) -> Result<()> {
        if self.regime == regime {
            Ok(())
        } else {
            Err(DpgError::WrongRegime { expected: regime, found: self.regime })
        }
    }

    /// `A^ξ = diag(1, α)`.
    pub fn a_xi(&self) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [0.0, self.alpha]]
    }

    /// `A^τ = [[−2β₁, −α], [−α, 0]]`.
    pub fn a_tau(&self) -> [[f64; 2]; 2] {
        [[-2.0 * self.beta1, -self.alpha], [-self.alpha, 0.0]]
    }
}

/// Generalized eigenpairs of `A^τ b = λ A^ξ b`, normalized in the
/// `A^ξ`-weighted inner product `(U, V) = u₁v̄₁ + α u₂v̄₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FriedrichsDecomposition {
    pub lambda1: f64,
    pub lambda2: f64,
    pub b1: [f64; 2],
    pub b2: [f64; 2],
    /// Characteristic directions `(λ_i, 1)` in (τ, ξ).
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    alpha: f64,
}

impl FriedrichsDecomposition {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.require(Regime::Hyperbolic)?;
        let root = (params.beta0 * params.beta2).sqrt();
        let lambda1 = -params.beta1 - root;
        let lambda2 = -params.beta1 + root;
        let alpha = params.alpha;
        let n1 = (lambda1 * lambda1 + alpha).sqrt();
        let n2 = (lambda2 * lambda2 + alpha).sqrt();
        Ok(Self {
            lambda1,
            lambda2,
            b1: [-lambda1 / n1, 1.0 / n1],
            b2: [-lambda2 / n2, 1.0 / n2],
            c1: [lambda1, 1.0],
            c2: [lambda2, 1.0],
            alpha,
        })
    }

    /// `(U, V)_{A^ξ} = u₁ v̄₁ + α u₂ v̄₂`.
    pub fn inner(&self, u: [c64; 2], v: [c64; 2]) -> c64 {
        u[0] * v[0].conj() + self.alpha * u[1] * v[1].conj()
    }

    /// Components `U_j = (U, b_j)_{A^ξ}`.
    pub fn spectral_components(&self, u: [c64; 2]) -> (c64, c64) {
        let b1 = [c64::from(self.b1[0]), c64::from(self.b1[1])];
        let b2 = [c64::from(self.b2[0]), c64::from(self.b2[1])];
        (self.inner(u, b1), self.inner(u, b2))
    }

    /// Coefficients `(k_u, k_v)` with `U_j = k_u u + k_v v`.
    pub fn component_coefficients(&self) -> ([f64; 2], [f64; 2]) {
        (
            [self.b1[0], self.alpha * self.b1[1]],
            [self.b2[0], self.alpha * self.b2[1]],
        )
    }

    pub fn reconstruct(&self, u1: c64, u2: c64) -> [c64; 2] {
        [
            u1 * self.b1[0] + u2 * self.b2[0],
            u1 * self.b1[1] + u2 * self.b2[1],
        ]
    }

    /// Which characteristic components enter through a face with outward
    /// normal `n = (n_τ, n_ξ)`: component `i` is inflow when `c_i · n < 0`.
    pub fn inflow(&self, normal: [f64; 2]) -> [bool; 2] {
        let dot = |c: [f64; 2]| c[0] * normal[0] + c[1] * normal[1];
        [dot(self.c1) < 0.0, dot(self.c2) < 0.0]
    }

    /// Trace variable `r = (αv − λ₂u)/(λ₂ − λ₁)`, proportional to `U₂`.
    pub fn trace_r(&self, u: c64, v: c64) -> c64 {
        (self.alpha * v - self.lambda2 * u) / (self.lambda2 - self.lambda1)
    }

    /// Trace variable `t = (αv − λ₁u)/(λ₂ − λ₁)`, proportional to `U₁`.
    pub fn trace_t(&self, u: c64, v: c64) -> c64 {
        (self.alpha * v - self.lambda1 * u) / (self.lambda2 - self.lambda1)
    }
}

/// Diffusion tensor of the elliptic regime and its inverse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipticTensors {
    pub a: [[f64; 2]; 2],
    pub a_inv: [[f64; 2]; 2],
}

impl EllipticTensors {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.require(Regime::Elliptic)?;
        let (a, b1) = (params.a, params.beta1);
        let det = a - b1 * b1;
        if !(det > 0.0 && a > 0.0) {
            return Err(DpgError::DegenerateTensor(det));
        }
        Ok(Self {
            a: [[a, -b1], [-b1, 1.0]],
            a_inv: [[1.0 / det, b1 / det], [b1 / det, a / det]],
        })
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn apply(&self, x: [c64; 2]) -> [c64; 2] {
        mat_vec(&self.a, x)
    }

    pub fn apply_inv(&self, x: [c64; 2]) -> [c64; 2] {
        mat_vec(&self.a_inv, x)
    }
}

fn mat_vec(m: &[[f64; 2]; 2], x: [c64; 2]) -> [c64; 2] {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

/// Diagonal zero-order term `diag(z11, z22)` of the Friedrichs system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroOrderTerm {
    pub z11: c64,
    pub z22: c64,
    pub rescaled: bool,
}

impl ZeroOrderTerm {
    /// `diag(2β₀i, 0)`.
    pub fn plain(params: &ModelParams) -> Self {
        Self { z11: 2.0 * params.beta0 * I, z22: c64::new(0.0, 0.0), rescaled: false }
    }

    /// `diag(1 + 2β₀i, α)`, the form obtained after the `e^ξ` rescaling.
    pub fn rescaled(params: &ModelParams) -> Self {
        Self {
            z11: c64::new(1.0, 2.0 * params.beta0),
            z22: c64::from(params.alpha),
            rescaled: true,
        }
    }

    pub fn is_consistent(&self, params: &ModelParams) -> bool {
        let expected = if self.rescaled { Self::rescaled(params) } else { Self::plain(params) };
        expected.z11 == self.z11 && expected.z22 == self.z22
    }
}

/// Sign convention for the zero-order part of the hyperbolic formal adjoint.
///
/// `SameSign` carries `+z δu`; `ConjugateTranspose` carries `z̄ δu`, which is
/// the exact adjoint of the sesquilinear form.
///
/// The sign only enters the test norm; the bilinear form always uses the
/// exact adjoint. With `SameSign` the norm and the form differ by a term of
/// size `4β₀`, and whitening loses about `β₀·ε` absolute accuracy per element,
/// which the global solve then amplifies. Hence the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointSign {
    SameSign,
    #[default]
    ConjugateTranspose,
}

/// A point sample of a scalar field with optional first derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sample {
    pub value: c64,
    pub d_tau: Option<c64>,
    pub d_xi: Option<c64>,
}

impl Sample {
    pub fn new(value: c64, d_tau: c64, d_xi: c64) -> Self {
        Self { value, d_tau: Some(d_tau), d_xi: Some(d_xi) }
    }

    pub fn real(value: f64, d_tau: f64, d_xi: f64) -> Self {
        Self::new(value.into(), d_tau.into(), d_xi.into())
    }

    pub fn constant(value: c64) -> Self {
        Self::new(value, c64::new(0.0, 0.0), c64::new(0.0, 0.0))
    }

    fn tau(&self, name: &'static str) -> Result<c64> {
        self.d_tau.ok_or(DpgError::IncompleteSample(name))
    }

    fn xi(&self, name: &'static str) -> Result<c64> {
        self.d_xi.ok_or(DpgError::IncompleteSample(name))
    }
}

/// Point sample of a state (trial) or test pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StateSample {
    /// `(u, v)` or `(δu, δv)`.
    Hyperbolic { u: Sample, v: Sample },
    /// `(u, σ)` or `(v, τ)`; the vector field is split into its τ and ξ components.
    Elliptic { u: Sample, flux_tau: Sample, flux_xi: Sample },
}

/// Complete operator configuration: coefficients plus the formulation switches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub zero_order: ZeroOrderTerm,
    pub adjoint_sign: AdjointSign,
}

impl Model {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            zero_order: ZeroOrderTerm::plain(&params),
            adjoint_sign: AdjointSign::default(),
        }
    }

    pub fn with_rescaled_zero_order(mut self, rescaled: bool) -> Self {
        self.zero_order = if rescaled {
            ZeroOrderTerm::rescaled(&self.params)
        } else {
            ZeroOrderTerm::plain(&self.params)
        };
        self
    }

    pub fn with_adjoint_sign(mut self, sign: AdjointSign) -> Self {
        self.adjoint_sign = sign;
        self
    }

    pub fn regime(&self) -> Regime {
        self.params.regime
    }

    pub fn decomposition(&self) -> Result<FriedrichsDecomposition> {
        FriedrichsDecomposition::new(&self.params)
    }

    pub fn tensors(&self) -> Result<EllipticTensors> {
        EllipticTensors::new(&self.params)
    }

    /// Strong first-order operator applied at a point.
    ///
    /// Hyperbolic: `(u_ξ − 2β₁u_τ − αv_τ + z₁₁u, αv_ξ − αu_τ + z₂₂v)`.
    /// Elliptic: `(cσ_τ − (A∇u)_τ, cσ_ξ − (A∇u)_ξ, div σ + 2c⁻¹β₀ i u_ξ)`.
    pub fn apply_forward(&self, sample: &StateSample) -> Result<Vec<c64>> {
        let p = &self.params;
        match *sample {
            StateSample::Hyperbolic { u, v } => {
                p.require(Regime::Hyperbolic)?;
                let (u_t, u_x) = (u.tau("u_tau")?, u.xi("u_xi")?);
                let (v_t, v_x) = (v.tau("v_tau")?, v.xi("v_xi")?);
                let z = &self.zero_order;
                Ok(vec![
                    u_x - 2.0 * p.beta1 * u_t - p.alpha * v_t + z.z11 * u.value,
                    p.alpha * v_x - p.alpha * u_t + z.z22 * v.value,
                ])
            }
            StateSample::Elliptic { u, flux_tau, flux_xi } => {
                p.require(Regime::Elliptic)?;
                let t = self.tensors()?;
                let grad = t.apply([u.tau("u_tau")?, u.xi("u_xi")?]);
                let div = flux_tau.tau("sigma_tau,tau")? + flux_xi.xi("sigma_xi,xi")?;
                let u_x = u.xi("u_xi")?;
                Ok(vec![
                    p.c * flux_tau.value - grad[0],
                    p.c * flux_xi.value - grad[1],
                    div + 2.0 * p.beta0 / p.c * I * u_x,
                ])
            }
        }
    }

    /// Formal adjoint applied to a test sample.
    ///
    /// Hyperbolic: `(−δu_ξ + 2β₁δu_τ + z δu + αδv_τ, −αδv_ξ + αδu_τ + z₂₂ δv)`
    /// where `z = z₁₁` (same sign) or `z̄₁₁` (conjugate transpose).
    /// Elliptic: `(2c⁻¹β₀ i v_ξ + div τ, −∇v + cA⁻¹τ)`.
    pub fn apply_adjoint(&self, sample: &StateSample) -> Result<Vec<c64>> {
        let p = &self.params;
        match *sample {
            StateSample::Hyperbolic { u, v } => {
                p.require(Regime::Hyperbolic)?;
                let (u_t, u_x) = (u.tau("du_tau")?, u.xi("du_xi")?);
                let (v_t, v_x) = (v.tau("dv_tau")?, v.xi("dv_xi")?);
                let (z11, z22) = match self.adjoint_sign {
                    AdjointSign::SameSign => (self.zero_order.z11, self.zero_order.z22),
                    AdjointSign::ConjugateTranspose => {
                        (self.zero_order.z11.conj(), self.zero_order.z22.conj())
                    }
                };
                Ok(vec![
                    -u_x + 2.0 * p.beta1 * u_t + z11 * u.value + p.alpha * v_t,
                    -p.alpha * v_x + p.alpha * u_t + z22 * v.value,
                ])
            }
            StateSample::Elliptic { u: v, flux_tau, flux_xi } => {
                p.require(Regime::Elliptic)?;
                let t = self.tensors()?;
                let (v_t, v_x) = (v.tau("v_tau")?, v.xi("v_xi")?);
                let div = flux_tau.tau("tau_tau,tau")? + flux_xi.xi("tau_xi,xi")?;
                let inv = t.apply_inv([flux_tau.value, flux_xi.value]);
                Ok(vec![
                    2.0 * p.beta0 / p.c * I * v_x + div,
                    -v_t + p.c * inv[0],
                    -v_x + p.c * inv[1],
                ])
            }
        }
    }
}
