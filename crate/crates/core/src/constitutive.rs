//! Carreau viscosity, its reduced one-dimensional form and the scalar
//! functions derived from it: the stress inverse `ψ`, the Hele-Shaw
//! mobility `M(s)` and the power-law flux prefactor.

use crate::params::FluidParams;
use crate::quadrature::{self, GaussLegendre};
use crate::{Error, Result};

const ROOT_MAX_ITER: usize = 200;

/// Settings for the adaptive Gauss–Legendre integration of the mobility
/// kernel and the Carreau profiles.
#[derive(Debug, Clone)]
pub struct MobilityQuadrature {
    rule: GaussLegendre,
    rel_tol: f64,
    max_levels: u32,
}

impl MobilityQuadrature {
    pub fn new(nodes: usize, rel_tol: f64, max_levels: u32) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::param("quadrature.nodes", format!("need at least 2, got {nodes}")));
        }
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return Err(Error::param("quadrature.rel_tol", format!("must be positive, got {rel_tol}")));
        }
        if max_levels == 0 {
            return Err(Error::param("quadrature.max_levels", "must be at least 1"));
        }
        Ok(Self {
            rule: GaussLegendre::new(nodes),
            rel_tol,
            max_levels,
        })
    }

    pub fn nodes(&self) -> usize {
        self.rule.len()
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn max_levels(&self) -> u32 {
        self.max_levels
    }

    pub fn integrate<F>(&self, a: f64, b: f64, f: F) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        quadrature::adaptive(&self.rule, a, b, self.rel_tol, self.max_levels, f)
    }

    pub fn integrate_many<const K: usize, F>(&self, a: f64, b: f64, f: F) -> Result<[f64; K]>
    where
        F: FnMut(f64) -> Result<[f64; K]>,
    {
        quadrature::adaptive_many(&self.rule, a, b, self.rel_tol, self.max_levels, f)
    }
}

impl Default for MobilityQuadrature {
    fn default() -> Self {
        Self::new(16, 1e-10, 30).expect("default quadrature settings are valid")
    }
}

fn non_negative(name: &'static str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and non-negative, got {x}")))
    }
}

/// Carreau viscosity `(η₀−η∞)(1+λs²)^{r/2−1} + η∞` at strain-rate norm `s`.
pub fn carreau_viscosity(s: f64, params: &FluidParams) -> Result<f64> {
    non_negative("s", s)?;
    let p = params;
    Ok((p.eta0() - p.eta_inf()) * (1.0 + p.lambda() * s * s).powf(0.5 * p.r() - 1.0) + p.eta_inf())
}

/// Viscosity of the reduced thin-film problem at shear rate `y`:
/// `(η₀−η∞)(1+(λ/2)y²)^{r/2−1} + η∞`.
pub fn reduced_viscosity_1d(y: f64, params: &FluidParams) -> Result<f64> {
    non_negative("y", y)?;
    Ok(reduced_viscosity(y, params))
}

#[inline]
fn reduced_viscosity(y: f64, p: &FluidParams) -> f64 {
    (p.eta0() - p.eta_inf()) * (1.0 + 0.5 * p.lambda() * y * y).powf(0.5 * p.r() - 1.0) + p.eta_inf()
}

/// Shear stress `η̃(y)·y` transmitted at shear rate `y`.
pub fn stress_from_rate(y: f64, params: &FluidParams) -> Result<f64> {
    non_negative("y", y)?;
    Ok(reduced_viscosity(y, params) * y)
}

/// Forward stress map `τ(ζ) = ζ·√((2/λ)(((ζ−η∞)/(η₀−η∞))^{2/(r−2)} − 1))`,
/// whose inverse is [`psi`]. `ζ` must lie on the admissible branch:
/// `(η∞, η₀]` when `r < 2`, `[η₀, ∞)` when `r > 2`.
pub fn stress_from_viscosity(zeta: f64, params: &FluidParams) -> Result<f64> {
    let p = params;
    let admissible = if p.shear_thinning() {
        zeta > p.eta_inf() && zeta <= p.eta0()
    } else {
        zeta >= p.eta0() && zeta.is_finite()
    };
    if !admissible {
        return Err(Error::param(
            "zeta",
            format!("{zeta} is outside the admissible viscosity branch"),
        ));
    }
    // u = (ζ−η∞)/(η₀−η∞). Near η₀ take ln1p of u − 1, near η∞ the log of
    // u itself, so neither end cancels; expm1 keeps u^{2/(r−2)} − 1 accurate.
    let spread = p.eta0() - p.eta_inf();
    let ln_u = if zeta - p.eta_inf() < 0.5 * spread {
        ((zeta - p.eta_inf()) / spread).ln()
    } else {
        ((zeta - p.eta0()) / spread).ln_1p()
    };
    let bracket = ((2.0 / (p.r() - 2.0)) * ln_u).exp_m1().max(0.0);
    Ok(zeta * (2.0 / p.lambda() * bracket).sqrt())
}

/// Shear rate `y` with `η̃(y)·y = τ`.
///
/// `η̃(y)·y` is strictly increasing for every admissible `r`, so the root
/// is bracketed by `[τ/η₀, τ/η∞]` (`[0, τ/η₀]` when `r > 2`). Newton steps
/// that leave the bracket are replaced by bisection.
pub fn shear_rate_for_stress(tau: f64, params: &FluidParams) -> Result<f64> {
    non_negative("tau", tau)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let p = params;
    let (mut lo, mut hi) = if p.shear_thinning() {
        (tau / p.eta0(), tau / p.eta_inf())
    } else {
        (0.0, tau / p.eta0())
    };
    let dv = p.eta0() - p.eta_inf();
    let half_lambda = 0.5 * p.lambda();
    let exponent = 0.5 * p.r() - 2.0;
    let residual = |y: f64| -> (f64, f64) {
        let a = half_lambda * y * y;
        let base = (1.0 + a).powf(exponent);
        let value = (dv * base * (1.0 + a) + p.eta_inf()) * y - tau;
        let slope = p.eta_inf() + dv * base * (1.0 + (p.r() - 1.0) * a);
        (value, slope)
    };
    let mut y = if p.shear_thinning() { lo } else { hi };
    for _ in 0..ROOT_MAX_ITER {
        let (h, dh) = residual(y);
        if h == 0.0 {
            return Ok(y);
        }
        if h < 0.0 {
            lo = lo.max(y);
        } else {
            hi = hi.min(y);
        }
        let mut next = y - h / dh;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - y).abs();
        y = next;
        if step <= 2.0 * f64::EPSILON * y || hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok(y);
        }
    }
    Err(Error::RootFinding {
        lo,
        hi,
        iterations: ROOT_MAX_ITER,
    })
}

/// Effective viscosity `ζ = ψ(τ)`, the inverse of [`stress_from_viscosity`].
pub fn psi(tau: f64, params: &FluidParams) -> Result<f64> {
    let y = shear_rate_for_stress(tau, params)?;
    Ok(reduced_viscosity(y, params))
}

/// Hele-Shaw mobility `M(s) = 2∫_{-1/2}^{1/2} ξ²/ψ(2s|ξ|) dξ`; equals
/// `1/(6η₀)` at `s = 0`.
pub fn mobility(s: f64, params: &FluidParams, quad: &MobilityQuadrature) -> Result<f64> {
    non_negative("s", s)?;
    if s == 0.0 {
        return Ok(1.0 / (6.0 * params.eta0()));
    }
    let half = quad.integrate(0.0, 0.5, |xi| Ok(xi * xi / psi(2.0 * s * xi, params)?))?;
    Ok(4.0 * half)
}

/// Derivative `M'(s) = −8∫₀^{1/2} ξ³ψ'(2sξ)/ψ(2sξ)² dξ` of the mobility.
pub fn mobility_derivative(s: f64, params: &FluidParams, quad: &MobilityQuadrature) -> Result<f64> {
    non_negative("s", s)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let integral = quad.integrate(0.0, 0.5, |xi| {
        let (zeta, slope) = psi_with_slope(2.0 * s * xi, params)?;
        Ok(xi * xi * xi * slope / (zeta * zeta))
    })?;
    Ok(-8.0 * integral)
}

/// Potential, mobility and mobility derivative `(Φ(s), M(s), M'(s))` from
/// one adaptive pass sharing the `ψ` evaluations.
pub fn mobility_terms(s: f64, params: &FluidParams, quad: &MobilityQuadrature) -> Result<[f64; 3]> {
    non_negative("s", s)?;
    if s == 0.0 {
        return Ok([0.0, 1.0 / (6.0 * params.eta0()), 0.0]);
    }
    let [pot, mob, der] = quad.integrate_many(0.0, 0.5, |xi| {
        let (zeta, slope) = psi_with_slope(2.0 * s * xi, params)?;
        Ok([
            xi * (1.0 - 2.0 * xi) / zeta,
            xi * xi / zeta,
            xi * xi * xi * slope / (zeta * zeta),
        ])
    })?;
    Ok([2.0 * s * s * pot, 4.0 * mob, -8.0 * der])
}

/// `ψ(τ)` together with `ψ'(τ) = η̃'(y)/(η̃(y)y)'` at the matching rate `y`.
fn psi_with_slope(tau: f64, p: &FluidParams) -> Result<(f64, f64)> {
    let y = shear_rate_for_stress(tau, p)?;
    let dv = p.eta0() - p.eta_inf();
    let a = 0.5 * p.lambda() * y * y;
    let base = (1.0 + a).powf(0.5 * p.r() - 2.0);
    let dvisc = dv * (0.5 * p.r() - 1.0) * base * p.lambda() * y;
    let dstress = p.eta_inf() + dv * base * (1.0 + (p.r() - 1.0) * a);
    Ok((reduced_viscosity(y, p), dvisc / dstress))
}

/// Convex potential `Φ(s) = ∫₀ˢ M(t)·t dt` of the Carreau flux, evaluated
/// as the single integral `2s²∫₀^{1/2} ξ(1−2ξ)/ψ(2sξ) dξ`.
pub fn mobility_potential(s: f64, params: &FluidParams, quad: &MobilityQuadrature) -> Result<f64> {
    non_negative("s", s)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let integral = quad.integrate(0.0, 0.5, |xi| {
        Ok(xi * (1.0 - 2.0 * xi) / psi(2.0 * s * xi, params)?)
    })?;
    Ok(2.0 * s * s * integral)
}

fn require_thickening(params: &FluidParams) -> Result<()> {
    if params.shear_thinning() {
        return Err(Error::param(
            "r",
            format!("power-law limit needs r > 2, got {}", params.r_exact()),
        ));
    }
    Ok(())
}

/// Coefficient `k = 2^{-r/2}(η₀−η∞)λ^{(r−2)/2}` of the reduced power-law
/// momentum equation `-k ∂(|∂w|^{r−2}∂w) = -g`.
pub fn powerlaw_consistency(params: &FluidParams) -> Result<f64> {
    require_thickening(params)?;
    let r = params.r();
    Ok(2f64.powf(-0.5 * r) * (params.eta0() - params.eta_inf()) * params.lambda().powf(0.5 * (r - 2.0)))
}

/// Constant `c_r` such that the thickness-averaged power-law profile driven
/// by `g` equals `-c_r |g|^{r'−2} g`:
/// `c_r = 2^{−r'/2}(η₀−η∞)^{1−r'}λ^{−(r−2)/(2(r−1))}/(r'+1)`.
pub fn powerlaw_prefactor(params: &FluidParams) -> Result<f64> {
    require_thickening(params)?;
    let r = params.r();
    let rp = params.conjugate_exponent();
    Ok(2f64.powf(-0.5 * rp)
        * (params.eta0() - params.eta_inf()).powf(1.0 - rp)
        * params.lambda().powf(-(r - 2.0) / (2.0 * (r - 1.0)))
        / (rp + 1.0))
}

/// Amplitude `κ = k^{1−r'}/r'` of the power-law profile
/// `w(z₃) = −κ((1/2)^{r'} − |1/2−z₃|^{r'})|g|^{r'−2}g`.
pub fn powerlaw_profile_amplitude(params: &FluidParams) -> Result<f64> {
    let k = powerlaw_consistency(params)?;
    let rp = params.conjugate_exponent();
    Ok(k.powf(1.0 - rp) / rp)
}
