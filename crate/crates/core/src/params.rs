//! Constitutive and regime parameters, regime classification and the
//! a priori scaling exponents of the thin-film velocity.
//!
//! Exponents that decide a regime boundary (`ℓ = 1`, `γ = 1`, `r = 2`) are
//! kept as exact rationals so that classification never depends on float
//! rounding.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

use crate::{Error, Result};

pub type Rational = Ratio<i64>;

/// Parses `"3/2"`, `"-0.25"`, `"2"` or `"1.5e-1"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::param("rational", format!("cannot parse `{text}` as an exact rational"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().map_err(|_| bad())?;
        let d: i64 = den.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(Error::param("rational", format!("zero denominator in `{text}`")));
        }
        return Ok(Rational::new(n, d));
    }

    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.as_bytes().first() {
        Some(b'-') => (true, &mantissa[1..]),
        Some(b'+') => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer: i64 = all_digits.trim_start_matches('0').parse().unwrap_or(0);
    if !all_digits.trim_start_matches('0').is_empty() && numer == 0 {
        return Err(bad());
    }
    let scale = exponent - frac_part.len() as i32;
    let pow10 = |k: u32| 10i64.checked_pow(k).ok_or_else(bad);
    let mut value = if scale >= 0 {
        numer = numer.checked_mul(pow10(scale as u32)?).ok_or_else(bad)?;
        Rational::from_integer(numer)
    } else {
        Rational::new(numer, pow10((-scale) as u32)?)
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Exact rational with the same shortest decimal representation as `x`.
pub fn rational_from_f64(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        return Err(Error::param("rational", format!("{x} is not finite")));
    }
    parse_rational(&format!("{x}"))
}

pub fn rational_to_f64(q: Rational) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Carreau constants together with the viscosity scaling exponent `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    eta0: f64,
    eta_inf: f64,
    lambda: f64,
    r: Rational,
    gamma: Rational,
    r_value: f64,
}

impl FluidParams {
    pub fn new(eta0: f64, eta_inf: f64, lambda: f64, r: Rational, gamma: Rational) -> Result<Self> {
        if !(eta_inf.is_finite() && eta_inf > 0.0) {
            return Err(Error::param("eta_inf", format!("must be positive, got {eta_inf}")));
        }
        if !(eta0.is_finite() && eta0 > eta_inf) {
            return Err(Error::param(
                "eta0",
                format!("must exceed eta_inf = {eta_inf}, got {eta0}"),
            ));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param("lambda", format!("must be positive, got {lambda}")));
        }
        check_flow_index(r)?;
        Ok(Self {
            eta0,
            eta_inf,
            lambda,
            r,
            gamma,
            r_value: rational_to_f64(r),
        })
    }

    /// Convenience constructor for tests and sampled parameter sets.
    pub fn from_f64(eta0: f64, eta_inf: f64, lambda: f64, r: f64, gamma: f64) -> Result<Self> {
        Self::new(eta0, eta_inf, lambda, rational_from_f64(r)?, rational_from_f64(gamma)?)
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn eta_inf(&self) -> f64 {
        self.eta_inf
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r(&self) -> f64 {
        self.r_value
    }

    pub fn r_exact(&self) -> Rational {
        self.r
    }

    pub fn gamma(&self) -> Rational {
        self.gamma
    }

    /// Hölder conjugate `r' = r/(r-1)`.
    pub fn conjugate_exponent(&self) -> f64 {
        self.r_value / (self.r_value - 1.0)
    }

    pub fn conjugate_exponent_exact(&self) -> Rational {
        self.r / (self.r - Rational::one())
    }

    pub fn shear_thinning(&self) -> bool {
        self.r < Rational::from_integer(2)
    }

    pub fn limit_model(&self) -> LimitModelKind {
        // r was validated on construction
        limit_model_kind(self.r, self.gamma).expect("validated flow index")
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.eta0, self.eta_inf, lambda, self.r, self.gamma)
    }

    pub fn with_viscosities(&self, eta0: f64, eta_inf: f64) -> Result<Self> {
        Self::new(eta0, eta_inf, self.lambda, self.r, self.gamma)
    }

    pub fn with_gamma(&self, gamma: Rational) -> Result<Self> {
        Self::new(self.eta0, self.eta_inf, self.lambda, self.r, gamma)
    }
}

fn check_flow_index(r: Rational) -> Result<()> {
    if r <= Rational::one() {
        return Err(Error::param("r", format!("flow index must exceed 1, got {r}")));
    }
    if r == Rational::from_integer(2) {
        return Err(Error::param(
            "r",
            "flow index r = 2 is excluded; select a Newtonian limit through gamma instead",
        ));
    }
    Ok(())
}

/// Thickness/period regime of the perforated film.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeLabel {
    /// Homogeneously thin: obstacles much narrower than the film height (`ℓ > 1`).
    Htpm,
    /// Proportionally thin (`ℓ = 1`).
    Ptpm,
    /// Very thin: obstacles much wider than the film height (`0 < ℓ < 1`).
    Vtpm,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::Htpm => "HTPM",
            RegimeLabel::Ptpm => "PTPM",
            RegimeLabel::Vtpm => "VTPM",
        })
    }
}

pub fn classify_regime(ell: Rational) -> Result<RegimeLabel> {
    if !ell.is_positive() {
        return Err(Error::param("ell", format!("must be positive, got {ell}")));
    }
    Ok(match ell.cmp(&Rational::one()) {
        std::cmp::Ordering::Greater => RegimeLabel::Htpm,
        std::cmp::Ordering::Equal => RegimeLabel::Ptpm,
        std::cmp::Ordering::Less => RegimeLabel::Vtpm,
    })
}

/// Family of the homogenized filtration law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LimitModelKind {
    /// Linear Darcy law with the zero-shear viscosity `η₀`.
    NewtonianZeroShear,
    /// Linear Darcy law with the infinite-shear viscosity `η∞`.
    NewtonianInfiniteShear,
    Carreau,
    PowerLaw,
}

impl LimitModelKind {
    pub fn newtonian_viscosity(&self, params: &FluidParams) -> Option<f64> {
        match self {
            LimitModelKind::NewtonianZeroShear => Some(params.eta0()),
            LimitModelKind::NewtonianInfiniteShear => Some(params.eta_inf()),
            _ => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(
            self,
            LimitModelKind::NewtonianZeroShear | LimitModelKind::NewtonianInfiniteShear
        )
    }
}

impl fmt::Display for LimitModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitModelKind::NewtonianZeroShear => "NEWTONIAN(eta0)",
            LimitModelKind::NewtonianInfiniteShear => "NEWTONIAN(eta_inf)",
            LimitModelKind::Carreau => "CARREAU",
            LimitModelKind::PowerLaw => "POWER_LAW",
        })
    }
}

pub fn limit_model_kind(r: Rational, gamma: Rational) -> Result<LimitModelKind> {
    check_flow_index(r)?;
    let one = Rational::one();
    let kind = match gamma.cmp(&one) {
        std::cmp::Ordering::Less => LimitModelKind::NewtonianZeroShear,
        std::cmp::Ordering::Equal => LimitModelKind::Carreau,
        std::cmp::Ordering::Greater if r < Rational::from_integer(2) => {
            LimitModelKind::NewtonianInfiniteShear
        }
        std::cmp::Ordering::Greater => LimitModelKind::PowerLaw,
    };
    Ok(kind)
}

/// Exponents `a` of the bounds `‖·‖ ≤ C ε^a` for the velocity, its
/// gradient and its symmetrized gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormExponents {
    pub velocity: Rational,
    pub gradient: Rational,
    pub strain_rate: Rational,
}

impl NormExponents {
    fn new(velocity: Rational, gradient: Rational) -> Self {
        Self {
            velocity,
            gradient,
            strain_rate: gradient,
        }
    }
}

/// A priori estimates on the physical film `Ω_ε` and on the rescaled
/// domain of unit height, plus the exponent `a` such that `ε^a ũ_ε`
/// converges weakly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalingTable {
    pub physical_l2: NormExponents,
    pub rescaled_l2: NormExponents,
    /// `L^r` bounds, present only for shear-thickening fluids (`r > 2`).
    pub physical_lr: Option<NormExponents>,
    pub rescaled_lr: Option<NormExponents>,
    pub normalization: Rational,
}

pub fn scaling_table(r: Rational, gamma: Rational) -> Result<ScalingTable> {
    check_flow_index(r)?;
    let one = Rational::one();
    let two = Rational::from_integer(2);

    let physical_l2 = NormExponents::new(Rational::new(5, 2) - gamma, Rational::new(3, 2) - gamma);
    let rescaled_l2 = NormExponents::new(two - gamma, one - gamma);

    if r < two {
        return Ok(ScalingTable {
            physical_l2,
            rescaled_l2,
            physical_lr: None,
            rescaled_lr: None,
            normalization: gamma - two,
        });
    }

    // Dominant shift of the L^r bounds; the rescaling z3 = x3/ε removes 1/r.
    let shift = match gamma.cmp(&one) {
        std::cmp::Ordering::Less => -(two / r) * (gamma - one),
        std::cmp::Ordering::Equal => Rational::zero(),
        std::cmp::Ordering::Greater => -(gamma - one) / (r - one),
    };
    let inv_r = one / r;
    let physical_lr = NormExponents::new(shift + (r + one) / r, shift + inv_r);
    let rescaled_lr = NormExponents::new(shift + one, shift);
    let normalization = match gamma.cmp(&one) {
        std::cmp::Ordering::Less => gamma - two,
        std::cmp::Ordering::Equal => -one,
        std::cmp::Ordering::Greater => (gamma - r) / (r - one),
    };
    Ok(ScalingTable {
        physical_l2,
        rescaled_l2,
        physical_lr: Some(physical_lr),
        rescaled_lr: Some(rescaled_lr),
        normalization,
    })
}

impl fmt::Display for ScalingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, label: &str, e: &NormExponents| {
            writeln!(
                f,
                "{label:<18} |u|: {:<10} |Du|: {:<10} |D[u]|: {}",
                e.velocity, e.gradient, e.strain_rate
            )
        };
        row(f, "L2 physical", &self.physical_l2)?;
        row(f, "L2 rescaled", &self.rescaled_l2)?;
        if let Some(e) = &self.physical_lr {
            row(f, "Lr physical", e)?;
        }
        if let Some(e) = &self.rescaled_lr {
            row(f, "Lr rescaled", e)?;
        }
        write!(f, "velocity normalization exponent: {}", self.normalization)
    }
}
