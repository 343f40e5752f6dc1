//! Through-thickness velocity profiles and reconstruction of the limit
//! velocity from a cell corrector and a macroscopic solution.
//!
//! Profiles are parametrized by the local gradient `G = −(δ + ∇q_δ)` at a
//! cell point, where `δ = f' − ∇p` is the macroscopic driving. Each profile
//! vanishes at `z₃ = 0` and `z₃ = 1` and its thickness mean is the local
//! filtration flux:
//!
//! * Newtonian: `w = (1/η)(z₃² − z₃)G`, mean `−G/(6η)`,
//! * Carreau: `w = −2(∫_{|1/2−z₃|}^{1/2} ξ/ψ(2|G|ξ) dξ)G`, mean `−M(|G|)G`,
//! * power law: `w = −κ((1/2)^{r'} − |1/2−z₃|^{r'})|G|^{r'−2}G`, mean
//!   `−c_r|G|^{r'−2}G`.

use crate::cellmesh::PeriodicMesh;
use crate::cellsolve::EffectiveLaw;
use crate::constitutive::{self, MobilityQuadrature};
use crate::macro_darcy::MacroSolution;
use crate::params::{FluidParams, LimitModelKind};
use crate::quadrature::GaussLegendre;
use crate::{Error, Result, Vec2};

fn check_height(z3: f64) -> Result<()> {
    if (0.0..=1.0).contains(&z3) {
        Ok(())
    } else {
        Err(Error::param("z3", format!("height fraction must lie in [0, 1], got {z3}")))
    }
}

fn scale(g: Vec2, factor: f64) -> Vec2 {
    [factor * g[0], factor * g[1]]
}

pub fn newtonian_profile(g: Vec2, eta: f64, z3: f64) -> Result<Vec2> {
    check_height(z3)?;
    if !(eta > 0.0) {
        return Err(Error::param("eta", format!("viscosity must be positive, got {eta}")));
    }
    Ok(scale(g, (z3 * z3 - z3) / eta))
}

pub fn carreau_profile(g: Vec2, params: &FluidParams, z3: f64, quad: &MobilityQuadrature) -> Result<Vec2> {
    check_height(z3)?;
    let s = crate::norm(g);
    // The integrand is odd in ξ, so the integral from 1/2 − z₃ equals the
    // one from |1/2 − z₃|; this keeps the profile exactly symmetric.
    let lower = (0.5 - z3).abs();
    if lower >= 0.5 {
        return Ok([0.0, 0.0]);
    }
    let integral = quad.integrate(lower, 0.5, |xi| Ok(xi / constitutive::psi(2.0 * s * xi, params)?))?;
    Ok(scale(g, -2.0 * integral))
}

pub fn powerlaw_profile(g: Vec2, params: &FluidParams, z3: f64) -> Result<Vec2> {
    check_height(z3)?;
    let kappa = constitutive::powerlaw_profile_amplitude(params)?;
    let s = crate::norm(g);
    if s == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let rp = params.conjugate_exponent();
    let shape = 0.5f64.powf(rp) - (0.5 - z3).abs().powf(rp);
    Ok(scale(g, -kappa * shape * s.powf(rp - 2.0)))
}

/// Law selecting one of the three closed-form profiles.
#[derive(Debug, Clone)]
pub enum ProfileLaw {
    Newtonian { eta: f64 },
    Carreau { params: FluidParams, quad: MobilityQuadrature },
    PowerLaw { params: FluidParams },
}

impl ProfileLaw {
    /// Profile law matching an effective law.
    pub fn for_law(law: &EffectiveLaw) -> Self {
        let params = *law.params();
        match law.model() {
            LimitModelKind::Carreau => ProfileLaw::Carreau {
                params,
                quad: law.quadrature().clone(),
            },
            LimitModelKind::PowerLaw => ProfileLaw::PowerLaw { params },
            kind => ProfileLaw::Newtonian {
                eta: kind.newtonian_viscosity(&params).expect("linear kind"),
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProfileLaw::Newtonian { .. } => "newtonian",
            ProfileLaw::Carreau { .. } => "carreau",
            ProfileLaw::PowerLaw { .. } => "power_law",
        }
    }

    pub fn velocity(&self, g: Vec2, z3: f64) -> Result<Vec2> {
        match self {
            ProfileLaw::Newtonian { eta } => newtonian_profile(g, *eta, z3),
            ProfileLaw::Carreau { params, quad } => carreau_profile(g, params, z3, quad),
            ProfileLaw::PowerLaw { params } => powerlaw_profile(g, params, z3),
        }
    }

    /// Closed-form thickness mean of the profile.
    pub fn mean(&self, g: Vec2) -> Result<Vec2> {
        match self {
            ProfileLaw::Newtonian { eta } => Ok(scale(g, -1.0 / (6.0 * eta))),
            ProfileLaw::Carreau { params, quad } => {
                Ok(scale(g, -constitutive::mobility(crate::norm(g), params, quad)?))
            }
            ProfileLaw::PowerLaw { params } => {
                let s = crate::norm(g);
                if s == 0.0 {
                    return Ok([0.0, 0.0]);
                }
                let c = constitutive::powerlaw_prefactor(params)?;
                Ok(scale(g, -c * s.powf(params.conjugate_exponent() - 2.0)))
            }
        }
    }

    /// Thickness mean by Gauss–Legendre quadrature on each half of `[0, 1]`;
    /// the power-law profile is not smooth at the midplane.
    pub fn quadrature_mean(&self, g: Vec2, nodes: usize) -> Result<Vec2> {
        let rule = GaussLegendre::new(nodes);
        let mut mean = [0.0; 2];
        for (a, b) in [(0.0, 0.5), (0.5, 1.0)] {
            for c in 0..2 {
                mean[c] += rule.integrate(a, b, |z| Ok(self.velocity(g, z)?[c]))?;
            }
        }
        Ok(mean)
    }

    pub fn sample(&self, g: Vec2, n: usize) -> Result<Profile> {
        if n < 2 {
            return Err(Error::param("n", "a profile needs at least two intervals"));
        }
        let z: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let w = z.iter().map(|&z3| self.velocity(g, z3)).collect::<Result<_>>()?;
        Ok(Profile {
            g,
            law: self.name(),
            z,
            w,
        })
    }
}

/// A sampled profile `z₃ ↦ w(z₃)`.
#[derive(Debug, Clone)]
pub struct Profile {
    pub g: Vec2,
    pub law: &'static str,
    pub z: Vec<f64>,
    pub w: Vec<Vec2>,
}

impl Profile {
    /// Largest componentwise difference to another profile sampled on the
    /// same heights.
    pub fn sup_distance(&self, other: &Profile) -> Result<f64> {
        if self.z.len() != other.z.len() || self.z.iter().zip(&other.z).any(|(a, b)| (a - b).abs() > 1e-15) {
            return Err(Error::param("profile", "profiles are sampled on different heights"));
        }
        Ok(self
            .w
            .iter()
            .zip(&other.w)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.w.iter().map(|w| w[0].abs().max(w[1].abs())).fold(0.0, f64::max)
    }
}

/// Limit velocity `(û', 0)` at cell point `z = (z₁, z₂, z₃)` for the
/// macroscopic driving `delta`; zero inside the obstacle.
pub fn cell_velocity(law: &EffectiveLaw, delta: Vec2, z: [f64; 3]) -> Result<[f64; 3]> {
    check_height(z[2])?;
    let mesh: &PeriodicMesh = law.mesh();
    let zc = [z[0], z[1]];
    let t = mesh.locate(zc)?;
    let element = match mesh.element_of_triangle(t) {
        Some(e) if !mesh.geometry().obstacle_indicator(zc) => &mesh.elements()[e],
        _ => return Ok([0.0; 3]),
    };
    let q = law.corrector(delta)?;
    let grad = element.gradient(&q);
    let g = [-(delta[0] + grad[0]), -(delta[1] + grad[1])];
    let w = ProfileLaw::for_law(law).velocity(g, z[2])?;
    Ok([w[0], w[1], 0.0])
}

/// Limit velocity at macroscopic point `x` and cell point `z`.
pub fn reconstruct_velocity(
    solution: &MacroSolution,
    law: &EffectiveLaw,
    x: Vec2,
    z: [f64; 3],
) -> Result<[f64; 3]> {
    let delta = solution.driving_at(x)?;
    cell_velocity(law, delta, z)
}

/// Cell integral of the reconstructed velocity, `∫_{Z'_f}∫₀¹ û' dz₃ dz'`,
/// with `nodes`-point Gauss–Legendre quadrature on each half-thickness and
/// the element-constant gradient of each fluid triangle.
pub fn reconstructed_filtration(law: &EffectiveLaw, delta: Vec2, nodes: usize) -> Result<Vec2> {
    let mesh = law.mesh();
    let q = law.corrector(delta)?;
    let profile = ProfileLaw::for_law(law);
    let mut total = [0.0; 2];
    for el in mesh.elements() {
        let grad = el.gradient(&q);
        let g = [-(delta[0] + grad[0]), -(delta[1] + grad[1])];
        let mean = profile.quadrature_mean(g, nodes)?;
        total[0] += el.area * mean[0];
        total[1] += el.area * mean[1];
    }
    Ok(total)
}

/// Velocity samples on a structured `(z₁, z₂, z₃)` lattice.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    /// Samples with the first index varying fastest.
    pub values: Vec<[f64; 3]>,
}

/// Samples [`cell_velocity`] for the driving `delta` on a `dims` lattice
/// spanning the unit cell and the film thickness.
pub fn reconstruct_lattice(law: &EffectiveLaw, delta: Vec2, dims: [usize; 3]) -> Result<Lattice> {
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::param("dims", "a lattice needs at least two points per direction"));
    }
    let origin = [-0.5, -0.5, 0.0];
    let spacing = dims.map(|d| 1.0 / (d - 1) as f64);
    let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let z = [
                    (origin[0] + i as f64 * spacing[0]).min(0.5),
                    (origin[1] + j as f64 * spacing[1]).min(0.5),
                    (k as f64 * spacing[2]).min(1.0),
                ];
                values.push(cell_velocity(law, delta, z)?);
            }
        }
    }
    Ok(Lattice {
        dims,
        origin,
        spacing,
        values,
    })
}
