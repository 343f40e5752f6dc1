//! Periodic cell problems on the fluid part of the unit cell and the
//! effective laws assembled from them.
//!
//! Every cell problem is the minimization of a convex energy
//! `E(q) = Σ_T |T| Φ(|δ + ∇q|)` over mean-zero periodic P1 fields `q`, with
//!
//! * `Φ(s) = s²/2` for the linear (Newtonian) problems,
//! * `Φ(s) = (s² + ε²)^{r'/2}/r'` for the power-law problem,
//! * `Φ(s) = ∫₀ˢ M(t)t dt` for the Carreau problem.
//!
//! Writing `Φ'(s) = c(s)·s`, the Euler–Lagrange equation is
//! `div(c(|δ+∇q|)(δ+∇q)) = 0` and the flux is `Σ_T |T| c(|g|) g`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::cellmesh::{FluidElement, PeriodicMesh};
use crate::constitutive::{self, MobilityQuadrature};
use crate::linalg::{conjugate_gradient, CgOptions, CsrMatrix};
use crate::params::{FluidParams, LimitModelKind};
use crate::{Error, Result, Vec2};

/// Pointwise law of a cell problem.
#[derive(Debug, Clone)]
pub enum CellLaw {
    Linear,
    PowerLaw { r_prime: f64 },
    Carreau {
        params: FluidParams,
        quad: MobilityQuadrature,
    },
}

impl CellLaw {
    pub fn name(&self) -> &'static str {
        match self {
            CellLaw::Linear => "linear",
            CellLaw::PowerLaw { .. } => "power_law",
            CellLaw::Carreau { .. } => "carreau",
        }
    }

    fn validate(&self) -> Result<()> {
        if let CellLaw::PowerLaw { r_prime } = *self {
            if !(r_prime > 1.0 && r_prime < 2.0) {
                return Err(Error::param(
                    "r_prime",
                    format!("power-law cell problem needs 1 < r' < 2, got {r_prime}"),
                ));
            }
        }
        Ok(())
    }
}

/// How each nonlinear step linearizes the flux `c(|g|)g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    /// Frozen coefficient for the power law, whose modulus degenerates
    /// where the driven gradient vanishes; full tangent otherwise.
    Auto,
    /// Full tangent `c I + (c'(s)/s) g gᵀ`.
    Newton,
    /// Frozen scalar coefficient `c I` (Kačanov iteration).
    Picard,
}

#[derive(Debug, Clone, Copy)]
pub struct CellSolverOptions {
    /// Stop once the residual norm is below `tol` times the norm of the
    /// residual scale built from the driving vector.
    pub tol: f64,
    pub max_iter: usize,
    pub linearization: Linearization,
    pub cg: CgOptions,
}

impl Default for CellSolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            linearization: Linearization::Auto,
            cg: CgOptions::default(),
        }
    }
}

/// Regularization `ε` of the power-law modulus for a given driving vector.
pub fn powerlaw_regularization(delta: Vec2) -> f64 {
    1e-8 * crate::norm(delta).max(1.0)
}

#[derive(Clone, Copy)]
enum Pointwise<'a> {
    Quadratic,
    Power {
        r_prime: f64,
        eps2: f64,
    },
    Carreau {
        params: &'a FluidParams,
        quad: &'a MobilityQuadrature,
    },
}

impl<'a> Pointwise<'a> {
    fn new(law: &'a CellLaw, delta: Vec2) -> Self {
        match law {
            CellLaw::Linear => Pointwise::Quadratic,
            CellLaw::PowerLaw { r_prime } => {
                let eps = powerlaw_regularization(delta);
                Pointwise::Power {
                    r_prime: *r_prime,
                    eps2: eps * eps,
                }
            }
            CellLaw::Carreau { params, quad } => Pointwise::Carreau { params, quad },
        }
    }

    /// `(Φ(s), c(s), c'(s)/s)`.
    fn terms(&self, s: f64) -> Result<[f64; 3]> {
        match *self {
            Pointwise::Quadratic => Ok([0.5 * s * s, 1.0, 0.0]),
            Pointwise::Power { r_prime, eps2 } => {
                let base = s * s + eps2;
                Ok([
                    base.powf(0.5 * r_prime) / r_prime,
                    base.powf(0.5 * r_prime - 1.0),
                    (r_prime - 2.0) * base.powf(0.5 * r_prime - 2.0),
                ])
            }
            Pointwise::Carreau { params, quad } => {
                let [phi, m, dm] = constitutive::mobility_terms(s, params, quad)?;
                Ok([phi, m, if s == 0.0 { 0.0 } else { dm / s }])
            }
        }
    }

    fn coefficient(&self, s: f64) -> Result<f64> {
        match *self {
            Pointwise::Quadratic => Ok(1.0),
            Pointwise::Power { r_prime, eps2 } => Ok((s * s + eps2).powf(0.5 * r_prime - 1.0)),
            Pointwise::Carreau { params, quad } => constitutive::mobility(s, params, quad),
        }
    }
}

#[inline]
fn driven_gradient(el: &FluidElement, delta: Vec2, q: &[f64]) -> Vec2 {
    let g = el.gradient(q);
    [delta[0] + g[0], delta[1] + g[1]]
}

/// Pointwise quantities of a field: per-element `g = δ + ∇q`, `c(|g|)` and
/// the energy and residual they produce.
struct FieldState {
    q: Vec<f64>,
    g: Vec<Vec2>,
    coeff: Vec<f64>,
    slope: Vec<f64>,
    energy: f64,
    residual: Vec<f64>,
}

/// Discrete cell energy for a fixed law and driving vector.
pub struct CellEnergy<'a> {
    mesh: &'a PeriodicMesh,
    delta: Vec2,
    pointwise: Pointwise<'a>,
}

impl<'a> CellEnergy<'a> {
    pub fn new(mesh: &'a PeriodicMesh, law: &'a CellLaw, delta: Vec2) -> Result<Self> {
        law.validate()?;
        if !(delta[0].is_finite() && delta[1].is_finite()) {
            return Err(Error::param("delta", format!("driving vector must be finite, got {delta:?}")));
        }
        Ok(Self {
            mesh,
            delta,
            pointwise: Pointwise::new(law, delta),
        })
    }

    pub fn energy(&self, q: &[f64]) -> Result<f64> {
        let values: Vec<f64> = self
            .mesh
            .elements()
            .par_iter()
            .map(|el| {
                let g = driven_gradient(el, self.delta, q);
                Ok(el.area * self.pointwise.terms(crate::norm(g))?[0])
            })
            .collect::<Result<_>>()?;
        Ok(values.iter().sum())
    }

    /// Gradient of [`CellEnergy::energy`] with respect to the DOF values.
    pub fn gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        let coeff = self.coefficients(q)?;
        let mut out = vec![0.0; self.mesh.num_dofs()];
        for (el, c) in self.mesh.elements().iter().zip(&coeff) {
            let g = driven_gradient(el, self.delta, q);
            for k in 0..3 {
                out[el.dofs[k]] += el.area * c * crate::dot(g, el.grads[k]);
            }
        }
        Ok(out)
    }

    /// `Σ_T |T| c(|g|) g`.
    pub fn flux(&self, q: &[f64]) -> Result<Vec2> {
        let coeff = self.coefficients(q)?;
        let mut flux = [0.0; 2];
        for (el, c) in self.mesh.elements().iter().zip(&coeff) {
            let g = driven_gradient(el, self.delta, q);
            flux[0] += el.area * c * g[0];
            flux[1] += el.area * c * g[1];
        }
        Ok(flux)
    }

    fn coefficients(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.mesh
            .elements()
            .par_iter()
            .map(|el| self.pointwise.coefficient(crate::norm(driven_gradient(el, self.delta, q))))
            .collect()
    }

    fn state(&self, q: Vec<f64>) -> Result<FieldState> {
        let pairs: Vec<(Vec2, [f64; 3])> = self
            .mesh
            .elements()
            .par_iter()
            .map(|el| {
                let g = driven_gradient(el, self.delta, &q);
                Ok((g, self.pointwise.terms(crate::norm(g))?))
            })
            .collect::<Result<_>>()?;
        let mut energy = 0.0;
        let mut residual = vec![0.0; self.mesh.num_dofs()];
        let mut g_all = Vec::with_capacity(pairs.len());
        let mut coeff = Vec::with_capacity(pairs.len());
        let mut slope = Vec::with_capacity(pairs.len());
        for (el, &(g, [phi, c, kappa])) in self.mesh.elements().iter().zip(&pairs) {
            energy += el.area * phi;
            for k in 0..3 {
                residual[el.dofs[k]] += el.area * c * crate::dot(g, el.grads[k]);
            }
            g_all.push(g);
            coeff.push(c);
            slope.push(kappa);
        }
        Ok(FieldState {
            q,
            g: g_all,
            coeff,
            slope,
            energy,
            residual,
        })
    }

    /// Norm of the residual produced by the driving vector alone with every
    /// contribution taken in absolute value.
    fn residual_scale(&self) -> Result<f64> {
        let s = crate::norm(self.delta);
        let c = self.pointwise.coefficient(s)?;
        let mut scale = vec![0.0; self.mesh.num_dofs()];
        for el in self.mesh.elements() {
            for k in 0..3 {
                scale[el.dofs[k]] += el.area * c * s * crate::norm(el.grads[k]);
            }
        }
        Ok(l2(&scale))
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sparsity pattern and per-element storage slots of the periodic P1
/// stiffness matrix.
struct Assembler {
    matrix: CsrMatrix,
    slots: Vec<[usize; 9]>,
}

impl Assembler {
    fn new(mesh: &PeriodicMesh) -> Self {
        let pairs = mesh
            .elements()
            .iter()
            .flat_map(|el| (0..9).map(move |m| (el.dofs[m / 3], el.dofs[m % 3])));
        let matrix = CsrMatrix::with_pattern(mesh.num_dofs(), pairs);
        let slots = mesh
            .elements()
            .iter()
            .map(|el| {
                let mut s = [0; 9];
                for (m, slot) in s.iter_mut().enumerate() {
                    *slot = matrix.slot(el.dofs[m / 3], el.dofs[m % 3]);
                }
                s
            })
            .collect();
        Self { matrix, slots }
    }

    /// Assembles `Σ_T |T| ∇φ_k · D_T ∇φ_l` for per-element symmetric tensors.
    fn assemble(&mut self, mesh: &PeriodicMesh, tensors: &[[[f64; 2]; 2]]) -> &CsrMatrix {
        self.matrix.clear();
        for ((el, slots), d) in mesh.elements().iter().zip(&self.slots).zip(tensors) {
            for k in 0..3 {
                let gk = el.grads[k];
                let dk = [d[0][0] * gk[0] + d[0][1] * gk[1], d[1][0] * gk[0] + d[1][1] * gk[1]];
                for l in 0..3 {
                    let value = el.area * crate::dot(dk, el.grads[l]);
                    self.matrix.add_at_slot(slots[3 * k + l], value);
                }
            }
        }
        &self.matrix
    }
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    /// Corrector values on the fluid DOFs, lumped-mass mean zero.
    pub q: Vec<f64>,
    pub delta: Vec2,
    pub law: CellLaw,
    /// Unscaled cell flux `Σ_T |T| c(|δ+∇q|)(δ+∇q)`.
    pub flux: Vec2,
    pub residual: f64,
    pub iterations: usize,
    /// Energy at the initial field and after every accepted step.
    pub energy_history: Vec<f64>,
    /// Power-law modulus regularization `ε` (zero for other laws).
    pub regularization: f64,
}

/// Solves the cell problem for `law` driven by `delta`, optionally starting
/// from `initial`.
pub fn solve_cell(
    mesh: &PeriodicMesh,
    law: &CellLaw,
    delta: Vec2,
    options: &CellSolverOptions,
    initial: Option<&[f64]>,
) -> Result<CellSolution> {
    let energy = CellEnergy::new(mesh, law, delta)?;
    let regularization = match law {
        CellLaw::PowerLaw { .. } => powerlaw_regularization(delta),
        _ => 0.0,
    };
    let n = mesh.num_dofs();
    let mut q = match initial {
        Some(init) if init.len() == n => init.to_vec(),
        Some(init) => {
            return Err(Error::param(
                "initial",
                format!("initial field has {} values, mesh has {n} DOFs", init.len()),
            ))
        }
        None => vec![0.0; n],
    };
    mesh.remove_weighted_mean(&mut q);

    let scale = energy.residual_scale()?;
    let mut state = energy.state(q)?;
    let mut history = vec![state.energy];
    let mut residual_history = vec![l2(&state.residual)];
    if scale == 0.0 {
        return finish(&energy, state, law, delta, 0, history, regularization);
    }
    let target = options.tol * scale;
    let mut assembler = Assembler::new(mesh);
    let mut delta_q = vec![0.0; n];

    for iteration in 1..=options.max_iter {
        let rnorm = l2(&state.residual);
        if rnorm <= target {
            return finish(&energy, state, law, delta, iteration - 1, history, regularization);
        }
        let mut accepted;
        let mut linearization = match (options.linearization, law) {
            (Linearization::Auto, CellLaw::PowerLaw { .. }) => Linearization::Picard,
            (Linearization::Auto, _) => Linearization::Newton,
            (chosen, _) => chosen,
        };
        loop {
            let tensors = linearized_tensors(&state, linearization);
            let matrix = assembler.assemble(mesh, &tensors);
            let rhs: Vec<f64> = state.residual.iter().map(|r| -r).collect();
            delta_q.iter_mut().for_each(|x| *x = 0.0);
            conjugate_gradient(matrix, &rhs, &mut delta_q, options.cg)?;
            // A tangent step that needs damping is retried along the
            // frozen-coefficient direction, which is better scaled where
            // the modulus nearly vanishes.
            let full_only = linearization == Linearization::Newton;
            accepted = line_search(mesh, &energy, &state, &delta_q, rnorm, full_only)?;
            if accepted.is_some() || linearization == Linearization::Picard {
                break;
            }
            linearization = Linearization::Picard;
        }
        match accepted {
            Some(next) => {
                state = next;
                history.push(state.energy);
                residual_history.push(l2(&state.residual));
            }
            None => {
                return Err(Error::NoConvergence {
                    solver: "cell problem line search",
                    iterations: iteration,
                    residual: rnorm / scale,
                    history: residual_history.iter().map(|r| r / scale).collect(),
                })
            }
        }
    }
    let rnorm = l2(&state.residual);
    if rnorm <= target {
        return finish(&energy, state, law, delta, options.max_iter, history, regularization);
    }
    Err(Error::NoConvergence {
        solver: "cell problem",
        iterations: options.max_iter,
        residual: rnorm / scale,
        history: residual_history.iter().map(|r| r / scale).collect(),
    })
}

/// Backtracking on the energy along `direction`; `None` if no admissible
/// step was found (or the full step failed and `full_only` is set).
fn line_search(
    mesh: &PeriodicMesh,
    energy: &CellEnergy<'_>,
    state: &FieldState,
    direction: &[f64],
    rnorm: f64,
    full_only: bool,
) -> Result<Option<FieldState>> {
    let slope: f64 = state.residual.iter().zip(direction).map(|(r, d)| r * d).sum();
    let mut omega = 1.0;
    loop {
        let mut trial: Vec<f64> = state.q.iter().zip(direction).map(|(q, d)| q + omega * d).collect();
        mesh.remove_weighted_mean(&mut trial);
        let candidate = energy.state(trial)?;
        let sufficient = candidate.energy <= state.energy + 1e-4 * omega * slope;
        // Close to the minimizer energy differences drop below rounding;
        // there a step is kept if it does not raise the energy beyond
        // rounding and reduces the residual.
        let flat = (candidate.energy - state.energy).abs() <= 1e-12 * state.energy.abs()
            && l2(&candidate.residual) < rnorm;
        if sufficient || flat {
            return Ok(Some(candidate));
        }
        omega *= 0.5;
        if full_only || omega < 1e-12 {
            return Ok(None);
        }
    }
}

fn linearized_tensors(state: &FieldState, linearization: Linearization) -> Vec<[[f64; 2]; 2]> {
    state
        .g
        .iter()
        .zip(state.coeff.iter().zip(&state.slope))
        .map(|(g, (&c, &slope))| {
            let kappa = match linearization {
                Linearization::Picard => 0.0,
                Linearization::Newton | Linearization::Auto => slope,
            };
            [
                [c + kappa * g[0] * g[0], kappa * g[0] * g[1]],
                [kappa * g[1] * g[0], c + kappa * g[1] * g[1]],
            ]
        })
        .collect()
}

fn finish(
    energy: &CellEnergy<'_>,
    state: FieldState,
    law: &CellLaw,
    delta: Vec2,
    iterations: usize,
    energy_history: Vec<f64>,
    regularization: f64,
) -> Result<CellSolution> {
    let scale = energy.residual_scale()?;
    let rnorm = l2(&state.residual);
    let mut flux = [0.0; 2];
    for ((el, g), c) in energy.mesh.elements().iter().zip(&state.g).zip(&state.coeff) {
        flux[0] += el.area * c * g[0];
        flux[1] += el.area * c * g[1];
    }
    Ok(CellSolution {
        q: state.q,
        delta,
        law: law.clone(),
        flux,
        residual: if scale > 0.0 { rnorm / scale } else { rnorm },
        iterations,
        energy_history,
        regularization,
    })
}

fn unit(axis: usize) -> Result<Vec2> {
    match axis {
        0 => Ok([1.0, 0.0]),
        1 => Ok([0.0, 1.0]),
        _ => Err(Error::param("axis", format!("axis index must be 0 or 1, got {axis}"))),
    }
}

/// Linear corrector `q^i` with `∫(e_i + ∇q^i)·∇v = 0` for every periodic
/// test function `v`; `axis` is 0 or 1.
pub fn solve_linear_cell(mesh: &PeriodicMesh, axis: usize) -> Result<CellSolution> {
    solve_cell(mesh, &CellLaw::Linear, unit(axis)?, &CellSolverOptions::default(), None)
}

/// Effective permeability `A_ij = ∫(e_i + ∇q^i)·e_j` together with its
/// energy form and the two correctors.
#[derive(Debug, Clone)]
pub struct PermeabilityTensor {
    pub matrix: [[f64; 2]; 2],
    /// `∫(e_i + ∇q^i)·(e_j + ∇q^j)`.
    pub energy_matrix: [[f64; 2]; 2],
    pub correctors: [Vec<f64>; 2],
}

impl PermeabilityTensor {
    /// Largest absolute asymmetry `|A₁₂ − A₂₁|`.
    pub fn asymmetry(&self) -> f64 {
        (self.matrix[0][1] - self.matrix[1][0]).abs()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        symmetric_eigenvalues(self.matrix)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        mat_vec(self.matrix, v)
    }
}

pub(crate) fn mat_vec(m: [[f64; 2]; 2], v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub(crate) fn symmetric_eigenvalues(m: [[f64; 2]; 2]) -> [f64; 2] {
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let radius = (0.5 * (a - d)).hypot(b);
    [mean - radius, mean + radius]
}

pub fn permeability_tensor(mesh: &PeriodicMesh) -> Result<PermeabilityTensor> {
    let sols = [solve_linear_cell(mesh, 0)?, solve_linear_cell(mesh, 1)?];
    let mut matrix = [[0.0; 2]; 2];
    let mut energy_matrix = [[0.0; 2]; 2];
    for el in mesh.elements() {
        let gi = [driven_gradient(el, [1.0, 0.0], &sols[0].q), driven_gradient(el, [0.0, 1.0], &sols[1].q)];
        for i in 0..2 {
            for j in 0..2 {
                matrix[i][j] += el.area * gi[i][j];
                energy_matrix[i][j] += el.area * crate::dot(gi[i], gi[j]);
            }
        }
    }
    let [s0, s1] = sols;
    Ok(PermeabilityTensor {
        matrix,
        energy_matrix,
        correctors: [s0.q, s1.q],
    })
}

pub fn solve_powerlaw_cell(mesh: &PeriodicMesh, delta: Vec2, r_prime: f64) -> Result<CellSolution> {
    solve_cell(
        mesh,
        &CellLaw::PowerLaw { r_prime },
        delta,
        &CellSolverOptions::default(),
        None,
    )
}

/// `𝒰(δ) = ∫ |δ+∇q|^{r'−2}(δ+∇q)` over the fluid triangles.
pub fn powerlaw_flux(mesh: &PeriodicMesh, delta: Vec2, r_prime: f64) -> Result<Vec2> {
    Ok(solve_powerlaw_cell(mesh, delta, r_prime)?.flux)
}

pub fn solve_carreau_cell(
    mesh: &PeriodicMesh,
    delta: Vec2,
    params: &FluidParams,
    quad: &MobilityQuadrature,
) -> Result<CellSolution> {
    let law = CellLaw::Carreau {
        params: *params,
        quad: quad.clone(),
    };
    solve_cell(mesh, &law, delta, &CellSolverOptions::default(), None)
}

/// `F(δ) = ∫ M(|δ+∇q|)(δ+∇q)` over the fluid triangles.
pub fn carreau_flux(
    mesh: &PeriodicMesh,
    delta: Vec2,
    params: &FluidParams,
    quad: &MobilityQuadrature,
) -> Result<Vec2> {
    Ok(solve_carreau_cell(mesh, delta, params, quad)?.flux)
}

/// One evaluation of an effective law with the cell-solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawSample {
    pub delta: Vec2,
    pub flux: Vec2,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    sample: LawSample,
    q: Arc<Vec<f64>>,
}

const CACHE_QUANTUM: f64 = 1e-6;

fn cache_key(d: Vec2) -> Option<[i64; 2]> {
    let k = [(d[0] / CACHE_QUANTUM).round(), (d[1] / CACHE_QUANTUM).round()];
    if k[0].abs() < 9e15 && k[1].abs() < 9e15 {
        Some([k[0] as i64, k[1] as i64])
    } else {
        None
    }
}

fn same_bits(a: Vec2, b: Vec2) -> bool {
    a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits()
}

/// Map from the macroscopic driving `δ = f' − ∇p` to the filtration
/// velocity.
///
/// Nonlinear evaluations are cached under `δ` rounded to `1e-6` per
/// component. A repeated `δ` returns the stored value; a nearby `δ` with
/// the same key reuses the stored corrector as the initial field.
pub struct EffectiveLaw {
    model: LimitModelKind,
    params: FluidParams,
    mesh: Arc<PeriodicMesh>,
    quad: MobilityQuadrature,
    options: CellSolverOptions,
    permeability: Option<PermeabilityTensor>,
    scaled_tensor: [[f64; 2]; 2],
    prefactor: f64,
    cache: Mutex<HashMap<[i64; 2], CacheEntry>>,
    cell_solves: AtomicUsize,
}

impl std::fmt::Debug for EffectiveLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EffectiveLaw")
            .field("model", &self.model)
            .field("params", &self.params)
            .field("scaled_tensor", &self.scaled_tensor)
            .field("prefactor", &self.prefactor)
            .finish_non_exhaustive()
    }
}

/// Builds the effective law of `kind` with default solver settings.
pub fn effective_law(
    mesh: Arc<PeriodicMesh>,
    kind: LimitModelKind,
    params: &FluidParams,
) -> Result<EffectiveLaw> {
    EffectiveLaw::new(mesh, kind, params, MobilityQuadrature::default(), CellSolverOptions::default())
}

impl EffectiveLaw {
    pub fn new(
        mesh: Arc<PeriodicMesh>,
        kind: LimitModelKind,
        params: &FluidParams,
        quad: MobilityQuadrature,
        options: CellSolverOptions,
    ) -> Result<Self> {
        let expected = params.limit_model();
        if kind != expected {
            return Err(Error::param(
                "kind",
                format!(
                    "limit model {kind} does not match r = {}, gamma = {} (expected {expected})",
                    params.r_exact(),
                    params.gamma()
                ),
            ));
        }
        Self::new_unchecked(mesh, kind, params, quad, options)
    }

    /// Like [`EffectiveLaw::new`] but without checking that `kind` is the
    /// limit model selected by `params.r` and `params.gamma`.
    pub fn new_unchecked(
        mesh: Arc<PeriodicMesh>,
        kind: LimitModelKind,
        params: &FluidParams,
        quad: MobilityQuadrature,
        options: CellSolverOptions,
    ) -> Result<Self> {
        let mut permeability = None;
        let mut scaled_tensor = [[0.0; 2]; 2];
        let mut prefactor = 1.0;
        match kind {
            LimitModelKind::NewtonianZeroShear | LimitModelKind::NewtonianInfiniteShear => {
                let eta = kind.newtonian_viscosity(params).expect("Newtonian kind");
                let a = permeability_tensor(&mesh)?;
                for i in 0..2 {
                    for j in 0..2 {
                        scaled_tensor[i][j] = a.matrix[i][j] / (6.0 * eta);
                    }
                }
                permeability = Some(a);
            }
            LimitModelKind::PowerLaw => {
                prefactor = constitutive::powerlaw_prefactor(params)?;
            }
            LimitModelKind::Carreau => {}
        }
        Ok(Self {
            model: kind,
            params: *params,
            mesh,
            quad,
            options,
            permeability,
            scaled_tensor,
            prefactor,
            cache: Mutex::new(HashMap::new()),
            cell_solves: AtomicUsize::new(0),
        })
    }

    pub fn model(&self) -> LimitModelKind {
        self.model
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn mesh(&self) -> &Arc<PeriodicMesh> {
        &self.mesh
    }

    pub fn quadrature(&self) -> &MobilityQuadrature {
        &self.quad
    }

    pub fn is_linear(&self) -> bool {
        self.model.is_linear()
    }

    pub fn permeability(&self) -> Option<&PermeabilityTensor> {
        self.permeability.as_ref()
    }

    /// `A/(6η)` for the linear laws, zero otherwise.
    pub fn linear_tensor(&self) -> [[f64; 2]; 2] {
        self.scaled_tensor
    }

    /// Power-law constant `c_r` multiplying `𝒰` (one for other laws).
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// Number of nonlinear cell problems solved so far.
    pub fn cell_solves(&self) -> usize {
        self.cell_solves.load(Ordering::Relaxed)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn clear_cache(&self) {
        self.cache.lock().expect("cache lock").clear();
    }

    fn cell_law(&self) -> CellLaw {
        match self.model {
            LimitModelKind::PowerLaw => CellLaw::PowerLaw {
                r_prime: self.params.conjugate_exponent(),
            },
            LimitModelKind::Carreau => CellLaw::Carreau {
                params: self.params,
                quad: self.quad.clone(),
            },
            _ => CellLaw::Linear,
        }
    }

    pub fn evaluate(&self, delta: Vec2) -> Result<Vec2> {
        Ok(self.sample(delta)?.flux)
    }

    /// Evaluation with the iteration count and residual of the cell solve.
    pub fn sample(&self, delta: Vec2) -> Result<LawSample> {
        if self.is_linear() {
            return Ok(LawSample {
                delta,
                flux: mat_vec(self.scaled_tensor, delta),
                iterations: 0,
                residual: 0.0,
            });
        }
        Ok(self.cached_solve(delta)?.sample)
    }

    /// Corrector `q_δ` on the cell DOFs; for the linear laws this is
    /// `δ₁q¹ + δ₂q²`.
    pub fn corrector(&self, delta: Vec2) -> Result<Arc<Vec<f64>>> {
        if let Some(a) = &self.permeability {
            let q = a.correctors[0]
                .iter()
                .zip(&a.correctors[1])
                .map(|(q1, q2)| delta[0] * q1 + delta[1] * q2)
                .collect();
            return Ok(Arc::new(q));
        }
        Ok(self.cached_solve(delta)?.q)
    }

    fn cached_solve(&self, delta: Vec2) -> Result<CacheEntry> {
        let key = cache_key(delta);
        let warm = {
            let cache = self.cache.lock().expect("cache lock");
            match key.and_then(|k| cache.get(&k)) {
                Some(entry) if same_bits(entry.sample.delta, delta) => return Ok(entry.clone()),
                Some(entry) => Some(entry.q.clone()),
                None => None,
            }
        };
        let entry = self.solve_entry(delta, warm.as_deref().map(|v| v.as_slice()))?;
        if let Some(k) = key {
            let mut cache = self.cache.lock().expect("cache lock");
            match cache.get(&k) {
                Some(existing) if same_bits(existing.sample.delta, delta) => return Ok(existing.clone()),
                _ => {
                    cache.insert(k, entry.clone());
                }
            }
        }
        Ok(entry)
    }

    fn solve_entry(&self, delta: Vec2, initial: Option<&[f64]>) -> Result<CacheEntry> {
        if delta == [0.0, 0.0] {
            return Ok(CacheEntry {
                sample: LawSample {
                    delta,
                    flux: [0.0, 0.0],
                    iterations: 0,
                    residual: 0.0,
                },
                q: Arc::new(vec![0.0; self.mesh.num_dofs()]),
            });
        }
        self.cell_solves.fetch_add(1, Ordering::Relaxed);
        let sol = solve_cell(&self.mesh, &self.cell_law(), delta, &self.options, initial)?;
        Ok(CacheEntry {
            sample: LawSample {
                delta,
                flux: [self.prefactor * sol.flux[0], self.prefactor * sol.flux[1]],
                iterations: sol.iterations,
                residual: sol.residual,
            },
            q: Arc::new(sol.q),
        })
    }

    /// Evaluates many drivings in parallel. Distinct drivings are solved
    /// against a snapshot of the cache and inserted in a fixed order, so
    /// the result does not depend on thread scheduling.
    pub fn evaluate_many(&self, deltas: &[Vec2]) -> Result<Vec<Vec2>> {
        Ok(self.sample_many(deltas)?.into_iter().map(|s| s.flux).collect())
    }

    pub fn sample_many(&self, deltas: &[Vec2]) -> Result<Vec<LawSample>> {
        if self.is_linear() {
            return deltas.iter().map(|&d| self.sample(d)).collect();
        }
        let bits = |d: Vec2| (d[0].to_bits(), d[1].to_bits());
        let mut unique: Vec<Vec2> = deltas.to_vec();
        unique.sort_by_key(|&d| bits(d));
        unique.dedup_by_key(|d| bits(*d));

        let mut known: HashMap<(u64, u64), LawSample> = HashMap::new();
        let mut pending: Vec<(Vec2, Option<Arc<Vec<f64>>>)> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            for &d in &unique {
                match cache_key(d).and_then(|k| cache.get(&k)) {
                    Some(entry) if same_bits(entry.sample.delta, d) => {
                        known.insert(bits(d), entry.sample);
                    }
                    Some(entry) => pending.push((d, Some(entry.q.clone()))),
                    None => pending.push((d, None)),
                }
            }
        }
        let solved: Vec<CacheEntry> = pending
            .par_iter()
            .map(|(d, warm)| self.solve_entry(*d, warm.as_deref().map(|v| v.as_slice())))
            .collect::<Result<_>>()?;
        {
            let mut cache = self.cache.lock().expect("cache lock");
            for entry in solved {
                known.insert(bits(entry.sample.delta), entry.sample);
                if let Some(k) = cache_key(entry.sample.delta) {
                    cache.insert(k, entry);
                }
            }
        }
        Ok(deltas.iter().map(|&d| known[&bits(d)]).collect())
    }
}
