//! Macroscopic Darcy problem on a rectangle `ω = (0, L₁) × (0, L₂)`:
//! `div V = 0` in `ω`, `V·n = 0` on `∂ω`, `V = law(f' − ∇p)`, with the
//! pressure normalized to zero mean.
//!
//! Pressure is P1 on a uniform triangulation; the velocity is constant per
//! triangle. The no-flux condition is the natural condition of the weak
//! form `Σ_T |T| V_T·∇φ_i = 0`, so there are no boundary rows.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cellmesh::SymmetryGroup;
use crate::cellsolve::{mat_vec, EffectiveLaw};
use crate::linalg::{conjugate_gradient, CgOptions, CsrMatrix};
use crate::{Error, Result, Vec2};

/// Uniform triangulation of a rectangle; every grid square is split along
/// its rising diagonal.
#[derive(Debug, Clone)]
pub struct MacroMesh {
    lengths: Vec2,
    cells: [usize; 2],
    nodes: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    grads: Vec<[Vec2; 3]>,
    lumped_mass: Vec<f64>,
}

pub fn build_macro_mesh(l1: f64, l2: f64, n1: usize, n2: usize) -> Result<MacroMesh> {
    MacroMesh::new(l1, l2, n1, n2)
}

impl MacroMesh {
    pub fn new(l1: f64, l2: f64, n1: usize, n2: usize) -> Result<Self> {
        for (name, l) in [("l1", l1), ("l2", l2)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::param(name, format!("domain length must be positive, got {l}")));
            }
        }
        for (name, n) in [("n1", n1), ("n2", n2)] {
            if n < 2 {
                return Err(Error::param(name, format!("need at least 2 cells per side, got {n}")));
            }
        }
        let (h1, h2) = (l1 / n1 as f64, l2 / n2 as f64);
        let mut nodes = Vec::with_capacity((n1 + 1) * (n2 + 1));
        for j in 0..=n2 {
            for i in 0..=n1 {
                let x = if i == n1 { l1 } else { i as f64 * h1 };
                let y = if j == n2 { l2 } else { j as f64 * h2 };
                nodes.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (n1 + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n1 * n2);
        for j in 0..n2 {
            for i in 0..n1 {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        let mut lumped_mass = vec![0.0; nodes.len()];
        for tri in &triangles {
            let [a, b, c] = tri.map(|v| nodes[v]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let area = 0.5 * det;
            let g = [
                [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
                [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
                [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
            ];
            for &v in tri {
                lumped_mass[v] += area / 3.0;
            }
            areas.push(area);
            grads.push(g);
        }
        Ok(Self {
            lengths: [l1, l2],
            cells: [n1, n2],
            nodes,
            triangles,
            areas,
            grads,
            lumped_mass,
        })
    }

    pub fn lengths(&self) -> Vec2 {
        self.lengths
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.cells[0] + 1) + i
    }

    pub fn is_boundary_node(&self, v: usize) -> bool {
        let (i, j) = (v % (self.cells[0] + 1), v / (self.cells[0] + 1));
        i == 0 || j == 0 || i == self.cells[0] || j == self.cells[1]
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.triangles[t].map(|v| self.nodes[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Gradient of a nodal field on triangle `t`.
    pub fn gradient(&self, t: usize, values: &[f64]) -> Vec2 {
        let mut g = [0.0; 2];
        for (k, &v) in self.triangles[t].iter().enumerate() {
            g[0] += values[v] * self.grads[t][k][0];
            g[1] += values[v] * self.grads[t][k][1];
        }
        g
    }

    /// `∫_ω p` of a nodal P1 field divided by the area.
    pub fn mean(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.lumped_mass).map(|(v, m)| v * m).sum::<f64>() / self.total_area()
    }

    /// Triangle containing `x`.
    pub fn locate(&self, x: Vec2) -> Result<usize> {
        let [l1, l2] = self.lengths;
        if !((0.0..=l1).contains(&x[0]) && (0.0..=l2).contains(&x[1])) {
            return Err(Error::Domain(format!("macro point {x:?} outside [0, {l1}] x [0, {l2}]")));
        }
        let [n1, n2] = self.cells;
        let s = [x[0] / l1 * n1 as f64, x[1] / l2 * n2 as f64];
        let i = (s[0].floor() as usize).min(n1 - 1);
        let j = (s[1].floor() as usize).min(n2 - 1);
        let (u, v) = (s[0] - i as f64, s[1] - j as f64);
        Ok(2 * (j * n1 + i) + usize::from(v > u))
    }

    /// P1 interpolation of a nodal field at `x`.
    pub fn interpolate(&self, values: &[f64], x: Vec2) -> Result<f64> {
        let t = self.locate(x)?;
        let a = self.nodes[self.triangles[t][0]];
        let g = self.gradient(t, values);
        Ok(values[self.triangles[t][0]] + g[0] * (x[0] - a[0]) + g[1] * (x[1] - a[1]))
    }

    fn assembler(&self) -> (CsrMatrix, Vec<[usize; 9]>) {
        let pairs = self
            .triangles
            .iter()
            .flat_map(|t| (0..9).map(move |m| (t[m / 3], t[m % 3])));
        let matrix = CsrMatrix::with_pattern(self.num_nodes(), pairs);
        let slots = self
            .triangles
            .iter()
            .map(|t| {
                let mut s = [0; 9];
                for (m, slot) in s.iter_mut().enumerate() {
                    *slot = matrix.slot(t[m / 3], t[m % 3]);
                }
                s
            })
            .collect();
        (matrix, slots)
    }

    fn assemble(&self, matrix: &mut CsrMatrix, slots: &[[usize; 9]], tensors: &[[[f64; 2]; 2]]) {
        matrix.clear();
        for t in 0..self.num_elements() {
            let d = tensors[t];
            for k in 0..3 {
                let gk = self.grads[t][k];
                let dk = mat_vec(d, gk);
                for l in 0..3 {
                    matrix.add_at_slot(slots[t][3 * k + l], self.areas[t] * crate::dot(dk, self.grads[t][l]));
                }
            }
        }
    }

    /// Weak divergence `Σ_T |T| V_T·∇φ_i` of an element-constant field.
    pub fn weak_divergence(&self, velocity: &[Vec2]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        for (t, v) in velocity.iter().enumerate() {
            for k in 0..3 {
                out[self.triangles[t][k]] += self.areas[t] * crate::dot(*v, self.grads[t][k]);
            }
        }
        out
    }

    /// `Σ_T |T| |V_T| |∇φ_i|`, the magnitude the weak divergence is
    /// measured against.
    fn divergence_scale(&self, velocity: &[Vec2]) -> f64 {
        let mut out = vec![0.0; self.num_nodes()];
        for (t, v) in velocity.iter().enumerate() {
            for k in 0..3 {
                out[self.triangles[t][k]] += self.areas[t] * crate::norm(*v) * crate::norm(self.grads[t][k]);
            }
        }
        l2(&out)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Body force `f'` driving the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceField {
    Constant(Vec2),
    /// `∇φ` with `φ(x) = ½ xᵀHx + b·x`.
    GradientOfQuadratic { hessian: [[f64; 2]; 2], linear: Vec2 },
    /// `strength · (−(x₂ − c₂), x₁ − c₁)`.
    Rotational { center: Vec2, strength: f64 },
    /// One vector per mesh node.
    NodalSamples(Vec<Vec2>),
}

impl ForceField {
    /// Potential `φ` of a gradient force.
    pub fn potential(&self, x: Vec2) -> Option<f64> {
        match self {
            ForceField::GradientOfQuadratic { hessian: h, linear: b } => {
                let hx = mat_vec(*h, x);
                Some(0.5 * crate::dot(x, hx) + crate::dot(*b, x))
            }
            ForceField::Constant(c) => Some(crate::dot(*c, x)),
            _ => None,
        }
    }

    pub fn value_at_node(&self, mesh: &MacroMesh, v: usize) -> Vec2 {
        let x = mesh.nodes[v];
        match self {
            ForceField::Constant(c) => *c,
            ForceField::GradientOfQuadratic { hessian: h, linear: b } => {
                let hx = mat_vec(*h, x);
                [hx[0] + b[0], hx[1] + b[1]]
            }
            ForceField::Rotational { center, strength } => {
                [-strength * (x[1] - center[1]), strength * (x[0] - center[0])]
            }
            ForceField::NodalSamples(values) => values[v],
        }
    }

    /// Force on each triangle. Gradient forces use the gradient of the
    /// interpolated potential so that they are discrete gradients; other
    /// forces use the vertex average.
    pub fn element_values(&self, mesh: &MacroMesh) -> Result<Vec<Vec2>> {
        if let ForceField::NodalSamples(values) = self {
            if values.len() != mesh.num_nodes() {
                return Err(Error::param(
                    "force",
                    format!("{} nodal samples for {} mesh nodes", values.len(), mesh.num_nodes()),
                ));
            }
        }
        if let ForceField::GradientOfQuadratic { .. } = self {
            let phi: Vec<f64> = mesh.nodes.iter().map(|&x| self.potential(x).expect("potential")).collect();
            return Ok((0..mesh.num_elements()).map(|t| mesh.gradient(t, &phi)).collect());
        }
        Ok(mesh
            .triangles
            .iter()
            .map(|tri| {
                let mut f = [0.0; 2];
                for &v in tri {
                    let fv = self.value_at_node(mesh, v);
                    f[0] += fv[0] / 3.0;
                    f[1] += fv[1] / 3.0;
                }
                f
            })
            .collect())
    }
}

pub struct MacroProblem {
    pub mesh: MacroMesh,
    pub force: ForceField,
    pub law: Arc<EffectiveLaw>,
}

#[derive(Debug, Clone, Copy)]
pub struct MacroOptions {
    /// Relative tolerance on the weak divergence.
    pub tol: f64,
    pub max_outer: usize,
    pub cg: CgOptions,
    /// Use the angular table for power laws on symmetric cells.
    pub tabulate_power_law: bool,
    pub table_angles: usize,
}

impl Default for MacroOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_outer: 100,
            cg: CgOptions::default(),
            tabulate_power_law: true,
            table_angles: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MacroSolution {
    pub mesh: MacroMesh,
    /// Nodal pressure with zero mean over `ω`.
    pub p: Vec<f64>,
    /// Filtration velocity per triangle.
    pub velocity: Vec<Vec2>,
    /// `f' − ∇p` per triangle.
    pub driving: Vec<Vec2>,
    pub iterations: usize,
    /// Final relative nonlinear residual.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Weak divergence on interior nodes, relative to the forcing scale.
    pub divergence_residual: f64,
    /// Weak divergence on boundary nodes (the discrete normal flux),
    /// relative to the forcing scale.
    pub boundary_flux_residual: f64,
    /// `|Σ_i Σ_T |T| V_T·∇φ_i|` relative to the forcing scale.
    pub net_flux: f64,
    pub plan: &'static str,
}

impl MacroSolution {
    pub fn driving_at(&self, x: Vec2) -> Result<Vec2> {
        Ok(self.driving[self.mesh.locate(x)?])
    }

    pub fn pressure_at(&self, x: Vec2) -> Result<f64> {
        self.mesh.interpolate(&self.p, x)
    }

    pub fn max_speed(&self) -> f64 {
        self.velocity.iter().map(|v| crate::norm(*v)).fold(0.0, f64::max)
    }
}

/// How the effective law is evaluated during a macroscopic solve.
#[derive(Debug, Clone)]
pub enum EvaluationPlan {
    /// `V = (A/(6η)) δ`.
    Direct { tensor: [[f64; 2]; 2] },
    /// Homogeneous extension `V(δ) = |δ|^{r'−1} Û(θ)` of values `Û` on
    /// equally spaced unit vectors, interpolated trigonometrically in `θ`.
    AngularTable { values: Vec<Vec2>, exponent: f64 },
    /// One cached cell solve per distinct driving.
    CellSolves,
}

/// Chooses the evaluation plan for `law` on a cell with symmetry `symmetry`
/// using a table of `angles` directions for power laws.
pub fn flux_map_strategy(law: &EffectiveLaw, symmetry: SymmetryGroup, angles: usize) -> Result<EvaluationPlan> {
    if law.is_linear() {
        return Ok(EvaluationPlan::Direct {
            tensor: law.linear_tensor(),
        });
    }
    if law.model() != crate::params::LimitModelKind::PowerLaw {
        return Ok(EvaluationPlan::CellSolves);
    }
    if angles < 8 || !angles.is_multiple_of(8) {
        return Err(Error::param("table_angles", format!("must be a positive multiple of 8, got {angles}")));
    }
    let unit = |k: usize| {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / angles as f64;
        [theta.cos(), theta.sin()]
    };
    let exponent = law.params().conjugate_exponent() - 1.0;
    let values = match symmetry {
        SymmetryGroup::Dihedral4 => {
            // Solve on the first octant; the diagonal reflection and the
            // quarter turn generate the other seven.
            let eighth = angles / 8;
            let quarter = angles / 4;
            let octant: Vec<Vec2> = law.evaluate_many(&(0..=eighth).map(unit).collect::<Vec<_>>())?;
            let mut values = vec![[0.0; 2]; angles];
            values[..=eighth].copy_from_slice(&octant);
            for k in eighth + 1..quarter {
                let u = octant[quarter - k];
                values[k] = [u[1], u[0]];
            }
            for k in quarter..angles {
                let u = values[k - quarter];
                values[k] = [-u[1], u[0]];
            }
            values
        }
        SymmetryGroup::Trivial => law.evaluate_many(&(0..angles).map(unit).collect::<Vec<_>>())?,
    };
    Ok(EvaluationPlan::AngularTable { values, exponent })
}

impl EvaluationPlan {
    pub fn name(&self) -> &'static str {
        match self {
            EvaluationPlan::Direct { .. } => "direct",
            EvaluationPlan::AngularTable { .. } => "angular_table",
            EvaluationPlan::CellSolves => "cell_solves",
        }
    }

    pub fn evaluate(&self, law: &EffectiveLaw, delta: Vec2) -> Result<Vec2> {
        match self {
            EvaluationPlan::Direct { tensor } => Ok(mat_vec(*tensor, delta)),
            EvaluationPlan::AngularTable { values, exponent } => Ok(table_value(values, *exponent, delta)),
            EvaluationPlan::CellSolves => law.evaluate(delta),
        }
    }

    pub fn evaluate_many(&self, law: &EffectiveLaw, deltas: &[Vec2]) -> Result<Vec<Vec2>> {
        match self {
            EvaluationPlan::CellSolves => law.evaluate_many(deltas),
            _ => deltas.iter().map(|&d| self.evaluate(law, d)).collect(),
        }
    }
}

fn table_value(values: &[Vec2], exponent: f64, delta: Vec2) -> Vec2 {
    let s = crate::norm(delta);
    if s == 0.0 {
        return [0.0, 0.0];
    }
    let n = values.len();
    let theta = delta[1].atan2(delta[0]);
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let mut u = [0.0; 2];
    let mut on_node = None;
    for (k, value) in values.iter().enumerate() {
        let x = theta - k as f64 * step;
        let half = 0.5 * x;
        if half.sin().abs() < 1e-14 {
            on_node = Some(*value);
            break;
        }
        // Cardinal function of trigonometric interpolation on an even
        // number of equally spaced nodes.
        let w = (0.5 * n as f64 * x).sin() / (n as f64 * half.tan());
        u[0] += w * value[0];
        u[1] += w * value[1];
    }
    let u = on_node.unwrap_or(u);
    let m = s.powf(exponent);
    [m * u[0], m * u[1]]
}

pub fn solve_linear_darcy(problem: &MacroProblem) -> Result<MacroSolution> {
    solve_linear_darcy_with(problem, &MacroOptions::default())
}

/// Right-hand side `Σ_T |T| ∇φ_i·B f_T` of the linear problem.
pub fn linear_rhs(mesh: &MacroMesh, forcing: &[Vec2], tensor: [[f64; 2]; 2]) -> Vec<f64> {
    let fluxes: Vec<Vec2> = forcing.iter().map(|&f| mat_vec(tensor, f)).collect();
    mesh.weak_divergence(&fluxes)
}

fn symmetric_part(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let off = 0.5 * (m[0][1] + m[1][0]);
    [[m[0][0], off], [off, m[1][1]]]
}

pub fn solve_linear_darcy_with(problem: &MacroProblem, options: &MacroOptions) -> Result<MacroSolution> {
    let law = &problem.law;
    if !law.is_linear() {
        return Err(Error::param(
            "law",
            format!("linear Darcy solve needs a Newtonian law, got {}", law.model()),
        ));
    }
    let mesh = &problem.mesh;
    let tensor = law.linear_tensor();
    let forcing = problem.force.element_values(mesh)?;
    let rhs = linear_rhs(mesh, &forcing, tensor);
    let (mut matrix, slots) = mesh.assembler();
    mesh.assemble(&mut matrix, &slots, &vec![symmetric_part(tensor); mesh.num_elements()]);
    let mut p = vec![0.0; mesh.num_nodes()];
    conjugate_gradient(&matrix, &rhs, &mut p, options.cg)?;
    let mean = mesh.mean(&p);
    p.iter_mut().for_each(|x| *x -= mean);
    let plan = EvaluationPlan::Direct { tensor };
    let scale = mesh.divergence_scale(&plan.evaluate_many(law, &forcing)?);
    finish(mesh, &plan, law, &forcing, p, 1, Vec::new(), scale)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mesh: &MacroMesh,
    plan: &EvaluationPlan,
    law: &EffectiveLaw,
    forcing: &[Vec2],
    p: Vec<f64>,
    iterations: usize,
    mut residual_history: Vec<f64>,
    scale: f64,
) -> Result<MacroSolution> {
    let driving: Vec<Vec2> = (0..mesh.num_elements())
        .map(|t| {
            let g = mesh.gradient(t, &p);
            [forcing[t][0] - g[0], forcing[t][1] - g[1]]
        })
        .collect();
    let velocity = plan.evaluate_many(law, &driving)?;
    let div = mesh.weak_divergence(&velocity);
    let norm = if scale > 0.0 { scale } else { 1.0 };
    let (mut interior, mut boundary) = (Vec::new(), Vec::new());
    for (v, r) in div.iter().enumerate() {
        if mesh.is_boundary_node(v) {
            boundary.push(*r);
        } else {
            interior.push(*r);
        }
    }
    let residual = l2(&div) / norm;
    if residual_history.is_empty() {
        residual_history.push(residual);
    }
    Ok(MacroSolution {
        mesh: mesh.clone(),
        p,
        velocity,
        driving,
        iterations,
        residual,
        residual_history,
        divergence_residual: l2(&interior) / norm,
        boundary_flux_residual: l2(&boundary) / norm,
        net_flux: div.iter().sum::<f64>().abs() / norm,
        plan: plan.name(),
    })
}

pub fn solve_nonlinear_darcy(problem: &MacroProblem) -> Result<MacroSolution> {
    solve_nonlinear_darcy_with(problem, &MacroOptions::default())
}

/// Secant-preconditioned residual iteration: with `V_T = law(f_T − ∇p_T)`
/// and `R_i = Σ_T |T| V_T·∇φ_i`, solve `K_μ Δ = R` where `K_μ` is the
/// stiffness matrix of the per-element secant mobility, and relax.
pub fn solve_nonlinear_darcy_with(problem: &MacroProblem, options: &MacroOptions) -> Result<MacroSolution> {
    let mesh = &problem.mesh;
    let law = &problem.law;
    let plan = if !options.tabulate_power_law && !law.is_linear() {
        EvaluationPlan::CellSolves
    } else {
        flux_map_strategy(law, law.mesh().geometry().symmetry(), options.table_angles)?
    };
    let forcing = problem.force.element_values(mesh)?;
    let scale = mesh.divergence_scale(&plan.evaluate_many(law, &forcing)?);
    let mut p = vec![0.0; mesh.num_nodes()];
    if scale == 0.0 {
        return finish(mesh, &plan, law, &forcing, p, 0, vec![0.0], scale);
    }
    let target = options.tol * scale;
    let drivings = |p: &[f64]| -> Vec<Vec2> {
        (0..mesh.num_elements())
            .map(|t| {
                let g = mesh.gradient(t, p);
                [forcing[t][0] - g[0], forcing[t][1] - g[1]]
            })
            .collect()
    };
    let mut driving = drivings(&p);
    let mut velocity = plan.evaluate_many(law, &driving)?;
    let mut residual = mesh.weak_divergence(&velocity);
    let mut rnorm = l2(&residual);
    let mut history = vec![rnorm / scale];
    let (mut matrix, slots) = mesh.assembler();
    let mut omega: f64 = 1.0;

    for iteration in 1..=options.max_outer {
        if rnorm <= target {
            return finish(mesh, &plan, law, &forcing, p, iteration - 1, history, scale);
        }
        let tensors = match &plan {
            EvaluationPlan::Direct { tensor } => vec![symmetric_part(*tensor); mesh.num_elements()],
            _ => secant_tensors(&driving, &velocity),
        };
        mesh.assemble(&mut matrix, &slots, &tensors);
        let mut step = vec![0.0; mesh.num_nodes()];
        conjugate_gradient(&matrix, &residual, &mut step, options.cg)?;

        loop {
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(p, s)| p + omega * s).collect();
            let mean = mesh.mean(&trial);
            trial.iter_mut().for_each(|x| *x -= mean);
            let trial_driving = drivings(&trial);
            let trial_velocity = plan.evaluate_many(law, &trial_driving)?;
            let trial_residual = mesh.weak_divergence(&trial_velocity);
            let trial_norm = l2(&trial_residual);
            if trial_norm < rnorm || trial_norm <= target {
                p = trial;
                driving = trial_driving;
                velocity = trial_velocity;
                residual = trial_residual;
                rnorm = trial_norm;
                history.push(rnorm / scale);
                omega = (2.0 * omega).min(1.0);
                break;
            }
            omega *= 0.5;
            if omega < 1.0 / 1024.0 {
                return Err(Error::NoConvergence {
                    solver: "macroscopic Darcy relaxation",
                    iterations: iteration,
                    residual: rnorm / scale,
                    history,
                });
            }
        }
    }
    if rnorm <= target {
        return finish(mesh, &plan, law, &forcing, p, options.max_outer, history, scale);
    }
    Err(Error::NoConvergence {
        solver: "macroscopic Darcy iteration",
        iterations: options.max_outer,
        residual: rnorm / scale,
        history,
    })
}

/// Scalar secant mobility `V·δ/|δ|²` per element, clamped to six decades
/// around the median so that stagnant elements keep the system definite.
fn secant_tensors(driving: &[Vec2], velocity: &[Vec2]) -> Vec<[[f64; 2]; 2]> {
    let largest = driving.iter().map(|d| crate::norm(*d)).fold(0.0, f64::max);
    let floor = 1e-10 * largest;
    let raw: Vec<Option<f64>> = driving
        .par_iter()
        .zip(velocity)
        .map(|(d, v)| {
            let s2 = crate::dot(*d, *d);
            let mu = crate::dot(*v, *d) / s2;
            (s2.sqrt() > floor && mu > 0.0 && mu.is_finite()).then_some(mu)
        })
        .collect();
    let mut valid: Vec<f64> = raw.iter().flatten().copied().collect();
    let reference = if valid.is_empty() {
        1.0
    } else {
        let mid = valid.len() / 2;
        *valid.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    raw.iter()
        .map(|mu| {
            let mu = mu.unwrap_or(reference).clamp(1e-6 * reference, 1e6 * reference);
            [[mu, 0.0], [0.0, mu]]
        })
        .collect()
}
