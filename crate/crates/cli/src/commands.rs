//! The four pipeline commands. Each writes its artifacts below the
//! configured output directory and returns a report for the caller.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use porethin::cellmesh::PeriodicMesh;
use porethin::cellsolve::{EffectiveLaw, LawSample};
use porethin::export;
use porethin::macro_darcy::{
    solve_linear_darcy_with, solve_nonlinear_darcy_with, MacroMesh, MacroProblem, MacroSolution,
};
use porethin::params::{classify_regime, limit_model_kind, scaling_table, LimitModelKind, Rational, RegimeLabel, ScalingTable};
use porethin::reconstruct::{reconstruct_lattice, reconstructed_filtration, Profile, ProfileLaw};
use porethin::Vec2;
use serde_json::json;

use crate::config::{MacroConfig, RunConfig};
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn require_vtpm(config: &RunConfig) -> Result<(), CliError> {
    if config.regime != RegimeLabel::Vtpm {
        return Err(CliError::config(
            "regime.ell",
            format!(
                "ell = {} gives the {} regime; the cell and Darcy solvers apply to very thin films only (0 < ell < 1)",
                config.ell, config.regime
            ),
        ));
    }
    Ok(())
}

fn require_macro(config: &RunConfig) -> Result<&MacroConfig, CliError> {
    config
        .macro_domain
        .as_ref()
        .ok_or_else(|| CliError::config("macro", "this command needs a macro block"))
}

/// Cell mesh and effective law selected by the configuration.
pub fn build_law(config: &RunConfig) -> Result<Arc<EffectiveLaw>, CliError> {
    let mesh = Arc::new(PeriodicMesh::new(config.geometry, config.cell_n)?);
    Ok(Arc::new(EffectiveLaw::new(
        mesh,
        config.model,
        &config.fluid,
        config.solver.quadrature.clone(),
        config.solver.cell,
    )?))
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub model: LimitModelKind,
    pub permeability: Option<[[f64; 2]; 2]>,
    pub samples: Vec<LawSample>,
    /// Power law only: relative deviation from homogeneity per sample.
    pub homogeneity: Option<Vec<f64>>,
    pub cell_solves: usize,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for CellReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "limit model: {}", self.model)?;
        if let Some(a) = self.permeability {
            writeln!(f, "permeability: [[{:.12}, {:.12}], [{:.12}, {:.12}]]", a[0][0], a[0][1], a[1][0], a[1][1])?;
        } else {
            writeln!(f, "samples: {} ({} cell solves)", self.samples.len(), self.cell_solves)?;
        }
        if let Some(h) = &self.homogeneity {
            writeln!(f, "max homogeneity deviation: {:.3e}", h.iter().fold(0.0f64, |m, x| m.max(*x)))?;
        }
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Deviation of each sample from `(|δ|/|δ_ref|)^{r'-1} U(δ_ref)`, where
/// `δ_ref` is the smallest nonzero driving along the same direction.
fn homogeneity_residuals(samples: &[LawSample], angles: usize, magnitudes: &[f64], exponent: f64) -> Vec<f64> {
    let reference = magnitudes
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let (row, angle) = (k / angles, k % angles);
            let Some(r) = reference else { return 0.0 };
            if magnitudes[row] == 0.0 {
                return 0.0;
            }
            let base = samples[r * angles + angle].flux;
            let t = (magnitudes[row] / magnitudes[r]).powf(exponent);
            let norm = s.flux[0].hypot(s.flux[1]);
            let diff = (s.flux[0] - t * base[0]).hypot(s.flux[1] - t * base[1]);
            if norm > 0.0 {
                diff / norm
            } else {
                diff
            }
        })
        .collect()
}

/// Cell stage: the permeability tensor for Newtonian limits, otherwise a
/// flux table over the configured drivings; cell fields go to VTK.
pub fn cmd_cell(config: &RunConfig) -> Result<CellReport, CliError> {
    require_vtpm(config)?;
    let law = build_law(config)?;
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let mesh = law.mesh();
    let mut files = Vec::new();

    if let Some(a) = law.permeability() {
        let path = dir.join("permeability.csv");
        export::write_permeability_csv(create(&path)?, a, mesh.fluid_area())?;
        files.push(path);
        let qx = mesh.vertex_values(&a.correctors[0]);
        let qy = mesh.vertex_values(&a.correctors[1]);
        let path = dir.join("cell.vtk");
        export::write_cell_mesh_vtk(create(&path)?, mesh, &[("corrector_x", &qx), ("corrector_y", &qy)])?;
        files.push(path);
        return Ok(CellReport {
            model: law.model(),
            permeability: Some(a.matrix),
            samples: Vec::new(),
            homogeneity: None,
            cell_solves: 0,
            files,
        });
    }

    let drivings = config.samples.drivings();
    let samples = law.sample_many(&drivings)?;
    let path = dir.join("flux_table.csv");
    let homogeneity = if law.model() == LimitModelKind::PowerLaw {
        let h = homogeneity_residuals(
            &samples,
            config.samples.angles,
            &config.samples.magnitudes,
            config.fluid.conjugate_exponent() - 1.0,
        );
        export::write_flux_table_with_check(create(&path)?, &samples, &h)?;
        Some(h)
    } else {
        export::write_flux_table(create(&path)?, &samples)?;
        None
    };
    files.push(path);
    let last = *drivings.last().expect("at least one sample");
    let q = mesh.vertex_values(&law.corrector(last)?);
    let path = dir.join("cell.vtk");
    export::write_cell_mesh_vtk(create(&path)?, mesh, &[("corrector", &q)])?;
    files.push(path);
    Ok(CellReport {
        model: law.model(),
        permeability: None,
        samples,
        homogeneity,
        cell_solves: law.cell_solves(),
        files,
    })
}

#[derive(Debug, Clone)]
pub struct DarcyReport {
    pub solution: MacroSolution,
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for DarcyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.solution;
        writeln!(f, "limit model: {}", self.summary["limit_model"].as_str().unwrap_or("?"))?;
        writeln!(f, "evaluation: {}", s.plan)?;
        writeln!(f, "iterations: {}", s.iterations)?;
        writeln!(f, "residual: {:.3e}", s.residual)?;
        writeln!(f, "divergence residual: {:.3e}", s.divergence_residual)?;
        writeln!(f, "boundary flux residual: {:.3e}", s.boundary_flux_residual)?;
        writeln!(f, "max |V|: {:.6e}", s.max_speed())?;
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

fn solve_macro(config: &RunConfig, law: &Arc<EffectiveLaw>) -> Result<MacroSolution, CliError> {
    let m = require_macro(config)?;
    let problem = MacroProblem {
        mesh: MacroMesh::new(m.l1, m.l2, m.n1, m.n2)?,
        force: m.force.clone(),
        law: law.clone(),
    };
    let options = &config.solver.macro_options;
    Ok(if law.is_linear() {
        solve_linear_darcy_with(&problem, options)?
    } else {
        solve_nonlinear_darcy_with(&problem, options)?
    })
}

/// Cell stage followed by the macroscopic pressure problem. Writes nodal
/// pressure, element velocity, a VTK view and `summary.json`; fails with a
/// numerical error if the divergence residual misses the tolerance.
pub fn cmd_darcy(config: &RunConfig) -> Result<DarcyReport, CliError> {
    require_vtpm(config)?;
    require_macro(config)?;
    let law = build_law(config)?;
    let solution = solve_macro(config, &law)?;
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let mut files = Vec::new();
    let path = dir.join("pressure.csv");
    export::write_pressure_csv(create(&path)?, &solution)?;
    files.push(path);
    let path = dir.join("velocity.csv");
    export::write_velocity_csv(create(&path)?, &solution)?;
    files.push(path);
    let path = dir.join("macro.vtk");
    export::write_macro_vtk(create(&path)?, &solution)?;
    files.push(path);

    let tol = config.solver.macro_options.tol;
    let converged = solution.residual <= tol;
    let summary = json!({
        "regime": config.regime.to_string(),
        "limit_model": config.model.to_string(),
        "evaluation": solution.plan,
        "cell": { "n": config.cell_n, "fluid_area": law.mesh().fluid_area(), "cell_solves": law.cell_solves() },
        "iterations": solution.iterations,
        "residual": solution.residual,
        "residual_history": solution.residual_history,
        "divergence_residual": solution.divergence_residual,
        "boundary_flux_residual": solution.boundary_flux_residual,
        "net_flux": solution.net_flux,
        "max_speed": solution.max_speed(),
        "tolerance": tol,
        "converged": converged,
    });
    let path = dir.join("summary.json");
    write_json(&path, &summary)?;
    files.push(path);
    if !converged {
        return Err(CliError::Tolerance(format!(
            "divergence residual {:.3e} exceeds tolerance {tol:.3e}",
            solution.residual
        )));
    }
    Ok(DarcyReport {
        solution,
        summary,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub x: Vec2,
    pub driving: Vec2,
    /// Cell-averaged profile `z₃ ↦ ∫_{Z'_f} w dz'`.
    pub profile: Profile,
    pub flux: Vec2,
    pub profile_mean: Vec2,
    /// `|mean − flux| / max(|flux|, tiny)`.
    pub mean_flux_residual: f64,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for ProfileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "x: ({}, {})", self.x[0], self.x[1])?;
        writeln!(f, "driving: ({:.12e}, {:.12e})", self.driving[0], self.driving[1])?;
        writeln!(f, "flux: ({:.12e}, {:.12e})", self.flux[0], self.flux[1])?;
        writeln!(f, "profile mean: ({:.12e}, {:.12e})", self.profile_mean[0], self.profile_mean[1])?;
        writeln!(f, "mean-flux residual: {:.3e}", self.mean_flux_residual)?;
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Reconstructs the velocity at the configured macroscopic point. The
/// law can be overridden; the Darcy problem is then solved with it too.
pub fn cmd_profile(config: &RunConfig, x: Option<Vec2>, law_kind: Option<LimitModelKind>) -> Result<ProfileReport, CliError> {
    require_vtpm(config)?;
    let macro_domain = require_macro(config)?;
    let settings = config
        .profile
        .clone()
        .ok_or_else(|| CliError::config("profile", "this command needs a profile block"))?;
    let x = x.unwrap_or(settings.x);
    if !((0.0..=macro_domain.l1).contains(&x[0]) && (0.0..=macro_domain.l2).contains(&x[1])) {
        return Err(porethin::Error::Domain(format!(
            "macroscopic point {x:?} outside [0, {}] x [0, {}]",
            macro_domain.l1, macro_domain.l2
        ))
        .into());
    }
    let law = match law_kind {
        None => build_law(config)?,
        Some(kind) => {
            let mesh = Arc::new(PeriodicMesh::new(config.geometry, config.cell_n)?);
            Arc::new(EffectiveLaw::new_unchecked(
                mesh,
                kind,
                &config.fluid,
                config.solver.quadrature.clone(),
                config.solver.cell,
            )?)
        }
    };
    let solution = solve_macro(config, &law)?;
    let delta = solution.driving_at(x)?;
    let flux = law.evaluate(delta)?;

    let mesh = law.mesh();
    let q = law.corrector(delta)?;
    let profile_law = ProfileLaw::for_law(&law);
    let n = settings.points;
    let z: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let mut w = vec![[0.0; 2]; n + 1];
    for el in mesh.elements() {
        let grad = el.gradient(&q);
        let g = [-(delta[0] + grad[0]), -(delta[1] + grad[1])];
        for (k, &z3) in z.iter().enumerate() {
            let v = profile_law.velocity(g, z3)?;
            w[k][0] += el.area * v[0];
            w[k][1] += el.area * v[1];
        }
    }
    let profile = Profile {
        g: delta,
        law: profile_law.name(),
        z,
        w,
    };
    // The power-law profile has a fractional power at the midplane, so it
    // needs many more nodes than the smooth laws.
    let nodes = if law.model() == LimitModelKind::PowerLaw { 64 } else { 16 };
    let mean = reconstructed_filtration(&law, delta, nodes)?;
    let fnorm = flux[0].hypot(flux[1]);
    let diff = (mean[0] - flux[0]).hypot(mean[1] - flux[1]);
    let mean_flux_residual = if fnorm > 0.0 { diff / fnorm } else { diff };

    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let mut files = Vec::new();
    let path = dir.join("profile.csv");
    export::write_profile_csv(create(&path)?, &profile)?;
    files.push(path);
    let lattice = reconstruct_lattice(&law, delta, settings.lattice)?;
    let path = dir.join("reconstruction.vtk");
    export::write_lattice_vtk(create(&path)?, &lattice)?;
    files.push(path);
    let path = dir.join("profile_summary.json");
    write_json(
        &path,
        &json!({
            "x": x,
            "limit_model": law.model().to_string(),
            "driving": delta,
            "flux": flux,
            "profile_mean": mean,
            "mean_flux_residual": mean_flux_residual,
        }),
    )?;
    files.push(path);
    Ok(ProfileReport {
        x,
        driving: delta,
        profile,
        flux,
        profile_mean: mean,
        mean_flux_residual,
        files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub ell: Rational,
    pub gamma: Rational,
    pub r: Rational,
    pub regime: RegimeLabel,
    pub model: LimitModelKind,
    pub table: ScalingTable,
}

impl RegimeReport {
    pub fn note(&self) -> Option<&'static str> {
        (self.regime != RegimeLabel::Vtpm)
            .then_some("the cell and Darcy solvers of this tool target the VTPM regime (0 < ell < 1) only")
    }
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ell = {}, gamma = {}, r = {}", self.ell, self.gamma, self.r)?;
        writeln!(f, "regime: {}", self.regime)?;
        writeln!(f, "limit model: {}", self.model)?;
        writeln!(f, "{}", self.table)?;
        if let Some(note) = self.note() {
            writeln!(f, "note: {note}")?;
        }
        Ok(())
    }
}

pub fn cmd_regime(ell: Rational, gamma: Rational, r: Rational) -> Result<RegimeReport, CliError> {
    let regime = classify_regime(ell).map_err(|e| CliError::config("ell", e.to_string()))?;
    let model = limit_model_kind(r, gamma).map_err(|e| CliError::config("r", e.to_string()))?;
    let table = scaling_table(r, gamma).map_err(|e| CliError::config("r", e.to_string()))?;
    Ok(RegimeReport {
        ell,
        gamma,
        r,
        regime,
        model,
        table,
    })
}
