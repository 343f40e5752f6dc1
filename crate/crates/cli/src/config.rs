//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use porethin::cellmesh::CellGeometry;
use porethin::cellsolve::CellSolverOptions;
use porethin::constitutive::MobilityQuadrature;
use porethin::macro_darcy::{ForceField, MacroOptions};
use porethin::params::{
    classify_regime, parse_rational, FluidParams, LimitModelKind, Rational, RegimeLabel,
};
use porethin::Vec2;
use serde::Deserialize;

use crate::CliError;

/// A number given either as a JSON number or as a string such as `"3/2"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Exact {
    Number(serde_json::Number),
    Text(String),
}

impl Exact {
    fn to_rational(&self, path: &str) -> Result<Rational, CliError> {
        let text = match self {
            Exact::Number(n) => n.to_string(),
            Exact::Text(s) => s.clone(),
        };
        parse_rational(&text).map_err(|e| CliError::config(path, e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    fluid: RawFluid,
    regime: RawRegime,
    cell: RawCell,
    #[serde(rename = "macro")]
    macro_domain: Option<RawMacro>,
    #[serde(default)]
    solver: RawSolver,
    cell_samples: Option<RawSamples>,
    profile: Option<RawProfile>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFluid {
    eta0: f64,
    eta_inf: f64,
    lambda: f64,
    r: Exact,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegime {
    ell: Exact,
    gamma: Exact,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    geometry: RawGeometry,
    n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawGeometry {
    None,
    Disk { radius: f64 },
    Square { half_width: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMacro {
    l1: f64,
    l2: f64,
    n1: usize,
    n2: usize,
    force: RawForce,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawForce {
    Constant { value: Vec2 },
    GradientOfQuadratic { hessian: [[f64; 2]; 2], linear: Vec2 },
    Rotational { center: Vec2, strength: f64 },
    NodalCsv { path: PathBuf },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    cell_tol: Option<f64>,
    cell_max_iter: Option<usize>,
    macro_tol: Option<f64>,
    max_outer: Option<usize>,
    tabulate_power_law: Option<bool>,
    table_angles: Option<usize>,
    quadrature_nodes: Option<usize>,
    quadrature_rel_tol: Option<f64>,
    quadrature_max_levels: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSamples {
    angles: usize,
    magnitudes: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    x: Vec2,
    #[serde(default = "default_profile_points")]
    points: usize,
    #[serde(default = "default_lattice")]
    lattice: [usize; 3],
}

fn default_profile_points() -> usize {
    64
}

fn default_lattice() -> [usize; 3] {
    [17, 17, 9]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

/// Macroscopic domain and forcing.
#[derive(Debug, Clone)]
pub struct MacroConfig {
    pub l1: f64,
    pub l2: f64,
    pub n1: usize,
    pub n2: usize,
    pub force: ForceField,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub cell: CellSolverOptions,
    pub macro_options: MacroOptions,
    pub quadrature: MobilityQuadrature,
}

/// Drivings tabulated by the `cell` command: every magnitude along every
/// one of `angles` equally spaced directions, magnitude-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub angles: usize,
    pub magnitudes: Vec<f64>,
}

impl SampleConfig {
    pub fn drivings(&self) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(self.angles * self.magnitudes.len());
        for &m in &self.magnitudes {
            for k in 0..self.angles {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / self.angles as f64;
                out.push([m * theta.cos(), m * theta.sin()]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub x: Vec2,
    pub points: usize,
    pub lattice: [usize; 3],
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub fluid: FluidParams,
    pub ell: Rational,
    pub regime: RegimeLabel,
    pub model: LimitModelKind,
    pub geometry: CellGeometry,
    pub cell_n: usize,
    pub macro_domain: Option<MacroConfig>,
    pub solver: SolverConfig,
    pub samples: SampleConfig,
    pub profile: Option<ProfileConfig>,
    pub output_dir: PathBuf,
}

fn positive(path: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::config(path, format!("must be positive, got {x}")))
    }
}

fn at_least(path: &str, n: usize, min: usize) -> Result<usize, CliError> {
    if n >= min {
        Ok(n)
    } else {
        Err(CliError::config(path, format!("must be at least {min}, got {n}")))
    }
}

/// Reads and validates a configuration file. Relative paths inside the
/// file are resolved against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(if path == "." { "" } else { &path }, e.into_inner().to_string())
    })?;

    let fluid_error = |e: porethin::Error| match e {
        porethin::Error::Parameter { name, reason } => CliError::config(&format!("fluid.{name}"), reason),
        other => CliError::config("fluid", other.to_string()),
    };
    let r = raw.fluid.r.to_rational("fluid.r")?;
    let gamma = raw.regime.gamma.to_rational("regime.gamma")?;
    let fluid = FluidParams::new(raw.fluid.eta0, raw.fluid.eta_inf, raw.fluid.lambda, r, gamma).map_err(fluid_error)?;
    let ell = raw.regime.ell.to_rational("regime.ell")?;
    let regime = classify_regime(ell).map_err(|e| CliError::config("regime.ell", e.to_string()))?;

    let geometry = match raw.cell.geometry {
        RawGeometry::None => CellGeometry::None,
        RawGeometry::Disk { radius } => CellGeometry::Disk { radius },
        RawGeometry::Square { half_width } => CellGeometry::Square { half_width },
    };
    geometry
        .validate()
        .map_err(|e| CliError::config("cell.geometry", e.to_string()))?;
    let cell_n = at_least("cell.n", raw.cell.n, 4)?;
    if cell_n % 2 != 0 {
        return Err(CliError::config("cell.n", format!("must be even, got {cell_n}")));
    }

    let macro_domain = match raw.macro_domain {
        None => None,
        Some(m) => {
            let l1 = positive("macro.l1", m.l1)?;
            let l2 = positive("macro.l2", m.l2)?;
            let n1 = at_least("macro.n1", m.n1, 2)?;
            let n2 = at_least("macro.n2", m.n2, 2)?;
            let force = match m.force {
                RawForce::Constant { value } => ForceField::Constant(value),
                RawForce::GradientOfQuadratic { hessian, linear } => {
                    if (hessian[0][1] - hessian[1][0]).abs() > 0.0 {
                        return Err(CliError::config("macro.force.hessian", "must be symmetric"));
                    }
                    ForceField::GradientOfQuadratic { hessian, linear }
                }
                RawForce::Rotational { center, strength } => ForceField::Rotational { center, strength },
                RawForce::NodalCsv { path } => {
                    ForceField::NodalSamples(read_nodal_force(&base.join(path), (n1 + 1) * (n2 + 1))?)
                }
            };
            let all_finite = match &force {
                ForceField::Constant(v) => v.iter().all(|x| x.is_finite()),
                ForceField::GradientOfQuadratic { hessian, linear } => {
                    hessian.iter().flatten().chain(linear).all(|x| x.is_finite())
                }
                ForceField::Rotational { center, strength } => {
                    center.iter().all(|x| x.is_finite()) && strength.is_finite()
                }
                ForceField::NodalSamples(v) => v.iter().flatten().all(|x| x.is_finite()),
            };
            if !all_finite {
                return Err(CliError::config("macro.force", "all force data must be finite"));
            }
            Some(MacroConfig { l1, l2, n1, n2, force })
        }
    };

    let s = raw.solver;
    let mut cell = CellSolverOptions::default();
    if let Some(t) = s.cell_tol {
        cell.tol = positive("solver.cell_tol", t)?;
    }
    if let Some(k) = s.cell_max_iter {
        cell.max_iter = at_least("solver.cell_max_iter", k, 1)?;
    }
    let mut macro_options = MacroOptions::default();
    if let Some(t) = s.macro_tol {
        macro_options.tol = positive("solver.macro_tol", t)?;
    }
    if let Some(k) = s.max_outer {
        macro_options.max_outer = at_least("solver.max_outer", k, 1)?;
    }
    if let Some(b) = s.tabulate_power_law {
        macro_options.tabulate_power_law = b;
    }
    if let Some(a) = s.table_angles {
        if a < 8 || a % 8 != 0 {
            return Err(CliError::config("solver.table_angles", format!("must be a positive multiple of 8, got {a}")));
        }
        macro_options.table_angles = a;
    }
    let default_quad = MobilityQuadrature::default();
    let quadrature = MobilityQuadrature::new(
        s.quadrature_nodes.unwrap_or(default_quad.nodes()),
        s.quadrature_rel_tol.unwrap_or(default_quad.rel_tol()),
        s.quadrature_max_levels.unwrap_or(default_quad.max_levels()),
    )
    .map_err(|e| CliError::config("solver", e.to_string()))?;

    let samples = match raw.cell_samples {
        None => SampleConfig {
            angles: 8,
            magnitudes: vec![0.0, 1.0, 10.0],
        },
        Some(c) => {
            let angles = at_least("cell_samples.angles", c.angles, 1)?;
            if c.magnitudes.is_empty() {
                return Err(CliError::config("cell_samples.magnitudes", "must not be empty"));
            }
            for (k, m) in c.magnitudes.iter().enumerate() {
                if !(m.is_finite() && *m >= 0.0) {
                    return Err(CliError::config(
                        &format!("cell_samples.magnitudes[{k}]"),
                        format!("must be finite and non-negative, got {m}"),
                    ));
                }
            }
            SampleConfig {
                angles,
                magnitudes: c.magnitudes,
            }
        }
    };

    let profile = match raw.profile {
        None => None,
        Some(p) => {
            at_least("profile.points", p.points, 2)?;
            if p.lattice.iter().any(|&d| d < 2) {
                return Err(CliError::config("profile.lattice", "needs at least two points per direction"));
            }
            if let Some(m) = &macro_domain {
                let inside = |x: f64, l: f64| (0.0..=l).contains(&x);
                if !(inside(p.x[0], m.l1) && inside(p.x[1], m.l2)) {
                    return Err(CliError::config(
                        "profile.x",
                        format!("point {:?} lies outside [0, {}] x [0, {}]", p.x, m.l1, m.l2),
                    ));
                }
            }
            Some(ProfileConfig {
                x: p.x,
                points: p.points,
                lattice: p.lattice,
            })
        }
    };

    Ok(RunConfig {
        model: fluid.limit_model(),
        fluid,
        ell,
        regime,
        geometry,
        cell_n,
        macro_domain,
        solver: SolverConfig {
            cell,
            macro_options,
            quadrature,
        },
        samples,
        profile,
        output_dir: raw.output.map_or_else(|| PathBuf::from("out"), |o| o.dir),
    })
}

/// Reads `fx, fy` rows, one per macro node in node order.
fn read_nodal_force(path: &Path, expected: usize) -> Result<Vec<Vec2>, CliError> {
    let field = "macro.force.path";
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::config(field, format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(field, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::config(field, format!("missing column `{name}`")))
    };
    let (ix, iy) = (col("fx")?, col("fy")?);
    let mut values = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::config(field, e.to_string()))?;
        let get = |i: usize| -> Result<f64, CliError> {
            record
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::config(field, format!("row {} is not numeric", k + 1)))
        };
        values.push([get(ix)?, get(iy)?]);
    }
    if values.len() != expected {
        return Err(CliError::config(
            field,
            format!("{} rows for {expected} mesh nodes", values.len()),
        ));
    }
    Ok(values)
}
