//! CSV tables and legacy-VTK ASCII files.
//!
//! Every float is written as `{:.16e}` (17 significant digits), so values
//! round-trip exactly and identical runs give identical bytes.

use std::io::Write;

use crate::cellmesh::PeriodicMesh;
use crate::cellsolve::{LawSample, PermeabilityTensor};
use crate::macro_darcy::MacroSolution;
use crate::reconstruct::{Lattice, Profile};
use crate::{Error, Result};

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w)
}

fn write_rows<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub const FLUX_TABLE_HEADER: [&str; 6] = ["delta_x", "delta_y", "flux_x", "flux_y", "iterations", "residual"];

/// One row per effective-law sample.
pub fn write_flux_table<W: Write>(w: W, samples: &[LawSample]) -> Result<()> {
    write_rows(
        w,
        &FLUX_TABLE_HEADER,
        samples.iter().map(|s| {
            vec![
                fmt_float(s.delta[0]),
                fmt_float(s.delta[1]),
                fmt_float(s.flux[0]),
                fmt_float(s.flux[1]),
                s.iterations.to_string(),
                fmt_float(s.residual),
            ]
        }),
    )
}

/// Flux table with an extra column `homogeneity`: the relative deviation of
/// each sample from `t^{r'-1}` times the sample at the smallest magnitude
/// on the same ray. Samples must be grouped by ray with magnitudes
/// increasing; `homogeneity[k]` is supplied by the caller.
pub fn write_flux_table_with_check<W: Write>(w: W, samples: &[LawSample], homogeneity: &[f64]) -> Result<()> {
    if homogeneity.len() != samples.len() {
        return Err(Error::param("homogeneity", "one value per sample is required"));
    }
    let mut header = FLUX_TABLE_HEADER.to_vec();
    header.push("homogeneity");
    write_rows(
        w,
        &header,
        samples.iter().zip(homogeneity).map(|(s, h)| {
            vec![
                fmt_float(s.delta[0]),
                fmt_float(s.delta[1]),
                fmt_float(s.flux[0]),
                fmt_float(s.flux[1]),
                s.iterations.to_string(),
                fmt_float(s.residual),
                fmt_float(*h),
            ]
        }),
    )
}

/// Single row `a11, a12, a21, a22, fluid_area`.
pub fn write_permeability_csv<W: Write>(w: W, tensor: &PermeabilityTensor, fluid_area: f64) -> Result<()> {
    let a = tensor.matrix;
    write_rows(
        w,
        &["a11", "a12", "a21", "a22", "fluid_area"],
        [vec![
            fmt_float(a[0][0]),
            fmt_float(a[0][1]),
            fmt_float(a[1][0]),
            fmt_float(a[1][1]),
            fmt_float(fluid_area),
        ]],
    )
}

/// Nodal pressure `x, y, p`.
pub fn write_pressure_csv<W: Write>(w: W, solution: &MacroSolution) -> Result<()> {
    write_rows(
        w,
        &["x", "y", "p"],
        solution
            .mesh
            .nodes()
            .iter()
            .zip(&solution.p)
            .map(|(x, p)| vec![fmt_float(x[0]), fmt_float(x[1]), fmt_float(*p)]),
    )
}

/// Element velocity at triangle centroids, `x, y, Vx, Vy`.
pub fn write_velocity_csv<W: Write>(w: W, solution: &MacroSolution) -> Result<()> {
    write_rows(
        w,
        &["x", "y", "Vx", "Vy"],
        solution.velocity.iter().enumerate().map(|(t, v)| {
            let c = solution.mesh.centroid(t);
            vec![fmt_float(c[0]), fmt_float(c[1]), fmt_float(v[0]), fmt_float(v[1])]
        }),
    )
}

/// Profile samples `z3, wx, wy`.
pub fn write_profile_csv<W: Write>(w: W, profile: &Profile) -> Result<()> {
    write_rows(
        w,
        &["z3", "wx", "wy"],
        profile
            .z
            .iter()
            .zip(&profile.w)
            .map(|(z, v)| vec![fmt_float(*z), fmt_float(v[0]), fmt_float(v[1])]),
    )
}

fn vtk_header<W: Write>(w: &mut W, title: &str, dataset: &str) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET {dataset}")?;
    Ok(())
}

fn vtk_points<W: Write>(w: &mut W, points: &[[f64; 2]]) -> Result<()> {
    writeln!(w, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(w, "{} {} {}", fmt_float(p[0]), fmt_float(p[1]), fmt_float(0.0))?;
    }
    Ok(())
}

/// Cell mesh as POLYDATA triangles with CELL_DATA `fluid` (1 fluid, 0
/// obstacle) and optional POINT_DATA scalars, one value per vertex.
pub fn write_cell_mesh_vtk<W: Write>(mut w: W, mesh: &PeriodicMesh, point_scalars: &[(&str, &[f64])]) -> Result<()> {
    vtk_header(&mut w, "porethin cell mesh", "POLYDATA")?;
    vtk_points(&mut w, mesh.vertices())?;
    let tris = mesh.triangles();
    writeln!(w, "POLYGONS {} {}", tris.len(), 4 * tris.len())?;
    for t in tris {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_DATA {}", tris.len())?;
    writeln!(w, "SCALARS fluid int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for &f in mesh.fluid_mask() {
        writeln!(w, "{}", u8::from(f))?;
    }
    if !point_scalars.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.vertices().len())?;
    }
    for (name, values) in point_scalars {
        if values.len() != mesh.vertices().len() {
            return Err(Error::param("point_scalars", "one value per vertex is required"));
        }
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values.iter() {
            writeln!(w, "{}", fmt_float(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Macro solution as UNSTRUCTURED_GRID triangles with POINT_DATA `p` and
/// CELL_DATA vectors `V`.
pub fn write_macro_vtk<W: Write>(mut w: W, solution: &MacroSolution) -> Result<()> {
    let mesh = &solution.mesh;
    vtk_header(&mut w, "porethin macro solution", "UNSTRUCTURED_GRID")?;
    vtk_points(&mut w, mesh.nodes())?;
    let tris = mesh.triangles();
    writeln!(w, "CELLS {} {}", tris.len(), 4 * tris.len())?;
    for t in tris {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {}", tris.len())?;
    for _ in tris {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", solution.p.len())?;
    writeln!(w, "SCALARS p double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for p in &solution.p {
        writeln!(w, "{}", fmt_float(*p))?;
    }
    writeln!(w, "CELL_DATA {}", solution.velocity.len())?;
    writeln!(w, "VECTORS V double")?;
    for v in &solution.velocity {
        writeln!(w, "{} {} {}", fmt_float(v[0]), fmt_float(v[1]), fmt_float(0.0))?;
    }
    w.flush()?;
    Ok(())
}

/// Reconstructed velocity on a structured lattice as STRUCTURED_POINTS with
/// POINT_DATA vectors `u`; the x index varies fastest.
pub fn write_lattice_vtk<W: Write>(mut w: W, lattice: &Lattice) -> Result<()> {
    let [nx, ny, nz] = lattice.dims;
    vtk_header(&mut w, "porethin reconstructed velocity", "STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {nx} {ny} {nz}")?;
    let [ox, oy, oz] = lattice.origin.map(fmt_float);
    writeln!(w, "ORIGIN {ox} {oy} {oz}")?;
    let [sx, sy, sz] = lattice.spacing.map(fmt_float);
    writeln!(w, "SPACING {sx} {sy} {sz}")?;
    writeln!(w, "POINT_DATA {}", lattice.values.len())?;
    writeln!(w, "VECTORS u double")?;
    for u in &lattice.values {
        writeln!(w, "{} {} {}", fmt_float(u[0]), fmt_float(u[1]), fmt_float(u[2]))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellmesh::CellGeometry;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn flux_table_layout() {
        let mut buf = Vec::new();
        let s = LawSample {
            delta: [1.0, 0.0],
            flux: [0.5, -0.25],
            iterations: 3,
            residual: 1e-12,
        };
        write_flux_table(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.split("\r\n");
        assert_eq!(lines.next().unwrap(), "delta_x,delta_y,flux_x,flux_y,iterations,residual");
        assert_eq!(
            lines.next().unwrap(),
            "1.0000000000000000e0,0.0000000000000000e0,5.0000000000000000e-1,-2.5000000000000000e-1,3,9.9999999999999998e-13"
        );
    }

    #[test]
    fn cell_vtk_counts() {
        let mesh = PeriodicMesh::new(CellGeometry::Disk { radius: 0.25 }, 4).unwrap();
        let mut buf = Vec::new();
        write_cell_mesh_vtk(&mut buf, &mesh, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("POINTS 25 double"));
        assert!(text.contains("POLYGONS 32 128"));
        assert!(text.contains("CELL_DATA 32"));
    }
}
