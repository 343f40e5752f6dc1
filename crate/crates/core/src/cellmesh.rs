//! Periodic triangulation of the perforated unit cell `(-1/2, 1/2)²`.
//!
//! The cell is a uniform `n × n` grid of squares, each split into two
//! triangles. Diagonals alternate by quadrant so that the triangulation is
//! invariant under the reflections `z₁ ↦ −z₁`, `z₂ ↦ −z₂` and `z₁ ↔ z₂`.
//! A triangle is solid when its centroid lies inside the obstacle; solid
//! triangles are left out of assembly, which imposes the no-flux obstacle
//! condition weakly.

use std::collections::VecDeque;

use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellGeometry {
    None,
    Disk { radius: f64 },
    Square { half_width: f64 },
}

/// Point symmetry group of the obstacle about the cell centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryGroup {
    /// Quarter turns and the axis/diagonal reflections of the square.
    Dihedral4,
    Trivial,
}

impl CellGeometry {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CellGeometry::None => Ok(()),
            CellGeometry::Disk { radius } => {
                if radius > 0.0 && radius < 0.5 {
                    Ok(())
                } else {
                    Err(Error::Geometry(format!(
                        "disk radius must lie in (0, 1/2) so the obstacle stays inside the cell, got {radius}"
                    )))
                }
            }
            CellGeometry::Square { half_width } => {
                if half_width > 0.0 && half_width < 0.5 {
                    Ok(())
                } else {
                    Err(Error::Geometry(format!(
                        "square half-width must lie in (0, 1/2), got {half_width}"
                    )))
                }
            }
        }
    }

    /// True iff `z` lies in the open obstacle.
    pub fn obstacle_indicator(&self, z: Vec2) -> bool {
        match *self {
            CellGeometry::None => false,
            CellGeometry::Disk { radius } => z[0] * z[0] + z[1] * z[1] < radius * radius,
            CellGeometry::Square { half_width } => z[0].abs() < half_width && z[1].abs() < half_width,
        }
    }

    pub fn symmetry(&self) -> SymmetryGroup {
        SymmetryGroup::Dihedral4
    }

    /// Exact area of the fluid part `1 − |T'|`.
    pub fn fluid_area(&self) -> f64 {
        match *self {
            CellGeometry::None => 1.0,
            CellGeometry::Disk { radius } => 1.0 - std::f64::consts::PI * radius * radius,
            CellGeometry::Square { half_width } => 1.0 - 4.0 * half_width * half_width,
        }
    }
}

/// A fluid triangle with its periodic degrees of freedom and the constant
/// gradients of its three P1 basis functions.
#[derive(Debug, Clone)]
pub struct FluidElement {
    pub triangle: usize,
    pub dofs: [usize; 3],
    pub area: f64,
    pub grads: [Vec2; 3],
    pub centroid: Vec2,
}

impl FluidElement {
    /// Gradient of the P1 field with nodal values `q` (indexed by DOF).
    #[inline]
    pub fn gradient(&self, q: &[f64]) -> Vec2 {
        let mut g = [0.0; 2];
        for (k, &d) in self.dofs.iter().enumerate() {
            g[0] += q[d] * self.grads[k][0];
            g[1] += q[d] * self.grads[k][1];
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    geometry: CellGeometry,
    n: usize,
    h: f64,
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    fluid_mask: Vec<bool>,
    dof_map: Vec<Option<usize>>,
    num_dofs: usize,
    fluid_area: f64,
    elements: Vec<FluidElement>,
    element_of: Vec<Option<usize>>,
    lumped_mass: Vec<f64>,
}

pub fn obstacle_indicator(geom: &CellGeometry, z: Vec2) -> bool {
    geom.obstacle_indicator(z)
}

pub fn build_cell_mesh(geom: CellGeometry, n: usize) -> Result<PeriodicMesh> {
    PeriodicMesh::new(geom, n)
}

impl PeriodicMesh {
    pub fn new(geometry: CellGeometry, n: usize) -> Result<Self> {
        geometry.validate()?;
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::param("n", format!("cell subdivisions must be even and >= 4, got {n}")));
        }
        let np = n + 1;
        let vid = |i: usize, j: usize| j * np + i;
        let inv_n = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push([-0.5 + i as f64 * inv_n, -0.5 + j as f64 * inv_n]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        let half = n / 2;
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                if (i < half) == (j < half) {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }

        let centroid = |t: &[usize; 3]| -> Vec2 {
            let mut c = [0.0; 2];
            for &v in t {
                c[0] += vertices[v][0] / 3.0;
                c[1] += vertices[v][1] / 3.0;
            }
            c
        };
        let fluid_mask: Vec<bool> = triangles
            .iter()
            .map(|t| !geometry.obstacle_indicator(centroid(t)))
            .collect();

        // periodic representative (i mod n, j mod n), then compress to active DOFs
        let mut dof_of_rep = vec![usize::MAX; n * n];
        let rep = |v: usize| -> usize { (v / np % n) * n + (v % np % n) };
        let mut num_dofs = 0;
        for (t, tri) in triangles.iter().enumerate() {
            if !fluid_mask[t] {
                continue;
            }
            for &v in tri {
                let r = rep(v);
                if dof_of_rep[r] == usize::MAX {
                    dof_of_rep[r] = num_dofs;
                    num_dofs += 1;
                }
            }
        }
        if num_dofs == 0 {
            return Err(Error::Geometry("the cell contains no fluid triangle".into()));
        }
        let dof_map: Vec<Option<usize>> = (0..vertices.len())
            .map(|v| {
                let d = dof_of_rep[rep(v)];
                (d != usize::MAX).then_some(d)
            })
            .collect();

        let mut elements = Vec::new();
        let mut element_of = vec![None; triangles.len()];
        let mut lumped_mass = vec![0.0; num_dofs];
        let mut fluid_area = 0.0;
        for (t, tri) in triangles.iter().enumerate() {
            if !fluid_mask[t] {
                continue;
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let area = 0.5 * det;
            debug_assert!(area > 0.0);
            // ∇φ_k = rot(opposite edge) / (2|T|)
            let grads = [
                [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
                [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
                [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
            ];
            let dofs = tri.map(|v| dof_map[v].expect("fluid vertex carries a DOF"));
            for &d in &dofs {
                lumped_mass[d] += area / 3.0;
            }
            fluid_area += area;
            element_of[t] = Some(elements.len());
            elements.push(FluidElement {
                triangle: t,
                dofs,
                area,
                grads,
                centroid: centroid(tri),
            });
        }

        let mesh = Self {
            geometry,
            n,
            h: std::f64::consts::SQRT_2 / n as f64,
            vertices,
            triangles,
            fluid_mask,
            dof_map,
            num_dofs,
            fluid_area,
            elements,
            element_of,
            lumped_mass,
        };
        mesh.check_percolation()?;
        Ok(mesh)
    }

    /// The fluid DOF graph must be connected and wrap around the torus in
    /// two independent directions; otherwise the cell problems lose their
    /// periodic structure.
    fn check_percolation(&self) -> Result<()> {
        let np = self.n + 1;
        let n = self.n as i64;
        let mut adjacency: Vec<Vec<(usize, [i64; 2])>> = vec![Vec::new(); self.num_dofs];
        for e in &self.elements {
            let tri = self.triangles[e.triangle];
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let (va, vb) = (tri[a], tri[b]);
                    let d = [
                        (vb % np) as i64 - (va % np) as i64,
                        (vb / np) as i64 - (va / np) as i64,
                    ];
                    adjacency[e.dofs[a]].push((e.dofs[b], d));
                }
            }
        }
        let mut lift: Vec<Option<[i64; 2]>> = vec![None; self.num_dofs];
        let mut windings: Vec<[i64; 2]> = Vec::new();
        lift[0] = Some([0, 0]);
        let mut queue = VecDeque::from([0usize]);
        let mut visited = 1;
        while let Some(a) = queue.pop_front() {
            let la = lift[a].unwrap();
            for &(b, d) in &adjacency[a] {
                let expected = [la[0] + d[0], la[1] + d[1]];
                match lift[b] {
                    None => {
                        lift[b] = Some(expected);
                        visited += 1;
                        queue.push_back(b);
                    }
                    Some(lb) => {
                        let w = [(expected[0] - lb[0]) / n, (expected[1] - lb[1]) / n];
                        if w != [0, 0] {
                            windings.push(w);
                        }
                    }
                }
            }
        }
        if visited != self.num_dofs {
            return Err(Error::Geometry(format!(
                "fluid region is disconnected ({visited} of {} DOFs reachable)",
                self.num_dofs
            )));
        }
        let spans_plane = windings.iter().any(|u| {
            windings
                .iter()
                .any(|v| u[0] * v[1] - u[1] * v[0] != 0)
        });
        if !spans_plane {
            return Err(Error::Geometry(
                "fluid region does not connect across periodic copies in both directions".into(),
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> CellGeometry {
        self.geometry
    }

    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn fluid_mask(&self) -> &[bool] {
        &self.fluid_mask
    }

    pub fn dof_map(&self) -> &[Option<usize>] {
        &self.dof_map
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn fluid_area(&self) -> f64 {
        self.fluid_area
    }

    pub fn elements(&self) -> &[FluidElement] {
        &self.elements
    }

    /// Lumped P1 mass of each DOF; sums to the fluid area.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    /// Subtracts the lumped-mass weighted mean from a DOF field.
    pub fn remove_weighted_mean(&self, q: &mut [f64]) {
        let mean = self.weighted_mean(q);
        q.iter_mut().for_each(|x| *x -= mean);
    }

    pub fn weighted_mean(&self, q: &[f64]) -> f64 {
        q.iter().zip(&self.lumped_mass).map(|(x, m)| x * m).sum::<f64>() / self.fluid_area
    }

    /// Triangle containing `z` (points on shared edges resolve to one side).
    pub fn locate(&self, z: Vec2) -> Result<usize> {
        let inside = |x: f64| (-0.5..=0.5).contains(&x);
        if !(inside(z[0]) && inside(z[1])) {
            return Err(Error::Domain(format!("cell point {z:?} outside [-1/2, 1/2]^2")));
        }
        let n = self.n;
        let scaled = [(z[0] + 0.5) * n as f64, (z[1] + 0.5) * n as f64];
        let i = (scaled[0].floor() as usize).min(n - 1);
        let j = (scaled[1].floor() as usize).min(n - 1);
        let (u, v) = (scaled[0] - i as f64, scaled[1] - j as f64);
        let half = n / 2;
        let second = if (i < half) == (j < half) { v > u } else { u + v > 1.0 };
        Ok(2 * (j * n + i) + usize::from(second))
    }

    /// Fluid element index of triangle `t`, or `None` for solid triangles.
    pub fn element_of_triangle(&self, t: usize) -> Option<usize> {
        self.element_of[t]
    }

    /// Expands a DOF field to vertex values (zero on vertices without DOF).
    pub fn vertex_values(&self, q: &[f64]) -> Vec<f64> {
        self.dof_map
            .iter()
            .map(|d| d.map_or(0.0, |d| q[d]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator() {
        let disk = CellGeometry::Disk { radius: 0.25 };
        assert!(disk.obstacle_indicator([0.0, 0.0]));
        assert!(!disk.obstacle_indicator([0.4, 0.4]));
        assert!(!CellGeometry::None.obstacle_indicator([0.0, 0.0]));
        let sq = CellGeometry::Square { half_width: 0.2 };
        assert!(sq.obstacle_indicator([0.19, -0.19]));
        assert!(!sq.obstacle_indicator([0.21, 0.0]));
    }

    #[test]
    fn empty_cell_counts() {
        let mesh = build_cell_mesh(CellGeometry::None, 8).unwrap();
        assert_eq!(mesh.triangles().len(), 128);
        assert!(mesh.fluid_mask().iter().all(|&f| f));
        assert_eq!(mesh.fluid_area(), 1.0);
        assert_eq!(mesh.num_dofs(), 64);
        assert!((mesh.h() - 2f64.sqrt() / 8.0).abs() < 1e-15);
        let mass: f64 = mesh.lumped_mass().iter().sum();
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn opposite_edges_share_dofs() {
        let mesh = build_cell_mesh(CellGeometry::Disk { radius: 0.3 }, 12).unwrap();
        let np = 13;
        for k in 0..np {
            assert_eq!(mesh.dof_map()[k], mesh.dof_map()[12 * np + k]);
            assert_eq!(mesh.dof_map()[k * np], mesh.dof_map()[k * np + 12]);
        }
        let corners = [0, 12, 12 * np, 12 * np + 12];
        assert!(corners.iter().all(|&c| mesh.dof_map()[c] == mesh.dof_map()[0]));
    }

    #[test]
    fn radius_limits() {
        assert!(build_cell_mesh(CellGeometry::Disk { radius: 0.49 }, 64).is_ok());
        assert!(matches!(
            build_cell_mesh(CellGeometry::Disk { radius: 0.51 }, 64),
            Err(Error::Geometry(_))
        ));
        assert!(build_cell_mesh(CellGeometry::None, 6).is_ok());
        assert!(build_cell_mesh(CellGeometry::None, 5).is_err());
        assert!(build_cell_mesh(CellGeometry::None, 2).is_err());
    }

    #[test]
    fn coarse_staircase_that_blocks_the_channels_is_rejected() {
        // At n = 4 only the four squares around the cell corner stay fluid;
        // they form one blob that does not wrap around the torus.
        let err = build_cell_mesh(CellGeometry::Disk { radius: 0.49 }, 4).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)), "{err}");
    }

    #[test]
    fn mesh_is_reflection_symmetric() {
        for geom in [CellGeometry::Disk { radius: 0.27 }, CellGeometry::Square { half_width: 0.3 }] {
            let mesh = build_cell_mesh(geom, 16).unwrap();
            let fluid: std::collections::HashSet<[i64; 2]> = mesh
                .elements()
                .iter()
                .map(|e| [(e.centroid[0] * 48.0).round() as i64, (e.centroid[1] * 48.0).round() as i64])
                .collect();
            for e in mesh.elements() {
                let c = [(e.centroid[0] * 48.0).round() as i64, (e.centroid[1] * 48.0).round() as i64];
                assert!(fluid.contains(&[-c[0], c[1]]));
                assert!(fluid.contains(&[c[0], -c[1]]));
                assert!(fluid.contains(&[c[1], c[0]]));
            }
        }
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let mesh = build_cell_mesh(CellGeometry::None, 8).unwrap();
        for z in [[0.01, 0.02], [-0.33, 0.41], [0.49, -0.49], [0.5, 0.5], [-0.5, -0.5]] {
            let t = mesh.locate(z).unwrap();
            let [a, b, c] = mesh.triangles()[t].map(|v| mesh.vertices()[v]);
            let cross = |p: Vec2, q: Vec2, r: Vec2| (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
            assert!(cross(a, b, z) >= -1e-14 && cross(b, c, z) >= -1e-14 && cross(c, a, z) >= -1e-14);
        }
        assert!(mesh.locate([0.6, 0.0]).is_err());
    }

    #[test]
    fn disk_area_converges() {
        // Richardson extrapolation of the staircase area over n = 32, 64, 128
        let exact = 1.0 - std::f64::consts::PI / 16.0;
        let a: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| build_cell_mesh(CellGeometry::Disk { radius: 0.25 }, n).unwrap().fluid_area())
            .collect();
        let extrapolated = 2.0 * a[2] - a[1];
        assert!((a[2] - exact).abs() < 5e-3);
        assert!((extrapolated - exact).abs() <= (a[2] - exact).abs() + 1e-3);
    }
}
