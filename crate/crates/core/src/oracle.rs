//! Brute-force reference solvers used to check the main solvers.
//!
//! Nothing here shares assembly or integration code with [`crate::cellsolve`]
//! or [`crate::reconstruct`]: the 1D profile problem is integrated once
//! analytically and then by an adaptive Simpson rule, and the cell problem
//! is minimized by plain gradient descent on a mesh built from scratch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cellmesh::CellGeometry;
use crate::constitutive::{self, MobilityQuadrature};
use crate::params::{FluidParams, LimitModelKind};
use crate::reconstruct::Profile;
use crate::{Error, Result, Vec2};

/// Comparison of a candidate against an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub sup_error: f64,
    pub mean_error: f64,
    pub grid: usize,
    pub law: String,
}

/// Adaptive Simpson rule with Richardson correction.
fn simpson<F>(f: &mut F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(f: &mut F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 || (b - a).abs() <= 1e-15 {
        if depth == 0 && delta.abs() > 15.0 * tol {
            return Err(Error::Quadrature {
                a,
                b,
                tol,
                levels: 60,
            });
        }
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Scalar shear-rate law `u' = rate(σ)` of the 1D reduced problem together
/// with the factor `k` in `σ = k·|g|·(z + c)`.
enum RateLaw {
    Newtonian { eta: f64 },
    Carreau { params: FluidParams },
    PowerLaw { consistency: f64, inverse_exponent: f64 },
}

impl RateLaw {
    fn new(params: &FluidParams, kind: LimitModelKind) -> Result<Self> {
        Ok(match kind {
            LimitModelKind::NewtonianZeroShear => RateLaw::Newtonian { eta: params.eta0() },
            LimitModelKind::NewtonianInfiniteShear => RateLaw::Newtonian { eta: params.eta_inf() },
            LimitModelKind::Carreau => RateLaw::Carreau { params: *params },
            LimitModelKind::PowerLaw => {
                let r = params.r();
                if r <= 2.0 {
                    return Err(Error::param("r", "power-law oracle needs r > 2"));
                }
                // High-rate asymptote of the reduced viscosity,
                // (η₀−η∞)(λ/2)^{r/2−1}y^{r−2}, times the factor 1/2 of the
                // reduced momentum equation.
                let consistency = 0.5 * (params.eta0() - params.eta_inf()) * (0.5 * params.lambda()).powf(0.5 * r - 1.0);
                RateLaw::PowerLaw {
                    consistency,
                    inverse_exponent: 1.0 / (r - 1.0),
                }
            }
        })
    }

    /// Stress factor: the equation integrates to `σ = factor·|g|·(z + c)`.
    fn stress_factor(&self) -> f64 {
        match self {
            RateLaw::PowerLaw { .. } => 1.0,
            _ => 2.0,
        }
    }

    fn rate(&self, sigma: f64) -> Result<f64> {
        match self {
            RateLaw::Newtonian { eta } => Ok(sigma / eta),
            RateLaw::Carreau { params } => Ok(sigma / constitutive::psi(sigma.abs(), params)?),
            RateLaw::PowerLaw {
                consistency,
                inverse_exponent,
            } => Ok(sigma.signum() * (sigma.abs() / consistency).powf(*inverse_exponent)),
        }
    }
}

/// Oracle solution of the reduced 1D boundary-value problem.
#[derive(Debug, Clone)]
pub struct BvpProfile {
    pub profile: Profile,
    /// Thickness mean `∫₀¹ w dz₃`.
    pub mean: Vec2,
    /// Constant `c` in the stress `σ(z₃) = k|g|(z₃ + c)`.
    pub offset: f64,
    /// `k` in the stress.
    pub stress_factor: f64,
    pub magnitude: f64,
}

impl BvpProfile {
    /// Scalar stress along the driving direction at height `z3`.
    pub fn stress(&self, z3: f64) -> f64 {
        self.stress_factor * self.magnitude * (z3 + self.offset)
    }
}

const ORACLE_TOL: f64 = 1e-14;

/// Solves `w(0) = w(1) = 0` for the reduced momentum equation driven by `g`:
/// the stress is affine in `z₃`, its offset is fixed by `∫₀¹ w' = 0`, and the
/// rate is recovered pointwise from the scalar constitutive law.
pub fn bvp_profile_oracle(g: Vec2, params: &FluidParams, kind: LimitModelKind, n: usize) -> Result<BvpProfile> {
    if n < 64 {
        return Err(Error::param("n", format!("oracle grid needs at least 64 intervals, got {n}")));
    }
    let law = RateLaw::new(params, kind)?;
    let magnitude = g[0].hypot(g[1]);
    let heights: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    if magnitude == 0.0 {
        if kind == LimitModelKind::PowerLaw {
            return Err(Error::param("g", "power-law oracle needs a nonzero driving"));
        }
        return Ok(BvpProfile {
            profile: Profile {
                g,
                law: "oracle",
                z: heights.clone(),
                w: vec![[0.0; 2]; n + 1],
            },
            mean: [0.0; 2],
            offset: -0.5,
            stress_factor: law.stress_factor(),
            magnitude,
        });
    }
    let factor = law.stress_factor() * magnitude;
    let slope_at = |c: f64, z: f64| law.rate(factor * (z + c));
    // ∫ w' over [a, b], split where the stress changes sign.
    let integrate = |c: f64, a: f64, b: f64, weight: &dyn Fn(f64) -> f64| -> Result<f64> {
        let scale = law.rate(factor)?.abs().max(f64::MIN_POSITIVE);
        let tol = ORACLE_TOL * scale;
        let mut f = |z: f64| Ok(weight(z) * slope_at(c, z)?);
        let zero = -c;
        if zero > a && zero < b {
            Ok(simpson(&mut f, a, zero, tol)? + simpson(&mut f, zero, b, tol)?)
        } else {
            simpson(&mut f, a, b, tol)
        }
    };
    let unit = |_: f64| 1.0;
    let (mut lo, mut hi) = (-1.0, 0.0);
    let mut offset = -0.5;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let value = integrate(mid, 0.0, 1.0, &unit)?;
        if value == 0.0 {
            lo = mid;
            hi = mid;
        } else if value < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        offset = 0.5 * (lo + hi);
        if hi - lo <= 4.0 * f64::EPSILON {
            break;
        }
    }
    let direction = [g[0] / magnitude, g[1] / magnitude];
    let mut w = Vec::with_capacity(n + 1);
    let mut u = 0.0;
    w.push([0.0; 2]);
    for k in 1..=n {
        u += integrate(offset, heights[k - 1], heights[k], &unit)?;
        let value = if k == n { 0.0 } else { u };
        w.push([value * direction[0], value * direction[1]]);
    }
    let mean_scalar = integrate(offset, 0.0, 1.0, &|z: f64| 1.0 - z)?;
    Ok(BvpProfile {
        profile: Profile {
            g,
            law: "oracle",
            z: heights,
            w,
        },
        mean: [mean_scalar * direction[0], mean_scalar * direction[1]],
        offset,
        stress_factor: law.stress_factor(),
        magnitude,
    })
}

/// Compares a sampled profile and its mean with the oracle.
pub fn compare_profile(oracle: &BvpProfile, candidate: &Profile, candidate_mean: Vec2, law: &str) -> Result<OracleReport> {
    Ok(OracleReport {
        sup_error: oracle.profile.sup_distance(candidate)?,
        mean_error: (oracle.mean[0] - candidate_mean[0]).abs().max((oracle.mean[1] - candidate_mean[1]).abs()),
        grid: oracle.profile.z.len() - 1,
        law: law.to_string(),
    })
}

/// Law of the dense cell oracle.
#[derive(Debug, Clone)]
pub enum OracleLaw {
    Linear,
    PowerLaw { r_prime: f64 },
    Carreau { params: FluidParams, quad: MobilityQuadrature },
}

impl OracleLaw {
    /// `(Φ(s), c(s))` with `Φ'(s) = c(s)s`.
    fn pointwise(&self, s: f64, eps2: f64) -> Result<(f64, f64)> {
        match self {
            OracleLaw::Linear => Ok((0.5 * s * s, 1.0)),
            OracleLaw::PowerLaw { r_prime } => {
                let b = s * s + eps2;
                Ok((b.powf(0.5 * r_prime) / r_prime, b.powf(0.5 * r_prime - 1.0)))
            }
            OracleLaw::Carreau { params, quad } => Ok((
                constitutive::mobility_potential(s, params, quad)?,
                constitutive::mobility(s, params, quad)?,
            )),
        }
    }
}

/// Result of the dense cell oracle. Field values are stored per grid
/// vertex `(i, j)` at index `j(n+1) + i`; vertices not touching the fluid
/// are `None`.
#[derive(Debug, Clone)]
pub struct DenseCellSolution {
    pub vertex_values: Vec<Option<f64>>,
    pub flux: Vec2,
    pub iterations: usize,
    pub gradient_norm: f64,
}

struct DenseTriangle {
    dofs: [usize; 3],
    area: f64,
    grads: [Vec2; 3],
}

/// Minimizes the discrete cell energy `Σ_T |T| Φ(|δ + ∇q|)` over periodic
/// P1 fields by gradient descent with Barzilai–Borwein steps safeguarded by
/// Armijo backtracking, until the gradient norm is `1e-10` relative to its
/// initial scale.
pub fn dense_energy_cell_oracle(geom: CellGeometry, n: usize, delta: Vec2, law: &OracleLaw) -> Result<DenseCellSolution> {
    if !(4..=16).contains(&n) || !n.is_multiple_of(2) {
        return Err(Error::param("n", format!("dense oracle needs an even grid of at most 16, got {n}")));
    }
    geom.validate()?;
    let h = 1.0 / n as f64;
    let coord = |k: usize| -0.5 + k as f64 * h;
    // Periodic representative of grid vertex (i, j).
    let rep = |i: usize, j: usize| (j % n) * n + (i % n);
    let mut raw = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let rising = (i < n / 2) == (j < n / 2);
            let tris = if rising {
                [[v[0], v[1], v[2]], [v[0], v[2], v[3]]]
            } else {
                [[v[0], v[1], v[3]], [v[1], v[2], v[3]]]
            };
            for tri in tris {
                let pts = tri.map(|(a, b)| [coord(a), coord(b)]);
                let centroid = [
                    (pts[0][0] + pts[1][0] + pts[2][0]) / 3.0,
                    (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0,
                ];
                if geom.obstacle_indicator(centroid) {
                    continue;
                }
                raw.push((tri.map(|(a, b)| rep(a, b)), pts));
            }
        }
    }
    let mut index = vec![usize::MAX; n * n];
    let mut count = 0;
    for (tri, _) in &raw {
        for &r in tri {
            if index[r] == usize::MAX {
                index[r] = count;
                count += 1;
            }
        }
    }
    let triangles: Vec<DenseTriangle> = raw
        .iter()
        .map(|(tri, p)| {
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let grads = [
                [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
                [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
                [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
            ];
            DenseTriangle {
                dofs: tri.map(|r| index[r]),
                area: 0.5 * det.abs(),
                grads,
            }
        })
        .collect();

    let eps = 1e-8 * delta[0].hypot(delta[1]).max(1.0);
    let eps2 = if matches!(law, OracleLaw::PowerLaw { .. }) { eps * eps } else { 0.0 };
    let field_gradient = |t: &DenseTriangle, q: &[f64]| -> Vec2 {
        let mut g = delta;
        for k in 0..3 {
            g[0] += q[t.dofs[k]] * t.grads[k][0];
            g[1] += q[t.dofs[k]] * t.grads[k][1];
        }
        g
    };
    let evaluate = |q: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut energy = 0.0;
        let mut grad = vec![0.0; count];
        for t in &triangles {
            let g = field_gradient(t, q);
            let (phi, c) = law.pointwise(g[0].hypot(g[1]), eps2)?;
            energy += t.area * phi;
            for k in 0..3 {
                grad[t.dofs[k]] += t.area * c * (g[0] * t.grads[k][0] + g[1] * t.grads[k][1]);
            }
        }
        Ok((energy, grad))
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut q = vec![0.0; count];
    let (mut energy, mut grad) = evaluate(&q)?;
    let reference = {
        let (_, c) = law.pointwise(delta[0].hypot(delta[1]), eps2)?;
        let mut s = vec![0.0; count];
        for t in &triangles {
            for k in 0..3 {
                s[t.dofs[k]] += t.area * c * delta[0].hypot(delta[1]) * t.grads[k][0].hypot(t.grads[k][1]);
            }
        }
        norm(&s)
    };
    let target = 1e-10 * reference;
    let mut step = 1.0;
    let mut iterations = 0;
    let max_iter = 200_000;
    while norm(&grad) > target {
        if iterations == max_iter {
            return Err(Error::NoConvergence {
                solver: "dense cell oracle",
                iterations,
                residual: norm(&grad) / reference,
                history: Vec::new(),
            });
        }
        iterations += 1;
        let g2 = dot(&grad, &grad);
        let mut t = step;
        let (next_q, next_energy, next_grad) = loop {
            let trial: Vec<f64> = q.iter().zip(&grad).map(|(x, g)| x - t * g).collect();
            let (e, gr) = evaluate(&trial)?;
            if e <= energy - 1e-4 * t * g2 || (e - energy).abs() <= 1e-13 * energy.abs() && norm(&gr) < norm(&grad) {
                break (trial, e, gr);
            }
            t *= 0.5;
            if t < 1e-20 {
                return Err(Error::NoConvergence {
                    solver: "dense cell oracle backtracking",
                    iterations,
                    residual: norm(&grad) / reference,
                    history: Vec::new(),
                });
            }
        };
        let s: Vec<f64> = next_q.iter().zip(&q).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { 2.0 * t };
        q = next_q;
        energy = next_energy;
        grad = next_grad;
    }

    // Lumped-mass mean zero.
    let mut mass = vec![0.0; count];
    for t in &triangles {
        for &d in &t.dofs {
            mass[d] += t.area / 3.0;
        }
    }
    let mean = dot(&q, &mass) / mass.iter().sum::<f64>();
    q.iter_mut().for_each(|x| *x -= mean);

    let mut flux = [0.0; 2];
    for t in &triangles {
        let g = field_gradient(t, &q);
        let (_, c) = law.pointwise(g[0].hypot(g[1]), eps2)?;
        flux[0] += t.area * c * g[0];
        flux[1] += t.area * c * g[1];
    }
    let vertex_values = (0..(n + 1) * (n + 1))
        .map(|v| {
            let r = rep(v % (n + 1), v / (n + 1));
            (index[r] != usize::MAX).then(|| q[index[r]])
        })
        .collect();
    Ok(DenseCellSolution {
        vertex_values,
        flux,
        iterations,
        gradient_norm: norm(&grad),
    })
}

/// Largest deviation between central differences of `energy` and the
/// directional derivative from `gradient` at `point`, over 20 random unit
/// directions, relative to the gradient norm.
pub fn fd_gradient_check<E, G>(energy: E, gradient: G, point: &[f64], h_fd: f64, seed: u64) -> Result<f64>
where
    E: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(1e-7..=1e-4).contains(&h_fd) {
        return Err(Error::param("h_fd", format!("finite-difference step must lie in [1e-7, 1e-4], got {h_fd}")));
    }
    let grad = gradient(point)?;
    let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
    if gnorm == 0.0 {
        return Err(Error::param("point", "gradient vanishes; pick a generic field"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut dir: Vec<f64> = (0..point.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dn = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= dn);
        let shifted = |sign: f64| -> Vec<f64> { point.iter().zip(&dir).map(|(p, d)| p + sign * h_fd * d).collect() };
        let fd = (energy(&shifted(1.0))? - energy(&shifted(-1.0))?) / (2.0 * h_fd);
        let exact: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        worst = worst.max((fd - exact).abs() / gnorm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_accurate() {
        let mut f = |x: f64| Ok(x.sqrt());
        let v = simpson(&mut f, 0.0, 1.0, 1e-14).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn newtonian_oracle_is_parabolic() {
        let p = FluidParams::from_f64(2.0, 1.0, 1.0, 1.5, 0.0).unwrap();
        let o = bvp_profile_oracle([1.0, -2.0], &p, LimitModelKind::NewtonianZeroShear, 64).unwrap();
        assert!((o.offset + 0.5).abs() < 1e-14);
        for (z, w) in o.profile.z.iter().zip(&o.profile.w) {
            let exact = (z * z - z) / 2.0;
            assert!((w[0] - exact).abs() < 1e-13 && (w[1] + 2.0 * exact).abs() < 1e-13);
        }
        assert!((o.mean[0] + 1.0 / 12.0).abs() < 1e-13);
    }

    #[test]
    fn dense_oracle_empty_cell() {
        let s = dense_energy_cell_oracle(CellGeometry::None, 8, [1.0, 0.5], &OracleLaw::Linear).unwrap();
        assert!(s.vertex_values.iter().all(|v| v.unwrap().abs() < 1e-14));
        assert!((s.flux[0] - 1.0).abs() < 1e-14 && (s.flux[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fd_check_rejects_bad_step() {
        assert!(fd_gradient_check(|_| Ok(0.0), |_| Ok(vec![1.0]), &[0.0], 1e-2, 1).is_err());
    }
}
