//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use porethin::cellmesh::{build_cell_mesh, CellGeometry, PeriodicMesh};
use porethin::cellsolve::{
    effective_law, permeability_tensor, solve_cell, CellEnergy, CellLaw, CellSolverOptions, EffectiveLaw,
};
use porethin::constitutive::{mobility, powerlaw_prefactor, psi, stress_from_viscosity, MobilityQuadrature};
use porethin::macro_darcy::{
    build_macro_mesh, solve_linear_darcy, solve_nonlinear_darcy, ForceField, MacroProblem, MacroSolution,
};
use porethin::oracle::{bvp_profile_oracle, compare_profile, dense_energy_cell_oracle, fd_gradient_check, OracleLaw};
use porethin::params::{FluidParams, LimitModelKind, Rational, RegimeLabel};
use porethin::reconstruct::ProfileLaw;
use porethin_cli::{cmd_darcy, cmd_regime, parse_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

const DISK: CellGeometry = CellGeometry::Disk { radius: 0.25 };

fn mesh(geom: CellGeometry, n: usize) -> Result<Arc<PeriodicMesh>, String> {
    e(build_cell_mesh(geom, n)).map(Arc::new)
}

fn fluid(eta0: f64, eta_inf: f64, lambda: f64, r: f64) -> Result<FluidParams, String> {
    e(FluidParams::from_f64(eta0, eta_inf, lambda, r, 1.0))
}

/// Effective law of `kind`, with gamma set so that `kind` is the selected limit model.
fn build_law(cell: Arc<PeriodicMesh>, kind: LimitModelKind, p: &FluidParams) -> Result<EffectiveLaw, String> {
    let gamma = match kind {
        LimitModelKind::NewtonianZeroShear => 0,
        LimitModelKind::Carreau => 1,
        LimitModelKind::NewtonianInfiniteShear | LimitModelKind::PowerLaw => 2,
    };
    e(effective_law(cell, kind, &e(p.with_gamma(Rational::from_integer(gamma)))?))
}

fn random_driving(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 2] {
    let m = rng.gen_range(lo.ln()..hi.ln()).exp();
    let a = rng.gen_range(0.0..2.0 * PI);
    [m * a.cos(), m * a.sin()]
}

fn random_fluid(rng: &mut ChaCha8Rng, r: f64) -> Result<FluidParams, String> {
    let eta0 = rng.gen_range(0.5..5.0);
    let eta_inf = eta0 * rng.gen_range(0.05..0.8);
    fluid(eta0, eta_inf, rng.gen_range(0.1..10.0), r)
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn psi_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for r in [1.2, 1.5, 1.8, 2.5, 3.0, 5.0] {
        for p in [fluid(1.0, 1e-3, 100.0, r)?, fluid(2.0, 0.02, 50.0, r)?] {
            let mut previous: Option<f64> = None;
            for k in 0..1000 {
                let tau = 10f64.powf(-6.0 + 12.0 * k as f64 / 999.0);
                let v = e(psi(tau, &p))?;
                if p.shear_thinning() {
                    ensure(v > p.eta_inf() && v <= p.eta0(), || format!("psi({tau:e}) = {v} out of range, r = {r}"))?;
                } else {
                    ensure(v >= p.eta0(), || format!("psi({tau:e}) = {v} below eta0, r = {r}"))?;
                }
                if let Some(prev) = previous {
                    let monotone = if p.shear_thinning() { v <= prev } else { v >= prev };
                    ensure(monotone, || format!("psi not monotone at tau = {tau:e}, r = {r}"))?;
                }
                previous = Some(v);
                let err = (e(stress_from_viscosity(v, &p))? - tau).abs() / tau.max(1.0);
                worst = worst.max(err);
                ensure(err <= 1e-10, || format!("round trip error {err:e} at tau = {tau:e}, r = {r}"))?;
                count += 1;
            }
        }
    }
    Ok(format!("{count} samples, worst scaled error {worst:.1e}"))
}

fn newtonian_anchor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let quad = MobilityQuadrature::default();
    let mut worst = 0.0f64;
    for k in 0..10 {
        let r = if k % 2 == 0 { rng.gen_range(1.1..1.9) } else { rng.gen_range(2.1..5.0) };
        let p = random_fluid(&mut rng, r)?;
        let err = (e(mobility(0.0, &p, &quad))? - 1.0 / (6.0 * p.eta0())).abs();
        worst = worst.max(err);
        ensure(err <= 1e-10, || format!("M(0) off by {err:e} for {p:?}"))?;
    }
    Ok(format!("worst |M(0) - 1/(6 eta0)| = {worst:.1e}"))
}

fn empty_cell_permeability() -> Outcome {
    let mut worst = 0.0f64;
    for n in [8, 32, 128] {
        let a = e(permeability_tensor(&*mesh(CellGeometry::None, n)?))?.matrix;
        let dev = [a[0][0] - 1.0, a[0][1], a[1][0], a[1][1] - 1.0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        worst = worst.max(dev);
        ensure(dev <= 1e-8, || format!("n = {n}: |A - I| = {dev:e}"))?;
    }
    Ok(format!("worst |A - I|_max = {worst:.1e}"))
}

fn obstacle_permeability() -> Outcome {
    let mut a = Vec::new();
    for n in [32, 64, 128] {
        let m = mesh(DISK, n)?;
        let t = e(permeability_tensor(&m))?;
        let x = t.matrix;
        ensure(x[0][1].abs() <= 1e-8 && x[1][0].abs() <= 1e-8, || format!("n = {n}: off-diagonal {x:?}"))?;
        ensure(t.asymmetry() <= 1e-10, || format!("n = {n}: asymmetry {:e}", t.asymmetry()))?;
        ensure((x[0][0] - x[1][1]).abs() <= 1e-8, || format!("n = {n}: not isotropic {x:?}"))?;
        let [lo, hi] = t.eigenvalues();
        ensure(lo > 0.0 && hi <= m.fluid_area(), || format!("n = {n}: eigenvalues {lo}, {hi}"))?;
        a.push(x[0][0]);
    }
    let order = ((a[0] - a[1]).abs() / (a[1] - a[2]).abs()).log2();
    ensure(order >= 0.8, || format!("observed order {order:.3} from a = {a:?}"))?;
    Ok(format!("a = {:.6}, {:.6}, {:.6}; observed order {order:.2}", a[0], a[1], a[2]))
}

fn powerlaw_homogeneity() -> Outcome {
    let p = fluid(2.0, 0.5, 1.5, 3.0)?;
    let law = build_law(mesh(DISK, 16)?, LimitModelKind::PowerLaw, &p)?;
    let rp = p.conjugate_exponent();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = random_driving(&mut rng, 0.1, 10.0);
        let base = e(law.evaluate(d))?;
        for t in [0.5, 2.0, 10.0] {
            let scaled = e(law.evaluate([t * d[0], t * d[1]]))?;
            let s = t.powf(rp - 1.0);
            let err = dist(scaled, [s * base[0], s * base[1]]) / (norm(base) * s);
            worst = worst.max(err);
            ensure(err <= 1e-6, || format!("delta {d:?}, t = {t}: relative deviation {err:e}"))?;
        }
    }
    Ok(format!("60 checks, worst relative deviation {worst:.1e}"))
}

/// Lower bound of `U(δ)·δ` from the permeability tensor: `λ_min(A)|δ|²/(6η₀)`
/// for laws whose mobility is at least `1/(6η₀)`, and
/// `c_r max|G|^{r'-2} λ_min(A)|δ|²` for the power law, with `G` the computed
/// local driving.
fn coercivity_bound(law: &EffectiveLaw, lambda_min: f64, delta: [f64; 2]) -> Result<f64, String> {
    let d2 = dot(delta, delta);
    match law.model() {
        LimitModelKind::PowerLaw => {
            let q = e(law.corrector(delta))?;
            let gmax = law
                .mesh()
                .elements()
                .iter()
                .map(|el| {
                    let g = el.gradient(&q);
                    norm([delta[0] + g[0], delta[1] + g[1]])
                })
                .fold(0.0f64, f64::max);
            let rp = law.params().conjugate_exponent();
            Ok(e(powerlaw_prefactor(law.params()))? * gmax.powf(rp - 2.0) * lambda_min * d2)
        }
        _ => Ok(lambda_min * d2 / (6.0 * law.params().eta0())),
    }
}

fn monotonicity() -> Outcome {
    let m = mesh(DISK, 8)?;
    let lambda_min = e(permeability_tensor(&m))?.eigenvalues()[0];
    let thinning = fluid(2.0, 0.5, 3.0, 1.5)?;
    let thickening = fluid(2.0, 0.5, 1.5, 3.0)?;
    let laws = [
        build_law(m.clone(), LimitModelKind::NewtonianZeroShear, &thinning)?,
        build_law(m.clone(), LimitModelKind::Carreau, &thinning)?,
        build_law(m.clone(), LimitModelKind::PowerLaw, &thickening)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::INFINITY;
    for law in &laws {
        for _ in 0..100 {
            let d1 = random_driving(&mut rng, 0.1, 10.0);
            let d2 = random_driving(&mut rng, 0.1, 10.0);
            let u1 = e(law.evaluate(d1))?;
            let u2 = e(law.evaluate(d2))?;
            let gap = dot([u1[0] - u2[0], u1[1] - u2[1]], [d1[0] - d2[0], d1[1] - d2[1]]);
            worst = worst.min(gap);
            ensure(gap >= -1e-10, || format!("{}: (U1 - U2).(d1 - d2) = {gap:e}", law.model()))?;
        }
        for magnitude in [1.0, 10.0] {
            for k in 0..8 {
                let a = 2.0 * PI * k as f64 / 8.0 + 0.1;
                let d = [magnitude * a.cos(), magnitude * a.sin()];
                let value = dot(e(law.evaluate(d))?, d);
                let bound = coercivity_bound(law, lambda_min, d)?;
                ensure(value >= (1.0 - 1e-6) * bound, || {
                    format!("{}: U.d = {value:e} below bound {bound:e} at {d:?}", law.model())
                })?;
            }
        }
    }
    Ok(format!("300 pairs, smallest monotonicity gap {worst:.2e}; coercivity bounds hold"))
}

fn newtonian_limits() -> Outcome {
    let disk = mesh(DISK, 16)?;
    let a = e(permeability_tensor(&disk))?.matrix;
    let empty = mesh(CellGeometry::None, 8)?;
    let area = empty.fluid_area();
    let small_lambda = fluid(2.0, 0.5, 1e-8, 1.5)?;
    let close = fluid(2.0, 2.0 * (1.0 - 1e-9), 3.0, 1.5)?;
    let cases = [
        ("lambda = 1e-8", disk.clone(), small_lambda, a),
        ("eta_inf ~ eta0, disk", disk, close, a),
        ("eta_inf ~ eta0, empty cell", empty, close, [[area, 0.0], [0.0, area]]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for (label, cell, p, tensor) in cases {
        let law = build_law(cell, LimitModelKind::Carreau, &p)?;
        let s = 1.0 / (6.0 * p.eta0());
        for _ in 0..5 {
            let d = random_driving(&mut rng, 0.1, 10.0);
            let u = e(law.evaluate(d))?;
            let lin = [s * (tensor[0][0] * d[0] + tensor[0][1] * d[1]), s * (tensor[1][0] * d[0] + tensor[1][1] * d[1])];
            let err = dist(u, lin) / norm(lin);
            worst = worst.max(err);
            ensure(err <= 1e-3, || format!("{label}: relative deviation {err:e} at {d:?}"))?;
        }
    }
    Ok(format!("15 samples, worst relative deviation {worst:.1e}"))
}

fn profile_oracle() -> Outcome {
    let quad = MobilityQuadrature::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = [0.0f64; 2];
    for kind in [LimitModelKind::NewtonianZeroShear, LimitModelKind::Carreau, LimitModelKind::PowerLaw] {
        for case in 0..20 {
            let r = if kind == LimitModelKind::PowerLaw || case % 2 == 1 {
                rng.gen_range(2.2..5.0)
            } else {
                rng.gen_range(1.2..1.8)
            };
            let p = random_fluid(&mut rng, r)?;
            let g = random_driving(&mut rng, 0.1, 30.0);
            let law = match kind {
                LimitModelKind::Carreau => ProfileLaw::Carreau { params: p, quad: quad.clone() },
                LimitModelKind::PowerLaw => ProfileLaw::PowerLaw { params: p },
                _ => ProfileLaw::Newtonian { eta: p.eta0() },
            };
            let oracle = e(bvp_profile_oracle(g, &p, kind, 64))?;
            let candidate = e(law.sample(g, 64))?;
            let report = e(compare_profile(&oracle, &candidate, e(law.mean(g))?, law.name()))?;
            let scale = candidate.sup_norm().max(1.0);
            worst[0] = worst[0].max(report.sup_error / scale);
            worst[1] = worst[1].max(report.mean_error / scale);
            ensure(report.sup_error <= 1e-6 * scale, || format!("{kind} g = {g:?}: {report:?}"))?;
            ensure(report.mean_error <= 1e-8 * scale, || format!("{kind} g = {g:?}: {report:?}"))?;
        }
    }
    Ok(format!("60 cases, worst sup error {:.1e}, worst mean error {:.1e}", worst[0], worst[1]))
}

fn dense_oracle() -> Outcome {
    let m = mesh(DISK, 8)?;
    let p = fluid(2.0, 0.5, 3.0, 1.5)?;
    let quad = MobilityQuadrature::default();
    let cases = [
        (CellLaw::Linear, OracleLaw::Linear),
        (CellLaw::PowerLaw { r_prime: 1.5 }, OracleLaw::PowerLaw { r_prime: 1.5 }),
        (CellLaw::Carreau { params: p, quad: quad.clone() }, OracleLaw::Carreau { params: p, quad }),
    ];
    let delta = [2.0, 1.0];
    let mut worst = [0.0f64; 2];
    for (law, oracle_law) in cases {
        let main = e(solve_cell(&m, &law, delta, &CellSolverOptions::default(), None))?;
        let dense = e(dense_energy_cell_oracle(DISK, 8, delta, &oracle_law))?;
        let values = m.vertex_values(&main.q);
        let scale = sup(&values).max(1.0);
        for (v, d) in m.dof_map().iter().enumerate() {
            let dense_value = dense.vertex_values[v];
            ensure(d.is_some() == dense_value.is_some(), || format!("{}: DOF pattern differs at {v}", law.name()))?;
            if let Some(x) = dense_value {
                let err = (values[v] - x).abs() / scale;
                worst[0] = worst[0].max(err);
                ensure(err <= 1e-6, || format!("{}: field deviation {err:e} at vertex {v}", law.name()))?;
            }
        }
        let err = dist(main.flux, dense.flux) / norm(main.flux);
        worst[1] = worst[1].max(err);
        ensure(err <= 1e-6, || format!("{}: flux deviation {err:e}", law.name()))?;
    }
    Ok(format!("worst field deviation {:.1e}, worst flux deviation {:.1e}", worst[0], worst[1]))
}

fn macro_solve(law: Arc<EffectiveLaw>, force: ForceField, n: usize) -> Result<MacroSolution, String> {
    let problem = MacroProblem {
        mesh: e(build_macro_mesh(1.0, 1.0, n, n))?,
        force,
        law: law.clone(),
    };
    if law.is_linear() {
        e(solve_linear_darcy(&problem))
    } else {
        e(solve_nonlinear_darcy(&problem))
    }
}

fn macro_exactness() -> Outcome {
    let thinning = fluid(2.0, 0.5, 3.0, 1.5)?;
    let thickening = fluid(2.0, 0.5, 1.5, 3.0)?;
    let gradient = ForceField::GradientOfQuadratic {
        hessian: [[2.0, 0.5], [0.5, -2.0]],
        linear: [0.3, -0.1],
    };
    let laws = [
        (build_law(mesh(DISK, 16)?, LimitModelKind::NewtonianZeroShear, &thinning)?, 12),
        (build_law(mesh(DISK, 16)?, LimitModelKind::PowerLaw, &thickening)?, 12),
        (build_law(mesh(DISK, 8)?, LimitModelKind::Carreau, &thinning)?, 6),
    ];
    let mut worst = [0.0f64; 2];
    for (law, n) in laws {
        let model = law.model();
        let sol = macro_solve(Arc::new(law), gradient.clone(), n)?;
        let phi: Vec<f64> = sol.mesh.nodes().iter().map(|&x| gradient.potential(x).unwrap_or(f64::NAN)).collect();
        let mean = sol.mesh.mean(&phi);
        let perr = sol.p.iter().zip(&phi).map(|(p, f)| (p - (f - mean)).abs()).fold(0.0, f64::max);
        worst[0] = worst[0].max(sol.max_speed());
        worst[1] = worst[1].max(perr);
        ensure(sol.max_speed() <= 1e-8, || format!("{model}: |V|_max = {:e}", sol.max_speed()))?;
        ensure(perr <= 1e-8, || format!("{model}: |p - (phi - mean)| = {perr:e}"))?;
    }

    let law = Arc::new(build_law(mesh(DISK, 16)?, LimitModelKind::NewtonianZeroShear, &thinning)?);
    let rotational = ForceField::Rotational {
        center: [0.5, 0.5],
        strength: 1.0,
    };
    let sols = [16, 32, 64].map(|n| macro_solve(law.clone(), rotational.clone(), n));
    let mut solved = Vec::new();
    for s in sols {
        let s = s?;
        ensure(s.divergence_residual <= 1e-8 && s.boundary_flux_residual <= 1e-8, || {
            format!("residuals {:e}, {:e}", s.divergence_residual, s.boundary_flux_residual)
        })?;
        solved.push(s);
    }
    let gap = |a: &MacroSolution, b: &MacroSolution| -> Result<f64, String> {
        let mut m = 0.0f64;
        for &x in solved[0].mesh.nodes() {
            m = m.max((e(a.pressure_at(x))? - e(b.pressure_at(x))?).abs());
        }
        Ok(m)
    };
    let order = (gap(&solved[0], &solved[1])? / gap(&solved[1], &solved[2])?).log2();
    ensure((order - 2.0).abs() <= 0.3, || format!("self-convergence order {order:.3}"))?;
    Ok(format!(
        "gradient forcing: |V| <= {:.1e}, pressure error <= {:.1e}; rotational order {order:.2}",
        worst[0], worst[1]
    ))
}

fn odd_symmetry() -> Outcome {
    let m = mesh(DISK, 16)?;
    let p = fluid(2.0, 0.5, 3.0, 1.5)?;
    let laws = [
        CellLaw::PowerLaw { r_prime: 1.5 },
        CellLaw::Carreau { params: p, quad: MobilityQuadrature::default() },
    ];
    let options = CellSolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for law in &laws {
        for _ in 0..20 {
            let d = random_driving(&mut rng, 0.1, 10.0);
            let plus = e(solve_cell(&m, law, d, &options, None))?;
            let minus = e(solve_cell(&m, law, [-d[0], -d[1]], &options, None))?;
            let qerr = plus.q.iter().zip(&minus.q).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            let ferr = norm([plus.flux[0] + minus.flux[0], plus.flux[1] + minus.flux[1]]);
            worst = worst.max(qerr.max(ferr));
            ensure(qerr <= 1e-10 && ferr <= 1e-10, || format!("{}: {qerr:e}, {ferr:e} at {d:?}", law.name()))?;
        }
    }
    Ok(format!("40 drivings, worst deviation {worst:.1e}"))
}

fn regime_tables() -> Outcome {
    let q = Rational::new;
    let n = |k: i64| Rational::from_integer(k);
    // (r, gamma, ell, regime, model, L2 velocity and gradient, L^r velocity and gradient, normalization)
    type Row = (Rational, Rational, Rational, RegimeLabel, LimitModelKind, [Rational; 2], Option<[Rational; 2]>, Rational);
    let rows: [Row; 12] = [
        (q(6, 5), q(1, 2), q(1, 2), RegimeLabel::Vtpm, LimitModelKind::NewtonianZeroShear, [n(2), n(1)], None, q(-3, 2)),
        (q(6, 5), n(1), n(1), RegimeLabel::Ptpm, LimitModelKind::Carreau, [q(3, 2), q(1, 2)], None, n(-1)),
        (q(6, 5), n(2), q(3, 2), RegimeLabel::Htpm, LimitModelKind::NewtonianInfiniteShear, [q(1, 2), q(-1, 2)], None, n(0)),
        (q(3, 2), q(1, 2), q(3, 2), RegimeLabel::Htpm, LimitModelKind::NewtonianZeroShear, [n(2), n(1)], None, q(-3, 2)),
        (q(3, 2), n(1), q(1, 2), RegimeLabel::Vtpm, LimitModelKind::Carreau, [q(3, 2), q(1, 2)], None, n(-1)),
        (q(3, 2), n(2), n(1), RegimeLabel::Ptpm, LimitModelKind::NewtonianInfiniteShear, [q(1, 2), q(-1, 2)], None, n(0)),
        (q(5, 2), q(1, 2), n(1), RegimeLabel::Ptpm, LimitModelKind::NewtonianZeroShear, [n(2), n(1)], Some([q(9, 5), q(4, 5)]), q(-3, 2)),
        (q(5, 2), n(1), q(3, 2), RegimeLabel::Htpm, LimitModelKind::Carreau, [q(3, 2), q(1, 2)], Some([q(7, 5), q(2, 5)]), n(-1)),
        (q(5, 2), n(2), q(1, 2), RegimeLabel::Vtpm, LimitModelKind::PowerLaw, [q(1, 2), q(-1, 2)], Some([q(11, 15), q(-4, 15)]), q(-1, 3)),
        (n(3), q(1, 2), q(1, 3), RegimeLabel::Vtpm, LimitModelKind::NewtonianZeroShear, [n(2), n(1)], Some([q(5, 3), q(2, 3)]), q(-3, 2)),
        (n(3), n(1), n(1), RegimeLabel::Ptpm, LimitModelKind::Carreau, [q(3, 2), q(1, 2)], Some([q(4, 3), q(1, 3)]), n(-1)),
        (n(3), n(2), n(4), RegimeLabel::Htpm, LimitModelKind::PowerLaw, [q(1, 2), q(-1, 2)], Some([q(5, 6), q(-1, 6)]), q(-1, 2)),
    ];
    for (r, gamma, ell, regime, model, l2, lr, normalization) in rows {
        let report = e(cmd_regime(ell, gamma, r))?;
        let t = report.table;
        let case = format!("r = {r}, gamma = {gamma}, ell = {ell}");
        ensure(report.regime == regime, || format!("{case}: regime {}", report.regime))?;
        ensure(report.model == model, || format!("{case}: model {}", report.model))?;
        ensure(
            [t.physical_l2.velocity, t.physical_l2.gradient] == l2 && t.physical_l2.strain_rate == l2[1],
            || format!("{case}: L2 exponents {:?}", t.physical_l2),
        )?;
        ensure(
            t.rescaled_l2.velocity == l2[0] - q(1, 2) && t.rescaled_l2.gradient == l2[1] - q(1, 2),
            || format!("{case}: rescaled L2 exponents {:?}", t.rescaled_l2),
        )?;
        let got = t.physical_lr.map(|x| [x.velocity, x.gradient]);
        ensure(got == lr, || format!("{case}: L^r exponents {got:?}"))?;
        if let (Some(x), Some(lr)) = (t.rescaled_lr, lr) {
            ensure(x.velocity == lr[0] - r.recip() && x.gradient == lr[1] - r.recip(), || {
                format!("{case}: rescaled L^r exponents {x:?}")
            })?;
        }
        ensure(t.normalization == normalization, || format!("{case}: normalization {}", t.normalization))?;
    }
    Ok("12 cases equal in exact arithmetic".into())
}

fn fd_checks() -> Outcome {
    let m = mesh(DISK, 8)?;
    let p = fluid(2.0, 0.5, 3.0, 1.5)?;
    let laws = [
        CellLaw::Linear,
        CellLaw::PowerLaw { r_prime: 1.5 },
        CellLaw::Carreau { params: p, quad: MobilityQuadrature::default() },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for law in &laws {
        for seed in 0..3 {
            let point: Vec<f64> = (0..m.num_dofs()).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let d = random_driving(&mut rng, 0.3, 3.0);
            let energy = e(CellEnergy::new(&m, law, d))?;
            let dev = e(fd_gradient_check(|q| energy.energy(q), |q| energy.gradient(q), &point, 1e-6, seed))?;
            worst = worst.max(dev);
            ensure(dev <= 1e-5, || format!("{}: relative deviation {dev:e}", law.name()))?;
        }
    }
    Ok(format!("9 checks, worst relative deviation {worst:.1e}"))
}

fn reproducibility() -> Outcome {
    let dir = e(tempfile::tempdir())?;
    let text = r#"{
        "fluid": {"eta0": 2.0, "eta_inf": 0.5, "lambda": 1.5, "r": "3"},
        "regime": {"ell": "1/2", "gamma": 2},
        "cell": {"geometry": {"kind": "disk", "radius": 0.25}, "n": 8},
        "macro": {"l1": 1, "l2": 1, "n1": 8, "n2": 8,
                  "force": {"kind": "rotational", "center": [0.5, 0.5], "strength": 1}}
    }"#;
    let read = |base: &Path| -> Result<Vec<Vec<u8>>, String> {
        let mut config = e(parse_config(text, base))?;
        config.output_dir = base.join("out");
        e(cmd_darcy(&config))?;
        ["pressure.csv", "velocity.csv"]
            .iter()
            .map(|f| e(std::fs::read(base.join("out").join(f))))
            .collect()
    };
    let first_dir = dir.path().join("a");
    let second_dir = dir.path().join("b");
    e(std::fs::create_dir_all(&first_dir))?;
    e(std::fs::create_dir_all(&second_dir))?;
    let first = read(&first_dir)?;
    let second = read(&second_dir)?;
    ensure(first == second, || "CSV outputs differ between runs".into())?;
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(format!("pressure.csv and velocity.csv identical ({bytes} bytes)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("psi round trip", psi_round_trip),
        ("Newtonian mobility anchor", newtonian_anchor),
        ("empty-cell permeability", empty_cell_permeability),
        ("obstacle permeability convergence", obstacle_permeability),
        ("power-law homogeneity", powerlaw_homogeneity),
        ("monotonicity and coercivity", monotonicity),
        ("Newtonian limits of the Carreau law", newtonian_limits),
        ("profile-oracle agreement", profile_oracle),
        ("dense cell oracle", dense_oracle),
        ("macro Darcy exactness", macro_exactness),
        ("odd symmetry", odd_symmetry),
        ("regime and scaling tables", regime_tables),
        ("finite-difference gradient checks", fd_checks),
        ("reproducibility", reproducibility),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(reason) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {reason}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
