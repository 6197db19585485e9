//! Verification suites: named batteries of property checks with stable
//! IDs, run deterministically from a seed, emitting CheckRecords.

use crate::config::{RunConfig, SUITE_NAMES};
use crate::exterior::{
    delta_action, hodge_star, lambda_inner, metric_adjoint, pullback, wedge, AltForm, Endo7,
    Matrix7, Metric7,
};
use crate::g2::{frame_of, standard_phi, PositiveForm, FANO_MONOMIALS};
use crate::models::{sample_near, FlatOrbifoldChart, FullTorusFamily, ModelFamily, T3K3Chart};
use crate::moduli::{
    e_residual, euler_identities, geometry, hessian_closed, jet, jet_to_order, third_closed,
    JetScheme,
};
use crate::period::{
    class3, class4, contact_alpha, contact_dalpha, dphi, flat_space, h_d_bilinear,
    line_representative, pair_iso, pair_iso_inverse, phi_map, sff_residual, slice_curve,
    slice_direction, standard_basis, to_unit_volume, validate_point, xi_d, TangentRep,
};
use crate::report::CheckRecord;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Runs all suites selected by the config. Returns Err only for
/// configuration-level problems (exit code 2); numerical failures become
/// failed records.
pub fn run_suites(cfg: &RunConfig) -> Result<Vec<CheckRecord>, String> {
    let mut records = Vec::new();
    for name in &cfg.suites {
        records.extend(run_suite(name, cfg)?);
    }
    Ok(records)
}

pub fn run_suite(name: &str, cfg: &RunConfig) -> Result<Vec<CheckRecord>, String> {
    if !SUITE_NAMES.contains(&name) {
        return Err(format!("unknown suite '{name}'"));
    }
    let scheme = JetScheme::with_overrides(cfg.fd_step, cfg.fd_levels)
        .map_err(|e| format!("fd configuration: {e}"))?;
    let mut ctx = Ctx {
        cfg,
        scheme,
        records: Vec::new(),
    };
    match name {
        "kernel" => suite_kernel(&mut ctx),
        "g2" => suite_g2(&mut ctx),
        "flat7" => suite_flat7(&mut ctx),
        "full35" => suite_full35(&mut ctx),
        "t3k3" => suite_t3k3(&mut ctx)?,
        "period" => suite_period(&mut ctx)?,
        _ => unreachable!(),
    }
    Ok(ctx.records)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    scheme: JetScheme,
    records: Vec<CheckRecord>,
}

impl Ctx<'_> {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// Runs one check; closure returns (max residual, sample count).
    fn check<F>(&mut self, id: &str, paper_ref: &str, tolerance: f64, f: F)
    where
        F: FnOnce(&mut ChaCha8Rng) -> Result<(f64, usize), String>,
    {
        let salt = id.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
        let mut rng = self.rng(salt);
        let start = Instant::now();
        let (residual, samples) = match f(&mut rng) {
            Ok(v) => v,
            Err(_) => (f64::INFINITY, 0),
        };
        let runtime_ms = start.elapsed().as_millis() as u64;
        self.records.push(CheckRecord::new(
            id,
            paper_ref,
            residual,
            tolerance * self.cfg.tol_scale,
            samples,
            runtime_ms,
        ));
    }
}

// -------------------------------------------------------------- randomness

fn random_form(rng: &mut impl Rng, degree: usize) -> AltForm {
    let n = crate::exterior::binomial(7, degree);
    AltForm::from_coeffs(degree, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn random_endo(rng: &mut impl Rng) -> Endo7 {
    Endo7::from_fn(|_, _| rng.gen_range(-1.0..1.0))
}

fn random_metric(rng: &mut impl Rng) -> Metric7 {
    let a = Matrix7::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    Metric7::new(a.transpose() * a + Matrix7::identity() * 0.5).unwrap()
}

/// Random positive 3-form: GL+(7) pullback of the standard form.
fn random_positive(rng: &mut impl Rng) -> PositiveForm {
    loop {
        let a = Matrix7::identity() + Matrix7::from_fn(|_, _| rng.gen_range(-0.35..0.35));
        if a.determinant() <= 0.05 {
            continue;
        }
        let form = pullback(&a, &standard_phi());
        if let Ok(p) = PositiveForm::new(form) {
            return p;
        }
    }
}

fn metric_family(g: &Metric7, h: &Endo7, t: f64) -> Metric7 {
    let e = (h * t).exp();
    Metric7::new(e.transpose() * g.gram() * e).unwrap()
}

fn richardson(f: &dyn Fn(f64) -> f64, step: f64) -> f64 {
    let d1 = (f(step) - f(-step)) / (2.0 * step);
    let d2 = (f(step / 2.0) - f(-step / 2.0)) / step;
    (4.0 * d2 - d1) / 3.0
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ----------------------------------------------------------------- kernel

fn suite_kernel(ctx: &mut Ctx) {
    ctx.check("lemma2.1.derivation", "Lemma 2.1 (i)", 1e-6, |rng| {
        let mut max = 0.0f64;
        for _ in 0..100 {
            let h = random_endo(rng);
            let a = random_form(rng, 2);
            let b = random_form(rng, 3);
            let lhs = delta_action(&h, &wedge(&a, &b).map_err(err)?);
            let rhs = wedge(&delta_action(&h, &a), &b)
                .map_err(err)?
                .add(&wedge(&a, &delta_action(&h, &b)).map_err(err)?)
                .map_err(err)?;
            let scale = lhs.norm_inf().max(1.0);
            max = max.max(lhs.sub(&rhs).map_err(err)?.norm_inf() / scale);
        }
        Ok((max, 100))
    });

    ctx.check("lemma2.1.commutator", "Lemma 2.1 (ii)", 1e-6, |rng| {
        let mut max = 0.0f64;
        for _ in 0..100 {
            let h = random_endo(rng);
            let hp = random_endo(rng);
            let a = random_form(rng, 3);
            let lhs = delta_action(&h, &delta_action(&hp, &a))
                .sub(&delta_action(&hp, &delta_action(&h, &a)))
                .map_err(err)?;
            let bracket = h * hp - hp * h;
            let rhs = delta_action(&bracket, &a).scale(-1.0);
            let scale = rhs.norm_inf().max(1.0);
            max = max.max(lhs.sub(&rhs).map_err(err)?.norm_inf() / scale);
        }
        Ok((max, 100))
    });

    ctx.check("lemma2.1.adjoint", "Lemma 2.1 (iii)", 1e-6, |rng| {
        let mut max = 0.0f64;
        for _ in 0..100 {
            let g = random_metric(rng);
            let s = random_endo(rng);
            let a = random_form(rng, 3);
            let b = random_form(rng, 3);
            let h = (s + metric_adjoint(&g, &s)) * 0.5;
            let lhs = lambda_inner(&g, &delta_action(&h, &a), &b).map_err(err)?;
            let rhs = lambda_inner(&g, &a, &delta_action(&h, &b)).map_err(err)?;
            max = max.max((lhs - rhs).abs() / lhs.abs().max(1.0));
            let hp = (s - metric_adjoint(&g, &s)) * 0.5;
            let lhs = lambda_inner(&g, &delta_action(&hp, &a), &b).map_err(err)?;
            let rhs = lambda_inner(&g, &a, &delta_action(&hp, &b)).map_err(err)?;
            max = max.max((lhs + rhs).abs() / lhs.abs().max(1.0));
        }
        Ok((max, 100))
    });

    ctx.check("lemma2.2.inner", "Lemma 2.2", 1e-6, |rng| {
        let step = 1e-4;
        let mut max = 0.0f64;
        for _ in 0..100 {
            let g = random_metric(rng);
            let h = random_endo(rng);
            let w = random_form(rng, 3);
            let wp = random_form(rng, 3);
            let d = richardson(
                &|t| lambda_inner(&metric_family(&g, &h, t), &w, &wp).unwrap(),
                step,
            );
            let expected = -lambda_inner(&g, &delta_action(&h, &w), &wp).map_err(err)?
                - lambda_inner(&g, &w, &delta_action(&h, &wp)).map_err(err)?;
            max = max.max((d - expected).abs() / expected.abs().max(1.0));
        }
        Ok((max, 100))
    });

    ctx.check("lemma2.2.star", "Lemma 2.2", 1e-6, |rng| {
        let step = 1e-4;
        let mut max = 0.0f64;
        for _ in 0..100 {
            let g = random_metric(rng);
            let h = random_endo(rng);
            let w = random_form(rng, 3);
            let expected = delta_action(&h, &hodge_star(&g, &w))
                .sub(&hodge_star(&g, &delta_action(&h, &w)))
                .map_err(err)?;
            let d1 = hodge_star(&metric_family(&g, &h, step), &w)
                .sub(&hodge_star(&metric_family(&g, &h, -step), &w))
                .map_err(err)?
                .scale(0.5 / step);
            let d2 = hodge_star(&metric_family(&g, &h, step / 2.0), &w)
                .sub(&hodge_star(&metric_family(&g, &h, -step / 2.0), &w))
                .map_err(err)?
                .scale(1.0 / step);
            let d = d2.scale(4.0 / 3.0).sub(&d1.scale(1.0 / 3.0)).map_err(err)?;
            let scale = expected.norm_inf().max(1.0);
            max = max.max(d.sub(&expected).map_err(err)?.norm_inf() / scale);
        }
        Ok((max, 100))
    });

    ctx.check("lemma2.2.volume", "Lemma 2.2", 1e-6, |rng| {
        let step = 1e-4;
        let mut max = 0.0f64;
        for _ in 0..100 {
            let g = random_metric(rng);
            let h = random_endo(rng);
            let d = richardson(
                &|t| metric_family(&g, &h, t).volume_form().coeffs()[0],
                step,
            );
            let expected = h.trace() * g.volume_form().coeffs()[0];
            max = max.max((d - expected).abs() / expected.abs().max(1.0));
        }
        Ok((max, 100))
    });

    ctx.check("cor2.3.anticommute", "Corollary 2.3", 1e-10, |rng| {
        let mut max = 0.0f64;
        for _ in 0..100 {
            let g = random_metric(rng);
            let s = random_endo(rng);
            let mut h = (s + metric_adjoint(&g, &s)) * 0.5;
            h -= Endo7::identity() * (h.trace() / 7.0);
            let w = random_form(rng, 3);
            let lhs = delta_action(&h, &hodge_star(&g, &w));
            let rhs = hodge_star(&g, &delta_action(&h, &w));
            let scale = lhs.norm_inf().max(1.0);
            max = max.max(lhs.add(&rhs).map_err(err)?.norm_inf() / scale);
            let hp = (s - metric_adjoint(&g, &s)) * 0.5;
            let lhs = delta_action(&hp, &hodge_star(&g, &w));
            let rhs = hodge_star(&g, &delta_action(&hp, &w));
            max = max.max(lhs.sub(&rhs).map_err(err)?.norm_inf() / lhs.norm_inf().max(1.0));
        }
        Ok((max, 100))
    });

    ctx.check("cor2.4.symmetry", "Corollary 2.4", 1e-10, |rng| {
        let mut max = 0.0f64;
        for _ in 0..100 {
            let phi = random_positive(rng);
            let frame = frame_of(phi.form()).map_err(err)?;
            let g = frame.metric();
            let sym = |s: Endo7| (s + metric_adjoint(g, &s)) * 0.5;
            let hs: Vec<Endo7> = (0..3).map(|_| sym(random_endo(rng))).collect();
            let value = |i: usize, j: usize, k: usize| -> Result<f64, String> {
                frame
                    .inner(
                        &delta_action(&hs[k], &delta_action(&hs[i], frame.phi())),
                        &delta_action(&hs[j], frame.phi()),
                    )
                    .map_err(err)
            };
            let base = value(0, 1, 2)?;
            for (i, j, k) in [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)] {
                max = max.max((value(i, j, k)? - base).abs() / base.abs().max(1.0));
            }
        }
        Ok((max, 100))
    });
}

// --------------------------------------------------------------------- g2

fn suite_g2(ctx: &mut Ctx) {
    ctx.check("eq2.phinorm", "Eq. (2)", 1e-10, |rng| {
        let mut max = 0.0f64;
        for _ in 0..50 {
            let phi = random_positive(rng);
            let frame = frame_of(phi.form()).map_err(err)?;
            let norm = frame.inner(frame.phi(), frame.phi()).map_err(err)?;
            max = max.max((norm - 7.0).abs() / 7.0);
        }
        Ok((max, 50))
    });

    ctx.check("eq8.phitheta", "Eq. (8)", 1e-10, |rng| {
        let mut max = 0.0f64;
        for _ in 0..50 {
            let phi = random_positive(rng);
            let frame = frame_of(phi.form()).map_err(err)?;
            let top = wedge(frame.phi(), frame.theta()).map_err(err)?;
            let expected = 7.0 * frame.volume_density();
            max = max.max((top.coeffs()[0] - expected).abs() / expected.abs());
        }
        Ok((max, 50))
    });

    ctx.check("lemma2.5.thetavar", "Lemma 2.5", 1e-5, |rng| {
        let step = 1e-3;
        let mut max = 0.0f64;
        for _ in 0..20 {
            let phi = random_positive(rng);
            let frame = frame_of(phi.form()).map_err(err)?;
            let eta = random_form(rng, 3).scale(0.2);
            let predicted = frame.theta_first_variation(&eta).map_err(err)?;
            let theta_at = |t: f64| -> AltForm {
                let f = phi.form().add(&eta.scale(t)).unwrap();
                frame_of(&f).unwrap().theta().clone()
            };
            let d1 = theta_at(step).sub(&theta_at(-step)).map_err(err)?.scale(0.5 / step);
            let d2 = theta_at(step / 2.0)
                .sub(&theta_at(-step / 2.0))
                .map_err(err)?
                .scale(1.0 / step);
            let d = d2.scale(4.0 / 3.0).sub(&d1.scale(1.0 / 3.0)).map_err(err)?;
            let scale = predicted.norm_inf().max(1.0);
            max = max.max(d.sub(&predicted).map_err(err)?.norm_inf() / scale);
        }
        Ok((max, 20))
    });
}

// ------------------------------------------------------------------ flat7

fn flat_points(ctx: &Ctx, salt: u64, count: usize) -> Result<Vec<Vec<f64>>, String> {
    (0..count)
        .map(|i| {
            sample_near(
                &FlatOrbifoldChart,
                &[1.0; 7],
                0.3,
                ctx.cfg.seed ^ salt.wrapping_add(i as u64),
            )
            .map_err(err)
        })
        .collect()
}

fn suite_flat7(ctx: &mut Ctx) {
    let chart = FlatOrbifoldChart;
    let scheme = ctx.scheme;

    let pts = flat_points(ctx, 1000, 100).unwrap_or_default();
    ctx.check("eq8.volume.flat7", "Eq. (8)", 1e-10, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let closed: f64 = x.iter().product::<f64>().powf(1.0 / 3.0);
            let oracle = chart.vol_by_frame(x).map_err(err)?;
            max = max.max((closed - oracle).abs() / oracle.abs());
        }
        Ok((max, pts.len()))
    });

    let pts = flat_points(ctx, 1001, 20).unwrap_or_default();
    ctx.check("prop2.8.hessian.flat7", "Prop 2.8", 1e-6, |_| {
        let mut max = 0.0f64;
        // identity at the unit point
        let unit = hessian_closed(&chart, &[1.0; 7]).map_err(err)?;
        let id = DMatrix::identity(7, 7);
        max = max.max((unit.as_matrix() - id).amax());
        for x in &pts {
            let closed = hessian_closed(&chart, x).map_err(err)?;
            let j = jet_to_order(&chart, x, &scheme, 2).map_err(err)?;
            max = max.max(closed.sub(&j.f2).max_abs());
        }
        Ok((max, pts.len() + 1))
    });

    let pts = flat_points(ctx, 1002, 20).unwrap_or_default();
    ctx.check("prop3.4.third.flat7", "Prop 3.4", 1e-5, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let closed = third_closed(&chart, x).map_err(err)?;
            let j = jet_to_order(&chart, x, &scheme, 3).map_err(err)?;
            max = max.max(closed.sub(&j.f3.unwrap()).max_abs());
        }
        Ok((max, pts.len()))
    });

    let pts = flat_points(ctx, 1003, 20).unwrap_or_default();
    ctx.check("thm3.6.residual.flat7", "Thm 3.6", 1e-4, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let j = jet(&chart, x, &scheme).map_err(err)?;
            max = max.max(e_residual(&j).map_err(err)?.residual.max_abs());
        }
        Ok((max, pts.len()))
    });

    let pts = flat_points(ctx, 1004, 20).unwrap_or_default();
    ctx.check("lemma3.7.euler.flat7", "Lemma 3.7", 1e-6, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let j = jet(&chart, x, &scheme).map_err(err)?;
            let report = euler_identities(&j).map_err(err)?;
            max = max.max(report.grad_residual).max(report.hessian_residual);
            // x-tracelessness of the covariant Yukawa derivative
            let nabla_xi = e_residual(&j).map_err(err)?.nabla_xi;
            max = max.max(nabla_xi.contract_last(x).max_abs());
        }
        Ok((max, pts.len()))
    });

    let pts = flat_points(ctx, 1005, 20).unwrap_or_default();
    ctx.check("prop3.8.curvature.flat7", "Prop 3.8", 1e-6, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let j = jet(&chart, x, &scheme).map_err(err)?;
            let geo = geometry(&chart, &j).map_err(err)?;
            max = max.max(geo.riemann.max_abs());
            max = max.max(geo.nabla_r.as_ref().map(|t| t.max_abs()).unwrap_or(0.0));
        }
        Ok((max, pts.len()))
    });
}

// ----------------------------------------------------------------- full35

fn suite_full35(ctx: &mut Ctx) {
    let family = FullTorusFamily;
    let scheme = ctx.scheme;
    let base = standard_phi().coeffs().to_vec();

    ctx.check("prop2.8.signature.full35", "Prop 2.8", 0.5, |_| {
        let hess = hessian_closed(&family, &base).map_err(err)?;
        let eigs = hess.as_matrix().symmetric_eigenvalues();
        let pos = eigs.iter().filter(|&&e| e > 1e-8).count();
        let neg = eigs.iter().filter(|&&e| e < -1e-8).count();
        let ok = pos == 28 && neg == 7;
        Ok((if ok { 0.0 } else { 1.0 }, 1))
    });

    let pts: Vec<Vec<f64>> = (0..20)
        .filter_map(|i| sample_near(&family, &base, 0.05, ctx.cfg.seed ^ (2000 + i)).ok())
        .collect();
    ctx.check("prop2.8.hessian.full35", "Prop 2.8", 1e-6, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let closed = hessian_closed(&family, x).map_err(err)?;
            let j = jet_to_order(&family, x, &scheme, 2).map_err(err)?;
            max = max.max(closed.sub(&j.f2).max_abs());
        }
        Ok((max, pts.len()))
    });
}

// ------------------------------------------------------------------ t3k3

fn suite_t3k3(ctx: &mut Ctx) -> Result<(), String> {
    let (model, base) = ctx
        .cfg
        .build_model_t3k3()
        .map_err(|e| format!("t3k3 chart: {e}"))?;
    let chart = match &model {
        crate::models::Model::T3K3(c) => c.clone(),
        _ => unreachable!(),
    };
    let scheme = ctx.scheme;
    let n = chart.dimension();

    let points = |salt: u64, count: usize, radius: f64| -> Vec<Vec<f64>> {
        (0..count)
            .filter_map(|i| {
                sample_near(&chart, &base, radius, ctx.cfg.seed ^ (salt + i as u64)).ok()
            })
            .collect()
    };

    let pts = points(3000, 20, 0.3);
    ctx.check("eq13.radii.t3k3", "Eq. (13)", 1e-10, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let (t, v) = chart.reconstruct_radii(x).map_err(err)?;
            let vol = chart.volume(x).map_err(err)?;
            let expected = v * t[0] * t[1] * t[2];
            max = max.max((vol - expected).abs() / expected.abs());
            // the chart data solves x0 = t1 t2 t3 and q_i = 2 v t_i^2
            let q = chart.lorentz_norms(x).map_err(err)?;
            max = max.max((x[0] - t[0] * t[1] * t[2]).abs() / x[0].abs());
            for i in 0..3 {
                max = max.max((q[i] - 2.0 * v * t[i] * t[i]).abs() / q[i].abs());
            }
        }
        Ok((max, pts.len()))
    });

    let pts = points(3001, 20, 0.15);
    ctx.check("thm3.6.residual.t3k3", "Thm 3.6", 1e-4, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let j = jet(&chart, x, &scheme).map_err(err)?;
            max = max.max(e_residual(&j).map_err(err)?.residual.max_abs());
        }
        Ok((max, pts.len()))
    });

    let pts = points(3002, 20, 0.1);
    ctx.check("lemma3.7.euler.t3k3", "Lemma 3.7", 1e-6, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let j = jet(&chart, x, &scheme).map_err(err)?;
            let report = euler_identities(&j).map_err(err)?;
            max = max.max(report.grad_residual).max(report.hessian_residual);
            max = max
                .max(e_residual(&j).map_err(err)?.nabla_xi.contract_last(x).max_abs());
        }
        Ok((max, pts.len()))
    });

    // curvature checks share the geometries at 20 points
    let pts = points(3003, 20, 0.15);
    let mut geos = Vec::new();
    for x in &pts {
        if let Ok(j) = jet(&chart, x, &scheme) {
            if let Ok(g) = geometry(&chart, &j) {
                geos.push((x.clone(), g));
            }
        }
    }
    let count = geos.len();
    let curvature_norm = geos
        .iter()
        .map(|(_, g)| g.riemann.max_abs())
        .fold(0.0f64, f64::max);

    ctx.check("prop3.8.symmetries.t3k3", "Prop 3.8", 1e-8, |_| {
        let mut max = 0.0f64;
        for (_, geo) in &geos {
            let r = &geo.riemann;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            let v = r.get(&[a, b, c, d]);
                            max = max.max((v + r.get(&[b, a, c, d])).abs());
                            max = max.max((v + r.get(&[a, b, d, c])).abs());
                            max = max.max((v - r.get(&[c, d, a, b])).abs());
                            let bianchi = v + r.get(&[a, c, d, b]) + r.get(&[a, d, b, c]);
                            max = max.max(bianchi.abs());
                        }
                    }
                }
            }
        }
        Ok((max, count))
    });

    ctx.check("prop3.8.nonflat.t3k3", "Prop 3.8", 0.5, |_| {
        Ok((if curvature_norm > 1e-2 { 0.0 } else { 1.0 }, count))
    });

    ctx.check("prop3.8.localsym.t3k3", "Prop 3.8", 1e-3, |_| {
        let mut max = 0.0f64;
        for (_, geo) in &geos {
            max = max.max(geo.nabla_r.as_ref().map(|t| t.max_abs()).unwrap_or(f64::INFINITY));
        }
        Ok((max, count))
    });

    ctx.check("thm4.5.sectional.t3k3", "Thm 4.5", 1e-6, |rng| {
        let mut max = 0.0f64;
        for (_, geo) in &geos {
            for _ in 0..5 {
                let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                max = max.max(geo.sectional(&u, &v));
            }
        }
        Ok((max.max(0.0), count * 5))
    });
    Ok(())
}

// ----------------------------------------------------------------- period

fn suite_period(ctx: &mut Ctx) -> Result<(), String> {
    let chart = FlatOrbifoldChart;
    let space = flat_space();
    let scheme = ctx.scheme;

    let pts = flat_points(ctx, 4000, 30).unwrap_or_default();
    ctx.check("eq14.validate.period", "Eq. (14)", 1e-9, |_| {
        let mut max = 0.0f64;
        for x in &pts {
            let point = phi_map(&chart, x).map_err(err)?;
            max = max.max(validate_point(&space, &point).map_err(err)?.max_residual);
        }
        Ok((max, pts.len()))
    });

    ctx.check("lemma4.1.pairiso.period", "Lemma 4.1", 1e-9, |rng| {
        let mut max = 0.0f64;
        for _ in 0..50 {
            let ell = DVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0));
            let half = DMatrix::from_fn(7, 7, |_, _| rng.gen_range(-1.0..1.0));
            let q = &half * half.transpose() + DMatrix::identity(7, 7) * 0.5;
            let point = pair_iso_inverse(&space, &ell, &q).map_err(err)?;
            let (ell2, q2) = pair_iso(&space, &point).map_err(err)?;
            let e1 = &ell / ell.norm();
            max = max.max((e1.dot(&ell2).abs() - 1.0).abs());
            max = max.max((q2.clone() - &q).amax() / q.amax());
            let point2 = pair_iso_inverse(&space, &ell2, &q2).map_err(err)?;
            for (b1, b2) in [
                (&point.h3, &point2.h3),
                (&point.h2, &point2.h2),
                (&point.h1, &point2.h1),
                (&point.h0, &point2.h0),
            ] {
                max = max.max((projector(b1)? - projector(b2)?).amax());
            }
        }
        Ok((max, 50))
    });

    let slice_pts: Vec<Vec<f64>> = flat_points(ctx, 4001, 20)
        .unwrap_or_default()
        .iter()
        .map(|x| to_unit_volume(x))
        .collect();
    ctx.check("prop4.4.pairing.period", "Prop 4.4", 1e-9, |_| {
        let mut max = 0.0f64;
        for x in &slice_pts {
            let point = phi_map(&chart, x).map_err(err)?;
            let w = point.h3.column(0).into_owned();
            max = max.max((space.q(&space.iota(&w), &w) - 14.0).abs());
        }
        Ok((max, slice_pts.len()))
    });

    let pts = flat_points(ctx, 4002, 20).unwrap_or_default();
    ctx.check("lemma4.2.horizontal.period", "Lemma 4.2", 1e-6, |rng| {
        let mut max = 0.0f64;
        for x in &pts {
            let dir: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, class) = dphi(&chart, x, &dir, 1e-3).map_err(err)?;
            max = max
                .max(class.antisym_residual)
                .max(class.block_horizontal_residual);
        }
        Ok((max, pts.len()))
    });

    let slice20: Vec<Vec<f64>> = flat_points(ctx, 4003, 20)
        .unwrap_or_default()
        .iter()
        .map(|x| to_unit_volume(x))
        .collect();
    ctx.check("lemma4.2.transverse.period", "Lemma 4.2", 1e-6, |rng| {
        let mut max = 0.0f64;
        for x in &slice20 {
            let w = slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let dir: Vec<f64> = x.iter().zip(&w).map(|(xa, wa)| xa * wa).collect();
            let (rep, class) = dphi(&chart, x, &dir, 1e-3).map_err(err)?;
            let scale = rep.a.amax().max(1e-300);
            max = max
                .max(class.antisym_residual)
                .max(class.a00.abs() / scale)
                .max(class.block_transverse_residual);
        }
        Ok((max, slice20.len()))
    });

    let slice5: Vec<Vec<f64>> = flat_points(ctx, 4004, 5)
        .unwrap_or_default()
        .iter()
        .map(|x| to_unit_volume(x))
        .collect();
    ctx.check("thm4.3.differentials.period", "Thm 4.3", 1e-5, |rng| {
        let mut max = 0.0f64;
        let mut samples = 0;
        for x in &slice5 {
            let w = slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let dir: Vec<f64> = x.iter().zip(&w).map(|(xa, wa)| xa * wa).collect();
            let (rep, _) = dphi(&chart, x, &dir, 1e-3).map_err(err)?;
            max = max.max(thm43_residual(&chart, x, &dir, &rep)?);
            samples += 1;
        }
        Ok((max, samples))
    });

    let slice30: Vec<Vec<f64>> = flat_points(ctx, 4005, 30)
        .unwrap_or_default()
        .iter()
        .map(|x| to_unit_volume(x))
        .collect();
    let mut metric_max = 0.0f64;
    let mut cubic_max = 0.0f64;
    let mut pull_err: Option<String> = None;
    {
        let mut rng = ctx.rng(777);
        for x in &slice30 {
            match pullback_residuals(&chart, x, &scheme, &mut rng) {
                Ok((m, c)) => {
                    metric_max = metric_max.max(m);
                    cubic_max = cubic_max.max(c);
                }
                Err(e) => pull_err = Some(e),
            }
        }
    }
    let n30 = slice30.len();
    let perr = pull_err.clone();
    ctx.check("thm4.3.metric.period", "Thm 4.3", 1e-5, move |_| {
        if let Some(e) = perr {
            return Err(e);
        }
        Ok((metric_max, n30))
    });
    ctx.check("thm4.3.cubic.period", "Thm 4.3", 1e-4, move |_| {
        if let Some(e) = pull_err {
            return Err(e);
        }
        Ok((cubic_max, n30))
    });

    let pts = flat_points(ctx, 4006, 5).unwrap_or_default();
    ctx.check("thm4.5.sff.flat7", "Thm 4.5", 1e-4, |rng| {
        let mut max = 0.0f64;
        for x in &pts {
            let (a, b) = (rng.gen_range(0..7), rng.gen_range(0..7));
            let res = sff_residual(&chart, x, a, b, &scheme).map_err(err)?;
            max = max.max(res.identity_residual).max(res.normal_residual);
        }
        Ok((max, pts.len()))
    });

    let t3k3 = T3K3Chart::standard();
    let t3k3_base = t3k3.standard_base();
    let t3k3_pts: Vec<Vec<f64>> = (0..5)
        .filter_map(|i| sample_near(&t3k3, &t3k3_base, 0.15, ctx.cfg.seed ^ (4007 + i)).ok())
        .collect();
    ctx.check("thm4.5.sff.t3k3", "Thm 4.5", 1e-4, |rng| {
        let mut max = 0.0f64;
        let n = t3k3.dimension();
        for x in &t3k3_pts {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let res = sff_residual(&t3k3, x, a, b, &scheme).map_err(err)?;
            max = max.max(res.identity_residual).max(res.normal_residual);
        }
        Ok((max, t3k3_pts.len()))
    });

    let slice_leg: Vec<Vec<f64>> = flat_points(ctx, 4008, 20)
        .unwrap_or_default()
        .iter()
        .map(|x| to_unit_volume(x))
        .collect();
    ctx.check("sec4.4.legendrian.period", "§4.4", 1e-6, |rng| {
        let h = 1e-4;
        let mut max = 0.0f64;
        for x in &slice_leg {
            let w = slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let w0 = line_representative(&chart, x).map_err(err)?;
            let wp = line_representative(&chart, &slice_curve(x, &w, h)).map_err(err)?;
            let wm = line_representative(&chart, &slice_curve(x, &w, -h)).map_err(err)?;
            let wdot = (wp - wm) / (2.0 * h);
            max = max.max(contact_alpha(&space, &w0, &wdot).map_err(err)?.abs());
        }
        Ok((max, slice_leg.len()))
    });

    ctx.check("sec4.4.isotropy.period", "§4.4", 1e-6, |rng| {
        let h = 1e-4;
        let mut max = 0.0f64;
        for x in &slice_leg {
            let w0 = line_representative(&chart, x).map_err(err)?;
            let vel = |w: &[f64]| -> Result<DVector<f64>, String> {
                let wp = line_representative(&chart, &slice_curve(x, w, h)).map_err(err)?;
                let wm = line_representative(&chart, &slice_curve(x, w, -h)).map_err(err)?;
                Ok((wp - wm) / (2.0 * h))
            };
            let wa = slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let wb = slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let da = contact_dalpha(&space, &w0, &vel(&wa)?, &vel(&wb)?).map_err(err)?;
            max = max.max(da.abs());
        }
        Ok((max, slice_leg.len()))
    });
    Ok(())
}

fn projector(basis: &DMatrix<f64>) -> Result<DMatrix<f64>, String> {
    let gram = basis.transpose() * basis;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| "degenerate basis".to_string())?;
    Ok(basis * inv * basis.transpose())
}

/// Residual of the closed-form differential formulas (i)-(iii) against the
/// FD-recovered tangent at a unit-volume slice point.
fn thm43_residual(
    chart: &FlatOrbifoldChart,
    x: &[f64],
    dir: &[f64],
    rep: &TangentRep,
) -> Result<f64, String> {
    use crate::exterior::delta_action as act;
    use crate::g2::TypeComponent;
    let space = flat_space();
    let hf = crate::models::harmonic_frame(chart, x).map_err(err)?;
    let frame = &hf.frame;
    let eta = fano_combination(dir);
    let point = phi_map(chart, x).map_err(err)?;
    let basis = standard_basis(&space, &point).map_err(err)?;
    let action = rep.ambient_action(&basis);
    let mut max = 0.0f64;
    // (i)
    let wvec = point.h3.column(0).into_owned();
    let lhs = point.project(&(&action * &wvec), 2).map_err(err)?;
    let star_eta = hodge_star(frame.metric(), &eta);
    let rhs = stack14(&class3(&eta), &(-class4(&star_eta)));
    max = max.max((lhs - &rhs).amax());
    // (ii)
    let h = frame.solve_h(&eta).map_err(err)?;
    for j in 0..point.h2.ncols() {
        let w2 = point.h2.column(j).into_owned();
        let lhs = point.project(&(&action * &w2), 1).map_err(err)?;
        let etap = fano_from_classes(&w2);
        let moved = act(&h, &etap);
        let p27 = frame.project(&moved, TypeComponent::L3_27).map_err(err)?;
        let star27 = hodge_star(frame.metric(), &p27);
        let rhs = stack14(&class3(&p27), &class4(&star27));
        max = max.max((lhs - &rhs).amax());
    }
    // (iii)
    for j in 0..point.h1.ncols() {
        let w1 = point.h1.column(j).into_owned();
        let lhs = point.project(&(&action * &w1), 0).map_err(err)?;
        let etap = fano_from_classes(&w1);
        let coeff = lambda_inner(frame.metric(), &etap, &eta).map_err(err)?
            * frame.volume_density()
            / 7.0;
        let rhs = space.iota(&wvec) * coeff;
        max = max.max((lhs - rhs).amax());
    }
    Ok(max)
}

fn fano_combination(coeffs: &[f64]) -> AltForm {
    let mut f = AltForm::zero(3);
    for ((indices, sign), c) in FANO_MONOMIALS.iter().zip(coeffs) {
        f = f.add(&AltForm::monomial(indices).scale(sign * c)).unwrap();
    }
    f
}

fn fano_from_classes(w: &DVector<f64>) -> AltForm {
    let coeffs: Vec<f64> = (0..7).map(|a| w[a]).collect();
    fano_combination(&coeffs)
}

fn stack14(h3: &DVector<f64>, h4: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(14, |i, _| if i < 7 { h3[i] } else { h4[i - 7] })
}

/// Pullback residuals of the metric and cubic identities at one slice point.
fn pullback_residuals(
    chart: &FlatOrbifoldChart,
    x: &[f64],
    scheme: &JetScheme,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), String> {
    let space = flat_space();
    let point = phi_map(chart, x).map_err(err)?;
    let basis = standard_basis(&space, &point).map_err(err)?;
    let wdirs: Vec<Vec<f64>> = (0..3)
        .map(|_| slice_direction(&(0..7).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
        .collect();
    let dirs: Vec<Vec<f64>> = wdirs
        .iter()
        .map(|w| x.iter().zip(w).map(|(xa, wa)| xa * wa).collect())
        .collect();
    let mut reps = Vec::new();
    for d in &dirs {
        reps.push(dphi(chart, x, d, 1e-3).map_err(err)?.0);
    }
    let j = jet_to_order(chart, x, scheme, 3).map_err(err)?;
    let g = j.g_matrix();
    let xi = j.best_f3().ok_or("third derivatives missing")?.scale(0.5);
    let mut metric_max = 0.0f64;
    for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let gd = 7.0 * h_d_bilinear(&space, &point, &basis, &reps[p], &reps[q]).map_err(err)?;
        let mut gm = 0.0;
        for k in 0..7 {
            for l in 0..7 {
                gm += g[(k, l)] * dirs[p][k] * dirs[q][l];
            }
        }
        metric_max = metric_max.max((gd - gm).abs());
    }
    let xid = 7.0
        * xi_d(&space, &point, &basis, &reps[0], &reps[1], &reps[2]).map_err(err)?;
    let mut xim = 0.0;
    for k in 0..7 {
        for l in 0..7 {
            for m in 0..7 {
                xim += xi.get(&[k, l, m]) * dirs[0][k] * dirs[1][l] * dirs[2][m];
            }
        }
    }
    Ok((metric_max, (xid - xim).abs()))
}

// allow the t3k3 suite to reuse the configured chart
impl RunConfig {
    fn build_model_t3k3(&self) -> Result<(crate::models::Model, Vec<f64>), String> {
        let spec = crate::models::ChartSpec {
            model: "t3k3".to_string(),
            t3k3: self.t3k3.clone(),
        };
        spec.build().map_err(|e| e.to_string())
    }
}
