//! Acceptance criteria 1–11. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use canndyn_core::dynamics::{aeg_diagnostic, simulate, Mode, SimConfig, SimReport};
use canndyn_core::grid::{Grid, GridFunction};
use canndyn_core::ingredients::{AttackKernel, Feedback, ModelSpec, Rate1D, Rate2D};
use canndyn_core::linearization::{build_linearization, dissipativity_margin, Linearization};
use canndyn_core::spectral::{
    characteristic_k, characteristic_l, default_lambda_range, instability_example33, pi_eval, resolvent_ab,
    rtilde_prime, scan_real_roots_k,
};
use canndyn_core::steady::{net_reproduction, solve_steady, trivial_steady, SteadyConfig, SteadyState};
use canndyn_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

fn random_trivial_model(rng: &mut ChaCha8Rng) -> ModelSpec {
    let feedback = |rng: &mut ChaCha8Rng| match rng.random_range(0..3) {
        0 => Feedback::None,
        1 => Feedback::Linear,
        _ => Feedback::Saturating,
    };
    let mu_fb = feedback(rng);
    let gamma_fb = feedback(rng);
    ModelSpec {
        beta: Rate1D::poly_exp(rng.random_range(0.3..1.0), rng.random_range(2.0..3.0), rng.random_range(0.5..1.5)),
        mu: Rate2D::new(
            Rate1D::saturating_ramp(
                rng.random_range(0.5..1.2),
                rng.random_range(0.0..0.5),
                rng.random_range(0.1..1.0),
            ),
            mu_fb,
            rng.random_range(0.0..0.5),
        ),
        gamma: Rate2D::new(
            Rate1D::saturating_ramp(
                rng.random_range(0.7..1.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(0.1..1.0),
            ),
            gamma_fb,
            rng.random_range(-0.2..0.2),
        ),
        alpha: AttackKernel::separable(
            Rate1D::exp_decay(rng.random_range(0.1..1.0), rng.random_range(0.0..0.5)),
            Rate1D::poly_exp(rng.random_range(0.5..1.5), 1.0, rng.random_range(0.5..1.5)),
        ),
        c: Rate1D::constant(rng.random_range(0.5..1.5)),
        gamma0: 0.3,
        s_max: 40.0,
    }
}

fn trivial_lin(model: &ModelSpec, cells: usize) -> Result<Linearization> {
    let g = Grid::uniform(model.s_max, cells)?;
    build_linearization(model, &trivial_steady(model, &g))
}

fn criterion_1() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut r0s = Vec::new();
    for _ in 0..5 {
        let m = random_trivial_model(&mut rng);
        let lin = trivial_lin(&m, 800)?;
        let zero = GridFunction::zeros(lin.grid());
        let r0 = net_reproduction(&m, &zero, &zero)?;
        let k0 = characteristic_k(&lin, 0.0)?.k;
        worst = worst.max((k0 - (1.0 - r0)).abs());
        r0s.push(format!("{r0:.3}"));
    }
    verdict(worst < 1e-8, format!("max |K(0) - (1 - R(0))| = {worst:.2e}, R(0) = [{}]", r0s.join(", ")))
}

fn criterion_2() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = random_trivial_model(&mut rng);
        let lin = trivial_lin(&m, 800)?;
        let hi = default_lambda_range(&lin)[1];
        worst = worst.max((characteristic_k(&lin, hi)?.k - 1.0).abs());
    }
    verdict(worst < 0.02, format!("max |K(lambda_hi) - 1| = {worst:.2e}"))
}

/// Positive equilibrium with size and environment dependence in every rate.
fn feedback_model() -> ModelSpec {
    ModelSpec {
        beta: Rate1D::exp_decay(3.0, 0.5),
        mu: Rate2D::new(Rate1D::constant(0.4), Feedback::Linear, 0.2),
        gamma: Rate2D::new(Rate1D::saturating_ramp(1.0, 0.3, 0.5), Feedback::Saturating, -0.2),
        alpha: AttackKernel::separable(Rate1D::exp_decay(0.5, 0.2), Rate1D::poly_exp(1.0, 1.0, 1.0)),
        c: Rate1D::constant(1.0),
        gamma0: 0.3,
        s_max: 30.0,
    }
}

fn solve(model: &ModelSpec, cells: usize) -> Result<SteadyState> {
    solve_in(model, cells, 1000.0)
}

fn solve_in(model: &ModelSpec, cells: usize, n0_hi: f64) -> Result<SteadyState> {
    let g = Grid::uniform(model.s_max, cells)?;
    solve_steady(
        model,
        &g,
        &SteadyConfig {
            n0_bracket: [0.0, n0_hi],
            ..SteadyConfig::default()
        },
    )
}

/// Smallest positive equilibrium: widens the bracket `[0, hi]` until the
/// solver finds a sign change.
fn lowest_equilibrium(model: &ModelSpec, cells: usize) -> Result<SteadyState> {
    let mut last = None;
    for k in 0..40 {
        let hi = 0.01 * 1.5_f64.powi(k);
        match solve_in(model, cells, hi) {
            Ok(st) if !st.is_trivial() => return Ok(st),
            Ok(_) => {}
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn criterion_3() -> Result<Verdict> {
    let m = feedback_model();
    let mut errs = Vec::new();
    for cells in [500, 1000] {
        let st = solve(&m, cells)?;
        if st.is_trivial() {
            return verdict(false, "equilibrium is trivial");
        }
        let lin = build_linearization(&m, &st)?;
        let pi = pi_eval(&lin, 0.0)?;
        let gap = (0..pi.values().len())
            .map(|i| (st.n[i] - st.n0 * pi[i]).abs())
            .fold(0.0, f64::max)
            / st.n.sup_norm();
        errs.push(gap);
    }
    verdict(
        errs[0] < 5e-3 && errs[1] < 1.5e-3,
        format!("rel. error {:.2e} at 500 cells, {:.2e} at 1000 cells", errs[0], errs[1]),
    )
}

fn criterion_4() -> Result<Verdict> {
    let (beta0, b, mu0, a) = (2.0, 1.0, 0.5, 1.0);
    let m = ModelSpec {
        beta: Rate1D::exp_decay(beta0, b),
        mu: Rate2D::without_feedback(Rate1D::constant(mu0)),
        gamma: Rate2D::without_feedback(Rate1D::constant(1.0)),
        alpha: AttackKernel::separable(Rate1D::constant(a), Rate1D::constant(1.0)),
        c: Rate1D::constant(1.0),
        gamma0: 0.5,
        s_max: 20.0,
    };
    let st = solve(&m, 20_000)?;
    let p = st.n.integrate();
    // scalar oracle: β₀/(b + μ₀ + aP) = 1
    let f = |p: f64| beta0 / (b + mu0 + a * p) - 1.0;
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let rel = (p - oracle).abs() / oracle;
    verdict(
        st.residual_r < 1e-6 && rel < 1e-5,
        format!("residual_R = {:.2e}, P = {p:.8} vs oracle {oracle:.8} (rel {rel:.2e})", st.residual_r),
    )
}

fn random_bumps(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, count: usize, s_hi: f64) -> GridFunction {
    let bumps: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(0.5..s_hi),
                rng.random_range(0.3..2.0),
                rng.random_range(0.1..1.0),
            )
        })
        .collect();
    GridFunction::from_fn(grid, |s| {
        bumps
            .iter()
            .map(|&(c, w, a)| {
                let x = (s - c) / w;
                if x.abs() < 1.0 {
                    a * (1.0 - x * x).powi(2)
                } else {
                    0.0
                }
            })
            .sum()
    })
}

fn linearized(lin: &Linearization, initial: &GridFunction, t_end: f64, record_every: usize) -> Result<SimReport> {
    simulate(
        lin.model(),
        initial,
        &SimConfig {
            t_end,
            record_every,
            mode: Mode::Linearized,
            ..SimConfig::default()
        },
        Some(lin),
    )
}

fn criterion_5() -> Result<Verdict> {
    let m = ModelSpec {
        beta: Rate1D::exp_decay(0.5, 1.0),
        mu: Rate2D::without_feedback(Rate1D::constant(0.6)),
        gamma: Rate2D::without_feedback(Rate1D::constant(1.0)),
        alpha: AttackKernel::separable(Rate1D::constant(0.2), Rate1D::poly_exp(1.0, 1.0, 1.0)),
        c: Rate1D::constant(1.0),
        gamma0: 0.5,
        s_max: 30.0,
    };
    let lin = trivial_lin(&m, 1000)?;
    let kappa = dissipativity_margin(&lin).margin;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u0 = random_bumps(lin.grid(), &mut rng, 4, 10.0);
    let r = linearized(&lin, &u0, 20.0, 20)?;
    let tail = r.times.len() / 2;
    let bound_ok = (tail..r.times.len())
        .all(|i| r.norms[i] <= 1.1 * (-kappa * (r.times[i] - r.times[tail])).exp() * r.norms[tail]);
    verdict(
        kappa >= 0.1 - 1e-12 && r.growth_rate <= -kappa + 0.02 && bound_ok,
        format!(
            "kappa = {kappa:.4}, growth_rate = {:.4}, tail decay bound {}",
            r.growth_rate,
            if bound_ok { "holds" } else { "violated" }
        ),
    )
}

/// Proportional attack `c·α₁ = p·α₂` with `α₂ = 1 − e^{−rs}`, age-structured,
/// and a mortality `μ_b − μ_d·E/(1+E)` that drops as energy intake rises.
#[derive(Clone, Copy)]
struct Ex33 {
    p: f64,
    r: f64,
    mu_base: f64,
    mu_drop: f64,
    beta0: f64,
}

const EX33: Ex33 = Ex33 {
    p: 0.5,
    r: 10.0,
    mu_base: 4.5,
    mu_drop: 4.0,
    beta0: 4.5,
};

fn example33_model(e: Ex33) -> ModelSpec {
    ModelSpec {
        beta: Rate1D::exp_decay(e.beta0, 0.5),
        mu: Rate2D::new(Rate1D::constant(e.mu_base), Feedback::Saturating, -e.mu_drop),
        gamma: Rate2D::without_feedback(Rate1D::constant(1.0)),
        alpha: AttackKernel::separable(
            Rate1D::saturating_ramp(0.0, e.p, e.r),
            Rate1D::saturating_ramp(0.0, 1.0, e.r),
        ),
        c: Rate1D::constant(1.0),
        gamma0: 0.5,
        s_max: 10.0,
    }
}

fn example33_lin(cells: usize) -> Result<Linearization> {
    let m = example33_model(EX33);
    let st = lowest_equilibrium(&m, cells)?;
    build_linearization(&m, &st)
}

fn criterion_6() -> Result<Verdict> {
    let p = EX33.p;
    let lin = example33_lin(8000)?;
    let ex = instability_example33(lin.model(), &lin, p)?;
    let k0 = characteristic_k(&lin, 0.0)?.k;
    let range = default_lambda_range(&lin);
    let scan = scan_real_roots_k(&lin, [1e-9, range[1]], 200, 1e-10)?;
    let Some(root) = scan.roots.iter().filter(|r| r.converged).map(|r| r.lambda).reduce(f64::max) else {
        return verdict(false, format!("K(0) = {k0:.4e} but no positive root found"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u0 = random_bumps(lin.grid(), &mut rng, 3, 8.0);
    let r = linearized(&lin, &u0, 40.0, 50)?;
    let tol = (0.05 * root.abs()).max(0.02);
    let gap = (r.growth_rate - root).abs();
    verdict(
        ex.condition_holds && k0 < 0.0 && root > 0.0 && gap <= tol,
        format!(
            "profile<0: {}, K(0) = {k0:.4e}, root = {root:.5}, growth_rate = {:.5} (|diff| {gap:.2e} <= {tol:.2e})",
            ex.condition_holds, r.growth_rate
        ),
    )
}

fn criterion_7() -> Result<Verdict> {
    let lin = example33_lin(2000)?;
    let v = dissipativity_margin(&lin);
    let roots = scan_real_roots_k(&lin, [1e-9, default_lambda_range(&lin)[1]], 100, 1e-10)?.roots;
    let hypotheses = v.aeg_hypotheses_met && lin.is_separable() && roots.iter().any(|r| r.lambda > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = linearized(&lin, &random_bumps(lin.grid(), &mut rng, 2, 5.0), 6.0, 20)?;
    let b = linearized(&lin, &random_bumps(lin.grid(), &mut rng, 4, 12.0), 6.0, 20)?;
    let da = aeg_diagnostic(&a, 0.01)?;
    let db = aeg_diagnostic(&b, 0.01)?;
    let dist = da.limit_profile.zip_with(&db.limit_profile, |x, y| x - y).l1_norm();
    let monotone = |r: &SimReport| {
        let d = &r.profile_distance;
        d[d.len() / 2..].windows(2).all(|w| w[1] <= w[0])
    };
    verdict(
        hypotheses && dist < 0.02 && monotone(&a) && monotone(&b),
        format!(
            "hypotheses met: {hypotheses}, limit-profile L1 distance = {dist:.2e}, monotone tails: {}/{}, aeg_detected: {}/{}",
            monotone(&a),
            monotone(&b),
            da.aeg_detected,
            db.aeg_detected
        ),
    )
}

fn criterion_8() -> Result<Verdict> {
    let lin = example33_lin(600)?;
    let v = dissipativity_margin(&lin);
    if !(v.positivity_pos1 && v.positivity_pos2) {
        return verdict(false, "pos1/pos2 do not hold for the test model");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::INFINITY;
    for _ in 0..10 {
        let k = rng.random_range(1..5);
        let u0 = random_bumps(lin.grid(), &mut rng, k, 20.0);
        let r = linearized(&lin, &u0, 15.0, 5)?;
        for (m, s) in r.min_values.iter().zip(&r.sup_norms) {
            worst = worst.min(m / s.max(f64::MIN_POSITIVE));
        }
    }
    verdict(worst >= -1e-12, format!("min over runs of min(n)/max|n| = {worst:.2e}"))
}

fn criterion_9() -> Result<Verdict> {
    let m = feedback_model();
    let lin = build_linearization(&m, &solve(&m, 1000)?)?;
    let f = GridFunction::from_fn(lin.grid(), |s| (1.0 + s) * (-0.5 * s).exp());
    let mut worst: f64 = 0.0;
    for lambda in [0.75, 1.5, 3.0] {
        let l = characteristic_l(&lin, lambda)?;
        if l.abs() < 1e-8 {
            return verdict(false, format!("L({lambda}) = {l:.2e} is a pole"));
        }
        let u = resolvent_ab(&lin, lambda, &f)?;
        let back = u.zip_with(&lin.apply_ab(&u), |u, a| lambda * u - a);
        worst = worst.max(back.zip_with(&f, |x, y| x - y).l1_norm() / f.l1_norm());
    }
    verdict(worst < 5e-3, format!("max relative L1 error = {worst:.2e}"))
}

fn criterion_10() -> Result<Verdict> {
    let mut checked = 0;
    let mut holds = 0;
    let mut failures = Vec::new();
    let base = EX33;
    for e in [
        base,
        Ex33 { p: 0.3, ..base },
        Ex33 { r: 1.0, ..base },
        Ex33 { beta0: 4.7, ..base },
        Ex33 { mu_drop: 0.5, mu_base: 1.0, ..base },
        Ex33 { mu_drop: 0.0, mu_base: 1.0, ..base },
        Ex33 { p: 2.0, beta0: 6.0, ..base },
    ] {
        let (m, p) = (example33_model(e), e.p);
        let Ok(st) = lowest_equilibrium(&m, 1500) else {
            continue;
        };
        let lin = build_linearization(&m, &st)?;
        checked += 1;
        if instability_example33(&m, &lin, p)?.condition_holds {
            holds += 1;
            let k0 = characteristic_k(&lin, 0.0)?.k;
            let rp = rtilde_prime(&m, &st, p)?;
            if !(k0 < 0.0 && rp > 0.0) {
                failures.push(format!("p={p}: K(0)={k0:.3e}, R~'={rp:.3e}"));
            }
        }
    }
    verdict(
        holds > 0 && failures.is_empty(),
        format!("{checked} models, condition held for {holds}; violations: [{}]", failures.join("; ")),
    )
}

fn transport_error(cells: usize) -> Result<f64> {
    let mu = 0.3;
    let m = ModelSpec {
        beta: Rate1D::constant(0.0),
        mu: Rate2D::without_feedback(Rate1D::constant(mu)),
        gamma: Rate2D::without_feedback(Rate1D::constant(1.0)),
        alpha: AttackKernel::zero(),
        c: Rate1D::constant(1.0),
        gamma0: 0.5,
        s_max: 20.0,
    };
    let profile = |s: f64| {
        let x = (s - 5.0) / 2.0;
        if x.abs() < 1.0 {
            (1.0 - x * x).powi(4)
        } else {
            0.0
        }
    };
    let g = Grid::uniform(m.s_max, cells)?;
    let h = g.min_width();
    let t_end = 4.0;
    let r = simulate(
        &m,
        &GridFunction::from_fn(&g, profile),
        &SimConfig {
            dt: Some(0.5 * h),
            t_end,
            record_every: usize::MAX,
            ..SimConfig::default()
        },
        None,
    )?;
    let exact = GridFunction::from_fn(&g, |s| profile(s - t_end) * (-mu * t_end).exp());
    Ok(r.final_state.zip_with(&exact, |a, b| a - b).l1_norm())
}

fn criterion_11() -> Result<Verdict> {
    let errs = [400, 800, 1600]
        .iter()
        .map(|&n| transport_error(n))
        .collect::<Result<Vec<_>>>()?;
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    verdict(
        ratios.iter().all(|r| (1.6..=2.4).contains(r)),
        format!("L1 errors {:.3e}, {:.3e}, {:.3e}; ratios {:.3}, {:.3}", errs[0], errs[1], errs[2], ratios[0], ratios[1]),
    )
}

type Criterion = (&'static str, fn() -> Result<Verdict>);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("trivial-state identity K(0) = 1 - R(0)", criterion_1),
        ("K(lambda_hi) -> 1", criterion_2),
        ("steady state n* = n*(0) pi(., 0)", criterion_3),
        ("R = 1 at equilibrium, scalar oracle", criterion_4),
        ("dissipativity implies decay", criterion_5),
        ("K(0) < 0 implies growth at the root", criterion_6),
        ("asynchronous exponential growth", criterion_7),
        ("positivity of the linearized flow", criterion_8),
        ("resolvent consistency", criterion_9),
        ("proportional-attack consistency", criterion_10),
        ("first-order scheme convergence", criterion_11),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Verdict {
            pass: false,
            detail: format!("error: {e}"),
        });
        let secs = start.elapsed().as_secs_f64();
        failed += usize::from(!outcome.pass);
        println!(
            "{} criterion {:>2}: {name} ({secs:.2}s) {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
