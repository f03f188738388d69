//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use infection_caps::barrier::{compute_barrier, verify_barrier};
use infection_caps::classifier::{classification_report, classify, Case};
use infection_caps::model::{endemic_equilibrium, lie_derivative, ConstraintCaps, ConstraintFace, ModelParams, State};
use infection_caps::oracle::{compare, grid_membership};
use infection_caps::policy::{simulate, Control, SimOptions};
use infection_caps::region::MembershipKind;
use infection_caps::tangency::{tangent_point, SetKind};
use infection_caps::{Analysis, RegionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A_M: f64 = 0.076608;
const A_H: f64 = 0.0722633;
const GAMMA: f64 = 0.1;
const U_MIN: f64 = 0.0333;
const U_MAX: f64 = 0.05;

const SCENARIOS: [(&str, f64, f64, Case); 4] = [
    ("comfortable", 0.7, 0.7, Case::Comfortable),
    ("comfortable_viable", 0.7, 0.2, Case::ComfortableViable),
    ("viable", 0.15, 0.2, Case::Viable),
    ("desperate", 0.15, 0.04, Case::Desperate),
];

type Check = Result<String, String>;

fn params() -> ModelParams {
    ModelParams::new(A_M, A_H, GAMMA, U_MIN, U_MAX).unwrap()
}

fn caps(a: f64, b: f64) -> ConstraintCaps {
    ConstraintCaps::new(a, b).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn four_scenario_classification() -> Check {
    let p = params();
    let start = Instant::now();
    let mut labels = Vec::new();
    for (name, a, b, expected) in SCENARIOS {
        let cls = classify(&p, &caps(a, b));
        let _ = classification_report(&p, &caps(a, b));
        ensure(cls.case == expected, || {
            format!("{name}: got {}, want {}", cls.case, expected)
        })?;
        labels.push(cls.case.to_string());
        if expected == Case::Viable {
            ensure(cls.active_face == Some(ConstraintFace::G1), || {
                format!("viable active face {:?}", cls.active_face)
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} (viable via G1) in {elapsed:?}", labels.join(", ")))
}

/// `A_m (A_h + gamma) xbar2 + gamma u - A_m A_h` in exact integer
/// arithmetic on the decimal inputs (scaled by 1e15).
fn exact_g3_admissible_margin() -> f64 {
    let a_m: i128 = 76_608; // 1e-6
    let a_h: i128 = 722_633; // 1e-7
    let gamma_plus_a_h: i128 = a_h + 1_000_000; // 1e-7
    let xbar2: i128 = 4; // 1e-2
    let gamma_u: i128 = 5_000_000_000_000; // 0.005 at 1e-15
    let lhs = a_m * gamma_plus_a_h * xbar2 + gamma_u;
    let rhs = a_m * a_h * 100;
    (lhs - rhs) as f64 * 1e-15
}

fn desperate_margin() -> Check {
    let p = params();
    let cls = classify(&p, &caps(0.15, 0.04));
    let audit = cls
        .audit("entry_g3_admissible")
        .ok_or("missing audit entry_g3_admissible")?;
    let exact = exact_g3_admissible_margin();
    ensure((audit.margin - exact).abs() <= 1e-9, || {
        format!("margin {:e} vs exact {exact:e}", audit.margin)
    })?;
    let shown = format!("{:.2e}", audit.margin);
    ensure(shown == "-8.08e-6", || {
        format!("margin {shown} does not round to -8.08e-6")
    })?;
    let bumped = ModelParams::new(A_M, A_H, GAMMA, U_MIN, 0.051).unwrap();
    let flipped = classify(&bumped, &caps(0.15, 0.04)).case;
    ensure(flipped == Case::Viable, || format!("u_max = 0.051 gives {flipped}"))?;
    Ok(format!(
        "margin {:.9e} (exact {exact:.9e}, |diff| {:.1e}, shown {shown}); u_max 0.051 -> {flipped}",
        audit.margin,
        (audit.margin - exact).abs()
    ))
}

fn tangent_points() -> Check {
    let p = params();
    let z3_x1 = GAMMA * 0.2 / (A_H * (1.0 - 0.2));
    let z1_x2 = U_MAX * 0.15 / (A_M * (1.0 - 0.15));
    let z3 = tangent_point(&p, &caps(0.7, 0.2), SetKind::Admissible, ConstraintFace::G3)
        .map_err(|e| e.to_string())?
        .ok_or("no z3")?;
    let z1 = tangent_point(&p, &caps(0.15, 0.2), SetKind::Admissible, ConstraintFace::G1)
        .map_err(|e| e.to_string())?
        .ok_or("no z1")?;
    ensure((z3.point.x1 - z3_x1).abs() <= 1e-12 && z3.point.x2 == 0.2, || {
        format!("z3 = {}", z3.point)
    })?;
    ensure((z1.point.x2 - z1_x2).abs() <= 1e-12 && z1.point.x1 == 0.15, || {
        format!("z1 = {}", z1.point)
    })?;
    ensure(
        (z3.point.x1 - 0.345957).abs() < 1e-6 && (z1.point.x2 - 0.115178).abs() < 1e-6,
        || "tangent points differ from the tabulated decimals".into(),
    )?;
    // Lie derivatives evaluated directly from the field.
    let f = |x: State, u: f64| {
        [
            A_M * x.x2 * (1.0 - x.x1) - u * x.x1,
            A_H * x.x1 * (1.0 - x.x2) - GAMMA * x.x2,
        ]
    };
    let l3 = f(z3.point, U_MAX)[1];
    let l1 = f(z1.point, U_MAX)[0];
    let l3_lib = lie_derivative(ConstraintFace::G3, z3.point, U_MAX, &p);
    let l1_lib = lie_derivative(ConstraintFace::G1, z1.point, U_MAX, &p);
    ensure(
        l1.abs().max(l3.abs()).max(l1_lib.abs()).max(l3_lib.abs()) <= 1e-10,
        || format!("Lie derivatives {l1:e}, {l3:e}"),
    )?;
    Ok(format!(
        "z3 = {}, z1 = {}, |L_f g| <= {:.1e}",
        z3.point,
        z1.point,
        l1.abs().max(l3.abs())
    ))
}

fn barrier_residuals() -> Check {
    let p = params();
    let mut lines = Vec::new();
    for (name, a, b, _) in SCENARIOS {
        let c = caps(a, b);
        let cls = classify(&p, &c);
        for kind in [SetKind::Admissible, SetKind::Mrpi] {
            if !cls.has_barrier(kind) {
                continue;
            }
            let start = Instant::now();
            let curve = compute_barrier(&p, &c, kind)
                .map_err(|e| format!("{name}/{kind}: {e}"))?
                .ok_or_else(|| format!("{name}/{kind}: no curve"))?;
            let report = verify_barrier(&curve, &p, &c).map_err(|e| format!("{name}/{kind}: {e}"))?;
            let elapsed = start.elapsed();
            ensure(elapsed < Duration::from_secs(5), || {
                format!("{name}/{kind} took {elapsed:?}")
            })?;
            ensure(report.hamiltonian_max <= 1e-6, || {
                format!("{name}/{kind}: H {:e}", report.hamiltonian_max)
            })?;
            ensure(report.extremality_gap <= 0.0, || {
                format!("{name}/{kind}: gap {:e}", report.extremality_gap)
            })?;
            ensure(
                report.graze_distance <= 1e-4 && report.graze_max_violation <= 1e-6,
                || {
                    format!(
                        "{name}/{kind}: graze {:e} / {:e}",
                        report.graze_distance, report.graze_max_violation
                    )
                },
            )?;
            lines.push(format!(
                "{name}/{kind}: {} samples, |H| {:.1e}, graze {:.1e}, {:?}",
                curve.samples.len(),
                report.hamiltonian_max,
                report.graze_distance,
                elapsed
            ));
        }
    }
    Ok(lines.join("; "))
}

fn oracle_agreement() -> Check {
    let p = params();
    let start = Instant::now();
    let mut lines = Vec::new();
    for (name, a, b, _) in SCENARIOS {
        let c = caps(a, b);
        let analysis = Analysis::run(&p, &c).map_err(|e| format!("{name}: {e}"))?;
        let verdict = grid_membership(&p, &c, 200, 200, 3000.0).map_err(|e| e.to_string())?;
        let cmp = compare(&verdict, &analysis.regions, 0.01).map_err(|e| e.to_string())?;
        ensure(cmp.passed(0.99), || {
            format!("{name}: {}", cmp.summary().replace('\n', " "))
        })?;
        lines.push(format!(
            "{name} {:.4}/{:.4}",
            cmp.admissible.off_band_fraction(),
            cmp.mrpi.off_band_fraction()
        ));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("off-band agreement (A/M): {} in {elapsed:?}", lines.join(", ")))
}

fn sample_where(rng: &mut ChaCha8Rng, c: &ConstraintCaps, want: impl Fn(State) -> bool) -> Option<State> {
    for _ in 0..1_000_000 {
        let x = State::new(rng.gen_range(0.0..=c.xbar1), rng.gen_range(0.0..=c.xbar2));
        if want(x) {
            return Some(x);
        }
    }
    None
}

fn random_schedule(rng: &mut ChaCha8Rng, horizon: f64) -> Vec<(f64, f64)> {
    let mut pieces = Vec::new();
    let mut total = 0.0;
    while total < horizon {
        let d = rng.gen_range(1.0..60.0);
        let u = match rng.gen_range(0..4) {
            0 => U_MIN,
            1 => U_MAX,
            _ => rng.gen_range(U_MIN..=U_MAX),
        };
        pieces.push((d, u));
        total += d;
    }
    pieces
}

fn inside(region: &RegionSet, x: State) -> bool {
    region.contains(x, 1e-9).is_ok_and(|m| m.kind == MembershipKind::Inside)
}

fn set_inclusion_and_definitions() -> Check {
    let p = params();
    let horizon = 3000.0;
    let opts = SimOptions {
        violation_tol: 1e-6,
        stop_on_violation: true,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut lines = Vec::new();
    for (name, a, b, _) in SCENARIOS {
        let c = caps(a, b);
        let an = Analysis::run(&p, &c).map_err(|e| format!("{name}: {e}"))?;
        let (adm, mrpi) = (&an.regions.admissible, &an.regions.mrpi);

        for v in &mrpi.polygon {
            let m = adm.contains(*v, 1e-9).map_err(|e| e.to_string())?;
            ensure(m.is_member(), || {
                format!("{name}: MRPI vertex {v} outside A (distance {:e})", m.distance)
            })?;
        }

        let mut robust = 0;
        for _ in 0..100 {
            let x0 = if mrpi.is_degenerate() {
                State::ORIGIN
            } else {
                sample_where(&mut rng, &c, |x| inside(mrpi, x)).ok_or("no MRPI sample")?
            };
            for _ in 0..50 {
                let sched = random_schedule(&mut rng, horizon);
                let tr = simulate(&p, &c, x0, &Control::Schedule(sched), horizon, &opts).map_err(|e| e.to_string())?;
                ensure(tr.violation.is_none(), || {
                    format!("{name}: MRPI point {x0} violated {:?}", tr.violation)
                })?;
                robust += 1;
            }
        }

        let mut kept = 0;
        for _ in 0..100 {
            let x0 = if adm.is_degenerate() {
                State::ORIGIN
            } else {
                sample_where(&mut rng, &c, |x| inside(adm, x)).ok_or("no A sample")?
            };
            let tr = simulate(&p, &c, x0, &Control::Constant(U_MAX), horizon, &opts).map_err(|e| e.to_string())?;
            ensure(tr.violation.is_none(), || {
                format!("{name}: A point {x0} violated {:?}", tr.violation)
            })?;
            kept += 1;
        }

        let mut escaped = 0;
        let outside = |x: State| adm.contains(x, 1e-9).is_ok_and(|m| m.kind == MembershipKind::Outside);
        if sample_where(&mut rng, &c, outside).is_some() {
            let strict = SimOptions {
                violation_tol: 0.0,
                ..opts
            };
            for _ in 0..100 {
                let x0 = sample_where(&mut rng, &c, outside).ok_or("no outside sample")?;
                let tr =
                    simulate(&p, &c, x0, &Control::Constant(U_MAX), horizon, &strict).map_err(|e| e.to_string())?;
                ensure(tr.violation.is_some(), || {
                    format!("{name}: outside point {x0} never violated")
                })?;
                escaped += 1;
            }
        }
        lines.push(format!("{name}: {robust} robust, {kept} kept, {escaped} escaped"));
    }
    Ok(lines.join("; "))
}

fn equilibrium_checks() -> Check {
    let p = params();
    let mut worst: f64 = 0.0;
    for u in [U_MIN, 0.04, U_MAX] {
        let e = endemic_equilibrium(u, &p)
            .map_err(|e| e.to_string())?
            .ok_or("no endemic equilibrium")?;
        let r1 = A_M * e.x2 * (1.0 - e.x1) - u * e.x1;
        let r2 = A_H * e.x1 * (1.0 - e.x2) - GAMMA * e.x2;
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    ensure(worst <= 1e-12, || format!("residual {worst:e}"))?;
    let c = caps(1.0, 1.0);
    let tr = simulate(
        &p,
        &c,
        State::new(0.5, 0.5),
        &Control::Constant(U_MAX),
        3000.0,
        &SimOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let end = tr.last_state();
    // Closed form, evaluated independently of the library.
    let x1 = (A_M * A_H - U_MAX * GAMMA) / (A_H * (A_M + U_MAX));
    let x2 = A_H * x1 / (A_H * x1 + GAMMA);
    let d = end.dist(State::new(x1, x2));
    let d_tab = end.dist(State::new(0.058580, 0.040612));
    ensure(d <= 1e-4 && d_tab <= 1e-4, || {
        format!("terminal state {end}, distance {d:e}")
    })?;
    Ok(format!(
        "max residual {worst:.1e}; terminal {end} ({d:.1e} from closed form)"
    ))
}

fn artifacts() -> Result<Vec<String>, String> {
    let p = params();
    let mut out = Vec::new();
    for (_, a, b, _) in SCENARIOS {
        let c = caps(a, b);
        let an = Analysis::run(&p, &c).map_err(|e| e.to_string())?;
        out.push(serde_json::to_string(&an.classification).map_err(|e| e.to_string())?);
        out.push(serde_json::to_string(&an.regions).map_err(|e| e.to_string())?);
        out.push(an.regions.admissible.to_csv());
        out.push(an.regions.mrpi.to_csv());
        for curve in an.curves() {
            out.push(curve.to_csv());
        }
        let tr = simulate(
            &p,
            &c,
            State::new(0.1, 0.03),
            &Control::ClosedLoop(an.context()),
            500.0,
            &SimOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        out.push(tr.to_csv());
        out.push(
            grid_membership(&p, &c, 25, 25, 3000.0)
                .map_err(|e| e.to_string())?
                .to_csv(),
        );
    }
    Ok(out)
}

fn determinism() -> Check {
    let first = artifacts()?;
    let second = artifacts()?;
    ensure(first == second, || "artifacts differ between runs".into())?;
    let bytes: usize = first.iter().map(String::len).sum();
    Ok(format!(
        "{} artifacts, {bytes} bytes, identical across runs",
        first.len()
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("four-scenario classification", four_scenario_classification),
        ("desperate margin sensitivity", desperate_margin),
        ("tangent points", tangent_points),
        ("barrier residuals", barrier_residuals),
        ("oracle agreement", oracle_agreement),
        ("set inclusion and definitions", set_inclusion_and_definitions),
        ("equilibrium checks", equilibrium_checks),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.2?}]", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{:.2?}]", start.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
