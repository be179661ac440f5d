//! End-to-end acceptance run: one line per criterion, nonzero exit on any
//! failure or time overrun.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

use thetasphere::algebra_core::{AlgebraElement, Presentation};
use thetasphere::clutching::{classical_chern, verify_clutching, verify_semigroup, ClutchingDatum, ModuleClass};
use thetasphere::field_model::{spectrum_c, winding, x_loop_from, ModalProjection};
use thetasphere::matrix_ops::{verify_instanton, verify_pullback};
use thetasphere::phase_ring::{GaussianRational, PhaseScalar, ThetaKind};
use thetasphere::torus_rep::{rieffel_projection, RieffelParams};
use thetasphere::{tolerances, Monomial, Rational, Report, Rep};

type E = AlgebraElement<Rational>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn from_report(report: &Report) -> Self {
        let failed: Vec<String> = report.failures().map(|c| format!("{} ({:?})", c.name, c.residual)).collect();
        Self {
            pass: report.passed(),
            detail: if failed.is_empty() {
                format!("{} checks, max residual {:.3e}", report.checks.len(), report.max_residual())
            } else {
                format!("failed: {}", failed.join(", "))
            },
        }
    }
}

fn instanton() -> Outcome {
    let report = verify_instanton::<Rational>();
    let control = report.get("negative_control/e_not_idempotent_when_swapped").is_some_and(|c| c.pass);
    let mut out = Outcome::from_report(&report);
    if !control {
        out.pass = false;
        out.detail.push_str("; negative control missing");
    }
    out
}

fn pullback() -> Outcome {
    Outcome::from_report(&verify_pullback::<Rational>())
}

fn rieffel() -> Outcome {
    let mut report = Report::new();
    for (p, q) in [(1, 2), (3, 8), (34, 89)] {
        let rep = Rep::clock_shift(p, q).expect("coprime");
        let params = RieffelParams::proportional(0.2, rep.theta()).expect("eps in range");
        let r = rieffel_projection(&rep, &params).expect("projection");
        report.push(thetasphere::Check::within(format!("{p}/{q}/idempotent"), r.idempotent_residual, tolerances::RIEFFEL_RESIDUAL));
        report.push(thetasphere::Check::within(format!("{p}/{q}/self_adjoint"), r.adjoint_residual, tolerances::RIEFFEL_RESIDUAL));
        report.push(thetasphere::Check::within(format!("{p}/{q}/trace"), r.trace_error, tolerances::RIEFFEL_TRACE));
    }
    Outcome::from_report(&report)
}

fn winding_pairing() -> Outcome {
    let rep = Rep::clock_shift(34, 89).expect("coprime");
    let params = RieffelParams::proportional(0.2, rep.theta()).expect("eps");
    let modal = Arc::new(ModalProjection::rieffel(&rep, &params).expect("eigen"));
    let theta = 34.0 / 89.0;
    let mut report = Report::new();
    for s in -3..=3 {
        let w = |steps| winding(&x_loop_from(modal.clone(), s, 1, steps)).map(|r| r.value);
        match (w(4096), w(8192)) {
            (Ok(a), Ok(b)) => {
                let tol = tolerances::WINDING_PER_UNIT * (s.abs() as f64).max(1.0);
                report.push(thetasphere::Check::within(format!("X^{s}/value"), (a - s as f64 * theta).abs(), tol));
                report.push(thetasphere::Check::within(format!("X^{s}/drift"), (a - b).abs(), tolerances::WINDING_DRIFT));
            }
            (Err(e), _) | (_, Err(e)) => report.push(thetasphere::Check::new(format!("X^{s}/error: {e}"), false, None)),
        }
    }
    Outcome::from_report(&report)
}

fn clutching() -> Outcome {
    let rep = Rep::clock_shift(34, 89).expect("coprime");
    let params = RieffelParams::proportional(0.2, rep.theta()).expect("eps");
    let modal = Arc::new(ModalProjection::rieffel(&rep, &params).expect("eigen"));
    let mut report = Report::new();
    for (n, s) in [(1usize, 0i32), (1, 1), (1, -1), (2, -1), (3, 2)] {
        let kind = ThetaKind::Irrational;
        let d = ClutchingDatum::x_power_from(modal.clone(), n, s, 64, kind, rep.theta());
        let expected = ModuleClass::new(kind, n as i64, s as i64).expect("class");
        match verify_clutching(&d, 128, expected) {
            Ok(r) => report.extend(r.prefixed(&format!("N({n},{s})"))),
            Err(e) => report.push(thetasphere::Check::new(format!("N({n},{s})/error: {e}"), false, None)),
        }
    }
    Outcome::from_report(&report)
}

fn spectrum() -> Outcome {
    let rep = Rep::clock_shift(21, 55).expect("coprime");
    let params = RieffelParams::proportional(0.2, rep.theta()).expect("eps");
    match spectrum_c(&rep, &params, 64) {
        Ok(r) => {
            let mut out = Outcome::from_report(&r.report);
            out.detail = format!("coverage {:.4}, boundary gap {:.2e}; {}", r.coverage, r.boundary_gap, out.detail);
            out
        }
        Err(e) => Outcome { pass: false, detail: e.to_string() },
    }
}

fn semigroup() -> Outcome {
    Outcome::from_report(&verify_semigroup(6, 6))
}

fn arb_element(pres: Presentation) -> BoxedStrategy<E> {
    let slots = pres.slots();
    let torus = pres.is_torus();
    let central = pres.central_name().is_some();
    let has_u = pres.has_u();
    let exp = if torus { -2i32..=2 } else { 0i32..=1 };
    prop::collection::vec(
        (
            prop::collection::vec(exp, slots),
            if central { 0u32..=1 } else { 0u32..=0 },
            if has_u { 0u32..=1 } else { 0u32..=0 },
            -3i64..=3,
            -2i64..=2,
            -2i32..=2,
        ),
        1..=3,
    )
    .prop_map(move |terms| {
        terms.into_iter().fold(E::zero(pres), |acc, (exps, c, u, re, im, half)| {
            let coeff = PhaseScalar::monomial(
                GaussianRational::new(Rational::from_integer(re.into()), Rational::from_integer(im.into())),
                half,
            );
            &acc + &E::from_monomial(pres, Monomial::new(exps, c, u), coeff).expect("valid monomial")
        })
    })
    .boxed()
}

fn rewriting() -> Outcome {
    let presets = [
        Presentation::torus(2),
        Presentation::odd_sphere(2),
        Presentation::even_sphere(2),
        Presentation::ball(2, false),
        Presentation::ball(2, true),
    ];
    let mut runner = TestRunner::deterministic();
    let mut report = Report::new();
    for pres in presets {
        let strat = arb_element(pres);
        let (mut assoc, mut distrib, mut adjoint) = (0usize, 0usize, 0usize);
        for _ in 0..1000 {
            let mut draw = || strat.new_tree(&mut runner).expect("strategy").current();
            let (a, b, c) = (draw(), draw(), draw());
            let ab = &a * &b;
            if !(&(&ab * &c) - &(&a * &(&b * &c))).is_zero() {
                assoc += 1;
            }
            if !(&(&a * &(&b + &c)) - &(&ab + &(&a * &c))).is_zero() || !(&(&(&a + &b) * &c) - &(&(&a * &c) + &(&b * &c))).is_zero() {
                distrib += 1;
            }
            if a.adjoint().adjoint() != a || ab.adjoint() != &b.adjoint() * &a.adjoint() {
                adjoint += 1;
            }
        }
        let relations = pres
            .relations()
            .iter()
            .filter(|(_, text)| !E::parse(text, pres).map(|e| e.is_zero()).unwrap_or(false))
            .count();
        report.push(thetasphere::Check::exact(format!("{pres}/associativity"), assoc));
        report.push(thetasphere::Check::exact(format!("{pres}/distributivity"), distrib));
        report.push(thetasphere::Check::exact(format!("{pres}/adjoint"), adjoint));
        report.push(thetasphere::Check::exact(format!("{pres}/relations"), relations));
    }

    let torus = arb_element(Presentation::torus(2));
    for (p, q, count) in [(3i64, 8i64, 1000usize), (34, 89, 100)] {
        let rep = Rep::clock_shift(p, q).expect("coprime");
        let mut worst: f64 = 0.0;
        for _ in 0..count {
            let a = torus.new_tree(&mut runner).expect("strategy").current();
            let b = torus.new_tree(&mut runner).expect("strategy").current();
            let (ra, rb) = (rep.represent(&a).expect("torus"), rep.represent(&b).expect("torus"));
            let rab = rep.represent(&(&a * &b)).expect("torus");
            let radj = rep.represent(&a.adjoint()).expect("torus");
            worst = worst
                .max((&rab - &(&ra * &rb)).frob_norm() / (1.0 + rab.frob_norm()))
                .max((&radj - &ra.adjoint()).frob_norm() / (1.0 + radj.frob_norm()));
        }
        report.push(thetasphere::Check::within(format!("represent {p}/{q}"), worst, tolerances::HOMOMORPHISM));
    }
    Outcome::from_report(&report)
}

fn chern() -> Outcome {
    let mut bad = Vec::new();
    for s in -5..=5 {
        match classical_chern(s, 1024) {
            Ok(v) if v == s => {}
            other => bad.push(format!("s={s}: {other:?}")),
        }
    }
    Outcome { pass: bad.is_empty(), detail: if bad.is_empty() { "11 loops".into() } else { bad.join(", ") } }
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 9] = [
        ("exact instanton suite", 5, instanton),
        ("pullback suite", 1, pullback),
        ("rieffel projection", 5, rieffel),
        ("winding pairing", 30, winding_pairing),
        ("clutching idempotents", 60, clutching),
        ("spectrum of c", 30, spectrum),
        ("semigroup laws", 1, semigroup),
        ("rewriting engine properties", 10, rewriting),
        ("classical chern cross-check", 1, chern),
    ];
    let mut all = true;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let pass = outcome.pass && in_time;
        all &= pass;
        let timing = if in_time { String::new() } else { format!(" [over {limit} s budget]") };
        println!(
            "[{}] {} {}: {:.2} s (limit {} s){}; {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            elapsed.as_secs_f64(),
            limit,
            timing,
            outcome.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
