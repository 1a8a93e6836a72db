//! End-to-end acceptance run: one PASS/FAIL line per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ops::ControlFlow;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hybridflow::checker::{check_box, replay, CheckOptions, Claim, Verdict};
use hybridflow::fundamental_diagram::LinkParams;
use hybridflow::junction::{diverge_flux, linear_flux, merge_flux, MergeCapacities, TurnRatios};
use hybridflow::models::{builtin, BUILTIN};
use hybridflow::semantics::flow::integrate;
use hybridflow::semantics::{
    CompiledModel, CompiledOde, FlowConfig, FlowEnd, Signature, Workspace,
};
use hybridflow::syntax::{
    formula_to_string, parse_formula, parse_model, parse_program, program_to_string, Program,
};
use hybridflow::testing;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<String, String> {
    let t = started.elapsed();
    ensure!(
        t < limit,
        "{what} took {:.2} s, limit {:.0} s",
        t.as_secs_f64(),
        limit.as_secs_f64()
    );
    Ok(format!("{what} in {:.2} s", t.as_secs_f64()))
}

fn fundamental_diagram() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let p = LinkParams::new(
            rng.gen_range(0.5..40.0),
            rng.gen_range(0.5..3.0),
            rng.gen_range(3.0..10.0),
            rng.gen_range(10.0..1000.0),
        )
        .map_err(|e| e.to_string())?;
        for i in 0..1_000 {
            let k = p.k_jam() * (f64::from(i) / 999.0);
            let q = p.flow(k).map_err(|e| e.to_string())?;
            let m = p.demand(k).unwrap().min(p.supply(k).unwrap());
            ensure!(
                (q - m).abs() <= 1e-12,
                "min(demand, supply) = {m} but flow = {q} at k = {k}, {p:?}"
            );
        }
        let kc = p.k_crit();
        let free = p.v0() * kc;
        let congested = (1.0 - kc * p.veh_len()) / p.t_headway();
        ensure!(
            (free - congested).abs() <= 1e-12,
            "branches differ by {} at k_crit",
            free - congested
        );
    }
    within(
        started,
        Duration::from_secs(5),
        "10^4 diagrams x 10^3 densities",
    )
}

fn merge_conservation() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100_000 {
        let (d1, d2, s3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let caps =
            MergeCapacities::new(rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0)).unwrap();
        let m = merge_flux(d1, d2, s3, &caps).map_err(|e| e.to_string())?;
        ensure!(
            (m.g1 + m.g2).to_bits() == m.f3.to_bits(),
            "g1 + g2 != f3 for {d1} {d2} {s3}"
        );
        ensure!(
            (0.0..=d1).contains(&m.g1) && (0.0..=d2).contains(&m.g2) && m.f3 <= s3,
            "bounds for {d1} {d2} {s3}"
        );
    }
    within(started, Duration::from_secs(2), "10^5 merges")
}

fn diverge_conservation() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100_000 {
        let ratios = TurnRatios::straight(rng.gen_range(0.01..0.99)).unwrap();
        let (d0, s1, s2): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let f = diverge_flux(d0, s1, s2, &ratios, 1.0).map_err(|e| e.to_string())?;
        ensure!(
            (f.f1 + f.f2 - f.g0).abs() <= 1e-12,
            "f1 + f2 != g0 for {d0} {s1} {s2}"
        );
        if f.g0 > 0.0 {
            let skew = f.f1 / f.f2 - ratios.xi1() / ratios.xi2();
            ensure!(skew.abs() <= 1e-9, "f1:f2 off by {skew} for {d0} {s1} {s2}");
        }
    }
    within(started, Duration::from_secs(2), "10^5 diverges")
}

fn hand_vectors() -> Result<String, String> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    // f3 = min(1.2, 1.0) = 1.0, g1 = min(0.6, max(0.4, 0.5)) = 0.5, g2 = 0.5.
    let m = merge_flux(0.6, 0.6, 1.0, &MergeCapacities::new(1.0, 1.0).unwrap()).unwrap();
    ensure!(
        close(m.f3, 1.0) && close(m.g1, 0.5) && close(m.g2, 0.5),
        "merge gave {m:?}"
    );
    // g0 = min(0.4, 2, 2) = 0.4, f1 = f2 = 0.2.
    let d = diverge_flux(0.4, 1.0, 1.0, &TurnRatios::new(0.5, 0.5).unwrap(), 1.0).unwrap();
    ensure!(
        close(d.g0, 0.4) && close(d.f1, 0.2) && close(d.f2, 0.2),
        "diverge gave {d:?}"
    );
    // 0.3 * min(0.4, 0.6) = 0.12.
    let l = linear_flux(0.4, 0.6, 0.3).unwrap();
    ensure!(close(l, 0.12), "linear gave {l}");
    Ok("merge, diverge and linear vectors exact".into())
}

fn parser_round_trip() -> Result<String, String> {
    let started = Instant::now();
    let mut runner = TestRunner::new_with_rng(
        Config::default(),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let programs = testing::program();
    let formulas = testing::formula();
    for i in 0..10_000 {
        if i % 2 == 0 {
            let p = programs.new_tree(&mut runner).unwrap().current();
            let text = program_to_string(&p);
            ensure!(
                parse_program(&text).as_ref() == Ok(&p),
                "program does not round-trip: {text}"
            );
        } else {
            let f = formulas.new_tree(&mut runner).unwrap().current();
            let text = formula_to_string(&f);
            ensure!(
                parse_formula(&text).as_ref() == Ok(&f),
                "formula does not round-trip: {text}"
            );
        }
    }
    for b in &BUILTIN {
        let m = b.parse().map_err(|e| format!("{}: {e}", b.name))?;
        let printed = m.to_string();
        let again = parse_model(&printed).map_err(|e| format!("{}: {e}", b.name))?;
        ensure!(
            again.program == m.program && again.safety == m.safety && again.to_string() == printed,
            "{} does not round-trip",
            b.name
        );
    }
    within(started, Duration::from_secs(10), "10^4 ASTs and 4 models")
}

fn integrator() -> Result<String, String> {
    let sig = Signature::new(Vec::new(), vec!["x".into()]);
    let ode = |src: &str| {
        let Ok(Program::Ode(o)) = parse_program(src) else {
            unreachable!("not an ODE")
        };
        CompiledOde::compile(&o, &sig).unwrap()
    };
    let run = |o: &CompiledOde, x0: f64, cfg: FlowConfig| {
        let mut last = x0;
        let run = integrate(o, &[x0], &cfg, &mut Workspace::default(), |_, _, x| {
            last = x[0];
            ControlFlow::Continue(())
        });
        (run.unwrap().unwrap(), last)
    };

    let growth = ode("{x'=x}");
    let err = |h| {
        (run(
            &growth,
            1.0,
            FlowConfig {
                step: h,
                horizon: 1.0,
                event_tol: 1e-12,
            },
        )
        .1 - std::f64::consts::E)
            .abs()
    };
    let e = [err(0.1), err(0.05), err(0.025)];
    let (r1, r2) = (e[0] / e[1], e[1] / e[2]);
    ensure!(r1 >= 14.0 && r2 >= 14.0, "error ratios {r1:.2}, {r2:.2}");

    let (exit, _) = run(
        &ode("{x'=1 & x<=1}"),
        0.0,
        FlowConfig {
            horizon: 2.0,
            ..FlowConfig::default()
        },
    );
    ensure!(exit.end == FlowEnd::DomainExit, "no domain exit detected");
    let miss = (exit.duration() - 1.0).abs();
    ensure!(miss <= 1e-9, "exit located at {}", exit.duration());
    Ok(format!(
        "error ratios {r1:.1} and {r2:.1}; exit at t = 1 within {miss:.1e}"
    ))
}

fn builtin_models_hold() -> Result<String, String> {
    let opts = CheckOptions {
        loop_bound: 3,
        grid_points: 9,
        duration_samples: 8,
        init_samples: 3,
        step: 1e-3,
        ..CheckOptions::default()
    };
    let mut parts = Vec::new();
    for b in &BUILTIN {
        let m = CompiledModel::new(&b.parse().unwrap()).map_err(|e| e.to_string())?;
        let started = Instant::now();
        let r = check_box(&m, &opts).map_err(|e| format!("{}: {e}", b.name))?;
        let t = started.elapsed();
        ensure!(
            r.verdict == Verdict::NoViolationAtBound,
            "{}: {:?}",
            b.name,
            r.verdict
        );
        ensure!(
            t < Duration::from_secs(60),
            "{} took {:.1} s",
            b.name,
            t.as_secs_f64()
        );
        parts.push(format!("{} {:.1} s", b.name, t.as_secs_f64()));
    }
    Ok(format!(
        "NoViolationAtBound for all four ({})",
        parts.join(", ")
    ))
}

fn mutation_is_caught() -> Result<String, String> {
    let src = builtin("linear-signal").unwrap().source;
    ensure!(
        src.contains("& k1 >= 0 & k2 >= 0 }") && src.contains("g2max = 0.5"),
        "model text changed"
    );
    let src = src
        .replace("& k1 >= 0 & k2 >= 0 }", "& k1 >= 0 }")
        .replace("g2max = 0.5", "g2max = 1");
    let m = CompiledModel::new(&parse_model(&src).unwrap()).unwrap();
    let r = check_box(&m, &CheckOptions::default()).map_err(|e| e.to_string())?;
    ensure!(
        r.verdict == Verdict::CounterexampleFound,
        "verdict {:?}",
        r.verdict
    );
    let t = r.trace().unwrap();
    ensure!(
        replay(&m, t, Claim::Violates) == Ok(true),
        "trace does not replay"
    );
    Ok(format!(
        "counterexample with {} steps replays",
        t.events.len()
    ))
}

fn reports_are_deterministic() -> Result<String, String> {
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_hybridflow"))
            .env("HYBRIDFLOW_THREADS", threads)
            .args(["check", "--model", "linear-signal", "--loop-bound", "3"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(o.status.success(), "exit {:?}", o.status.code());
        Ok(o.stdout)
    };
    let outs = [run("1")?, run("1")?, run("4")?, run("4")?];
    ensure!(!outs[0].is_empty(), "empty report");
    ensure!(outs.iter().all(|o| *o == outs[0]), "reports differ");
    Ok(format!("4 runs, {} identical bytes each", outs[0].len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("fundamental diagram identity", fundamental_diagram),
        ("merge conservation", merge_conservation),
        ("diverge conservation", diverge_conservation),
        ("hand-derived flux vectors", hand_vectors),
        ("parser round trip", parser_round_trip),
        ("integrator order and exit detection", integrator),
        ("builtin models hold at the bound", builtin_models_hold),
        ("mutation sensitivity", mutation_is_caught),
        ("determinism", reports_are_deterministic),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
