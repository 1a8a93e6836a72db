use std::collections::BTreeMap;
use std::ops::ControlFlow;

use hybridflow::checker::initial_states;
use hybridflow::junction::{diverge_flux, linear_flux, merge_flux, MergeCapacities, TurnRatios};
use hybridflow::models::{builtin, BUILTIN};
use hybridflow::semantics::flow::integrate;
use hybridflow::semantics::{
    eval_formula, CompiledModel, CompiledOde, FlowConfig, FlowEnd, Signature, State, Workspace,
};
use hybridflow::simulate::{simulate, SimError, SimOptions};
use hybridflow::syntax::{parse_program, Formula, Program};
use hybridflow::testing;
use proptest::prelude::*;

fn compiled(name: &str) -> CompiledModel {
    CompiledModel::new(&builtin(name).unwrap().parse().unwrap()).unwrap()
}

fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn builtin_models_have_the_expected_lanes() {
    let lanes = [
        ("linear-signal", 2),
        ("linear-busstop", 2),
        ("diverge", 3),
        ("merge", 3),
    ];
    for (name, n) in lanes {
        let m = builtin(name).unwrap().parse().unwrap();
        let odes = m.program.odes();
        assert_eq!(odes.len(), 1, "{name}");
        assert_eq!(odes[0].equations.len(), n, "{name}");
        assert!(odes[0].equations.iter().all(|(v, _)| v.starts_with('k')));
        let c = CompiledModel::new(&m).unwrap();
        assert!(!initial_states(&c, 3).unwrap().is_empty());
    }
    assert_eq!(BUILTIN.len(), 4);
    assert!(builtin("roundabout").is_none());
}

#[test]
fn initial_grid_of_the_linear_junction() {
    let m = compiled("linear-signal");
    let init = initial_states(&m, 3).unwrap();
    assert_eq!(init.len(), 9);
    for s in &init {
        assert_eq!(s.get("f1"), Some(0.0));
        assert_eq!(s.get("pi"), Some(0.0));
    }
}

#[test]
fn linear_model_flux_matches_the_junction_law() {
    let m = compiled("linear-signal");
    let opts = SimOptions {
        pins: map(&[("pi", 1.0), ("f1", 0.0), ("g2", 0.0)]),
        init: map(&[("k1", 0.2), ("k2", 0.0)]),
        horizon: 0.5,
        ..SimOptions::default()
    };
    let t = simulate(&m, &opts).unwrap();
    let flux = linear_flux(0.2, 0.5, 1.0).unwrap();
    let k1 = t.final_state.get("k1").unwrap();
    let k2 = t.final_state.get("k2").unwrap();
    assert!((k1 - (0.2 - 0.5 * flux)).abs() < 1e-12, "{k1}");
    assert!((k2 - 0.5 * flux).abs() < 1e-12, "{k2}");
}

#[test]
fn bus_stop_scales_the_flux() {
    let m = compiled("linear-busstop");
    let base = SimOptions {
        pins: map(&[("P", 0.3), ("f1", 0.0), ("g2", 0.0)]),
        init: map(&[("k1", 0.4), ("k2", 0.0)]),
        horizon: 0.1,
        ..SimOptions::default()
    };
    let t = simulate(&m, &base).unwrap();
    let expected = 0.1 * linear_flux(0.4, 0.5, 0.3).unwrap();
    assert!((t.final_state.get("k2").unwrap() - expected).abs() < 1e-12);

    let other = SimOptions {
        constants: map(&[("psi", 0.6)]),
        pins: map(&[("P", 0.6), ("f1", 0.0), ("g2", 0.0)]),
        ..base
    };
    let t = simulate(&m, &other).unwrap();
    let expected = 0.1 * linear_flux(0.4, 0.5, 0.6).unwrap();
    assert!((t.final_state.get("k2").unwrap() - expected).abs() < 1e-12);
}

#[test]
fn diverge_model_flux_matches_the_junction_law() {
    let m = compiled("diverge");
    let opts = SimOptions {
        pins: map(&[("f0", 0.0), ("g1", 0.0), ("g2", 0.0)]),
        init: map(&[("k0", 0.4), ("k1", 0.0), ("k2", 0.0)]),
        horizon: 0.25,
        ..SimOptions::default()
    };
    let t = simulate(&m, &opts).unwrap();
    let f = diverge_flux(0.4, 0.5, 0.5, &TurnRatios::straight(0.5).unwrap(), 1.0).unwrap();
    let s = &t.final_state;
    assert!((s.get("g0").unwrap() - f.g0).abs() < 1e-12);
    assert!((s.get("f1").unwrap() - f.f1).abs() < 1e-12);
    assert!((s.get("f2").unwrap() - f.f2).abs() < 1e-12);
    assert!((s.get("k1").unwrap() - 0.25 * f.f1).abs() < 1e-12);
}

#[test]
fn merge_model_flux_matches_the_junction_law() {
    let m = compiled("merge");
    let opts = SimOptions {
        pins: map(&[("f1", 0.0), ("f2", 0.0), ("g3", 0.0)]),
        init: map(&[("k1", 0.3), ("k2", 0.4), ("k3", 0.0)]),
        horizon: 0.25,
        ..SimOptions::default()
    };
    let t = simulate(&m, &opts).unwrap();
    let f = merge_flux(0.3, 0.4, 0.5, &MergeCapacities::new(0.5, 0.5).unwrap()).unwrap();
    let s = &t.final_state;
    assert!((s.get("f3").unwrap() - f.f3).abs() < 1e-12);
    assert!((s.get("g1").unwrap() - f.g1).abs() < 1e-12);
    assert!((s.get("g2").unwrap() - f.g2).abs() < 1e-12);
    assert_eq!(
        (s.get("g1").unwrap() + s.get("g2").unwrap()).to_bits(),
        s.get("f3").unwrap().to_bits()
    );
}

#[test]
fn simulation_needs_every_random_choice() {
    let m = compiled("diverge");
    let opts = SimOptions {
        pins: map(&[("f0", 0.0), ("g1", 0.0)]),
        ..SimOptions::default()
    };
    assert_eq!(simulate(&m, &opts), Err(SimError::Unpinned("g2".into())));
}

#[test]
fn discrete_successors_of_the_signal_choice() {
    let m = compiled("linear-signal");
    let s = initial_states(&m, 1).unwrap().remove(0);
    let p = parse_program("pi := 1 ++ pi := 0").unwrap();
    let succ = m.successors_discrete(&s, &p, 9).unwrap();
    let pis: Vec<f64> = succ.iter().map(|(s, _)| s.get("pi").unwrap()).collect();
    assert_eq!(pis, [1.0, 0.0]);
    let p = parse_program("g2 := *; ?(g2 < 0.2)").unwrap();
    assert_eq!(m.successors_discrete(&s, &p, 9).unwrap().len(), 4);
}

fn ode(src: &str, vars: &[&str]) -> CompiledOde {
    let sig = Signature::new(Vec::new(), vars.iter().map(|v| v.to_string()).collect());
    let Program::Ode(o) = parse_program(src).unwrap() else {
        panic!("not an ODE")
    };
    CompiledOde::compile(&o, &sig).unwrap()
}

fn endpoint(o: &CompiledOde, x0: &[f64], cfg: &FlowConfig) -> (f64, FlowEnd, Vec<f64>) {
    let mut last = x0.to_vec();
    let run = integrate(o, x0, cfg, &mut Workspace::default(), |_, _, x| {
        last = x.to_vec();
        ControlFlow::Continue(())
    })
    .unwrap()
    .unwrap();
    (run.duration(), run.end, last)
}

#[test]
fn rk4_error_shrinks_sixteenfold() {
    let o = ode("{x'=x}", &["x"]);
    let err = |h| {
        let (_, _, x) = endpoint(
            &o,
            &[1.0],
            &FlowConfig {
                step: h,
                horizon: 1.0,
                event_tol: 1e-12,
            },
        );
        (x[0] - std::f64::consts::E).abs()
    };
    let e = [err(0.1), err(0.05), err(0.025)];
    assert!(e[0] / e[1] >= 14.0 && e[1] / e[2] >= 14.0, "{e:?}");
}

#[test]
fn domain_exit_is_located() {
    let o = ode("{x'=1 & x<=1}", &["x"]);
    for step in [1e-3, 0.3, 0.07] {
        let (t, end, x) = endpoint(
            &o,
            &[0.0],
            &FlowConfig {
                step,
                horizon: 5.0,
                event_tol: 1e-9,
            },
        );
        assert_eq!(end, FlowEnd::DomainExit);
        assert!((t - 1.0).abs() <= 1e-9, "step {step}: {t}");
        assert!(x[0] <= 1.0);
    }
}

fn with_values(f: &Formula, g: &Formula, values: &[f64]) -> State {
    let mut vars = f.free_vars();
    vars.extend(g.free_vars());
    let pairs: Vec<(&str, f64)> = vars
        .iter()
        .zip(values.iter().cycle())
        .map(|(n, v)| (n.as_str(), *v))
        .collect();
    State::from_pairs(&pairs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn de_morgan(a in testing::qf_formula(), b in testing::qf_formula(), vals in prop::collection::vec(-3.0f64..3.0, 1..6)) {
        let s = with_values(&a, &b, &vals);
        let lhs = eval_formula(&s, &Formula::not(Formula::and(a.clone(), b.clone())));
        let rhs = eval_formula(&s, &Formula::or(Formula::not(a.clone()), Formula::not(b.clone())));
        prop_assert_eq!(lhs.is_ok(), rhs.is_ok());
        if let (Ok(l), Ok(r)) = (lhs, rhs) {
            prop_assert_eq!(l, r);
        }
        let lhs = eval_formula(&s, &Formula::implies(a.clone(), b.clone()));
        let rhs = eval_formula(&s, &Formula::or(Formula::not(a), b));
        if let (Ok(l), Ok(r)) = (lhs, rhs) {
            prop_assert_eq!(l, r);
        }
    }
}
