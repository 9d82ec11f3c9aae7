use std::collections::BTreeSet;

use semsim_core::kernel::{COMMIT_LINE, COMMIT_RULE};
use semsim_core::model_file::{from_json, to_json};
use semsim_core::models::cardio::{
    build_cardio, CardioConfig, BLOOD, BLOOD_COMPARTMENTS, CO2, CONSERVATION_RULE, O2,
};
use semsim_core::models::scenario::Directive;
use semsim_core::validation::{derive_triples, CONNECTION_RULE};
use semsim_core::{Kernel, KernelConfig, KernelError, Mode, Model, Policy, Scenario, World};

fn cardio() -> Model {
    build_cardio(&CardioConfig::default()).unwrap()
}

fn kernel(config: KernelConfig) -> Kernel {
    Kernel::new(cardio(), config)
}

fn level<'a>(world: &'a World, compartment: &str, property: &str) -> &'a str {
    let id = world.topology.compartments[compartment].contents[0];
    &world.portion(id).unwrap().properties[property].level
}

#[test]
fn every_trace_line_is_in_the_vocabulary_and_all_appear() {
    let mut k = kernel(KernelConfig::default());
    k.run(Some(200)).unwrap();
    let vocab = k.model().vocabulary();
    let mut seen = BTreeSet::new();
    for e in k.trace() {
        assert!(k.model().in_vocabulary(&e.line), "stray line {:?}", e.line);
        seen.insert(e.line.clone());
    }
    for expected in [
        "SANode pulse",
        "pushed AlvCapBlood",
        "pushed MedullaCapBlood",
        COMMIT_LINE,
        "AlvCapBlood O2 diffusion",
        "CellCapBlood O2 diffusion",
        "past phrenicNerve trigger",
        "into diaphragm contract",
        "completed inhale ExternalAir to Nose Air",
        "completed exhale Nose Air to ExternalAir",
    ] {
        assert!(seen.contains(expected), "never saw {expected}");
        assert!(vocab.iter().any(|v| v == expected));
    }
}

#[test]
fn thousand_steps_conserve_blood_and_respect_connections() {
    let mut k = kernel(KernelConfig {
        policy: Policy::Halt,
        ..KernelConfig::default()
    });
    let summary = k.run(Some(1000)).unwrap();
    assert_eq!(summary.halted_at, None);
    assert_eq!(k.reports().len(), 1000);
    for r in k.reports() {
        assert!(r.validation.passed(), "{}", r.summary());
    }
    let w = &k.model().world;
    assert_eq!(w.live_portions().filter(|p| p.substance == BLOOD).count(), 7);
    for c in BLOOD_COMPARTMENTS {
        assert_eq!(w.topology.compartments[c].contents.len(), 1);
    }
}

#[test]
fn reports_one_per_step_with_stable_summary_prefix() {
    let mut k = kernel(KernelConfig::default());
    k.run(Some(12)).unwrap();
    for (i, r) in k.reports().iter().enumerate() {
        assert_eq!(r.step, i as u64);
        assert!(r.summary().starts_with(&format!("step {i}:")));
    }
}

#[test]
fn deterministic_runs_are_repeatable() {
    let run = || {
        let mut k = kernel(KernelConfig::default());
        k.run(Some(150)).unwrap();
        (k.trace().to_vec(), derive_triples(&k.model().world))
    };
    assert_eq!(run(), run());
}

#[test]
fn concurrent_mode_keeps_causal_order_for_many_seeds() {
    for seed in 0..20 {
        let mut k = kernel(KernelConfig {
            seed,
            mode: Mode::Concurrent,
            policy: Policy::Halt,
        });
        let summary = k.run(Some(120)).unwrap();
        assert_eq!(summary.halted_at, None, "seed {seed}");
        let trace = k.trace();
        let mut phrenic = 0usize;
        let mut contractions = 0usize;
        for e in trace {
            match e.line.as_str() {
                "past phrenicNerve trigger" => phrenic += 1,
                "into diaphragm contract" => {
                    contractions += 1;
                    assert!(contractions <= phrenic, "seed {seed}: contraction before its signal");
                }
                _ => {}
            }
        }
        for step in 0..120 {
            let lines: Vec<&str> = trace
                .iter()
                .filter(|e| e.step == step)
                .map(|e| e.line.as_str())
                .collect();
            let pos = |l: &str| lines.iter().position(|x| *x == l);
            if let (Some(a), Some(b)) = (
                pos("completed inhale ExternalAir to Nose Air"),
                pos("completed inhale Nose Air to Alv Air"),
            ) {
                assert!(a < b, "seed {seed} step {step}");
            }
            if let Some(pulse) = pos("SANode pulse") {
                let commit = pos(COMMIT_LINE).expect("commit after a pulse");
                assert!(pulse < commit);
            }
        }
        let w = &k.model().world;
        assert_eq!(w.live_portions().filter(|p| p.substance == BLOOD).count(), 7);
    }
}

#[test]
fn enabled_firings_match_their_trace_lines() {
    let mut k = kernel(KernelConfig::default());
    k.run(Some(100)).unwrap();
    for r in k.reports() {
        for e in &r.events {
            if e.source != "commit" {
                assert!(r.fired(&e.source), "{} traced without firing", e.source);
            }
        }
        for f in r.firings.iter().filter(|f| f.enabled) {
            assert!(f.guard.iter().all(|g| g.holds));
        }
    }
}

#[test]
fn blood_gas_levels_stay_mirrored() {
    let mut k = kernel(KernelConfig::default());
    for _ in 0..300 {
        k.step().unwrap();
        for p in k.model().world.live_portions().filter(|p| p.substance == BLOOD) {
            let o2 = p.properties[O2].level.as_str();
            let co2 = p.properties[CO2].level.as_str();
            assert_ne!(o2, co2, "portion {} out of mirror", p.id);
        }
    }
}

#[test]
fn blood_leaving_lungs_is_oxygenated_only_after_an_exchange() {
    let mut k = kernel(KernelConfig::default());
    let mut exchanged_since_push = false;
    let mut oxygenated_departures = 0;
    for _ in 0..400 {
        let r = k.step().unwrap().clone();
        if r.fired("GasExchangeAlv") {
            exchanged_since_push = true;
        }
        if r.fired("HeartbeatPush") {
            let w = &k.model().world;
            let arrived = level(w, "LeftAtrium", O2);
            assert_eq!(arrived == "high", exchanged_since_push, "step {}", r.step);
            if arrived == "high" {
                oxygenated_departures += 1;
            }
            // body tissue always takes the oxygen before blood moves on
            assert_eq!(level(w, "RightAtrium", O2), "low");
            exchanged_since_push = false;
        }
    }
    assert!(oxygenated_departures > 0);
}

#[test]
fn side_effects_do_not_change_enablement() {
    let with = cardio();
    let mut without = cardio();
    for m in without.mechanisms.values_mut() {
        *m = m.without_side_effects();
    }
    let mut a = Kernel::new(with, KernelConfig::default());
    let mut b = Kernel::new(without, KernelConfig::default());
    for _ in 0..300 {
        let ra = a.step().unwrap().clone();
        let rb = b.step().unwrap().clone();
        let pairs = |r: &semsim_core::StepReport| {
            r.firings
                .iter()
                .map(|f| (f.mechanism.clone(), f.enabled))
                .collect::<Vec<_>>()
        };
        assert_eq!(pairs(&ra), pairs(&rb), "step {}", ra.step);
    }
}

#[test]
fn heart_stop_freezes_circulation_but_breathing_goes_on() {
    let mut k = kernel(KernelConfig::default());
    k.run(Some(10)).unwrap();
    k.schedule_scenario(Scenario::heart_stop()).unwrap();
    k.run(Some(100)).unwrap();
    let late: Vec<&str> = k
        .trace()
        .iter()
        .filter(|e| e.step >= 10)
        .map(|e| e.line.as_str())
        .collect();
    assert!(!late.iter().any(|l| l.starts_with("pushed") || *l == "SANode pulse"));
    assert!(late.contains(&"inhale cycle"));
}

#[test]
fn removing_a_circuit_edge_halts_at_the_next_push() {
    let mut k = kernel(KernelConfig {
        policy: Policy::Halt,
        ..KernelConfig::default()
    });
    let cut = Scenario::new(
        "cut",
        vec![Directive::RemoveConnection {
            from: "LeftAtrium".into(),
            to: "LeftVentricle".into(),
            conduit: semsim_core::topology::ConduitKind::Fluid,
        }],
    )
    .at(5);
    k.schedule_scenario(cut).unwrap();
    let summary = k.run(Some(50)).unwrap();
    assert_eq!(summary.halted_at, Some(8));
    assert_eq!(k.halted_at(), Some(8));
    assert_eq!(k.step().unwrap_err(), KernelError::Halted { step: 8 });
    let r = k.reports().last().unwrap();
    let rules: Vec<&str> = r.validation.violations.iter().map(|v| v.rule.as_str()).collect();
    assert!(rules.contains(&CONNECTION_RULE) || rules.contains(&COMMIT_RULE), "{rules:?}");
    assert!(!k.trace().iter().any(|e| e.step == 8 && e.line.starts_with("pushed")));
}

#[test]
fn manual_firing_respects_guards() {
    let mut k = kernel(KernelConfig::default());
    // resting blood in the body capillary is deoxygenated
    let err = k.fire("CellRespiration").unwrap_err();
    assert!(matches!(err, KernelError::FiredWhileDisabled { .. }));
    assert!(k.enabled("HeartbeatPush").unwrap());
    let out = k.fire("HeartbeatPush").unwrap();
    assert!(out.events.iter().any(|e| e.line == COMMIT_LINE));
    assert!(k.trace().is_empty());
}

#[test]
fn signals_need_a_nerve() {
    let mut k = kernel(KernelConfig::default());
    assert!(k.send_signal("Medulla", "Diaphragm", "contract").is_ok());
    let err = k.send_signal("LeftAtrium", "LeftVentricle", "contract").unwrap_err();
    assert!(matches!(err, KernelError::NoNervePath { .. }));
}

#[test]
fn conservation_rule_catches_a_lost_portion() {
    let mut m = cardio();
    let id = m.world.topology.compartments["CellCap"].contents[0];
    m.world.portion_mut(id).unwrap().alive = false;
    let report = m.rules.validate(&m.world, 0, Policy::Warn);
    assert!(report.violations.iter().any(|v| v.rule == CONSERVATION_RULE));
}

#[test]
fn file_round_trip_preserves_triples_and_behaviour() {
    let original = cardio();
    let loaded = from_json(&to_json(&original)).unwrap();
    assert_eq!(derive_triples(&original.world), derive_triples(&loaded.world));
    let mut a = Kernel::new(original, KernelConfig::default());
    let mut b = Kernel::new(loaded, KernelConfig::default());
    a.run(Some(60)).unwrap();
    b.run(Some(60)).unwrap();
    assert_eq!(a.trace(), b.trace());
    assert_eq!(derive_triples(&a.model().world), derive_triples(&b.model().world));
}
