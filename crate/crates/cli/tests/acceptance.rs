//! Prints one PASS/FAIL line per acceptance criterion and exits non-zero if
//! any fails.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsim_cli::console::{Script, Session};
use semsim_cli::{resolve_model, run_command, sidecar_path, RunConfig, EXIT_HALTED, EXIT_OK};
use semsim_core::entity::{EntityRef, TransitionalKind};
use semsim_core::frames::{ElementValue, FrameError, FrameRegistry, FLUIDIC_MOTION};
use semsim_core::models::cardio::BLOOD;
use semsim_core::models::scenario::{Directive, Scenario};
use semsim_core::models::waterfall::{build_waterfall, WaterfallConfig, LOCATION, WATER_PORTION};
use semsim_core::topology::ConduitKind;
use semsim_core::validation::{derive_triples, CONNECTION_RULE};
use semsim_core::{save_model_file, Kernel, KernelConfig, Mode, Policy, StepReport};
use tempfile::TempDir;

type Check = Result<(), String>;

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn run(config: &RunConfig) -> i32 {
    run_command(config, Box::new(io::sink()), &mut io::sink())
}

fn traced(dir: &Path, file: &str, model: &str) -> RunConfig {
    let mut c = RunConfig::new(model);
    c.trace = Some(dir.join(file));
    c
}

fn trace_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(str::to_string)
        .collect()
}

fn reports(trace: &Path) -> Vec<StepReport> {
    fs::read_to_string(sidecar_path(trace))
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).expect("sidecar lines are step reports"))
        .collect()
}

fn write_scenario(dir: &Path, name: &str, scenario: &Scenario) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(scenario).unwrap()).unwrap();
    path
}

/// The original waterfall loop, transcribed: final (X, Y, Location) per
/// portion.
fn loop_oracle(upper_bed_length: u32, vertical_drop: u32, portions: u32) -> Vec<(i64, i64, String)> {
    let mut out = Vec::new();
    for _ in 0..portions {
        let (mut x, mut y) = (0i64, 0i64);
        let mut location = "null".to_string();
        for _ in 0..upper_bed_length {
            x += 10;
            y -= 1;
            location = "upper".into();
        }
        assert!(upper_bed_length == 0 || location == "upper");
        for _ in 0..vertical_drop {
            x += 1;
            y -= 10;
            location = "drop".into();
        }
        assert!(vertical_drop == 0 || location == "drop");
        location = "pool".into();
        out.push((x, y, location));
    }
    out
}

fn waterfall_finals(kernel: &Kernel) -> Vec<(i64, i64, String)> {
    let w = &kernel.model().world;
    let mut ps: Vec<_> = w
        .live_portions()
        .filter(|p| p.kind.as_deref() == Some(WATER_PORTION))
        .collect();
    ps.sort_by_key(|p| p.birth_index);
    ps.iter()
        .map(|p| {
            let c = p.coords.unwrap_or_default();
            (c.x, c.y, p.states[LOCATION].clone())
        })
        .collect()
}

fn waterfall_reproduction(dir: &Path) -> Check {
    let mut config = traced(dir, "c1.txt", "waterfall");
    config.portions = Some(10);
    let started = Instant::now();
    let code = run(&config);
    let elapsed = started.elapsed();
    ensure(code == EXIT_OK, || format!("exit {code}"))?;
    ensure(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    let expected: Vec<String> = (0..10).map(|i| format!("{i} pool")).collect();
    let lines = trace_lines(config.trace.as_ref().unwrap());
    ensure(lines == expected, || format!("trace {lines:?}"))?;

    let mut kernel = Kernel::new(
        build_waterfall(&WaterfallConfig::default(), Some(10)).unwrap(),
        KernelConfig::default(),
    );
    kernel.run(None).map_err(|e| e.to_string())?;
    let finals = waterfall_finals(&kernel);
    let oracle = loop_oracle(1000, 100, 10);
    ensure(finals == oracle, || format!("finals {finals:?}"))?;
    ensure(finals.iter().all(|f| (f.0, f.1) == (10100, -2000)), || "final coordinates".into())?;
    let w = &kernel.model().world;
    for p in w.live_portions() {
        let me = EntityRef::Portion(p.id);
        let mut seq = vec!["null".to_string()];
        for t in &w.transitionals {
            if t.kind == TransitionalKind::StateChange && t.subjects.contains(&me) {
                if let Some(l) = t.note.strip_prefix("Location=") {
                    if seq.last().map(String::as_str) != Some(l) {
                        seq.push(l.to_string());
                    }
                }
            }
        }
        ensure(seq == ["null", "upper", "drop", "pool"], || format!("{} went {seq:?}", p.id))?;
    }
    Ok(())
}

fn waterfall_generalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let l: u32 = rng.gen_range(1..=2000);
        let d: u32 = rng.gen_range(1..=500);
        let model = build_waterfall(&WaterfallConfig::new(l, d), Some(1)).map_err(|e| e.to_string())?;
        let mut kernel = Kernel::new(model, KernelConfig::default());
        kernel.run(None).map_err(|e| e.to_string())?;
        let (x, y, _) = waterfall_finals(&kernel).remove(0);
        let want = (10 * i64::from(l) + i64::from(d), -(i64::from(l) + 10 * i64::from(d)));
        ensure((x, y) == want, || format!("L={l} D={d}: got ({x}, {y}), want {want:?}"))?;
    }
    Ok(())
}

fn cardio_vocabulary(dir: &Path) -> Check {
    let mut config = traced(dir, "c3.txt", "cardio");
    config.steps = Some(200);
    let code = run(&config);
    ensure(code == EXIT_OK, || format!("exit {code}"))?;
    let model = resolve_model("cardio", None).map_err(|e| e.to_string())?;
    let lines = trace_lines(config.trace.as_ref().unwrap());
    if let Some(stray) = lines.iter().find(|l| !model.in_vocabulary(l)) {
        return Err(format!("undeclared line {stray:?}"));
    }
    let seen: BTreeSet<&str> = lines.iter().map(String::as_str).collect();
    let mut required: Vec<String> = [
        "LeftAtrium",
        "LeftVentricle",
        "MedullaCap",
        "CellCap",
        "RightAtrium",
        "RightVentricle",
        "AlvCap",
    ]
    .iter()
    .map(|c| format!("pushed {c}Blood"))
    .collect();
    required.extend(
        [
            "trigger updates",
            "SANode pulse",
            "inhale cycle",
            "past phrenicNerve trigger",
            "into diaphragm contract",
            "completed inhale ExternalAir to Nose Air",
            "completed inhale Nose Air to Alv Air",
            "mixing external air",
            "diffusion check",
            "AlvCapBlood O2 diffusion",
            "CellCapBlood O2 diffusion",
        ]
        .map(String::from),
    );
    let missing: Vec<&String> = required.iter().filter(|r| !seen.contains(r.as_str())).collect();
    ensure(missing.is_empty(), || format!("never emitted {missing:?}"))
}

fn causal_ordering() -> Check {
    for seed in 0..20 {
        let model = resolve_model("cardio", None).map_err(|e| e.to_string())?;
        let config = KernelConfig {
            seed,
            mode: Mode::Concurrent,
            policy: Policy::Warn,
        };
        let mut kernel = Kernel::new(model, config);
        kernel.run(Some(200)).map_err(|e| e.to_string())?;
        let (mut signals, mut contractions) = (0, 0);
        for e in kernel.trace() {
            match e.line.as_str() {
                "past phrenicNerve trigger" => signals += 1,
                "into diaphragm contract" => {
                    contractions += 1;
                    ensure(contractions <= signals, || {
                        format!("seed {seed} step {}: contraction without a signal", e.step)
                    })?;
                }
                _ => {}
            }
        }
        for r in kernel.reports() {
            let pos = |line: &str| r.events.iter().position(|e| e.line == line);
            if let Some(nose) = pos("completed inhale Nose Air to Alv Air") {
                let outside = pos("completed inhale ExternalAir to Nose Air");
                ensure(outside.is_some_and(|o| o < nose), || {
                    format!("seed {seed} step {}: inhale out of order", r.step)
                })?;
            }
            let diffusions = r.events.iter().filter(|e| e.line == "AlvCapBlood O2 diffusion").count();
            let exchanges: Vec<_> = r
                .firings
                .iter()
                .filter(|f| f.enabled && f.mechanism == "GasExchangeAlv")
                .collect();
            ensure(diffusions == exchanges.len(), || format!("seed {seed} step {}: diffusion without exchange", r.step))?;
            for f in exchanges {
                let observed: Vec<&str> = f.guard.iter().map(|g| g.observed.as_str()).collect();
                ensure(observed == ["low", "high"] && f.guard.iter().all(|g| g.holds), || {
                    format!("seed {seed} step {}: diffusion read {observed:?}", r.step)
                })?;
            }
        }
    }
    Ok(())
}

fn conservation() -> Check {
    let model = resolve_model("cardio", None).map_err(|e| e.to_string())?;
    let mut kernel = Kernel::new(model, KernelConfig::default());
    for _ in 0..1000 {
        let step = kernel.step().map_err(|e| e.to_string())?.step;
        let w = &kernel.model().world;
        let blood = w.live_portions().filter(|p| p.substance == BLOOD).count();
        ensure(blood == 7, || format!("step {step}: {blood} blood portions"))?;
    }
    Ok(())
}

fn determinism_and_replay(dir: &Path) -> Check {
    let mut a = traced(dir, "c6a.txt", "cardio");
    a.steps = Some(120);
    let mut b = a.clone();
    b.trace = Some(dir.join("c6b.txt"));
    ensure(run(&a) == EXIT_OK && run(&b) == EXIT_OK, || "runs failed".into())?;
    let read = |p: &Option<PathBuf>| fs::read(p.as_ref().unwrap()).unwrap_or_default();
    ensure(!read(&a.trace).is_empty() && read(&a.trace) == read(&b.trace), || {
        "traces differ between identical runs".into()
    })?;

    let mut c = a.clone();
    c.trace = Some(dir.join("c6c.txt"));
    let mut out = Vec::new();
    let mut session = Session::new(&c, &mut out).map_err(|e| e.to_string())?;
    let script = Script::new([
        "pause",
        "inspect cardio.MedullaCapBlood.CO2Level",
        "inspect diaphragm.Tension",
        "resume",
    ]);
    let mut script = script;
    let code = session.run(&mut script).map_err(|e| e.to_string())?;
    ensure(code == EXIT_OK, || format!("console exit {code}"))?;
    ensure(read(&c.trace) == read(&a.trace), || {
        "console trace differs from the uninterrupted run".into()
    })
}

fn two_phase_validation(dir: &Path) -> Check {
    for (file, model, steps) in [("c7a.txt", "cardio", Some(75)), ("c7b.txt", "waterfall", None)] {
        let mut config = traced(dir, file, model);
        config.steps = steps;
        config.portions = Some(3);
        ensure(run(&config) == EXIT_OK, || format!("{model} run failed"))?;
        let rs = reports(config.trace.as_ref().unwrap());
        let expected = steps.unwrap_or(4) as usize;
        ensure(rs.len() == expected, || format!("{model}: {} reports for {expected} steps", rs.len()))?;
        ensure(rs.iter().enumerate().all(|(i, r)| r.step == i as u64), || "report steps out of order".into())?;
    }

    let cut = Scenario::new(
        "cut-left-heart",
        vec![Directive::RemoveConnection {
            from: "LeftAtrium".into(),
            to: "LeftVentricle".into(),
            conduit: ConduitKind::Fluid,
        }],
    )
    .at(5);
    let mut config = traced(dir, "c7c.txt", "cardio");
    config.steps = Some(50);
    config.scenario = Some(write_scenario(dir, "cut.json", &cut));
    let code = run(&config);
    ensure(code == EXIT_HALTED, || format!("exit {code}, expected {EXIT_HALTED}"))?;
    let rs = reports(config.trace.as_ref().unwrap());
    let last = rs.last().ok_or("no reports")?;
    ensure(last.halted && last.step == 8, || format!("halted report {}", last.summary()))?;
    ensure(!last.validation.violations.is_empty(), || "halt without violations".into())?;

    let model = resolve_model("cardio", None).map_err(|e| e.to_string())?;
    let mut kernel = Kernel::new(model, KernelConfig::default());
    kernel.run(Some(1000)).map_err(|e| e.to_string())?;
    let connection_violations = kernel
        .reports()
        .iter()
        .flat_map(|r| &r.validation.violations)
        .filter(|v| v.rule == CONNECTION_RULE)
        .count();
    ensure(connection_violations == 0, || format!("{connection_violations} connection violations"))
}

fn scenarios(dir: &Path) -> Check {
    let mut config = traced(dir, "c8a.txt", "cardio");
    config.steps = Some(100);
    config.scenario = Some(write_scenario(dir, "heart.json", &Scenario::heart_stop().at(20)));
    ensure(run(&config) == EXIT_OK, || "heart-stop run failed".into())?;
    let rs = reports(config.trace.as_ref().unwrap());
    let applied = rs
        .iter()
        .find(|r| r.scenarios.iter().any(|s| s == "heart-stop"))
        .map(|r| r.step)
        .ok_or("heart-stop never applied")?;
    let after = rs.iter().filter(|r| r.step >= applied).flat_map(|r| &r.events);
    let (mut pushed, mut inhale) = (0, 0);
    for e in after {
        if e.line.starts_with("pushed") {
            pushed += 1;
        }
        if e.line == "inhale cycle" {
            inhale += 1;
        }
    }
    ensure(pushed == 0 && inhale > 0, || format!("{pushed} pushes, {inhale} inhale cycles after step {applied}"))?;

    let mut config = traced(dir, "c8b.txt", "waterfall");
    config.portions = Some(3);
    config.scenario = Some(write_scenario(dir, "freeze.json", &Scenario::freeze()));
    ensure(run(&config) == EXIT_OK, || "freeze run failed".into())?;
    let lines = trace_lines(config.trace.as_ref().unwrap());
    ensure(lines.is_empty(), || format!("frozen water still moved: {lines:?}"))?;
    let rs = reports(config.trace.as_ref().unwrap());
    let fluid_failure = rs.iter().flat_map(|r| r.guard_failures()).any(|f| {
        f.mechanism == "WaterFlowing" && f.failing().any(|g| g.clause.starts_with("fluid("))
    });
    ensure(fluid_failure, || "no fluidity guard failure reported".into())
}

fn frames_equivalence(dir: &Path) -> Check {
    let mut hand = traced(dir, "c9a.txt", "waterfall");
    hand.portions = Some(3);
    let mut framed = traced(dir, "c9b.txt", "waterfall-frames");
    framed.portions = Some(3);
    ensure(run(&hand) == EXIT_OK && run(&framed) == EXIT_OK, || "runs failed".into())?;
    let (a, b) = (trace_lines(hand.trace.as_ref().unwrap()), trace_lines(framed.trace.as_ref().unwrap()));
    ensure(!a.is_empty() && a == b, || format!("{a:?} vs {b:?}"))?;

    let model = build_waterfall(&WaterfallConfig::default(), Some(1)).map_err(|e| e.to_string())?;
    let mut frames = FrameRegistry::standard();
    let elements = [
        ("Fluid", ElementValue::Entity("water".into())),
        ("Source", ElementValue::Entity("bedInlet".into())),
        ("Goal", ElementValue::Entity("pool".into())),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    match frames.bind(FLUIDIC_MOTION, elements, &model.world) {
        Err(FrameError::MissingCoreElement(e)) if e == "Path" => Ok(()),
        other => Err(format!("binding without Path gave {other:?}")),
    }
}

fn round_trip(dir: &Path) -> Check {
    let original = resolve_model("cardio", None).map_err(|e| e.to_string())?;
    let path = dir.join("cardio.json");
    save_model_file(&original, &path).map_err(|e| e.to_string())?;
    let reloaded = resolve_model(path.to_str().unwrap(), None).map_err(|e| e.to_string())?;
    let (a, b) = (derive_triples(&original.world), derive_triples(&reloaded.world));
    ensure(a == b, || {
        let only_a = a.difference(&b).count();
        let only_b = b.difference(&a).count();
        format!("{only_a} triples lost, {only_b} gained")
    })
}

fn main() -> ExitCode {
    let dir = TempDir::new().expect("temp dir");
    let d = dir.path();
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);
    let criteria: [Criterion; 10] = [
        ("waterfall reproduction", Box::new(|| waterfall_reproduction(d))),
        ("waterfall generalization", Box::new(waterfall_generalization)),
        ("cardio vocabulary", Box::new(|| cardio_vocabulary(d))),
        ("causal ordering", Box::new(causal_ordering)),
        ("conservation", Box::new(conservation)),
        ("determinism and replay", Box::new(|| determinism_and_replay(d))),
        ("two-phase validation", Box::new(|| two_phase_validation(d))),
        ("scenarios", Box::new(|| scenarios(d))),
        ("frames equivalence", Box::new(|| frames_equivalence(d))),
        ("model file round-trip", Box::new(|| round_trip(d))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(()) => println!("criterion {:>2} PASS  {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of 10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
