//! Acceptance run: every headline criterion at its pinned tolerance, one
//! PASS/FAIL line each. Runs without the libtest harness so the lines are
//! always printed.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use babelbot_core::engine::*;
use babelbot_core::executor::*;
use babelbot_core::gateway::{
    run_bench, BenchOptions, EventKind, Gateway, GatewayConfig, GatewayParts, VirtualClock,
};
use babelbot_core::langid::{LanguageTag, Script};
use babelbot_core::metrics::*;
use babelbot_core::perception::*;
use babelbot_core::simulator::*;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn mock_end_to_end() -> Check {
    let corpus = FixtureCorpus::bundled();
    let langs: BTreeSet<&str> = corpus.records().iter().map(|r| r.lang.as_str()).collect();
    let cats: BTreeSet<&str> = corpus
        .records()
        .iter()
        .filter_map(|r| r.category.as_deref())
        .collect();
    ensure!(corpus.len() == 200, "corpus has {} records", corpus.len());
    ensure!(langs.len() == 10, "corpus has {} languages", langs.len());
    ensure!(
        cats == BTreeSet::from(["C_r", "G_n", "O_n", "Q_i", "W_c"]),
        "categories {cats:?}"
    );
    let wall = Instant::now();
    let s = run_bench(GatewayConfig::default(), &corpus, &BenchOptions::default())
        .map_err(|e| e.to_string())?;
    let secs = wall.elapsed().as_secs_f64();
    let r = s.report.ok_or("bench did not finish")?;
    let o = &r.overall;
    ensure!(o.ipa == 1.0, "IPA {}", o.ipa);
    ensure!(o.tsr >= 0.95, "TSR {}", o.tsr);
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "n={} IPA={:.3} TSR={:.3} in {secs:.2} s",
        o.n, o.ipa, o.tsr
    ))
}

fn random_motion(rng: &mut ChaCha8Rng) -> ActionPrimitive {
    match rng.gen_range(0..4) {
        0 => ActionPrimitive::MoveLinear {
            direction: if rng.gen_bool(0.5) {
                LinearDirection::Forward
            } else {
                LinearDirection::Backward
            },
            distance: rng.gen_range(0.1..2.0),
            speed: Some(rng.gen_range(0.2..1.0)),
        },
        1 => ActionPrimitive::Rotate {
            direction: if rng.gen_bool(0.5) {
                TurnDirection::Left
            } else {
                TurnDirection::Right
            },
            angle_deg: rng.gen_range(5.0..360.0),
            angular_speed_deg: None,
        },
        2 => ActionPrimitive::PatternMove {
            shape: PatternShape::Circle {
                radius: rng.gen_range(0.2..1.5),
            },
            speed: None,
        },
        _ => ActionPrimitive::NavigateToCoords {
            x: rng.gen_range(-6.0..6.0),
            y: rng.gen_range(-6.0..6.0),
            z: 0.0,
            speed: None,
        },
    }
}

/// Executor level: 100 random multistep plans never move the robot without
/// approval, and declined plans leave an all-skipped trace. Gateway level:
/// every fixture plan that asks for confirmation, declined, emits no pose
/// event and leaves the robot where it was.
fn confirmation_gate() -> Check {
    let world = World::from_map(&bundled_map("open").unwrap()).unwrap();
    let exec = Executor::default();
    let en = LanguageTag::new("en", Script::Latin, 1.0).unwrap();
    let info = TurnInfo {
        session_id: "gate".into(),
        turn: 1,
        language: "en".into(),
        base_ms: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..100 {
        let n = rng.gen_range(2..5);
        let actions: Vec<_> = (0..n).map(|_| random_motion(&mut rng)).collect();
        let plan = ActionPlan::new(actions, en.clone(), Provenance::Mock);
        ensure!(plan.requires_confirmation, "plan {k} skipped the gate");
        let mut rt = RobotRuntime::new(world.clone(), PerceptionRig::synthetic(k));
        let mut spy = TwistSpy::default();
        let r = exec.execute_plan(&plan, false, &mut rt, &info, &AtomicBool::new(false), &mut spy);
        ensure!(r == Err(ExecError::NotApproved), "plan {k}: {r:?}");
        ensure!(spy.twists.is_empty(), "plan {k}: twists before approval");
        ensure!(rt.sim.state.pose == world.start, "plan {k} moved");
        let t = discarded_trace(&plan, world.start, 0);
        ensure!(
            t.per_action.iter().all(|a| a.status == ExecStatus::Skipped)
                && t.final_pose == world.start
                && t.snapshots.is_empty()
                && t.first_response_ms.is_none(),
            "plan {k}: declined trace not empty: {t:?}"
        );
    }

    let fixtures = FixtureCorpus::bundled();
    let gw = Gateway::from_parts(
        GatewayConfig {
            realtime_factor: 0.0,
            ..GatewayConfig::default()
        },
        GatewayParts {
            client: Box::new(MockClient::new(fixtures.clone())),
            provenance: Provenance::Mock,
            fixtures: fixtures.clone(),
            clock: Arc::new(VirtualClock::new(0)),
        },
    )
    .map_err(|e| e.to_string())?;
    let mut gated = 0;
    for (i, r) in fixtures.records().iter().enumerate() {
        let id = format!("g{i}");
        gw.create_session(Some(&id)).map_err(|e| e.to_string())?;
        let start = gw.state(&id).unwrap().pose;
        let reply = gw.submit_command(&id, &r.text).map_err(|e| e.to_string())?;
        if !reply.needs_confirmation {
            continue;
        }
        gated += 1;
        let no = gw
            .lexicons()
            .get(&reply.language)
            .ok_or("no lexicon")?
            .canonical_negative()
            .to_string();
        let out = gw.confirm(&id, &no).map_err(|e| e.to_string())?;
        let (events, _rx) = gw.subscribe(&id, 0).unwrap();
        ensure!(out.decision == Some(0) && !out.executed, "{:?}: not declined", r.text);
        ensure!(
            events.iter().all(|e| e.kind != EventKind::Pose),
            "{:?}: pose events after decline",
            r.text
        );
        ensure!(gw.state(&id).unwrap().pose == start, "{:?}: robot moved", r.text);
    }
    ensure!(gated >= 20, "only {gated} gated fixture plans");
    Ok(format!("100 random plans held; {gated} declined fixture plans left the robot still"))
}

fn softmax_suite() -> Check {
    let p = class_distribution(&[0.5, 0.3], 0.07).map_err(|e| e.to_string())?;
    let oracle_err = (p[0] - SOFTMAX_ORACLE).abs();
    ensure!(oracle_err < 1e-9, "oracle case off by {oracle_err:e}");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut norm_err, mut shift_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let n = rng.gen_range(1..40);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = rng.gen_range(0.01..2.0);
        let p = class_distribution(&s, t).unwrap();
        norm_err = norm_err.max((p.iter().sum::<f64>() - 1.0).abs());
        let c = rng.gen_range(-5.0..5.0);
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let q = class_distribution(&shifted, t).unwrap();
        for (a, b) in p.iter().zip(&q) {
            shift_err = shift_err.max((a - b).abs());
        }
        let p07 = class_distribution(&s, 0.07).unwrap();
        let eta = rng.gen_range(0.0..5.0);
        let w = reweight_degradation(&p07, &vec![eta; n], 1.0).unwrap();
        ensure!(w == p07, "constant degradation {eta} changed the distribution");
    }
    ensure!(norm_err < 1e-12, "normalization off by {norm_err:e}");
    ensure!(shift_err < 1e-9, "shift changed p by {shift_err:e}");
    Ok(format!(
        "oracle diff {oracle_err:.1e}, max norm err {norm_err:.1e}, max shift diff {shift_err:.1e}"
    ))
}

fn grounding_argmax() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let scorer = LexicalScorer::bundled();
    let commands = ["go to the chair", "find the person", "the cup please", "plant", "anything"];
    for trial in 0..1000 {
        let cands = random_candidates(&mut rng);
        let cmd = commands[trial % commands.len()];
        let got = select_target(&cands, cmd, 0.6, 0.4, &scorer).map_err(|e| e.to_string())?;
        let want = exhaustive_select(&cands, cmd, 0.6, 0.4, &scorer);
        ensure!(
            (got.track_id, got.label_index) == want,
            "trial {trial}: got {:?}, brute force {want:?}",
            (got.track_id, got.label_index)
        );
    }
    Ok("1000 candidate sets match brute force".into())
}

fn kinematics() -> Check {
    let world = World::from_map(&bundled_map("open").unwrap()).unwrap();
    let twist = TwistCommand {
        v: 1.0,
        omega: 1.0,
        duration: 2.0 * std::f64::consts::PI,
    };
    let mut s = RobotState::at(world.start);
    let mut t = 0.0;
    while t < twist.duration {
        let dt = DEFAULT_DT.min(twist.duration - t);
        s = step(&s, &twist, dt, &world.inflated).map_err(|e| e.to_string())?;
        t += dt;
    }
    let closure = distance_between(s.pose.xy(), world.start.xy());
    ensure!(closure < 1e-6, "circle closure {closure:e} m");

    let exec = Executor::default();
    let en = LanguageTag::new("en", Script::Latin, 1.0).unwrap();
    let info = TurnInfo {
        session_id: "k".into(),
        turn: 1,
        language: "en".into(),
        base_ms: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut reached, mut worst): (usize, f64) = (0, 0.0);
    for k in 0..50 {
        let goal = loop {
            let g = [rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)];
            if world.inflated.is_free(g[0], g[1])
                && world
                    .objects
                    .iter()
                    .all(|o| distance_between(g, [o.x, o.y]) > o.radius + 0.5)
            {
                break g;
            }
        };
        let mut rt = RobotRuntime::new(world.clone(), PerceptionRig::synthetic(k));
        let plan = ActionPlan::new(
            vec![ActionPrimitive::NavigateToCoords {
                x: goal[0],
                y: goal[1],
                z: 0.0,
                speed: Some(1.0),
            }],
            en.clone(),
            Provenance::Mock,
        );
        let tr = exec
            .execute_plan(&plan, true, &mut rt, &info, &AtomicBool::new(false), &mut NullObserver)
            .map_err(|e| e.to_string())?;
        let err = distance_between(tr.final_pose.xy(), goal);
        worst = worst.max(err);
        if tr.s_n == 1 && err <= 0.2 {
            reached += 1;
        }
    }
    ensure!(reached == 50, "{reached}/50 goals reached");
    Ok(format!(
        "circle closure {closure:.1e} m; 50/50 goals within 0.2 m (worst {worst:.3} m)"
    ))
}

fn astar_vs_dijkstra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut reachable = 0;
    for trial in 0..100 {
        let g = random_grid(&mut rng, [0.1, 0.2, 0.3, 0.35][trial % 4]);
        let free: Vec<(i64, i64)> = (0..50)
            .flat_map(|j| (0..50).map(move |i| (i, j)))
            .filter(|&(i, j)| !g.occupied(i, j))
            .collect();
        let s = free[rng.gen_range(0..free.len())];
        let t = free[rng.gen_range(0..free.len())];
        let ours = astar_cells(&g, s, t).map(|(_, c)| (c.straight, c.diagonal));
        let oracle = dijkstra_oracle(&g, s, t);
        ensure!(ours == oracle, "grid {trial}: {ours:?} vs {oracle:?}");
        reachable += usize::from(ours.is_some());
    }
    Ok(format!("100 grids equal cost ({reachable} reachable)"))
}

fn kalman() -> Check {
    let params = KalmanParams::default();
    let v = [0.4, -0.25, 0.05];
    let dt = 0.1;
    let mut track = TrackedObject::new(1, "cart", [0.0; 3], &params, 1.0, 0);
    let mut err = f64::INFINITY;
    for k in 1..=20 {
        let t = k as f64 * dt;
        let truth = [v[0] * t, v[1] * t, v[2] * t];
        track = track_update(&track, truth, dt, &params.q(), &params.r()).map_err(|e| e.to_string())?;
        err = (0..3).map(|i| (track.state[i] - truth[i]).powi(2)).sum::<f64>().sqrt();
    }
    ensure!(err < 1e-6, "position error {err:e} after 20 updates");

    let mut track = TrackedObject::new(
        1,
        "ball",
        [0.0; 3],
        &KalmanParams {
            initial_velocity_var: 1.0,
            ..params
        },
        1.0,
        0,
    );
    track.state[3] = 1.0;
    let (mut x, mut p) = (track.state, track.covariance);
    let mut diff: f64 = 0.0;
    for (z, dt) in [([0.6, 0.1, 0.0], 0.5), ([1.1, 0.15, 0.02], 0.5)] {
        track = track_update(&track, z, dt, &params.q(), &params.r()).map_err(|e| e.to_string())?;
        oracle::step(&mut x, &mut p, z, dt, params.q_c, params.sigma * params.sigma);
        for i in 0..6 {
            diff = diff.max((track.state[i] - x[i]).abs());
            for j in 0..6 {
                diff = diff.max((track.covariance[i][j] - p[i][j]).abs());
            }
        }
    }
    for i in 0..6 {
        diff = diff.max((track.state[i] - KALMAN_FROZEN_STATE[i]).abs());
    }
    diff = diff.max((track.covariance_trace() - KALMAN_FROZEN_TRACE).abs());
    ensure!(diff < 1e-9, "two-step trace differs by {diff:e}");
    Ok(format!("20-update error {err:.1e} m; two-step max diff {diff:.1e}"))
}

fn metric_oracles() -> Check {
    let mut bleu_diff: f64 = 0.0;
    for (r, h, want) in BLEU_ORACLE {
        let got = bleu(&ws(r), &ws(h)).map_err(|e| e.to_string())?;
        bleu_diff = bleu_diff.max((got - want).abs());
    }
    ensure!(bleu_diff <= 1e-6, "BLEU off by {bleu_diff:e}");

    let suite = ter_suite();
    for (r, h) in &suite {
        let (ours, oracle) = (ter_edits(r, h), oracle_ter_edits(r, h));
        ensure!(ours == oracle, "TER {r:?}/{h:?}: {ours} vs {oracle}");
    }

    let m = |v: f64| Param::new(v, Unit::Meter);
    ensure!(per(&[m(2.0), m(3.0)], &[m(2.0), m(4.0)]) == 0.5, "PER reference branch");
    ensure!(per(&[m(2.0), m(3.0)], &[m(2.0)]) == 0.0, "PER truncation");
    ensure!(per(&[], &[m(1.0)]) == 1.0, "PER hypothesis-only branch");
    ensure!(per(&[], &[]) == 0.0, "PER empty branch");

    let ipa = ipa_from_scores(&[(0.5, 1.0)], &IpaParams::default()).map_err(|e| e.to_string())?;
    ensure!(ipa == 0.0, "0.4*0.5 + 0.6*1 = 0.8 counted as correct");
    let ipa = ipa_from_scores(&[(1.0, 0.85)], &IpaParams::default()).map_err(|e| e.to_string())?;
    ensure!(ipa == 1.0, "0.4 + 0.6*0.85 = 0.91 counted as incorrect");
    Ok(format!(
        "BLEU max diff {bleu_diff:.1e}; TER {} pairs equal; PER 3 branches; IPA threshold exact",
        suite.len()
    ))
}

fn art_bookkeeping() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for n in [1usize, 7, 100, 500] {
        let mut total = 0u64;
        let recs: Vec<InteractionRecord> = (0..n)
            .map(|k| {
                let gap = rng.gen_range(0..5000u64);
                total += gap;
                InteractionRecord {
                    lang: "en".into(),
                    text: format!("c{k}"),
                    t_ins_ms: 1_000_000 + 7919 * k as u64,
                    t_res_ms: 1_000_000 + 7919 * k as u64 + gap,
                    gold_actions: vec![],
                    pred_actions: vec![],
                    success: true,
                }
            })
            .collect();
        let want_ms = total as f64 / n as f64;
        let got_ms = art(&recs).map_err(|e| e.to_string())? * 1000.0;
        worst = worst.max((got_ms - want_ms).abs());
    }
    ensure!(worst < 1.0, "ART off by {worst} ms");
    Ok(format!("max deviation {worst:.1e} ms"))
}

fn durability() -> Check {
    let corpus = FixtureCorpus::bundled();
    let opts = BenchOptions {
        latency_ms: 1800,
        ..BenchOptions::default()
    };
    let config = |dir: &std::path::Path| GatewayConfig {
        data_dir: Some(dir.to_path_buf()),
        ..GatewayConfig::default()
    };
    let e = |e: babelbot_core::GatewayError| e.to_string();
    let straight = tempfile::tempdir().unwrap();
    let full = run_bench(config(straight.path()), &corpus, &opts).map_err(e)?;
    let expected = full.report.ok_or("straight run incomplete")?.to_csv().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bench.jsonl");
    let mut resumed = Vec::new();
    for cut in [23, 81, 150] {
        let done = run_bench(
            config(dir.path()),
            &corpus,
            &BenchOptions {
                stop_after: Some(cut - resumed.iter().sum::<usize>()),
                ..opts.clone()
            },
        )
        .map_err(e)?;
        resumed.push(done.ran);
        let mut bytes = std::fs::read(&log).unwrap();
        bytes.extend_from_slice(b"{\"lang\":\"de\",\"text\":\"Fahre");
        std::fs::write(&log, bytes).unwrap();
    }
    let last = run_bench(config(dir.path()), &corpus, &opts).map_err(e)?;
    let report = last.report.ok_or("resumed run incomplete")?;
    let csv = report.to_csv().unwrap();
    ensure!(csv == expected, "resumed report differs:\n{csv}\nvs\n{expected}");

    let replayed = build_report(
        &load_interactions(&log).map_err(|e| e.to_string())?,
        &TokenF1Scorer,
        &IpaParams::default(),
    )
    .map_err(|e| e.to_string())?
    .to_csv()
    .unwrap();
    ensure!(replayed == expected, "replayed JSONL gives a different report");
    Ok(format!(
        "3 interruptions with torn tails; resumed and replayed CSV byte-equal (ART {:.3} s)",
        report.overall.art_s
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("mock end-to-end corpus", mock_end_to_end),
        ("confirmation gate", confirmation_gate),
        ("softmax and degradation suite", softmax_suite),
        ("grounding argmax vs brute force", grounding_argmax),
        ("kinematics and goal tolerance", kinematics),
        ("A* vs Dijkstra", astar_vs_dijkstra),
        ("Kalman tracking", kalman),
        ("metric oracles", metric_oracles),
        ("ART bookkeeping", art_bookkeeping),
        ("durability across restarts", durability),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
