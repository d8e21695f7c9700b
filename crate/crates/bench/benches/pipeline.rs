use babelbot_bench::{candidates, instructions, office_world, reply_lines, translation_pairs};
use babelbot_core::engine::{parse_action_lines, FixtureCorpus, Provenance};
use babelbot_core::gateway::{run_bench, BenchOptions, GatewayConfig};
use babelbot_core::langid::{detect_language, LanguageProfileSet, LanguageTag};
use babelbot_core::metrics::{bleu, ter};
use babelbot_core::perception::{class_distribution, select_target, LexicalScorer};
use babelbot_core::simulator::plan_path;
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn langid(c: &mut Criterion) {
    let profiles = LanguageProfileSet::bundled();
    let texts = instructions();
    c.bench_function("langid/detect_200", |b| {
        b.iter(|| {
            for (t, _) in &texts {
                let _ = black_box(detect_language(t, &profiles));
            }
        })
    });
}

fn parse(c: &mut Criterion) {
    let replies: Vec<_> = reply_lines()
        .into_iter()
        .map(|(lines, lang)| (lines, LanguageTag::from_override(&lang).unwrap()))
        .collect();
    c.bench_function("engine/parse_replies", |b| {
        b.iter(|| {
            for (lines, tag) in &replies {
                black_box(parse_action_lines(lines, tag, Provenance::Mock).unwrap());
            }
        })
    });
}

fn planning(c: &mut Criterion) {
    let world = office_world();
    c.bench_function("simulator/astar_kitchen_to_bathroom", |b| {
        b.iter(|| black_box(plan_path(&world.inflated, [2.0, 10.0], [17.0, 2.5]).unwrap()))
    });
}

fn perception(c: &mut Criterion) {
    let scores: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin() * 0.3).collect();
    c.bench_function("perception/softmax_80", |b| {
        b.iter(|| black_box(class_distribution(black_box(&scores), 0.07).unwrap()))
    });
    let cands = candidates(20, 7);
    let scorer = LexicalScorer::bundled();
    c.bench_function("perception/select_target_20", |b| {
        b.iter(|| black_box(select_target(&cands, "go to the chair", 0.6, 0.4, &scorer).unwrap()))
    });
}

fn metrics(c: &mut Criterion) {
    let pairs = translation_pairs();
    c.bench_function("metrics/bleu", |b| {
        b.iter(|| {
            for (r, h) in &pairs {
                black_box(bleu(r, h).unwrap());
            }
        })
    });
    c.bench_function("metrics/ter", |b| {
        b.iter(|| {
            for (r, h) in &pairs {
                black_box(ter(r, h).unwrap());
            }
        })
    });
}

fn end_to_end(c: &mut Criterion) {
    let corpus = FixtureCorpus::bundled();
    let mut g = c.benchmark_group("gateway");
    g.sample_size(10);
    g.bench_function("mock_corpus_200", |b| {
        b.iter(|| {
            let s = run_bench(GatewayConfig::default(), &corpus, &BenchOptions::default()).unwrap();
            black_box(s.report.unwrap())
        })
    });
    g.finish();
}

criterion_group!(benches, langid, parse, planning, perception, metrics, end_to_end);
criterion_main!(benches);
