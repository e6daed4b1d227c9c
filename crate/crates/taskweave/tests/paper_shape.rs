//! Full-scale shape run: one seed diversified to 2000 states over 3 hops
//! (K=2700, m=10), each paired with 5 contexts, yielding 10000 records.
//!
//! This is the heaviest test in the suite (~250k mock completions,
//! ~10-15 s); run it alone with
//! `cargo test -p taskweave --test paper_shape -- --nocapture`.

use std::time::Instant;

use taskweave::pipeline::{artifacts, run_pipeline, PipelineConfig, RunInputs};
use taskweave_core::bfs::BfsParams;

#[test]
fn one_seed_to_ten_thousand_records() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    // Seed: four sentences so the synthesizer extracts three constraints.
    let seed_path = dir.path().join("seed.jsonl");
    std::fs::write(
        &seed_path,
        "{\"id\":\"seed-1\",\"instruction\":\"Write a travel ad for a trip to the mountains. Focus on the scenery. Keep the tone vivid. Stay under 150 words.\"}\n",
    )
    .unwrap();

    // Five task-specific contexts.
    let contexts_path = dir.path().join("contexts.jsonl");
    let contexts: String = (0..5)
        .map(|i| format!("{{\"id\":\"ctx-{i}\",\"context\":\"Context passage number {i} with scenery notes.\"}}\n"))
        .collect();
    std::fs::write(&contexts_path, contexts).unwrap();

    // A corpus whose writing bucket is deep enough for K=2700 unique sets.
    let corpus_path = dir.path().join("corpus.jsonl");
    let mut corpus = String::new();
    for b in 0..140 {
        let constraint = format!("must include journey detail number {b:03}");
        corpus.push_str(&format!(
            "{{\"id\":\"cw-{b}\",\"result\":{{\"complex\":true,\"language\":[\"en\"],\"tasks\":[{{\"task_type\":\"Creative Writing\",\"base_query\":\"Write travel piece {b}\",\"constraints\":[{{\"text\":\"{constraint}\",\"category\":\"Content\",\"canonical_key\":\"{constraint}\"}}]}}],\"raw\":\"\"}}}}\n"
        ));
    }
    std::fs::write(&corpus_path, corpus).unwrap();

    let mut config = PipelineConfig::mock_default();
    config.bfs = BfsParams {
        unique_limit: 2700,
        op_repeats: 10,
        sample_size: 2000,
        max_hops: 3,
        rng_seed: 7,
        include_seed: false,
    };
    config.context_fanout = 5;
    config.workers = 8;

    let inputs = RunInputs {
        seed_path,
        contexts_path,
        db_dir: None,
        corpus_path: Some(corpus_path),
        out_dir: dir.path().join("run"),
    };
    let manifest = run_pipeline(&config, &inputs, None).unwrap();

    let stage = |name: &str| manifest.stage(name).unwrap();
    assert_eq!(stage("decompose").output_count, 1);
    assert_eq!(stage("augment").output_count, 2000);
    assert_eq!(stage("validate").output_count, 10_000);
    assert_eq!(stage("filter").output_count, 10_000);

    let sft_lines = std::fs::read_to_string(inputs.out_dir.join(artifacts::SFT))
        .unwrap()
        .lines()
        .count();
    assert_eq!(sft_lines, 10_000);
    println!("full-scale shape run completed in {:?}", started.elapsed());
}
