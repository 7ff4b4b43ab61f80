use std::sync::atomic::{AtomicUsize, Ordering};

use citss_core::client::TextGenerator;
use citss_core::stk::{extract_stks, write_failure_report, ExtractOptions, StkStats};
use citss_core::synthetic::{generate, PlantedResponder, SynthSpec};
use citss_core::{Error, Result};

struct Counting<G> {
    inner: G,
    calls: AtomicUsize,
}

impl<G: TextGenerator> TextGenerator for Counting<G> {
    fn generate(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(prompt)
    }
}

#[test]
fn warm_cache_makes_no_remote_calls() {
    let corpus = generate(&SynthSpec::small(30, 5), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = ExtractOptions {
        cache_dir: Some(dir.path().to_path_buf()),
        ..ExtractOptions::default()
    };
    let client = Counting { inner: PlantedResponder::default(), calls: AtomicUsize::new(0) };
    let cold = extract_stks(&corpus.split, &client, &opts).unwrap();
    assert_eq!(cold.remote_calls, corpus.split.train.len());
    assert!(cold.failures.is_empty());
    assert_eq!(cold.base.per_sample(), corpus.stk.per_sample());

    let before = client.calls.load(Ordering::SeqCst);
    let warm = extract_stks(&corpus.split, &client, &opts).unwrap();
    assert_eq!(client.calls.load(Ordering::SeqCst), before);
    assert_eq!(warm.remote_calls, 0);
    assert_eq!(warm.cache_hits, corpus.split.train.len());
    assert_eq!(warm.base, cold.base);
}

#[test]
fn only_training_samples_are_extracted() {
    let corpus = generate(&SynthSpec::small(30, 8), 9).unwrap();
    let out = extract_stks(&corpus.split, &PlantedResponder::default(), &ExtractOptions::default()).unwrap();
    for ctx in corpus.split.validation.iter().chain(&corpus.split.test) {
        assert!(!out.base.contains(&ctx.sample_id));
    }
    out.base.check_consistency().unwrap();
    let stats = StkStats::from_base(&out.base);
    assert_eq!(stats.samples, corpus.split.train.len());
}

#[test]
fn failures_degrade_to_empty_and_are_reported() {
    let corpus = generate(&SynthSpec::small(20, 0), 4).unwrap();
    let flaky = |prompt: &str| -> Result<String> {
        if prompt.contains("BLEU") {
            Err(Error::Service("rate limited".into()))
        } else if prompt.contains("CRF") {
            Ok("I cannot answer that.".into())
        } else {
            PlantedResponder::default().generate(prompt)
        }
    };
    let opts = ExtractOptions { retries: 2, ..ExtractOptions::default() };
    let out = extract_stks(&corpus.split, &flaky, &opts).unwrap();
    assert!(!out.failures.is_empty());
    for f in &out.failures {
        assert!(out.base.mentions(&f.id).is_empty());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("failures.jsonl");
    write_failure_report(&path, &out.failures).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), out.failures.len());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first.get("id").is_some() && first.get("error").is_some());
}
