use citss_wasm::{infonce_json, kp_json, sc_crops_json, sc_sample_json};
use serde_json::Value;

const TEXT: &str = "Prior work studied parsing.\nWe apply a decision tree to the Brown corpus #CITATION_TAG.\nResults use BLEU.\nSee Section 5.";

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn crops_enumerate_every_shorter_window() {
    let v = parse(sc_crops_json(TEXT, 1).unwrap());
    assert_eq!((v["before"].as_u64(), v["after"].as_u64()), (Some(1), Some(2)));
    let c = v["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 2 * 3 - 1);
    assert!(c.iter().all(|x| x["text"].as_str().unwrap().contains("#CITATION_TAG")));
}

#[test]
fn sampled_crop_is_seeded() {
    assert_eq!(sc_sample_json(TEXT, 1, 2, 9).unwrap(), sc_sample_json(TEXT, 1, 2, 9).unwrap());
}

#[test]
fn kp_detects_and_abstracts() {
    let v = parse(kp_json(TEXT, 1, "ab", 1.0, 0.0, 0, 4).unwrap());
    let surfaces: Vec<&str> = v["mentions"].as_array().unwrap().iter().map(|m| m["surface"].as_str().unwrap()).collect();
    assert!(surfaces.contains(&"Brown corpus") && surfaces.contains(&"decision tree"), "{surfaces:?}");
    let text = v["text"].as_str().unwrap();
    assert!(!text.contains("Brown corpus") && text.contains("#CITATION_TAG"), "{text}");
    assert!(kp_json(TEXT, 1, "zz", 1.0, 0.0, 0, 4).is_err());
}

#[test]
fn bad_context_is_an_error() {
    assert!(sc_crops_json("no anchor here", 0).is_err());
    assert!(sc_crops_json(TEXT, 7).is_err());
}

#[test]
fn infonce_explorer_limits() {
    let v = parse(infonce_json(6, 16, 0.5, 1.0, 3).unwrap());
    let loss = v["loss"].as_f64().unwrap();
    assert!(loss >= 0.0);
    for row in v["probabilities"].as_array().unwrap() {
        let s: f64 = row.as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    // identical positives with a small temperature drive the loss to zero
    let aligned = parse(infonce_json(6, 64, 1.0, 0.01, 3).unwrap());
    assert!(aligned["loss"].as_f64().unwrap() < 1e-6);
    // a huge temperature flattens every row to ln B
    let flat = parse(infonce_json(6, 16, 0.3, 1e6, 3).unwrap());
    assert!((flat["loss"].as_f64().unwrap() - 6f64.ln()).abs() < 1e-5);
    assert_eq!(v["sweep"].as_array().unwrap().len(), 41);
    assert!(infonce_json(0, 4, 0.5, 1.0, 0).is_err());
}
