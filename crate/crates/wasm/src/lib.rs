//! Browser bindings: sentence cropping, keyphrase perturbation and an InfoNCE
//! temperature explorer. Each export takes plain values and returns JSON.

use citss_core::augment::{apply_crop, kp_transform, sample_sc_seeded, sc_candidates, PerturbOp};
use citss_core::corpus::{CitationContext, DatasetId};
use citss_core::head::{infonce, softmax};
use citss_core::rng::{self, Stream};
use citss_core::stk::{find_occurrences, StkBase, StkMention};
use citss_core::synonyms::SynonymBase;
use citss_core::synthetic::lexicon;
use rand::Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const DEMO_ID: &str = "demo";
const POOL_ID: &str = "pool";

/// One sentence per non-empty line.
fn context(text: &str, citance_index: usize) -> Result<CitationContext, String> {
    let sentences: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    CitationContext::new(DEMO_ID, sentences, citance_index, None, DatasetId::Custom).map_err(|e| e.to_string())
}

pub fn sc_crops_json(text: &str, citance_index: usize) -> Result<String, String> {
    let ctx = context(text, citance_index)?;
    let candidates: Vec<Value> = sc_candidates(&ctx)
        .into_iter()
        .map(|c| json!({"b": c.b, "v": c.v, "text": apply_crop(&ctx, c, 0).text()}))
        .collect();
    Ok(json!({"before": ctx.before(), "after": ctx.after(), "candidates": candidates}).to_string())
}

pub fn sc_sample_json(text: &str, citance_index: usize, epoch: usize, seed: u64) -> Result<String, String> {
    let ctx = context(text, citance_index)?;
    serde_json::to_string(&sample_sc_seeded(&ctx, epoch, seed)).map_err(|e| e.to_string())
}

/// Lexicon keyphrases found in the context.
fn detect(ctx: &CitationContext) -> Vec<StkMention> {
    let text = ctx.text();
    lexicon()
        .into_iter()
        .filter(|(s, _)| !find_occurrences(&text, s).is_empty())
        .map(|(s, t)| StkMention::new(s, t))
        .collect()
}

/// The demo base: detected mentions for the input plus the whole lexicon
/// as the replacement pool.
fn demo_base(mentions: &[StkMention]) -> StkBase {
    let pool: Vec<StkMention> = lexicon().into_iter().map(|(s, t)| StkMention::new(s, t)).collect();
    let mut base = StkBase::default();
    base.insert(POOL_ID, pool);
    base.insert(DEMO_ID, mentions.to_vec());
    base
}

#[allow(clippy::too_many_arguments)]
pub fn kp_json(
    text: &str,
    citance_index: usize,
    op: &str,
    beta: f64,
    gamma: f64,
    epoch: usize,
    seed: u64,
) -> Result<String, String> {
    let ctx = context(text, citance_index)?;
    let op = PerturbOp::parse(op).map_err(|e| e.to_string())?;
    let mentions = detect(&ctx);
    let base = demo_base(&mentions);
    let mut rng = rng::derive(seed, Stream::Perturb, DEMO_ID, epoch as u64);
    let out = kp_transform(&ctx, &mentions, op, beta, gamma, &base, &SynonymBase::builtin(), epoch, &mut rng)
        .map_err(|e| e.to_string())?;
    Ok(json!({"mentions": mentions, "sample": out, "text": out.text()}).to_string())
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let (u, v): (f64, f64) = (rng.random_range(f64::EPSILON..1.0), rng.random());
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Random unit-norm embeddings `z` and positives `z⁺ = a·z + (1−a)·noise`,
/// renormalized. Reports the loss at `tau`, the row-wise softmax over
/// scaled similarities, and the loss over a log-spaced temperature sweep.
pub fn infonce_json(batch: usize, dim: usize, alignment: f64, tau: f64, seed: u64) -> Result<String, String> {
    if batch == 0 || dim == 0 {
        return Err("batch and dimension must be positive".into());
    }
    if !(0.0..=1.0).contains(&alignment) {
        return Err(format!("alignment must lie in [0, 1], got {alignment}"));
    }
    let mut rng = rng::global(seed, Stream::Other(0), 0);
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let z: Vec<Vec<f64>> = (0..batch).map(|_| unit((0..dim).map(|_| gaussian(&mut rng)).collect())).collect();
    let zp: Vec<Vec<f64>> = z
        .iter()
        .map(|row| unit(row.iter().map(|x| alignment * x + (1.0 - alignment) * gaussian(&mut rng)).collect()))
        .collect();
    let loss = infonce(&z, &zp, tau).map_err(|e| e.to_string())?;
    let sims: Vec<Vec<f64>> = z.iter().map(|a| zp.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect()).collect();
    let probs: Vec<Vec<f64>> = sims.iter().map(|r| softmax(&r.iter().map(|s| s / tau).collect::<Vec<_>>())).collect();
    let sweep: Vec<Value> = (0..=40)
        .map(|i| 10f64.powf(-2.0 + 3.0 * i as f64 / 40.0))
        .map(|t| json!({"tau": t, "loss": infonce(&z, &zp, t).unwrap_or(f64::NAN)}))
        .collect();
    Ok(json!({
        "loss": loss,
        "ln_batch": (batch as f64).ln(),
        "similarities": sims,
        "probabilities": probs,
        "sweep": sweep,
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sc_crops(text: &str, citance_index: usize) -> Result<String, JsError> {
    js(sc_crops_json(text, citance_index))
}

#[wasm_bindgen]
pub fn sc_sample(text: &str, citance_index: usize, epoch: usize, seed: u64) -> Result<String, JsError> {
    js(sc_sample_json(text, citance_index, epoch, seed))
}

#[wasm_bindgen]
pub fn kp_perturb(
    text: &str,
    citance_index: usize,
    op: &str,
    beta: f64,
    gamma: f64,
    epoch: usize,
    seed: u64,
) -> Result<String, JsError> {
    js(kp_json(text, citance_index, op, beta, gamma, epoch, seed))
}

#[wasm_bindgen]
pub fn infonce_explore(batch: usize, dim: usize, alignment: f64, tau: f64, seed: u64) -> Result<String, JsError> {
    js(infonce_json(batch, dim, alignment, tau, seed))
}
