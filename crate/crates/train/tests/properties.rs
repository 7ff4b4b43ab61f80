use citss_core::config::BackboneKind;
use citss_core::corpus::{CitationContext, DatasetId};
use citss_nn::tape::{Mat, Tape};
use citss_nn::tokenizer::{Tokenizer, MASK};
use citss_train::backbone::{encode_prompt, PromptTemplate, Readout};
use citss_train::head::infonce;
use proptest::prelude::*;

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "parser", "corpus", "model", "task"];

fn sentence(ws: &[usize]) -> String {
    ws.iter().map(|&w| WORDS[w]).collect::<Vec<_>>().join(" ") + "."
}

fn context() -> impl Strategy<Value = CitationContext> {
    let sent = prop::collection::vec(0..WORDS.len(), 1..8);
    (prop::collection::vec(sent.clone(), 0..4), sent.clone(), prop::collection::vec(sent, 0..4)).prop_map(
        |(pre, cit, post)| {
            let mut s: Vec<String> = pre.iter().map(|w| sentence(w)).collect();
            let c = s.len();
            s.push(format!("{} #CITATION_TAG", sentence(&cit)));
            s.extend(post.iter().map(|w| sentence(w)));
            CitationContext::new("p", s, c, None, DatasetId::Custom).unwrap()
        },
    )
}

fn tokenizer() -> Tokenizer {
    Tokenizer::build(WORDS.iter().copied().chain([". #CITATION_TAG [MASK]"]), 50)
}

proptest! {
    #[test]
    fn truncation_keeps_citance_and_readout(ctx in context(), max_len in 12usize..60, enc in any::<bool>()) {
        let tk = tokenizer();
        let kind = if enc { BackboneKind::Encoder } else { BackboneKind::Decoder };
        let t = if enc { PromptTemplate::p1() } else { PromptTemplate::new("{T} answer:", Readout::LastPosition).unwrap() };
        let citance = tk.encode(ctx.citance());
        match encode_prompt(&t, &ctx, &tk, kind, max_len) {
            Ok(e) => {
                prop_assert!(e.ids.len() <= max_len);
                prop_assert!(e.ids.windows(citance.len()).any(|w| w == citance.as_slice()));
                if enc {
                    prop_assert_eq!(e.ids[e.readout], MASK);
                } else {
                    prop_assert_eq!(e.readout, e.ids.len() - 1);
                }
                let full: usize = ctx.sentences.iter().map(|s| tk.encode(s).len()).sum();
                if e.truncated > 0 {
                    prop_assert_eq!(e.ids.len(), max_len);
                }
                prop_assert!(e.truncated <= full - citance.len());
            }
            Err(err) => prop_assert!(err.to_string().starts_with("p:")),
        }
    }

    #[test]
    fn tape_infonce_nonnegative_and_permutation_invariant(
        vals in prop::collection::vec(-3.0f64..3.0, 32),
        tau in 0.1f64..10.0,
        rot in 0usize..4,
    ) {
        let z = Mat::from_shape_vec((4, 4), vals[..16].to_vec()).unwrap();
        let zp = Mat::from_shape_vec((4, 4), vals[16..].to_vec()).unwrap();
        let perm: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
        let mut t = Tape::new();
        let (a, b) = (t.constant(z), t.constant(zp));
        let l = infonce(&mut t, a, b, tau);
        let (pa, pb) = (t.select_rows(a, &perm), t.select_rows(b, &perm));
        let lp = infonce(&mut t, pa, pb, tau);
        prop_assert!(t.scalar(l) >= 0.0);
        prop_assert!((t.scalar(l) - t.scalar(lp)).abs() < 1e-9);
    }
}
