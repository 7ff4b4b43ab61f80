//! Prompt rendering, tokenization with context truncation, and hidden-state
//! readout from the transformer backbone.

use std::cell::Cell;
use std::path::Path;

use citss_core::config::{BackboneConfig, BackboneKind};
use citss_core::corpus::ContextWindow;
use citss_nn::tape::{Tape, Var};
use citss_nn::tokenizer::{Tokenizer, CLS, MASK, SEP};
use citss_nn::transformer::{Bound, Transformer, TransformerConfig};
use citss_nn::ParamStore;
use rand::Rng;

use crate::{Result, TrainError};

pub const P1: &str = "{T}. [MASK].";
pub const P2: &str = "You are provided a context from a paper P citing a paper Q, with the specific citation marked as the \"#CITATION_TAG\" tag. Please analyze the citation function of the context which represents the author’s motive or purpose for citing Q. Here is the context:“{T}\". Only output one word as the answer:";

pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    MaskPosition,
    LastPosition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub body: String,
    pub readout: Readout,
}

impl PromptTemplate {
    pub fn new(body: impl Into<String>, readout: Readout) -> Result<Self> {
        let body = body.into();
        if body.matches("{T}").count() != 1 {
            return Err(TrainError::Prompt("template needs exactly one {T} placeholder".into()));
        }
        if readout == Readout::MaskPosition && body.matches(MASK_TOKEN).count() != 1 {
            return Err(TrainError::Prompt("mask readout needs exactly one [MASK] in the template".into()));
        }
        Ok(PromptTemplate { body, readout })
    }

    pub fn p1() -> Self {
        PromptTemplate::new(P1, Readout::MaskPosition).expect("valid")
    }

    pub fn p2() -> Self {
        PromptTemplate::new(P2, Readout::LastPosition).expect("valid")
    }

    /// `p1`, `p2`, or a UTF-8 file; the readout follows the backbone kind.
    pub fn resolve(spec: &str, kind: BackboneKind) -> Result<Self> {
        let readout = match kind {
            BackboneKind::Encoder => Readout::MaskPosition,
            BackboneKind::Decoder => Readout::LastPosition,
        };
        let body = match spec {
            "p1" | "P1" => P1.to_string(),
            "p2" | "P2" => P2.to_string(),
            path => std::fs::read_to_string(Path::new(path))
                .map_err(|e| TrainError::Prompt(format!("{path}: {e}")))?
                .trim_end_matches('\n')
                .to_string(),
        };
        PromptTemplate::new(body, readout)
    }

    fn parts(&self) -> (&str, &str) {
        self.body.split_once("{T}").expect("validated")
    }
}

/// The template with the context's sentences, joined by single spaces,
/// substituted at `{T}`.
pub fn render_prompt(template: &PromptTemplate, window: &impl ContextWindow) -> String {
    template.body.replace("{T}", &window.sentences().join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPrompt {
    pub ids: Vec<u32>,
    pub readout: usize,
    /// Context tokens dropped to fit the window.
    pub truncated: usize,
}

/// Tokenizes a rendered prompt into at most `max_len` ids. Over-long inputs
/// lose tokens from the start of the preceding context first, then from the
/// end of the following context; the citance and template are never cut.
pub fn encode_prompt(
    template: &PromptTemplate,
    window: &impl ContextWindow,
    tokenizer: &Tokenizer,
    kind: BackboneKind,
    max_len: usize,
) -> Result<EncodedPrompt> {
    let (prefix, suffix) = template.parts();
    let sentences = window.sentences();
    let c = window.citance_index();
    let pre_text = sentences[..c].join(" ");
    let post_text = sentences[c + 1..].join(" ");
    let mut pre = tokenizer.encode(&pre_text);
    let citance = tokenizer.encode(&sentences[c]);
    let mut post = tokenizer.encode(&post_text);
    let (head, tail) = (tokenizer.encode(prefix), tokenizer.encode(suffix));
    let specials = match kind {
        BackboneKind::Encoder => 2,
        BackboneKind::Decoder => 0,
    };
    let fixed = head.len() + citance.len() + tail.len() + specials;
    if fixed > max_len {
        return Err(TrainError::TooLong {
            sample_id: window.sample_id().to_string(),
            needed: fixed,
            max_len,
        });
    }
    let mut overflow = (fixed + pre.len() + post.len()).saturating_sub(max_len);
    let truncated = overflow;
    let cut = overflow.min(pre.len());
    pre.drain(..cut);
    overflow -= cut;
    post.truncate(post.len() - overflow);

    let mut ids = Vec::with_capacity(max_len);
    if kind == BackboneKind::Encoder {
        ids.push(CLS);
    }
    for part in [&head, &pre, &citance, &post, &tail] {
        ids.extend_from_slice(part);
    }
    if kind == BackboneKind::Encoder {
        ids.push(SEP);
    }
    let readout = match template.readout {
        Readout::MaskPosition => ids
            .iter()
            .position(|&t| t == MASK)
            .ok_or_else(|| TrainError::Prompt("mask token lost in tokenization".into()))?,
        Readout::LastPosition => ids.len() - 1 - usize::from(kind == BackboneKind::Encoder),
    };
    Ok(EncodedPrompt {
        ids,
        readout,
        truncated,
    })
}

/// The backbone as a function from a context to one `d_x` vector.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub kind: BackboneKind,
    pub template: PromptTemplate,
    pub tokenizer: Tokenizer,
    pub transformer: Transformer,
    forwards: Cell<u64>,
}

impl Backbone {
    pub fn build(
        cfg: &BackboneConfig,
        tokenizer: Tokenizer,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !cfg.name.starts_with("tiny-") && cfg.weights.is_none() {
            return Err(TrainError::Unsupported(format!(
                "backbone {:?} needs pretrained weights (backbone.weights); only tiny-* backbones can be built from scratch",
                cfg.name
            )));
        }
        let template = PromptTemplate::resolve(&cfg.prompt, cfg.kind)?;
        if cfg.kind == BackboneKind::Encoder && template.readout != Readout::MaskPosition {
            return Err(TrainError::Prompt("encoder backbones read out at the mask".into()));
        }
        let transformer = Transformer::new(
            TransformerConfig {
                vocab_size: tokenizer.vocab_size(),
                d_model: cfg.d_model,
                layers: cfg.layers,
                heads: cfg.heads,
                ffn: cfg.ffn,
                max_len: cfg.max_len,
                causal: cfg.kind == BackboneKind::Decoder,
                lora_rank: cfg.lora_rank,
                lora_alpha: cfg.lora_alpha,
            },
            store,
            rng,
        );
        Ok(Backbone {
            kind: cfg.kind,
            template,
            tokenizer,
            transformer,
            forwards: Cell::new(0),
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.transformer.config.d_model
    }

    pub fn max_len(&self) -> usize {
        self.transformer.config.max_len
    }

    pub fn prepare(&self, window: &impl ContextWindow) -> Result<EncodedPrompt> {
        encode_prompt(&self.template, window, &self.tokenizer, self.kind, self.max_len())
    }

    /// One backbone forward; returns the `1×d_x` readout row.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, prompt: &EncodedPrompt) -> Var {
        self.forwards.set(self.forwards.get() + 1);
        let h = self.transformer.forward(tape, bound, &prompt.ids);
        tape.select_rows(h, &[prompt.readout])
    }

    /// Backbone forwards since construction or the last reset.
    pub fn forward_count(&self) -> u64 {
        self.forwards.get()
    }

    pub fn reset_forward_count(&self) {
        self.forwards.set(0);
    }
}
