use crate::error::Result;

/// A chat/completion endpoint: one prompt in, one reply out.
///
/// Implementations must be shareable across worker threads; extraction
/// issues requests concurrently up to a configured in-flight limit.
pub trait TextGenerator: Sync {
    fn generate(&self, prompt: &str) -> Result<String>;
}

impl<F> TextGenerator for F
where
    F: Fn(&str) -> Result<String> + Sync,
{
    fn generate(&self, prompt: &str) -> Result<String> {
        self(prompt)
    }
}
