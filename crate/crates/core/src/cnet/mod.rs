//! Profile-level classification by prompting a language model with the
//! selected posts.

mod client;
mod mock;
mod prompt;

use std::thread;

use thiserror::Error;

pub use client::{
    CompletionBackend, HttpBackend, LevelPrediction, LlmClient, LlmEndpoint, SamplingParams, WireMode,
};
pub use mock::{mock_classify, mock_generate, MockBackend, MockMarkers, DEFAULT_HIGH_MARKER, DEFAULT_LOW_MARKER};
pub use prompt::{
    build_prompt, parse_level, render_post_line, Prompt, PromptSpec, TraitContext, DEFAULT_SYSTEM_TEXT,
    DEFAULT_TEMPLATE,
};

use crate::corpus::{Post, Trait};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("cannot build a prompt without posts")]
    EmptyPrompt,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("prompt was not produced by the prompt builder")]
    UnrecognizedPrompt,
    #[error("endpoint configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The classifier: prompt wording, trait context and an endpoint client.
#[derive(Clone, Debug)]
pub struct Cnet {
    pub client: LlmClient,
    pub spec: PromptSpec,
    pub context: TraitContext,
}

impl Cnet {
    pub fn new(client: LlmClient, target: Trait) -> Self {
        Self {
            client,
            spec: PromptSpec::default(),
            context: TraitContext::default_for(target),
        }
    }

    pub fn target(&self) -> Trait {
        self.context.target
    }

    pub fn prompt(&self, posts: &[&Post]) -> Result<Prompt, LlmError> {
        build_prompt(&self.spec, &self.context, posts)
    }

    /// Classifies a set of posts; they are rendered in the order given.
    pub fn predict(&self, posts: &[&Post]) -> Result<LevelPrediction, LlmError> {
        self.client.classify(&self.prompt(posts)?)
    }

    /// Classifies several post sets with at most `parallelism` requests in
    /// flight. Results keep the input order.
    pub fn predict_many(&self, jobs: &[Vec<&Post>]) -> Vec<Result<LevelPrediction, LlmError>> {
        let workers = self.client.endpoint.parallelism.max(1).min(jobs.len().max(1));
        if workers == 1 {
            return jobs.iter().map(|j| self.predict(j)).collect();
        }
        let mut out: Vec<Option<Result<LevelPrediction, LlmError>>> = (0..jobs.len()).map(|_| None).collect();
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    s.spawn(move || {
                        (w..jobs.len())
                            .step_by(workers)
                            .map(|i| (i, self.predict(&jobs[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("classification worker panicked") {
                    out[i] = Some(r);
                }
            }
        });
        out.into_iter().map(|r| r.expect("every job is assigned")).collect()
    }
}
