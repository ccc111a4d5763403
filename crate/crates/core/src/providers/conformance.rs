//! Provider conformance suite.
//!
//! Every provider, in-process or remote, must pass the same checks: response
//! shapes and signs, probability bounds, append-only sessions and unit-norm
//! embeddings. The decision checks assume the provider is configured so at
//! least three Yes/No readouts are available in a fresh session.

use super::protocol::*;
use super::{templates, Provider, ProviderError};
use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConformanceError {
    #[error("{check}: provider error: {source}")]
    Provider {
        check: &'static str,
        #[source]
        source: ProviderError,
    },
    #[error("{check}: {message}")]
    Failed { check: &'static str, message: String },
}

type Outcome = Result<(), ConformanceError>;

fn fail(check: &'static str, message: impl Into<String>) -> ConformanceError {
    ConformanceError::Failed {
        check,
        message: message.into(),
    }
}

fn call<T>(check: &'static str, r: Result<T, ProviderError>) -> Result<T, ConformanceError> {
    r.map_err(|source| ConformanceError::Provider { check, source })
}

fn batch(texts: &[&str]) -> Vec<NodeText> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| NodeText::new(NodeId(i as u32), *t))
        .collect()
}

pub fn check_summarize(p: &dyn Provider) -> Outcome {
    const CHECK: &str = "summarize";
    let req = SummarizeRequest {
        batch: batch(&[
            "Mrs. Tabitha Twitchit expects fine company for tea.",
            "Tabitha turns her kittens into the garden.",
        ]),
        template_id: templates::SUMMARIZE.id.to_string(),
    };
    let resp = call(CHECK, p.summarize(&req))?;
    resp.check(req.batch.len()).map_err(|m| fail(CHECK, m))?;
    if resp.generated_tokens.is_empty() {
        return Err(fail(CHECK, "no tokens generated"));
    }
    let again = call(CHECK, p.summarize(&req))?;
    if again.generated_text != resp.generated_text {
        return Err(fail(CHECK, "identical requests produced different text"));
    }
    Ok(())
}

pub fn check_session(p: &dyn Provider) -> Outcome {
    const CHECK: &str = "session";
    let created = call(
        CHECK,
        p.create_session(&SessionRequest {
            query: "Where does the mother send her kittens?".into(),
            template_id: templates::DECIDE.id.to_string(),
        }),
    )?;
    let id = created.session_id;
    if id.is_empty() {
        return Err(fail(CHECK, "empty session_id"));
    }

    // First readout over an empty context, then two ordered appends.
    let appends: [&[&str]; 3] = [
        &[],
        &["Tabitha dresses the kittens in clean clothes."],
        &["The kittens go to the garden.", "Tom bursts several buttons."],
    ];
    for nodes in appends {
        let req = DecideRequest {
            session_id: id.clone(),
            append_nodes: batch(nodes),
            want_decision: true,
        };
        let resp = call(CHECK, p.decide(&req))?;
        resp.check(&req).map_err(|m| fail(CHECK, m))?;
    }

    let answer = call(CHECK, p.answer(&AnswerRequest { session_id: id.clone() }))?;
    if let Some(tokens) = answer.tokens {
        if tokens.prompt == 0 {
            return Err(fail(CHECK, "answer reports a zero-token second-turn prompt"));
        }
    }
    call(CHECK, p.close_session(&id))?;

    match p.decide(&DecideRequest {
        session_id: id.clone(),
        append_nodes: vec![],
        want_decision: true,
    }) {
        Err(ProviderError::UnknownSession(_)) => Ok(()),
        Err(other) => Err(fail(CHECK, format!("closed session returned {other} instead of unknown session"))),
        Ok(_) => Err(fail(CHECK, "closed session still accepts appends")),
    }
}

pub fn check_embed(p: &dyn Provider) -> Outcome {
    const CHECK: &str = "embed";
    let req = EmbedRequest {
        texts: vec!["kittens in the garden".into(), "hot buttered toast".into(), "".into()],
    };
    let resp = call(CHECK, p.embed(&req))?;
    resp.check(req.texts.len()).map_err(|m| fail(CHECK, m))
}

/// Runs every check, collecting all failures.
pub fn run_all(p: &dyn Provider) -> Vec<ConformanceError> {
    [check_summarize(p), check_session(p), check_embed(p)]
        .into_iter()
        .filter_map(Result::err)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MockProvider;

    #[test]
    fn mock_passes_conformance() {
        assert_eq!(run_all(&MockProvider::seeded(3)), vec![]);
        assert_eq!(
            run_all(&MockProvider::scripted(vec![(0.1, 0.9), (0.5, 0.5), (0.6, 0.2)])),
            vec![]
        );
    }

    #[test]
    fn short_script_fails_session_check() {
        let errs = run_all(&MockProvider::scripted(vec![(0.1, 0.9)]));
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("script exhausted"));
    }
}
