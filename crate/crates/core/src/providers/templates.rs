//! Versioned prompt templates, addressed by `template_id`.

use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub id: &'static str,
    pub text: &'static str,
}

/// Summarization prompt; `{segments}` receives the batch texts, one per line.
pub const SUMMARIZE: Template = Template {
    id: "summarize-v1",
    text: include_str!("../../templates/summarize-v1.txt"),
};

/// First-turn sufficiency prompt; `{query}` and `{information}` placeholders.
pub const DECIDE: Template = Template {
    id: "decide-v1",
    text: include_str!("../../templates/decide-v1.txt"),
};

/// Second-turn prompt issued once the search stops.
pub const ANSWER: Template = Template {
    id: "answer-v1",
    text: include_str!("../../templates/answer-v1.txt"),
};

pub const ALL: [Template; 3] = [SUMMARIZE, DECIDE, ANSWER];

pub fn by_id(id: &str) -> Option<Template> {
    ALL.into_iter().find(|t| t.id == id)
}

pub fn render_summarize(segments: &[&str]) -> String {
    SUMMARIZE.text.replace("{segments}", &segments.join("\n"))
}

/// The first-turn prompt with `information` lines appended.
pub fn render_decide(query: &str, information: &[&str]) -> String {
    DECIDE
        .text
        .replace("{query}", query)
        .replace("{information}", &information.join("\n"))
}

/// Instruction tokens of the first-turn prompt, excluding query and nodes.
pub fn decide_scaffold_tokens(tokenizer: &dyn Tokenizer) -> usize {
    tokenizer.count(&render_decide("", &[]))
}

pub fn answer_scaffold_tokens(tokenizer: &dyn Tokenizer) -> usize {
    tokenizer.count(ANSWER.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::SimpleTokenizer;

    #[test]
    fn templates_carry_their_placeholders() {
        assert!(SUMMARIZE.text.contains("{segments}"));
        assert!(SUMMARIZE.text.contains("* {summary point}"));
        assert!(DECIDE.text.starts_with("Can this question be answered by the following information?"));
        assert!(ANSWER.text.contains("answer the question as concisely as you can"));
        assert_eq!(by_id("decide-v1"), Some(DECIDE));
        assert_eq!(by_id("nope"), None);
    }

    #[test]
    fn renders_segments_in_order() {
        let prompt = render_summarize(&["first", "second"]);
        assert!(prompt.contains("\n\nfirst\nsecond\n\n"));
        assert!(!prompt.contains("{segments}"));
        let decide = render_decide("Where?", &["* a", "* b"]);
        assert!(decide.ends_with("Question:\nWhere?\n\nInformation:\n* a\n* b\n"));
    }

    #[test]
    fn scaffold_excludes_query_tokens() {
        let tk = SimpleTokenizer;
        let full = tk.count(&render_decide("Where is it?", &[]));
        assert_eq!(full, decide_scaffold_tokens(&tk) + tk.count("Where is it?"));
    }
}
