//! Versioned prompt templates.
//!
//! Templates live in `prompts/<version>/` and are embedded into the binary
//! as defaults; a directory override lets experiments swap wording without
//! recompiling. Each template contains an instruction section and an input
//! section separated by a `# input` marker line; after placeholder
//! substitution the two sections become the system prompt and the user
//! message of one chat request.

use std::path::Path;

use thiserror::Error;

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("failed to read template: {0}")]
    Io(#[from] std::io::Error),
    #[error("template has no `# input` section")]
    MissingInputSection,
    #[error("unbound placeholder {0:?} after substitution")]
    UnboundPlaceholder(String),
}

#[derive(Debug, Clone)]
pub struct Template {
    raw: String,
}

impl Template {
    pub fn new(raw: impl Into<String>) -> Self {
        Template { raw: raw.into() }
    }

    /// Substitute `{{key}}` placeholders and split into (system, user).
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<(String, String), PromptError> {
        let mut text = self.raw.clone();
        for (key, value) in vars {
            text = text.replace(&format!("{{{{{key}}}}}"), value);
        }
        if let Some(start) = text.find("{{") {
            let rest = &text[start..];
            let end = rest.find("}}").map(|i| i + 2).unwrap_or(rest.len().min(24));
            return Err(PromptError::UnboundPlaceholder(rest[..end].to_string()));
        }
        let marker = "\n# input\n";
        let split = text.find(marker).ok_or(PromptError::MissingInputSection)?;
        let mut system = text[..split].trim().to_string();
        if let Some(stripped) = system.strip_prefix("# instruction") {
            system = stripped.trim().to_string();
        }
        let user = text[split + marker.len()..].trim().to_string();
        Ok((system, user))
    }
}

/// The five prompts the pipelines use.
#[derive(Debug, Clone)]
pub struct PromptSet {
    /// Event detection: rank the codebook's types for one article.
    pub detect: Template,
    /// Non-entity argument extraction for a known event type.
    pub extract_args: Template,
    /// Linker stage 1: hypothesize involved entities and describe them.
    pub link_queries: Template,
    /// Linker stage 2: find supporting evidence for each candidate.
    pub link_filter: Template,
    /// Linker stage 3: assign surviving entities to argument roles.
    pub link_assign: Template,
}

impl PromptSet {
    /// Templates compiled into the binary.
    pub fn builtin() -> Self {
        PromptSet {
            detect: Template::new(include_str!("../prompts/v1/detect.txt")),
            extract_args: Template::new(include_str!("../prompts/v1/extract_args.txt")),
            link_queries: Template::new(include_str!("../prompts/v1/link_queries.txt")),
            link_filter: Template::new(include_str!("../prompts/v1/link_filter.txt")),
            link_assign: Template::new(include_str!("../prompts/v1/link_assign.txt")),
        }
    }

    /// Load overrides from a directory containing the five template files.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<Template, PromptError> {
            Ok(Template::new(std::fs::read_to_string(dir.join(name))?))
        };
        Ok(PromptSet {
            detect: read("detect.txt")?,
            extract_args: read("extract_args.txt")?,
            link_queries: read("link_queries.txt")?,
            link_filter: read("link_filter.txt")?,
            link_assign: read("link_assign.txt")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_splits_sections_and_substitutes() {
        let t = Template::new("# instruction\nDo the thing.\n\n# input\nArticle: {{article}}\n");
        let (system, user) = t.render(&[("article", "hello world")]).unwrap();
        assert_eq!(system, "Do the thing.");
        assert_eq!(user, "Article: hello world");
    }

    #[test]
    fn unbound_placeholder_is_an_error() {
        let t = Template::new("# input\n{{missing}}");
        assert!(matches!(t.render(&[]), Err(PromptError::UnboundPlaceholder(_))));
    }

    #[test]
    fn builtin_templates_render() {
        let prompts = PromptSet::builtin();
        let (system, user) = prompts
            .detect
            .render(&[("article", "a"), ("event_type_menu", "[1] \"X\": d")])
            .unwrap();
        assert!(system.contains("determining the best matching Event types"));
        assert!(user.contains("[1] \"X\": d"));

        let (_, user) = prompts
            .link_filter
            .render(&[("article", "body"), ("country", "Iraq"), ("entities", "- Women")])
            .unwrap();
        assert!(user.contains("Country of event: Iraq"));
    }
}
