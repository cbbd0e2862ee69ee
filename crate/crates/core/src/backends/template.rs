//! Prompt templates with `{name}` placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use std::sync::OnceLock;

use super::Role;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("no value for placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("template {role} lacks required placeholder {{{placeholder}}}")]
    IncompleteTemplate { role: String, placeholder: String },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z][a-z0-9_]*)\}").unwrap())
}

/// Placeholder names used in `body`, in first-occurrence order.
pub fn placeholders(body: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    placeholder_re()
        .captures_iter(body)
        .map(|c| c[1].to_string())
        .filter(|n| seen.insert(n.clone()))
        .collect()
}

/// Substitutes every placeholder in one pass; substituted text is not
/// re-scanned, so artifacts containing braces pass through verbatim.
pub fn render_prompt(body: &str, values: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(body.len());
    let mut last = 0;
    for caps in placeholder_re().captures_iter(body) {
        let whole = caps.get(0).unwrap();
        let name = &caps[1];
        let value = values
            .get(name)
            .ok_or_else(|| TemplateError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&body[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&body[last..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub role: Role,
    pub body: String,
}

impl PromptTemplate {
    /// Placeholders a template for `role` must reference.
    pub fn required(role: Role) -> &'static [&'static str] {
        match role {
            Role::T1 => &["schema", "original_nl"],
            Role::T2 => &["schema", "phase1_smt"],
            Role::T3 => &["schema", "reconstructed_nl"],
            Role::D => &["schema", "original_nl", "phase1_smt", "reconstructed_nl", "phase3_smt"],
            Role::R1 => &["schema", "original_nl", "phase1_smt", "diagnostic_feedback"],
            Role::R2 => &["schema", "phase1_smt", "reconstructed_nl", "diagnostic_feedback"],
            Role::R3 => &["schema", "reconstructed_nl", "phase3_smt", "diagnostic_feedback"],
        }
    }

    pub fn new(role: Role, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let present = placeholders(&body);
        for p in Self::required(role) {
            if !present.iter().any(|x| x == p) {
                return Err(TemplateError::IncompleteTemplate {
                    role: role.to_string(),
                    placeholder: p.to_string(),
                });
            }
        }
        Ok(PromptTemplate { role, body })
    }

    /// The body with its `#ROLE:` line (if any) removed.
    pub fn body_without_marker(&self) -> &str {
        super::strip_marker(&self.body)
    }

    pub fn render(&self, values: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
        render_prompt(self.body_without_marker(), values)
    }
}

/// The seven role templates plus the correction suffix used on
/// well-formedness retries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<Role, PromptTemplate>,
    correction: String,
}

fn file_name(role: Role) -> String {
    format!("{}.txt", role.as_str().to_lowercase())
}

impl TemplateSet {
    pub fn builtin() -> TemplateSet {
        let raw = [
            (Role::T1, include_str!("../../templates/t1.txt")),
            (Role::T2, include_str!("../../templates/t2.txt")),
            (Role::T3, include_str!("../../templates/t3.txt")),
            (Role::D, include_str!("../../templates/d.txt")),
            (Role::R1, include_str!("../../templates/r1.txt")),
            (Role::R2, include_str!("../../templates/r2.txt")),
            (Role::R3, include_str!("../../templates/r3.txt")),
        ];
        let templates = raw
            .into_iter()
            .map(|(r, b)| (r, PromptTemplate::new(r, b).expect("builtin template is complete")))
            .collect();
        TemplateSet {
            templates,
            correction: include_str!("../../templates/correction.txt").to_string(),
        }
    }

    /// Loads `t1.txt` .. `r3.txt` and `correction.txt` from `dir`; files
    /// that are absent fall back to the builtin version.
    pub fn load_dir(dir: &Path) -> Result<TemplateSet, TemplateError> {
        let mut set = TemplateSet::builtin();
        for role in Role::ALL {
            let path = dir.join(file_name(role));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(role, PromptTemplate::new(role, body)?);
            }
        }
        let path = dir.join("correction.txt");
        if path.exists() {
            let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if !placeholders(&body).iter().any(|p| p == "error_message") {
                return Err(TemplateError::IncompleteTemplate {
                    role: "correction".into(),
                    placeholder: "error_message".into(),
                });
            }
            set.correction = body;
        }
        Ok(set)
    }

    pub fn get(&self, role: Role) -> &PromptTemplate {
        &self.templates[&role]
    }

    pub fn correction(&self) -> &str {
        &self.correction
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_is_single_pass() {
        let mut m = BTreeMap::new();
        m.insert("a", "{b}");
        m.insert("b", "x");
        assert_eq!(render_prompt("<{a}|{b}>", &m).unwrap(), "<{b}|x>");
    }

    #[test]
    fn no_placeholders_unchanged() {
        let body = "plain text, {Not A Placeholder}";
        assert_eq!(render_prompt(body, &BTreeMap::new()).unwrap(), body);
    }

    #[test]
    fn missing_value_is_named() {
        let err = render_prompt("{schema}", &BTreeMap::new()).unwrap_err();
        assert_eq!(err, TemplateError::MissingPlaceholder("schema".into()));
    }

    #[test]
    fn builtins_are_complete_and_inject_schema() {
        let set = TemplateSet::builtin();
        for role in Role::ALL {
            let t = set.get(role);
            assert!(t.body.starts_with(&format!("#ROLE:{role}\n")));
            assert!(placeholders(&t.body).contains(&"schema".to_string()));
        }
        assert!(PromptTemplate::new(Role::T2, "#ROLE:T2\n{phase1_smt}").is_err());
    }
}
