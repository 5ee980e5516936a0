use serde::{Deserialize, Serialize};

/// The `"<subject> with <keywords> in <setting>"` decomposition of a prompt
/// sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeTuple {
    pub subject: String,
    pub keywords: String,
    pub setting: String,
}

impl AttributeTuple {
    pub fn sentence(&self) -> String {
        format!("{} with {} in {}", self.subject, self.keywords, self.setting)
    }
}

/// Splits on the last standalone ` in ` and the first standalone ` with `
/// before it. Returns `None` when either delimiter is missing or a part would
/// be empty. Matching is case-sensitive.
pub fn parse_tuple(sentence: &str) -> Option<AttributeTuple> {
    let in_at = sentence.rfind(" in ")?;
    let head = &sentence[..in_at];
    let with_at = head.find(" with ")?;
    let subject = head[..with_at].trim();
    let keywords = head[with_at + " with ".len()..].trim();
    let setting = sentence[in_at + " in ".len()..].trim();
    if subject.is_empty() || keywords.is_empty() || setting.is_empty() {
        return None;
    }
    Some(AttributeTuple {
        subject: subject.to_string(),
        keywords: keywords.to_string(),
        setting: setting.to_string(),
    })
}
