//! Cleanup of LLM replies into a single image-prompt sentence.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SanitizeMode {
    /// Only ASCII letters, space and `,.-'"` survive.
    Strict,
    /// Like strict, but digits are kept (still reported).
    #[default]
    Lenient,
}

/// A rule the raw reply broke. Each kind is reported once, in order of first
/// occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Emoji,
    Digits,
    DisallowedCharacter,
    ExtraSentences,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sanitized {
    pub text: String,
    pub violations: Vec<Violation>,
}

/// The reply was empty, or nothing survived sanitation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("reply is empty after sanitation")]
pub struct EmptyOutput;

fn is_allowed(c: char) -> bool {
    c.is_ascii_alphabetic() || matches!(c, ' ' | ',' | '.' | '-' | '\'' | '"')
}

pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0x2300..=0x23FF
        | 0xFE00..=0xFE0F
        | 0x200D
        | 0x20E3
        | 0xE0020..=0xE007F
        | 0x3030 | 0x303D | 0x3297 | 0x3299
        | 0x00A9 | 0x00AE | 0x2122)
}

pub fn sanitize_output(raw: &str, mode: SanitizeMode) -> Result<Sanitized, EmptyOutput> {
    let mut violations = Vec::new();
    let flag = |v: Violation, violations: &mut Vec<Violation>| {
        if !violations.contains(&v) {
            violations.push(v);
        }
    };

    let mut kept = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c.is_whitespace() {
            kept.push(' ');
        } else if is_allowed(c) {
            kept.push(c);
        } else if c.is_ascii_digit() {
            flag(Violation::Digits, &mut violations);
            if mode == SanitizeMode::Lenient {
                kept.push(c);
            }
        } else if is_emoji(c) {
            flag(Violation::Emoji, &mut violations);
        } else {
            flag(Violation::DisallowedCharacter, &mut violations);
        }
    }

    let first_sentence = match kept.split_once('.') {
        Some((head, rest)) => {
            if rest.chars().any(|c| c.is_ascii_alphanumeric()) {
                flag(Violation::ExtraSentences, &mut violations);
            }
            head
        }
        None => kept.as_str(),
    };

    let text = first_sentence.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return Err(EmptyOutput);
    }
    Ok(Sanitized { text, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn emoji_removed() {
        let s = sanitize_output("Cozy bed 🐶 for pups", SanitizeMode::Strict).unwrap();
        assert_eq!(s.text, "Cozy bed for pups");
        assert_eq!(s.violations, vec![Violation::Emoji]);
    }

    #[test]
    fn clean_sample_untouched() {
        let raw = "fluffy and light gray area rug decorating the living room";
        for mode in [SanitizeMode::Strict, SanitizeMode::Lenient] {
            let s = sanitize_output(raw, mode).unwrap();
            assert_eq!(s.text, raw);
            assert!(s.violations.is_empty());
        }
    }

    #[test]
    fn strict_drops_digits() {
        let s = sanitize_output("up to 40lbs of comfort", SanitizeMode::Strict).unwrap();
        assert_eq!(s.text, "up to lbs of comfort");
        assert_eq!(s.violations, vec![Violation::Digits]);
    }

    #[test]
    fn lenient_keeps_digits_but_reports() {
        let s = sanitize_output("up to 40lbs of comfort", SanitizeMode::Lenient).unwrap();
        assert_eq!(s.text, "up to 40lbs of comfort");
        assert_eq!(s.violations, vec![Violation::Digits]);
    }

    #[test]
    fn first_sentence_only() {
        let s = sanitize_output("A rug in a room. Also a lamp.", SanitizeMode::Lenient).unwrap();
        assert_eq!(s.text, "A rug in a room");
        assert_eq!(s.violations, vec![Violation::ExtraSentences]);
        let s = sanitize_output("A rug in a room.", SanitizeMode::Lenient).unwrap();
        assert_eq!(s.text, "A rug in a room");
        assert!(s.violations.is_empty());
    }

    #[test]
    fn whitespace_collapses() {
        let s = sanitize_output("  a\t\tb \n c  ", SanitizeMode::Strict).unwrap();
        assert_eq!(s.text, "a b c");
    }

    #[test]
    fn empty_results_error() {
        assert_eq!(sanitize_output("", SanitizeMode::Lenient), Err(EmptyOutput));
        assert_eq!(sanitize_output("🐶 42", SanitizeMode::Strict), Err(EmptyOutput));
        assert_eq!(sanitize_output(". rest", SanitizeMode::Strict), Err(EmptyOutput));
    }

    #[test]
    fn other_symbols_reported() {
        let s = sanitize_output("Cat & Puppy Bed", SanitizeMode::Lenient).unwrap();
        assert_eq!(s.text, "Cat Puppy Bed");
        assert_eq!(s.violations, vec![Violation::DisallowedCharacter]);
    }

    proptest! {
        #[test]
        fn idempotent(raw in "\\PC{0,80}", strict in any::<bool>()) {
            let mode = if strict { SanitizeMode::Strict } else { SanitizeMode::Lenient };
            if let Ok(once) = sanitize_output(&raw, mode) {
                let twice = sanitize_output(&once.text, mode).unwrap();
                prop_assert_eq!(&twice.text, &once.text);
                prop_assert!(twice.violations.iter().all(|v| *v == Violation::Digits));
            }
        }

        #[test]
        fn strict_output_language(raw in "\\PC{0,80}") {
            if let Ok(s) = sanitize_output(&raw, SanitizeMode::Strict) {
                prop_assert!(s.text.chars().all(is_allowed));
                prop_assert!(!s.text.contains("  "));
                prop_assert_eq!(s.text.trim(), s.text.as_str());
            }
        }
    }
}
