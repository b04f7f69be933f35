use std::collections::HashSet;

use super::KnowledgeError;

const MIN_SYMPTOM_CHARS: usize = 3;

/// Splits an LLM answer into symptom phrases.
///
/// One phrase per line. Enumeration markers (`1.`, `2)`, `-`, `*`, `•`),
/// surrounding whitespace and one trailing period are removed; header lines
/// ending in `:` and lines shorter than three characters are dropped; exact
/// repeats keep their first occurrence.
pub fn parse_symptoms(raw: &str) -> Result<Vec<String>, KnowledgeError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in raw.lines() {
        let Some(phrase) = clean_line(line) else { continue };
        if seen.insert(phrase.clone()) {
            out.push(phrase);
        }
    }
    if out.is_empty() {
        return Err(KnowledgeError::Parse("no symptom phrases found in response".into()));
    }
    Ok(out)
}

fn clean_line(line: &str) -> Option<String> {
    let mut s = line.trim();
    if s.ends_with(':') {
        return None;
    }
    loop {
        let next = strip_marker(s).trim();
        if next.len() == s.len() {
            break;
        }
        s = next;
    }
    if let Some(stripped) = s.strip_suffix('.') {
        s = stripped.trim_end();
    }
    if s.ends_with(':') || s.chars().count() < MIN_SYMPTOM_CHARS {
        return None;
    }
    Some(s.to_string())
}

fn strip_marker(s: &str) -> &str {
    for bullet in ['-', '*', '•'] {
        if let Some(rest) = s.strip_prefix(bullet) {
            return rest;
        }
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        // "1.5 cm nodule" is a phrase, not a marker
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                return rest;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn numbered_list() {
        let raw = "1. No visible cavities or consolidations\n2. Absence of pleural effusions\n3. Clear and distinct lung borders";
        assert_eq!(
            parse_symptoms(raw).unwrap(),
            [
                "No visible cavities or consolidations",
                "Absence of pleural effusions",
                "Clear and distinct lung borders"
            ]
        );
    }

    #[test]
    fn dashed_list() {
        assert_eq!(
            parse_symptoms("- Venous beading and loops\n- Neovascularization").unwrap(),
            ["Venous beading and loops", "Neovascularization"]
        );
    }

    #[test]
    fn header_only_is_error() {
        assert!(matches!(parse_symptoms("Useful features:\n\n"), Err(KnowledgeError::Parse(_))));
        assert!(parse_symptoms("").is_err());
    }

    #[test]
    fn mixed_markers_and_noise() {
        let raw = "Here are some features:\n\n  * Air bronchogram sign.\n2) Lobar consolidation\n• Air bronchogram sign\nok\n10. Pleural effusion in some cases.\n";
        assert_eq!(
            parse_symptoms(raw).unwrap(),
            ["Air bronchogram sign", "Lobar consolidation", "Pleural effusion in some cases"]
        );
    }

    #[test]
    fn inner_colon_kept() {
        assert_eq!(
            parse_symptoms("1. Cavities: thick-walled lesions").unwrap(),
            ["Cavities: thick-walled lesions"]
        );
    }

    #[test]
    fn decimal_is_not_a_marker() {
        assert_eq!(parse_symptoms("1. 1.5 cm nodules").unwrap(), ["1.5 cm nodules"]);
    }

    #[test]
    fn crlf_lines() {
        assert_eq!(parse_symptoms("- Fibrous proliferation\r\n- Vitreous hemorrhage\r\n").unwrap(), [
            "Fibrous proliferation",
            "Vitreous hemorrhage"
        ]);
    }

    proptest! {
        #[test]
        fn output_is_clean(raw in "([-*•]|[0-9]{1,2}[.)])? ?[a-zA-Z .:]{0,20}(\n([-*•]|[0-9]{1,2}[.)])? ?[a-zA-Z .:]{0,20}){0,8}") {
            if let Ok(phrases) = parse_symptoms(&raw) {
                let mut seen = HashSet::new();
                for p in &phrases {
                    prop_assert!(!p.trim().is_empty());
                    prop_assert!(p.chars().count() >= MIN_SYMPTOM_CHARS);
                    prop_assert!(!p.starts_with(['-', '*', '•']));
                    prop_assert!(!p.ends_with(':'));
                    prop_assert!(seen.insert(p.clone()), "duplicate {}", p);
                }
            }
        }
    }
}
