use crate::problem::JudgingStyle;

/// Canonical form used when comparing a program's output with the expected
/// output. Trailing whitespace is stripped from every line and trailing blank
/// lines are dropped; everything else must match byte for byte.
///
/// Call-based output is produced by the backend shim, which already renders
/// the return value canonically, so both styles share the same line rule.
pub fn normalize_output(text: &str, style: JudgingStyle) -> String {
    match style {
        JudgingStyle::StdioBased | JudgingStyle::CallBased => {
            let mut lines: Vec<&str> = text.split('\n').map(str::trim_end).collect();
            while lines.last().is_some_and(|l| l.is_empty()) {
                lines.pop();
            }
            lines.join("\n")
        }
    }
}

pub fn outputs_match(actual: &str, expected: &str, style: JudgingStyle) -> bool {
    normalize_output(actual, style) == normalize_output(expected, style)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const STDIO: JudgingStyle = JudgingStyle::StdioBased;
    const CALL: JudgingStyle = JudgingStyle::CallBased;

    #[test]
    fn strips_trailing_whitespace() {
        assert_eq!(normalize_output("42 \n", STDIO), "42");
        assert_eq!(normalize_output("42\t\r\n", STDIO), "42");
    }

    #[test]
    fn drops_trailing_blank_lines() {
        assert_eq!(normalize_output("a\nb\n\n", STDIO), "a\nb");
        assert_eq!(normalize_output("\n\n", STDIO), "");
    }

    #[test]
    fn comparison_table() {
        // (actual, expected, equal?)
        let table = [
            ("1.0", "1.0", true),
            ("1.0", "1.00", false),
            ("1", "1.0", false),
            ("a b", "a  b", false),
            (" a", "a", false),
            ("a\n\nb", "a\nb", false),
            ("a  \nb\t\n\n\n", "a\nb", true),
            ("[1, 2]", "[1, 2]\n", true),
            ("[1,2]", "[1, 2]", false),
            ("True", "true", false),
            ("", "\n", true),
        ];
        for (actual, expected, equal) in table {
            for style in [STDIO, CALL] {
                assert_eq!(
                    outputs_match(actual, expected, style),
                    equal,
                    "{actual:?} vs {expected:?}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "[a-z0-9 \t\r\n]{0,40}") {
            let once = normalize_output(&s, STDIO);
            prop_assert_eq!(normalize_output(&once, STDIO), once.clone());
            prop_assert!(!once.ends_with('\n'));
        }
    }
}
