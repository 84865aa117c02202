//! Response parsing: think/answer tag structure and answer-letter extraction.

use crate::types::ParsedResponse;

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

fn positions(haystack: &str, needle: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(p) = haystack[from..].find(needle) {
        out.push(from + p);
        from += p + needle.len();
    }
    out
}

/// Parses a raw response into its think/answer structure.
///
/// Tag matching is exact lowercase. The response is well formed iff it is
/// one `<think>…</think>` block followed by one `<answer>…</answer>` block,
/// each tag appearing exactly once, with nothing but whitespace outside the
/// blocks. The answer letter is extracted whenever a single answer block is
/// present, even if the overall format is malformed; it is validated
/// against the full `A..Z` letter domain — callers that know the sample
/// narrow it with [`McqaSample::contains_letter`](crate::types::McqaSample::contains_letter).
pub fn parse_response(raw: &str) -> ParsedResponse {
    let t_open = positions(raw, THINK_OPEN);
    let t_close = positions(raw, THINK_CLOSE);
    let a_open = positions(raw, ANSWER_OPEN);
    let a_close = positions(raw, ANSWER_CLOSE);

    // `<think>` matches inside `</think>` are already excluded because
    // `positions` scans left to right past each full match, but a literal
    // `</think>` does contain no `<think>`; the two searches are disjoint.
    let answer_block = match (a_open.as_slice(), a_close.as_slice()) {
        ([open], [close]) if open < close => Some(&raw[open + ANSWER_OPEN.len()..*close]),
        _ => None,
    };
    let answer = answer_block.and_then(|block| extract_answer(block, 26));

    let well_formed = match (t_open.as_slice(), t_close.as_slice(), a_open.as_slice(), a_close.as_slice()) {
        ([to], [tc], [ao], [ac]) if to < tc && tc < ao && ao < ac => {
            raw[..*to].trim().is_empty()
                && raw[tc + THINK_CLOSE.len()..*ao].trim().is_empty()
                && raw[ac + ANSWER_CLOSE.len()..].trim().is_empty()
        }
        _ => false,
    };

    let think = if well_formed {
        Some(raw[t_open[0] + THINK_OPEN.len()..t_close[0]].to_string())
    } else {
        None
    };

    ParsedResponse { think, answer, well_formed_format: well_formed, raw: raw.to_string() }
}

/// Extracts the single option letter from an answer block.
///
/// Whitespace and ASCII punctuation are stripped; the remainder must be
/// exactly one alphabetic character within the first `n_options` letters.
/// Anything else — several letters, digits, an out-of-range letter — yields
/// `None`. Deliberately strict: the accuracy reward needs an unambiguous
/// correctness predicate.
pub fn extract_answer(answer_block: &str, n_options: usize) -> Option<char> {
    let kept: Vec<char> =
        answer_block.chars().filter(|c| !c.is_whitespace() && !c.is_ascii_punctuation()).collect();
    match kept.as_slice() {
        [c] if c.is_ascii_alphabetic() => {
            let letter = c.to_ascii_uppercase();
            let n = n_options.min(26) as u8;
            ((letter as u8) < b'A' + n).then_some(letter)
        }
        _ => None,
    }
}

/// Renders a (think, answer) pair in the canonical response format.
///
/// `parse_response` is the left inverse of this on think texts that do not
/// themselves contain tags.
pub fn render_response(think: &str, answer: char) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_well_formed() {
        let p = parse_response("<think>frames show a key</think><answer>B</answer>");
        assert_eq!(p.think.as_deref(), Some("frames show a key"));
        assert_eq!(p.answer, Some('B'));
        assert!(p.well_formed_format);
    }

    #[test]
    fn plain_text_is_malformed() {
        let p = parse_response("The answer is B.");
        assert_eq!(p.answer, None);
        assert!(!p.well_formed_format);
        assert_eq!(p.raw, "The answer is B.");
    }

    #[test]
    fn noisy_answer_block_still_extracts() {
        let p = parse_response("<think>…</think><answer> b )</answer>");
        assert_eq!(p.answer, Some('B'));
        assert!(p.well_formed_format);
    }

    #[test]
    fn surrounding_whitespace_is_tolerated() {
        let p = parse_response("  <think>x</think>\n<answer>A</answer>\n");
        assert!(p.well_formed_format);
        assert_eq!(p.answer, Some('A'));
    }

    #[test]
    fn duplicate_blocks_are_malformed() {
        let p = parse_response("<think>a</think><think>b</think><answer>A</answer>");
        assert!(!p.well_formed_format);
        // The single answer block still carries an extractable letter.
        assert_eq!(p.answer, Some('A'));
    }

    #[test]
    fn wrong_order_is_malformed() {
        let p = parse_response("<answer>A</answer><think>a</think>");
        assert!(!p.well_formed_format);
        assert_eq!(p.answer, Some('A'));
    }

    #[test]
    fn trailing_content_is_malformed() {
        let p = parse_response("<think>a</think><answer>A</answer> trailing words");
        assert!(!p.well_formed_format);
    }

    #[test]
    fn truncated_response_has_no_answer() {
        let p = parse_response("<think>a</think><answer>B");
        assert!(!p.well_formed_format);
        assert_eq!(p.answer, None);
    }

    #[test]
    fn case_sensitive_tags() {
        let p = parse_response("<THINK>a</THINK><answer>A</answer>");
        assert!(!p.well_formed_format);
    }

    #[test]
    fn extract_answer_rules() {
        assert_eq!(extract_answer("C", 4), Some('C'));
        assert_eq!(extract_answer("(d)", 4), Some('D'));
        assert_eq!(extract_answer("A and B", 4), None);
        assert_eq!(extract_answer(" a ", 4), Some('A'));
        assert_eq!(extract_answer("E", 4), None);
        assert_eq!(extract_answer("E", 5), Some('E'));
        assert_eq!(extract_answer("B1", 4), None);
        assert_eq!(extract_answer("", 4), None);
        assert_eq!(extract_answer("..", 4), None);
    }

    proptest! {
        #[test]
        fn parse_inverts_render(think in "[ -~&&[^<>]]{0,40}", idx in 0usize..26) {
            let letter = (b'A' + idx as u8) as char;
            let parsed = parse_response(&render_response(&think, letter));
            prop_assert!(parsed.well_formed_format);
            prop_assert_eq!(parsed.think, Some(think));
            prop_assert_eq!(parsed.answer, Some(letter));
        }
    }
}
