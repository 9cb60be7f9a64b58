//! Text normalization: generic tags for quotations, links and digits, word
//! tokenization, lowercasing and removal of non-ASCII terms.

use std::sync::LazyLock;

use regex::Regex;

pub const QUOTE_TAG: &str = "<quote>";
pub const DIGIT_TAG: &str = "<digit>";
pub const URL_TAG: &str = "<url>";

static QUOTE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:>|&gt;).*$").unwrap());
static QUOTE_SPAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""[^"\n]*"|“[^”\n]*”"#).unwrap());
static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());
static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:[.,]\d+)*").unwrap());
static TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"<quote>|<digit>|<url>|[\p{L}\p{N}_]+(?:['’\-][\p{L}\p{N}_]+)*").unwrap()
});

fn is_tag(tok: &str) -> bool {
    tok == QUOTE_TAG || tok == DIGIT_TAG || tok == URL_TAG
}

fn is_ascii_term(tok: &str) -> bool {
    tok.chars()
        .all(|c| c.is_ascii_alphabetic() || matches!(c, '\'' | '-' | '_'))
}

/// Normalize a raw post body into lowercase word tokens.
pub fn normalize_text(body: &str) -> Vec<String> {
    if body.trim().is_empty() {
        return Vec::new();
    }
    let text = QUOTE_LINE.replace_all(body, " <quote> ");
    let text = QUOTE_SPAN.replace_all(&text, " <quote> ");
    let text = URL.replace_all(&text, " <url> ");
    let text = DIGITS.replace_all(&text, " <digit> ");
    TOKEN
        .find_iter(&text)
        .map(|m| m.as_str().replace('’', "'").to_lowercase())
        .filter(|t| is_tag(t) || is_ascii_term(t))
        .collect()
}

/// Whitespace-separated word count of a raw body, used by the reply-length filter.
pub fn raw_word_count(body: &str) -> usize {
    body.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(
            normalize_text("Visit http://a.io today"),
            toks(&["visit", "<url>", "today"])
        );
        assert_eq!(normalize_text(""), Vec::<String>::new());
        assert_eq!(
            normalize_text("I have 42 cats"),
            toks(&["i", "have", "<digit>", "cats"])
        );
    }

    #[test]
    fn quotes_links_and_foreign_terms() {
        assert_eq!(
            normalize_text("He said \"never again\" at www.x.org, didn't he?"),
            toks(&["he", "said", "<quote>", "at", "<url>", "didn't", "he"])
        );
        assert_eq!(
            normalize_text("> quoted line 12\nReply café 3.5 times"),
            toks(&["<quote>", "reply", "<digit>", "times"])
        );
    }

    proptest! {
        #[test]
        fn idempotent_on_tag_free_text(s in "[A-Za-z0-9 .,!?'\\-]{0,80}") {
            let once = normalize_text(&s);
            let twice = normalize_text(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
