//! Text normalization and tokenization shared by every stage.
//!
//! Normalization works token by token on whitespace-separated chunks:
//! non-ASCII characters are dropped first, then whole tokens are removed if
//! they are URLs, mentions, hashtags or bare numbers, and the survivors are
//! lowercased and joined with single spaces.

use serde::{Deserialize, Serialize};

/// What to do with `#tag` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashtagMode {
    /// Drop the whole token.
    #[default]
    Remove,
    /// Drop the leading `#` characters and keep the word.
    StripSymbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub remove_urls: bool,
    pub remove_image_links: bool,
    pub remove_numbers: bool,
    pub remove_hashtags: bool,
    pub hashtag_mode: HashtagMode,
    pub remove_mentions: bool,
    pub remove_non_ascii: bool,
    /// Always applied last; kept as a field so configs mirror the rule list.
    pub collapse_whitespace: bool,
    pub lowercase: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            remove_urls: true,
            remove_image_links: true,
            remove_numbers: true,
            remove_hashtags: true,
            hashtag_mode: HashtagMode::Remove,
            remove_mentions: true,
            remove_non_ascii: true,
            collapse_whitespace: true,
            lowercase: true,
        }
    }
}

impl NormalizationConfig {
    /// Every rule off except whitespace collapsing.
    pub fn none() -> Self {
        NormalizationConfig {
            remove_urls: false,
            remove_image_links: false,
            remove_numbers: false,
            remove_hashtags: false,
            hashtag_mode: HashtagMode::Remove,
            remove_mentions: false,
            remove_non_ascii: false,
            collapse_whitespace: true,
            lowercase: false,
        }
    }
}

fn is_url(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    if lower.starts_with("www.") {
        return true;
    }
    match lower.find("://") {
        Some(pos) if pos > 0 => {
            let scheme = &lower[..pos];
            scheme.starts_with(|c: char| c.is_ascii_alphabetic())
                && scheme.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        }
        _ => false,
    }
}

fn is_image_link(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.starts_with("pic.twitter.com/") || lower.starts_with("pic.x.com/")
}

/// Digits with optional digit punctuation ("24", "1,000", "3.5", "5:30").
fn is_number(token: &str) -> bool {
    token.chars().any(|c| c.is_ascii_digit())
        && token.chars().all(|c| c.is_ascii_digit() || matches!(c, ',' | '.' | ':' | '-' | '/'))
}

/// Lowercases per character, keeping a character when its lowercase form is
/// not a single character of at most the same UTF-8 length.
fn lowercase_in_place_len(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        let mut lower = c.to_lowercase();
        match (lower.next(), lower.next()) {
            (Some(l), None) if l.len_utf8() <= c.len_utf8() => out.push(l),
            _ => out.push(c),
        }
    }
    out
}

/// Applies the enabled rules. Idempotent; never grows the byte length.
pub fn normalize(text: &str, cfg: &NormalizationConfig) -> String {
    let mut kept: Vec<String> = Vec::new();
    for raw in text.split(char::is_whitespace) {
        let token: String =
            if cfg.remove_non_ascii { raw.chars().filter(char::is_ascii).collect() } else { raw.to_string() };
        if token.is_empty() {
            continue;
        }
        // hashtags first: a stripped tag must still face the other rules
        let token = if cfg.remove_hashtags && token.starts_with('#') {
            match cfg.hashtag_mode {
                HashtagMode::Remove => continue,
                HashtagMode::StripSymbol => token.trim_start_matches('#').to_string(),
            }
        } else {
            token
        };
        if token.is_empty() {
            continue;
        }
        if cfg.remove_urls && is_url(&token) {
            continue;
        }
        if (cfg.remove_image_links || cfg.remove_urls) && is_image_link(&token) {
            continue;
        }
        if cfg.remove_mentions && token.starts_with('@') {
            continue;
        }
        if cfg.remove_numbers && is_number(&token) {
            continue;
        }
        kept.push(if cfg.lowercase { lowercase_in_place_len(&token) } else { token });
    }
    kept.join(" ")
}

/// Maximal runs of alphanumeric characters, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// `tokenize(normalize(text))`.
pub fn analyze(text: &str, cfg: &NormalizationConfig) -> Vec<String> {
    tokenize(&normalize(text, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn removes_all_listed_noise() {
        let cfg = NormalizationConfig::default();
        assert_eq!(normalize("Donations needed @redcross #Dorian 24 http://t.co/ab", &cfg), "donations needed");
        assert_eq!(normalize("Help    is   coming", &cfg), "help is coming");
        assert_eq!(normalize("¡Ayuda! café", &cfg), "ayuda! caf");
    }

    #[test]
    fn url_and_number_variants() {
        let cfg = NormalizationConfig::default();
        assert_eq!(normalize("see www.fema.gov and HTTPS://X.CO/y now", &cfg), "see and now");
        assert_eq!(normalize("photo pic.twitter.com/abc123 here", &cfg), "photo here");
        assert_eq!(normalize("1,000 meals at 5:30 for covid19 5pm", &cfg), "meals at for covid19 5pm");
        assert_eq!(normalize("a:/b and mailto:x are kept, ://x too", &cfg), "a:/b and mailto:x are kept, ://x too");
    }

    #[test]
    fn hashtag_strip_mode() {
        let cfg = NormalizationConfig { hashtag_mode: HashtagMode::StripSymbol, ..Default::default() };
        assert_eq!(normalize("Pray for #Bahamas ##now #", &cfg), "pray for bahamas now");
    }

    #[test]
    fn rules_can_be_disabled() {
        let cfg = NormalizationConfig::none();
        assert_eq!(normalize("  Keep @all #the 24 http://x.io  ", &cfg), "Keep @all #the 24 http://x.io");
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("help needed"), vec!["help", "needed"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("food,water;food"), vec!["food", "water", "food"]);
        assert_eq!(tokenize("ayuda! caf"), vec!["ayuda", "caf"]);
    }

    fn any_config() -> impl Strategy<Value = NormalizationConfig> {
        (any::<[bool; 8]>(), any::<bool>()).prop_map(|(f, strip)| NormalizationConfig {
            remove_urls: f[0],
            remove_image_links: f[1],
            remove_numbers: f[2],
            remove_hashtags: f[3],
            hashtag_mode: if strip { HashtagMode::StripSymbol } else { HashtagMode::Remove },
            remove_mentions: f[4],
            remove_non_ascii: f[5],
            collapse_whitespace: f[6],
            lowercase: f[7],
        })
    }

    fn tweetish() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                "[a-zA-Z]{1,8}",
                "[0-9,.:]{1,6}",
                "#[a-zA-Z0-9#]{0,6}",
                "@[a-z]{1,6}",
                "https?://[a-z./]{1,10}",
                "www\\.[a-z]{1,5}",
                "[ \t\n]{1,3}",
                "\\PC{1,4}",
                Just("İstanbul".to_string()),
                Just("é#tag".to_string()),
            ],
            0..12,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in tweetish(), cfg in any_config()) {
            let once = normalize(&text, &cfg);
            prop_assert_eq!(normalize(&once, &cfg), once.clone());
        }

        #[test]
        fn normalize_never_grows(text in tweetish(), cfg in any_config()) {
            prop_assert!(normalize(&text, &cfg).len() <= text.len());
        }

        #[test]
        fn normalized_whitespace_is_single_spaces(text in tweetish(), cfg in any_config()) {
            let out = normalize(&text, &cfg);
            prop_assert!(!out.contains("  "));
            prop_assert_eq!(out.trim(), out.as_str());
            prop_assert!(!out.chars().any(|c| c.is_whitespace() && c != ' '));
        }

        #[test]
        fn default_rules_leave_no_matches(text in tweetish()) {
            let out = normalize(&text, &NormalizationConfig::default());
            prop_assert!(out.is_ascii());
            for tok in out.split(' ').filter(|t| !t.is_empty()) {
                prop_assert!(!tok.starts_with('@') && !tok.starts_with('#'));
                prop_assert!(!is_url(tok) && !is_number(tok));
            }
        }

        #[test]
        fn tokens_are_never_empty(text in "\\PC{0,40}") {
            prop_assert!(tokenize(&text).iter().all(|t| !t.is_empty() && t.chars().all(char::is_alphanumeric)));
        }
    }
}
