//! Continuous string-similarity reward: longest common contiguous substring,
//! normalized by the longer string.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::keywords::is_keyword;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StringRewardConfig {
    pub normalize_whitespace: bool,
    pub lowercase_keywords: bool,
}

impl Default for StringRewardConfig {
    fn default() -> Self {
        StringRewardConfig {
            normalize_whitespace: true,
            lowercase_keywords: false,
        }
    }
}

pub fn normalize(text: &str, cfg: &StringRewardConfig) -> String {
    let text = if cfg.lowercase_keywords {
        lowercase_keywords(text)
    } else {
        text.to_string()
    };
    if cfg.normalize_whitespace {
        text.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        text
    }
}

/// Lowercases reserved words that appear outside quoted regions.
fn lowercase_keywords(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut quote: Option<char> = None;
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if is_keyword(word) {
            out.push_str(&word.to_ascii_lowercase());
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    for c in text.chars() {
        if let Some(q) = quote {
            out.push(c);
            if c == q {
                quote = None;
            }
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        flush(&mut word, &mut out);
        if matches!(c, '\'' | '"' | '`') {
            quote = Some(c);
        }
        out.push(c);
    }
    flush(&mut word, &mut out);
    out
}

/// Suffix automaton over a char sequence; built fresh per call.
struct SuffixAutomaton {
    next: Vec<HashMap<char, usize>>,
    link: Vec<Option<usize>>,
    len: Vec<usize>,
}

impl SuffixAutomaton {
    fn new(text: &[char]) -> Self {
        let cap = 2 * text.len() + 1;
        let mut sam = SuffixAutomaton {
            next: Vec::with_capacity(cap),
            link: Vec::with_capacity(cap),
            len: Vec::with_capacity(cap),
        };
        sam.push_state(0, None);
        let mut last = 0;
        for &c in text {
            last = sam.extend(last, c);
        }
        sam
    }

    fn push_state(&mut self, len: usize, link: Option<usize>) -> usize {
        self.next.push(HashMap::new());
        self.link.push(link);
        self.len.push(len);
        self.len.len() - 1
    }

    fn extend(&mut self, last: usize, c: char) -> usize {
        let cur = self.push_state(self.len[last] + 1, None);
        let mut p = Some(last);
        while let Some(state) = p {
            if self.next[state].contains_key(&c) {
                break;
            }
            self.next[state].insert(c, cur);
            p = self.link[state];
        }
        match p {
            None => self.link[cur] = Some(0),
            Some(state) => {
                let q = self.next[state][&c];
                if self.len[state] + 1 == self.len[q] {
                    self.link[cur] = Some(q);
                } else {
                    let clone = self.push_state(self.len[state] + 1, self.link[q]);
                    self.next[clone] = self.next[q].clone();
                    let mut walk = Some(state);
                    while let Some(s) = walk {
                        if self.next[s].get(&c) != Some(&q) {
                            break;
                        }
                        self.next[s].insert(c, clone);
                        walk = self.link[s];
                    }
                    self.link[q] = Some(clone);
                    self.link[cur] = Some(clone);
                }
            }
        }
        cur
    }

    /// Length of the longest substring of the automaton text that also occurs
    /// in `other`.
    fn longest_common(&self, other: &[char]) -> usize {
        let (mut state, mut matched, mut best) = (0usize, 0usize, 0usize);
        for &c in other {
            loop {
                if let Some(&to) = self.next[state].get(&c) {
                    state = to;
                    matched += 1;
                    break;
                }
                match self.link[state] {
                    Some(up) => {
                        state = up;
                        matched = self.len[state];
                    }
                    None => {
                        matched = 0;
                        break;
                    }
                }
            }
            best = best.max(matched);
        }
        best
    }
}

/// Length in chars of the longest common contiguous substring.
pub fn longest_common_substring(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    SuffixAutomaton::new(&a).longest_common(&b)
}

/// `L / max(|gold|, |pred|)` after normalization, where `L` is the longest
/// common contiguous substring. Two empty strings score 1, one empty string 0.
pub fn string_reward(gold: &str, pred: &str, cfg: &StringRewardConfig) -> f64 {
    let gold = normalize(gold, cfg);
    let pred = normalize(pred, cfg);
    let gold_len = gold.chars().count();
    let pred_len = pred.chars().count();
    match (gold_len, pred_len) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => longest_common_substring(&gold, &pred) as f64 / gold_len.max(pred_len) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_lcs(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut best = 0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                best = best.max(k);
            }
        }
        best
    }

    #[test]
    fn identical_strings_score_one() {
        let cfg = StringRewardConfig::default();
        assert_eq!(
            string_reward("SELECT a FROM t", "SELECT a FROM t", &cfg),
            1.0
        );
    }

    #[test]
    fn one_char_difference() {
        let cfg = StringRewardConfig::default();
        assert_eq!(brute_lcs("SELECT a FROM t", "SELECT a FROM u"), 14);
        let r = string_reward("SELECT a FROM t", "SELECT a FROM u", &cfg);
        assert!((r - 14.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn empty_cases() {
        let cfg = StringRewardConfig::default();
        assert_eq!(string_reward("SELECT 1", "", &cfg), 0.0);
        assert_eq!(string_reward("", "  ", &cfg), 1.0);
        assert_eq!(string_reward("   ", "x", &cfg), 0.0);
    }

    #[test]
    fn whitespace_normalization() {
        let cfg = StringRewardConfig::default();
        assert_eq!(
            string_reward("SELECT  a\nFROM t ", "SELECT a FROM t", &cfg),
            1.0
        );
        let raw = StringRewardConfig {
            normalize_whitespace: false,
            lowercase_keywords: false,
        };
        assert!(string_reward("SELECT  a", "SELECT a", &raw) < 1.0);
    }

    #[test]
    fn keyword_lowercasing_leaves_literals() {
        let cfg = StringRewardConfig {
            normalize_whitespace: true,
            lowercase_keywords: true,
        };
        assert_eq!(
            normalize("SELECT Name FROM t WHERE x = 'SELECT'", &cfg),
            "select Name from t where x = 'SELECT'"
        );
        assert_eq!(
            string_reward("SELECT a FROM t", "select a from t", &cfg),
            1.0
        );
    }

    #[test]
    fn unicode_counts_chars() {
        let cfg = StringRewardConfig::default();
        let r = string_reward("città", "città!", &cfg);
        assert!((r - 5.0 / 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn automaton_matches_brute_force(a in "[abc ]{0,24}", b in "[abc ]{0,24}") {
            prop_assert_eq!(longest_common_substring(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn symmetric_and_bounded(a in ".{0,20}", b in ".{0,20}") {
            let cfg = StringRewardConfig::default();
            let ab = string_reward(&a, &b, &cfg);
            prop_assert_eq!(ab, string_reward(&b, &a, &cfg));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn extending_common_region_never_hurts(p in "[a-d]{0,10}", q in "[a-d]{0,10}", c in "[a-d]{1,6}", s in "[a-d]{0,6}") {
            // The longest match must be the shared tail for the tail to be
            // "the" common region that the suffix extends.
            let (a, b) = (format!("{p}{c}"), format!("{q}{c}"));
            let tail = a.chars().rev().zip(b.chars().rev()).take_while(|(x, y)| x == y).count();
            prop_assume!(brute_lcs(&a, &b) == tail);
            let cfg = StringRewardConfig::default();
            let before = string_reward(&a, &b, &cfg);
            let after = string_reward(&format!("{a}{s}"), &format!("{b}{s}"), &cfg);
            prop_assert!(after + 1e-12 >= before, "{} < {}", after, before);
        }
    }
}
