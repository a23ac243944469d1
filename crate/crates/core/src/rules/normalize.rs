//! Pre-matching canonicalization for code-switched review text.
//!
//! Text is NFKC-normalized, lowercased, and any run of three or more
//! identical letters is collapsed to one letter ("muraaaa" -> "mura",
//! "sobraaang" -> "sobrang"). Every normalized character keeps the range of
//! original characters it came from, so matches on normalized text can be
//! reported as exact slices of the input.

use std::ops::Range;

use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::UnicodeNormalization;

/// Normalized text plus a map back to original character offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    text: String,
    /// Byte offset of every normalized char, with `text.len()` appended.
    char_bytes: Vec<usize>,
    /// Original character range per normalized char.
    origins: Vec<Range<usize>>,
}

impl Normalized {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn char_len(&self) -> usize {
        self.origins.len()
    }

    /// Original character range of the normalized char at `index`.
    pub fn origin(&self, index: usize) -> Range<usize> {
        self.origins[index].clone()
    }

    /// Maps a non-empty normalized byte range (on char boundaries) to the
    /// original character range it covers.
    pub fn original_range(&self, bytes: Range<usize>) -> Range<usize> {
        debug_assert!(bytes.start < bytes.end);
        let first = self.char_bytes.partition_point(|&b| b < bytes.start);
        let last = self.char_bytes.partition_point(|&b| b < bytes.end) - 1;
        self.origins[first].start..self.origins[last].end
    }
}

/// Normalizes `text`; see the module docs for the exact steps.
pub fn normalize(text: &str) -> Normalized {
    let mut expanded: Vec<(char, Range<usize>)> = Vec::with_capacity(text.len());
    let mut cluster = String::new();
    let mut cluster_start = 0;
    let mut count = 0;
    for (i, c) in text.chars().enumerate() {
        if canonical_combining_class(c) == 0 && !cluster.is_empty() {
            push_cluster(&cluster, cluster_start..i, &mut expanded);
            cluster.clear();
            cluster_start = i;
        }
        cluster.push(c);
        count = i + 1;
    }
    if !cluster.is_empty() {
        push_cluster(&cluster, cluster_start..count, &mut expanded);
    }

    let mut out = Normalized {
        text: String::with_capacity(expanded.len()),
        char_bytes: Vec::with_capacity(expanded.len() + 1),
        origins: Vec::with_capacity(expanded.len()),
    };
    let mut i = 0;
    while i < expanded.len() {
        let (c, ref range) = expanded[i];
        let mut j = i + 1;
        while j < expanded.len() && expanded[j].0 == c {
            j += 1;
        }
        let run = j - i;
        if c.is_alphabetic() && run >= 3 {
            out.push(c, range.start..expanded[j - 1].1.end);
        } else {
            for (c, range) in &expanded[i..j] {
                out.push(*c, range.clone());
            }
        }
        i = j;
    }
    out.char_bytes.push(out.text.len());
    out
}

impl Normalized {
    fn push(&mut self, c: char, origin: Range<usize>) {
        self.char_bytes.push(self.text.len());
        self.text.push(c);
        self.origins.push(origin);
    }
}

fn push_cluster(cluster: &str, origin: Range<usize>, out: &mut Vec<(char, Range<usize>)>) {
    for c in cluster.nfkc().flat_map(char::to_lowercase) {
        out.push((c, origin.clone()));
    }
}

/// Token byte ranges: maximal runs of Unicode letters or digits.
pub fn tokens(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (b, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(b),
            (false, Some(s)) => {
                out.push(s..b);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..text.len());
    }
    out
}

/// True when `range` in `text` is not glued to a letter or digit on either side.
pub(crate) fn on_word_boundary(text: &str, range: &Range<usize>) -> bool {
    let before = text[..range.start].chars().next_back();
    let after = text[range.end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::char_slice;
    use proptest::prelude::*;

    #[test]
    fn case_folding() {
        assert_eq!(normalize("MURA!").as_str(), "mura!");
    }

    #[test]
    fn collapses_three_or_more_repeats() {
        assert_eq!(normalize("muraaaa").as_str(), "mura");
        assert_eq!(normalize("SOBRAAANG ganda").as_str(), "sobrang ganda");
        // Two repeats are real spelling (e.g. "good", "maayos").
        assert_eq!(normalize("maayos").as_str(), "maayos");
        // Punctuation and digits are never collapsed.
        assert_eq!(normalize("wow!!! 1000").as_str(), "wow!!! 1000");
    }

    #[test]
    fn identity_on_normal_text() {
        let n = normalize("bilis");
        assert_eq!(n.as_str(), "bilis");
        assert_eq!(n.original_range(0..5), 0..5);
    }

    #[test]
    fn offsets_survive_collapse() {
        let text = "Muraaaa talaga";
        let n = normalize(text);
        assert_eq!(n.as_str(), "mura talaga");
        assert_eq!(n.original_range(0..4), 0..7);
        assert_eq!(char_slice(text, 0, 7).unwrap(), "Muraaaa");
        let t = n.as_str().find("talaga").unwrap();
        let r = n.original_range(t..t + 6);
        assert_eq!(char_slice(text, r.start, r.end).unwrap(), "talaga");
    }

    #[test]
    fn compatibility_forms_fold() {
        // Fullwidth and mathematical-bold letters appear in stylized reviews.
        assert_eq!(normalize("ＭＵＲＡ").as_str(), "mura");
        assert_eq!(normalize("𝐦𝐮𝐫𝐚").as_str(), "mura");
        // A decomposed accent composes and maps back to both source chars.
        let n = normalize("pe\u{301}ro");
        assert_eq!(n.as_str(), "péro");
        assert_eq!(n.origin(1), 1..3);
    }

    #[test]
    fn token_runs() {
        let text = "bilis, dumating 2days!";
        let toks: Vec<&str> = tokens(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(toks, vec!["bilis", "dumating", "2days"]);
        assert!(tokens("").is_empty());
        assert!(tokens("?!").is_empty());
    }

    proptest! {
        #[test]
        fn origins_are_monotone_and_cover(text in "\\PC{0,40}") {
            let n = normalize(&text);
            let total = text.chars().count();
            let mut prev_end = 0;
            for i in 0..n.char_len() {
                let r = n.origin(i);
                prop_assert!(r.start < r.end && r.end <= total);
                prop_assert!(r.start >= prev_end || r.start == n.origin(i.saturating_sub(1)).start);
                prev_end = r.end;
            }
        }

        #[test]
        fn idempotent(text in "[a-zA-Z !]{0,30}") {
            let once = normalize(&text);
            let twice = normalize(once.as_str());
            prop_assert_eq!(twice.as_str(), once.as_str());
        }
    }
}
