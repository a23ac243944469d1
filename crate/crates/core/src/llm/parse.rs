//! Lenient extraction of the JSON payload from model output, strict
//! validation of its contents, and alignment of returned span strings to
//! review offsets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::labels::{byte_to_char, char_slice, enforce_hierarchy, AspectSpan, LabelVector};
use crate::rules::normalize;
use crate::taxonomy::{General, Label, Specific};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ParseFailure {
    #[error("no JSON object found")]
    NoObject,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("unknown label key {0:?}")]
    UnknownKey(String),
    #[error("non-boolean value for {0:?}")]
    NonBoolean(String),
    #[error("expected a list of strings for {0:?}")]
    NotStringList(String),
}

/// Content of code fences, then the whole text.
fn regions(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        match after[body_start..].find("```") {
            Some(close) => {
                out.push(&after[body_start..body_start + close]);
                rest = &after[body_start + close + 3..];
            }
            None => break,
        }
    }
    out.push(raw);
    out
}

/// Balanced top-level `{...}` substrings, string- and escape-aware.
fn balanced_objects(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        let (mut depth, mut in_str, mut esc) = (0usize, false, false);
        let mut end = None;
        for (j, &b) in bytes.iter().enumerate().skip(i) {
            if in_str {
                match (esc, b) {
                    (true, _) => esc = false,
                    (false, b'\\') => esc = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(j) => {
                out.push(&text[i..=j]);
                i = j + 1;
            }
            None => break,
        }
    }
    out
}

/// First JSON object in the output, looking inside code fences first.
pub fn find_json_object(raw: &str) -> Result<Map<String, Value>, ParseFailure> {
    let mut first_error = None;
    for region in regions(raw) {
        for candidate in balanced_objects(region) {
            match serde_json::from_str::<Value>(candidate) {
                Ok(Value::Object(map)) => return Ok(map),
                Ok(_) => {}
                Err(e) => {
                    first_error.get_or_insert_with(|| e.to_string());
                }
            }
        }
    }
    Err(first_error.map_or(ParseFailure::NoObject, ParseFailure::InvalidJson))
}

/// Parsed identification output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabels {
    pub labels: LabelVector,
    /// Specifics the model set under an unset general; these were cleared.
    pub repairs: Vec<Specific>,
}

/// Reads a slug-keyed boolean object. Missing keys are false; unknown keys
/// and non-boolean values fail. The result is hierarchy-repaired.
pub fn parse_boolean_output(raw: &str) -> Result<ParsedLabels, ParseFailure> {
    let map = find_json_object(raw)?;
    let mut v = LabelVector::empty();
    for (key, value) in &map {
        let label: Label = key.parse().map_err(|_| ParseFailure::UnknownKey(key.clone()))?;
        let b = value.as_bool().ok_or_else(|| ParseFailure::NonBoolean(key.clone()))?;
        v.set(label, b);
    }
    let repairs = v.hierarchy_violations();
    Ok(ParsedLabels {
        labels: enforce_hierarchy(v),
        repairs,
    })
}

/// Reads `{"PRODUCT": ["..."], ...}`; absent categories are empty.
pub fn parse_span_output(raw: &str) -> Result<BTreeMap<General, Vec<String>>, ParseFailure> {
    let map = find_json_object(raw)?;
    let mut out = BTreeMap::new();
    for (key, value) in &map {
        let g: General = key.parse().map_err(|_| ParseFailure::UnknownKey(key.clone()))?;
        let items = value.as_array().ok_or_else(|| ParseFailure::NotStringList(key.clone()))?;
        let strings = items
            .iter()
            .map(|x| x.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ParseFailure::NotStringList(key.clone()))?;
        out.entry(g).or_insert_with(Vec::new).extend(strings);
    }
    Ok(out)
}

/// A returned string that could not be placed in the review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unlocated {
    pub category: General,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub spans: Vec<AspectSpan>,
    pub dropped: Vec<Unlocated>,
}

/// Places each string in `text`: first as an exact substring (repeated
/// strings take successive occurrences), then by matching normalized forms.
pub fn align_spans(text: &str, answers: &BTreeMap<General, Vec<String>>) -> Alignment {
    let norm = normalize(text);
    let mut out = Alignment::default();
    for (&category, strings) in answers {
        let mut used: Vec<(usize, usize)> = Vec::new();
        for s in strings {
            let needle = s.trim();
            let located = (!needle.is_empty())
                .then(|| {
                    text.match_indices(needle)
                        .map(|(b, m)| (byte_to_char(text, b), byte_to_char(text, b + m.len())))
                        .find(|r| !used.contains(r))
                        .or_else(|| {
                            let n = normalize(needle);
                            if n.as_str().is_empty() {
                                return None;
                            }
                            norm.as_str()
                                .match_indices(n.as_str())
                                .map(|(b, m)| norm.original_range(b..b + m.len()))
                                .map(|r| (r.start, r.end))
                                .find(|r| !used.contains(r))
                        })
                })
                .flatten();
            match located {
                Some((start, end)) => {
                    used.push((start, end));
                    let surface = char_slice(text, start, end).expect("located inside text").to_string();
                    out.spans.push(AspectSpan {
                        category,
                        start,
                        end,
                        surface,
                    });
                }
                None => {
                    log::info!("dropping unlocatable {} span {s:?}", category.slug());
                    out.dropped.push(Unlocated {
                        category,
                        text: s.clone(),
                    });
                }
            }
        }
    }
    out.spans.sort_by_key(|s| (s.start, s.category.index(), s.end));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn price() -> Label {
        "PRICE".parse().unwrap()
    }

    #[test]
    fn direct_mapping() {
        let p = parse_boolean_output(r#"{"PRICE":true,"PRICE.Affordability":true,"SERVICE":false}"#).unwrap();
        assert_eq!(p.labels, LabelVector::from_slugs(["PRICE.Affordability"]).unwrap());
        assert!(p.repairs.is_empty());
    }

    #[test]
    fn fenced_payload_in_prose() {
        let raw = "Sure! Here is the answer:\n```json\n{\"PRICE\": true, \"PRICE.Affordability\": true}\n```\nLet me know {if} you need more.";
        let p = parse_boolean_output(raw).unwrap();
        assert!(p.labels.get(price()));
        let bare = "Answer: {\"PRICE\": true} -- done";
        assert!(parse_boolean_output(bare).unwrap().labels.get(price()));
        // Braces inside strings do not confuse the scanner.
        let tricky = "x {\"PRICE\": true, \"note\": \"}\"} y";
        assert_eq!(parse_boolean_output(tricky), Err(ParseFailure::UnknownKey("note".into())));
    }

    #[test]
    fn failures() {
        assert_eq!(parse_boolean_output(r#"{"PRICE": "yes"}"#), Err(ParseFailure::NonBoolean("PRICE".into())));
        assert!(parse_boolean_output(r#"{"PRICE": "yes"}"#).unwrap_err().to_string().starts_with("non-boolean value"));
        assert_eq!(parse_boolean_output(r#"{"VIBES": true}"#), Err(ParseFailure::UnknownKey("VIBES".into())));
        assert_eq!(parse_boolean_output("no idea"), Err(ParseFailure::NoObject));
        assert!(matches!(parse_boolean_output("{not json}"), Err(ParseFailure::InvalidJson(_))));
        assert_eq!(parse_boolean_output("{\"PRICE\": tr"), Err(ParseFailure::NoObject));
    }

    #[test]
    fn repairs_are_recorded() {
        let p = parse_boolean_output(r#"{"DELIVERY.Timeliness": true, "PRODUCT": true}"#).unwrap();
        assert_eq!(p.repairs, vec!["DELIVERY.Timeliness".parse::<Specific>().unwrap()]);
        assert_eq!(p.labels, LabelVector::from_slugs(["PRODUCT"]).unwrap());
    }

    fn answers(pairs: &[(General, &str)]) -> BTreeMap<General, Vec<String>> {
        let mut m: BTreeMap<General, Vec<String>> = BTreeMap::new();
        for (g, s) in pairs {
            m.entry(*g).or_default().push(s.to_string());
        }
        m
    }

    #[test]
    fn alignment() {
        let a = align_spans("mura ang item", &answers(&[(General::Price, "mura")]));
        assert_eq!(a.spans, vec![AspectSpan::new("mura ang item", General::Price, 0, 4).unwrap()]);

        let a = align_spans("mura ang item", &answers(&[(General::Price, "super cheap")]));
        assert!(a.spans.is_empty());
        assert_eq!(a.dropped.len(), 1);

        let text = "Sobrang MURAAAA talaga";
        let a = align_spans(text, &answers(&[(General::Price, "mura")]));
        assert_eq!(a.spans[0].surface, "MURAAAA");

        let text = "mura, mura pa rin";
        let a = align_spans(text, &answers(&[(General::Price, "mura"), (General::Price, "mura")]));
        assert_eq!((a.spans[0].start, a.spans[1].start), (0, 6));
        for s in &a.spans {
            s.validate(text).unwrap();
        }
    }

    #[test]
    fn span_output_parsing() {
        let m = parse_span_output(r#"{"price":["mura"],"DELIVERY":[]}"#).unwrap();
        assert_eq!(m[&General::Price], vec!["mura"]);
        assert!(matches!(parse_span_output(r#"{"PRICE":"mura"}"#), Err(ParseFailure::NotStringList(_))));
        assert!(matches!(parse_span_output(r#"{"PRICE.Affordability":[]}"#), Err(ParseFailure::UnknownKey(_))));
    }
}
