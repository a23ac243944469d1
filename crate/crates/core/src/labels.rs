//! Review, label-vector and span value types.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::HafError;
use crate::taxonomy::{General, Label, Specific, N_GENERAL, N_LABELS, N_SPECIFIC};

/// A single review. Text may freely mix Tagalog and English.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Review {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, HafError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(HafError::EmptyReview);
        }
        Ok(Review {
            id: id.into(),
            text,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }
}

/// 25-slot multi-label assignment: 4 generals then 21 specifics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector {
    pub general: [bool; N_GENERAL],
    pub specific: [bool; N_SPECIFIC],
}

impl LabelVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector without checking hierarchical consistency.
    pub fn raw(general: [bool; N_GENERAL], specific: [bool; N_SPECIFIC]) -> Self {
        LabelVector { general, specific }
    }

    /// Builds a vector, rejecting any specific whose parent is unset.
    pub fn strict(general: [bool; N_GENERAL], specific: [bool; N_SPECIFIC]) -> Result<Self, HafError> {
        let v = Self::raw(general, specific);
        v.check_hierarchy()?;
        Ok(v)
    }

    /// Builds a consistent vector containing the given labels plus the
    /// parents of every specific.
    pub fn from_labels<I: IntoIterator<Item = Label>>(labels: I) -> Self {
        let mut v = Self::empty();
        for label in labels {
            v.set_closed(label);
        }
        v
    }

    /// Parses labels from slugs; parents are added implicitly.
    pub fn from_slugs<'a, I: IntoIterator<Item = &'a str>>(slugs: I) -> Result<Self, HafError> {
        let labels = slugs
            .into_iter()
            .map(str::parse)
            .collect::<Result<Vec<Label>, _>>()?;
        Ok(Self::from_labels(labels))
    }

    pub fn from_slice(bits: &[bool]) -> Result<Self, HafError> {
        if bits.len() != N_LABELS {
            return Err(HafError::WrongLength {
                expected: N_LABELS,
                got: bits.len(),
            });
        }
        let mut v = Self::empty();
        v.general.copy_from_slice(&bits[..N_GENERAL]);
        v.specific.copy_from_slice(&bits[N_GENERAL..]);
        Ok(v)
    }

    pub fn get(&self, label: Label) -> bool {
        match label {
            Label::General(g) => self.general[g.index()],
            Label::Specific(s) => self.specific[s.index()],
        }
    }

    /// Sets a single bit. May break hierarchical consistency.
    pub fn set(&mut self, label: Label, value: bool) {
        match label {
            Label::General(g) => self.general[g.index()] = value,
            Label::Specific(s) => self.specific[s.index()] = value,
        }
    }

    /// Sets a label to true along with its parent general.
    pub fn set_closed(&mut self, label: Label) {
        self.set(label, true);
        self.general[label.category().index()] = true;
    }

    pub fn has_general(&self, g: General) -> bool {
        self.general[g.index()]
    }

    pub fn has_specific(&self, s: Specific) -> bool {
        self.specific[s.index()]
    }

    /// All 25 bits in canonical order.
    pub fn to_array(&self) -> [bool; N_LABELS] {
        let mut out = [false; N_LABELS];
        out[..N_GENERAL].copy_from_slice(&self.general);
        out[N_GENERAL..].copy_from_slice(&self.specific);
        out
    }

    /// Labels that are set, in canonical order.
    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        Label::all().filter(move |l| self.get(*l))
    }

    pub fn is_empty(&self) -> bool {
        !self.general.iter().chain(self.specific.iter()).any(|b| *b)
    }

    /// Specifics whose parent general is unset.
    pub fn hierarchy_violations(&self) -> Vec<Specific> {
        Specific::all()
            .filter(|s| self.specific[s.index()] && !self.general[s.parent().index()])
            .collect()
    }

    pub fn is_consistent(&self) -> bool {
        self.hierarchy_violations().is_empty()
    }

    pub fn check_hierarchy(&self) -> Result<(), HafError> {
        match self.hierarchy_violations().first() {
            None => Ok(()),
            Some(s) => Err(HafError::HierarchyViolation {
                specific: s.slug(),
                parent: s.parent().slug(),
            }),
        }
    }
}

/// Clears every specific whose parent general is false. Generals are left
/// untouched and no bit ever goes from false to true.
pub fn enforce_hierarchy(v: LabelVector) -> LabelVector {
    let mut out = v;
    for s in Specific::all() {
        if !v.general[s.parent().index()] {
            out.specific[s.index()] = false;
        }
    }
    out
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slugs: Vec<&str> = self.labels().map(Label::slug).collect();
        write!(f, "{{{}}}", slugs.join(", "))
    }
}

// Serialized as an object keyed by slug with all 25 keys in canonical order,
// so payloads are byte-stable without depending on map ordering features.
impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(N_LABELS))?;
        for label in Label::all() {
            map.serialize_entry(label.slug(), &self.get(label))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LabelMapVisitor;

        impl<'de> Visitor<'de> for LabelMapVisitor {
            type Value = LabelVector;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping label slugs to booleans")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<LabelVector, A::Error> {
                let mut v = LabelVector::empty();
                while let Some((key, value)) = map.next_entry::<String, bool>()? {
                    let label: Label = key.parse().map_err(serde::de::Error::custom)?;
                    v.set(label, value);
                }
                Ok(v)
            }
        }

        deserializer.deserialize_map(LabelMapVisitor)
    }
}

/// A character-offset span of review text attributed to a general category.
///
/// Offsets count Unicode scalar values, not bytes, and are half-open.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AspectSpan {
    pub category: General,
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl AspectSpan {
    /// Builds a span over `text[start..end]` (character offsets).
    pub fn new(text: &str, category: General, start: usize, end: usize) -> Result<Self, HafError> {
        let surface = char_slice(text, start, end)?.to_string();
        Ok(AspectSpan {
            category,
            start,
            end,
            surface,
        })
    }

    /// Checks offsets and surface against the review text.
    pub fn validate(&self, text: &str) -> Result<(), HafError> {
        let actual = char_slice(text, self.start, self.end)?;
        if actual != self.surface {
            return Err(HafError::SurfaceMismatch {
                start: self.start,
                end: self.end,
                surface: self.surface.clone(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn overlaps(&self, other: &AspectSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Slices `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Result<&str, HafError> {
    let len = text.chars().count();
    if start >= end || end > len {
        return Err(HafError::InvalidSpan { start, end, len });
    }
    let byte_start = char_to_byte(text, start);
    let byte_end = char_to_byte(text, end);
    Ok(&text[byte_start..byte_end])
}

/// Byte offset of the character at `char_index` (or `text.len()` at the end).
pub fn char_to_byte(text: &str, char_index: usize) -> usize {
    text.char_indices()
        .nth(char_index)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

/// Character index of a byte offset that lies on a char boundary.
pub fn byte_to_char(text: &str, byte_index: usize) -> usize {
    text[..byte_index].chars().count()
}
