//! The fixed two-level aspect hierarchy: four general categories over
//! twenty-one specific aspects.
//!
//! Every label vector, file and wire format in this crate uses the canonical
//! ordering defined here: the four generals first, then the specifics grouped
//! by parent in table reading order. Machine-readable identifiers are slugs
//! (`PRICE`, `PRICE.Value_for_Money`); display names keep the original
//! spelling (`Value for Money`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::HafError;

/// Number of general categories.
pub const N_GENERAL: usize = 4;
/// Number of specific aspects.
pub const N_SPECIFIC: usize = 21;
/// Total number of labels in a [`LabelVector`](crate::LabelVector).
pub const N_LABELS: usize = N_GENERAL + N_SPECIFIC;

/// Version of the exported taxonomy document.
pub const TAXONOMY_VERSION: u32 = 1;

/// One of the four general aspect categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum General {
    Product,
    Delivery,
    Price,
    Service,
}

impl General {
    pub const ALL: [General; N_GENERAL] = [
        General::Product,
        General::Delivery,
        General::Price,
        General::Service,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self, HafError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(HafError::IndexOutOfRange {
                index,
                len: N_GENERAL,
            })
    }

    pub fn slug(self) -> &'static str {
        match self {
            General::Product => "PRODUCT",
            General::Delivery => "DELIVERY",
            General::Price => "PRICE",
            General::Service => "SERVICE",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            General::Product => "Product",
            General::Delivery => "Delivery",
            General::Price => "Price",
            General::Service => "Service",
        }
    }

    /// Specific aspects under this category, in canonical order.
    pub fn specifics(self) -> impl Iterator<Item = Specific> {
        SPECIFICS
            .iter()
            .enumerate()
            .filter(move |(_, def)| def.parent == self)
            .map(|(i, _)| Specific(i as u8))
    }

    /// Range of canonical specific indices owned by this category.
    pub fn specific_range(self) -> std::ops::Range<usize> {
        match self {
            General::Product => 0..10,
            General::Delivery => 10..14,
            General::Price => 14..17,
            General::Service => 17..21,
        }
    }
}

impl fmt::Display for General {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for General {
    type Err = HafError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        General::ALL
            .into_iter()
            .find(|g| g.slug().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| HafError::UnknownLabel(s.to_string()))
    }
}

impl Serialize for General {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.slug())
    }
}

impl<'de> Deserialize<'de> for General {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

struct SpecificDef {
    parent: General,
    name: &'static str,
    slug: &'static str,
}

const fn def(parent: General, name: &'static str, slug: &'static str) -> SpecificDef {
    SpecificDef { parent, name, slug }
}

static SPECIFICS: [SpecificDef; N_SPECIFIC] = [
    def(General::Product, "Color", "PRODUCT.Color"),
    def(General::Product, "Condition", "PRODUCT.Condition"),
    def(General::Product, "Correctness", "PRODUCT.Correctness"),
    def(General::Product, "Durability", "PRODUCT.Durability"),
    def(General::Product, "Effectiveness", "PRODUCT.Effectiveness"),
    def(General::Product, "Functionality", "PRODUCT.Functionality"),
    def(General::Product, "Material", "PRODUCT.Material"),
    def(General::Product, "Sensory", "PRODUCT.Sensory"),
    def(General::Product, "Size/Measurement", "PRODUCT.Size_Measurement"),
    def(General::Product, "General", "PRODUCT.General"),
    def(General::Delivery, "Condition", "DELIVERY.Condition"),
    def(General::Delivery, "Correctness", "DELIVERY.Correctness"),
    def(General::Delivery, "Timeliness", "DELIVERY.Timeliness"),
    def(General::Delivery, "General", "DELIVERY.General"),
    def(General::Price, "Affordability", "PRICE.Affordability"),
    def(General::Price, "Value for Money", "PRICE.Value_for_Money"),
    def(General::Price, "General", "PRICE.General"),
    def(General::Service, "Handling", "SERVICE.Handling"),
    def(General::Service, "Responsiveness", "SERVICE.Responsiveness"),
    def(General::Service, "Trustworthiness", "SERVICE.Trustworthiness"),
    def(General::Service, "General", "SERVICE.General"),
];

/// A specific aspect, identified by its canonical index `0..21`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Specific(u8);

impl Specific {
    pub fn new(index: usize) -> Result<Self, HafError> {
        if index < N_SPECIFIC {
            Ok(Specific(index as u8))
        } else {
            Err(HafError::IndexOutOfRange {
                index,
                len: N_SPECIFIC,
            })
        }
    }

    pub fn all() -> impl Iterator<Item = Specific> {
        (0..N_SPECIFIC as u8).map(Specific)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn parent(self) -> General {
        SPECIFICS[self.index()].parent
    }

    /// Qualified machine-readable identifier, e.g. `DELIVERY.Correctness`.
    pub fn slug(self) -> &'static str {
        SPECIFICS[self.index()].slug
    }

    /// Name as it appears in the framework table, e.g. `Size/Measurement`.
    pub fn display_name(self) -> &'static str {
        SPECIFICS[self.index()].name
    }
}

impl fmt::Display for Specific {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Specific {
    type Err = HafError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Label>()? {
            Label::Specific(sp) => Ok(sp),
            Label::General(_) => Err(HafError::UnknownLabel(s.to_string())),
        }
    }
}

impl Serialize for Specific {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.slug())
    }
}

impl<'de> Deserialize<'de> for Specific {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Returns the parent general index of a specific index.
pub fn parent_of(specific_index: usize) -> Result<usize, HafError> {
    Ok(Specific::new(specific_index)?.parent().index())
}

/// Any of the 25 labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    General(General),
    Specific(Specific),
}

impl Label {
    /// Every label in canonical order.
    pub fn all() -> impl Iterator<Item = Label> {
        General::ALL
            .into_iter()
            .map(Label::General)
            .chain(Specific::all().map(Label::Specific))
    }

    /// Position in a 25-slot label vector.
    pub fn index(self) -> usize {
        match self {
            Label::General(g) => g.index(),
            Label::Specific(s) => N_GENERAL + s.index(),
        }
    }

    pub fn from_index(index: usize) -> Result<Self, HafError> {
        if index < N_GENERAL {
            Ok(Label::General(General::from_index(index)?))
        } else {
            Specific::new(index.wrapping_sub(N_GENERAL))
                .map(Label::Specific)
                .map_err(|_| HafError::IndexOutOfRange {
                    index,
                    len: N_LABELS,
                })
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Label::General(g) => g.slug(),
            Label::Specific(s) => s.slug(),
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Label::General(g) => g.display_name(),
            Label::Specific(s) => s.display_name(),
        }
    }

    /// The general category this label belongs to (itself for generals).
    pub fn category(self) -> General {
        match self {
            Label::General(g) => g,
            Label::Specific(s) => s.parent(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Label {
    type Err = HafError;

    /// Slugs match case-insensitively; the display spelling of the two
    /// slash/space names is accepted as an alias.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        let canon = wanted.replace(['/', ' '], "_");
        Label::all()
            .find(|l| l.slug().eq_ignore_ascii_case(&canon))
            .ok_or_else(|| HafError::UnknownLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.slug())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serializable description of the taxonomy for UIs and config tooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    pub schema: String,
    pub version: u32,
    pub labels: Vec<TaxonomyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub slug: String,
    pub display_name: String,
    pub level: LabelLevel,
    /// Parent slug; `None` for generals.
    pub parent: Option<String>,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelLevel {
    General,
    Specific,
}

/// Builds the versioned taxonomy document.
pub fn taxonomy_document() -> TaxonomyDocument {
    let labels = Label::all()
        .map(|label| TaxonomyEntry {
            slug: label.slug().to_string(),
            display_name: label.display_name().to_string(),
            level: match label {
                Label::General(_) => LabelLevel::General,
                Label::Specific(_) => LabelLevel::Specific,
            },
            parent: match label {
                Label::General(_) => None,
                Label::Specific(s) => Some(s.parent().slug().to_string()),
            },
            index: label.index(),
        })
        .collect();
    TaxonomyDocument {
        schema: "haf.taxonomy".to_string(),
        version: TAXONOMY_VERSION,
        labels,
    }
}
