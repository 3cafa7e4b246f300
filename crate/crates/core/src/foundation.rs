//! The five moral foundations and a fixed-shape container keyed by them.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Foundation {
    Harm,
    Fairness,
    Loyalty,
    Authority,
    Purity,
}

impl Foundation {
    pub const ALL: [Foundation; 5] = [
        Foundation::Harm,
        Foundation::Fairness,
        Foundation::Loyalty,
        Foundation::Authority,
        Foundation::Purity,
    ];

    /// Short name used in prompts ("Harm", "Fairness", ...).
    pub fn name(self) -> &'static str {
        match self {
            Foundation::Harm => "Harm",
            Foundation::Fairness => "Fairness",
            Foundation::Loyalty => "Loyalty",
            Foundation::Authority => "Authority",
            Foundation::Purity => "Purity",
        }
    }

    /// Paired label used in report tables ("Harm/Care", ...).
    pub fn label(self) -> &'static str {
        match self {
            Foundation::Harm => "Harm/Care",
            Foundation::Fairness => "Fairness/Reciprocity",
            Foundation::Loyalty => "Loyalty/In-Group",
            Foundation::Authority => "Authority/Respect",
            Foundation::Purity => "Purity/Sanctity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Foundation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown moral foundation {0:?}")]
pub struct UnknownFoundation(pub String);

impl FromStr for Foundation {
    type Err = UnknownFoundation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "harm" | "care" | "harm/care" => Ok(Foundation::Harm),
            "fairness" | "reciprocity" | "fairness/reciprocity" => Ok(Foundation::Fairness),
            "loyalty" | "ingroup" | "in-group" | "loyalty/in-group" => Ok(Foundation::Loyalty),
            "authority" | "respect" | "authority/respect" => Ok(Foundation::Authority),
            "purity" | "sanctity" | "purity/sanctity" => Ok(Foundation::Purity),
            _ => Err(UnknownFoundation(s.to_string())),
        }
    }
}

/// One value per foundation. Serializes as `{"harm": .., "fairness": .., ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct PerFoundation<T> {
    pub harm: T,
    pub fairness: T,
    pub loyalty: T,
    pub authority: T,
    pub purity: T,
}

impl<T> PerFoundation<T> {
    pub fn from_fn(mut f: impl FnMut(Foundation) -> T) -> Self {
        PerFoundation {
            harm: f(Foundation::Harm),
            fairness: f(Foundation::Fairness),
            loyalty: f(Foundation::Loyalty),
            authority: f(Foundation::Authority),
            purity: f(Foundation::Purity),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Foundation, &T) -> U) -> PerFoundation<U> {
        PerFoundation::from_fn(|fd| f(fd, &self[fd]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Foundation, &T)> {
        Foundation::ALL.into_iter().map(move |f| (f, &self[f]))
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(Foundation) -> Result<T, E>) -> Result<Self, E> {
        Ok(PerFoundation {
            harm: f(Foundation::Harm)?,
            fairness: f(Foundation::Fairness)?,
            loyalty: f(Foundation::Loyalty)?,
            authority: f(Foundation::Authority)?,
            purity: f(Foundation::Purity)?,
        })
    }
}

impl<T: Clone> PerFoundation<T> {
    pub fn splat(value: T) -> Self {
        PerFoundation::from_fn(|_| value.clone())
    }
}

impl<T> Index<Foundation> for PerFoundation<T> {
    type Output = T;

    fn index(&self, f: Foundation) -> &T {
        match f {
            Foundation::Harm => &self.harm,
            Foundation::Fairness => &self.fairness,
            Foundation::Loyalty => &self.loyalty,
            Foundation::Authority => &self.authority,
            Foundation::Purity => &self.purity,
        }
    }
}

impl<T> IndexMut<Foundation> for PerFoundation<T> {
    fn index_mut(&mut self, f: Foundation) -> &mut T {
        match f {
            Foundation::Harm => &mut self.harm,
            Foundation::Fairness => &mut self.fairness,
            Foundation::Loyalty => &mut self.loyalty,
            Foundation::Authority => &mut self.authority,
            Foundation::Purity => &mut self.purity,
        }
    }
}

/// Round half away from zero to the nearest integer.
///
/// `f64::round` already has these semantics; the wrapper exists so every
/// call site that depends on the convention names it.
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}
