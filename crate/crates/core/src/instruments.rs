//! Questionnaire definitions, answer parsing and instrument scoring.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::foundation::{Foundation, PerFoundation};

const MFQ_JSON: &str = include_str!("../assets/instruments/mfq30.json");
const DILEMMAS_JSON: &str = include_str!("../assets/instruments/dilemmas.json");

/// MFQ catch items: "good at math" and "better to do good than to do bad".
pub const CATCH_MATH_ITEM: u32 = 6;
pub const CATCH_GOOD_ITEM: u32 = 22;

pub const RELEVANCE_LABELS: [&str; 6] = [
    "[0] = not at all relevant (This consideration has nothing to do with my judgments of right and wrong)",
    "[1] = not very relevant",
    "[2] = slightly relevant",
    "[3] = somewhat relevant",
    "[4] = very relevant",
    "[5] = extremely relevant (This is one of the most important factors when I judge right and wrong)",
];

pub const AGREEMENT_LABELS: [&str; 6] = [
    "[0] = Strongly disagree",
    "[1] = Moderately disagree",
    "[2] = Slightly disagree",
    "[3] = Slightly agree",
    "[4] = Moderately agree",
    "[5] = Strongly agree",
];

pub const DILEMMA_LABELS: [&str; 6] = [
    "[1] = Absolutely unacceptable",
    "[2] = Mostly unacceptable",
    "[3] = Slightly unacceptable",
    "[4] = Slightly acceptable",
    "[5] = Mostly acceptable",
    "[6] = Absolutely acceptable",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstrumentError {
    #[error("no integer rating found in response")]
    Unparseable,
    #[error("rating {value} outside scale [{min}, {max}]")]
    OutOfScale { value: i64, min: i64, max: i64 },
    #[error("missing response for item {0}")]
    MissingItem(u32),
    #[error("duplicate response for item {0}")]
    DuplicateItem(u32),
    #[error("response for unknown item {0}")]
    UnknownItem(u32),
    #[error("expected {expected} ratings, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("invalid instrument definition: {0}")]
    InvalidDefinition(String),
}

pub type Result<T> = std::result::Result<T, InstrumentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Relevance,
    Agreement,
    Dilemma,
}

impl Part {
    pub fn scale(self) -> Scale {
        match self {
            Part::Relevance | Part::Agreement => Scale { min: 0, max: 5 },
            Part::Dilemma => Scale { min: 1, max: 6 },
        }
    }

    pub fn labels(self) -> &'static [&'static str; 6] {
        match self {
            Part::Relevance => &RELEVANCE_LABELS,
            Part::Agreement => &AGREEMENT_LABELS,
            Part::Dilemma => &DILEMMA_LABELS,
        }
    }
}

/// What an item is keyed to: a foundation or an attention check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKey {
    Harm,
    Fairness,
    Loyalty,
    Authority,
    Purity,
    Catch,
}

impl ItemKey {
    pub fn foundation(self) -> Option<Foundation> {
        match self {
            ItemKey::Harm => Some(Foundation::Harm),
            ItemKey::Fairness => Some(Foundation::Fairness),
            ItemKey::Loyalty => Some(Foundation::Loyalty),
            ItemKey::Authority => Some(Foundation::Authority),
            ItemKey::Purity => Some(Foundation::Purity),
            ItemKey::Catch => None,
        }
    }
}

impl From<Foundation> for ItemKey {
    fn from(f: Foundation) -> Self {
        match f {
            Foundation::Harm => ItemKey::Harm,
            Foundation::Fairness => ItemKey::Fairness,
            Foundation::Loyalty => ItemKey::Loyalty,
            Foundation::Authority => ItemKey::Authority,
            Foundation::Purity => ItemKey::Purity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub min: i64,
    pub max: i64,
}

impl Scale {
    pub fn contains(&self, v: i64) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentItem {
    pub item_id: u32,
    pub part: Part,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
    /// Untagged dilemmas cannot be administered trait-isolated.
    #[serde(default)]
    pub foundation: Option<ItemKey>,
    pub scale_min: i64,
    pub scale_max: i64,
}

impl InstrumentItem {
    pub fn scale(&self) -> Scale {
        Scale { min: self.scale_min, max: self.scale_max }
    }

    pub fn is_catch(&self) -> bool {
        self.foundation == Some(ItemKey::Catch)
    }

    pub fn scored_foundation(&self) -> Option<Foundation> {
        self.foundation.and_then(ItemKey::foundation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    pub name: String,
    pub items: Vec<InstrumentItem>,
}

impl Instrument {
    /// Parse and validate an instrument definition.
    pub fn from_json(json: &str) -> Result<Self> {
        let inst: Instrument =
            serde_json::from_str(json).map_err(|e| InstrumentError::InvalidDefinition(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(InstrumentError::InvalidDefinition(m));
        if self.items.is_empty() {
            return bad("no items".into());
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.item_id) {
                return bad(format!("duplicate item id {}", item.item_id));
            }
            if item.text.trim().is_empty() {
                return bad(format!("item {} has empty text", item.item_id));
            }
            if item.scale() != item.part.scale() {
                return bad(format!(
                    "item {} scale [{}, {}] does not match its part",
                    item.item_id, item.scale_min, item.scale_max
                ));
            }
            if item.part == Part::Dilemma && item.is_catch() {
                return bad(format!("dilemma {} cannot be a catch item", item.item_id));
            }
        }
        Ok(())
    }

    pub fn item(&self, item_id: u32) -> Option<&InstrumentItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// Re-key a dilemma for trait-isolated prompting.
    pub fn retag(&mut self, item_id: u32, key: Option<Foundation>) -> Result<()> {
        let item = self
            .items
            .iter_mut()
            .find(|i| i.item_id == item_id)
            .ok_or(InstrumentError::UnknownItem(item_id))?;
        item.foundation = key.map(ItemKey::from);
        Ok(())
    }

    /// Number of scored items per foundation.
    pub fn item_counts(&self) -> PerFoundation<usize> {
        let mut counts = PerFoundation::splat(0usize);
        for item in &self.items {
            if let Some(f) = item.scored_foundation() {
                counts[f] += 1;
            }
        }
        counts
    }
}

/// The MFQ-30 as administered: 16 relevance and 14 agreement items.
pub fn mfq() -> Instrument {
    Instrument::from_json(MFQ_JSON).expect("bundled MFQ is valid")
}

pub fn mfq_items() -> Vec<InstrumentItem> {
    mfq().items
}

/// The six sacrificial dilemmas with their default foundation tags.
pub fn dilemmas() -> Instrument {
    Instrument::from_json(DILEMMAS_JSON).expect("bundled dilemmas are valid")
}

pub fn dilemma_items() -> Vec<InstrumentItem> {
    dilemmas().items
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRating {
    pub rating: i64,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentResponse {
    pub item_id: u32,
    pub rating: i64,
    pub rationale: String,
    pub raw_text: String,
}

fn find_ci(haystack_lower: &str, needle: &str, from: usize) -> Option<usize> {
    haystack_lower[from..].find(needle).map(|p| p + from)
}

/// Integer literal value; overlong digit runs saturate.
fn parse_int(neg: bool, digits: &str) -> i64 {
    let v = digits.parse::<i64>().unwrap_or(i64::MAX);
    if neg {
        -v
    } else {
        v
    }
}

/// First `( n )` in `s`.
fn first_parenthesized(s: &str) -> Option<i64> {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'(' {
            let mut j = i + 1;
            while j < b.len() && b[j] == b' ' {
                j += 1;
            }
            let neg = j < b.len() && b[j] == b'-';
            if neg {
                j += 1;
            }
            let start = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            let end = j;
            while j < b.len() && b[j] == b' ' {
                j += 1;
            }
            if end > start && j < b.len() && b[j] == b')' {
                return Some(parse_int(neg, &s[start..end]));
            }
        }
        i += 1;
    }
    None
}

/// First integer not glued to letters, digits or a decimal point.
fn first_standalone(s: &str) -> Option<i64> {
    let b = s.as_bytes();
    let glued = |c: char| c.is_alphanumeric() || c == '_';
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let end = i;
        let mut before = s[..start].chars().rev();
        let prev = before.next();
        let after = &s[end..];
        let before_ok = prev.is_none_or(|c| !(glued(c) || c == '.'));
        let after_ok = match after.chars().next() {
            None => true,
            Some('.') => !after[1..].starts_with(|c: char| c.is_ascii_digit()),
            Some(c) => !glued(c),
        };
        if before_ok && after_ok {
            let neg = prev == Some('-') && before.next().is_none_or(|c| !glued(c));
            return Some(parse_int(neg, &s[start..end]));
        }
    }
    None
}

/// Extract a rating and rationale from a free-text answer.
///
/// Rating lookup order: the first parenthesized integer after
/// `Response:`, then the first standalone integer after `Response:`, then
/// the first standalone integer anywhere. The `Response:` segment ends at
/// `Rationale:`. Markers are case-insensitive.
pub fn parse_rating(raw_text: &str, scale: Scale) -> Result<ParsedRating> {
    let lower = raw_text.to_ascii_lowercase();
    let rationale_at = find_ci(&lower, "rationale:", 0);
    let rationale = rationale_at
        .map(|p| raw_text[p + "rationale:".len()..].trim().to_string())
        .unwrap_or_default();

    let mut rating = None;
    if let Some(p) = find_ci(&lower, "response:", 0) {
        let start = p + "response:".len();
        let end = find_ci(&lower, "rationale:", start).unwrap_or(raw_text.len());
        let segment = &raw_text[start..end];
        rating = first_parenthesized(segment).or_else(|| first_standalone(segment));
    }
    let rating = rating.or_else(|| first_standalone(raw_text)).ok_or(InstrumentError::Unparseable)?;
    if !scale.contains(rating) {
        return Err(InstrumentError::OutOfScale { value: rating, min: scale.min, max: scale.max });
    }
    Ok(ParsedRating { rating, rationale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CatchFlags {
    /// "Good at math" rated at least somewhat relevant (>= 3).
    pub math_relevant: bool,
    /// "Better to do good than bad" rated at most slightly disagree (<= 2).
    pub good_rejected: bool,
}

impl CatchFlags {
    pub fn suspect(&self) -> bool {
        self.math_relevant || self.good_rejected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfqScore {
    pub raw: PerFoundation<f64>,
    /// raw / (5 * n_items) * 10.
    pub normalized: PerFoundation<f64>,
    pub n_items: PerFoundation<usize>,
    pub catch_flags: CatchFlags,
}

fn index_responses<'a>(instrument: &Instrument, responses: &'a [InstrumentResponse]) -> Result<BTreeMap<u32, &'a InstrumentResponse>> {
    let mut by_id = BTreeMap::new();
    for r in responses {
        let item = instrument.item(r.item_id).ok_or(InstrumentError::UnknownItem(r.item_id))?;
        let scale = item.scale();
        if !scale.contains(r.rating) {
            return Err(InstrumentError::OutOfScale { value: r.rating, min: scale.min, max: scale.max });
        }
        if by_id.insert(r.item_id, r).is_some() {
            return Err(InstrumentError::DuplicateItem(r.item_id));
        }
    }
    Ok(by_id)
}

/// Score the bundled MFQ.
pub fn score_mfq(responses: &[InstrumentResponse]) -> Result<MfqScore> {
    score_mfq_with(&mfq(), responses)
}

/// Sum ratings per foundation over scored items and rescale to 0-10 by the
/// number of items actually present. Catch items only set flags.
pub fn score_mfq_with(instrument: &Instrument, responses: &[InstrumentResponse]) -> Result<MfqScore> {
    let by_id = index_responses(instrument, responses)?;
    let mut raw = PerFoundation::splat(0.0f64);
    for item in &instrument.items {
        if let Some(f) = item.scored_foundation() {
            let r = by_id.get(&item.item_id).ok_or(InstrumentError::MissingItem(item.item_id))?;
            raw[f] += r.rating as f64;
        }
    }
    let n_items = instrument.item_counts();
    let normalized = raw.map(|f, &v| if n_items[f] == 0 { 0.0 } else { v / (5.0 * n_items[f] as f64) * 10.0 });
    let catch_flags = CatchFlags {
        math_relevant: by_id.get(&CATCH_MATH_ITEM).is_some_and(|r| r.rating >= 3),
        good_rejected: by_id.get(&CATCH_GOOD_ITEM).is_some_and(|r| r.rating <= 2),
    };
    Ok(MfqScore { raw, normalized, n_items, catch_flags })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacrificeScore {
    /// Ratings in dilemma order.
    pub ratings: Vec<i64>,
    pub smas: f64,
}

/// Sacrificial moral acceptability score: mean of six 1-6 ratings.
pub fn smas(ratings: &[i64]) -> Result<f64> {
    if ratings.len() != 6 {
        return Err(InstrumentError::WrongArity { expected: 6, got: ratings.len() });
    }
    let scale = Part::Dilemma.scale();
    if let Some(&bad) = ratings.iter().find(|&&r| !scale.contains(r)) {
        return Err(InstrumentError::OutOfScale { value: bad, min: scale.min, max: scale.max });
    }
    Ok(ratings.iter().sum::<i64>() as f64 / 6.0)
}

pub fn score_dilemmas(instrument: &Instrument, responses: &[InstrumentResponse]) -> Result<SacrificeScore> {
    let by_id = index_responses(instrument, responses)?;
    let ratings = instrument
        .items
        .iter()
        .map(|item| by_id.get(&item.item_id).map(|r| r.rating).ok_or(InstrumentError::MissingItem(item.item_id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SacrificeScore { smas: smas(&ratings)?, ratings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn responses(rating: impl Fn(&InstrumentItem) -> i64) -> Vec<InstrumentResponse> {
        mfq_items()
            .iter()
            .map(|i| InstrumentResponse { item_id: i.item_id, rating: rating(i), rationale: String::new(), raw_text: String::new() })
            .collect()
    }

    #[test]
    fn mfq_shape() {
        let items = mfq_items();
        assert_eq!(items.len(), 30);
        assert_eq!(items[0].text, "Whether or not someone suffered emotionally");
        assert_eq!(items[0].foundation, Some(ItemKey::Harm));
        assert_eq!(items[0].part, Part::Relevance);
        assert_eq!(items[21].item_id, 22);
        assert_eq!(items[21].text, "It is better to do good than to do bad.");
        assert!(items[21].is_catch());
        let catches: Vec<u32> = items.iter().filter(|i| i.is_catch()).map(|i| i.item_id).collect();
        assert_eq!(catches, vec![6, 22]);
        let ids = |k: ItemKey| items.iter().filter(|i| i.foundation == Some(k)).map(|i| i.item_id).collect::<Vec<_>>();
        assert_eq!(ids(ItemKey::Harm), vec![1, 7, 12, 17, 23, 28]);
        assert_eq!(ids(ItemKey::Fairness), vec![2, 8, 13, 18, 24, 29]);
        assert_eq!(ids(ItemKey::Loyalty), vec![3, 9, 14, 19, 25, 30]);
        assert_eq!(ids(ItemKey::Authority), vec![4, 10, 15, 20, 26]);
        assert_eq!(ids(ItemKey::Purity), vec![5, 11, 16, 21, 27]);
        assert_eq!(items.iter().filter(|i| i.part == Part::Relevance).count(), 16);
    }

    #[test]
    fn dilemma_shape() {
        let items = dilemma_items();
        assert_eq!(items.len(), 6);
        assert_eq!(items[0].title.as_deref(), Some("The Footbridge Problem"));
        assert_eq!(items[5].title.as_deref(), Some("The Refugee Dilemma"));
        assert!(items.iter().all(|i| i.scale_max == 6 && i.scale_min == 1));
        assert_eq!(items[3].foundation, Some(ItemKey::Fairness));
        assert_eq!(items[5].foundation, Some(ItemKey::Loyalty));
    }

    #[test]
    fn definition_validation() {
        assert!(Instrument::from_json("{}").is_err());
        let bad_scale = r#"{"name":"x","items":[{"item_id":1,"part":"dilemma","text":"t","scale_min":0,"scale_max":5}]}"#;
        assert!(Instrument::from_json(bad_scale).is_err());
        let dup = r#"{"name":"x","items":[{"item_id":1,"part":"agreement","text":"t","scale_min":0,"scale_max":5},
                                         {"item_id":1,"part":"agreement","text":"u","scale_min":0,"scale_max":5}]}"#;
        assert!(Instrument::from_json(dup).is_err());
        let mut d = dilemmas();
        d.retag(4, None).unwrap();
        assert_eq!(d.item(4).unwrap().foundation, None);
        assert!(d.retag(9, None).is_err());
    }

    #[test]
    fn parse_rating_examples() {
        let agree = Part::Agreement.scale();
        let p = parse_rating("Response: (4) Moderately agree\nRationale: because\u{2026}", agree).unwrap();
        assert_eq!(p, ParsedRating { rating: 4, rationale: "because\u{2026}".into() });
        assert_eq!(
            parse_rating("Response: 7", Part::Dilemma.scale()),
            Err(InstrumentError::OutOfScale { value: 7, min: 1, max: 6 })
        );
        let p = parse_rating("I think the answer is 3 overall.", Part::Dilemma.scale()).unwrap();
        assert_eq!(p, ParsedRating { rating: 3, rationale: String::new() });
    }

    #[test]
    fn parse_rating_precedence() {
        let s = Part::Dilemma.scale();
        // parenthesized beats bare after the marker
        assert_eq!(parse_rating("Question 1 ... Response: 2 (5)", s).unwrap().rating, 5);
        // bare after marker beats earlier bare numbers
        assert_eq!(parse_rating("Question 1: blah\nResponse: 2\nRationale: 6 reasons", s).unwrap().rating, 2);
        // numbers in the rationale are not used when the marker has one
        assert_eq!(parse_rating("response: (3) slightly unacceptable\nRATIONALE: I had 5 thoughts", s).unwrap().rating, 3);
        // decimals and glued digits are not standalone
        assert_eq!(parse_rating("Scored 4.5 at v2, final answer 4", s).unwrap().rating, 4);
        assert_eq!(parse_rating("Response: -1", s), Err(InstrumentError::OutOfScale { value: -1, min: 1, max: 6 }));
        assert_eq!(parse_rating("no digits here", s), Err(InstrumentError::Unparseable));
        assert!(matches!(parse_rating("Response: 99999999999999999999999", s), Err(InstrumentError::OutOfScale { .. })));
        assert_eq!(parse_rating("Response: (0) not at all relevant", Part::Relevance.scale()).unwrap().rating, 0);
    }

    #[test]
    fn score_mfq_examples() {
        let top = score_mfq(&responses(|_| 5)).unwrap();
        assert_eq!(top.raw.harm, 30.0);
        assert_eq!(top.raw.authority, 25.0);
        assert_eq!(top.normalized, PerFoundation::splat(10.0));
        let zero = score_mfq(&responses(|_| 0)).unwrap();
        assert_eq!(zero.raw, PerFoundation::splat(0.0));
        assert_eq!(zero.normalized, PerFoundation::splat(0.0));
        assert!(!zero.catch_flags.math_relevant && zero.catch_flags.good_rejected);

        let harm_ratings = [3, 4, 4, 5, 3, 4];
        let harm_ids = [1, 7, 12, 17, 23, 28];
        let r = responses(|i| harm_ids.iter().position(|&h| h == i.item_id).map(|p| harm_ratings[p]).unwrap_or(2));
        let s = score_mfq(&r).unwrap();
        let oracle: i64 = harm_ratings.iter().sum();
        assert_eq!(s.raw.harm, oracle as f64);
        assert_eq!(oracle, 23);
        assert!((s.normalized.harm - 7.667).abs() < 5e-4);
    }

    #[test]
    fn score_mfq_errors() {
        let mut r = responses(|_| 3);
        r.retain(|x| x.item_id != 12);
        assert_eq!(score_mfq(&r), Err(InstrumentError::MissingItem(12)));
        let mut r = responses(|_| 3);
        r.push(r[0].clone());
        assert_eq!(score_mfq(&r), Err(InstrumentError::DuplicateItem(1)));
        let mut r = responses(|_| 3);
        r[0].item_id = 99;
        assert_eq!(score_mfq(&r), Err(InstrumentError::UnknownItem(99)));
        // catch items may be absent
        let mut r = responses(|_| 3);
        r.retain(|x| x.item_id != 6 && x.item_id != 22);
        assert!(!score_mfq(&r).unwrap().catch_flags.suspect());
    }

    #[test]
    fn smas_examples() {
        assert!((smas(&[2, 5, 3, 2, 4, 3]).unwrap() - 3.1667).abs() < 1e-4);
        assert_eq!(smas(&[1; 6]).unwrap(), 1.0);
        assert_eq!(smas(&[6; 6]).unwrap(), 6.0);
        assert_eq!(smas(&[1; 5]), Err(InstrumentError::WrongArity { expected: 6, got: 5 }));
        assert!(matches!(smas(&[0, 1, 1, 1, 1, 1]), Err(InstrumentError::OutOfScale { .. })));
    }

    #[test]
    fn score_dilemmas_orders_by_item() {
        let inst = dilemmas();
        let rs: Vec<InstrumentResponse> = [(6, 3), (1, 2), (2, 5), (5, 4), (3, 3), (4, 2)]
            .iter()
            .map(|&(id, r)| InstrumentResponse { item_id: id, rating: r, rationale: String::new(), raw_text: String::new() })
            .collect();
        let s = score_dilemmas(&inst, &rs).unwrap();
        assert_eq!(s.ratings, vec![2, 5, 3, 2, 4, 3]);
        assert!(score_dilemmas(&inst, &rs[..5]).is_err());
    }

    fn ratings_strategy() -> impl Strategy<Value = Vec<i64>> {
        prop::collection::vec(0i64..=5, 30)
    }

    proptest! {
        #[test]
        fn mfq_permutation_invariant(r in ratings_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rs = responses(|i| r[i.item_id as usize - 1]);
            let a = score_mfq(&rs).unwrap();
            rs.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
            prop_assert_eq!(a, score_mfq(&rs).unwrap());
        }

        #[test]
        fn mfq_bump_is_local(r in ratings_strategy(), pick in 1u32..=30) {
            let base = responses(|i| r[i.item_id as usize - 1]);
            prop_assume!(base[pick as usize - 1].rating < 5);
            let mut bumped = base.clone();
            bumped[pick as usize - 1].rating += 1;
            let a = score_mfq(&base).unwrap();
            let b = score_mfq(&bumped).unwrap();
            let item = mfq().item(pick).unwrap().clone();
            for f in Foundation::ALL {
                let want = if item.scored_foundation() == Some(f) { 1.0 } else { 0.0 };
                prop_assert_eq!(b.raw[f] - a.raw[f], want);
                let n = a.n_items[f] as f64;
                prop_assert!((a.normalized[f] - a.raw[f] * 10.0 / (5.0 * n)).abs() < 1e-12);
            }
        }

        #[test]
        fn smas_bounds_and_shift(r in prop::collection::vec(1i64..=5, 6)) {
            let s = smas(&r).unwrap();
            let lo = *r.iter().min().unwrap() as f64;
            let hi = *r.iter().max().unwrap() as f64;
            prop_assert!(lo <= s && s <= hi);
            let shifted: Vec<i64> = r.iter().map(|v| v + 1).collect();
            prop_assert!((smas(&shifted).unwrap() - (s + 1.0)).abs() < 1e-12);
        }

        #[test]
        fn parse_rating_never_panics(s in any::<String>()) {
            if let Ok(p) = parse_rating(&s, Part::Dilemma.scale()) {
                prop_assert!((1..=6).contains(&p.rating));
            }
        }
    }
}
