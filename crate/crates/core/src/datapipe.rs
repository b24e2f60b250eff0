//! Annotation records to scored samples: min-max normalization per source,
//! MOS aggregation, rating-level question/answer generation and seeded
//! train/test splitting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{Dimension, RatingLevel};

/// Minimum number of raters per dimension on a manually annotated record.
pub const MIN_RATERS: usize = 9;

/// Default held-out fraction per source, matching a 14,487 / 108,586 split.
pub const DEFAULT_TEST_FRACTION: f64 = 0.1334;

/// One input line of `records.jsonl`. Exactly one of `rater_scores` (manual,
/// twelve-dimension annotation) and `raw_overall` (source-dataset score on
/// its native scale) is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater_scores: Option<BTreeMap<Dimension, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_overall: Option<f64>,
    pub feature_seed: u64,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidRecord { sample_id: self.sample_id.clone(), reason };
        match (&self.rater_scores, self.raw_overall) {
            (Some(_), Some(_)) => Err(invalid("has both rater_scores and raw_overall".into())),
            (None, None) => Err(invalid("has neither rater_scores nor raw_overall".into())),
            (None, Some(raw)) if !raw.is_finite() => Err(invalid("raw_overall is not finite".into())),
            (None, Some(_)) => Ok(()),
            (Some(scores), None) => {
                for dim in Dimension::ALL {
                    let raters = scores.get(&dim).ok_or_else(|| invalid(format!("missing dimension {dim}")))?;
                    if raters.len() < MIN_RATERS {
                        return Err(invalid(format!("{dim} has {} raters, need at least {MIN_RATERS}", raters.len())));
                    }
                    if let Some(bad) = raters.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                        return Err(invalid(format!("{dim} rater score {bad} outside [0, 1]")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Annotation-type flag `f`: 0 for overall-only samples, 1 for twelve-dimension samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AnnotationType {
    Overall = 0,
    TwelveDim = 1,
}

impl TryFrom<u8> for AnnotationType {
    type Error = Error;

    fn try_from(f: u8) -> Result<Self> {
        match f {
            0 => Ok(AnnotationType::Overall),
            1 => Ok(AnnotationType::TwelveDim),
            other => Err(Error::BadFlag(other)),
        }
    }
}

impl From<AnnotationType> for u8 {
    fn from(f: AnnotationType) -> u8 {
        f as u8
    }
}

impl AnnotationType {
    pub fn slot_count(self) -> usize {
        match self {
            AnnotationType::Overall => 1,
            AnnotationType::TwelveDim => 12,
        }
    }
}

/// A normalized sample with scores in [0, 1] and their rating levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub source: String,
    pub f: AnnotationType,
    pub scores: BTreeMap<Dimension, f64>,
    pub levels: BTreeMap<Dimension, RatingLevel>,
    pub feature_seed: u64,
}

impl ScoredSample {
    /// Builds a sample from its scores, deriving the levels.
    pub fn new(
        sample_id: String,
        source: String,
        f: AnnotationType,
        scores: BTreeMap<Dimension, f64>,
        feature_seed: u64,
    ) -> Result<Self> {
        let levels = scores.iter().map(|(&d, &s)| RatingLevel::from_score(s).map(|z| (d, z))).collect::<Result<_>>()?;
        let sample = ScoredSample { sample_id, source, f, scores, levels, feature_seed };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid =
            |reason: &str| Error::InvalidRecord { sample_id: self.sample_id.clone(), reason: reason.to_string() };
        let keys_ok = match self.f {
            AnnotationType::Overall => self.scores.len() == 1 && self.scores.contains_key(&Dimension::OverallAesthetic),
            AnnotationType::TwelveDim => self.scores.len() == 12,
        };
        if !keys_ok {
            return Err(invalid("score keys do not match the annotation flag"));
        }
        for (d, &s) in &self.scores {
            let level = RatingLevel::from_score(s)?;
            if self.levels.get(d) != Some(&level) {
                return Err(invalid("levels disagree with scores"));
            }
        }
        if self.levels.len() != self.scores.len() {
            return Err(invalid("levels disagree with scores"));
        }
        Ok(())
    }

    pub fn overall(&self) -> f64 {
        self.scores[&Dimension::OverallAesthetic]
    }

    /// Ground-truth scores in slot order (1 or 12 entries).
    pub fn target_scores(&self) -> Vec<f64> {
        self.scores.values().copied().collect()
    }

    /// Ground-truth levels in slot order (1 or 12 entries).
    pub fn target_levels(&self) -> Vec<RatingLevel> {
        self.levels.values().copied().collect()
    }
}

/// `y_i = (x_i - min) / (max - min)`.
pub fn minmax_normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(Error::TooFewValues(raw.len()));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Err(Error::DegenerateRange { group: String::new(), value: min });
    }
    let span = max - min;
    Ok(raw.iter().map(|x| (x - min) / span).collect())
}

/// Mean opinion score of one dimension.
pub fn aggregate_mos(rater_scores: &[f64]) -> Result<f64> {
    if rater_scores.is_empty() {
        return Err(Error::EmptyRaterList);
    }
    if let Some(&bad) = rater_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::OutOfRange { what: "rater score", value: bad });
    }
    let mean = rater_scores.iter().sum::<f64>() / rater_scores.len() as f64;
    // the mean of values in [0, 1] can exceed 1 by an ulp
    Ok(mean.clamp(0.0, 1.0))
}

/// Converts records into samples. Source-dataset scores are normalized within
/// each source tag; manual records become twelve-dimension samples via MOS.
/// Output order follows input order.
pub fn build_samples(records: &[AnnotationRecord]) -> Result<Vec<ScoredSample>> {
    let mut seen = BTreeSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.sample_id.as_str()) {
            return Err(Error::DuplicateSampleId(r.sample_id.clone()));
        }
    }

    // pass 1: normalize each source group over its full extent
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.raw_overall.is_some() {
            groups.entry(r.source.as_str()).or_default().push(i);
        }
    }
    let mut normalized = BTreeMap::new();
    for (source, members) in &groups {
        let raw: Vec<f64> = members.iter().filter_map(|&i| records[i].raw_overall).collect();
        let ys = minmax_normalize(&raw).map_err(|e| match e {
            Error::DegenerateRange { value, .. } => Error::DegenerateRange { group: source.to_string(), value },
            Error::TooFewValues(n) => Error::InvalidRecord {
                sample_id: records[members[0]].sample_id.clone(),
                reason: format!("source `{source}` has {n} record(s); min-max needs at least 2"),
            },
            other => other,
        })?;
        normalized.extend(members.iter().copied().zip(ys));
    }

    // pass 2: map
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (f, scores) = match &r.rater_scores {
                None => {
                    let mut scores = BTreeMap::new();
                    scores.insert(Dimension::OverallAesthetic, normalized[&i]);
                    (AnnotationType::Overall, scores)
                }
                Some(raters) => {
                    let scores = raters
                        .iter()
                        .map(|(&d, v)| aggregate_mos(v).map(|m| (d, m)))
                        .collect::<Result<BTreeMap<_, _>>>()?;
                    (AnnotationType::TwelveDim, scores)
                }
            };
            ScoredSample::new(r.sample_id.clone(), r.source.clone(), f, scores, r.feature_seed)
        })
        .collect()
}

/// Paraphrases of the overall question.
pub const OVERALL_QUESTIONS: [&str; 8] = [
    "Rate the aesthetics of this human picture.",
    "How would you rate the aesthetics of this human image?",
    "What is your aesthetic rating of the person in this picture?",
    "Can you rate the aesthetic quality of this human photo?",
    "How aesthetically pleasing is this picture of a person?",
    "Give an aesthetic rating for this human image.",
    "Please assess the overall aesthetics of this portrait.",
    "What do you think of the aesthetics of this human picture?",
];

/// Paraphrases of the twelve-dimension question.
pub const TWELVE_DIM_QUESTIONS: [&str; 8] = [
    "Rate the aesthetics of this human picture in each of the twelve dimensions.",
    "Rate this human image on every fine-grained aesthetic dimension.",
    "Assess the aesthetics of the person in this picture dimension by dimension.",
    "Give a rating level for each aesthetic dimension of this human photo.",
    "How would you rate this human image on each of the twelve aesthetic dimensions?",
    "Evaluate the facial, general appearance, environment and overall aesthetics of this picture.",
    "Please rate every aesthetic sub-dimension of this portrait.",
    "Provide fine-grained aesthetic ratings for this human picture.",
];

const OVERALL_ANSWER_PREFIX: &str = "The aesthetics of the image is ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub sample_id: String,
    pub question: String,
    pub answer: String,
    pub slot_levels: Vec<(Dimension, RatingLevel)>,
}

pub fn paraphrases(f: AnnotationType) -> &'static [&'static str] {
    match f {
        AnnotationType::Overall => &OVERALL_QUESTIONS,
        AnnotationType::TwelveDim => &TWELVE_DIM_QUESTIONS,
    }
}

/// Renders the answer text for a list of slot levels.
pub fn render_answer(slot_levels: &[(Dimension, RatingLevel)]) -> String {
    match slot_levels {
        [(Dimension::OverallAesthetic, z)] => format!("{OVERALL_ANSWER_PREFIX}{z}."),
        slots => slots.iter().map(|(d, z)| format!("{}: {z}", d.display_name())).collect::<Vec<_>>().join("\n"),
    }
}

/// Inverse of [`render_answer`].
pub fn parse_answer(answer: &str) -> Result<Vec<(Dimension, RatingLevel)>> {
    let fail = || Error::ParseAnswer(answer.to_string());
    if let Some(rest) = answer.strip_prefix(OVERALL_ANSWER_PREFIX) {
        let word = rest.strip_suffix('.').ok_or_else(fail)?;
        let z = RatingLevel::from_word(word).ok_or_else(fail)?;
        return Ok(alloc::vec![(Dimension::OverallAesthetic, z)]);
    }
    let slots = answer
        .lines()
        .map(|line| {
            let (name, word) = line.split_once(": ").ok_or_else(fail)?;
            let d = Dimension::ALL.into_iter().find(|d| d.display_name() == name).ok_or_else(fail)?;
            let z = RatingLevel::from_word(word).ok_or_else(fail)?;
            Ok((d, z))
        })
        .collect::<Result<Vec<_>>>()?;
    let canonical = slots.len() == 12 && slots.iter().zip(Dimension::ALL).all(|((d, _), c)| *d == c);
    if !canonical {
        return Err(fail());
    }
    Ok(slots)
}

pub fn make_qa(sample: &ScoredSample, paraphrase_index: usize) -> Result<QaPair> {
    let questions = paraphrases(sample.f);
    let question = questions
        .get(paraphrase_index)
        .ok_or(Error::IndexOutOfRange { index: paraphrase_index, len: questions.len() })?;
    let slot_levels: Vec<_> = sample.levels.iter().map(|(&d, &z)| (d, z)).collect();
    Ok(QaPair {
        sample_id: sample.sample_id.clone(),
        question: question.to_string(),
        answer: render_answer(&slot_levels),
        slot_levels,
    })
}

/// Held-out fraction per source tag, with a fallback for unlisted sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestFractions {
    pub default: f64,
    pub per_source: BTreeMap<String, f64>,
}

impl Default for TestFractions {
    fn default() -> Self {
        TestFractions { default: DEFAULT_TEST_FRACTION, per_source: BTreeMap::new() }
    }
}

impl TestFractions {
    pub fn uniform(fraction: f64) -> Self {
        TestFractions { default: fraction, per_source: BTreeMap::new() }
    }

    pub fn for_source(&self, source: &str) -> f64 {
        self.per_source.get(source).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |group: &str, value: f64| {
            if value > 0.0 && value < 1.0 {
                Ok(())
            } else {
                Err(Error::BadFraction { group: group.to_string(), value })
            }
        };
        check("*", self.default)?;
        self.per_source.iter().try_for_each(|(s, &v)| check(s, v))
    }
}

/// Per-source seeded shuffle and split. Both halves keep input order.
pub fn split_dataset(
    samples: Vec<ScoredSample>,
    fractions: &TestFractions,
    seed: u64,
) -> Result<(Vec<ScoredSample>, Vec<ScoredSample>)> {
    fractions.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.source.as_str()).or_default().push(i);
    }
    let mut is_test = alloc::vec![false; samples.len()];
    for (source, mut members) in groups {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ source_hash(source));
        members.shuffle(&mut rng);
        let n_test = libm::round(fractions.for_source(source) * members.len() as f64) as usize;
        for &i in &members[..n_test.min(members.len())] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = samples.into_iter().zip(is_test).partition(|(_, t)| *t);
    Ok((train.into_iter().map(|(s, _)| s).collect(), test.into_iter().map(|(s, _)| s).collect()))
}

// FNV-1a, so each source's shuffle is independent of which other sources exist.
fn source_hash(source: &str) -> u64 {
    source.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}
