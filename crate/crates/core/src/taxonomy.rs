//! The fixed 12-node aesthetic hierarchy and the five-level rating scale.
//!
//! Dimensions are declared in their canonical order. That order is the index
//! used for answer slots, Expert head outputs and report columns.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    FacialBrightness,
    FacialFeatureClarity,
    FacialSkinTone,
    FacialStructure,
    FacialContourClarity,
    FacialAesthetic,
    Outfit,
    BodyShape,
    Looks,
    GeneralAppearanceAesthetic,
    Environment,
    OverallAesthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionKind {
    Leaf,
    Parent,
    Root,
}

pub const DIMENSION_COUNT: usize = 12;
pub const LEAF_COUNT: usize = 9;

const FACIAL_LEAVES: [Dimension; 5] = [
    Dimension::FacialBrightness,
    Dimension::FacialFeatureClarity,
    Dimension::FacialSkinTone,
    Dimension::FacialStructure,
    Dimension::FacialContourClarity,
];
const APPEARANCE_LEAVES: [Dimension; 3] = [Dimension::Outfit, Dimension::BodyShape, Dimension::Looks];
const OVERALL_CHILDREN: [Dimension; 3] =
    [Dimension::FacialAesthetic, Dimension::GeneralAppearanceAesthetic, Dimension::Environment];

impl Dimension {
    /// All dimensions in canonical order.
    pub const ALL: [Dimension; DIMENSION_COUNT] = [
        Dimension::FacialBrightness,
        Dimension::FacialFeatureClarity,
        Dimension::FacialSkinTone,
        Dimension::FacialStructure,
        Dimension::FacialContourClarity,
        Dimension::FacialAesthetic,
        Dimension::Outfit,
        Dimension::BodyShape,
        Dimension::Looks,
        Dimension::GeneralAppearanceAesthetic,
        Dimension::Environment,
        Dimension::OverallAesthetic,
    ];

    /// Leaves in the order the Expert head's first layer emits them.
    pub const LEAVES: [Dimension; LEAF_COUNT] = [
        Dimension::FacialBrightness,
        Dimension::FacialFeatureClarity,
        Dimension::FacialSkinTone,
        Dimension::FacialStructure,
        Dimension::FacialContourClarity,
        Dimension::Outfit,
        Dimension::BodyShape,
        Dimension::Looks,
        Dimension::Environment,
    ];

    /// Zero-based canonical index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Dimension> {
        Self::ALL.get(index).copied()
    }

    pub fn kind(self) -> DimensionKind {
        match self {
            Dimension::OverallAesthetic => DimensionKind::Root,
            Dimension::FacialAesthetic | Dimension::GeneralAppearanceAesthetic => DimensionKind::Parent,
            _ => DimensionKind::Leaf,
        }
    }

    pub fn children(self) -> &'static [Dimension] {
        match self {
            Dimension::FacialAesthetic => &FACIAL_LEAVES,
            Dimension::GeneralAppearanceAesthetic => &APPEARANCE_LEAVES,
            Dimension::OverallAesthetic => &OVERALL_CHILDREN,
            _ => &[],
        }
    }

    pub fn parent(self) -> Option<Dimension> {
        Self::ALL.into_iter().find(|p| p.children().contains(&self))
    }

    /// snake_case identifier used in every file format.
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::FacialBrightness => "facial_brightness",
            Dimension::FacialFeatureClarity => "facial_feature_clarity",
            Dimension::FacialSkinTone => "facial_skin_tone",
            Dimension::FacialStructure => "facial_structure",
            Dimension::FacialContourClarity => "facial_contour_clarity",
            Dimension::FacialAesthetic => "facial_aesthetic",
            Dimension::Outfit => "outfit",
            Dimension::BodyShape => "body_shape",
            Dimension::Looks => "looks",
            Dimension::GeneralAppearanceAesthetic => "general_appearance_aesthetic",
            Dimension::Environment => "environment",
            Dimension::OverallAesthetic => "overall_aesthetic",
        }
    }

    /// Title-case name used in generated answers.
    pub fn display_name(self) -> &'static str {
        match self {
            Dimension::FacialBrightness => "Facial Brightness",
            Dimension::FacialFeatureClarity => "Facial Feature Clarity",
            Dimension::FacialSkinTone => "Facial Skin Tone",
            Dimension::FacialStructure => "Facial Structure",
            Dimension::FacialContourClarity => "Facial Contour Clarity",
            Dimension::FacialAesthetic => "Facial Aesthetic",
            Dimension::Outfit => "Outfit",
            Dimension::BodyShape => "Body Shape",
            Dimension::Looks => "Looks",
            Dimension::GeneralAppearanceAesthetic => "General Appearance Aesthetic",
            Dimension::Environment => "Environment",
            Dimension::OverallAesthetic => "Overall Aesthetic",
        }
    }

    pub fn from_name(name: &str) -> Option<Dimension> {
        Self::ALL.into_iter().find(|d| d.as_str() == name)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Five-level quality scale with integer codes 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingLevel {
    Bad = 1,
    Poor = 2,
    Fair = 3,
    Good = 4,
    Excellent = 5,
}

impl RatingLevel {
    pub const ALL: [RatingLevel; 5] =
        [RatingLevel::Bad, RatingLevel::Poor, RatingLevel::Fair, RatingLevel::Good, RatingLevel::Excellent];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<RatingLevel> {
        match code {
            1..=5 => Some(Self::ALL[code as usize - 1]),
            _ => None,
        }
    }

    /// Maps a score in [0, 1] to the level `z` with `(z-1)/5 < s <= z/5`.
    /// `s = 0` is assigned to `Bad`.
    pub fn from_score(s: f64) -> Result<RatingLevel> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfRange { what: "score", value: s });
        }
        // Compare against the exact boundaries rather than ceil(5s), which
        // misplaces values like 0.6 whose product with 5 rounds upward.
        let code = RatingLevel::ALL.iter().position(|level| s <= level.upper_bound()).unwrap_or(4);
        Ok(RatingLevel::ALL[code])
    }

    /// Upper end of this level's interval, `z/5`.
    pub fn upper_bound(self) -> f64 {
        f64::from(self.code()) / 5.0
    }

    /// Interval midpoint `(2z-1)/10`.
    pub fn midpoint(self) -> f64 {
        (2.0 * f64::from(self.code()) - 1.0) / 10.0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RatingLevel::Bad => "bad",
            RatingLevel::Poor => "poor",
            RatingLevel::Fair => "fair",
            RatingLevel::Good => "good",
            RatingLevel::Excellent => "excellent",
        }
    }

    pub fn from_word(word: &str) -> Option<RatingLevel> {
        Self::ALL.into_iter().find(|l| l.as_str() == word)
    }
}

impl fmt::Display for RatingLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Free-function form of [`RatingLevel::from_score`].
pub fn rating_from_score(s: f64) -> Result<RatingLevel> {
    RatingLevel::from_score(s)
}

/// Free-function form of [`RatingLevel::midpoint`].
pub fn score_from_rating(level: RatingLevel) -> f64 {
    level.midpoint()
}
