use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// How a model element departs from reality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Simplification,
    Idealization,
    ContinuousApproximation,
    CrossGranular,
    StochasticApproximation,
    TypicalExample,
    UserComment,
}

impl AnnotationKind {
    pub const ALL: [AnnotationKind; 7] = [
        AnnotationKind::Simplification,
        AnnotationKind::Idealization,
        AnnotationKind::ContinuousApproximation,
        AnnotationKind::CrossGranular,
        AnnotationKind::StochasticApproximation,
        AnnotationKind::TypicalExample,
        AnnotationKind::UserComment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationKind::Simplification => "simplification",
            AnnotationKind::Idealization => "idealization",
            AnnotationKind::ContinuousApproximation => "continuous_approximation",
            AnnotationKind::CrossGranular => "cross_granular",
            AnnotationKind::StochasticApproximation => "stochastic_approximation",
            AnnotationKind::TypicalExample => "typical_example",
            AnnotationKind::UserComment => "user_comment",
        }
    }
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnnotationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown annotation kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub kind: AnnotationKind,
    pub target: String,
    pub note: String,
}

impl Annotation {
    pub fn new(kind: AnnotationKind, target: &str, note: &str) -> Self {
        Annotation {
            kind,
            target: target.to_string(),
            note: note.to_string(),
        }
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.target, self.kind, self.note)
    }
}
