//! Rule-set similarity and empirical stability across re-fits.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Dice-Sørensen: `2|A ∩ B| / (|A| + |B|)`.
    #[default]
    Dsc,
    /// `|A ∩ B| / |A ∪ B|`.
    Jaccard,
    /// `|A ∩ B| / sqrt(|A| |B|)`.
    Ochiai,
    /// Proportion of overlapping genes, `|A ∩ B| / |A|`; not symmetric.
    Pog,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Dsc => "dsc",
            Metric::Jaccard => "jaccard",
            Metric::Ochiai => "ochiai",
            Metric::Pog => "pog",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dsc" => Ok(Metric::Dsc),
            "jaccard" => Ok(Metric::Jaccard),
            "ochiai" => Ok(Metric::Ochiai),
            "pog" => Ok(Metric::Pog),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

pub fn pairwise_similarity<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>, metric: Metric) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyRuleSet);
    }
    let inter = a.intersection(b).count() as f64;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(match metric {
        Metric::Dsc => 2.0 * inter / (na + nb),
        Metric::Jaccard => inter / (na + nb - inter),
        Metric::Ochiai => inter / (na * nb).sqrt(),
        Metric::Pog => inter / na,
    })
}

/// `T x T` matrix of `pairwise_similarity(sets[i], sets[j])`.
pub fn similarity_matrix<T: Eq + Hash>(sets: &[HashSet<T>], metric: Metric) -> Result<Vec<Vec<f64>>> {
    sets.iter()
        .map(|a| sets.iter().map(|b| pairwise_similarity(a, b, metric)).collect())
        .collect()
}

/// Mean similarity over all ordered pairs `i != j`.
pub fn empirical_stability<T: Eq + Hash>(sets: &[HashSet<T>], metric: Metric) -> Result<f64> {
    let t = sets.len();
    if t < 2 {
        return Err(Error::TooFewSets(t));
    }
    let mut total = 0.0;
    for (i, a) in sets.iter().enumerate() {
        for (j, b) in sets.iter().enumerate() {
            if i != j {
                total += pairwise_similarity(a, b, metric)?;
            }
        }
    }
    Ok(total / (t * (t - 1)) as f64)
}
