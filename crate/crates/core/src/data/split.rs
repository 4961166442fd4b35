//! Stratified train/validation/test splitting.
//!
//! Notes are grouped into strata by `(disease, completeness)`. Each stratum is
//! apportioned with the largest-remainder method using exact integer
//! arithmetic, then its ids are sorted, shuffled with a stratum-keyed stream
//! and cut into the three parts. Sorting first makes the result independent of
//! input order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Completeness, DataError};
use crate::rng::derived_rng;

/// Strata smaller than this are reported in [`SplitOutcome::warnings`].
pub const MIN_STRATUM: usize = 10;

/// Split proportions held as integer weights, e.g. `7:1:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatios {
    weights: [u64; 3],
}

impl SplitRatios {
    pub fn from_weights(weights: [u64; 3]) -> Result<Self, DataError> {
        if weights.iter().sum::<u64>() == 0 {
            return Err(DataError::InvalidRatios("weights sum to zero".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> [u64; 3] {
        self.weights
    }

    pub fn fractions(&self) -> [f64; 3] {
        let total = self.weights.iter().sum::<u64>() as f64;
        self.weights.map(|w| w as f64 / total)
    }

    /// Largest-remainder apportionment of `n` items; remainder ties go to the
    /// earlier part (train, then validation, then test).
    pub fn apportion(&self, n: usize) -> [usize; 3] {
        apportion(n, &self.weights).try_into().expect("three parts")
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { weights: [7, 1, 2] }
    }
}

/// Largest-remainder apportionment over arbitrary integer weights.
pub fn apportion(n: usize, weights: &[u64]) -> Vec<usize> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let n128 = n as u128;
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|&w| (n128 * w as u128 / total) as usize)
        .collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(n128 * weights[i] as u128 % total));
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Parses `0.7,0.1,0.2` (must sum to 1) or `7:1:2` (weights).
impl FromStr for SplitRatios {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: &str| DataError::InvalidRatios(format!("{s:?}: {m}"));
        if s.contains(':') {
            let parts: Vec<u64> = s
                .split(':')
                .map(|p| p.trim().parse::<u64>().map_err(|_| bad("weights must be integers")))
                .collect::<Result<_, _>>()?;
            let weights: [u64; 3] = parts.try_into().map_err(|_| bad("need three weights"))?;
            return SplitRatios::from_weights(weights);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad("need three ratios"));
        }
        let scale = parts
            .iter()
            .map(|p| p.split_once('.').map_or(0, |(_, frac)| frac.len()))
            .max()
            .unwrap_or(0);
        if scale > 12 {
            return Err(bad("too many decimal places"));
        }
        let denom = 10u64.pow(scale as u32);
        let mut weights = [0u64; 3];
        for (w, p) in weights.iter_mut().zip(&parts) {
            *w = parse_scaled(p, scale).ok_or_else(|| bad("not a decimal"))?;
        }
        if weights.iter().sum::<u64>() != denom {
            return Err(bad("ratios must sum to 1"));
        }
        SplitRatios::from_weights(weights)
    }
}

fn parse_scaled(text: &str, scale: usize) -> Option<u64> {
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if frac.len() > scale || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac_padded = format!("{frac:0<scale$}");
    let frac: u64 = if scale == 0 { 0 } else { frac_padded.parse().ok()? };
    int.checked_mul(10u64.pow(scale as u32))?.checked_add(frac)
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.weights;
        write!(f, "{a}:{b}:{c}")
    }
}

impl Serialize for SplitRatios {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.fractions().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SplitRatios {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = <[f64; 3]>::deserialize(d)?;
        format!("{},{},{}", f[0], f[1], f[2])
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// The minimum a note must expose to be split.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SplitKey {
    pub note_id: String,
    pub disease_id: String,
    pub completeness: Completeness,
}

/// Split manifest; serializes to `{seed, ratios, train[], validation[], test[]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }

    pub fn part(&self, part: SplitPart) -> &[String] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Validation => &self.validation,
            SplitPart::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Validation,
    #[default]
    Test,
}

impl FromStr for SplitPart {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitPart::Train),
            "validation" | "val" => Ok(SplitPart::Validation),
            "test" => Ok(SplitPart::Test),
            other => Err(DataError::schema("split_part", format!("unknown part {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitWarning {
    pub disease_id: String,
    pub completeness: Completeness,
    pub count: usize,
}

impl fmt::Display for SplitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "under-populated stratum ({}, {}): {} notes (< {MIN_STRATUM})",
            self.disease_id, self.completeness, self.count
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub split: DatasetSplit,
    pub warnings: Vec<SplitWarning>,
}

pub fn split_dataset(
    notes: &[SplitKey],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitOutcome, DataError> {
    let mut seen = HashSet::new();
    let mut strata: BTreeMap<(&str, Completeness), Vec<&str>> = BTreeMap::new();
    for n in notes {
        if !seen.insert(n.note_id.as_str()) {
            return Err(DataError::DuplicateId(n.note_id.clone()));
        }
        strata
            .entry((n.disease_id.as_str(), n.completeness))
            .or_default()
            .push(n.note_id.as_str());
    }

    let mut parts: [Vec<String>; 3] = Default::default();
    let mut warnings = Vec::new();
    for ((disease, completeness), mut ids) in strata {
        if ids.len() < MIN_STRATUM {
            warnings.push(SplitWarning {
                disease_id: disease.to_string(),
                completeness,
                count: ids.len(),
            });
        }
        ids.sort_unstable();
        let mut rng = derived_rng(seed, &format!("split/{disease}/{completeness}"));
        ids.shuffle(&mut rng);
        let counts = ratios.apportion(ids.len());
        let mut rest = ids.as_slice();
        for (part, count) in parts.iter_mut().zip(counts) {
            let (head, tail) = rest.split_at(count);
            part.extend(head.iter().map(|s| s.to_string()));
            rest = tail;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    let [train, validation, test] = parts;
    Ok(SplitOutcome {
        split: DatasetSplit {
            seed,
            ratios,
            train,
            validation,
            test,
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn keys(disease: &str, complete: usize, incomplete: usize) -> Vec<SplitKey> {
        let mk = |i: usize, c: Completeness| SplitKey {
            note_id: format!("{disease}-{c}-{i:05}"),
            disease_id: disease.into(),
            completeness: c,
        };
        (0..complete)
            .map(|i| mk(i, Completeness::EvidenceComplete))
            .chain((0..incomplete).map(|i| mk(i, Completeness::EvidenceIncomplete)))
            .collect()
    }

    fn count_in(ids: &[String], c: Completeness) -> usize {
        ids.iter().filter(|id| id.contains(&format!("-{c}-"))).count()
    }

    #[test]
    fn parses_both_ratio_forms() {
        assert_eq!("0.7,0.1,0.2".parse::<SplitRatios>().unwrap().weights(), [7, 1, 2]);
        assert_eq!("7:1:2".parse::<SplitRatios>().unwrap().weights(), [7, 1, 2]);
        assert_eq!("0.70, 0.1, 0.2".parse::<SplitRatios>().unwrap().weights(), [70, 10, 20]);
        assert!("0.7,0.1,0.1".parse::<SplitRatios>().is_err());
        assert!("0.7,0.3".parse::<SplitRatios>().is_err());
        assert!("a,b,c".parse::<SplitRatios>().is_err());
    }

    #[test]
    fn ratios_serialize_as_fractions() {
        let r = SplitRatios::default();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, "[0.7,0.1,0.2]");
        assert_eq!(serde_json::from_str::<SplitRatios>(&json).unwrap(), r);
    }

    #[test]
    fn hand_enumerated_hundred_notes() {
        // 50 per stratum: quotas 35 / 5 / 10 are integral, so no remainder seats.
        let notes = keys("d", 50, 50);
        let out = split_dataset(&notes, SplitRatios::default(), 1).unwrap();
        assert_eq!(out.split.counts(), [70, 10, 20]);
        for (part, expected) in [(&out.split.train, 35), (&out.split.validation, 5), (&out.split.test, 10)] {
            assert_eq!(count_in(part, Completeness::EvidenceComplete), expected);
            assert_eq!(count_in(part, Completeness::EvidenceIncomplete), expected);
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn apportion_remainders() {
        // 7 * 0.7 = 4.9, 0.7, 1.4: floors 4,0,1 and two seats go to .9 and .7.
        assert_eq!(SplitRatios::default().apportion(7), [5, 1, 1]);
        // 3 * 0.7 = 2.1, 0.3, 0.6: the single seat goes to test.
        assert_eq!(SplitRatios::default().apportion(3), [2, 0, 1]);
        assert_eq!(SplitRatios::default().apportion(0), [0, 0, 0]);
    }

    #[test]
    fn empty_input() {
        let out = split_dataset(&[], SplitRatios::default(), 3).unwrap();
        assert!(out.split.is_empty());
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn small_strata_warn_but_split() {
        let out = split_dataset(&keys("d", 4, 12), SplitRatios::default(), 3).unwrap();
        assert_eq!(out.split.len(), 16);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].count, 4);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut notes = keys("d", 3, 0);
        notes.push(notes[0].clone());
        assert!(matches!(
            split_dataset(&notes, SplitRatios::default(), 0),
            Err(DataError::DuplicateId(_))
        ));
    }

    proptest! {
        #[test]
        fn split_is_a_partition_and_order_free(
            sizes in proptest::collection::vec((0usize..40, 0usize..40), 1..5),
            seed in any::<u64>(),
            rot in 0usize..100,
        ) {
            let mut notes = Vec::new();
            for (i, (c, inc)) in sizes.iter().enumerate() {
                notes.extend(keys(&format!("d{i}"), *c, *inc));
            }
            let out = split_dataset(&notes, SplitRatios::default(), seed).unwrap().split;
            let all: HashSet<&String> = out.train.iter().chain(&out.validation).chain(&out.test).collect();
            prop_assert_eq!(all.len(), notes.len());
            prop_assert_eq!(out.len(), notes.len());

            if !notes.is_empty() {
                let k = rot % notes.len();
                notes.rotate_left(k);
                notes.reverse();
            }
            let again = split_dataset(&notes, SplitRatios::default(), seed).unwrap().split;
            prop_assert_eq!(again, out);
        }

        #[test]
        fn stratum_sizes_within_one(n in 10usize..500, seed in any::<u64>()) {
            let out = split_dataset(&keys("d", n, 0), SplitRatios::default(), seed).unwrap().split;
            for (got, frac) in out.counts().iter().zip(SplitRatios::default().fractions()) {
                prop_assert!((*got as f64 - n as f64 * frac).abs() < 1.0);
            }
        }

        #[test]
        fn balanced_input_stays_balanced(n in 0usize..300, extra in 0usize..2, seed in any::<u64>()) {
            let out = split_dataset(&keys("d", n + extra, n), SplitRatios::default(), seed).unwrap().split;
            for part in [&out.train, &out.validation, &out.test] {
                let c = count_in(part, Completeness::EvidenceComplete) as i64;
                let i = count_in(part, Completeness::EvidenceIncomplete) as i64;
                prop_assert!((c - i).abs() <= 1, "{} vs {}", c, i);
            }
        }
    }
}
