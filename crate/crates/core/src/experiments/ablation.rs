//! Training-set generators for the size and diversity ablations. Strata are
//! (disease, completeness) so the complete/masked balance carries over.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;

use super::ExperimentError;
use crate::data::{apportion, Completeness};
use crate::rng::derived_rng;
use crate::uncertainty::CorpusEntry;

type Stratum = (String, Completeness);

/// Entry indices per stratum, each list sorted by note id then shuffled
/// with a stratum-specific stream.
fn shuffled_strata(train: &[CorpusEntry], seed: u64, tag: &str) -> BTreeMap<Stratum, Vec<usize>> {
    let mut strata: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
    for (i, e) in train.iter().enumerate() {
        strata.entry((e.disease_id().to_string(), e.completeness())).or_default().push(i);
    }
    for ((disease, completeness), idx) in strata.iter_mut() {
        idx.sort_by(|&a, &b| train[a].id().cmp(train[b].id()).then(a.cmp(&b)));
        idx.shuffle(&mut derived_rng(seed, &format!("{tag}/{disease}/{completeness:?}")));
    }
    strata
}

fn quotas(strata: &BTreeMap<Stratum, Vec<usize>>, target: usize) -> Vec<usize> {
    let sizes: Vec<u64> = strata.values().map(|v| v.len() as u64).collect();
    apportion(target, &sizes)
}

/// A seeded, stratified `fraction` of `train`, in input order.
pub fn subsample_by_size(train: &[CorpusEntry], fraction: f64, seed: u64) -> Result<Vec<CorpusEntry>, ExperimentError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ExperimentError::Fraction(fraction));
    }
    if fraction == 1.0 {
        return Ok(train.to_vec());
    }
    let strata = shuffled_strata(train, seed, "size");
    let target = (fraction * train.len() as f64).round() as usize;
    let keep: HashSet<usize> = strata
        .values()
        .zip(quotas(&strata, target))
        .flat_map(|(idx, q)| idx[..q].iter().copied())
        .collect();
    Ok(train.iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, e)| e.clone()).collect())
}

/// Keeps a stratified `fraction` of distinct notes (at least one per
/// stratum) and duplicates them round-robin, ordered by note id, until every
/// stratum is back to its original size.
pub fn reduce_diversity(train: &[CorpusEntry], fraction: f64, seed: u64) -> Result<Vec<CorpusEntry>, ExperimentError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ExperimentError::Fraction(fraction));
    }
    let strata = shuffled_strata(train, seed, "diversity");
    let target = (fraction * train.len() as f64).round() as usize;
    let mut out = Vec::with_capacity(train.len());
    for (idx, q) in strata.values().zip(quotas(&strata, target)) {
        let mut kept: Vec<usize> = idx[..q.max(1)].to_vec();
        kept.sort_by(|&a, &b| train[a].id().cmp(train[b].id()).then(a.cmp(&b)));
        out.extend(kept.iter().cycle().take(idx.len()).map(|&i| train[i].clone()));
    }
    Ok(out)
}
