//! METEOR with exact, stem and optional synonym stages.

use std::collections::HashMap;
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};

use crate::gateway::tokenize;
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorScore {
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub matches: usize,
    pub chunks: usize,
    pub penalty: f64,
    pub score: f64,
}

/// Word groups treated as synonyms by the third matching stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    group: HashMap<String, usize>,
}

impl SynonymLexicon {
    pub fn from_groups<I, G, S>(groups: I) -> Self
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut group = HashMap::new();
        for (i, g) in groups.into_iter().enumerate() {
            for w in g {
                group.insert(w.as_ref().to_lowercase(), i);
            }
        }
        Self { group }
    }

    /// One group per line, words separated by commas.
    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let lines = jsonl::read_lines(path)?;
        Ok(Self::from_groups(lines.iter().map(|(_, l)| {
            l.split(',').map(str::trim).filter(|w| !w.is_empty()).collect::<Vec<_>>()
        })))
    }

    fn group_of(&self, word: &str) -> Option<usize> {
        self.group.get(word).copied()
    }
}

pub struct Meteor {
    stemmer: Stemmer,
    synonyms: Option<SynonymLexicon>,
}

impl Default for Meteor {
    fn default() -> Self {
        Self { stemmer: Stemmer::create(Algorithm::English), synonyms: None }
    }
}

impl Meteor {
    pub fn with_synonyms(synonyms: SynonymLexicon) -> Self {
        Self { synonyms: Some(synonyms), ..Self::default() }
    }

    pub fn score(&self, candidate: &str, reference: &str) -> MeteorScore {
        let cand = tokenize(candidate);
        let refs = tokenize(reference);
        let mut align: Vec<Option<usize>> = vec![None; cand.len()];
        let mut used = vec![false; refs.len()];

        self.stage(&cand, &refs, &mut align, &mut used, |a, b| a == b);
        let cs: Vec<String> = cand.iter().map(|t| self.stemmer.stem(t).into_owned()).collect();
        let rs: Vec<String> = refs.iter().map(|t| self.stemmer.stem(t).into_owned()).collect();
        self.stage(&cs, &rs, &mut align, &mut used, |a, b| a == b);
        if let Some(lex) = &self.synonyms {
            self.stage(&cand, &refs, &mut align, &mut used, |a, b| {
                lex.group_of(a).is_some_and(|g| lex.group_of(b) == Some(g))
            });
        }

        let pairs: Vec<(usize, usize)> = align
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|r| (i, r)))
            .collect();
        let m = pairs.len();
        if m == 0 {
            return MeteorScore {
                precision: 0.0,
                recall: 0.0,
                fmean: 0.0,
                matches: 0,
                chunks: 0,
                penalty: 0.0,
                score: 0.0,
            };
        }
        let chunks = 1 + pairs
            .windows(2)
            .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
            .count();
        let p = m as f64 / cand.len() as f64;
        let r = m as f64 / refs.len() as f64;
        let fmean = 10.0 * p * r / (r + 9.0 * p);
        let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
        MeteorScore {
            precision: p,
            recall: r,
            fmean,
            matches: m,
            chunks,
            penalty,
            score: fmean * (1.0 - penalty),
        }
    }

    /// Aligns still-unmatched candidate tokens left to right. A token prefers
    /// the reference position right after its predecessor's match, which
    /// keeps contiguous runs together; otherwise the leftmost free match.
    fn stage(
        &self,
        cand: &[String],
        refs: &[String],
        align: &mut [Option<usize>],
        used: &mut [bool],
        eq: impl Fn(&str, &str) -> bool,
    ) {
        for i in 0..cand.len() {
            if align[i].is_some() {
                continue;
            }
            let ok = |j: usize| !used[j] && eq(&cand[i], &refs[j]);
            let preferred = i
                .checked_sub(1)
                .and_then(|p| align[p])
                .map(|j| j + 1)
                .filter(|&j| j < refs.len() && ok(j));
            if let Some(j) = preferred.or_else(|| (0..refs.len()).find(|&j| ok(j))) {
                align[i] = Some(j);
                used[j] = true;
            }
        }
    }
}

/// METEOR score with the exact and stem stages.
pub fn meteor(candidate: &str, reference: &str) -> f64 {
    Meteor::default().score(candidate, reference).score
}
