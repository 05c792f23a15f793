//! Reaction corpora: file formats, the template index, the stratified
//! split, frequency buckets and a synthetic long-tailed corpus generator.

mod io;
mod split;
mod synth;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::chemgraph::{Molecule, ReactionTemplate};

pub use io::{
    load_reactions, load_templates, parse_reactions, parse_templates, reactions_text, templates_text, write_reactions,
    write_templates, Corpus, Reject, TemplateFile,
};
pub use split::{drop_singleton_train_templates, frequency_buckets, stratified_split, Bucket, Buckets};
pub use synth::{synth_corpus, SynthConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid bucket specification: {0}")]
    Buckets(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "val" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

/// One reaction: a product, its recorded reactants and the template label.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionRecord {
    pub id: String,
    pub product: Molecule,
    pub reactants: Vec<Molecule>,
    pub reagents: Vec<Molecule>,
    pub template_id: usize,
    pub split: Option<Split>,
}

impl ReactionRecord {
    /// Sorted canonical SMILES of the reactants joined with '.'.
    pub fn reactant_key(&self) -> String {
        let mut v: Vec<String> = self.reactants.iter().map(|m| m.canonical_smiles()).collect();
        v.sort();
        v.join(".")
    }
}

/// Per-template record counts by split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: u32,
    pub valid: u32,
    pub test: u32,
    pub unassigned: u32,
}

impl SplitCounts {
    pub fn total(&self) -> u32 {
        self.train + self.valid + self.test + self.unassigned
    }

    pub fn get(&self, split: Split) -> u32 {
        match split {
            Split::Train => self.train,
            Split::Valid => self.valid,
            Split::Test => self.test,
        }
    }
}

/// The ordered template set with occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateIndex {
    templates: Vec<ReactionTemplate>,
    counts: Vec<SplitCounts>,
}

impl TemplateIndex {
    /// Ids are reassigned densely in the given order; counts start at zero.
    pub fn new(templates: Vec<ReactionTemplate>) -> Self {
        let templates: Vec<ReactionTemplate> =
            templates.into_iter().enumerate().map(|(i, t)| t.with_id(i).with_train_count(0)).collect();
        let counts = vec![SplitCounts::default(); templates.len()];
        TemplateIndex { templates, counts }
    }

    /// Index whose counts are consistent with `records`.
    pub fn with_records(templates: Vec<ReactionTemplate>, records: &[ReactionRecord]) -> Self {
        let mut index = Self::new(templates);
        index.recount(records);
        index
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Templates with `train_count` set from the current counts.
    pub fn templates(&self) -> &[ReactionTemplate] {
        &self.templates
    }

    pub fn template(&self, id: usize) -> &ReactionTemplate {
        &self.templates[id]
    }

    pub fn counts(&self, id: usize) -> SplitCounts {
        self.counts[id]
    }

    pub fn train_count(&self, id: usize) -> u32 {
        self.counts[id].train
    }

    pub fn train_counts(&self) -> Vec<u32> {
        self.counts.iter().map(|c| c.train).collect()
    }

    /// Recomputes counts (and template train counts) from `records`.
    pub fn recount(&mut self, records: &[ReactionRecord]) {
        self.counts = vec![SplitCounts::default(); self.templates.len()];
        for r in records {
            let c = &mut self.counts[r.template_id];
            match r.split {
                Some(Split::Train) => c.train += 1,
                Some(Split::Valid) => c.valid += 1,
                Some(Split::Test) => c.test += 1,
                None => c.unassigned += 1,
            }
        }
        for (t, c) in self.templates.iter_mut().zip(&self.counts) {
            t.train_count = c.train;
        }
    }

    /// Removes templates without records, renumbering the remaining ones
    /// and the record labels in order.
    pub fn compact(&self, records: &[ReactionRecord]) -> (TemplateIndex, Vec<ReactionRecord>) {
        let mut used = vec![false; self.len()];
        for r in records {
            used[r.template_id] = true;
        }
        let mut new_id = vec![usize::MAX; self.len()];
        let mut kept = Vec::new();
        for (i, t) in self.templates.iter().enumerate() {
            if used[i] {
                new_id[i] = kept.len();
                kept.push(t.clone());
            }
        }
        let records: Vec<ReactionRecord> = records
            .iter()
            .map(|r| ReactionRecord { template_id: new_id[r.template_id], ..r.clone() })
            .collect();
        (TemplateIndex::with_records(kept, &records), records)
    }
}

/// Records of one split, in file order.
pub fn records_in(records: &[ReactionRecord], split: Split) -> Vec<&ReactionRecord> {
    records.iter().filter(|r| r.split == Some(split)).collect()
}
