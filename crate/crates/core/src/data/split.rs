//! Stratified train/valid/test assignment, frequency buckets and the
//! rare-template ablation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, ReactionRecord, Split, TemplateIndex};

/// Assigns splits per template (ids ascending, records in input order,
/// shuffled with one seeded stream):
/// - n >= 10: round(n/10) test, round(n/10) valid, rest train;
/// - 3..=9: one test, one valid, rest train;
/// - 2: one test, one train;
/// - 1: train/valid/test with probability 0.8/0.1/0.1.
///
/// Records that already carry a split keep it and are not counted.
pub fn stratified_split(records: &[ReactionRecord], seed: u64) -> Vec<ReactionRecord> {
    let mut by_template: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.split.is_none() {
            by_template.entry(r.template_id).or_default().push(i);
        }
    }
    let mut out = records.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, mut group) in by_template {
        let n = group.len();
        group.shuffle(&mut rng);
        let (n_test, n_valid) = match n {
            1 => {
                let u: f64 = rng.random();
                let split = if u < 0.8 {
                    Split::Train
                } else if u < 0.9 {
                    Split::Valid
                } else {
                    Split::Test
                };
                out[group[0]].split = Some(split);
                continue;
            }
            2 => (1, 0),
            3..=9 => (1, 1),
            _ => {
                let tenth = (n as f64 / 10.0).round() as usize;
                (tenth, tenth)
            }
        };
        for (k, &i) in group.iter().enumerate() {
            out[i].split = Some(if k < n_test {
                Split::Test
            } else if k < n_test + n_valid {
                Split::Valid
            } else {
                Split::Train
            });
        }
    }
    out
}

/// An inclusive train-count range; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bucket {
    pub lo: u32,
    pub hi: Option<u32>,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(hi) if hi == self.lo => write!(f, "{}", self.lo),
            Some(hi) => write!(f, "{}-{}", self.lo, hi),
            None => write!(f, ">{}", self.lo.saturating_sub(1)),
        }
    }
}

/// Contiguous buckets partitioning all train counts from 0 upward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buckets(Vec<Bucket>);

impl Default for Buckets {
    /// 0, 1, 2, 3-10, 11-50, >50.
    fn default() -> Self {
        "0,1,2,3-10,11-50,>50".parse().unwrap()
    }
}

impl Buckets {
    pub fn new(buckets: Vec<Bucket>) -> Result<Self, DataError> {
        let mut next = 0u32;
        for (i, b) in buckets.iter().enumerate() {
            if b.lo != next {
                return Err(DataError::Buckets(format!("bucket {b} should start at {next}")));
            }
            match b.hi {
                Some(hi) if hi < b.lo => return Err(DataError::Buckets(format!("empty bucket {b}"))),
                Some(hi) => next = hi + 1,
                None if i + 1 != buckets.len() => {
                    return Err(DataError::Buckets("only the last bucket may be unbounded".into()));
                }
                None => return Ok(Buckets(buckets)),
            }
        }
        Err(DataError::Buckets("the last bucket must be unbounded (e.g. '>50')".into()))
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bucket_of(&self, train_count: u32) -> usize {
        self.0.iter().position(|b| b.hi.is_none_or(|hi| train_count <= hi)).expect("buckets cover all counts")
    }

    pub fn labels(&self) -> Vec<String> {
        self.0.iter().map(|b| b.to_string()).collect()
    }
}

impl FromStr for Buckets {
    type Err = DataError;

    /// Comma-separated `n`, `a-b` or `>n` items.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |item: &str| DataError::Buckets(format!("cannot parse '{item}'"));
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim) {
            let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad(item));
            let b = if let Some(rest) = item.strip_prefix('>') {
                Bucket { lo: num(rest)? + 1, hi: None }
            } else if let Some((a, b)) = item.split_once('-') {
                Bucket { lo: num(a)?, hi: Some(num(b)?) }
            } else {
                let v = num(item)?;
                Bucket { lo: v, hi: Some(v) }
            };
            out.push(b);
        }
        Buckets::new(out)
    }
}

/// Bucket index of each record by the train count of its template.
pub fn frequency_buckets(index: &TemplateIndex, records: &[&ReactionRecord], buckets: &Buckets) -> Vec<usize> {
    records.iter().map(|r| buckets.bucket_of(index.train_count(r.template_id))).collect()
}

/// Removes every record of templates that occur exactly once in the train
/// split and never in the test split.
pub fn drop_singleton_train_templates(records: &[ReactionRecord]) -> Vec<ReactionRecord> {
    let mut train: BTreeMap<usize, u32> = BTreeMap::new();
    let mut in_test: BTreeMap<usize, bool> = BTreeMap::new();
    for r in records {
        match r.split {
            Some(Split::Train) => *train.entry(r.template_id).or_default() += 1,
            Some(Split::Test) => {
                in_test.insert(r.template_id, true);
            }
            _ => {}
        }
    }
    records
        .iter()
        .filter(|r| !(train.get(&r.template_id) == Some(&1) && !in_test.contains_key(&r.template_id)))
        .cloned()
        .collect()
}
