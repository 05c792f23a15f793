//! Tab-separated reaction and template files.
//!
//! Reactions: `id<TAB>reactants>reagents>product<TAB>template_id[<TAB>split]`.
//! Templates: `id<TAB>product_pattern>>reactant_patterns<TAB>count`.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{DataError, ReactionRecord, Split, TemplateIndex};
use crate::chemgraph::{parse_reaction_smiles, parse_template, ReactionTemplate};

/// A row that could not be used, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
    pub text: String,
}

impl Reject {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.line, self.reason, self.text)
    }
}

/// Parsed template file: unique templates in order of first appearance and
/// the mapping from file ids to dense ids.
#[derive(Debug, Clone)]
pub struct TemplateFile {
    pub templates: Vec<ReactionTemplate>,
    pub id_map: HashMap<u64, usize>,
    /// Count column, summed over duplicate rows.
    pub listed_counts: Vec<u64>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<ReactionRecord>,
    pub index: TemplateIndex,
    pub rejects: Vec<Reject>,
    pub template_rejects: Vec<Reject>,
}

impl Corpus {
    /// Line-oriented rejects report.
    pub fn rejects_report(&self) -> String {
        let mut out = String::new();
        for (file, list) in [("templates", &self.template_rejects), ("reactions", &self.rejects)] {
            for r in list {
                let _ = writeln!(out, "{file}\t{}", r.to_line());
            }
        }
        out
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn parse_templates(text: &str, path: &str) -> Result<TemplateFile, DataError> {
    let format = |line: usize, message: String| DataError::Format { path: path.to_string(), line, message };
    let mut out = TemplateFile { templates: Vec::new(), id_map: HashMap::new(), listed_counts: Vec::new(), rejects: Vec::new() };
    let mut by_text: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows = 0;
    for (line, l) in content_lines(text) {
        rows += 1;
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != 3 {
            return Err(format(line, format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let file_id: u64 = cols[0].trim().parse().map_err(|_| format(line, format!("invalid template id '{}'", cols[0])))?;
        let count: u64 = cols[2].trim().parse().map_err(|_| format(line, format!("invalid count '{}'", cols[2])))?;
        if out.id_map.contains_key(&file_id) {
            return Err(format(line, format!("duplicate template id {file_id}")));
        }
        let pattern = cols[1].trim();
        if let Some(&id) = by_text.get(pattern) {
            out.id_map.insert(file_id, id);
            out.listed_counts[id] += count;
            continue;
        }
        match parse_template(pattern) {
            Ok(t) => {
                let id = out.templates.len();
                by_text.insert(pattern.to_string(), id);
                out.id_map.insert(file_id, id);
                out.templates.push(t.with_id(id));
                out.listed_counts.push(count);
            }
            Err(e) => out.rejects.push(Reject { line, reason: e.to_string(), text: l.to_string() }),
        }
    }
    if rows == 0 {
        return Err(format(0, "template file contains no templates".into()));
    }
    Ok(out)
}

pub fn load_templates(path: &Path) -> Result<TemplateFile, DataError> {
    parse_templates(&read(path)?, &path.display().to_string())
}

/// Parses reaction rows against a template file. Rows that fail to parse or
/// reference unknown templates become rejects.
pub fn parse_reactions(text: &str, templates: TemplateFile) -> Corpus {
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (line, l) in content_lines(text) {
        let reject = |reason: String| Reject { line, reason, text: l.to_string() };
        let cols: Vec<&str> = l.split('\t').collect();
        if !(3..=4).contains(&cols.len()) {
            rejects.push(reject(format!("expected 3 or 4 tab-separated columns, found {}", cols.len())));
            continue;
        }
        let reaction = match parse_reaction_smiles(cols[1].trim()) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(reject(e.to_string()));
                continue;
            }
        };
        let template_id = match cols[2].trim().parse::<u64>().ok().and_then(|id| templates.id_map.get(&id)) {
            Some(&id) => id,
            None => {
                rejects.push(reject(format!("unknown template id '{}'", cols[2].trim())));
                continue;
            }
        };
        let split = match cols.get(3).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => match s.parse::<Split>() {
                Ok(split) => Some(split),
                Err(e) => {
                    rejects.push(reject(e));
                    continue;
                }
            },
        };
        records.push(ReactionRecord {
            id: cols[0].trim().to_string(),
            product: reaction.product,
            reactants: reaction.reactants,
            reagents: reaction.reagents,
            template_id,
            split,
        });
    }
    let index = TemplateIndex::with_records(templates.templates, &records);
    Corpus { records, index, rejects, template_rejects: templates.rejects }
}

pub fn load_reactions(path: &Path, template_path: &Path) -> Result<Corpus, DataError> {
    let templates = load_templates(template_path)?;
    Ok(parse_reactions(&read(path)?, templates))
}

fn join(mols: &[crate::chemgraph::Molecule]) -> String {
    let mut v: Vec<String> = mols.iter().map(|m| m.canonical_smiles()).collect();
    v.sort();
    v.join(".")
}

/// Reaction rows with canonical SMILES; the split column is written when
/// any record has one.
pub fn reactions_text(records: &[ReactionRecord]) -> String {
    let with_split = records.iter().any(|r| r.split.is_some());
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "{}\t{}>{}>{}\t{}", r.id, join(&r.reactants), join(&r.reagents), r.product.canonical_smiles(), r.template_id);
        if with_split {
            let _ = write!(out, "\t{}", r.split.map_or("", |s| s.as_str()));
        }
        out.push('\n');
    }
    out
}

/// Template rows; the count column holds the total record count.
pub fn templates_text(index: &TemplateIndex) -> String {
    let mut out = String::new();
    for (i, t) in index.templates().iter().enumerate() {
        let _ = writeln!(out, "{i}\t{}\t{}", t.source_text(), index.counts(i).total());
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    std::fs::write(path, text).map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn write_reactions(path: &Path, records: &[ReactionRecord]) -> Result<(), DataError> {
    write(path, &reactions_text(records))
}

pub fn write_templates(path: &Path, index: &TemplateIndex) -> Result<(), DataError> {
    write(path, &templates_text(index))
}
