//! SMILES subset parser, also used for template patterns.
//!
//! Supported: organic-subset and bracket atoms, aromatic lowercase atoms,
//! charges, atom maps, `*`, bond symbols `- = # :`, branches, ring closures
//! (`1`..`9`, `%nn`) and `.` fragments. Stereo marks, isotopes and explicit
//! hydrogen counts are accepted and dropped (recorded in [`ParseFlags`]).

use std::collections::{BTreeMap, BTreeSet};

use super::elements;
use super::{Atom, Bond, BondOrder, ChemError, Molecule, ParseFlags, PatternGraph, ReactionTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSym {
    Order(BondOrder),
    /// `/` or `\`: a single bond with a dropped direction mark.
    Directional,
}

struct Parsed {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    maps: Vec<Option<u32>>,
    flags: ParseFlags,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    /// Offset of `text` within the caller's string, for error reporting.
    base: usize,
    out: Parsed,
}

fn lookup_bond(bonds: &[Bond], a: usize, b: usize) -> bool {
    bonds.iter().any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, base: usize) -> Self {
        Parser {
            text: text.as_bytes(),
            pos: 0,
            base,
            out: Parsed { atoms: Vec::new(), bonds: Vec::new(), maps: Vec::new(), flags: ParseFlags::default() },
        }
    }

    fn err(&self, offset: usize, msg: impl Into<String>) -> ChemError {
        ChemError::syntax(self.base + offset, msg)
    }

    fn unsupported(&self, offset: usize, feature: &str) -> ChemError {
        ChemError::UnsupportedFeature { offset: self.base + offset, feature: feature.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.text.get(self.pos + k).copied()
    }

    fn add_bond(&mut self, a: usize, b: usize, sym: Option<BondSym>, offset: usize) -> Result<(), ChemError> {
        if a == b {
            return Err(self.err(offset, "ring closure onto the same atom"));
        }
        if lookup_bond(&self.out.bonds, a, b) {
            return Err(self.err(offset, "duplicate bond"));
        }
        let order = match sym {
            Some(BondSym::Order(o)) => o,
            Some(BondSym::Directional) => BondOrder::Single,
            None => {
                if self.out.atoms[a].aromatic && self.out.atoms[b].aromatic {
                    BondOrder::Aromatic
                } else {
                    BondOrder::Single
                }
            }
        };
        self.out.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn parse(mut self) -> Result<Parsed, ChemError> {
        if self.text.is_empty() {
            return Err(self.err(0, "empty input"));
        }
        let mut prev: Option<usize> = None;
        let mut branches: Vec<usize> = Vec::new();
        let mut pending: Option<(BondSym, usize)> = None;
        let mut rings: BTreeMap<u32, (usize, Option<BondSym>, usize)> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(self.err(start, "branch without a preceding atom"));
                    };
                    if pending.is_some() {
                        return Err(self.err(start, "bond symbol before branch"));
                    }
                    branches.push(p);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(self.err(start, "dangling bond symbol"));
                    }
                    let Some(p) = branches.pop() else {
                        return Err(self.err(start, "unmatched ')'"));
                    };
                    prev = Some(p);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() {
                        return Err(self.err(start, "two consecutive bond symbols"));
                    }
                    let sym = match c {
                        b'-' => BondSym::Order(BondOrder::Single),
                        b'=' => BondSym::Order(BondOrder::Double),
                        b'#' => BondSym::Order(BondOrder::Triple),
                        b':' => BondSym::Order(BondOrder::Aromatic),
                        _ => {
                            self.out.flags.stereo_dropped = true;
                            BondSym::Directional
                        }
                    };
                    pending = Some((sym, start));
                    self.pos += 1;
                }
                b'$' => return Err(self.unsupported(start, "quadruple bond '$'")),
                b'~' => return Err(self.unsupported(start, "SMARTS any-bond '~'")),
                b'!' | b',' | b'&' | b';' => {
                    return Err(self.unsupported(start, "SMARTS logical operator"))
                }
                b'.' => {
                    if pending.is_some() {
                        return Err(self.err(start, "bond symbol before '.'"));
                    }
                    if prev.is_none() {
                        return Err(self.err(start, "'.' without a preceding atom"));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return Err(self.err(start, "ring closure without a preceding atom"));
                    };
                    let num = self.ring_number()?;
                    let sym = pending.take().map(|(s, _)| s);
                    if let Some((other, open_sym, _)) = rings.remove(&num) {
                        let sym = match (open_sym, sym) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(self.err(start, "conflicting ring-closure bond symbols"))
                            }
                            (a, b) => a.or(b),
                        };
                        self.add_bond(other, p, sym, start)?;
                    } else {
                        rings.insert(num, (p, sym, start));
                    }
                }
                b'[' | b'*' | b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom_idx = if c == b'[' { self.bracket_atom()? } else { self.organic_atom()? };
                    if let Some(p) = prev {
                        let sym = pending.take().map(|(s, _)| s);
                        self.add_bond(p, atom_idx, sym, start)?;
                    } else if let Some((_, off)) = pending {
                        return Err(self.err(off, "bond symbol without a preceding atom"));
                    }
                    prev = Some(atom_idx);
                }
                b'@' => return Err(self.err(start, "chirality mark outside brackets")),
                _ => return Err(self.err(start, format!("unexpected character '{}'", c as char))),
            }
        }
        if let Some((_, off)) = pending {
            return Err(self.err(off, "dangling bond symbol"));
        }
        if !branches.is_empty() {
            return Err(self.err(self.text.len(), "unclosed branch"));
        }
        if let Some((_, (_, _, off))) = rings.iter().next() {
            return Err(self.err(*off, "unclosed ring"));
        }
        if self.out.atoms.is_empty() {
            return Err(self.err(0, "no atoms"));
        }
        Ok(self.out)
    }

    fn ring_number(&mut self) -> Result<u32, ChemError> {
        let start = self.pos;
        if self.peek() == Some(b'%') {
            let (Some(a), Some(b)) = (self.peek_at(1), self.peek_at(2)) else {
                return Err(self.err(start, "'%' needs two digits"));
            };
            if !a.is_ascii_digit() || !b.is_ascii_digit() {
                return Err(self.err(start, "'%' needs two digits"));
            }
            self.pos += 3;
            Ok(((a - b'0') * 10 + (b - b'0')) as u32)
        } else {
            let d = self.peek().unwrap();
            self.pos += 1;
            Ok((d - b'0') as u32)
        }
    }

    fn push_atom(&mut self, atom: Atom, map: Option<u32>) -> usize {
        self.out.atoms.push(atom);
        self.out.maps.push(map);
        self.out.atoms.len() - 1
    }

    fn organic_atom(&mut self) -> Result<usize, ChemError> {
        let start = self.pos;
        let c = self.peek().unwrap();
        let (element, aromatic, len) = match c {
            b'*' => (elements::WILDCARD, false, 1),
            b'B' if self.peek_at(1) == Some(b'r') => (35, false, 2),
            b'C' if self.peek_at(1) == Some(b'l') => (17, false, 2),
            b'B' => (5, false, 1),
            b'C' => (6, false, 1),
            b'N' => (7, false, 1),
            b'O' => (8, false, 1),
            b'P' => (15, false, 1),
            b'S' => (16, false, 1),
            b'F' => (9, false, 1),
            b'I' => (53, false, 1),
            b'b' => (5, true, 1),
            b'c' => (6, true, 1),
            b'n' => (7, true, 1),
            b'o' => (8, true, 1),
            b'p' => (15, true, 1),
            b's' => (16, true, 1),
            _ => {
                return Err(self.err(start, format!("'{}' is not an organic-subset atom", c as char)))
            }
        };
        self.pos += len;
        Ok(self.push_atom(Atom { element, charge: 0, aromatic }, None))
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.text[start..self.pos]).ok()?.parse().ok()
    }

    fn bracket_atom(&mut self) -> Result<usize, ChemError> {
        let open = self.pos;
        self.pos += 1;
        if self.read_number().is_some() {
            self.out.flags.isotope_dropped = true;
        }
        let sym_start = self.pos;
        let (element, aromatic) = match self.peek() {
            Some(b'*') => {
                self.pos += 1;
                (elements::WILDCARD, false)
            }
            Some(c) if c.is_ascii_uppercase() => {
                let two = self.peek_at(1).filter(|n| n.is_ascii_lowercase()).and_then(|n| {
                    let s = [c, n];
                    elements::atomic_number(std::str::from_utf8(&s).ok()?)
                });
                if let Some(z) = two {
                    self.pos += 2;
                    (z, false)
                } else {
                    let s = [c];
                    let z = elements::atomic_number(std::str::from_utf8(&s).unwrap())
                        .ok_or_else(|| self.err(sym_start, "unknown element"))?;
                    self.pos += 1;
                    (z, false)
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                let two = match (c, self.peek_at(1)) {
                    (b's', Some(b'e')) => Some(34),
                    (b'a', Some(b's')) => Some(33),
                    _ => None,
                };
                if let Some(z) = two {
                    self.pos += 2;
                    (z, true)
                } else {
                    let z = match c {
                        b'b' => 5,
                        b'c' => 6,
                        b'n' => 7,
                        b'o' => 8,
                        b'p' => 15,
                        b's' => 16,
                        _ => return Err(self.err(sym_start, "unknown aromatic element")),
                    };
                    self.pos += 1;
                    (z, true)
                }
            }
            _ => return Err(self.err(sym_start, "expected element symbol")),
        };
        if aromatic && !elements::can_be_aromatic(element) {
            return Err(self.err(sym_start, "element cannot be aromatic"));
        }
        if self.peek() == Some(b'@') {
            self.out.flags.stereo_dropped = true;
            while self.peek() == Some(b'@') {
                self.pos += 1;
            }
            let tag = &self.text[self.pos..];
            if ["TH", "AL", "SP", "TB", "OH"].iter().any(|t| tag.starts_with(t.as_bytes())) {
                self.pos += 2;
                self.read_number();
            }
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            self.read_number();
            self.out.flags.hydrogens_dropped = true;
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.read_number() {
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }
        let mut map = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            map = Some(self.read_number().ok_or_else(|| self.err(self.pos, "expected atom-map number"))?);
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b'!' | b',' | b'&' | b';') => {
                return Err(self.unsupported(self.pos, "SMARTS logical operator"))
            }
            Some(c) => return Err(self.err(self.pos, format!("unexpected '{}' in bracket atom", c as char))),
            None => return Err(self.err(open, "unclosed bracket atom")),
        }
        let charge = i8::try_from(charge).map_err(|_| self.err(open, "charge out of range"))?;
        Ok(self.push_atom(Atom { element, charge, aromatic }, map))
    }
}

fn parse_at(text: &str, base: usize) -> Result<Parsed, ChemError> {
    Parser::new(text, base).parse()
}

fn build_molecule(parsed: Parsed, text: &str) -> Result<Molecule, ChemError> {
    let flags = parsed.flags;
    Ok(Molecule::from_parts(parsed.atoms, parsed.bonds)?.with_source(text, flags))
}

/// Parses a SMILES string. Atom maps are ignored.
pub fn parse_smiles(text: &str) -> Result<Molecule, ChemError> {
    let parsed = parse_at(text, 0)?;
    build_molecule(parsed, text)
}

/// Parses a pattern, keeping atom maps; `*` atoms match any element.
pub fn parse_pattern(text: &str) -> Result<PatternGraph, ChemError> {
    pattern_at(text, 0)
}

fn pattern_at(text: &str, base: usize) -> Result<PatternGraph, ChemError> {
    let parsed = parse_at(text, base)?;
    let maps = parsed.maps.clone();
    PatternGraph::new(build_molecule(parsed, text)?, maps)
}

#[derive(Debug, Clone, Default)]
pub struct TemplateParseOptions {
    /// Reactant-side maps allowed to have no product-side atom.
    pub introduced_maps: BTreeSet<u32>,
}

/// Parses `product>>reactant1.reactant2`.
pub fn parse_template(text: &str) -> Result<ReactionTemplate, ChemError> {
    parse_template_with(text, &TemplateParseOptions::default())
}

pub fn parse_template_with(text: &str, opts: &TemplateParseOptions) -> Result<ReactionTemplate, ChemError> {
    let Some(sep) = text.find(">>") else {
        return Err(ChemError::syntax(0, "template needs a '>>' separator"));
    };
    if text[sep + 2..].contains('>') {
        return Err(ChemError::syntax(sep + 2, "template has more than one '>>' separator"));
    }
    let product_text = &text[..sep];
    let reactant_text = &text[sep + 2..];
    let product_pattern = pattern_at(product_text, 0)?;
    let mut reactant_patterns = Vec::new();
    let mut offset = sep + 2;
    for part in reactant_text.split('.') {
        if part.is_empty() {
            return Err(ChemError::syntax(offset, "empty reactant pattern"));
        }
        reactant_patterns.push(pattern_at(part, offset)?);
        offset += part.len() + 1;
    }
    let product_maps: BTreeSet<u32> = product_pattern.maps().iter().flatten().copied().collect();
    let mut seen = BTreeSet::new();
    for pattern in &reactant_patterns {
        for &m in pattern.maps().iter().flatten() {
            if !seen.insert(m) {
                return Err(ChemError::DuplicateMap(m));
            }
            if !product_maps.contains(&m) && !opts.introduced_maps.contains(&m) {
                return Err(ChemError::MissingMap(m));
            }
        }
    }
    Ok(ReactionTemplate {
        id: 0,
        product_pattern,
        reactant_patterns,
        train_count: 0,
        introduced_maps: opts.introduced_maps.clone(),
        source: text.to_string(),
    })
}

/// A parsed `reactants>reagents>product` reaction line.
#[derive(Debug, Clone)]
pub struct ReactionSmiles {
    pub reactants: Vec<Molecule>,
    pub reagents: Vec<Molecule>,
    pub product: Molecule,
}

pub fn parse_reaction_smiles(text: &str) -> Result<ReactionSmiles, ChemError> {
    let parts: Vec<&str> = text.split('>').collect();
    if parts.len() != 3 {
        return Err(ChemError::syntax(0, "reaction SMILES needs exactly two '>' separators"));
    }
    let mut offset = 0;
    let mut sides = Vec::new();
    for part in &parts {
        let mut mols = Vec::new();
        if !part.is_empty() {
            for frag in part.split('.') {
                let parsed = parse_at(frag, offset)?;
                mols.push(build_molecule(parsed, frag)?);
                offset += frag.len() + 1;
            }
        } else {
            offset += 1;
        }
        sides.push(mols);
    }
    let product_side = sides.pop().unwrap();
    let reagents = sides.pop().unwrap();
    let reactants = sides.pop().unwrap();
    if reactants.is_empty() {
        return Err(ChemError::syntax(0, "reaction has no reactants"));
    }
    let product = match product_side.len() {
        0 => return Err(ChemError::syntax(text.len(), "reaction has no product")),
        1 => product_side.into_iter().next().unwrap(),
        _ => {
            let joined = parts[2];
            parse_smiles(joined)?
        }
    };
    Ok(ReactionSmiles { reactants, reagents, product })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::GraphView;

    fn bond_set(m: &Molecule) -> Vec<(usize, usize, BondOrder)> {
        let mut v: Vec<_> = m.bonds().iter().map(|b| (b.a.min(b.b), b.a.max(b.b), b.order)).collect();
        v.sort();
        v
    }

    #[test]
    fn single_carbon() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.bond_count(), 0);
        assert_eq!(m.atoms()[0].element, 6);
    }

    #[test]
    fn acetaldehyde() {
        let m = parse_smiles("CC=O").unwrap();
        let elems: Vec<u8> = m.atoms().iter().map(|a| a.element).collect();
        assert_eq!(elems, vec![6, 6, 8]);
        assert_eq!(bond_set(&m), vec![(0, 1, BondOrder::Single), (1, 2, BondOrder::Double)]);
    }

    #[test]
    fn cyclopropane_ring_closure() {
        let m = parse_smiles("C1CC1").unwrap();
        assert_eq!(m.atom_count(), 3);
        assert_eq!(
            bond_set(&m),
            vec![(0, 1, BondOrder::Single), (0, 2, BondOrder::Single), (1, 2, BondOrder::Single)]
        );
        assert!((0..3).all(|i| m.degree(i) == 2));
    }

    #[test]
    fn aromatic_ring_and_branches() {
        let m = parse_smiles("c1ccccc1C(=O)[O-]").unwrap();
        assert_eq!(m.atom_count(), 9);
        assert_eq!(m.bonds().iter().filter(|b| b.order == BondOrder::Aromatic).count(), 6);
        assert_eq!(m.atoms()[8].charge, -1);
        assert_eq!(m.degree(6), 3);
    }

    #[test]
    fn bracket_features() {
        let m = parse_smiles("[13CH3][C@@H](N)[NH3+]").unwrap();
        let f = m.flags();
        assert!(f.isotope_dropped && f.stereo_dropped && f.hydrogens_dropped);
        assert_eq!(m.atoms()[3].charge, 1);
        let m = parse_smiles("[Fe++].[O--]").unwrap();
        assert_eq!(m.atoms()[0].charge, 2);
        assert_eq!(m.atoms()[1].charge, -2);
        let m = parse_smiles("[Cl-].[se]1cccc1").unwrap();
        assert_eq!(m.atoms()[0].element, 17);
        assert!(m.atoms()[1].aromatic);
    }

    #[test]
    fn stereo_bonds_are_dropped_not_rejected() {
        let m = parse_smiles("F/C=C/F").unwrap();
        assert!(m.flags().stereo_dropped);
        assert_eq!(m.bond_count(), 3);
    }

    #[test]
    fn percent_ring_numbers() {
        let m = parse_smiles("C%12CC%12").unwrap();
        assert_eq!(m.bond_count(), 3);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        for (text, off) in [("C(C", 3), ("CC)", 2), ("C1CC", 1), ("C=", 1), ("[C", 0), ("CX", 1), ("", 0)] {
            match parse_smiles(text) {
                Err(ChemError::Syntax { offset, .. }) => assert_eq!(offset, off, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn unsupported_features() {
        assert!(matches!(parse_smiles("C$C"), Err(ChemError::UnsupportedFeature { offset: 1, .. })));
        assert!(matches!(parse_pattern("[C;H0]"), Err(ChemError::UnsupportedFeature { .. })));
        assert!(matches!(parse_pattern("C~C"), Err(ChemError::UnsupportedFeature { .. })));
    }

    #[test]
    fn ring_bond_errors() {
        assert!(parse_smiles("C11").is_err());
        assert!(parse_smiles("C1CC=1").is_ok());
        assert!(parse_smiles("C=1CC-1").is_err());
        assert!(parse_smiles("C12CC12").is_err());
    }

    #[test]
    fn template_with_maps() {
        let t = parse_template("[C:1]=[O:2]>>[C:1][O:2]").unwrap();
        assert_eq!(t.product_pattern.atom_count(), 2);
        assert_eq!(t.product_pattern.bond_between(0, 1), Some(BondOrder::Double));
        assert_eq!(t.product_pattern.maps(), &[Some(1), Some(2)]);
        assert_eq!(t.reactant_patterns.len(), 1);
        assert_eq!(t.reactant_patterns[0].bond_between(0, 1), Some(BondOrder::Single));
    }

    #[test]
    fn template_splits_reactants() {
        let t = parse_template("C>>C.C").unwrap();
        assert_eq!(t.product_pattern.atom_count(), 1);
        assert_eq!(t.reactant_patterns.len(), 2);
    }

    #[test]
    fn template_errors() {
        assert!(matches!(parse_template("C=O"), Err(ChemError::Syntax { .. })));
        assert!(matches!(parse_template("C>>C>>C"), Err(ChemError::Syntax { .. })));
        assert_eq!(parse_template("[C:1]>>[C:1][O:5]").unwrap_err(), ChemError::MissingMap(5));
        let opts = TemplateParseOptions { introduced_maps: [5].into_iter().collect() };
        assert!(parse_template_with("[C:1]>>[C:1][O:5]", &opts).is_ok());
        match parse_template("CC>>C.C(") {
            Err(ChemError::Syntax { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reaction_smiles() {
        let r = parse_reaction_smiles("CC(=O)O.OCC>[H+]>CC(=O)OCC").unwrap();
        assert_eq!(r.reactants.len(), 2);
        assert_eq!(r.reagents.len(), 1);
        assert_eq!(r.product.atom_count(), 6);
        let r = parse_reaction_smiles("CO>>C=O").unwrap();
        assert!(r.reagents.is_empty());
        assert!(parse_reaction_smiles("CO>C=O").is_err());
    }
}
