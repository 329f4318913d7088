//! Line-oriented model format.
//!
//! ```text
//! domain X = { x1, x2 }
//! prv Hot
//! prv DoR(X)
//! parfactor g1 [ DoR(X), Hot ] table { ff: 0.9, ft: 0.2, tf: 0.4, tt: 1 }
//! slice parfactor gH [ Hot@0, Hot@1 ] table { ff: 1, ft: 0.3, tf: 0.3, tt: 1 }
//! query Hot ; DoR(x1)
//! evidence t=3 { DoR(x2)=true }
//! ```
//!
//! Newlines are whitespace; `#` starts a comment running to the end of the
//! line. Table keys are the concatenated initials of the argument values or,
//! when initials are ambiguous, the full values joined by `/`.

use std::collections::BTreeMap;

use super::{
    validate_parfactor, Constraint, GroundAtom, Logvar, Observation, Parfactor, Pdm, PrvDecl, PrvRef, Slice, Vocab,
};
use crate::error::{ModelError, ParseError};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Punct(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let col = i + 1;
            if c.is_alphanumeric() || c == '_' || c == '.' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                // exponent sign inside a number such as 1e-3
                while i + 1 < chars.len()
                    && (chars[i] == '-' || chars[i] == '+')
                    && matches!(chars[i - 1], 'e' | 'E')
                    && chars[start].is_ascii_digit()
                {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                        i += 1;
                    }
                }
                out.push(Token { tok: Tok::Word(chars[start..i].iter().collect()), line: li + 1, col });
                continue;
            }
            if "{}[](),;:=@/-".contains(c) {
                out.push(Token { tok: Tok::Punct(c), line: li + 1, col });
                i += 1;
                continue;
            }
            return Err(ParseError { line: li + 1, col, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    vocab: Vocab,
    intra: Vec<Parfactor>,
    inter: Vec<Parfactor>,
    queries: Vec<GroundAtom>,
    evidence: BTreeMap<u32, Vec<(Observation, usize, usize)>>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError { line, col, message: message.into() })
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next_word(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        match self.peek() {
            Some(Tok::Punct(p)) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{c}`")),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(p)) if *p == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Word(x)) if x == w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn word_list(&mut self) -> PResult<Vec<String>> {
        self.expect('{')?;
        let mut out = Vec::new();
        if self.eat('}') {
            return Ok(out);
        }
        loop {
            out.push(self.next_word("a value")?);
            if self.eat('}') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn statement(&mut self) -> PResult<()> {
        let kw = self.next_word("a statement keyword")?;
        match kw.as_str() {
            "domain" => self.domain(),
            "prv" => self.prv(),
            "parfactor" => self.parfactor(false),
            "slice" => {
                if !self.eat_word("parfactor") {
                    return self.err("expected `parfactor` after `slice`");
                }
                self.parfactor(true)
            }
            "query" => self.query(),
            "evidence" => self.evidence(),
            other => {
                self.pos -= 1;
                self.err(format!("unknown statement `{other}`"))
            }
        }
    }

    fn domain(&mut self) -> PResult<()> {
        let name = self.next_word("a logvar name")?;
        if self.vocab.logvar_id(&name).is_some() {
            return self.err(ModelError::ConflictingDeclaration(name).to_string());
        }
        self.expect('=')?;
        let domain = self.word_list()?;
        if domain.is_empty() {
            return self.err(ModelError::EmptyDomain(name).to_string());
        }
        let mut seen = domain.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != domain.len() {
            return self.err(ModelError::DuplicateConstant(name).to_string());
        }
        self.vocab.logvars.push(Logvar { name, domain });
        Ok(())
    }

    fn prv(&mut self) -> PResult<()> {
        let name = self.next_word("a PRV name")?;
        if self.vocab.prv_id(&name).is_some() {
            return self.err(ModelError::ConflictingDeclaration(name).to_string());
        }
        let mut params = Vec::new();
        if self.eat('(') {
            loop {
                let lv = self.next_word("a logvar")?;
                match self.vocab.logvar_id(&lv) {
                    Some(id) if params.contains(&id) => return self.err(ModelError::RepeatedLogvar(name).to_string()),
                    Some(id) => params.push(id),
                    None => return self.err(ModelError::UnknownLogvar(lv).to_string()),
                }
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        let range = if self.eat_word("range") {
            let r = self.word_list()?;
            if r.len() < 2 {
                return self.err(ModelError::SmallRange(name).to_string());
            }
            r
        } else {
            vec!["false".to_string(), "true".to_string()]
        };
        self.vocab.prvs.push(PrvDecl { name, params, range });
        Ok(())
    }

    fn arg(&mut self, sliced: bool) -> PResult<PrvRef> {
        let name = self.next_word("a PRV")?;
        let id = match self.vocab.prv_id(&name) {
            Some(id) => id,
            None => return self.err(ModelError::UnknownPrv(name).to_string()),
        };
        let mut lvs = Vec::new();
        if self.eat('(') {
            loop {
                lvs.push(self.next_word("a logvar")?);
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        let decl = &self.vocab.prvs[id];
        if lvs.len() != decl.params.len() {
            return self.err(
                ModelError::ArityMismatch { prv: name, expected: decl.params.len(), found: lvs.len() }.to_string(),
            );
        }
        for (lv, &p) in lvs.iter().zip(&decl.params) {
            if self.vocab.logvar_id(lv).is_none() {
                return self.err(ModelError::UnknownLogvar(lv.clone()).to_string());
            }
            if self.vocab.logvars[p].name != *lv {
                return self.err(format!("`{name}` is declared over `{}`, found `{lv}`", self.vocab.logvars[p].name));
            }
        }
        let slice = if self.eat('@') {
            if !sliced {
                return self.err("slice tags are only allowed in `slice parfactor`");
            }
            match self.next_word("slice tag 0 or 1")?.as_str() {
                "0" => Slice::Prev,
                "1" => Slice::Curr,
                _ => return self.err("slice tag must be 0 or 1"),
            }
        } else if sliced {
            return self.err("every argument of a slice parfactor needs a tag @0 or @1");
        } else {
            Slice::Static
        };
        Ok(PrvRef::new(id, slice))
    }

    fn number(&mut self) -> PResult<f64> {
        if matches!(self.peek(), Some(Tok::Punct('-'))) {
            return self.err("numbers must be non-negative");
        }
        let w = self.next_word("a number")?;
        match w.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            _ => {
                self.pos -= 1;
                self.err(format!("invalid number `{w}`"))
            }
        }
    }

    fn parfactor(&mut self, sliced: bool) -> PResult<()> {
        let start = self.here();
        let name = self.next_word("a parfactor name")?;
        if self.intra.iter().chain(&self.inter).any(|p| p.name == name) {
            return self.err(ModelError::ConflictingDeclaration(name).to_string());
        }
        self.expect('[')?;
        let mut args = Vec::new();
        loop {
            args.push(self.arg(sliced)?);
            if self.eat(']') {
                break;
            }
            self.expect(',')?;
        }
        let mut restrictions: Vec<(usize, Vec<u32>)> = Vec::new();
        if self.eat_word("where") {
            loop {
                let lv = self.next_word("a logvar")?;
                let id = match self.vocab.logvar_id(&lv) {
                    Some(id) => id,
                    None => return self.err(ModelError::UnknownLogvar(lv).to_string()),
                };
                if !self.eat_word("in") {
                    return self.err("expected `in`");
                }
                let consts = self.word_list()?;
                let mut vals = Vec::new();
                for c in consts {
                    match self.vocab.logvars[id].domain.iter().position(|d| *d == c) {
                        Some(i) => vals.push(i as u32),
                        None => return self.err(ModelError::UnknownConstant { logvar: lv, constant: c }.to_string()),
                    }
                }
                vals.sort_unstable();
                vals.dedup();
                restrictions.push((id, vals));
                if !self.eat_word("and") {
                    break;
                }
            }
        }
        if !self.eat_word("table") {
            return self.err("expected `table`");
        }
        let ranges: Vec<Vec<String>> = args.iter().map(|a| self.vocab.prvs[a.prv].range.clone()).collect();
        let size: usize = ranges.iter().map(|r| r.len()).product();
        let mut potential = vec![f64::NAN; size];
        self.expect('{')?;
        let mut filled = 0;
        if !self.eat('}') {
            loop {
                let key_pos = self.pos;
                let mut parts = vec![self.next_word("a table key")?];
                while self.eat('/') {
                    parts.push(self.next_word("a range value")?);
                }
                let idx = match key_index(&ranges, &parts) {
                    Some(i) => i,
                    None => {
                        self.pos = key_pos;
                        return self.err(format!("unknown key `{}`", parts.join("/")));
                    }
                };
                self.expect(':')?;
                let v = self.number()?;
                if !potential[idx].is_nan() {
                    self.pos = key_pos;
                    return self.err(format!("duplicate key `{}`", parts.join("/")));
                }
                potential[idx] = v;
                filled += 1;
                if self.eat('}') {
                    break;
                }
                self.expect(',')?;
            }
        }
        if filled != size {
            return Err(ParseError {
                line: start.0,
                col: start.1,
                message: ModelError::IncompleteSpecification { parfactor: name, expected: size, found: filled }
                    .to_string(),
            });
        }
        let constraint = if restrictions.is_empty() {
            Constraint::Top
        } else {
            let pf_lvs: Vec<usize> = {
                let mut v = Vec::new();
                for a in &args {
                    for &l in &self.vocab.prvs[a.prv].params {
                        if !v.contains(&l) {
                            v.push(l);
                        }
                    }
                }
                v
            };
            let mut logvars = Vec::new();
            let mut values = Vec::new();
            for &lv in &pf_lvs {
                logvars.push(lv);
                values.push(match restrictions.iter().find(|(l, _)| *l == lv) {
                    Some((_, vals)) => vals.clone(),
                    None => (0..self.vocab.domain_size(lv) as u32).collect(),
                });
            }
            if let Some((l, _)) = restrictions.iter().find(|(l, _)| !pf_lvs.contains(l)) {
                return Err(ParseError {
                    line: start.0,
                    col: start.1,
                    message: format!("constraint mentions `{}` which no argument uses", self.vocab.logvars[*l].name),
                });
            }
            Constraint::Product { logvars, values }
        };
        let pf = Parfactor { name, args, potential, constraint };
        if let Err(e) = validate_parfactor(&self.vocab, &pf) {
            return Err(ParseError { line: start.0, col: start.1, message: e.to_string() });
        }
        if sliced {
            if !pf.is_inter_slice() {
                return Err(ParseError {
                    line: start.0,
                    col: start.1,
                    message: format!("slice parfactor `{}` must mention both slices", pf.name),
                });
            }
            self.inter.push(pf);
        } else {
            self.intra.push(pf);
        }
        Ok(())
    }

    fn atom(&mut self) -> PResult<GroundAtom> {
        let name = self.next_word("a ground PRV")?;
        let id = match self.vocab.prv_id(&name) {
            Some(id) => id,
            None => {
                self.pos -= 1;
                return self.err(ModelError::UnknownPrv(name).to_string());
            }
        };
        let mut consts = Vec::new();
        if self.eat('(') {
            loop {
                consts.push(self.next_word("a constant")?);
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        let params = self.vocab.prvs[id].params.clone();
        if consts.len() != params.len() {
            return self
                .err(ModelError::ArityMismatch { prv: name, expected: params.len(), found: consts.len() }.to_string());
        }
        let mut args = Vec::new();
        for (c, &lv) in consts.into_iter().zip(&params) {
            match self.vocab.logvars[lv].domain.iter().position(|d| *d == c) {
                Some(i) => args.push(i as u32),
                None => {
                    return self.err(
                        ModelError::UnknownConstant { logvar: self.vocab.logvars[lv].name.clone(), constant: c }
                            .to_string(),
                    )
                }
            }
        }
        Ok(GroundAtom { prv: id, args })
    }

    fn query(&mut self) -> PResult<()> {
        loop {
            let a = self.atom()?;
            if !self.queries.contains(&a) {
                self.queries.push(a);
            }
            if !self.eat(';') {
                return Ok(());
            }
        }
    }

    fn evidence(&mut self) -> PResult<()> {
        if !self.eat_word("t") {
            return self.err("expected `t=<step>`");
        }
        self.expect('=')?;
        let w = self.next_word("a step index")?;
        let t: u32 = match w.parse() {
            Ok(t) => t,
            Err(_) => {
                self.pos -= 1;
                return self.err(format!("invalid step `{w}`"));
            }
        };
        self.expect('{')?;
        if self.eat('}') {
            return Ok(());
        }
        loop {
            let (line, col) = self.here();
            let atom = self.atom()?;
            self.expect('=')?;
            let v = self.next_word("an observed value")?;
            let value = match self.vocab.prvs[atom.prv].range.iter().position(|r| *r == v) {
                Some(i) => i as u32,
                None => {
                    self.pos -= 1;
                    return self
                        .err(format!("value `{v}` is not in the range of `{}`", self.vocab.prvs[atom.prv].name));
                }
            };
            let step = self.evidence.entry(t).or_default();
            if let Some((prev, _, _)) = step.iter().find(|(o, _, _)| o.atom == atom) {
                if prev.value != value {
                    return Err(ParseError {
                        line,
                        col,
                        message: ModelError::ConflictingEvidence { step: t }.to_string(),
                    });
                }
            } else {
                step.push((Observation { atom, value }, line, col));
            }
            if self.eat('}') {
                return Ok(());
            }
            self.expect(',')?;
        }
    }
}

fn key_index(ranges: &[Vec<String>], parts: &[String]) -> Option<usize> {
    let full: Option<Vec<usize>> = if parts.len() == ranges.len() {
        parts.iter().zip(ranges).map(|(p, r)| r.iter().position(|v| v == p)).collect()
    } else {
        None
    };
    let values = match full {
        Some(v) => v,
        None if parts.len() == 1 => {
            let chars: Vec<char> = parts[0].chars().collect();
            if chars.len() != ranges.len() {
                return None;
            }
            let mut out = Vec::new();
            for (c, r) in chars.iter().zip(ranges) {
                let mut hits = r.iter().enumerate().filter(|(_, v)| v.starts_with(*c));
                let (i, _) = hits.next()?;
                if hits.next().is_some() {
                    return None;
                }
                out.push(i);
            }
            out
        }
        None => return None,
    };
    let mut idx = 0;
    for (v, r) in values.iter().zip(ranges) {
        idx = idx * r.len() + v;
    }
    Some(idx)
}

/// Parses a model file into a validated dynamic model.
pub fn parse_model(text: &str) -> Result<Pdm, ParseError> {
    let toks = lex(text)?;
    let end = (text.lines().count().max(1), 1);
    let mut p = Parser {
        toks,
        pos: 0,
        end,
        vocab: Vocab::default(),
        intra: Vec::new(),
        inter: Vec::new(),
        queries: Vec::new(),
        evidence: BTreeMap::new(),
    };
    while p.pos < p.toks.len() {
        p.statement()?;
    }
    let Parser { vocab, intra, inter, queries, evidence, .. } = p;
    let mut pdm =
        Pdm::new(vocab, intra, inter).map_err(|e| ParseError { line: end.0, col: 1, message: e.to_string() })?;
    pdm.queries = queries;
    for (t, obs) in evidence {
        for (o, line, col) in obs {
            pdm.evidence.observe(t, o).map_err(|e| ParseError { line, col, message: e.to_string() })?;
        }
    }
    Ok(pdm)
}
