//! Control-flow graphs and their JSON / DOT encodings.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::Error;

/// A function's basic blocks and control-flow edges. Blocks are addressed by
/// index; `names` keeps their external ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub function: String,
    names: Vec<String>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    entry: usize,
}

#[derive(Serialize, Deserialize)]
struct CfgDoc {
    #[serde(default = "default_function")]
    function: String,
    #[serde(default)]
    entry: Option<String>,
    blocks: Vec<String>,
    #[serde(default)]
    edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    checkpoints: Vec<String>,
}

fn default_function() -> String {
    "main".into()
}

impl Cfg {
    /// Builds and validates a graph: the entry and every edge endpoint must
    /// be a declared block, and every block must be reachable from the entry.
    pub fn new(
        function: impl Into<String>,
        blocks: Vec<String>,
        edges: &[(String, String)],
        entry: &str,
    ) -> Result<Cfg, Error> {
        let mut index = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if index.insert(b.as_str(), i).is_some() {
                return Err(Error::Parse(format!("block `{b}` declared twice")));
            }
        }
        let lookup = |b: &str| {
            index
                .get(b)
                .copied()
                .ok_or_else(|| Error::Parse(format!("unknown block `{b}`")))
        };
        let entry = lookup(entry)?;
        let mut succ = vec![Vec::new(); blocks.len()];
        let mut pred = vec![Vec::new(); blocks.len()];
        for (a, b) in edges {
            let (a, b) = (lookup(a)?, lookup(b)?);
            if !succ[a].contains(&b) {
                succ[a].push(b);
                pred[b].push(a);
            }
        }
        let cfg = Cfg {
            function: function.into(),
            names: blocks,
            succ,
            pred,
            entry,
        };
        let reach = cfg.reachable_from(&[cfg.entry], |_| true);
        if let Some(b) = (0..cfg.len()).find(|&b| !reach[b]) {
            return Err(Error::UnreachableBlock(cfg.names[b].clone()));
        }
        Ok(cfg)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn name(&self, b: usize) -> &str {
        &self.names[b]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn successors(&self, b: usize) -> &[usize] {
        &self.succ[b]
    }

    pub fn predecessors(&self, b: usize) -> &[usize] {
        &self.pred[b]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&b| (a, b)))
    }

    /// Blocks reachable from `starts` by walking only through blocks that
    /// satisfy `allowed`. The starts themselves are always included.
    pub fn reachable_from(&self, starts: &[usize], allowed: impl Fn(usize) -> bool) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = starts.to_vec();
        while let Some(b) = stack.pop() {
            if std::mem::replace(&mut seen[b], true) {
                continue;
            }
            stack.extend(self.succ[b].iter().copied().filter(|&s| !seen[s] && allowed(s)));
        }
        seen
    }

    fn edge_names(&self) -> Vec<(String, String)> {
        self.edges()
            .map(|(a, b)| (self.names[a].clone(), self.names[b].clone()))
            .collect()
    }

    /// Returns a copy with `new_block` inserted in front of `header`: every
    /// edge from a block in `from` to `header` is redirected through it.
    pub fn with_preheader(&self, header: usize, from: &[usize], new_block: &str) -> Result<Cfg, Error> {
        let mut blocks = self.names.clone();
        blocks.push(new_block.to_string());
        let h = &self.names[header];
        let mut edges: Vec<(String, String)> = self
            .edges()
            .map(|(a, b)| {
                let target = if b == header && from.contains(&a) {
                    new_block.to_string()
                } else {
                    self.names[b].clone()
                };
                (self.names[a].clone(), target)
            })
            .collect();
        edges.push((new_block.to_string(), h.clone()));
        Cfg::new(self.function.clone(), blocks, &edges, &self.names[self.entry])
    }

    pub fn from_json(text: &str) -> Result<Cfg, Error> {
        let doc: CfgDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let entry = match doc.entry {
            Some(e) => e,
            None => doc
                .blocks
                .first()
                .cloned()
                .ok_or_else(|| Error::Parse("graph has no blocks".into()))?,
        };
        Cfg::new(doc.function, doc.blocks, &doc.edges, &entry)
    }

    /// JSON document, listing `checkpoints` as annotated blocks.
    pub fn to_json(&self, checkpoints: &[String]) -> String {
        let doc = CfgDoc {
            function: self.function.clone(),
            entry: Some(self.names[self.entry].clone()),
            blocks: self.names.clone(),
            edges: self.edge_names(),
            checkpoints: checkpoints.to_vec(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }

    /// Parses the `digraph` subset of DOT: node statements, edge chains and
    /// attribute lists. The entry is the node with `entry=true`, or else the
    /// first node mentioned.
    pub fn from_dot(text: &str) -> Result<Cfg, Error> {
        let tokens = tokenize(text)?;
        let mut p = DotParser { tokens, pos: 0 };
        p.parse()
    }

    pub fn to_dot(&self, checkpoints: &[String]) -> String {
        let mut out = format!("digraph {} {{\n", quote(&self.function));
        for (i, n) in self.names.iter().enumerate() {
            let mut attrs = Vec::new();
            if i == self.entry {
                attrs.push("entry=true".to_string());
            }
            if checkpoints.contains(n) {
                attrs.push("checkpoint=true".to_string());
                attrs.push("shape=box".to_string());
            }
            if attrs.is_empty() {
                let _ = writeln!(out, "  {};", quote(n));
            } else {
                let _ = writeln!(out, "  {} [{}];", quote(n), attrs.join(", "));
            }
        }
        for (a, b) in self.edges() {
            let _ = writeln!(out, "  {} -> {};", quote(&self.names[a]), quote(&self.names[b]));
        }
        out.push_str("}\n");
        out
    }
}

fn quote(id: &str) -> String {
    if !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        id.to_string()
    } else {
        format!("\"{}\"", id.replace('"', "\\\""))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Id(String),
    Sym(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<Tok>, Error> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                chars.by_ref().find(|&c| c == '\n');
            }
            '/' => {
                chars.next();
                match chars.next() {
                    Some('/') => {
                        chars.by_ref().find(|&c| c == '\n');
                    }
                    Some('*') => {
                        let mut prev = ' ';
                        for c in chars.by_ref() {
                            if prev == '*' && c == '/' {
                                break;
                            }
                            prev = c;
                        }
                    }
                    _ => return Err(Error::Parse("stray `/`".into())),
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('\\') => s.extend(chars.next()),
                        Some('"') => break,
                        Some(c) => s.push(c),
                        None => return Err(Error::Parse("unterminated string".into())),
                    }
                }
                out.push(Tok::Id(s));
            }
            '-' => {
                chars.next();
                if chars.next() != Some('>') {
                    return Err(Error::Parse("expected `->`".into()));
                }
                out.push(Tok::Sym("->"));
            }
            '{' | '}' | '[' | ']' | ';' | ',' | '=' => {
                chars.next();
                out.push(Tok::Sym(match c {
                    '{' => "{",
                    '}' => "}",
                    '[' => "[",
                    ']' => "]",
                    ';' => ";",
                    ',' => ",",
                    _ => "=",
                }));
            }
            c if c.is_alphanumeric() || c == '_' || c == '.' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '.' {
                        s.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Id(s));
            }
            other => return Err(Error::Parse(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct DotParser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl DotParser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, sym: &str) -> Result<(), Error> {
        match self.next() {
            Some(Tok::Sym(s)) if s == sym => Ok(()),
            other => Err(Error::Parse(format!("expected `{sym}`, found {other:?}"))),
        }
    }

    fn id(&mut self) -> Result<String, Error> {
        match self.next() {
            Some(Tok::Id(s)) => Ok(s),
            other => Err(Error::Parse(format!("expected identifier, found {other:?}"))),
        }
    }

    fn attrs(&mut self) -> Result<Vec<(String, String)>, Error> {
        let mut out = Vec::new();
        if self.peek() != Some(&Tok::Sym("[")) {
            return Ok(out);
        }
        self.next();
        loop {
            match self.peek() {
                Some(Tok::Sym("]")) => {
                    self.next();
                    return Ok(out);
                }
                Some(Tok::Sym(",")) | Some(Tok::Sym(";")) => {
                    self.next();
                }
                _ => {
                    let k = self.id()?;
                    self.expect("=")?;
                    out.push((k, self.id()?));
                }
            }
        }
    }

    fn parse(&mut self) -> Result<Cfg, Error> {
        if self.id()? != "digraph" {
            return Err(Error::Parse("expected `digraph`".into()));
        }
        let function = match self.peek() {
            Some(Tok::Id(_)) => self.id()?,
            _ => default_function(),
        };
        self.expect("{")?;
        let mut blocks: Vec<String> = Vec::new();
        let mut edges = Vec::new();
        let mut entry = None;
        let declare = |b: &str, blocks: &mut Vec<String>| {
            if !blocks.iter().any(|x| x == b) {
                blocks.push(b.to_string());
            }
        };
        loop {
            match self.peek() {
                Some(Tok::Sym("}")) => {
                    self.next();
                    break;
                }
                Some(Tok::Sym(";")) => {
                    self.next();
                }
                None => return Err(Error::Parse("missing `}`".into())),
                _ => {
                    let first = self.id()?;
                    if matches!(first.as_str(), "graph" | "node" | "edge") && self.peek() == Some(&Tok::Sym("[")) {
                        self.attrs()?;
                        continue;
                    }
                    let mut chain = vec![first];
                    while self.peek() == Some(&Tok::Sym("->")) {
                        self.next();
                        chain.push(self.id()?);
                    }
                    let attrs = self.attrs()?;
                    for b in &chain {
                        declare(b, &mut blocks);
                    }
                    if chain.len() == 1 && attrs.iter().any(|(k, v)| k == "entry" && v == "true") {
                        entry = Some(chain[0].clone());
                    }
                    edges.extend(chain.windows(2).map(|w| (w[0].clone(), w[1].clone())));
                }
            }
        }
        let entry = entry
            .or_else(|| blocks.first().cloned())
            .ok_or_else(|| Error::Parse("graph has no blocks".into()))?;
        Cfg::new(function, blocks, &edges, &entry)
    }
}

/// Loads a graph, choosing the format from the file extension.
pub fn parse_cfg(text: &str, dot: bool) -> Result<Cfg, Error> {
    if dot {
        Cfg::from_dot(text)
    } else {
        Cfg::from_json(text)
    }
}
