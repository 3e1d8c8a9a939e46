//! Plain-text instance files (`.lpu`).
//!
//! ```text
//! # comment
//! [instance]
//! name = wendell_1
//!
//! [objective]
//! min -12 x1 - 18 x2 - 18 x3 - 40 x4
//!
//! [rows]
//! r1: 4 x1 + 9 x2 + 7 x3 + 10 x4 + x5 = 6000
//! r2: x1 + x2 + 3 x3 + 40 x4 + x6 = 4000
//!
//! [bounds]
//! x7 free
//! 1000 <= x8 <= 1500
//!
//! [uncertainty]
//! box c[x1] in [-4, 2]
//! simplex c[x1] in [-4, 0], c[x2] in [-80/3, 0]
//! ball 1 radius 0.03 relative over b
//! ball 2 radius 1 dim 3
//! map b[r1] = 0.2 0.5 0.1
//!
//! [options]
//! samples = 1000
//! seed = 7
//!
//! [expect]
//! q_minus = -24000 +- 2.4
//! gap_plus <= 0.5
//! ```
//!
//! Variables are declared by first use and default to `>= 0`. Blocks in
//! `[uncertainty]` are intersected; `box` lines merge into one block; `map`
//! lines attach to the preceding `ball ... dim k` and list its image rows.

use crate::lp::{standardize_with, BoundStyle, GeneralFormLp, GeneralRow, GeneralVar, LinearProgram, RowSense};
use crate::uncertainty::{NormKind, Side, UncertaintySet};
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Right-hand side of a general row.
    Row(usize),
    /// Objective coefficient of a general variable.
    Var(usize),
}

impl Target {
    fn side(self) -> Side {
        match self {
            Target::Row(_) => Side::B,
            Target::Var(_) => Side::C,
        }
    }

    fn index(self) -> usize {
        match self {
            Target::Row(i) | Target::Var(i) => i,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Box(Vec<(Target, f64, f64)>),
    Simplex(Vec<(Target, f64, f64)>),
    Ball {
        kind: NormKind,
        radius: f64,
        targets: Vec<Target>,
        /// `targets x dim` image of a ball in a factor space.
        factor: Option<DMatrix<f64>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Check {
    Near { value: f64, tol: f64 },
    AtMost(f64),
    AtLeast(f64),
}

impl Check {
    pub fn holds(&self, actual: f64) -> bool {
        match *self {
            Check::Near { value, tol } => (actual - value).abs() <= tol,
            Check::AtMost(v) => actual <= v,
            Check::AtLeast(v) => actual >= v,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Check::Near { value, tol } => write!(f, "{value} +- {tol}"),
            Check::AtMost(v) => write!(f, "<= {v}"),
            Check::AtLeast(v) => write!(f, ">= {v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    pub key: String,
    pub check: Check,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceOptions {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub bound_style: BoundStyle,
    pub oracle: bool,
    pub assumptions: AssumptionPolicy,
}

/// How a failed boundedness clause is treated. Empty `P(0)` or `D(0)` is
/// always an error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AssumptionPolicy {
    #[default]
    Strict,
    /// Log the violation and continue.
    Warn,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            samples: None,
            seed: None,
            bound_style: BoundStyle::Shift,
            oracle: false,
            assumptions: AssumptionPolicy::Strict,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub note: Option<String>,
    pub general: GeneralFormLp,
    pub blocks: Vec<Block>,
    pub options: InstanceOptions,
    pub expect: Vec<Expectation>,
}

/// Keys accepted in `[expect]`.
pub const EXPECT_KEYS: &[&str] = &[
    "nominal",
    "q_minus",
    "q_plus",
    "r_minus",
    "r_plus",
    "v_minus",
    "v_plus",
    "best_minus",
    "best_plus",
    "gap_minus",
    "gap_plus",
    "oracle_minus",
    "oracle_plus",
];

impl Instance {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        parse(&text, &path.display().to_string())
    }

    /// Standard-form LP and the uncertainty set mapped onto it.
    pub fn model(&self) -> Result<(LinearProgram, UncertaintySet)> {
        self.model_with(self.options.bound_style)
    }

    pub fn model_with(&self, style: BoundStyle) -> Result<(LinearProgram, UncertaintySet)> {
        let lp = standardize_with(&self.general, style)?;
        let (mg, ng) = (self.general.rows.len(), self.general.vars.len());
        let mut pb = DMatrix::zeros(lp.m(), mg);
        for r in 0..mg {
            pb[(lp.row_of(r), r)] = 1.0;
        }
        let mut pc = DMatrix::zeros(lp.n(), ng);
        for v in 0..ng {
            for (col, sign) in lp.columns_of(v) {
                pc[(col, v)] = sign;
            }
        }
        let mut set: Option<UncertaintySet> = None;
        for block in &self.blocks {
            let part = block_set(block, mg, ng, &pb, &pc)?;
            set = Some(match set {
                None => part,
                Some(s) => s.intersect(&part)?,
            });
        }
        let set = set.unwrap_or_else(|| UncertaintySet::singleton(lp.m(), lp.n()));
        Ok((lp, set))
    }
}

fn block_set(block: &Block, mg: usize, ng: usize, pb: &DMatrix<f64>, pc: &DMatrix<f64>) -> Result<UncertaintySet> {
    let split = |entries: &[(Target, f64, f64)], side: Side| -> Vec<(usize, f64, f64)> {
        entries.iter().filter(|e| e.0.side() == side).map(|&(t, lo, hi)| (t.index(), lo, hi)).collect()
    };
    let targets: Vec<Target> = match block {
        Block::Box(_) => Vec::new(),
        Block::Simplex(entries) => entries.iter().map(|e| e.0).collect(),
        Block::Ball { targets, .. } => targets.clone(),
    };
    if targets.is_empty() && !matches!(block, Block::Box(_)) {
        return Err(Error::InvalidUncertainty("simplex or ball block without targets".into()));
    }
    if targets.iter().any(|t| t.side() != targets[0].side()) {
        return Err(Error::InvalidUncertainty("simplex and ball blocks must cover only rhs or only costs".into()));
    }
    let local = match block {
        Block::Box(entries) => UncertaintySet::box_set(mg, ng, &split(entries, Side::B), &split(entries, Side::C))?,
        Block::Simplex(entries) => {
            let side = entries[0].0.side();
            UncertaintySet::simplex_100pct(mg, ng, side, &split(entries, side))?
        }
        Block::Ball { kind, radius, targets, factor: None } => {
            let side = targets[0].side();
            let coords: Vec<usize> = targets.iter().map(|t| t.index()).collect();
            UncertaintySet::norm_ball(mg, ng, *kind, *radius, side, Some(&coords))?
        }
        Block::Ball { kind, radius, targets, factor: Some(f) } => {
            let side = targets[0].side();
            let dim = f.ncols();
            let full_rows = if side == Side::B { mg } else { ng };
            let mut image = DMatrix::zeros(full_rows, dim);
            for (k, t) in targets.iter().enumerate() {
                image.row_mut(t.index()).copy_from(&f.row(k));
            }
            return match side {
                Side::B => UncertaintySet::norm_ball(dim, ng, *kind, *radius, side, None)?
                    .affine_image(Some(&(pb * image)), Some(pc)),
                Side::C => UncertaintySet::norm_ball(mg, dim, *kind, *radius, side, None)?
                    .affine_image(Some(pb), Some(&(pc * image))),
            };
        }
    };
    local.affine_image(Some(pb), Some(pc))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Instance,
    Objective,
    Rows,
    Bounds,
    Uncertainty,
    Options,
    Expect,
}

struct Parser<'a> {
    source: &'a str,
    line: usize,
    vars: Vec<GeneralVar>,
    var_index: HashMap<String, usize>,
    objective: HashMap<usize, f64>,
    constant: f64,
    rows: Vec<GeneralRow>,
    row_index: HashMap<String, usize>,
    has_objective: bool,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.source.to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn var(&mut self, name: &str) -> Result<usize> {
        if let Some(&i) = self.var_index.get(name) {
            return Ok(i);
        }
        if !is_ident(name) {
            return Err(self.err(format!("`{name}` is not a valid variable name")));
        }
        self.vars.push(GeneralVar {
            name: name.to_string(),
            lower: 0.0,
            upper: f64::INFINITY,
        });
        self.var_index.insert(name.to_string(), self.vars.len() - 1);
        Ok(self.vars.len() - 1)
    }

    /// `[+-] [coef] name ...` plus bare numbers as constants.
    fn expression(&mut self, text: &str) -> Result<(Vec<(usize, f64)>, f64)> {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        let mut constant = 0.0;
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        let mut after_term = false;
        for tok in text.split_whitespace() {
            if tok == "+" || tok == "-" {
                if let Some(c) = coef.take() {
                    constant += sign * c;
                    sign = 1.0;
                } else if after_term {
                    sign = 1.0;
                }
                if tok == "-" {
                    sign = -sign;
                }
                after_term = false;
                continue;
            }
            if after_term {
                return Err(self.err(format!("missing `+` or `-` before `{tok}`")));
            }
            if let Some(v) = parse_number(tok) {
                if coef.replace(v).is_some() {
                    return Err(self.err(format!("two numbers in a row at `{tok}`")));
                }
                continue;
            }
            let (neg, name) = match tok.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, tok),
            };
            let j = self.var(name)?;
            terms.push((j, sign * neg * coef.take().unwrap_or(1.0)));
            sign = 1.0;
            after_term = true;
        }
        if let Some(c) = coef {
            constant += sign * c;
        }
        Ok((terms, constant))
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_alphanumeric() || "_.()'".contains(c))
}

/// Decimal, `a/b`, or `inf`.
pub fn parse_number(tok: &str) -> Option<f64> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok.strip_prefix('+').unwrap_or(tok)),
    };
    let v = if body == "inf" {
        f64::INFINITY
    } else if let Some((a, b)) = body.split_once('/') {
        let (a, b) = (a.parse::<f64>().ok()?, b.parse::<f64>().ok()?);
        if b == 0.0 {
            return None;
        }
        a / b
    } else {
        if !body.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
            return None;
        }
        body.parse::<f64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_key_value(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Parses an instance file; `source` names it in error messages.
pub fn parse(text: &str, source: &str) -> Result<Instance> {
    let mut p = Parser {
        source,
        line: 0,
        vars: Vec::new(),
        var_index: HashMap::new(),
        objective: HashMap::new(),
        constant: 0.0,
        rows: Vec::new(),
        row_index: HashMap::new(),
        has_objective: false,
    };
    let mut name = None;
    let mut note = None;
    let mut options = InstanceOptions::default();
    let mut expect = Vec::new();
    let mut section: Option<Section> = None;
    let mut seen_rows = false;
    // Uncertainty lines are resolved after all rows and variables are known.
    let mut deferred: Vec<(usize, String)> = Vec::new();
    let mut bounds: Vec<(usize, String)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(match head.trim() {
                "instance" => Section::Instance,
                "objective" => Section::Objective,
                "rows" => {
                    seen_rows = true;
                    Section::Rows
                }
                "bounds" => Section::Bounds,
                "uncertainty" => Section::Uncertainty,
                "options" => Section::Options,
                "expect" => Section::Expect,
                other => return Err(p.err(format!("unknown section [{other}]"))),
            });
            continue;
        }
        let Some(sec) = section else {
            return Err(p.err("content before the first section header"));
        };
        match sec {
            Section::Instance => {
                let (k, v) = parse_key_value(line).ok_or_else(|| p.err("expected `key = value`"))?;
                match k {
                    "name" => name = Some(v.to_string()),
                    "note" => note = Some(v.to_string()),
                    _ => return Err(p.err(format!("unknown instance key `{k}`"))),
                }
            }
            Section::Objective => {
                if p.has_objective {
                    return Err(p.err("objective given twice"));
                }
                let body = line.strip_prefix("min").ok_or_else(|| p.err("objective must start with `min`"))?;
                let (terms, constant) = p.expression(body)?;
                for (j, a) in terms {
                    *p.objective.entry(j).or_insert(0.0) += a;
                }
                p.constant = constant;
                p.has_objective = true;
            }
            Section::Rows => {
                let (label, body) = line.split_once(':').ok_or_else(|| p.err("row must read `name: expr op rhs`"))?;
                let label = label.trim();
                if !is_ident(label) {
                    return Err(p.err(format!("`{label}` is not a valid row name")));
                }
                if p.row_index.contains_key(label) {
                    return Err(p.err(format!("row `{label}` defined twice")));
                }
                let (op, pos) = ["<=", ">=", "="]
                    .iter()
                    .find_map(|op| body.find(op).map(|pos| (*op, pos)))
                    .ok_or_else(|| p.err("row needs one of <=, =, >="))?;
                let sense = match op {
                    "<=" => RowSense::Le,
                    ">=" => RowSense::Ge,
                    _ => RowSense::Eq,
                };
                let rhs_text = body[pos + op.len()..].trim();
                let rhs = parse_number(rhs_text).ok_or_else(|| p.err(format!("bad right-hand side `{rhs_text}`")))?;
                if !rhs.is_finite() {
                    return Err(p.err("right-hand side must be finite"));
                }
                let (terms, constant) = p.expression(&body[..pos])?;
                let mut coefs: Vec<(usize, f64)> = Vec::new();
                for (j, a) in terms {
                    match coefs.iter_mut().find(|(k, _)| *k == j) {
                        Some(e) => e.1 += a,
                        None => coefs.push((j, a)),
                    }
                }
                p.rows.push(GeneralRow {
                    name: label.to_string(),
                    coefs,
                    sense,
                    rhs: rhs - constant,
                });
                p.row_index.insert(label.to_string(), p.rows.len() - 1);
            }
            Section::Bounds => bounds.push((p.line, line.to_string())),
            Section::Uncertainty => deferred.push((p.line, line.to_string())),
            Section::Options => {
                let (k, v) = parse_key_value(line).ok_or_else(|| p.err("expected `key = value`"))?;
                match k {
                    "samples" => options.samples = Some(v.parse().map_err(|_| p.err(format!("bad sample count `{v}`")))?),
                    "seed" => options.seed = Some(v.parse().map_err(|_| p.err(format!("bad seed `{v}`")))?),
                    "oracle" => options.oracle = v.parse().map_err(|_| p.err(format!("bad flag `{v}`")))?,
                    "bound_style" => {
                        options.bound_style = match v {
                            "shift" => BoundStyle::Shift,
                            "rows" => BoundStyle::Rows,
                            _ => return Err(p.err(format!("bound_style must be shift or rows, got `{v}`"))),
                        }
                    }
                    "assumptions" => {
                        options.assumptions = match v {
                            "strict" => AssumptionPolicy::Strict,
                            "warn" => AssumptionPolicy::Warn,
                            _ => return Err(p.err(format!("assumptions must be strict or warn, got `{v}`"))),
                        }
                    }
                    _ => return Err(p.err(format!("unknown option `{k}`"))),
                }
            }
            Section::Expect => expect.push(parse_expect(&p, line)?),
        }
    }
    p.line = text.lines().count();
    if !p.has_objective {
        return Err(p.err("missing [objective] section"));
    }
    if !seen_rows || p.rows.is_empty() {
        return Err(p.err("missing [rows] section"));
    }
    for (line, text) in &bounds {
        p.line = *line;
        parse_bound(&mut p, text)?;
    }
    let mut blocks = Vec::new();
    let mut boxes = Vec::new();
    for (line, text) in &deferred {
        p.line = *line;
        parse_block(&p, text, &mut blocks, &mut boxes)?;
    }
    if let Some(Block::Ball { factor: Some(f), targets, .. }) = blocks.last() {
        if targets.is_empty() || f.nrows() == 0 {
            return Err(p.err("factor ball without `map` lines"));
        }
    }
    if !boxes.is_empty() {
        blocks.insert(0, Block::Box(boxes));
    }
    let objective = (0..p.vars.len()).map(|j| p.objective.get(&j).copied().unwrap_or(0.0)).collect();
    let general = GeneralFormLp {
        name: name.clone().unwrap_or_else(|| source.to_string()),
        vars: p.vars,
        rows: p.rows,
        objective,
        constant: p.constant,
    };
    Ok(Instance {
        name: general.name.clone(),
        note,
        general,
        blocks,
        options,
        expect,
    })
}

fn parse_expect(p: &Parser, line: &str) -> Result<Expectation> {
    let (op, pos) = ["<=", ">=", "="]
        .iter()
        .find_map(|op| line.find(op).map(|pos| (*op, pos)))
        .ok_or_else(|| p.err("expectation needs =, <= or >="))?;
    let key = line[..pos].trim();
    if !EXPECT_KEYS.contains(&key) {
        return Err(p.err(format!("unknown expectation key `{key}`")));
    }
    let rest = line[pos + op.len()..].trim();
    let num = |t: &str| parse_number(t.trim()).ok_or_else(|| p.err(format!("bad number `{}`", t.trim())));
    let check = match op {
        "<=" => Check::AtMost(num(rest)?),
        ">=" => Check::AtLeast(num(rest)?),
        _ => match rest.split_once("+-") {
            Some((v, t)) => Check::Near { value: num(v)?, tol: num(t)? },
            None => Check::Near { value: num(rest)?, tol: 0.0 },
        },
    };
    Ok(Expectation { key: key.to_string(), check })
}

fn parse_bound(p: &mut Parser, text: &str) -> Result<()> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let lookup = |p: &Parser, name: &str| {
        p.var_index.get(name).copied().ok_or_else(|| p.err(format!("bound on unknown variable `{name}`")))
    };
    let num = |p: &Parser, t: &str| parse_number(t).ok_or_else(|| p.err(format!("bad bound `{t}`")));
    match toks.as_slice() {
        [name, "free"] => {
            let j = lookup(p, name)?;
            p.vars[j].lower = f64::NEG_INFINITY;
            p.vars[j].upper = f64::INFINITY;
        }
        [name, "<=", v] => {
            let j = lookup(p, name)?;
            p.vars[j].upper = num(p, v)?;
        }
        [name, ">=", v] => {
            let j = lookup(p, name)?;
            p.vars[j].lower = num(p, v)?;
        }
        [name, "=", v] => {
            let j = lookup(p, name)?;
            let v = num(p, v)?;
            p.vars[j].lower = v;
            p.vars[j].upper = v;
        }
        [lo, "<=", name, "<=", hi] => {
            let j = lookup(p, name)?;
            p.vars[j].lower = num(p, lo)?;
            p.vars[j].upper = num(p, hi)?;
        }
        _ => return Err(p.err(format!("cannot read bound `{text}`"))),
    }
    Ok(())
}

fn parse_target(p: &Parser, tok: &str) -> Result<Target> {
    let tok = tok.trim();
    let inner = |prefix: &str| tok.strip_prefix(prefix).and_then(|r| r.strip_suffix(']'));
    if let Some(row) = inner("b[") {
        return p.row_index.get(row).map(|&i| Target::Row(i)).ok_or_else(|| p.err(format!("unknown row `{row}`")));
    }
    if let Some(var) = inner("c[") {
        return p.var_index.get(var).map(|&i| Target::Var(i)).ok_or_else(|| p.err(format!("unknown variable `{var}`")));
    }
    Err(p.err(format!("target must read b[row] or c[var], got `{tok}`")))
}

/// `target in [lo, hi]`
fn parse_interval(p: &Parser, text: &str) -> Result<(Target, f64, f64)> {
    let (t, range) = text.split_once(" in ").ok_or_else(|| p.err(format!("expected `target in [lo, hi]`, got `{}`", text.trim())))?;
    let target = parse_target(p, t)?;
    let range = range.trim();
    let body = range.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(|| p.err("interval must be written [lo, hi]"))?;
    let (lo, hi) = body.split_once(',').ok_or_else(|| p.err("interval must be written [lo, hi]"))?;
    let lo = parse_number(lo.trim()).ok_or_else(|| p.err(format!("bad number `{}`", lo.trim())))?;
    let hi = parse_number(hi.trim()).ok_or_else(|| p.err(format!("bad number `{}`", hi.trim())))?;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(p.err(format!("interval [{lo}, {hi}] is not finite and ordered")));
    }
    Ok((target, lo, hi))
}

fn one_side(p: &Parser, targets: &[Target]) -> Result<()> {
    if targets.windows(2).any(|w| w[0].side() != w[1].side()) {
        return Err(p.err("a simplex or ball block must target only b or only c"));
    }
    Ok(())
}

fn parse_block(p: &Parser, text: &str, blocks: &mut Vec<Block>, boxes: &mut Vec<(Target, f64, f64)>) -> Result<()> {
    let (head, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    match head {
        "box" => boxes.push(parse_interval(p, rest)?),
        "simplex" => {
            let mut entries = Vec::new();
            // Split on the commas between intervals, not inside them.
            let mut depth = 0;
            let mut start = 0;
            for (i, ch) in rest.char_indices() {
                match ch {
                    '[' => depth += 1,
                    ']' => depth -= 1,
                    ',' if depth == 0 => {
                        entries.push(parse_interval(p, &rest[start..i])?);
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            entries.push(parse_interval(p, &rest[start..])?);
            one_side(p, &entries.iter().map(|e| e.0).collect::<Vec<_>>())?;
            for &(t, lo, hi) in &entries {
                if (lo == 0.0) == (hi == 0.0) {
                    return Err(p.err(format!(
                        "simplex coordinate {} needs exactly one zero endpoint, got [{lo}, {hi}]",
                        target_name(p, t)
                    )));
                }
            }
            blocks.push(Block::Simplex(entries));
        }
        "ball" => blocks.push(parse_ball(p, rest)?),
        "map" => {
            let Some(Block::Ball { factor: Some(f), targets, .. }) = blocks.last_mut() else {
                return Err(p.err("`map` must follow `ball ... dim k`"));
            };
            let (t, values) = rest.split_once('=').ok_or_else(|| p.err("expected `map target = v1 v2 ...`"))?;
            let target = parse_target(p, t)?;
            let values: Vec<f64> = values
                .split_whitespace()
                .map(|v| parse_number(v).filter(|x| x.is_finite()).ok_or_else(|| p.err(format!("bad number `{v}`"))))
                .collect::<Result<_>>()?;
            if values.len() != f.ncols() {
                return Err(p.err(format!("map row has {} entries, ball has dim {}", values.len(), f.ncols())));
            }
            if targets.contains(&target) {
                return Err(p.err(format!("{} mapped twice", target_name(p, target))));
            }
            targets.push(target);
            one_side(p, targets)?;
            let mut grown = DMatrix::zeros(f.nrows() + 1, f.ncols());
            grown.view_mut((0, 0), (f.nrows(), f.ncols())).copy_from(f);
            grown.row_mut(f.nrows()).copy_from_slice(&values);
            *f = grown;
        }
        _ => return Err(p.err(format!("unknown uncertainty block `{head}`"))),
    }
    Ok(())
}

fn target_name(p: &Parser, t: Target) -> String {
    match t {
        Target::Row(i) => format!("b[{}]", p.rows[i].name),
        Target::Var(j) => format!("c[{}]", p.vars[j].name),
    }
}

/// `ball <1|2> radius <r> [relative] (over <targets>|dim <k>)`
fn parse_ball(p: &Parser, rest: &str) -> Result<Block> {
    let toks: Vec<&str> = rest.split_whitespace().collect();
    let kind = match toks.first() {
        Some(&"1") => NormKind::One,
        Some(&"2") => NormKind::Two,
        other => return Err(p.err(format!("ball norm must be 1 or 2, got {:?}", other.unwrap_or(&"")))),
    };
    if toks.get(1) != Some(&"radius") {
        return Err(p.err("expected `radius` after the ball norm"));
    }
    let radius = toks
        .get(2)
        .and_then(|t| parse_number(t))
        .ok_or_else(|| p.err("bad ball radius"))?;
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(p.err(format!("ball radius must be finite and nonnegative, got {radius}")));
    }
    let mut i = 3;
    let relative = toks.get(i) == Some(&"relative");
    if relative {
        i += 1;
    }
    match toks.get(i) {
        Some(&"dim") => {
            if relative {
                return Err(p.err("relative radius is not available for factor balls"));
            }
            let k: usize = toks
                .get(i + 1)
                .and_then(|t| t.parse().ok())
                .filter(|&k| k > 0)
                .ok_or_else(|| p.err("bad ball dimension"))?;
            Ok(Block::Ball { kind, radius, targets: Vec::new(), factor: Some(DMatrix::zeros(0, k)) })
        }
        Some(&"over") => {
            let targets: Vec<Target> = match &toks[i + 1..] {
                ["b"] => (0..p.rows.len()).map(Target::Row).collect(),
                ["c"] => (0..p.vars.len()).filter(|&j| p.objective.contains_key(&j)).map(Target::Var).collect(),
                [] => return Err(p.err("ball needs targets after `over`")),
                list => list.iter().map(|t| parse_target(p, t)).collect::<Result<_>>()?,
            };
            if targets.is_empty() {
                return Err(p.err("ball has no targets"));
            }
            one_side(p, &targets)?;
            let radius = if relative {
                let nominal: Vec<f64> = targets
                    .iter()
                    .map(|t| match *t {
                        Target::Row(r) => p.rows[r].rhs,
                        Target::Var(j) => p.objective.get(&j).copied().unwrap_or(0.0),
                    })
                    .collect();
                let norm = match kind {
                    NormKind::One => nominal.iter().map(|v| v.abs()).sum::<f64>(),
                    NormKind::Two => nominal.iter().map(|v| v * v).sum::<f64>().sqrt(),
                };
                radius * norm
            } else {
                radius
            };
            Ok(Block::Ball { kind, radius, targets, factor: None })
        }
        _ => Err(p.err("ball needs `over <targets>` or `dim <k>`")),
    }
}
