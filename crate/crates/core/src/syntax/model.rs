//! `.hpm` model files: a named hybrid program together with its constants,
//! state variables, initial region, assumptions and safety formula.
//!
//! ```text
//! model: toy
//! constants:
//!   c = 2
//!   a in (0, 1]
//! variables:
//!   x in [0, c]          # initial region, also the domain of `x:=*`
//!   y = 0                # initial value
//!   u = 0 in [0, a)      # initial value plus the domain of `u:=*`
//! assume:
//!   a > 0
//! program:
//!   { u:=*; {x'=u - y & x >= 0} }*
//! safety:
//!   x >= 0
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use super::ast::{Formula, Program, Term};
use super::error::{ParseError, Pos};
use super::parser::{parse_decl_at, parse_formula_at, parse_program_at};
use super::pretty::{formula_to_string, program_to_string, term_to_string};

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: Term,
    pub lo_closed: bool,
    pub hi: Term,
    pub hi_closed: bool,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            term_to_string(&self.lo),
            term_to_string(&self.hi),
            if self.hi_closed { ']' } else { ')' },
        )
    }
}

/// A parsed declaration line.
#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub name: String,
    pub pos: Pos,
    pub value: Option<Term>,
    pub range: Option<Interval>,
}

impl fmt::Display for Decl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if let Some(v) = &self.value {
            write!(f, " = {}", term_to_string(v))?;
        }
        if let Some(r) = &self.range {
            write!(f, " in {r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub name: String,
    pub constants: Vec<Decl>,
    pub variables: Vec<Decl>,
    pub assume: Formula,
    pub program: Program,
    pub safety: Formula,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("in section `{section}`: {source}")]
    Parse {
        section: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("missing required section `{0}:`")]
    MissingSection(&'static str),
    #[error("line {line}: section `{section}:` appears twice")]
    DuplicateSection { section: &'static str, line: usize },
    #[error("line {line}: text outside of any section")]
    StrayText { line: usize },
    #[error("line {line}: `model:` needs a name")]
    MissingName { line: usize },
    #[error("{section}: variable `{name}` is not declared")]
    Undeclared { name: String, section: &'static str },
    #[error("{pos}: `{name}` is declared twice")]
    DuplicateName { name: String, pos: Pos },
    #[error("{pos}: `{name}` may only refer to earlier constants, found `{refers}`")]
    BadReference {
        name: String,
        refers: String,
        pos: Pos,
    },
    #[error("{pos}: bound of `{name}` is unsatisfiable: {detail}")]
    Unsatisfiable {
        name: String,
        detail: String,
        pos: Pos,
    },
    #[error("{pos}: `{name}` needs a value or a range")]
    Unconstrained { name: String, pos: Pos },
    #[error("program assigns to constant `{0}`")]
    AssignToConstant(String),
    #[error("`{0}:=*` needs a declared range for `{0}`")]
    RandomWithoutRange(String),
}

impl ModelError {
    /// Source position when the error has one.
    pub fn pos(&self) -> Option<Pos> {
        match self {
            ModelError::Parse { source, .. } => Some(source.pos()),
            ModelError::DuplicateSection { line, .. }
            | ModelError::StrayText { line }
            | ModelError::MissingName { line } => Some(Pos {
                line: *line,
                col: 1,
            }),
            ModelError::DuplicateName { pos, .. }
            | ModelError::BadReference { pos, .. }
            | ModelError::Unsatisfiable { pos, .. }
            | ModelError::Unconstrained { pos, .. } => Some(*pos),
            _ => None,
        }
    }
}

const SECTIONS: [&str; 6] = [
    "model",
    "constants",
    "variables",
    "assume",
    "program",
    "safety",
];

struct Section {
    name: &'static str,
    header_line: usize,
    /// Section body with the header blanked out, so columns stay aligned.
    text: String,
}

/// Recognizes `keyword:` at the start of a line. `:=` does not count.
fn header(line: &str) -> Option<(&'static str, usize)> {
    let trimmed = line.trim_start();
    let indent = line.len() - trimmed.len();
    SECTIONS.iter().find_map(|&name| {
        let rest = trimmed.strip_prefix(name)?.strip_prefix(':')?;
        if rest.starts_with('=') {
            None
        } else {
            Some((name, indent + name.len() + 1))
        }
    })
}

fn split_sections(src: &str) -> Result<Vec<Section>, ModelError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let lineno = i + 1;
        if let Some((name, body_col)) = header(line) {
            if sections.iter().any(|s| s.name == name) {
                return Err(ModelError::DuplicateSection {
                    section: name,
                    line: lineno,
                });
            }
            let mut text = " ".repeat(body_col);
            text.push_str(&line[body_col..]);
            text.push('\n');
            sections.push(Section {
                name,
                header_line: lineno,
                text,
            });
        } else if let Some(cur) = sections.last_mut() {
            cur.text.push_str(line);
            cur.text.push('\n');
        } else {
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                return Err(ModelError::StrayText { line: lineno });
            }
        }
    }
    Ok(sections)
}

fn parse_decls(section: &Section) -> Result<Vec<Decl>, ModelError> {
    let mut out = Vec::new();
    for (i, line) in section.text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let decl =
            parse_decl_at(line, section.header_line + i).map_err(|source| ModelError::Parse {
                section: section.name,
                source,
            })?;
        out.push(decl);
    }
    Ok(out)
}

/// Parses and validates a model file.
pub fn parse_model(src: &str) -> Result<ModelFile, ModelError> {
    let sections = split_sections(src)?;
    let find = |name: &'static str| sections.iter().find(|s| s.name == name);
    let require = |name: &'static str| find(name).ok_or(ModelError::MissingSection(name));

    let name = match find("model") {
        Some(s) => {
            let text = s.text.split('#').next().unwrap_or("").trim().to_string();
            if text.is_empty() || text.contains(char::is_whitespace) {
                return Err(ModelError::MissingName {
                    line: s.header_line,
                });
            }
            text
        }
        None => "unnamed".to_string(),
    };
    let variables_sec = require("variables")?;
    let program_sec = require("program")?;
    let safety_sec = require("safety")?;

    let constants = match find("constants") {
        Some(s) => parse_decls(s)?,
        None => Vec::new(),
    };
    let variables = parse_decls(variables_sec)?;
    let assume = match find("assume") {
        Some(s) => {
            parse_formula_at(&s.text, s.header_line).map_err(|source| ModelError::Parse {
                section: "assume",
                source,
            })?
        }
        None => Formula::True,
    };
    let program =
        parse_program_at(&program_sec.text, program_sec.header_line).map_err(|source| {
            ModelError::Parse {
                section: "program",
                source,
            }
        })?;
    let safety = parse_formula_at(&safety_sec.text, safety_sec.header_line).map_err(|source| {
        ModelError::Parse {
            section: "safety",
            source,
        }
    })?;

    let model = ModelFile {
        name,
        constants,
        variables,
        assume,
        program,
        safety,
    };
    model.validate()?;
    Ok(model)
}

fn term_vars(t: &Term) -> BTreeSet<String> {
    let mut s = BTreeSet::new();
    t.collect_vars(&mut s);
    s
}

impl ModelFile {
    pub fn constant_names(&self) -> impl Iterator<Item = &str> {
        self.constants.iter().map(|d| d.name.as_str())
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|d| d.name.as_str())
    }

    pub fn variable(&self, name: &str) -> Option<&Decl> {
        self.variables.iter().find(|d| d.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<&Decl> {
        self.constants.iter().find(|d| d.name == name)
    }

    /// Values of the constants fixed by `name = term`, in declaration order.
    pub fn fixed_constants(&self) -> HashMap<String, f64> {
        let mut env: HashMap<String, f64> = HashMap::new();
        for d in &self.constants {
            if let Some(v) = d
                .value
                .as_ref()
                .and_then(|t| t.eval_with(&|x| env.get(x).copied()))
            {
                env.insert(d.name.clone(), v);
            }
        }
        env
    }

    fn validate(&self) -> Result<(), ModelError> {
        let mut seen: HashMap<&str, Pos> = HashMap::new();
        for d in self.constants.iter().chain(&self.variables) {
            if seen.insert(&d.name, d.pos).is_some() {
                return Err(ModelError::DuplicateName {
                    name: d.name.clone(),
                    pos: d.pos,
                });
            }
        }

        let env = self.fixed_constants();
        let mut earlier: BTreeSet<String> = BTreeSet::new();
        for d in &self.constants {
            self.check_decl(d, &earlier, &env)?;
            earlier.insert(d.name.clone());
        }
        for d in &self.variables {
            self.check_decl(d, &earlier, &env)?;
        }

        let declared: BTreeSet<String> = self
            .constant_names()
            .chain(self.variable_names())
            .map(str::to_string)
            .collect();
        let mut used = BTreeSet::new();
        self.program.collect_vars(&mut used);
        let checks: [(&'static str, BTreeSet<String>); 3] = [
            ("program", used),
            ("safety", self.safety.free_vars()),
            ("assume", self.assume.free_vars()),
        ];
        for (section, vars) in checks {
            if let Some(name) = vars.difference(&declared).next() {
                return Err(ModelError::Undeclared {
                    name: name.clone(),
                    section,
                });
            }
        }

        let mut written = BTreeSet::new();
        self.program.written_vars(&mut written);
        if let Some(c) = written.iter().find(|w| self.constant(w).is_some()) {
            return Err(ModelError::AssignToConstant(c.clone()));
        }
        let mut random = BTreeSet::new();
        random_targets(&self.program, &mut random);
        if let Some(x) = random
            .iter()
            .find(|x| self.variable(x).is_some_and(|d| d.range.is_none()))
        {
            return Err(ModelError::RandomWithoutRange(x.clone()));
        }
        Ok(())
    }

    fn check_decl(
        &self,
        d: &Decl,
        earlier: &BTreeSet<String>,
        env: &HashMap<String, f64>,
    ) -> Result<(), ModelError> {
        if d.value.is_none() && d.range.is_none() {
            return Err(ModelError::Unconstrained {
                name: d.name.clone(),
                pos: d.pos,
            });
        }
        let mut refs = BTreeSet::new();
        if let Some(v) = &d.value {
            refs.extend(term_vars(v));
        }
        if let Some(r) = &d.range {
            refs.extend(term_vars(&r.lo));
            refs.extend(term_vars(&r.hi));
        }
        if let Some(bad) = refs.difference(earlier).next() {
            return Err(ModelError::BadReference {
                name: d.name.clone(),
                refers: bad.clone(),
                pos: d.pos,
            });
        }
        let eval = |t: &Term| t.eval_with(&|x| env.get(x).copied());
        let unsat = |detail: String| ModelError::Unsatisfiable {
            name: d.name.clone(),
            detail,
            pos: d.pos,
        };
        if let Some(r) = &d.range {
            if let (Some(lo), Some(hi)) = (eval(&r.lo), eval(&r.hi)) {
                let empty = lo > hi || (lo == hi && !(r.lo_closed && r.hi_closed));
                if empty {
                    return Err(unsat(format!("interval {r} is empty")));
                }
                if let Some(v) = d.value.as_ref().and_then(&eval) {
                    let inside = (if r.lo_closed { v >= lo } else { v > lo })
                        && (if r.hi_closed { v <= hi } else { v < hi });
                    if !inside {
                        return Err(unsat(format!("value {v} lies outside {r}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn random_targets(p: &Program, out: &mut BTreeSet<String>) {
    match p {
        Program::RandomAssign(x) => {
            out.insert(x.clone());
        }
        Program::Choice(a, b) | Program::Seq(a, b) => {
            random_targets(a, out);
            random_targets(b, out);
        }
        Program::Star(a) => random_targets(a, out),
        _ => {}
    }
}

impl fmt::Display for ModelFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model: {}", self.name)?;
        if !self.constants.is_empty() {
            writeln!(f, "constants:")?;
            for d in &self.constants {
                writeln!(f, "  {d}")?;
            }
        }
        writeln!(f, "variables:")?;
        for d in &self.variables {
            writeln!(f, "  {d}")?;
        }
        if self.assume != Formula::True {
            writeln!(f, "assume:\n  {}", formula_to_string(&self.assume))?;
        }
        writeln!(f, "program:\n  {}", program_to_string(&self.program))?;
        writeln!(f, "safety:\n  {}", formula_to_string(&self.safety))
    }
}
