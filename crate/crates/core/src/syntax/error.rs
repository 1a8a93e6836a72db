use std::fmt;

use thiserror::Error;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
    /// Tokens that would have been accepted at `pos`, sorted.
    pub expected: Vec<String>,
}

impl SyntaxError {
    pub fn new(pos: Pos, message: String, mut expected: Vec<String>) -> Self {
        expected.sort();
        expected.dedup();
        Self {
            pos,
            message,
            expected,
        }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at {}: {}", self.pos, self.message)?;
        if !self.expected.is_empty() {
            write!(f, "; expected one of: {}", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for SyntaxError {}

/// Well-formedness violations in a syntactically valid text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticError {
    #[error("semantic error at {pos}: variable `{var}` is assigned twice in one jump set")]
    DuplicateAssign { var: String, pos: Pos },
    #[error("semantic error at {pos}: variable `{var}` has two equations in one ODE system")]
    DuplicateOdeVar { var: String, pos: Pos },
    #[error("semantic error at {pos}: tests must be quantifier- and modality-free")]
    NonFirstOrderTest { pos: Pos },
    #[error("semantic error at {pos}: evolution domains must be quantifier- and modality-free")]
    NonFirstOrderDomain { pos: Pos },
}

impl SemanticError {
    pub fn pos(&self) -> Pos {
        match self {
            SemanticError::DuplicateAssign { pos, .. }
            | SemanticError::DuplicateOdeVar { pos, .. }
            | SemanticError::NonFirstOrderTest { pos }
            | SemanticError::NonFirstOrderDomain { pos } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax(e) => e.pos,
            ParseError::Semantic(e) => e.pos(),
        }
    }
}
