//! Concrete syntax: lexer, parser, pretty printer and model files.

pub mod ast;
pub mod error;
pub mod lexer;
pub mod model;
pub mod parser;
pub mod pretty;

pub use ast::{BinOp, Formula, OdeSystem, Program, Rel, Term};
pub use error::{ParseError, Pos, SemanticError, SyntaxError};
pub use model::{parse_model, Decl, Interval, ModelError, ModelFile};
pub use parser::{parse_formula, parse_program, parse_term};
pub use pretty::{formula_to_string, program_to_string, term_to_string};
