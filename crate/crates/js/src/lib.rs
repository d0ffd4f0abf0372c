//! JavaScript front end used by the taint engine and the exploit checks.
//!
//! The grammar covers what shows up in typical npm package sources: function
//! declarations and expressions, arrow functions, classes, destructuring,
//! template strings, object and array literals, and ES module syntax.
//! Anything outside of it (JSX, type annotations) is a [`ParseError`].

pub mod ast;
mod error;
pub mod lexer;
mod parser;
pub mod visit;

pub use error::{ParseError, Result};
pub use parser::{parse, parse_expression};
