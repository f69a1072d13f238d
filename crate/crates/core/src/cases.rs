//! Bundled Matpower test cases.

use crate::error::{Error, Result};
use crate::grid::{parse_matpower_case, GridCase};

pub const CASE14: &str = include_str!("../data/case14.m");
pub const CASE30: &str = include_str!("../data/case30.m");
pub const CASE118: &str = include_str!("../data/case118.m");

/// Looks up a bundled case by name (`case14`, `case30`, `case118`).
pub fn builtin(name: &str) -> Result<GridCase> {
    let text = match name {
        "case14" => CASE14,
        "case30" => CASE30,
        "case118" => CASE118,
        other => return Err(Error::Validation(format!("no bundled case named {other:?}"))),
    };
    parse_matpower_case(text)
}
