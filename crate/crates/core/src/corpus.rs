//! Sample programs used by the tests, the benches, and the command line.

use crate::ir::{LoadError, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub name: &'static str,
    pub source: &'static str,
}

impl Sample {
    pub fn load(&self) -> Result<Program, LoadError> {
        Program::load(self.source)
    }
}

macro_rules! samples {
    ($($name:literal),* $(,)?) => {
        &[$(Sample {
            name: $name,
            source: include_str!(concat!("../corpus/", $name, ".shir")),
        }),*]
    };
}

pub const ALL: &[Sample] = samples![
    "array_fill",
    "bst",
    "dispatch",
    "dll",
    "expr",
    "list_append",
    "list_loop",
    "matrix",
    "mutual",
    "parent",
    "rec_list",
    "registry",
    "ring",
    "sharing",
    "tree_rec",
    "weak_update",
];

/// The expression-tree builder.
pub const EXPR: &str = include_str!("../corpus/expr.shir");

/// Program whose last store re-adds a target already present.
pub const WEAK_UPDATE: &str = "weak_update";

pub fn by_name(name: &str) -> Option<&'static Sample> {
    ALL.iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_sample_loads() {
        assert!(ALL.len() >= 12);
        for s in ALL {
            if let Err(e) = s.load() {
                panic!("{}: {e}", s.name);
            }
        }
    }

    #[test]
    fn lookup() {
        assert_eq!(by_name("expr").map(|s| s.source), Some(EXPR));
        assert!(by_name(WEAK_UPDATE).is_some());
        assert!(by_name("nope").is_none());
    }
}
