//! Storage-shape-graph heap analysis for a small object IR.
//!
//! The crate bundles the IR ([`ir`]), a concrete interpreter with the
//! abstraction and concretization oracles ([`concrete`]), the abstract domain
//! ([`heap`], [`normal`], [`domain`]), the transfer functions and dataflow
//! driver ([`transfer`], [`fixpoint`]), the precision harness
//! ([`precision`]), and a corpus of sample programs ([`corpus`]).

pub mod concrete;
pub mod corpus;
pub mod domain;
pub mod fixpoint;
pub mod heap;
pub mod ir;
pub mod normal;
pub mod precision;
pub mod transfer;

pub use heap::{AbstractHeap, AddrEntry, Nid, Shape};
pub use ir::{FieldType, Label, LoadError, Program, ProgramPoint, RecursiveTypes, Stmt, TypeId};

/// A program together with its recursive-type relation, which every
/// normalization needs.
#[derive(Clone, Debug)]
pub struct Ctx<'p> {
    pub program: &'p Program,
    pub rec: RecursiveTypes,
}

impl<'p> Ctx<'p> {
    pub fn new(program: &'p Program) -> Self {
        Ctx {
            program,
            rec: program.recursive_types(),
        }
    }
}
