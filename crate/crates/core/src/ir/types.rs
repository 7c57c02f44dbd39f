use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{FieldType, Program, TypeId, TypeKind};

/// The recursive-type relation `τ1 ~ τ2`: both types sit in the same
/// strongly connected component of the may-reference graph, and that
/// component actually has a cycle.
///
/// `T` may reference `S` when `T` has a heap field (inherited fields count)
/// or array element of declared type `U` with `S` a subtype of `U`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecursiveTypes {
    class_of: Vec<Option<u32>>,
    classes: Vec<Vec<TypeId>>,
}

impl RecursiveTypes {
    pub fn compute(program: &Program) -> Self {
        let n = program.types.len();
        let mut g = DiGraph::<TypeId, ()>::with_capacity(n, n);
        let idx: Vec<_> = program.type_ids().map(|t| g.add_node(t)).collect();
        let mut self_loop = vec![false; n];
        for t in program.type_ids() {
            for target in may_reference(program, t) {
                if target == t {
                    self_loop[t.0 as usize] = true;
                }
                g.update_edge(idx[t.0 as usize], idx[target.0 as usize], ());
            }
        }
        let mut class_of = vec![None; n];
        let mut classes = Vec::new();
        let mut sccs = tarjan_scc(&g);
        for scc in sccs.iter_mut() {
            scc.sort();
        }
        sccs.sort();
        for scc in sccs {
            let members: Vec<TypeId> = scc.iter().map(|&i| g[i]).collect();
            let recursive = members.len() > 1 || self_loop[members[0].0 as usize];
            if !recursive {
                continue;
            }
            let cid = classes.len() as u32;
            for &m in &members {
                class_of[m.0 as usize] = Some(cid);
            }
            let mut members = members;
            members.sort();
            classes.push(members);
        }
        RecursiveTypes { class_of, classes }
    }

    /// Id of the recursive component containing `t`, if any.
    pub fn class_of(&self, t: TypeId) -> Option<u32> {
        self.class_of.get(t.0 as usize).copied().flatten()
    }

    pub fn is_recursive(&self, t: TypeId) -> bool {
        self.class_of(t).is_some()
    }

    pub fn related(&self, a: TypeId, b: TypeId) -> bool {
        match (self.class_of(a), self.class_of(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// The recursive components, each sorted by type id.
    pub fn classes(&self) -> &[Vec<TypeId>] {
        &self.classes
    }
}

/// Types an object of type `t` may point to directly.
fn may_reference(program: &Program, t: TypeId) -> Vec<TypeId> {
    let declared: Vec<TypeId> = match program.type_decl(t).kind {
        TypeKind::Array { elem } => vec![elem],
        TypeKind::Class { .. } => program
            .all_fields(t)
            .into_iter()
            .filter_map(|(_, ft)| match ft {
                FieldType::Ref(u) => Some(u),
                FieldType::Int => None,
            })
            .collect(),
    };
    let mut out = Vec::new();
    for u in declared {
        for s in program.type_ids() {
            if program.is_subtype(s, u) && !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}
