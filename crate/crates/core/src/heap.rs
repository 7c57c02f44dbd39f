//! Abstract heaps: nodes summarizing regions, abstract addresses with
//! injectivity flags and target sets, and the variable/static roots.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use crate::ir::{Label, Program, TypeId};

pub type Nid = u32;
pub type Addr = u32;

/// Region shape, ordered `None < Tree < Any`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    None,
    Tree,
    Any,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::None, Shape::Tree, Shape::Any];

    pub fn join(self, other: Shape) -> Shape {
        self.max(other)
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::None => "none",
            Shape::Tree => "tree",
            Shape::Any => "any",
        }
    }

    /// `none` and `tree` are the precise values.
    pub fn is_precise(self) -> bool {
        self != Shape::Any
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AddrEntry {
    pub injective: bool,
    pub targets: BTreeSet<Nid>,
}

impl AddrEntry {
    pub fn empty() -> Self {
        AddrEntry {
            injective: true,
            targets: BTreeSet::new(),
        }
    }

    pub fn root(targets: BTreeSet<Nid>) -> Self {
        AddrEntry {
            injective: true,
            targets,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbstractNode {
    pub types: BTreeSet<TypeId>,
    pub shape: Shape,
    pub fields: BTreeMap<Label, Addr>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RootKind {
    /// Locals, parameters, and the hidden frame roots of the call stack.
    Var,
    Static,
}

/// Something that may point at a node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pred {
    Var(String),
    Static(String),
    Node(Nid, Label),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbstractHeap {
    pub env: BTreeMap<String, Addr>,
    pub statics: BTreeMap<String, Addr>,
    pub store: BTreeMap<Addr, AddrEntry>,
    pub nodes: BTreeMap<Nid, AbstractNode>,
    next_addr: Addr,
    next_nid: Nid,
}

impl AbstractHeap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh_addr(&mut self, entry: AddrEntry) -> Addr {
        let a = self.next_addr;
        self.next_addr += 1;
        self.store.insert(a, entry);
        a
    }

    /// Adds a node with one `(true, ∅)` address per heap label of `types`.
    pub fn fresh_node(&mut self, program: &Program, types: BTreeSet<TypeId>, shape: Shape) -> Nid {
        assert!(!types.is_empty(), "abstract node needs at least one type");
        let labels = program.field_labels(&types);
        let fields = labels
            .into_iter()
            .map(|l| (l, self.fresh_addr(AddrEntry::empty())))
            .collect();
        self.insert_node(AbstractNode {
            types,
            shape,
            fields,
        })
    }

    /// Adds a node whose field addresses are already in the store.
    pub fn insert_node(&mut self, node: AbstractNode) -> Nid {
        let n = self.next_nid;
        self.next_nid += 1;
        self.nodes.insert(n, node);
        n
    }

    /// Adds a node under a caller-chosen id; the id must be unused.
    pub fn insert_node_at(&mut self, n: Nid, node: AbstractNode) {
        assert!(!self.nodes.contains_key(&n), "node id {n} already in use");
        self.next_nid = self.next_nid.max(n + 1);
        self.nodes.insert(n, node);
    }

    pub fn node(&self, n: Nid) -> &AbstractNode {
        &self.nodes[&n]
    }

    pub fn entry(&self, a: Addr) -> &AddrEntry {
        &self.store[&a]
    }

    pub fn entry_mut(&mut self, a: Addr) -> &mut AddrEntry {
        self.store.get_mut(&a).expect("address in store")
    }

    /// The entry behind `n.label`, if the node's types define the label.
    pub fn field_entry(&self, n: Nid, label: Label) -> Option<&AddrEntry> {
        self.nodes[&n].fields.get(&label).map(|a| &self.store[a])
    }

    fn roots_of(&self, kind: RootKind) -> &BTreeMap<String, Addr> {
        match kind {
            RootKind::Var => &self.env,
            RootKind::Static => &self.statics,
        }
    }

    fn roots_of_mut(&mut self, kind: RootKind) -> &mut BTreeMap<String, Addr> {
        match kind {
            RootKind::Var => &mut self.env,
            RootKind::Static => &mut self.statics,
        }
    }

    /// Strong update of a root cell.
    pub fn bind_root(&mut self, kind: RootKind, name: &str, targets: BTreeSet<Nid>) {
        match self.roots_of(kind).get(name).copied() {
            Some(a) => *self.entry_mut(a) = AddrEntry::root(targets),
            None => {
                let a = self.fresh_addr(AddrEntry::root(targets));
                self.roots_of_mut(kind).insert(name.to_string(), a);
            }
        }
    }

    pub fn bind_var(&mut self, name: &str, targets: BTreeSet<Nid>) {
        self.bind_root(RootKind::Var, name, targets)
    }

    pub fn remove_root(&mut self, kind: RootKind, name: &str) {
        if let Some(a) = self.roots_of_mut(kind).remove(name) {
            self.store.remove(&a);
        }
    }

    pub fn root_targets(&self, kind: RootKind, name: &str) -> BTreeSet<Nid> {
        self.roots_of(kind)
            .get(name)
            .map(|a| self.store[a].targets.clone())
            .unwrap_or_default()
    }

    pub fn var_targets(&self, name: &str) -> BTreeSet<Nid> {
        self.root_targets(RootKind::Var, name)
    }

    /// All roots: variables first, then statics, each sorted by name.
    pub fn roots(&self) -> impl Iterator<Item = (RootKind, &str, Addr)> {
        self.env
            .iter()
            .map(|(n, &a)| (RootKind::Var, n.as_str(), a))
            .chain(
                self.statics
                    .iter()
                    .map(|(n, &a)| (RootKind::Static, n.as_str(), a)),
            )
    }

    /// Heap edges `(source, label, address, target)`.
    pub fn edges(&self) -> impl Iterator<Item = (Nid, Label, Addr, Nid)> + '_ {
        self.nodes.iter().flat_map(move |(&n, node)| {
            node.fields.iter().flat_map(move |(&l, &a)| {
                self.store[&a].targets.iter().map(move |&t| (n, l, a, t))
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn reachable_nodes(&self) -> BTreeSet<Nid> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<Nid> = VecDeque::new();
        for (_, _, a) in self.roots() {
            for &t in &self.store[&a].targets {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        while let Some(n) = queue.pop_front() {
            for a in self.nodes[&n].fields.values() {
                for &t in &self.store[a].targets {
                    if seen.insert(t) {
                        queue.push_back(t);
                    }
                }
            }
        }
        seen
    }

    pub fn predecessors(&self, n: Nid) -> BTreeSet<Pred> {
        let mut out = BTreeSet::new();
        for (kind, name, a) in self.roots() {
            if self.store[&a].targets.contains(&n) {
                out.insert(match kind {
                    RootKind::Var => Pred::Var(name.to_string()),
                    RootKind::Static => Pred::Static(name.to_string()),
                });
            }
        }
        for (s, l, _, t) in self.edges() {
            if t == n {
                out.insert(Pred::Node(s, l));
            }
        }
        out
    }

    /// Drops nodes not reachable from any root, together with their
    /// addresses and any store entry no longer referenced.
    pub fn gc_unreachable(&mut self) {
        let live = self.reachable_nodes();
        self.nodes.retain(|n, _| live.contains(n));
        let mut used: BTreeSet<Addr> = self.roots().map(|(_, _, a)| a).collect();
        for node in self.nodes.values() {
            used.extend(node.fields.values().copied());
        }
        self.store.retain(|a, _| used.contains(a));
    }

    /// Checks the structural invariants; the error names the first violation.
    pub fn check_well_formed(&self, program: &Program) -> Result<(), String> {
        let mut owner: BTreeMap<Addr, String> = BTreeMap::new();
        let mut claim = |a: Addr, who: String| -> Result<(), String> {
            if let Some(prev) = owner.insert(a, who.clone()) {
                return Err(format!("address {a} shared by {prev} and {who}"));
            }
            Ok(())
        };
        for (kind, name, a) in self.roots() {
            claim(a, format!("root {name}"))?;
            let e = self
                .store
                .get(&a)
                .ok_or_else(|| format!("root {name} has dangling address {a}"))?;
            if !e.injective {
                return Err(format!("{kind:?} root {name} is not injective"));
            }
        }
        for (&n, node) in &self.nodes {
            if node.types.is_empty() {
                return Err(format!("node {n} has no types"));
            }
            let labels = program.field_labels(&node.types);
            let keys: BTreeSet<Label> = node.fields.keys().copied().collect();
            if keys != labels {
                return Err(format!("node {n} field map does not match its types"));
            }
            for (l, &a) in &node.fields {
                claim(a, format!("node {n}.{}", program.label_name(*l)))?;
                if !self.store.contains_key(&a) {
                    return Err(format!("node {n} has dangling address {a}"));
                }
            }
        }
        for (a, e) in &self.store {
            if a >= &self.next_addr {
                return Err(format!("address {a} beyond the address counter"));
            }
            for t in &e.targets {
                if !self.nodes.contains_key(t) {
                    return Err(format!("address {a} targets missing node {t}"));
                }
            }
        }
        if let Some((&n, _)) = self.nodes.iter().next_back() {
            if n >= self.next_nid {
                return Err(format!("node {n} beyond the node counter"));
            }
        }
        Ok(())
    }

    /// Node ids in canonical order: breadth-first from the roots (variables,
    /// then statics, by name), targets of an address ordered by their type
    /// names with the node id as tie-break. Unreachable nodes come last.
    pub fn canonical_order(&self, program: &Program) -> Vec<Nid> {
        let key = |n: Nid| -> (Vec<&str>, Nid) {
            let mut names: Vec<&str> = self.nodes[&n]
                .types
                .iter()
                .map(|t| program.type_name(*t))
                .collect();
            names.sort_unstable();
            (names, n)
        };
        let sorted_targets = |a: Addr| -> Vec<Nid> {
            let mut ts: Vec<Nid> = self.store[&a].targets.iter().copied().collect();
            ts.sort_by_cached_key(|&t| key(t));
            ts
        };
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        for (_, _, a) in self.roots() {
            for t in sorted_targets(a) {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        loop {
            while let Some(n) = queue.pop_front() {
                order.push(n);
                let mut labels: Vec<(&str, Addr)> = self.nodes[&n]
                    .fields
                    .iter()
                    .map(|(l, &a)| (program.label_name(*l), a))
                    .collect();
                labels.sort_unstable();
                for (_, a) in labels {
                    for t in sorted_targets(a) {
                        if seen.insert(t) {
                            queue.push_back(t);
                        }
                    }
                }
            }
            match self.nodes.keys().find(|n| !seen.contains(n)) {
                Some(&n) => {
                    seen.insert(n);
                    queue.push_back(n);
                }
                None => break,
            }
        }
        order
    }

    fn type_list(&self, program: &Program, n: Nid) -> String {
        let mut names: Vec<&str> = self.nodes[&n]
            .types
            .iter()
            .map(|t| program.type_name(*t))
            .collect();
        names.sort_unstable();
        names.join(", ")
    }

    /// Deterministic text form with nodes renumbered canonically. Heaps
    /// equal up to node and address renaming print identically as long as
    /// sibling targets have distinct type sets.
    pub fn canonical_text(&self, program: &Program) -> String {
        let order = self.canonical_order(program);
        let index: BTreeMap<Nid, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let set = |a: Addr| -> String {
            let mut ids: Vec<usize> = self.store[&a].targets.iter().map(|t| index[t]).collect();
            ids.sort_unstable();
            let parts: Vec<String> = ids.iter().map(|i| format!("#{i}")).collect();
            format!("{{{}}}", parts.join(", "))
        };
        let mut out = String::new();
        for (kind, name, a) in self.roots() {
            let k = match kind {
                RootKind::Var => "env",
                RootKind::Static => "static",
            };
            let _ = writeln!(out, "{k} {name} -> {}", set(a));
        }
        for (i, &n) in order.iter().enumerate() {
            let node = &self.nodes[&n];
            let _ = writeln!(out, "#{i} {{{}}} {}", self.type_list(program, n), node.shape);
            let mut labels: Vec<(&str, Addr)> = node
                .fields
                .iter()
                .map(|(l, &a)| (program.label_name(*l), a))
                .collect();
            labels.sort_unstable();
            for (l, a) in labels {
                let inj = if self.store[&a].injective {
                    "inj"
                } else {
                    "shared"
                };
                let _ = writeln!(out, "  {l} {inj} -> {}", set(a));
            }
        }
        out
    }

    /// Graphviz rendering. Non-injective edges are drawn wide and orange.
    pub fn to_dot(&self, program: &Program) -> String {
        let order = self.canonical_order(program);
        let index: BTreeMap<Nid, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut out = String::from("digraph heap {\n");
        for (kind, name, _) in self.roots() {
            let id = root_id(kind, name);
            let _ = writeln!(out, "  \"{id}\" [shape=box,label=\"{}\"];", escape(name));
        }
        for (i, &n) in order.iter().enumerate() {
            let _ = writeln!(
                out,
                "  n{i} [shape=ellipse,label=\"${i}: {{{}}} {}\"];",
                self.type_list(program, n),
                self.nodes[&n].shape
            );
        }
        for (kind, name, a) in self.roots() {
            let mut ts: Vec<usize> = self.store[&a].targets.iter().map(|t| index[t]).collect();
            ts.sort_unstable();
            for t in ts {
                let _ = writeln!(out, "  \"{}\" -> n{t};", root_id(kind, name));
            }
        }
        for (i, &n) in order.iter().enumerate() {
            let mut labels: Vec<(&str, Addr)> = self.nodes[&n]
                .fields
                .iter()
                .map(|(l, &a)| (program.label_name(*l), a))
                .collect();
            labels.sort_unstable();
            for (l, a) in labels {
                let e = &self.store[&a];
                let mut ts: Vec<usize> = e.targets.iter().map(|t| index[t]).collect();
                ts.sort_unstable();
                let style = if e.injective {
                    ""
                } else {
                    ",penwidth=3,color=orange"
                };
                for t in ts {
                    let _ = writeln!(out, "  n{i} -> n{t} [label=\"{}\"{style}];", escape(l));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

fn root_id(kind: RootKind, name: &str) -> String {
    let prefix = match kind {
        RootKind::Var => "v",
        RootKind::Static => "s",
    };
    format!("{prefix}:{}", escape(name))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
