//! Minimal stratified-Datalog fixpoint engine.
//!
//! Relations range over three column kinds (address, signed 64-bit, text).
//! Rules are built through a host-code construction API and support negated
//! atoms, comparison constraints, checked arithmetic and stratified
//! aggregates. Evaluation is semi-naive and deterministic for any worker
//! count.

mod eval;

pub use eval::evaluate;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Address,
    Int,
    Text,
}

/// A single column value. `Addr` and `Int` are distinct storage kinds but are
/// coerced numerically when a value crosses between columns of either kind;
/// all rule arithmetic happens in checked signed 64-bit space.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Addr(u64),
    Int(i64),
    Text(String),
}

impl Value {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Addr(a) => i64::try_from(*a).ok(),
            Value::Int(i) => Some(*i),
            Value::Text(_) => None,
        }
    }

    pub fn as_addr(&self) -> Option<u64> {
        match self {
            Value::Addr(a) => Some(*a),
            Value::Int(i) => u64::try_from(*i).ok(),
            Value::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(t) => Some(t),
            _ => None,
        }
    }

    /// Render for fact files: addresses lowercase 0x hex, ints decimal, text raw.
    pub fn render(&self) -> String {
        match self {
            Value::Addr(a) => format!("0x{a:x}"),
            Value::Int(i) => i.to_string(),
            Value::Text(t) => t.clone(),
        }
    }

    pub fn parse(kind: ColumnKind, field: &str) -> Result<Value, String> {
        match kind {
            ColumnKind::Address => {
                let digits = field
                    .strip_prefix("0x")
                    .ok_or_else(|| format!("address without 0x prefix: {field:?}"))?;
                u64::from_str_radix(digits, 16)
                    .map(Value::Addr)
                    .map_err(|e| format!("bad address {field:?}: {e}"))
            }
            ColumnKind::Int => field
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|e| format!("bad integer {field:?}: {e}")),
            ColumnKind::Text => Ok(Value::Text(field.to_string())),
        }
    }

    /// Coerce into the storage kind of a target column.
    pub fn coerce(&self, kind: ColumnKind) -> Result<Value, String> {
        match (self, kind) {
            (Value::Addr(_), ColumnKind::Address) | (Value::Int(_), ColumnKind::Int) => {
                Ok(self.clone())
            }
            (Value::Text(_), ColumnKind::Text) => Ok(self.clone()),
            (Value::Addr(a), ColumnKind::Int) => i64::try_from(*a)
                .map(Value::Int)
                .map_err(|_| format!("address 0x{a:x} exceeds signed range")),
            (Value::Int(i), ColumnKind::Address) => u64::try_from(*i)
                .map(Value::Addr)
                .map_err(|_| format!("negative value {i} used as address")),
            (v, k) => Err(format!("cannot use {v:?} in a {k:?} column")),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Clone, Debug)]
pub enum Expr {
    Var(String),
    Const(i64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug)]
pub enum Term {
    Var(String),
    Const(Value),
    Wildcard,
    Expr(Expr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggKind {
    Sum,
    Max,
    Min,
    Count,
}

#[derive(Clone, Debug)]
pub struct Atom {
    pub rel: String,
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
    Cmp { op: Cmp, lhs: Expr, rhs: Expr },
    Let { var: String, expr: Expr },
    /// Bind `var` to `kind` over column `over` of the rows of `rel` matching
    /// `terms` (bound variables and constants form the group key).
    Agg {
        kind: AggKind,
        rel: String,
        terms: Vec<Term>,
        over: usize,
        var: String,
    },
}

#[derive(Clone, Debug)]
pub struct Rule {
    pub label: String,
    pub head: Atom,
    pub body: Vec<Literal>,
}

#[derive(Clone, Debug)]
pub struct RelationDecl {
    pub name: String,
    pub schema: Vec<ColumnKind>,
    pub input: bool,
}

#[derive(Default, Clone, Debug)]
pub struct Program {
    pub relations: Vec<RelationDecl>,
    pub rules: Vec<Rule>,
    by_name: HashMap<String, usize>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn relation(&mut self, name: &str, schema: &[ColumnKind]) {
        self.declare(name, schema, false);
    }

    pub fn input(&mut self, name: &str, schema: &[ColumnKind]) {
        self.declare(name, schema, true);
    }

    fn declare(&mut self, name: &str, schema: &[ColumnKind], input: bool) {
        assert!(
            !self.by_name.contains_key(name),
            "relation {name} declared twice"
        );
        self.by_name.insert(name.to_string(), self.relations.len());
        self.relations.push(RelationDecl {
            name: name.to_string(),
            schema: schema.to_vec(),
            input,
        });
    }

    pub fn rule(&mut self, label: &str, head: Atom, body: Vec<Literal>) {
        self.rules.push(Rule {
            label: label.to_string(),
            head,
            body,
        });
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn schema(&self, name: &str) -> Option<&[ColumnKind]> {
        self.relation_id(name)
            .map(|i| self.relations[i].schema.as_slice())
    }
}

/// Evaluated database: relation name to tuple set.
#[derive(Default, Clone, Debug, PartialEq, Eq)]
pub struct Database {
    pub relations: BTreeMap<String, BTreeSet<Vec<Value>>>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self, name: &str) -> impl Iterator<Item = &Vec<Value>> {
        self.relations.get(name).into_iter().flatten()
    }

    pub fn insert(&mut self, name: &str, row: Vec<Value>) {
        self.relations.entry(name.to_string()).or_default().insert(row);
    }

    pub fn contains(&self, name: &str, row: &[Value]) -> bool {
        self.relations.get(name).is_some_and(|s| s.contains(row))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("negation cycle through relations: {}", .0.join(", "))]
    NegationCycle(Vec<String>),
    #[error("unbound variable in rule {0}")]
    UnboundVariable(String),
    #[error("arithmetic overflow in rule {rule} on {tuple}")]
    ArithmeticOverflow { rule: String, tuple: String },
    #[error("aggregate over relation {0} inside its own recursive component")]
    AggregateStratumViolation(String),
    #[error("schema error: {0}")]
    Schema(String),
}

/// One stratum: the relations of one dependency-graph SCC plus the rules
/// defining them, in evaluation order.
#[derive(Debug)]
pub struct Stratum {
    pub relations: Vec<usize>,
    pub rules: Vec<usize>,
}

#[derive(Debug)]
pub struct Strata {
    pub strata: Vec<Stratum>,
    /// Relation name to stratum index (inputs sit in stratum of first use or 0).
    pub relation_stratum: HashMap<String, usize>,
}

/// Orders the rules into strata such that every negative or aggregate
/// dependency is fully computed in a strictly earlier stratum.
pub fn stratify(p: &Program) -> Result<Strata, EngineError> {
    let n = p.relations.len();
    // (dep, negative, via_aggregate) edges: dep -> head.
    let mut fwd: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut neg_edges: Vec<(usize, usize, bool)> = Vec::new();
    let rel_of = |atom: &Atom| -> Result<usize, EngineError> {
        p.relation_id(&atom.rel)
            .ok_or_else(|| EngineError::Schema(format!("unknown relation {}", atom.rel)))
    };
    for rule in &p.rules {
        let head = rel_of(&rule.head)?;
        check_arity(p, &rule.head, &rule.label)?;
        for lit in &rule.body {
            match lit {
                Literal::Pos(a) => {
                    check_arity(p, a, &rule.label)?;
                    fwd[rel_of(a)?].push(head);
                }
                Literal::Neg(a) => {
                    check_arity(p, a, &rule.label)?;
                    let d = rel_of(a)?;
                    fwd[d].push(head);
                    neg_edges.push((d, head, false));
                }
                Literal::Agg { rel, terms, over, .. } => {
                    let d = p
                        .relation_id(rel)
                        .ok_or_else(|| EngineError::Schema(format!("unknown relation {rel}")))?;
                    let schema = &p.relations[d].schema;
                    if terms.len() != schema.len() || *over >= schema.len() {
                        return Err(EngineError::Schema(format!(
                            "aggregate arity mismatch on {rel} in rule {}",
                            rule.label
                        )));
                    }
                    fwd[d].push(head);
                    neg_edges.push((d, head, true));
                }
                Literal::Cmp { .. } | Literal::Let { .. } => {}
            }
        }
    }

    let comp = tarjan_scc(&fwd);
    let comp_of: Vec<usize> = comp.membership.clone();
    for &(from, to, via_agg) in &neg_edges {
        if comp_of[from] == comp_of[to] {
            if via_agg {
                return Err(EngineError::AggregateStratumViolation(
                    p.relations[from].name.clone(),
                ));
            }
            let mut names: Vec<String> = comp.components[comp_of[from]]
                .iter()
                .map(|&r| p.relations[r].name.clone())
                .collect();
            names.sort();
            return Err(EngineError::NegationCycle(names));
        }
    }

    // Groundedness, checked after cycle detection so cyclic programs report
    // the cycle rather than incidental unbound variables.
    for rule in &p.rules {
        check_groundedness(rule)?;
    }

    // Tarjan emits components in reverse topological order of the condensation.
    let mut order: Vec<usize> = (0..comp.components.len()).collect();
    order.reverse();
    let mut strata = Vec::new();
    let mut relation_stratum = HashMap::new();
    for c in order {
        let rels = comp.components[c].clone();
        let rules: Vec<usize> = p
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                p.relation_id(&r.head.rel)
                    .is_some_and(|h| comp_of[h] == c)
            })
            .map(|(i, _)| i)
            .collect();
        for &r in &rels {
            relation_stratum.insert(p.relations[r].name.clone(), strata.len());
        }
        strata.push(Stratum {
            relations: rels,
            rules,
        });
    }
    Ok(Strata {
        strata,
        relation_stratum,
    })
}

fn check_arity(p: &Program, atom: &Atom, label: &str) -> Result<(), EngineError> {
    let schema = p
        .schema(&atom.rel)
        .ok_or_else(|| EngineError::Schema(format!("unknown relation {}", atom.rel)))?;
    if atom.terms.len() != schema.len() {
        return Err(EngineError::Schema(format!(
            "arity mismatch on {} in rule {label}",
            atom.rel
        )));
    }
    for (term, kind) in atom.terms.iter().zip(schema) {
        if let Term::Const(v) = term {
            v.coerce(*kind).map_err(EngineError::Schema)?;
        }
    }
    Ok(())
}

fn check_groundedness(rule: &Rule) -> Result<(), EngineError> {
    let mut bound: HashSet<&str> = HashSet::new();
    let err = || EngineError::UnboundVariable(rule.label.clone());
    let expr_ok = |e: &Expr, bound: &HashSet<&str>| -> bool {
        fn vars_ok(e: &Expr, bound: &HashSet<&str>) -> bool {
            match e {
                Expr::Var(v) => bound.contains(v.as_str()),
                Expr::Const(_) => true,
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                    vars_ok(a, bound) && vars_ok(b, bound)
                }
            }
        }
        vars_ok(e, bound)
    };
    for lit in &rule.body {
        match lit {
            Literal::Pos(a) => {
                for term in &a.terms {
                    match term {
                        Term::Var(v) => {
                            bound.insert(v);
                        }
                        Term::Expr(e) if !expr_ok(e, &bound) => return Err(err()),
                        _ => {}
                    }
                }
            }
            Literal::Neg(a) => {
                for term in &a.terms {
                    match term {
                        Term::Var(v) if !bound.contains(v.as_str()) => return Err(err()),
                        Term::Expr(e) if !expr_ok(e, &bound) => return Err(err()),
                        _ => {}
                    }
                }
            }
            Literal::Cmp { lhs, rhs, .. } => {
                if !expr_ok(lhs, &bound) || !expr_ok(rhs, &bound) {
                    return Err(err());
                }
            }
            Literal::Let { var, expr } => {
                if !expr_ok(expr, &bound) {
                    return Err(err());
                }
                bound.insert(var);
            }
            Literal::Agg { terms, var, .. } => {
                for term in terms {
                    match term {
                        Term::Var(v) if !bound.contains(v.as_str()) => return Err(err()),
                        Term::Expr(e) if !expr_ok(e, &bound) => return Err(err()),
                        _ => {}
                    }
                }
                bound.insert(var);
            }
        }
    }
    for term in &rule.head.terms {
        match term {
            Term::Var(v) if !bound.contains(v.as_str()) => return Err(err()),
            Term::Expr(e) if !expr_ok(e, &bound) => return Err(err()),
            Term::Wildcard => {
                return Err(EngineError::Schema(format!(
                    "wildcard in head of rule {}",
                    rule.label
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

struct SccResult {
    components: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

fn tarjan_scc(fwd: &[Vec<usize>]) -> SccResult {
    let n = fwd.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut membership = vec![0usize; n];
    let mut counter = 0usize;

    // Iterative Tarjan: frame = (node, next edge position).
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        let mut frames: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(&mut (v, ref mut ei)) = frames.last_mut() {
            if *ei == 0 {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ei < fwd[v].len() {
                let w = fwd[v][*ei];
                *ei += 1;
                if index[w] == usize::MAX {
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        membership[w] = components.len();
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort();
                    components.push(comp);
                }
                frames.pop();
                if let Some(&mut (u, _)) = frames.last_mut() {
                    low[u] = low[u].min(low[v]);
                }
            }
        }
    }
    SccResult {
        components,
        membership,
    }
}

/// Term/expression construction helpers for rule authoring.
pub mod build {
    use super::{Atom, Cmp, Expr, Literal, Term, Value};

    pub fn v(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn num(i: i64) -> Term {
        Term::Const(Value::Int(i))
    }

    pub fn addr(a: u64) -> Term {
        Term::Const(Value::Addr(a))
    }

    pub fn txt(t: &str) -> Term {
        Term::Const(Value::Text(t.to_string()))
    }

    pub fn wc() -> Term {
        Term::Wildcard
    }

    pub fn ex(e: Expr) -> Term {
        Term::Expr(e)
    }

    pub fn evar(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn eint(i: i64) -> Expr {
        Expr::Const(i)
    }

    pub fn eadd(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn esub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn emul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn ediv(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn atom(rel: &str, terms: Vec<Term>) -> Atom {
        Atom {
            rel: rel.to_string(),
            terms,
        }
    }

    pub fn pos(rel: &str, terms: Vec<Term>) -> Literal {
        Literal::Pos(atom(rel, terms))
    }

    pub fn neg(rel: &str, terms: Vec<Term>) -> Literal {
        Literal::Neg(atom(rel, terms))
    }

    pub fn cmp(op: Cmp, lhs: Expr, rhs: Expr) -> Literal {
        Literal::Cmp { op, lhs, rhs }
    }

    pub fn let_(var: &str, expr: Expr) -> Literal {
        Literal::Let {
            var: var.to_string(),
            expr,
        }
    }
}
