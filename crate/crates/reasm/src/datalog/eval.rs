//! Semi-naive evaluation over indexed tuple stores.

use super::{
    AggKind, Atom, Cmp, ColumnKind, Database, EngineError, Expr, Literal, Program, Term, Value,
    stratify,
};
use std::collections::{BTreeSet, HashMap, HashSet};

#[derive(Clone, Debug)]
enum CExpr {
    Slot(usize),
    Const(i64),
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
    Mul(Box<CExpr>, Box<CExpr>),
    Div(Box<CExpr>, Box<CExpr>),
}

#[derive(Clone, Debug)]
enum ColAction {
    Bind(usize),
    /// Repeat of a variable first bound earlier in the same atom: cannot go
    /// into the pre-join key, checked after binding instead.
    MatchSame(usize, ColumnKind),
    MatchSlot(usize, ColumnKind),
    MatchConst(Value),
    MatchExpr(CExpr, ColumnKind),
    Ignore,
}

#[derive(Clone, Debug)]
enum CTerm {
    Slot(usize),
    Val(Value),
    Expr(CExpr, ColumnKind),
}

#[derive(Clone, Debug)]
enum CLit {
    Pos {
        rel: usize,
        actions: Vec<ColAction>,
        mask: u64,
    },
    Neg {
        rel: usize,
        actions: Vec<ColAction>,
        mask: u64,
    },
    Cmp {
        op: Cmp,
        lhs: CExpr,
        rhs: CExpr,
    },
    Let {
        slot: usize,
        expr: CExpr,
    },
    Agg {
        kind: AggKind,
        rel: usize,
        actions: Vec<ColAction>,
        mask: u64,
        over: usize,
        slot: usize,
    },
}

#[derive(Debug)]
struct CRule {
    label: String,
    head_rel: usize,
    head: Vec<CTerm>,
    body: Vec<CLit>,
    nslots: usize,
}

struct Store {
    schema: Vec<ColumnKind>,
    rows: Vec<Vec<Value>>,
    present: HashSet<Vec<Value>>,
    indexes: HashMap<u64, HashMap<Vec<Value>, Vec<u32>>>,
}

impl Store {
    fn new(schema: Vec<ColumnKind>) -> Self {
        Store {
            schema,
            rows: Vec::new(),
            present: HashSet::new(),
            indexes: HashMap::new(),
        }
    }

    fn insert(&mut self, row: Vec<Value>) -> bool {
        if !self.present.insert(row.clone()) {
            return false;
        }
        let i = self.rows.len() as u32;
        for (mask, index) in self.indexes.iter_mut() {
            index.entry(project(&row, *mask)).or_default().push(i);
        }
        self.rows.push(row);
        true
    }

    fn ensure_index(&mut self, mask: u64) {
        if mask == 0 || self.indexes.contains_key(&mask) {
            return;
        }
        let mut index: HashMap<Vec<Value>, Vec<u32>> = HashMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            index.entry(project(row, mask)).or_default().push(i as u32);
        }
        self.indexes.insert(mask, index);
    }

    fn lookup(&self, mask: u64, key: &[Value]) -> &[u32] {
        static EMPTY: [u32; 0] = [];
        self.indexes
            .get(&mask)
            .and_then(|ix| ix.get(key))
            .map(|v| v.as_slice())
            .unwrap_or(&EMPTY)
    }
}

fn project(row: &[Value], mask: u64) -> Vec<Value> {
    row.iter()
        .enumerate()
        .filter(|(c, _)| mask & (1 << c) != 0)
        .map(|(_, v)| v.clone())
        .collect()
}

fn compile(p: &Program) -> Result<Vec<CRule>, EngineError> {
    p.rules.iter().map(|rule| compile_rule(p, rule)).collect()
}

fn compile_rule(p: &Program, rule: &super::Rule) -> Result<CRule, EngineError> {
    let mut slots: HashMap<String, usize> = HashMap::new();
    let mut bound: HashSet<String> = HashSet::new();
    let slot_of = |name: &str, slots: &mut HashMap<String, usize>| -> usize {
        let next = slots.len();
        *slots.entry(name.to_string()).or_insert(next)
    };

    fn compile_expr(
        e: &Expr,
        slots: &mut HashMap<String, usize>,
    ) -> CExpr {
        match e {
            Expr::Var(v) => {
                let next = slots.len();
                CExpr::Slot(*slots.entry(v.clone()).or_insert(next))
            }
            Expr::Const(i) => CExpr::Const(*i),
            Expr::Add(a, b) => CExpr::Add(
                Box::new(compile_expr(a, slots)),
                Box::new(compile_expr(b, slots)),
            ),
            Expr::Sub(a, b) => CExpr::Sub(
                Box::new(compile_expr(a, slots)),
                Box::new(compile_expr(b, slots)),
            ),
            Expr::Mul(a, b) => CExpr::Mul(
                Box::new(compile_expr(a, slots)),
                Box::new(compile_expr(b, slots)),
            ),
            Expr::Div(a, b) => CExpr::Div(
                Box::new(compile_expr(a, slots)),
                Box::new(compile_expr(b, slots)),
            ),
        }
    }

    let compile_atom = |atom: &Atom,
                            positive: bool,
                            slots: &mut HashMap<String, usize>,
                            bound: &mut HashSet<String>|
     -> Result<(usize, Vec<ColAction>, u64), EngineError> {
        let rel = p
            .relation_id(&atom.rel)
            .ok_or_else(|| EngineError::Schema(format!("unknown relation {}", atom.rel)))?;
        let schema = &p.relations[rel].schema;
        let mut actions = Vec::with_capacity(atom.terms.len());
        let mut mask = 0u64;
        let mut local: HashSet<&str> = HashSet::new();
        for (c, (term, kind)) in atom.terms.iter().zip(schema).enumerate() {
            let action = match term {
                Term::Var(v) => {
                    if local.contains(v.as_str()) {
                        ColAction::MatchSame(slot_of(v, slots), *kind)
                    } else if bound.contains(v) || !positive {
                        mask |= 1 << c;
                        ColAction::MatchSlot(slot_of(v, slots), *kind)
                    } else {
                        bound.insert(v.clone());
                        local.insert(v.as_str());
                        ColAction::Bind(slot_of(v, slots))
                    }
                }
                Term::Const(value) => {
                    mask |= 1 << c;
                    ColAction::MatchConst(value.coerce(*kind).map_err(EngineError::Schema)?)
                }
                Term::Wildcard => ColAction::Ignore,
                Term::Expr(e) => {
                    mask |= 1 << c;
                    ColAction::MatchExpr(compile_expr(e, slots), *kind)
                }
            };
            actions.push(action);
        }
        Ok((rel, actions, mask))
    };

    let mut body = Vec::new();
    for lit in &rule.body {
        match lit {
            Literal::Pos(a) => {
                let (rel, actions, mask) = compile_atom(a, true, &mut slots, &mut bound)?;
                body.push(CLit::Pos { rel, actions, mask });
            }
            Literal::Neg(a) => {
                let (rel, actions, mask) = compile_atom(a, false, &mut slots, &mut bound)?;
                body.push(CLit::Neg { rel, actions, mask });
            }
            Literal::Cmp { op, lhs, rhs } => body.push(CLit::Cmp {
                op: *op,
                lhs: compile_expr(lhs, &mut slots),
                rhs: compile_expr(rhs, &mut slots),
            }),
            Literal::Let { var, expr } => {
                let expr = compile_expr(expr, &mut slots);
                bound.insert(var.clone());
                body.push(CLit::Let {
                    slot: slot_of(var, &mut slots),
                    expr,
                });
            }
            Literal::Agg {
                kind,
                rel,
                terms,
                over,
                var,
            } => {
                let atom = Atom {
                    rel: rel.clone(),
                    terms: terms.clone(),
                };
                let (rel, actions, mask) = compile_atom(&atom, false, &mut slots, &mut bound)?;
                if self_kind_is_text(&p.relations[rel].schema, *over) {
                    return Err(EngineError::Schema(format!(
                        "aggregate over text column in rule {}",
                        rule.label
                    )));
                }
                bound.insert(var.clone());
                body.push(CLit::Agg {
                    kind: *kind,
                    rel,
                    actions,
                    mask,
                    over: *over,
                    slot: slot_of(var, &mut slots),
                });
            }
        }
    }

    let head_rel = p
        .relation_id(&rule.head.rel)
        .ok_or_else(|| EngineError::Schema(format!("unknown relation {}", rule.head.rel)))?;
    let head_schema = p.relations[head_rel].schema.clone();
    let mut head = Vec::new();
    for (term, kind) in rule.head.terms.iter().zip(&head_schema) {
        head.push(match term {
            Term::Var(v) => CTerm::Slot(slot_of(v, &mut slots)),
            Term::Const(value) => CTerm::Val(value.coerce(*kind).map_err(EngineError::Schema)?),
            Term::Expr(e) => CTerm::Expr(compile_expr(e, &mut slots), *kind),
            Term::Wildcard => {
                return Err(EngineError::Schema(format!(
                    "wildcard in head of rule {}",
                    rule.label
                )))
            }
        });
    }
    let nslots = slots.len();
    Ok(CRule {
        label: rule.label.clone(),
        head_rel,
        head,
        body,
        nslots,
    })
}

fn self_kind_is_text(schema: &[ColumnKind], col: usize) -> bool {
    matches!(schema.get(col), Some(ColumnKind::Text))
}

type Env = Vec<Option<Value>>;

fn eval_expr(e: &CExpr, env: &Env, rule: &str) -> Result<i64, EngineError> {
    let overflow = |env: &Env| EngineError::ArithmeticOverflow {
        rule: rule.to_string(),
        tuple: render_env(env),
    };
    Ok(match e {
        CExpr::Slot(s) => env[*s]
            .as_ref()
            .and_then(|v| v.as_i64())
            .ok_or_else(|| overflow(env))?,
        CExpr::Const(i) => *i,
        CExpr::Add(a, b) => eval_expr(a, env, rule)?
            .checked_add(eval_expr(b, env, rule)?)
            .ok_or_else(|| overflow(env))?,
        CExpr::Sub(a, b) => eval_expr(a, env, rule)?
            .checked_sub(eval_expr(b, env, rule)?)
            .ok_or_else(|| overflow(env))?,
        CExpr::Mul(a, b) => eval_expr(a, env, rule)?
            .checked_mul(eval_expr(b, env, rule)?)
            .ok_or_else(|| overflow(env))?,
        CExpr::Div(a, b) => eval_expr(a, env, rule)?
            .checked_div(eval_expr(b, env, rule)?)
            .ok_or_else(|| overflow(env))?,
    })
}

fn render_env(env: &Env) -> String {
    let parts: Vec<String> = env
        .iter()
        .map(|v| v.as_ref().map_or("_".to_string(), |v| v.render()))
        .collect();
    format!("({})", parts.join(", "))
}

/// Build the match key for an atom; `None` means a bound value cannot exist in
/// the target column kind, i.e. nothing can match.
fn build_key(
    actions: &[ColAction],
    env: &Env,
    rule: &str,
) -> Result<Option<Vec<Value>>, EngineError> {
    let mut key = Vec::new();
    for action in actions {
        match action {
            ColAction::MatchSlot(s, kind) => {
                let v = env[*s].as_ref().expect("slot bound by earlier literal");
                match v.coerce(*kind) {
                    Ok(v) => key.push(v),
                    Err(_) => return Ok(None),
                }
            }
            ColAction::MatchConst(v) => key.push(v.clone()),
            ColAction::MatchExpr(e, kind) => {
                let i = eval_expr(e, env, rule)?;
                match Value::Int(i).coerce(*kind) {
                    Ok(v) => key.push(v),
                    Err(_) => return Ok(None),
                }
            }
            ColAction::Bind(_) | ColAction::MatchSame(..) | ColAction::Ignore => {}
        }
    }
    Ok(Some(key))
}

struct VariantCtx<'a> {
    rule: &'a CRule,
    stores: &'a [Store],
    /// Body literal index whose relation scan is restricted to a delta range.
    delta: Option<(usize, (usize, usize))>,
}

impl<'a> VariantCtx<'a> {
    fn run(&self, out: &mut Vec<Vec<Value>>) -> Result<(), EngineError> {
        let mut env: Env = vec![None; self.rule.nslots];
        self.step(0, &mut env, out)
    }

    fn step(&self, lit: usize, env: &mut Env, out: &mut Vec<Vec<Value>>) -> Result<(), EngineError> {
        if lit == self.rule.body.len() {
            let mut row = Vec::with_capacity(self.rule.head.len());
            for term in &self.rule.head {
                row.push(match term {
                    CTerm::Slot(s) => env[*s].clone().expect("head slot bound"),
                    CTerm::Val(v) => v.clone(),
                    CTerm::Expr(e, kind) => {
                        let i = eval_expr(e, env, &self.rule.label)?;
                        Value::Int(i).coerce(*kind).map_err(|_| {
                            EngineError::ArithmeticOverflow {
                                rule: self.rule.label.clone(),
                                tuple: render_env(env),
                            }
                        })?
                    }
                });
            }
            // Head columns of kind the slot already carries stay as-is except
            // for numeric cross-kind coercion.
            let schema = &self.stores[self.rule.head_rel].schema;
            for (v, kind) in row.iter_mut().zip(schema) {
                *v = v.coerce(*kind).map_err(|_| EngineError::ArithmeticOverflow {
                    rule: self.rule.label.clone(),
                    tuple: render_env(env),
                })?;
            }
            out.push(row);
            return Ok(());
        }
        match &self.rule.body[lit] {
            CLit::Pos { rel, actions, mask } => {
                let store = &self.stores[*rel];
                let range = match self.delta {
                    Some((dl, range)) if dl == lit => range,
                    _ => (0, store.rows.len()),
                };
                if *mask == 0 {
                    for i in range.0..range.1 {
                        self.bind_and_step(lit, actions, &store.rows[i], env, out)?;
                    }
                } else {
                    let Some(key) = build_key(actions, env, &self.rule.label)? else {
                        return Ok(());
                    };
                    for &i in store.lookup(*mask, &key) {
                        let i = i as usize;
                        if i < range.0 || i >= range.1 {
                            continue;
                        }
                        self.bind_and_step(lit, actions, &store.rows[i], env, out)?;
                    }
                }
                Ok(())
            }
            CLit::Neg { rel, actions, mask } => {
                let store = &self.stores[*rel];
                let exists = if *mask == 0 {
                    !store.rows.is_empty()
                } else {
                    match build_key(actions, env, &self.rule.label)? {
                        Some(key) => !store.lookup(*mask, &key).is_empty(),
                        None => false,
                    }
                };
                if exists {
                    Ok(())
                } else {
                    self.step(lit + 1, env, out)
                }
            }
            CLit::Cmp { op, lhs, rhs } => {
                let l = eval_expr(lhs, env, &self.rule.label)?;
                let r = eval_expr(rhs, env, &self.rule.label)?;
                let ok = match op {
                    Cmp::Eq => l == r,
                    Cmp::Ne => l != r,
                    Cmp::Lt => l < r,
                    Cmp::Le => l <= r,
                    Cmp::Gt => l > r,
                    Cmp::Ge => l >= r,
                };
                if ok {
                    self.step(lit + 1, env, out)
                } else {
                    Ok(())
                }
            }
            CLit::Let { slot, expr } => {
                let i = eval_expr(expr, env, &self.rule.label)?;
                env[*slot] = Some(Value::Int(i));
                let result = self.step(lit + 1, env, out);
                env[*slot] = None;
                result
            }
            CLit::Agg {
                kind,
                rel,
                actions,
                mask,
                over,
                slot,
            } => {
                let store = &self.stores[*rel];
                let hits: Vec<u32> = if *mask == 0 {
                    (0..store.rows.len() as u32).collect()
                } else {
                    match build_key(actions, env, &self.rule.label)? {
                        Some(key) => store.lookup(*mask, &key).to_vec(),
                        None => Vec::new(),
                    }
                };
                let mut values = Vec::with_capacity(hits.len());
                for i in hits {
                    let v = &store.rows[i as usize][*over];
                    values.push(v.as_i64().ok_or_else(|| {
                        EngineError::Schema(format!(
                            "aggregate over non-numeric value in rule {}",
                            self.rule.label
                        ))
                    })?);
                }
                let overflow = || EngineError::ArithmeticOverflow {
                    rule: self.rule.label.clone(),
                    tuple: render_env(env),
                };
                let result = match kind {
                    AggKind::Count => Some(values.len() as i64),
                    AggKind::Sum => Some(
                        values
                            .iter()
                            .try_fold(0i64, |acc, v| acc.checked_add(*v))
                            .ok_or_else(overflow)?,
                    ),
                    AggKind::Max => values.iter().copied().max(),
                    AggKind::Min => values.iter().copied().min(),
                };
                match result {
                    Some(i) => {
                        env[*slot] = Some(Value::Int(i));
                        let r = self.step(lit + 1, env, out);
                        env[*slot] = None;
                        r
                    }
                    None => Ok(()),
                }
            }
        }
    }

    fn bind_and_step(
        &self,
        lit: usize,
        actions: &[ColAction],
        row: &[Value],
        env: &mut Env,
        out: &mut Vec<Vec<Value>>,
    ) -> Result<(), EngineError> {
        let mut bound_slots: Vec<usize> = Vec::new();
        let mut matches = true;
        for (action, value) in actions.iter().zip(row) {
            match action {
                ColAction::Bind(s) => {
                    env[*s] = Some(value.clone());
                    bound_slots.push(*s);
                }
                ColAction::MatchSame(s, kind) => {
                    let bound = env[*s].as_ref().expect("slot bound within atom");
                    if bound.coerce(*kind).ok().as_ref() != Some(value) {
                        matches = false;
                        break;
                    }
                }
                _ => {}
            }
        }
        let result = if matches {
            self.step(lit + 1, env, out)
        } else {
            Ok(())
        };
        for s in bound_slots {
            env[s] = None;
        }
        result
    }
}

pub fn evaluate(p: &Program, facts: &Database, jobs: usize) -> Result<Database, EngineError> {
    let strata = stratify(p)?;
    let crules = compile(p)?;

    let mut stores: Vec<Store> = p
        .relations
        .iter()
        .map(|d| Store::new(d.schema.clone()))
        .collect();

    for (name, rows) in &facts.relations {
        let id = p
            .relation_id(name)
            .ok_or_else(|| EngineError::Schema(format!("facts for undeclared relation {name}")))?;
        if !p.relations[id].input {
            return Err(EngineError::Schema(format!(
                "facts supplied for derived relation {name}"
            )));
        }
        let schema = p.relations[id].schema.clone();
        for row in rows {
            if row.len() != schema.len() {
                return Err(EngineError::Schema(format!("arity mismatch in facts for {name}")));
            }
            let mut coerced = Vec::with_capacity(row.len());
            for (v, kind) in row.iter().zip(&schema) {
                coerced.push(v.coerce(*kind).map_err(EngineError::Schema)?);
            }
            stores[id].insert(coerced);
        }
    }

    // All join indexes are known statically; build them up front so stores
    // stay read-only during a round.
    for rule in &crules {
        for lit in &rule.body {
            match lit {
                CLit::Pos { rel, mask, .. }
                | CLit::Neg { rel, mask, .. }
                | CLit::Agg { rel, mask, .. } => stores[*rel].ensure_index(*mask),
                _ => {}
            }
        }
    }

    let pool = if jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| EngineError::Schema(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    for stratum in &strata.strata {
        let stratum_rels: HashSet<usize> = stratum.relations.iter().copied().collect();
        let rules: Vec<&CRule> = stratum.rules.iter().map(|&i| &crules[i]).collect();
        if rules.is_empty() {
            continue;
        }

        // Round 0: full evaluation of every rule in the stratum.
        let mut variants: Vec<(&CRule, Option<(usize, (usize, usize))>)> =
            rules.iter().map(|r| (*r, None)).collect();
        let mut deltas: HashMap<usize, (usize, usize)> = HashMap::new();
        loop {
            let results = run_variants(&pool, &variants, &stores)?;
            let prev: HashMap<usize, usize> = stratum_rels
                .iter()
                .map(|&r| (r, stores[r].rows.len()))
                .collect();
            for (rel, rows) in results {
                for row in rows {
                    stores[rel].insert(row);
                }
            }
            deltas.clear();
            let mut any = false;
            for (&r, &was) in prev.iter() {
                let now = stores[r].rows.len();
                if now > was {
                    any = true;
                }
                deltas.insert(r, (was, now));
            }
            if !any {
                break;
            }
            // Subsequent rounds: one variant per (rule, recursive atom).
            variants = Vec::new();
            for rule in &rules {
                for (li, lit) in rule.body.iter().enumerate() {
                    if let CLit::Pos { rel, .. } = lit {
                        if stratum_rels.contains(rel) {
                            let range = deltas[rel];
                            if range.0 < range.1 {
                                variants.push((rule, Some((li, range))));
                            }
                        }
                    }
                }
            }
            if variants.is_empty() {
                break;
            }
        }
    }

    let mut db = Database::new();
    for (decl, store) in p.relations.iter().zip(&stores) {
        let set: BTreeSet<Vec<Value>> = store.rows.iter().cloned().collect();
        db.relations.insert(decl.name.clone(), set);
    }
    Ok(db)
}

fn run_variants(
    pool: &Option<rayon::ThreadPool>,
    variants: &[(&CRule, Option<(usize, (usize, usize))>)],
    stores: &[Store],
) -> Result<Vec<(usize, Vec<Vec<Value>>)>, EngineError> {
    let eval_one = |&(rule, delta): &(&CRule, Option<(usize, (usize, usize))>)| {
        let ctx = VariantCtx { rule, stores, delta };
        let mut out = Vec::new();
        ctx.run(&mut out).map(|()| (rule.head_rel, out))
    };
    let results: Vec<Result<(usize, Vec<Vec<Value>>), EngineError>> = match pool {
        Some(pool) => pool.install(|| {
            use rayon::prelude::*;
            variants.par_iter().map(eval_one).collect()
        }),
        None => variants.iter().map(eval_one).collect(),
    };
    // Surface the first error in variant order so failures are deterministic.
    results.into_iter().collect()
}
