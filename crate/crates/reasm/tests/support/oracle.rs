//! Naive reference evaluator and randomized stratified-program generator,
//! shared by the engine and acceptance suites.
//!
//! The reference recomputes every rule from the full database until nothing
//! changes, layer by layer. It shares only the AST with the engine; join
//! order, deltas, and indexing differ entirely.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use reasm::datalog::build::*;
use reasm::datalog::{Atom, Database, Expr, Literal, Program, Term, Value};

type Env = BTreeMap<String, i64>;

fn eval_expr(e: &Expr, env: &Env) -> i64 {
    match e {
        Expr::Var(v) => env[v],
        Expr::Const(c) => *c,
        Expr::Add(a, b) => eval_expr(a, env) + eval_expr(b, env),
        Expr::Sub(a, b) => eval_expr(a, env) - eval_expr(b, env),
        Expr::Mul(a, b) => eval_expr(a, env) * eval_expr(b, env),
        Expr::Div(a, b) => eval_expr(a, env) / eval_expr(b, env),
    }
}

fn as_int(v: &Value) -> i64 {
    match v {
        Value::Int(i) => *i,
        other => panic!("generated programs are integer-only, got {other:?}"),
    }
}

/// Does `row` match the atom's terms under `env`? Returns the extended
/// environment on success.
fn unify(atom: &Atom, row: &[Value], env: &Env) -> Option<Env> {
    let mut env = env.clone();
    for (term, val) in atom.terms.iter().zip(row) {
        let val = as_int(val);
        match term {
            Term::Wildcard => {}
            Term::Const(c) => {
                if as_int(c) != val {
                    return None;
                }
            }
            Term::Var(name) => match env.get(name) {
                Some(&bound) if bound != val => return None,
                Some(_) => {}
                None => {
                    env.insert(name.clone(), val);
                }
            },
            Term::Expr(e) => {
                if eval_expr(e, &env) != val {
                    return None;
                }
            }
        }
    }
    Some(env)
}

fn solve(
    body: &[Literal],
    db: &BTreeMap<String, BTreeSet<Vec<Value>>>,
    env: Env,
    out: &mut Vec<Env>,
) {
    let Some((lit, rest)) = body.split_first() else {
        out.push(env);
        return;
    };
    match lit {
        Literal::Pos(a) => {
            for row in db.get(&a.rel).into_iter().flatten() {
                if let Some(next) = unify(a, row, &env) {
                    solve(rest, db, next, out);
                }
            }
        }
        Literal::Neg(a) => {
            let hit = db
                .get(&a.rel)
                .into_iter()
                .flatten()
                .any(|row| unify(a, row, &env).is_some());
            if !hit {
                solve(rest, db, env, out);
            }
        }
        Literal::Cmp { op, lhs, rhs } => {
            use reasm::datalog::Cmp;
            let l = eval_expr(lhs, &env);
            let r = eval_expr(rhs, &env);
            let ok = match op {
                Cmp::Eq => l == r,
                Cmp::Ne => l != r,
                Cmp::Lt => l < r,
                Cmp::Le => l <= r,
                Cmp::Gt => l > r,
                Cmp::Ge => l >= r,
            };
            if ok {
                solve(rest, db, env, out);
            }
        }
        other => panic!("generator does not emit {other:?}"),
    }
}

fn head_tuple(head: &Atom, env: &Env) -> Vec<Value> {
    head.terms
        .iter()
        .map(|t| match t {
            Term::Var(v) => Value::Int(env[v]),
            Term::Const(c) => c.clone(),
            Term::Expr(e) => Value::Int(eval_expr(e, env)),
            Term::Wildcard => panic!("wildcard in head"),
        })
        .collect()
}

/// Naive stratified fixpoint. `layers` lists the rule indices per stratum in
/// evaluation order, as recorded by the generator.
pub fn naive_eval(
    p: &Program,
    facts: &Database,
    layers: &[Vec<usize>],
) -> BTreeMap<String, BTreeSet<Vec<Value>>> {
    let mut db: BTreeMap<String, BTreeSet<Vec<Value>>> = facts.relations.clone();
    for layer in layers {
        loop {
            let mut changed = false;
            for &ri in layer {
                let rule = &p.rules[ri];
                let mut envs = Vec::new();
                solve(&rule.body, &db, Env::new(), &mut envs);
                for env in envs {
                    let tuple = head_tuple(&rule.head, &env);
                    if db.entry(rule.head.rel.clone()).or_default().insert(tuple) {
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
    db
}

pub struct Generated {
    pub program: Program,
    pub facts: Database,
    /// Rule indices per stratum, lowest first.
    pub layers: Vec<Vec<usize>>,
    pub derived: Vec<String>,
}

const VARS: [&str; 4] = ["A", "B", "C", "D"];

pub fn gen_program(seed: u64) -> Generated {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut p = Program::new();
    let mut facts = Database::new();

    // Input relations with small integer domains so joins actually hit.
    let inputs = ["in0", "in1"];
    for name in inputs {
        p.input(name, &[ColumnKind::Int, ColumnKind::Int]);
        for _ in 0..rng.gen_range(3..9) {
            facts.insert(
                name,
                vec![
                    Value::Int(rng.gen_range(-2..=6)),
                    Value::Int(rng.gen_range(-2..=6)),
                ],
            );
        }
    }

    let n_layers = rng.gen_range(1..=3);
    let mut lower: Vec<(String, usize)> = inputs.iter().map(|n| (n.to_string(), 2)).collect();
    let mut layers: Vec<Vec<usize>> = Vec::new();
    let mut derived = Vec::new();

    for layer in 0..n_layers {
        let mut current: Vec<(String, usize)> = Vec::new();
        for i in 0..rng.gen_range(1..=2usize) {
            let arity = rng.gen_range(1..=3usize);
            let name = format!("r{layer}_{i}");
            p.relation(&name, &vec![ColumnKind::Int; arity]);
            derived.push(name.clone());
            current.push((name, arity));
        }

        let mut rule_ids = Vec::new();
        for (name, arity) in &current {
            for k in 0..rng.gen_range(1..=2usize) {
                let mut body: Vec<Literal> = Vec::new();
                let mut bound: Vec<&str> = Vec::new();
                let mut recursive = false;

                for _ in 0..rng.gen_range(1..=3usize) {
                    // Positive atom over a lower layer, or this layer for
                    // recursion (kept apart so arithmetic heads stay finite).
                    let (rel, a) = if rng.gen_bool(0.3) {
                        recursive = true;
                        let pick = rng.gen_range(0..current.len());
                        current[pick].clone()
                    } else {
                        lower[rng.gen_range(0..lower.len())].clone()
                    };
                    let terms: Vec<Term> = (0..a)
                        .map(|_| match rng.gen_range(0..10) {
                            0..=6 => {
                                let v = VARS[rng.gen_range(0..VARS.len())];
                                if !bound.contains(&v) {
                                    bound.push(v);
                                }
                                Term::Var(v.to_string())
                            }
                            7..=8 => num(rng.gen_range(-2..=6)),
                            _ => wc(),
                        })
                        .collect();
                    body.push(pos(&rel, terms));
                }

                if rng.gen_bool(0.4) && !bound.is_empty() {
                    let (rel, a) = lower[rng.gen_range(0..lower.len())].clone();
                    let terms: Vec<Term> = (0..a)
                        .map(|_| {
                            if rng.gen_bool(0.7) {
                                Term::Var(bound[rng.gen_range(0..bound.len())].to_string())
                            } else {
                                num(rng.gen_range(-2..=6))
                            }
                        })
                        .collect();
                    body.push(neg(&rel, terms));
                }

                if rng.gen_bool(0.4) && !bound.is_empty() {
                    use reasm::datalog::Cmp;
                    let ops = [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge];
                    let lhs = evar(bound[rng.gen_range(0..bound.len())]);
                    let rhs = if rng.gen_bool(0.5) && bound.len() > 1 {
                        evar(bound[rng.gen_range(0..bound.len())])
                    } else {
                        eint(rng.gen_range(-2..=6))
                    };
                    body.push(cmp(ops[rng.gen_range(0..ops.len())], lhs, rhs));
                }

                let head_terms: Vec<Term> = (0..*arity)
                    .map(|_| {
                        if bound.is_empty() {
                            return num(rng.gen_range(-2..=6));
                        }
                        match rng.gen_range(0..10) {
                            0..=5 => Term::Var(bound[rng.gen_range(0..bound.len())].to_string()),
                            6 => num(rng.gen_range(-2..=6)),
                            _ if !recursive => {
                                let a = evar(bound[rng.gen_range(0..bound.len())]);
                                let b = if rng.gen_bool(0.5) {
                                    evar(bound[rng.gen_range(0..bound.len())])
                                } else {
                                    eint(rng.gen_range(-4..=8))
                                };
                                match rng.gen_range(0..3) {
                                    0 => ex(eadd(a, b)),
                                    1 => ex(esub(a, b)),
                                    _ => ex(emul(a, b)),
                                }
                            }
                            _ => Term::Var(bound[rng.gen_range(0..bound.len())].to_string()),
                        }
                    })
                    .collect();

                rule_ids.push(p.rules.len());
                p.rule(&format!("{name}:{k}"), atom(name, head_terms), body);
            }
        }
        layers.push(rule_ids);
        lower.extend(current);
    }

    Generated {
        program: p,
        facts,
        layers,
        derived,
    }
}

pub fn render_db(db: &Database) -> String {
    let mut out = String::new();
    for (rel, rows) in &db.relations {
        for row in rows {
            out.push_str(rel);
            for v in row {
                out.push('\t');
                out.push_str(&v.render());
            }
            out.push('\n');
        }
    }
    out
}
