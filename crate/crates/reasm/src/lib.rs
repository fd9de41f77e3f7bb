//! Reassembleable disassembler for x64 ELF binaries.
//!
//! Pipeline: encode the binary as relational facts, identify instruction
//! boundaries by fixpoint inference, run def-use / register-value /
//! data-access analyses, decide literal vs symbolic for every number, and
//! print assembly that survives stretching and reassembly.

pub mod analyses;
pub mod cli;
pub mod datalog;
pub mod emit;
pub mod facts;
pub mod frontend;
pub mod ibi;
pub mod symbolization;

pub mod testutil;

#[cfg(test)]
mod engine_smoke {
    use crate::datalog::build::*;
    use crate::datalog::*;

    fn edge_path_program() -> Program {
        let mut p = Program::new();
        p.input("edge", &[ColumnKind::Int, ColumnKind::Int]);
        p.relation("path", &[ColumnKind::Int, ColumnKind::Int]);
        p.rule("path:base", atom("path", vec![v("X"), v("Y")]), vec![pos("edge", vec![v("X"), v("Y")])]);
        p.rule(
            "path:step",
            atom("path", vec![v("X"), v("Z")]),
            vec![pos("edge", vec![v("X"), v("Y")]), pos("path", vec![v("Y"), v("Z")])],
        );
        p
    }

    fn db(rel: &str, rows: &[&[i64]]) -> Database {
        let mut d = Database::new();
        for row in rows {
            d.insert(rel, row.iter().map(|&i| Value::Int(i)).collect());
        }
        d
    }

    #[test]
    fn transitive_closure() {
        let p = edge_path_program();
        let facts = db("edge", &[&[1, 2], &[2, 3]]);
        let out = evaluate(&p, &facts, 1).unwrap();
        let path: Vec<Vec<Value>> = out.rows("path").cloned().collect();
        assert_eq!(path.len(), 3);
        assert!(out.contains("path", &[Value::Int(1), Value::Int(3)]));
    }

    #[test]
    fn empty_facts_empty_model() {
        let p = edge_path_program();
        let out = evaluate(&p, &Database::new(), 1).unwrap();
        assert_eq!(out.rows("path").count(), 0);
    }

    #[test]
    fn negation_cycle_rejected() {
        let mut p = Program::new();
        p.relation("p", &[ColumnKind::Int]);
        p.relation("q", &[ColumnKind::Int]);
        p.input("d", &[ColumnKind::Int]);
        p.rule(
            "p",
            atom("p", vec![v("X")]),
            vec![pos("d", vec![v("X")]), neg("q", vec![v("X")])],
        );
        p.rule(
            "q",
            atom("q", vec![v("A")]),
            vec![pos("d", vec![v("A")]), neg("p", vec![v("A")])],
        );
        match stratify(&p) {
            Err(EngineError::NegationCycle(rels)) => assert_eq!(rels, vec!["p", "q"]),
            other => panic!("expected negation cycle, got {other:?}"),
        }
    }

    #[test]
    fn ungrounded_head_rejected() {
        let mut p = Program::new();
        p.input("d", &[ColumnKind::Int]);
        p.relation("r", &[ColumnKind::Int, ColumnKind::Int]);
        p.rule(
            "r:bad",
            atom("r", vec![v("X"), v("Y")]),
            vec![pos("d", vec![v("X")])],
        );
        assert!(matches!(stratify(&p), Err(EngineError::UnboundVariable(l)) if l == "r:bad"));
    }

    #[test]
    fn aggregates_sum_and_max() {
        let mut p = Program::new();
        p.input("pts", &[ColumnKind::Int, ColumnKind::Int]);
        p.input("blk", &[ColumnKind::Int]);
        p.relation("total", &[ColumnKind::Int, ColumnKind::Int]);
        p.relation("best", &[ColumnKind::Int, ColumnKind::Int]);
        p.rule(
            "total",
            atom("total", vec![v("B"), v("T")]),
            vec![
                pos("blk", vec![v("B")]),
                Literal::Agg {
                    kind: AggKind::Sum,
                    rel: "pts".into(),
                    terms: vec![v("B"), wc()],
                    over: 1,
                    var: "T".into(),
                },
            ],
        );
        p.rule(
            "best",
            atom("best", vec![v("B"), v("T")]),
            vec![
                pos("blk", vec![v("B")]),
                Literal::Agg {
                    kind: AggKind::Max,
                    rel: "pts".into(),
                    terms: vec![v("B"), wc()],
                    over: 1,
                    var: "T".into(),
                },
            ],
        );
        let mut facts = db("pts", &[&[1, 2], &[1, 3], &[7, 9]]);
        facts.relations.extend(db("blk", &[&[1], &[2]]).relations);
        let out = evaluate(&p, &facts, 1).unwrap();
        assert!(out.contains("total", &[Value::Int(1), Value::Int(5)]));
        // Empty group: sum yields 0, max yields no tuple.
        assert!(out.contains("total", &[Value::Int(2), Value::Int(0)]));
        assert!(out.contains("best", &[Value::Int(1), Value::Int(3)]));
        assert_eq!(out.rows("best").count(), 1);
    }

    #[test]
    fn arithmetic_overflow_reported() {
        let mut p = Program::new();
        p.input("d", &[ColumnKind::Int]);
        p.relation("r", &[ColumnKind::Int]);
        p.rule(
            "r:boom",
            atom("r", vec![ex(emul(evar("X"), evar("X")))]),
            vec![pos("d", vec![v("X")])],
        );
        let facts = db("d", &[&[i64::MAX]]);
        match evaluate(&p, &facts, 1) {
            Err(EngineError::ArithmeticOverflow { rule, .. }) => assert_eq!(rule, "r:boom"),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn jobs_do_not_change_result() {
        let p = edge_path_program();
        let facts = db("edge", &[&[1, 2], &[2, 3], &[3, 4], &[4, 1], &[5, 6]]);
        let a = evaluate(&p, &facts, 1).unwrap();
        let b = evaluate(&p, &facts, 4).unwrap();
        assert_eq!(a, b);
    }
}
