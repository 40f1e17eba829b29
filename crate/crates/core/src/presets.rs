//! Built-in example inputs: the order-2 and order-3 one-vertex trees with
//! their standard twists.

use serde_json::{json, Value};

use crate::automorphism::TwistSpec;
use crate::tree::{RawTree, RawVertex, SCHEMA};

pub fn tree22_raw() -> RawTree {
    RawTree {
        schema: SCHEMA.into(),
        n: 2,
        vertices: vec![RawVertex {
            id: "b".into(),
            parent: "a".into(),
            tau: 1,
            gamma: 2,
            beta: 2,
            alpha: 2,
        }],
        pairs: vec![],
    }
}

pub fn tree33_raw() -> RawTree {
    RawTree {
        schema: SCHEMA.into(),
        n: 3,
        vertices: vec![RawVertex {
            id: "b".into(),
            parent: "a".into(),
            tau: 1,
            gamma: 3,
            beta: 3,
            alpha: 3,
        }],
        pairs: vec![],
    }
}

/// Order-2 preset: one letter, twist symbol `c` (the map `x -> c x^-1`).
pub fn ex1() -> (RawTree, TwistSpec) {
    (tree22_raw(), TwistSpec::symbols([("b.0", "c")]))
}

/// Order-3 preset: two letters, twist symbols `c, d`
/// (the map `x0 -> c x1, x1 -> d (x0 x1)^-1`).
pub fn ex2() -> (RawTree, TwistSpec) {
    (
        tree33_raw(),
        TwistSpec::symbols([("b.0", "c"), ("b.1", "d")]),
    )
}

pub fn by_name(name: &str) -> Option<(RawTree, TwistSpec)> {
    match name {
        "ex1" => Some(ex1()),
        "ex2" => Some(ex2()),
        _ => None,
    }
}

/// Combined document consumed by `diagonalize -` and `verify -`.
pub fn preset_json(name: &str) -> Option<Value> {
    let (tree, twist) = by_name(name)?;
    Some(json!({
        "schema": SCHEMA,
        "tree": serde_json::to_value(&tree).unwrap(),
        "twist": twist.to_json(),
    }))
}
