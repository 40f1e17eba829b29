//! Python bindings: tree validation, automorphism inspection,
//! diagonalisation and verification, mirroring the CLI surface.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use serde_json::Value;

use nfdiag::automorphism::{Automorphism, CheckMode, TwistSpec};
use nfdiag::diagonalizer::{diagonalize_recorded, FaultInjection, Provenance};
use nfdiag::tree::{NNTree, RawTree, VertexRef};
use nfdiag::verifier::{verify_all, VerifyConfig};

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(entries) => {
            let dict = PyDict::new(py);
            for (k, val) in entries {
                dict.set_item(k, value_to_py(py, val)?)?;
            }
            dict.into_any()
        }
    })
}

fn parse_tree(tree_json: &str) -> PyResult<(Arc<NNTree>, Option<String>)> {
    let value: Value = serde_json::from_str(tree_json)
        .map_err(|e| PyValueError::new_err(format!("parsing tree json: {e}")))?;
    let (tree_value, twist) = if value.get("tree").is_some() {
        (
            value["tree"].clone(),
            value.get("twist").map(|t| t.to_string()),
        )
    } else {
        (value, None)
    };
    let raw: RawTree = serde_json::from_value(tree_value)
        .map_err(|e| PyValueError::new_err(format!("parsing tree json: {e}")))?;
    let tree = NNTree::validate(&raw).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((Arc::new(tree), twist))
}

fn parse_twist(embedded: Option<String>, explicit: Option<&str>) -> PyResult<TwistSpec> {
    let text = match (explicit, embedded) {
        (Some(t), _) => Some(t.to_string()),
        (None, Some(t)) => Some(t),
        (None, None) => None,
    };
    match text {
        Some(t) => TwistSpec::from_json(&t).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(TwistSpec::none()),
    }
}

fn build(tree: Arc<NNTree>, twist: &TwistSpec) -> PyResult<Automorphism> {
    Automorphism::build(tree, twist, CheckMode::Checked)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn config(sizes: Option<Vec<usize>>, samples: u32, seed: u64, fault: Option<&str>) -> PyResult<VerifyConfig> {
    let fault = match fault {
        Some(name) => Some(
            FaultInjection::parse(name)
                .ok_or_else(|| PyValueError::new_err(format!("unknown fault {name:?}")))?,
        ),
        None => None,
    };
    Ok(VerifyConfig {
        sizes: sizes.unwrap_or_else(|| vec![3, 4, 5]),
        samples,
        seed,
        fault,
        ..Default::default()
    })
}

/// A validated tree together with its (untwisted) automorphism data.
#[pyclass(name = "Tree")]
struct PyTree {
    tree: Arc<NNTree>,
    embedded_twist: Option<String>,
}

#[pymethods]
impl PyTree {
    /// Accepts a bare tree document or a combined {tree, twist} document.
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let (tree, embedded_twist) = parse_tree(json)?;
        Ok(PyTree {
            tree,
            embedded_twist,
        })
    }

    #[getter]
    fn n(&self) -> u64 {
        self.tree.n
    }

    #[getter]
    fn n1(&self) -> u64 {
        self.tree.n1()
    }

    fn letters(&self) -> Vec<String> {
        self.tree
            .alphabet()
            .iter()
            .map(|(_, l)| l.name.clone())
            .collect()
    }

    fn order(&self) -> PyResult<u64> {
        let aut = build(self.tree.clone(), &TwistSpec::none())?;
        Ok(aut.order())
    }

    /// Per-vertex orbit periods: {vertex: (lambda, u)}.
    fn periods(&self) -> PyResult<BTreeMap<String, (u64, u64)>> {
        let aut = build(self.tree.clone(), &TwistSpec::none())?;
        Ok(self
            .tree
            .vertices()
            .iter()
            .enumerate()
            .map(|(vi, v)| {
                let info = aut.lambda(VertexRef::NonRoot(vi));
                (v.id.clone(), (info.lambda, info.u))
            })
            .collect())
    }

    /// Letter map of the (optionally twisted) automorphism, as text.
    #[pyo3(signature = (twist_json=None))]
    fn phi(&self, twist_json: Option<&str>) -> PyResult<BTreeMap<String, String>> {
        let twist = parse_twist(self.embedded_twist.clone(), twist_json)?;
        let aut = build(self.tree.clone(), &twist)?;
        let mut out = BTreeMap::new();
        for (id, letter) in aut.alphabet().clone().iter() {
            let coeff = aut.twist_of(id);
            let word = aut.image_word(id);
            let text = if coeff.is_one() {
                format!("{word}")
            } else {
                format!("{coeff} * {word}")
            };
            out.insert(letter.name.clone(), text);
        }
        Ok(out)
    }

    fn digest(&self) -> String {
        self.tree.digest()
    }

    fn to_json(&self) -> String {
        self.tree.to_json()
    }
}

/// Validates a tree document; returns the list of violations (empty = valid).
#[pyfunction]
fn validate(json: &str) -> PyResult<Vec<String>> {
    let value: Value = serde_json::from_str(json)
        .map_err(|e| PyValueError::new_err(format!("parsing tree json: {e}")))?;
    let tree_value = if value.get("tree").is_some() {
        value["tree"].clone()
    } else {
        value
    };
    let raw: RawTree = serde_json::from_value(tree_value)
        .map_err(|e| PyValueError::new_err(format!("parsing tree json: {e}")))?;
    match NNTree::validate(&raw) {
        Ok(_) => Ok(vec![]),
        Err(e) => Ok(e.violations().iter().map(|v| v.to_string()).collect()),
    }
}

/// One of the built-in examples ("ex1", "ex2") as a combined JSON document.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    nfdiag::presets::preset_json(name)
        .map(|v| serde_json::to_string_pretty(&v).unwrap())
        .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))
}

/// Synthesizes the diagonal generating set; returns the same document as the
/// CLI's `diagonalize` subcommand, as nested dicts.
#[pyfunction]
#[pyo3(signature = (tree_json, twist_json=None, sizes=None, samples=5, seed=0))]
fn diagonalize<'py>(
    py: Python<'py>,
    tree_json: &str,
    twist_json: Option<&str>,
    sizes: Option<Vec<usize>>,
    samples: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (tree, embedded) = parse_tree(tree_json)?;
    let twist = parse_twist(embedded, twist_json)?;
    let aut = build(tree.clone(), &twist)?;
    let mut records = Vec::new();
    let diag = diagonalize_recorded(&aut, None, &mut records)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    for r in &records {
        if !r.passed {
            return Err(PyRuntimeError::new_err(format!(
                "post-check {} failed: {}",
                r.name, r.detail
            )));
        }
    }
    let report = verify_all(tree.clone(), &twist, &config(sizes, samples, seed, None)?);
    let generators: Vec<Value> = diag
        .basis
        .generators
        .iter()
        .map(|g| {
            let provenance = match &g.provenance {
                Provenance::Vertex { vertex, j, m } => serde_json::json!({
                    "block": "vertex",
                    "vertex": tree.vertices()[*vertex].id,
                    "j": j,
                    "m": m,
                }),
                Provenance::Pair { pair, m } => {
                    let pf = &tree.pairs()[*pair];
                    serde_json::json!({
                        "block": "pair",
                        "e": tree.vertex_id(pf.e),
                        "f": tree.vertex_id(pf.f),
                        "index": pf.index,
                        "m": m,
                    })
                }
            };
            serde_json::json!({
                "name": g.name,
                "eigenvalue": g.eigenvalue.to_string(),
                "provenance": provenance,
                "expr": g.expr.to_json(),
            })
        })
        .collect();
    let inverse: serde_json::Map<String, Value> = diag
        .basis
        .inverse
        .iter()
        .map(|(k, v)| (k.clone(), v.to_json()))
        .collect();
    let doc = serde_json::json!({
        "schema": nfdiag::tree::SCHEMA,
        "n1": tree.n1(),
        "conductor": aut.ctx().conductor(),
        "generators": generators,
        "inverse": Value::Object(inverse),
        "report": report.to_json(),
    });
    value_to_py(py, &doc)
}

/// Runs the verification suite; returns the report as nested dicts.
#[pyfunction]
#[pyo3(signature = (tree_json, twist_json=None, sizes=None, samples=5, seed=0, inject_fault=None))]
fn verify<'py>(
    py: Python<'py>,
    tree_json: &str,
    twist_json: Option<&str>,
    sizes: Option<Vec<usize>>,
    samples: u32,
    seed: u64,
    inject_fault: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let (tree, embedded) = parse_tree(tree_json)?;
    let twist = parse_twist(embedded, twist_json)?;
    let report = verify_all(tree, &twist, &config(sizes, samples, seed, inject_fault)?);
    value_to_py(py, &report.to_json())
}

#[pymodule]
fn nfdiag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(diagonalize, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
