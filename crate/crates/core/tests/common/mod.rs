//! Shared test helpers: a naive full-tree enumerator and a JSON Schema
//! checker for the keyword subset used by the shipped result schema.

#![allow(dead_code)]

use hierex::field::Barrier;
use hierex::rng::{NodeStream, SeedSpec};
use hierex::{centering, ModelParams};
use serde_json::Value;

/// Every leaf of one replicate, by direct recursion over the tree.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveLeaf {
    pub energy: f64,
    pub prefix_sums: Vec<f64>,
    pub labels: Vec<u64>,
    pub below_u: bool,
    pub below_f: bool,
}

pub struct NaiveTree {
    pub leaves: Vec<NaiveLeaf>,
    pub any_above_u: bool,
    pub draws: u64,
}

/// Enumerates the whole tree. Node ranks are preorder indices with the root
/// at 0; the node of rank `r` takes the Gaussian at stream position `r`.
pub fn enumerate(params: &ModelParams, filter: &Barrier, seed: SeedSpec) -> NaiveTree {
    let k = params.scales() as usize;
    let b = params.branching();
    let sd = (params.bits_per_scale() as f64).sqrt();
    let u = Barrier::Envelope.table(params).unwrap();
    let f = filter.table(params).unwrap();
    // Nodes in a subtree whose root sits at depth d.
    let size = |d: usize| -> u64 { (0..=(k - d) as u32).map(|j| b.pow(j)).sum() };
    let stream = NodeStream::new(seed);
    let mut tree = NaiveTree {
        leaves: Vec::new(),
        any_above_u: false,
        draws: 0,
    };

    struct Frame {
        rank: u64,
        sums: Vec<f64>,
        labels: Vec<u64>,
    }
    let mut stack = vec![Frame {
        rank: 0,
        sums: vec![0.0],
        labels: vec![],
    }];
    while let Some(node) = stack.pop() {
        let depth = node.labels.len();
        if depth == k {
            let sums = node.sums;
            tree.leaves.push(NaiveLeaf {
                energy: sums[k],
                below_u: (1..=k).all(|j| sums[j] <= u[j]),
                below_f: (1..=k).all(|j| sums[j] <= f[j]),
                prefix_sums: sums,
                labels: node.labels,
            });
            continue;
        }
        for c in (0..b).rev() {
            let rank = node.rank + 1 + c * size(depth + 1);
            let s = node.sums[depth] + sd * stream.gaussian(rank);
            tree.draws += 1;
            if s > u[depth + 1] {
                tree.any_above_u = true;
            }
            let mut sums = node.sums.clone();
            sums.push(s);
            let mut labels = node.labels.clone();
            labels.push(c + 1);
            stack.push(Frame { rank, sums, labels });
        }
    }
    tree
}

pub fn recentered(params: &ModelParams, energy: f64) -> f64 {
    energy - centering(params).unwrap()
}

/// Checks `value` against `schema`, resolving `#/$defs/...` references in
/// `root`. Returns the first violation.
pub fn validate(root: &Value, schema: &Value, value: &Value, at: &str) -> Result<(), String> {
    let fail = |why: String| Err(format!("{at}: {why}"));
    let Some(obj) = schema.as_object() else {
        return Ok(());
    };
    if let Some(r) = obj.get("$ref").and_then(Value::as_str) {
        let name = r.strip_prefix("#/$defs/").expect("local refs only");
        return validate(root, &root["$defs"][name], value, at);
    }
    if let Some(options) = obj.get("oneOf").and_then(Value::as_array) {
        let passing = options
            .iter()
            .filter(|s| validate(root, s, value, at).is_ok())
            .count();
        if passing != 1 {
            return fail(format!("{passing} oneOf branches match"));
        }
    }
    if let Some(t) = obj.get("type") {
        let allowed: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => panic!("bad type keyword"),
        };
        let ok = allowed.iter().any(|&t| match t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            "null" => value.is_null(),
            "boolean" => value.is_boolean(),
            other => panic!("unknown type {other}"),
        });
        if !ok {
            return fail(format!("expected {allowed:?}, got {value}"));
        }
    }
    if let Some(c) = obj.get("const") {
        if c != value {
            return fail(format!("expected const {c}, got {value}"));
        }
    }
    if let Some(options) = obj.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return fail(format!("{value} not in enum"));
        }
    }
    if let Some(x) = value.as_f64() {
        if let Some(min) = obj.get("minimum").and_then(Value::as_f64) {
            if x < min {
                return fail(format!("{x} < minimum {min}"));
            }
        }
        if let Some(max) = obj.get("maximum").and_then(Value::as_f64) {
            if x > max {
                return fail(format!("{x} > maximum {max}"));
            }
        }
        if let Some(min) = obj.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= min {
                return fail(format!("{x} <= exclusiveMinimum {min}"));
            }
        }
    }
    if let Some(s) = value.as_str() {
        if let Some(min) = obj.get("minLength").and_then(Value::as_u64) {
            if (s.chars().count() as u64) < min {
                return fail(format!("string shorter than {min}"));
            }
        }
        if let Some(p) = obj.get("pattern").and_then(Value::as_str) {
            if !regex::Regex::new(p).unwrap().is_match(s) {
                return fail(format!("{s:?} does not match {p}"));
            }
        }
    }
    if let Some(items) = value.as_array() {
        if let Some(min) = obj.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                return fail(format!("fewer than {min} items"));
            }
        }
        if let Some(max) = obj.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max {
                return fail(format!("more than {max} items"));
            }
        }
        let prefix = obj.get("prefixItems").and_then(Value::as_array);
        for (i, item) in items.iter().enumerate() {
            let sub = match prefix.and_then(|p| p.get(i)) {
                Some(s) => Some(s),
                None => obj.get("items"),
            };
            if let Some(sub) = sub {
                validate(root, sub, item, &format!("{at}[{i}]"))?;
            }
        }
    }
    if let Some(map) = value.as_object() {
        if let Some(req) = obj.get("required").and_then(Value::as_array) {
            for key in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    return fail(format!("missing required `{key}`"));
                }
            }
        }
        let props = obj.get("properties").and_then(Value::as_object);
        for (key, v) in map {
            match props.and_then(|p| p.get(key)) {
                Some(sub) => validate(root, sub, v, &format!("{at}.{key}"))?,
                None => {
                    if obj.get("additionalProperties") == Some(&Value::Bool(false)) {
                        return fail(format!("unexpected property `{key}`"));
                    }
                }
            }
        }
    }
    Ok(())
}
