//! JSON file formats for instances, allocations, and traces, plus the
//! error type that carries the process exit code.
//!
//! Values serialize as plain integers when integral and as `"p/q"` strings
//! otherwise — never as floats — so files round-trip exactly.  Malformed or
//! internally inconsistent files are rejected with an error that names the
//! offending position.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use fairdiv_core::rational::{format_rational, parse_rational};
use fairdiv_core::{Allocation, GoodSet, Instance, Model, Rational};

/// Process exit codes, kept in one place so every command agrees:
/// `1` a verification or fairness claim failed, `2` malformed input or an
/// infeasible/over-budget request, `3` the instance lies outside the chosen
/// algorithm's class, `4` an internal invariant broke (a bug).
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_CLASS_MISMATCH: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// A command error carrying the message to print and the exit code.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn failed(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_FAILED,
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_MALFORMED,
        }
    }

    pub fn class_mismatch(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_CLASS_MISMATCH,
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_INTERNAL,
        }
    }
}

/// On-disk instance format.
///
/// `values` is an `num_agents × num_goods` matrix of non-negative integers
/// or `"p/q"` strings.  Restricted instances may carry their certificate:
/// `inherent[g]` is the shared value of good `g` and `relevance[g]` the
/// agents who hold it; both arrays must agree with `values` exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub model: String,
    pub num_agents: usize,
    pub num_goods: usize,
    pub values: Vec<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inherent: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Vec<Vec<usize>>>,
}

/// On-disk allocation format: the leftover pool plus one bundle per agent.
/// Together they must partition the instance's goods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationFile {
    pub pool: Vec<usize>,
    pub bundles: Vec<Vec<usize>>,
}

/// Converts one JSON value into an exact non-negative rational.
fn rational_from_json(value: &Value, position: &str) -> Result<Rational, CliError> {
    let parsed = match value {
        Value::Number(n) => {
            let int = n.as_u64().ok_or_else(|| {
                CliError::malformed(format!(
                    "{position}: numeric values must be non-negative integers, got {n}"
                ))
            })?;
            parse_rational(&int.to_string())
        }
        Value::String(s) => parse_rational(s),
        other => {
            return Err(CliError::malformed(format!(
                "{position}: expected an integer or a \"p/q\" string, got {other}"
            )))
        }
    };
    let r = parsed.map_err(|e| CliError::malformed(format!("{position}: {e}")))?;
    if r < Rational::from_integer(0.into()) {
        return Err(CliError::malformed(format!(
            "{position}: values must be non-negative, got {}",
            format_rational(&r)
        )));
    }
    Ok(r)
}

/// Renders a rational as a JSON integer when integral, else a `"p/q"` string.
fn rational_to_json(r: &Rational) -> Value {
    if r.is_integer() {
        if let Ok(n) = u64::try_from(r.numer().clone()) {
            return Value::from(n);
        }
    }
    Value::from(format_rational(r))
}

/// Parses and fully validates an instance file: shape, value syntax,
/// certificate consistency, and membership in the declared model class.
pub fn instance_from_file(file: &InstanceFile) -> Result<Instance, CliError> {
    let model = Model::from_str(&file.model).map_err(|e| CliError::malformed(e))?;
    if file.values.len() != file.num_agents {
        return Err(CliError::malformed(format!(
            "values has {} rows, num_agents says {}",
            file.values.len(),
            file.num_agents
        )));
    }
    let mut rows = Vec::with_capacity(file.num_agents);
    for (i, row) in file.values.iter().enumerate() {
        if row.len() != file.num_goods {
            return Err(CliError::malformed(format!(
                "values[{i}] has {} entries, num_goods says {}",
                row.len(),
                file.num_goods
            )));
        }
        let mut parsed = Vec::with_capacity(file.num_goods);
        for (g, cell) in row.iter().enumerate() {
            parsed.push(rational_from_json(cell, &format!("values[{i}][{g}]"))?);
        }
        rows.push(parsed);
    }
    let instance =
        Instance::new(rows).map_err(|e| CliError::malformed(format!("bad value matrix: {e}")))?;
    check_certificate_consistency(file, &instance)?;
    check_model_membership(model, &instance)?;
    Ok(instance)
}

/// When the file carries `inherent`/`relevance`, every entry of `values`
/// must equal the inherent value on relevant goods and zero elsewhere.
fn check_certificate_consistency(
    file: &InstanceFile,
    instance: &Instance,
) -> Result<(), CliError> {
    let (inherent, relevance) = match (&file.inherent, &file.relevance) {
        (None, None) => return Ok(()),
        (Some(i), Some(r)) => (i, r),
        _ => {
            return Err(CliError::malformed(
                "inherent and relevance must be present together",
            ))
        }
    };
    if inherent.len() != file.num_goods || relevance.len() != file.num_goods {
        return Err(CliError::malformed(format!(
            "inherent/relevance must list all {} goods",
            file.num_goods
        )));
    }
    for g in 0..file.num_goods {
        let shared = rational_from_json(&inherent[g], &format!("inherent[{g}]"))?;
        let holders: BTreeSet<usize> = relevance[g].iter().copied().collect();
        if let Some(&bad) = holders.iter().find(|&&a| a >= file.num_agents) {
            return Err(CliError::malformed(format!(
                "relevance[{g}] names agent {bad}, but there are only {} agents",
                file.num_agents
            )));
        }
        for agent in 0..file.num_agents {
            let expected = if holders.contains(&agent) {
                shared.clone()
            } else {
                Rational::from_integer(0.into())
            };
            if *instance.singleton(agent, g) != expected {
                return Err(CliError::malformed(format!(
                    "values[{agent}][{g}] = {} contradicts inherent[{g}]/relevance[{g}]",
                    format_rational(instance.singleton(agent, g))
                )));
            }
        }
    }
    Ok(())
}

/// The declared model token must be true of the matrix.
fn check_model_membership(model: Model, instance: &Instance) -> Result<(), CliError> {
    let bounds = instance.classify_bounds();
    match model {
        Model::RestrictedP2 => {
            if instance.check_restricted_additive().is_none() {
                return Err(CliError::malformed(
                    "model restricted_p2, but the values are not restricted \
                     (some good has two distinct positive values)",
                ));
            }
            if bounds.p > 2 {
                return Err(CliError::malformed(format!(
                    "model restricted_p2, but some good interests {} agents",
                    bounds.p
                )));
            }
        }
        Model::RestrictedAny => {
            if instance.check_restricted_additive().is_none() {
                return Err(CliError::malformed(
                    "model restricted_any, but the values are not restricted",
                ));
            }
        }
        Model::AdditiveInfty1 => {
            if bounds.q > 1 {
                return Err(CliError::malformed(format!(
                    "model additive_infty1, but some agent pair shares {} goods",
                    bounds.q
                )));
            }
        }
        Model::AdditivePq => {}
    }
    Ok(())
}

/// Serializes an instance under the given model token, attaching the
/// restricted certificate when one exists for a restricted model.
pub fn instance_to_file(instance: &Instance, model: Model) -> InstanceFile {
    let values = instance
        .rows()
        .iter()
        .map(|row| row.iter().map(rational_to_json).collect())
        .collect();
    let (inherent, relevance) = if matches!(model, Model::RestrictedP2 | Model::RestrictedAny) {
        match instance.check_restricted_additive() {
            Some(cert) => (
                Some(cert.inherent.iter().map(rational_to_json).collect()),
                Some(
                    cert.relevance
                        .iter()
                        .map(|set| set.iter().copied().collect())
                        .collect(),
                ),
            ),
            None => (None, None),
        }
    } else {
        (None, None)
    };
    InstanceFile {
        model: model.token().to_string(),
        num_agents: instance.num_agents(),
        num_goods: instance.num_goods(),
        values,
        inherent,
        relevance,
    }
}

/// Builds the core allocation, enforcing the partition invariant.
pub fn allocation_from_file(
    file: &AllocationFile,
    instance: &Instance,
) -> Result<Allocation, CliError> {
    if file.bundles.len() != instance.num_agents() {
        return Err(CliError::malformed(format!(
            "allocation has {} bundles, instance has {} agents",
            file.bundles.len(),
            instance.num_agents()
        )));
    }
    let pool: GoodSet = file.pool.iter().copied().collect();
    let bundles: Vec<GoodSet> = file
        .bundles
        .iter()
        .map(|b| b.iter().copied().collect())
        .collect();
    Allocation::new(pool, bundles, instance.num_goods())
        .map_err(|e| CliError::malformed(format!("bad allocation: {e}")))
}

pub fn allocation_to_file(alloc: &Allocation) -> AllocationFile {
    AllocationFile {
        pool: alloc.pool().iter().copied().collect(),
        bundles: alloc
            .bundles()
            .iter()
            .map(|b| b.iter().copied().collect())
            .collect(),
    }
}

/// Reads and parses a JSON file; syntax errors keep serde's line/column.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::malformed(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))
}

pub fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let file: InstanceFile = read_json(path)?;
    instance_from_file(&file)
}

pub fn load_allocation(path: &Path, instance: &Instance) -> Result<Allocation, CliError> {
    let file: AllocationFile = read_json(path)?;
    allocation_from_file(&file, instance)
}

/// Pretty JSON plus a trailing newline; byte-stable for identical input.
pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Writes to the file when given, else to stdout.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::malformed(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// One line of the trace file.
#[derive(Serialize)]
struct TraceLine<'a> {
    step: usize,
    rule: &'a str,
    agents: &'a [usize],
    goods: &'a [usize],
    phi: &'a str,
}

/// JSON-lines encoding of a trace: one rule application (or micro-step, or
/// the final step) per line, with the exact potential snapshot.
pub fn trace_to_jsonl(trace: &fairdiv_core::framework::Trace) -> String {
    let mut out = String::new();
    for entry in &trace.entries {
        let line = TraceLine {
            step: entry.step,
            rule: &entry.rule,
            agents: &entry.agents,
            goods: &entry.goods,
            phi: &entry.phi,
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}
