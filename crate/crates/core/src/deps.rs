//! Lazy field dependency graph.
//!
//! Fields are nodes; each derived field has exactly one [`Rule`] computing it
//! from its inputs. Every field carries a version counter. A rule remembers
//! the input versions it last ran against, and [`DepGraph::request`] re-runs
//! only the ancestor rules whose recorded versions are stale.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::kernel::{run_compiled, BoundKernel, KernelError};
use crate::mesh::{Field, FieldError, FieldSet};
use crate::quantity::{Dimension, Quantity};
use crate::stencil::{LaplacianOp, StencilError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("rule cycle: {}", .0.join("→"))]
    CycleDetected(Vec<String>),
    #[error("field `{field}` already has rule `{rule}`")]
    DuplicateOutputRule { field: String, rule: String },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("rule `{0}` reads its own output")]
    AliasedOutput(String),
    #[error("`{0}` is computed by a rule and cannot be written directly")]
    WriteToDerivedField(String),
    #[error("rule `{rule}`: output `{field}` has unit {declared} but the rule produces {produced}")]
    UnitMismatch {
        rule: String,
        field: String,
        declared: Dimension,
        produced: Dimension,
    },
    #[error("rule `{rule}` failed: {message}")]
    Action { rule: String, message: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

type NativeFn = Box<dyn FnMut(&FieldSet, &mut Field) -> Result<(), String> + Send>;

/// What a rule does when it runs.
pub enum Action {
    Kernel(BoundKernel),
    /// `output = scale * laplacian(input)`.
    Laplacian {
        op: LaplacianOp,
        input: String,
        scale: Quantity,
    },
    /// Arbitrary update; inputs must be declared on the rule.
    Native(NativeFn),
}

impl Action {
    pub fn native<F>(f: F) -> Action
    where
        F: FnMut(&FieldSet, &mut Field) -> Result<(), String> + Send + 'static,
    {
        Action::Native(Box::new(f))
    }

    fn run(&mut self, fields: &FieldSet, out: &mut Field) -> Result<(), EngineError> {
        match self {
            Action::Kernel(bk) => run_compiled(bk, fields, out)?,
            Action::Laplacian { op, input, scale } => {
                op.apply_scaled(fields.get(input)?, out, scale.value())?;
            }
            Action::Native(f) => f(fields, out).map_err(|message| EngineError::Action {
                rule: String::new(),
                message,
            })?,
        }
        Ok(())
    }
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Kernel(bk) => write!(f, "Kernel({})", bk.output()),
            Action::Laplacian { input, scale, .. } => write!(f, "Laplacian({input}, {scale})"),
            Action::Native(_) => f.write_str("Native"),
        }
    }
}

#[derive(Debug)]
pub struct Rule {
    pub id: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub action: Action,
}

impl Rule {
    pub fn new(id: impl Into<String>, inputs: &[&str], output: impl Into<String>, action: Action) -> Rule {
        Rule {
            id: id.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.into(),
            action,
        }
    }

    /// A rule running a bound kernel; inputs are taken from the kernel.
    pub fn kernel(id: impl Into<String>, bk: BoundKernel) -> Rule {
        let inputs = bk.input_names().map(str::to_string).collect();
        Rule {
            id: id.into(),
            inputs,
            output: bk.output().to_string(),
            action: Action::Kernel(bk),
        }
    }
}

#[derive(Debug)]
struct RuleState {
    rule: Rule,
    last_inputs: Option<Vec<u64>>,
    compute_count: u64,
}

/// One executed rule, as reported when tracing is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecEvent {
    pub rule: String,
    pub output: String,
    pub old_version: u64,
    pub new_version: u64,
}

impl fmt::Display for ExecEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "exec {} out={} v{}→{}",
            self.rule, self.output, self.old_version, self.new_version
        )
    }
}

#[derive(Debug)]
pub struct DepGraph {
    fields: FieldSet,
    versions: BTreeMap<String, u64>,
    rules: Vec<RuleState>,
    producer: BTreeMap<String, usize>,
    trace: Option<Vec<ExecEvent>>,
}

impl DepGraph {
    pub fn new(fields: FieldSet) -> DepGraph {
        let versions = fields.names().map(|n| (n.to_string(), 0)).collect();
        DepGraph {
            fields,
            versions,
            rules: Vec::new(),
            producer: BTreeMap::new(),
            trace: None,
        }
    }

    pub fn fields(&self) -> &FieldSet {
        &self.fields
    }

    /// Read a field without bringing it up to date.
    pub fn field(&self, name: &str) -> Result<&Field, EngineError> {
        Ok(self.fields.get(name)?)
    }

    /// Add a new source field after construction.
    pub fn add_field(&mut self, field: Field) -> Result<(), EngineError> {
        let name = field.name().to_string();
        self.fields.insert(field)?;
        self.versions.insert(name, 0);
        Ok(())
    }

    pub fn version(&self, name: &str) -> Result<u64, EngineError> {
        self.versions
            .get(name)
            .copied()
            .ok_or_else(|| EngineError::UnknownField(name.to_string()))
    }

    pub fn compute_count(&self, rule_id: &str) -> Option<u64> {
        self.rules.iter().find(|r| r.rule.id == rule_id).map(|r| r.compute_count)
    }

    pub fn rule_ids(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.rule.id.as_str())
    }

    pub fn is_derived(&self, name: &str) -> bool {
        self.producer.contains_key(name)
    }

    /// Start collecting [`ExecEvent`]s.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn drain_trace(&mut self) -> Vec<ExecEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Register a rule, rejecting duplicates, unknown fields, unit conflicts
    /// and cycles.
    pub fn add_rule(&mut self, rule: Rule) -> Result<(), EngineError> {
        for name in rule.inputs.iter().chain(std::iter::once(&rule.output)) {
            if !self.fields.contains(name) {
                return Err(EngineError::UnknownField(name.clone()));
            }
        }
        if rule.inputs.contains(&rule.output) {
            return Err(EngineError::AliasedOutput(rule.id.clone()));
        }
        if let Some(&existing) = self.producer.get(&rule.output) {
            return Err(EngineError::DuplicateOutputRule {
                field: rule.output.clone(),
                rule: self.rules[existing].rule.id.clone(),
            });
        }
        self.check_units(&rule)?;
        if let Some(path) = self.find_cycle(&rule) {
            return Err(EngineError::CycleDetected(path));
        }
        self.producer.insert(rule.output.clone(), self.rules.len());
        self.rules.push(RuleState {
            rule,
            last_inputs: None,
            compute_count: 0,
        });
        Ok(())
    }

    fn check_units(&self, rule: &Rule) -> Result<(), EngineError> {
        let declared = self.fields.get(&rule.output)?.unit();
        let produced = match &rule.action {
            Action::Kernel(bk) => bk.output_unit(),
            Action::Laplacian { input, scale, .. } => {
                Some(self.fields.get(input)?.unit() + scale.dim() - Dimension::LENGTH.pow(2))
            }
            Action::Native(_) => None,
        };
        match produced {
            Some(p) if p != declared => Err(EngineError::UnitMismatch {
                rule: rule.id.clone(),
                field: rule.output.clone(),
                declared,
                produced: p,
            }),
            _ => Ok(()),
        }
    }

    /// Path `output → ... → input → output` if adding `rule` closes a loop.
    fn find_cycle(&self, rule: &Rule) -> Option<Vec<String>> {
        // walk upstream from each input looking for the new rule's output
        fn upstream(g: &DepGraph, field: &str, target: &str, seen: &mut HashSet<String>, path: &mut Vec<String>) -> bool {
            path.push(field.to_string());
            if field == target {
                return true;
            }
            if seen.insert(field.to_string()) {
                if let Some(&r) = g.producer.get(field) {
                    for input in &g.rules[r].rule.inputs {
                        if upstream(g, input, target, seen, path) {
                            return true;
                        }
                    }
                }
            }
            path.pop();
            false
        }
        let mut seen = HashSet::new();
        for input in &rule.inputs {
            let mut path = Vec::new();
            if upstream(self, input, &rule.output, &mut seen, &mut path) {
                // path runs input ← ... ← output; report it in data-flow order
                path.reverse();
                path.push(rule.output.clone());
                return Some(path);
            }
        }
        None
    }

    /// Mutate a source field and bump its version.
    pub fn write<F>(&mut self, name: &str, update: F) -> Result<(), EngineError>
    where
        F: FnOnce(&mut Field),
    {
        if self.producer.contains_key(name) {
            return Err(EngineError::WriteToDerivedField(name.to_string()));
        }
        update(self.fields.get_mut(name)?);
        *self.versions.get_mut(name).expect("every field has a version") += 1;
        Ok(())
    }

    /// Bring `name` up to date, running only stale ancestor rules.
    pub fn request(&mut self, name: &str) -> Result<&Field, EngineError> {
        if !self.fields.contains(name) {
            return Err(EngineError::UnknownField(name.to_string()));
        }
        let mut visited = HashSet::new();
        self.refresh(name, &mut visited)?;
        Ok(self.fields.get(name)?)
    }

    fn refresh(&mut self, name: &str, visited: &mut HashSet<String>) -> Result<(), EngineError> {
        if !visited.insert(name.to_string()) {
            return Ok(());
        }
        let Some(&r) = self.producer.get(name) else {
            return Ok(());
        };
        let inputs = self.rules[r].rule.inputs.clone();
        for input in &inputs {
            self.refresh(input, visited)?;
        }
        let current: Vec<u64> = inputs.iter().map(|i| self.versions[i]).collect();
        if self.rules[r].last_inputs.as_ref() == Some(&current) {
            return Ok(());
        }
        self.execute(r)?;
        self.rules[r].last_inputs = Some(current);
        Ok(())
    }

    fn execute(&mut self, r: usize) -> Result<(), EngineError> {
        let state = &mut self.rules[r];
        let output = state.rule.output.clone();
        let mut out = self.fields.take(&output)?;
        let result = state.rule.action.run(&self.fields, &mut out);
        self.fields.insert(out)?;
        result.map_err(|e| match e {
            EngineError::Action { message, .. } => EngineError::Action {
                rule: state.rule.id.clone(),
                message,
            },
            other => other,
        })?;
        state.compute_count += 1;
        let version = self.versions.get_mut(&output).expect("every field has a version");
        let old = *version;
        *version += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(ExecEvent {
                rule: state.rule.id.clone(),
                output,
                old_version: old,
                new_version: old + 1,
            });
        }
        Ok(())
    }

    /// Run every rule once in dependency order, regardless of staleness.
    /// Useful as a reference for the lazy path.
    pub fn recompute_all(&mut self) -> Result<(), EngineError> {
        let mut order = Vec::new();
        let mut done = HashSet::new();
        fn visit(g: &DepGraph, r: usize, done: &mut HashSet<usize>, order: &mut Vec<usize>) {
            if !done.insert(r) {
                return;
            }
            for input in &g.rules[r].rule.inputs {
                if let Some(&p) = g.producer.get(input) {
                    visit(g, p, done, order);
                }
            }
            order.push(r);
        }
        for r in 0..self.rules.len() {
            visit(self, r, &mut done, &mut order);
        }
        for r in order {
            self.execute(r)?;
            let current = self.rules[r].rule.inputs.iter().map(|i| self.versions[i]).collect();
            self.rules[r].last_inputs = Some(current);
        }
        Ok(())
    }
}
