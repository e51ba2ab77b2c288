//! SMT-LIB encoding of the allocation rules, solver invocation and model decoding.
//!
//! [`encode`] builds a [`ConstraintSet`] whose unique model is the allocation
//! trace for a fixed scenario, [`emit_smtlib`] renders it, [`solve`] runs an
//! external solver and [`extract_trace`] turns the model back into an
//! [`AllocationTrace`](crate::trace::AllocationTrace).

mod emit;
mod encode;
mod extract;
pub mod sexp;
mod solver;
pub mod term;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use emit::emit_smtlib;
pub use encode::{encode, EncodeError, COUNT_CONSTANT};
pub use extract::{extract_trace, ExtractError};
pub use solver::{solve, Model, SolverCommand, SolverError, SolverVerdict, Status, Value, DEFAULT_SOLVER, SOLVER_ENV};
pub use term::{Sort, Term};

/// Provenance of one assertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    /// A named model constraint such as `L1,3`, `L2` or `L3,2`.
    Constraint(&'static str),
    /// Else-case making an implication family exhaustive.
    Closure,
    /// Value carried over unchanged from `j-1`.
    Frame,
    /// State at `j = 0`.
    Initial,
    /// Fixed exogenous flag from the scenario.
    Scenario,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Constraint(name) => f.write_str(name),
            Tag::Closure => f.write_str("closure"),
            Tag::Frame => f.write_str("frame"),
            Tag::Initial => f.write_str("initial"),
            Tag::Scenario => f.write_str("scenario"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assertion {
    pub tag: Tag,
    pub term: Term,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    /// Comment lines placed at the top of the script.
    pub comments: Vec<String>,
    pub declarations: Vec<(String, Sort)>,
    pub assertions: Vec<Assertion>,
}

impl ConstraintSet {
    pub fn declare(&mut self, name: String, sort: Sort) {
        self.declarations.push((name, sort));
    }

    pub fn assert(&mut self, tag: Tag, term: Term) {
        if !term.is_true() {
            self.assertions.push(Assertion { tag, term });
        }
    }

    /// Assertions over transitions, i.e. everything except the initial state.
    /// This is the figure compared against the constraint-count bound.
    pub fn assertion_count(&self) -> usize {
        self.assertions
            .iter()
            .filter(|a| a.tag != Tag::Initial)
            .count()
    }

    pub fn count_by_tag(&self) -> std::collections::BTreeMap<String, usize> {
        let mut out = std::collections::BTreeMap::new();
        for a in &self.assertions {
            *out.entry(a.tag.to_string()).or_insert(0) += 1;
        }
        out
    }

    /// Checks that every referenced variable is declared exactly once.
    pub fn check_declarations(&self) -> Result<(), String> {
        let mut declared = BTreeSet::new();
        for (name, _) in &self.declarations {
            if !declared.insert(name.as_str()) {
                return Err(format!("{name} declared twice"));
            }
        }
        for a in &self.assertions {
            let mut missing = None;
            a.term.visit_vars(&mut |v| {
                if missing.is_none() && !declared.contains(v) {
                    missing = Some(v.to_string());
                }
            });
            if let Some(v) = missing {
                return Err(format!("{v} used in a {} assertion but never declared", a.tag));
            }
        }
        Ok(())
    }
}

/// Solver variable names. Slices and partitions use their 1-based ids.
pub mod names {
    pub fn slice(var: &str, slice_id: usize, j: usize) -> String {
        format!("{var}_{slice_id}_{j}")
    }

    pub fn service_entry(service_id: usize, j: usize) -> String {
        format!("e_{service_id}_{j}")
    }

    pub fn pt(partition_id: usize, j: usize) -> String {
        format!("pt_{partition_id}_{j}")
    }

    pub fn rp(j: usize) -> String {
        format!("rp_{j}")
    }

    pub fn ovr(j: usize) -> String {
        format!("ovr_{j}")
    }
}
