//! Decision procedures for cluster-extensible transitive modal logics with
//! parameters: consequence, projectivity, admissibility of rules,
//! unification, and bases of admissible rules.
//!
//! Modules build on each other bottom-up:
//! [`formula`] → [`kripke`] → [`logic`] → [`typecore`] → [`projective`] →
//! [`admissibility`] → [`rules`].

pub mod admissibility;
pub mod formula;
pub mod kripke;
pub mod logic;
pub mod projective;
pub mod rules;
pub mod typecore;

pub use formula::{Atom, AtomKind, Formula, Rule, Substitution};
pub use kripke::Model;
pub use logic::{ClusterType, Count, ExtensionCondition, LogicSpec, ParamMode};
