//! Participatory budgeting rules, cohesive-group mining and Strong-EJR
//! fairness metrics with exact arithmetic.

pub mod cohesion;
pub mod data;
pub mod dsl;
pub mod fairness;
pub mod model;
pub mod rules;
pub mod testkit;
