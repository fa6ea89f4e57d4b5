//! Randomized and exhaustive verification of the entropy inequalities over
//! seeded corpora, with deterministic JSON reports.

pub mod checks;
pub mod corpus;
pub mod report;
pub mod suites;

pub use checks::{Outcome, Window, TOL};
pub use corpus::{CorpusSpec, Sample, Structure};
pub use report::{Report, Summary, TrialRecord};
pub use suites::{default_corpus, run_suite, SuiteOptions, SUITES};
