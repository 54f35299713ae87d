//! Translate music genre tags between tagging systems.
//!
//! The pipeline has three legs:
//!
//! - a text normalizer ([`normalize`]) that reduces raw tags to canonical
//!   word forms, splitting concatenations like "poprock" along the way,
//! - a knowledge-based mapper ([`kb`]) that scores tags against a pivot
//!   genre ontology and derives a source-to-target translation table from
//!   the overlap of those scores,
//! - binary-relevance logistic models ([`logreg`]) trained on parallel
//!   annotations, optionally anchored to the knowledge-based table through
//!   a Gaussian prior (MAP training), which is how the two legs combine.
//!
//! [`corpus`] handles parallel annotation data (artist-grouped stratified
//! folds, nested subsampling), [`eval`] computes ranking metrics and runs
//! the learning-curve experiment, and [`cli`] wires everything into the
//! `tagtrans` binary.

// Negated float comparisons like `!(x > 0.0)` are deliberate throughout:
// they reject NaN along with out-of-range values, which `x <= 0.0` would
// silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kb;
pub mod logreg;
pub mod manifest;
pub mod normalize;
pub mod ontology;
pub mod tagsystem;
pub mod trie;
pub mod util;
pub mod zipf;

pub use error::{Error, Result};
