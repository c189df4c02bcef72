//! Minimal pair generation from grammar templates, language-model
//! acceptability scoring, and learning-trajectory analysis.

pub mod analysis;
pub mod generator;
pub mod lexicon;
pub mod scoring;
pub mod template;
pub mod validation;
