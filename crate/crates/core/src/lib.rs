//! Joint reranking of diverse segmentation and parse hypotheses on synthetic
//! captioned scenes.
//!
//! The pipeline: `scenegen` builds captioned grid worlds with exact ground
//! truth, `parser` produces k-best PCFG parses with prepositional
//! dependencies, `segmenter` produces diverse CRF labelings, `features`
//! turns a (segmentation, parse) pair into score + consistency features,
//! `mediator` scores, selects and learns over hypothesis pairs, and
//! `harness` drives cross-validated experiments over the file formats.

pub mod grid;
pub mod mediator;
pub mod features;
pub mod parser;
pub mod scenegen;
pub mod segmenter;
