//! Diagnostics for annotation artifacts in NLI and defeasible-NLI data.
//!
//! The crate covers the offline half of a context-editing study:
//!
//! * [`data`]: dataset records and the context/target decomposition,
//! * [`ngram`]: a hashed bag-of-n-grams lexical classifier,
//! * [`calibration`]: temperature scaling of model logits,
//! * [`probe`]: artifact-candidate selection, edit sampling, blind
//!   validation and Cohen's kappa,
//! * [`analytics`]: confidence shifts, stratified accuracy and ternary
//!   heatmaps.

pub mod analytics;
pub mod calibration;
pub mod data;
mod error;
pub mod meta;
pub mod ngram;
pub mod probe;

pub use calibration::{PredictionRecord, Temperature};
pub use data::{Dataset, InputView, Instance, Label, Split, Task, TextField};
pub use error::{Deficit, Error, Result};
pub use ngram::{NgramHyperparams, NgramModel};
