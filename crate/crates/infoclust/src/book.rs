//! Compiles the guide's code snippets as doc-tests, so `cargo test` keeps
//! the book in sync with the library. One module per chapter makes failures
//! point at the right file.

#[doc = include_str!("../../../book/src/information-losses.md")]
mod information_losses {}

#[doc = include_str!("../../../book/src/transformations.md")]
mod transformations {}

#[doc = include_str!("../../../book/src/model-and-training.md")]
mod model_and_training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
mod evaluation {}

#[doc = include_str!("../../../book/src/experiments.md")]
mod experiments {}
