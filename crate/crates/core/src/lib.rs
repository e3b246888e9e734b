//! Numerical toolkit for studying the loss surface of single-layer-plus-shortcut
//! networks trained with surrogate losses.
//!
//! The crate is organised bottom-up: [`numerics`] and the scalar building
//! blocks ([`losses`], [`activations`]) feed [`models`]; [`landscape`] trains and
//! certifies, [`constructions`] builds explicit spurious minima, [`conditions`]
//! decides the dataset conditions for quadratic neurons, and [`population`]
//! holds the closed-form quadratic-loss examples used by the CLI.

pub mod activations;
pub mod conditions;
pub mod constructions;
pub mod datagen;
pub mod error;
pub mod landscape;
pub mod losses;
pub mod models;
pub mod numerics;
pub mod population;

pub use error::{Error, Result};
