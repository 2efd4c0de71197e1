//! Coarse geometry of lamplighter groups: word metrics on finitely generated
//! base groups, lamplighter distances, quasi-isometries with scaling factors,
//! and maps of the form `(c, p) ↦ (α(c), β(p))` between lamplighters.

pub mod error;
pub mod groups;
pub mod sets;
pub mod wreath;
pub mod qi;
pub mod aptolic;

mod dsu;
mod matching;
mod tsp;

pub use error::{LabError, Result};
pub use groups::{BaseModel, Budget, GroupElement, GroupModel};
pub use sets::FiniteSubset;
pub use wreath::{Colouring, WreathElement, WreathModel};

/// Exact rational used for boundary ratios and scaling factors.
pub type Rational = num_rational::Ratio<i64>;
