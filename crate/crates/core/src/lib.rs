//! Motivic measures, tube volumes and Vitushkin variations for definable
//! subsets of k((t))^n, with a point-counting oracle over finite residue fields.

pub mod error;
pub mod k;
pub mod groth;
pub mod mot_ring;
pub mod presburger;
pub mod series;
pub mod dsl;
pub mod measure;
pub mod specialize;
pub mod riso;
pub mod vitushkin;
pub mod preorder;
pub mod tensor;

pub use error::{MvError, Result};
