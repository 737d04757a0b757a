//! Core library for synthesizing compound figures with exact subfigure
//! ground truth, decomposing real compound figures from external detections,
//! and evaluating detection, retrieval and embedding statistics.

pub mod bbox;
pub mod compositor;
pub mod curation;
pub mod detection;
pub mod embed;
pub mod error;
pub mod font;
pub mod io;
pub mod layout;
pub mod perturb;
pub mod seed;

pub use bbox::BBox;
pub use error::{Error, Result};
