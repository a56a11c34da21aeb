pub mod closed_form;
pub mod dense;
pub mod engine;
pub mod error;
pub mod figures;
pub mod optimizer;
pub mod primitives;
pub mod scaled;
pub mod structured;
pub mod types;
pub mod validation;
