//! Core of the tagdistill annotation pipeline: clinical scenarios, corpus and
//! segment handling, teacher prompt construction and reply parsing, the
//! native hashed-feature student classifier, and evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the width for callers that do not care.

pub mod corpus;
pub mod eval;
pub mod hashing;
pub mod scalar;
pub mod scenario;
pub mod span;
pub mod student;
pub mod teacher;
pub mod text;

pub use scalar::Scalar;

pub type StudentModelF64 = student::StudentModel<f64>;
pub type StudentModelF32 = student::StudentModel<f32>;
pub type TrainingConfigF64 = student::TrainingConfig<f64>;
pub type ClassWeightsF64 = corpus::ClassWeights<f64>;
pub type MetricsReportF64 = eval::MetricsReport<f64>;
