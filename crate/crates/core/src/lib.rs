pub mod cli;
pub mod corpus;
pub mod corruption;
pub mod eval;
pub mod model;
pub mod note;
pub mod scoring;
pub mod study;
