pub mod domain;
pub mod linalg;
pub mod par;
pub mod systems;
pub mod integrators;
pub mod sampling;
pub mod dataset;
pub mod learners;
pub mod evaluation;
pub mod runmgr;
