// mdbook cannot run listings that depend on a workspace crate, so each
// chapter is attached to an empty module here and `cargo test --doc` runs
// its code blocks against `bandit_design`. One module per chapter keeps
// failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("src/calibration.md")]
pub mod calibration {}
#[doc = include_str!("src/power.md")]
pub mod power {}
#[doc = include_str!("src/objective.md")]
pub mod objective {}
#[doc = include_str!("src/tools.md")]
pub mod tools {}
