// mdBook cannot test listings that use an external crate, so each chapter
// is included as the docs of an empty module and `cargo test --doc` runs
// its code blocks against the workspace crate. One module per chapter keeps
// failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/privacy.md")]
pub mod privacy {}
#[doc = include_str!("../../../book/src/filters.md")]
pub mod filters {}
#[doc = include_str!("../../../book/src/zfe.md")]
pub mod zfe {}
#[doc = include_str!("../../../book/src/lms.md")]
pub mod lms {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
