//! Runs every code snippet in the guide as a doc-test.
//!
//! mdBook cannot execute snippets that depend on external crates, so each
//! chapter is included here as a doc comment on an empty module and
//! `cargo test --doc` does the work. A failing snippet names its chapter
//! through the module that owns it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/matrices.md")]
pub mod matrices {}

#[doc = include_str!("../../../book/src/states.md")]
pub mod states {}

#[doc = include_str!("../../../book/src/weak-values.md")]
pub mod weak_values {}

#[doc = include_str!("../../../book/src/reconstruction.md")]
pub mod reconstruction {}

#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}

#[doc = include_str!("../../../book/src/noise.md")]
pub mod noise {}

#[doc = include_str!("../../../book/src/wire-protocol.md")]
pub mod wire_protocol {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
