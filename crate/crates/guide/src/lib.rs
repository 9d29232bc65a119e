//! Compiles every chapter of `book/` as a module doc so that `cargo test`
//! runs its code blocks. One module per chapter keeps failures traceable.

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/costs.md")]
pub mod costs {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/policies.md")]
pub mod policies {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/microworld.md")]
pub mod microworld {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/server.md")]
pub mod server {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
