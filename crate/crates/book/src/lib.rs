//! The guide's chapters, compiled so that every snippet runs as a doc-test.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/coding.md")]
pub mod coding {}

#[doc = include_str!("../../../book/src/versions.md")]
pub mod versions {}

#[doc = include_str!("../../../book/src/ring.md")]
pub mod ring {}

#[doc = include_str!("../../../book/src/membership.md")]
pub mod membership {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/checking.md")]
pub mod checking {}

#[doc = include_str!("../../../book/src/bench.md")]
pub mod bench {}
