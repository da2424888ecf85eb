//! The user guide, one module per chapter.
//!
//! The chapter sources live in `book/src` and render with mdbook; including
//! them here makes every code block in the book a doc-test, so the guide
//! cannot drift from the API it describes.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/grid.md")]
pub mod grid {}

#[doc = include_str!("../../../book/src/section.md")]
pub mod section {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/path.md")]
pub mod path {}

#[doc = include_str!("../../../book/src/audit.md")]
pub mod audit {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
