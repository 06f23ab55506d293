//! The guide under `book/` as doc-tests: each chapter is one module, so a
//! failing listing names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}
#[doc = include_str!("../../../book/src/filtering.md")]
pub mod filtering {}
#[doc = include_str!("../../../book/src/annotation.md")]
pub mod annotation {}
#[doc = include_str!("../../../book/src/facts.md")]
pub mod facts {}
#[doc = include_str!("../../../book/src/agreement.md")]
pub mod agreement {}
#[doc = include_str!("../../../book/src/export.md")]
pub mod export {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
