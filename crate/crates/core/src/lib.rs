//! Operator-valued Hardy and BMO functionals on matrix-valued step functions.
// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod atomdec;
pub mod bmo;
pub mod cone;
pub mod config;
pub mod dyadic;
pub mod ensemble;
pub mod error;
pub(crate) mod flat;
pub mod gridfn;
pub mod halfplane;
pub mod matcore;
pub mod maximal;
pub mod net;
pub mod report;
pub mod squarefn;
pub mod suites;
pub mod transform;

pub use error::{Error, Result};

/// The guide in `book/`, compiled so its snippets run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/matrices.md")]
    pub mod matrices {}
    #[doc = include_str!("../../../book/src/grids.md")]
    pub mod grids {}
    #[doc = include_str!("../../../book/src/square-functions.md")]
    pub mod square_functions {}
    #[doc = include_str!("../../../book/src/bmo.md")]
    pub mod bmo {}
    #[doc = include_str!("../../../book/src/dyadic.md")]
    pub mod dyadic {}
    #[doc = include_str!("../../../book/src/maximal.md")]
    pub mod maximal {}
    #[doc = include_str!("../../../book/src/atoms.md")]
    pub mod atoms {}
    #[doc = include_str!("../../../book/src/transform.md")]
    pub mod transform {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
