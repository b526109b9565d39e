pub mod error;
pub mod numerics;
pub mod sequences;
pub mod channel;
pub mod trajectories;
pub mod measurement;
pub mod recovery;
pub mod swiftlink;
pub mod baselines_metrics;
pub mod ripcheck;
pub mod harness;

pub use error::{Error, Result};

// The book's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/ch1_transforms.md")]
    mod chapter1 {}
    #[doc = include_str!("../../../book/src/ch2_trajectories.md")]
    mod chapter2 {}
    #[doc = include_str!("../../../book/src/ch3_estimator.md")]
    mod chapter3 {}
    #[doc = include_str!("../../../book/src/ch4_baselines.md")]
    mod chapter4 {}
    #[doc = include_str!("../../../book/src/ch5_ripcheck.md")]
    mod chapter5 {}
    #[doc = include_str!("../../../book/src/ch6_harness.md")]
    mod chapter6 {}
}
