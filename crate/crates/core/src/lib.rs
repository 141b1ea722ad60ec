//! Degree-of-handedness grading from digitized pen traces.

pub mod baselines;
pub mod db;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod kinematics;
pub mod neural;
pub mod numeric;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    pub mod kinematics {}
    #[doc = include_str!("../../../book/src/features.md")]
    pub mod features {}
    #[doc = include_str!("../../../book/src/db.md")]
    pub mod db {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    pub mod classifiers {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    pub mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
