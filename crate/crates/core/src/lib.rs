//! Decision procedure for the intuitionistic temporal logic of dynamical
//! systems, with a finite Alexandroff model checker used as an oracle.

pub mod error;
pub mod alexandroff;
pub mod formula;
pub mod moments;
pub mod quasimodel;
pub mod types;

pub use error::{Error, Result};
pub use formula::{Formula, Fragment, Modality, ParseError};
pub use moments::{graft, temporal_successor, Caps, Moment, MomentId, MomentStore, SuccessorTable};
pub use quasimodel::{
    build_realizing_path, check_quasimodel, complete_path_below, decide, extract_quasimodel,
    prune_profile, verify_certificate, viable_types, Certificate, Clause, DecideOptions, DecideStats,
    Decision, Lasso, PruneOrder, Quasimodel, UniversalProfile, Verdict, Violation,
};
pub use alexandroff::{FinitePoset, FiniteSystem, PointSet, Valuation};
pub use types::{SigmaContext, TypeSet};
