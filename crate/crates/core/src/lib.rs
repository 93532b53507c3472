//! Goal-directed bytecode coverage: class-file model, instrumentation,
//! hit-count storage, reports and test-suite minimization.

pub mod asm;
pub mod classfile;
pub mod covdb;
pub mod fixtures;
pub mod goals;
pub mod instrument;
pub mod minijvm;
pub mod minimize;
pub mod report;

pub use classfile::{emit_class, parse_class, ClassFileError, ClassModel, CodeModel, Instruction, Ordinal};
pub use covdb::{DbError, GoalMeta, HitCountDb, SessionRecorder, DB_ENV_VAR, DEFAULT_DB_FILE};
pub use goals::{assign_uids, parse_goals, serialize_goals, CoverageGoal, GoalKey, GoalParseError, GoalUid};
pub use instrument::{instrument_class, InstrumentError, InstrumentedClass, InstrumentationWarning};
pub use minimize::{greedy_minimize, minimize_against_existing, Trace};
pub use report::{generate_report, uncovered, CoverageReport, ReportEntry};
pub use minijvm::{run_suite, Outcome, SuiteError, SuiteReport, Value, Vm, VmError};

/// Any error produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    ClassFile(#[from] ClassFileError),
    #[error(transparent)]
    Goals(#[from] GoalParseError),
    #[error(transparent)]
    Signature(#[from] goals::SignatureError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
}

impl Error {
    /// Short machine-readable name of the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ClassFile(_) => "classfile",
            Error::Goals(_) => "goals",
            Error::Signature(_) => "signature",
            Error::Db(DbError::Corrupt(_)) => "db_corrupt",
            Error::Db(_) => "db_io",
            Error::Instrument(_) => "instrument",
            Error::Vm(_) => "interpreter",
            Error::Suite(_) => "suite",
        }
    }
}
