use relic_core::pnr::PnrError;
use relic_core::repair::RepairError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Code {
    Input = 1,
    Infeasible = 2,
    Unroutable = 3,
    Internal = 4,
}

/// A failed subcommand and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub error: anyhow::Error,
}

pub type Outcome = Result<(), Failure>;

impl Failure {
    pub fn new(code: Code, error: impl Into<anyhow::Error>) -> Self {
        Failure { code, error: error.into() }
    }
}

pub trait OrExit<T> {
    fn or_exit(self, code: Code) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: Code) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(code, e))
    }
}

pub fn pnr(e: PnrError) -> Failure {
    let code = match e {
        PnrError::WidthMismatch { .. } => Code::Input,
        ref e if e.is_unroutable() => Code::Unroutable,
        PnrError::Internal(_) => Code::Internal,
        ref e if e.is_infeasible() => Code::Infeasible,
        _ => Code::Internal,
    };
    Failure::new(code, e)
}

pub fn repair(e: RepairError) -> Failure {
    match e {
        RepairError::Pnr(p) => pnr(p),
        RepairError::Infeasible(_) | RepairError::TooMany { .. } => Failure::new(Code::Infeasible, e),
        RepairError::NotEquivalent(_) => Failure::new(Code::Internal, e),
    }
}
