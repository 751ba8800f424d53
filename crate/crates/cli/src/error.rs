use std::fmt;

use intrinsic_core::bilateral::SolverError;
use intrinsic_core::data::DataError;
use intrinsic_core::image::ImageError;
use intrinsic_core::losses::LossError;
use intrinsic_core::metrics::{EvalError, MetricError};
use intrinsic_core::network::NetError;
use intrinsic_core::tensor::TensorError;
use intrinsic_core::train::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Config = 1,
    Io = 2,
    Contract = 3,
    Numerical = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: ExitCode::Config,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: ExitCode::Io,
            message: message.into(),
        }
    }

    fn new(code: ExitCode, err: impl fmt::Display) -> Self {
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn solver_code(e: &SolverError) -> ExitCode {
    match e {
        SolverError::InvalidParams(_) => ExitCode::Config,
        SolverError::Convergence { .. } | SolverError::Factorization(_) => ExitCode::Numerical,
        SolverError::Oversize { .. } | SolverError::Contract(_) | SolverError::Image(_) => {
            ExitCode::Contract
        }
    }
}

fn net_code(e: &NetError) -> ExitCode {
    match e {
        NetError::Config(_) => ExitCode::Config,
        NetError::Io(_)
        | NetError::Truncated { .. }
        | NetError::Version { .. }
        | NetError::Format(_) => ExitCode::Io,
        NetError::Divisibility { .. }
        | NetError::Channels { .. }
        | NetError::Tensor(_)
        | NetError::Image(_) => ExitCode::Contract,
    }
}

fn data_code(e: &DataError) -> ExitCode {
    match e {
        DataError::Io { .. }
        | DataError::Parse { .. }
        | DataError::Format(_)
        | DataError::Judgements { .. } => ExitCode::Io,
        DataError::UnknownVersion(_)
        | DataError::TooFewImages { .. }
        | DataError::DimensionMismatch { .. }
        | DataError::DuplicateId(_)
        | DataError::Manifest(_) => ExitCode::Config,
        DataError::Image(_) => ExitCode::Contract,
    }
}

fn loss_code(e: &LossError) -> ExitCode {
    match e {
        LossError::DegenerateReference(_) => ExitCode::Numerical,
        LossError::Tensor(_) => ExitCode::Contract,
        LossError::Solver(s) => solver_code(s),
    }
}

fn metric_code(e: &MetricError) -> ExitCode {
    match e {
        MetricError::Config(_) => ExitCode::Config,
        MetricError::Undefined(_) | MetricError::Contract(_) | MetricError::Image(_) => {
            ExitCode::Contract
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::new(solver_code(&e), e)
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        CliError::new(net_code(&e), e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::new(data_code(&e), e)
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        CliError::new(ExitCode::Contract, e)
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::new(ExitCode::Contract, e)
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::new(metric_code(&e), e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::Config(_) => ExitCode::Config,
            EvalError::Metric(m) => metric_code(m),
            EvalError::Net(n) => net_code(n),
            EvalError::Solver(s) => solver_code(s),
            EvalError::Image(_) => ExitCode::Contract,
        };
        CliError::new(code, e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::Config(_) => ExitCode::Config,
            TrainError::Contract(_) | TrainError::Tensor(_) | TrainError::Image(_) => {
                ExitCode::Contract
            }
            TrainError::NonFinite { .. } => ExitCode::Numerical,
            TrainError::Net(n) => net_code(n),
            TrainError::Loss(l) => loss_code(l),
            TrainError::Io(_) => ExitCode::Io,
        };
        CliError::new(code, e)
    }
}
