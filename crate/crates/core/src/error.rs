use thiserror::Error;

/// A value outside the domain of a physical model function.
///
/// Field names carry the same unit-suffixed spelling as the scenario config
/// keys (`sigma_s`, `loss_db`, ...) so that diagnostics point at the input.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("`{field}` must be {expected}, got {value}")]
    OutOfRange {
        field: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("shape has zero integral over its {duration_s} s window")]
    ZeroIntegral { duration_s: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn check(cond: bool, field: &'static str, expected: &'static str, value: f64) -> Result<(), DomainError> {
    if cond {
        Ok(())
    } else {
        Err(DomainError::OutOfRange {
            field,
            expected,
            value,
        })
    }
}

pub(crate) fn non_negative(field: &'static str, value: f64) -> Result<(), DomainError> {
    check(value.is_finite() && value >= 0.0, field, ">= 0", value)
}

pub(crate) fn positive(field: &'static str, value: f64) -> Result<(), DomainError> {
    check(value.is_finite() && value > 0.0, field, "> 0", value)
}

pub(crate) fn probability(field: &'static str, value: f64) -> Result<(), DomainError> {
    check((0.0..=1.0).contains(&value), field, "within [0, 1]", value)
}
