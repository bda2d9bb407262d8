use thiserror::Error;

/// Input-validation failures raised by the analytic calculators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} = {value} is outside {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("invalid FEC scheme RS({n},{k}) with {m}-bit symbols: {reason}")]
    InvalidScheme {
        n: u32,
        k: u32,
        m: u32,
        reason: &'static str,
    },
    #[error("zero-size packet (payload and header are both 0 bytes)")]
    EmptyPacket,
    #[error("{0}")]
    Parse(String),
}

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(ModelError::Domain {
            name,
            value: p,
            expected: "[0, 1]",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, v: f64) -> Result<f64, ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::Domain {
            name,
            value: v,
            expected: "(0, inf)",
        })
    }
}

pub(crate) fn check_nonnegative(name: &'static str, v: f64) -> Result<f64, ModelError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::Domain {
            name,
            value: v,
            expected: "[0, inf)",
        })
    }
}
