use std::fmt;

pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERIC: u8 = 4;
pub const ALPHABET: u8 = 5;
pub const UNDEFINED_WS: u8 = 6;

/// An error that already knows its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Maps an error chain to the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use ippsm_core::Error as E;
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonFinite(_) => NUMERIC,
                E::UndefinedCorrelation(_) => UNDEFINED_WS,
                E::InvalidArgument(_) | E::Shape { .. } | E::KeyspaceCap { .. } => CONFIG,
                _ => DATA,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return DATA;
        }
    }
    1
}
