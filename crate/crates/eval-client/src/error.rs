use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("invalid input: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("session expired: {0}")]
    Expired(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("server rejected the request ({status} {code}): {message}")]
    Server { status: u16, code: String, message: String },

    #[error("i/o failure: {0}")]
    Io(String),
}

impl ClientError {
    /// Process exit status: 2 validation, 3 expiry, 4 transport, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Validation(_) => 2,
            ClientError::Expired(_) => 3,
            ClientError::Transport(_) => 4,
            ClientError::Server { .. } | ClientError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for ClientError {
    fn from(e: std::io::Error) -> Self {
        ClientError::Io(e.to_string())
    }
}
