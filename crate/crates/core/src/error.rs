use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain `{domain}` has {available} pairs, {required} required")]
    Sizing {
        domain: String,
        required: usize,
        available: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing translations for {} key(s), first: {}", .0.len(), .0.first().map(String::as_str).unwrap_or("-"))]
    MissingTranslation(Vec<String>),

    #[error("translation failed for {} key(s): {reason}", failed.len())]
    PartialTranslation { failed: Vec<String>, reason: String },

    #[error("feature schema mismatch: missing {missing:?}, extra {extra:?}")]
    SchemaMismatch { missing: Vec<String>, extra: Vec<String> },

    #[error("oracle error: {0}")]
    Oracle(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
