use thiserror::Error;

use super::ast::Span;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{}: syntax error: {msg}", .span)]
    Syntax { span: Span, msg: String },
    #[error("{}: type error: {msg}", .span)]
    Type { span: Span, msg: String },
    #[error("{}: name error: {msg}", .span)]
    Name { span: Span, msg: String },
}

impl FrontendError {
    pub fn span(&self) -> Span {
        match self {
            FrontendError::Syntax { span, .. }
            | FrontendError::Type { span, .. }
            | FrontendError::Name { span, .. } => *span,
        }
    }

    pub(crate) fn syntax(span: Span, msg: impl Into<String>) -> Self {
        FrontendError::Syntax {
            span,
            msg: msg.into(),
        }
    }

    pub(crate) fn ty(span: Span, msg: impl Into<String>) -> Self {
        FrontendError::Type {
            span,
            msg: msg.into(),
        }
    }

    pub(crate) fn name(span: Span, msg: impl Into<String>) -> Self {
        FrontendError::Name {
            span,
            msg: msg.into(),
        }
    }
}
