use std::fmt;

/// How ingestion treats malformed rows and duplicate ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// The first malformed row aborts with an error.
    #[default]
    Strict,
    /// Malformed rows are skipped and duplicates resolve last-wins; both are
    /// reported as warnings.
    Lenient,
}

/// A non-fatal issue found while reading or converting data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub line: Option<usize>,
    pub sample_id: Option<String>,
    pub message: String,
}

impl Warning {
    pub fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            sample_id: None,
            message: message.into(),
        }
    }

    pub fn for_sample(sample_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line: None,
            sample_id: Some(sample_id.into()),
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(id) = &self.sample_id {
            write!(f, "sample `{id}`: ")?;
        }
        f.write_str(&self.message)
    }
}
