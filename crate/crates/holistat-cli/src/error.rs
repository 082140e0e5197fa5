use std::fmt;
use std::path::Path;

/// Everything the binary can fail with. `emit` prints a single-line JSON
/// object to stderr so callers can parse failures without scraping prose.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input file; line/column are 1-based where known.
    Parse { file: String, line: Option<u64>, column: Option<u64>, message: String },
    /// Bad flag combination or out-of-range value.
    Config(String),
    /// Filesystem trouble on `path`.
    Io { path: String, source: std::io::Error },
    /// Analysis-layer rejection, forwarded verbatim.
    Domain(holistat::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn parse(file: &Path, line: Option<u64>, column: Option<u64>, message: impl Into<String>) -> Self {
        CliError::Parse {
            file: file.display().to_string(),
            line,
            column,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Domain(_) => "domain",
        }
    }

    /// Machine-readable form: `{"error":..,"message":..,"file":..,"line":..,"column":..}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        obj.insert("error".into(), self.kind().into());
        obj.insert("message".into(), self.to_string().into());
        if let CliError::Parse { file, line, column, .. } = self {
            obj.insert("file".into(), file.as_str().into());
            if let Some(l) = line {
                obj.insert("line".into(), (*l).into());
            }
            if let Some(c) = column {
                obj.insert("column".into(), (*c).into());
            }
        }
        if let CliError::Io { path, .. } = self {
            obj.insert("file".into(), path.as_str().into());
        }
        serde_json::Value::Object(obj)
    }

    pub fn emit(&self) {
        eprintln!("{}", self.to_json());
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { file, line, column, message } => {
                write!(f, "{file}")?;
                if let Some(l) = line {
                    write!(f, ":{l}")?;
                }
                if let Some(c) = column {
                    write!(f, ":{c}")?;
                }
                write!(f, ": {message}")
            }
            CliError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<holistat::Error> for CliError {
    fn from(e: holistat::Error) -> Self {
        CliError::Domain(e)
    }
}
