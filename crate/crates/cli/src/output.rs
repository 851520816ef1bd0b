use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// Buffered writer on `path`, or on stdout when no path is given.
pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::Io(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub fn io_err(e: io::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut w = open(path)?;
    w.write_all(text.as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Full-precision float for CSV: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}
