//! Machine output: JSON or CSV, to standard output or a file.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use diocap::measures::fmt_f64;
use diocap::tower::Tower;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub fn sink(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// CSV with `\n` line endings and already formatted fields.
pub fn write_csv<W: Write>(
    out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn num(x: f64) -> String {
    fmt_f64(x)
}

/// Floats print as shortest round-trip decimals; values past float range as
/// `exp^h(top)`.
pub fn tower(t: Tower) -> String {
    if t.fits_f64() {
        fmt_f64(t.to_f64())
    } else {
        t.to_string()
    }
}
