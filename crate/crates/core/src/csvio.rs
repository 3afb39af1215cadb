//! Shared CSV conventions: every file starts with a `# schema=<name>/<version>`
//! line followed by an ordinary headed CSV body.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

pub fn write_schema<W: Write>(out: &mut W, schema: &str) -> Result<()> {
    writeln!(out, "# schema={schema}")?;
    Ok(())
}

/// Consumes the schema line and returns a CSV reader over the remainder.
pub fn reader<R: Read>(input: R, schema: &str) -> Result<csv::Reader<BufReader<R>>> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let found = first.trim_end().strip_prefix("# schema=").unwrap_or("");
    if found != schema {
        return Err(Error::Format(format!(
            "expected schema line `# schema={schema}`, found `{}`",
            first.trim_end()
        )));
    }
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input))
}

/// Formats a float so that parsing it back yields the same bits; infinite
/// values are written as `inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

pub fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("not a number: `{field}`")))
}
