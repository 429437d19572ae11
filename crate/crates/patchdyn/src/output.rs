//! CSV tables with a provenance comment line and fixed number formatting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::error::CliError;

pub const SCHEMA: u32 = 1;

/// 17 significant digits, so values round-trip exactly.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvTable {
    writer: csv::Writer<Box<dyn Write>>,
}

impl CsvTable {
    /// Opens `out` (stdout when `None`), writes `# patchdyn <sub> seed=<s>
    /// schema=1` and the header row.
    pub fn create(out: Option<&Path>, subcommand: &str, seed: u64, header: &[&str]) -> Result<Self, CliError> {
        let mut sink: Box<dyn Write> = match out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout())),
        };
        writeln!(sink, "# patchdyn {subcommand} seed={seed} schema={SCHEMA}")?;
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(header)?;
        Ok(CsvTable { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads a table written by [`CsvTable`], skipping the comment line.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = reader.headers()?.iter().map(str::to_owned).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}
