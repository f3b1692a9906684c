pub mod bench;
pub mod cluster;
pub mod demo;
pub mod superpixel;

use std::io::Write;
use std::path::Path;

use crate::error::{data, CliResult};

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn print_line(line: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").map_err(|e| data(format!("cannot write to stdout: {e}")))
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serialising plain records cannot fail")
}
