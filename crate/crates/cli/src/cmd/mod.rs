pub mod compound;
pub mod eval;
pub mod frames;
pub mod mhpf;
pub mod synth;
pub mod validate;
pub mod zeroshot;

use std::path::Path;

use anyhow::Result;
use cerfuse::ingest::{write_stream, SegmentRecord};
use serde::Serialize;

use crate::output::write_atomic;

pub(crate) fn write_records(path: &Path, records: &[SegmentRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_stream(&mut buf, records)?;
    write_atomic(path, &buf)
}

pub(crate) fn write_lines<T: Serialize>(path: &Path, lines: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for l in lines {
        serde_json::to_writer(&mut buf, l)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}
