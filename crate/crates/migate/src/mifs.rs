//! Binary feature tables.
//!
//! Layout, all little-endian: magic `MIFS`, version `u16`, record count
//! `u64`, visual width `u32`, text width `u32`, class count `u32`; then per
//! record a `u32` byte length and UTF-8 sample id, a split byte, the visual
//! and text features as `f32`, and the label as `u32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use migate_core::table::{FeatureRecord, FeatureTable, Split};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MIFS";
pub const VERSION: u16 = 1;
/// Bytes before the first record.
pub const HEADER_LEN: usize = 4 + 2 + 8 + 4 + 4 + 4;

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Corruption(format!("{what} {v} does not fit in 32 bits")))
}

/// Serializes `table`, refusing tables that break their invariants. Returns
/// the number of bytes written.
pub fn write_table<W: Write>(table: &FeatureTable, mut sink: W) -> Result<u64> {
    table.ensure_valid()?;
    let mut buf = Vec::with_capacity(HEADER_LEN + table.len() * (16 + 4 * (table.visual_dim + table.text_dim)));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(table.len() as u64).to_le_bytes());
    buf.extend_from_slice(&dim_u32(table.visual_dim, "visual width")?.to_le_bytes());
    buf.extend_from_slice(&dim_u32(table.text_dim, "text width")?.to_le_bytes());
    buf.extend_from_slice(&dim_u32(table.classes, "class count")?.to_le_bytes());
    for r in &table.records {
        buf.extend_from_slice(&dim_u32(r.sample_id.len(), "sample id length")?.to_le_bytes());
        buf.extend_from_slice(r.sample_id.as_bytes());
        buf.push(r.split.as_byte());
        for v in r.visual.iter().chain(&r.text) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&r.label.to_le_bytes());
    }
    sink.write_all(&buf).map_err(|e| Error::io("<sink>", e))?;
    Ok(buf.len() as u64)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, context: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, context)?;
        Ok(b)
    }

    fn fill(&mut self, b: &mut [u8], context: &str) -> Result<()> {
        self.inner.read_exact(b).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::Truncation {
                context: context.to_string(),
            },
            _ => Error::io("<source>", e),
        })
    }

    fn u32(&mut self, context: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(context)?))
    }
}

pub fn read_table<R: Read>(source: R) -> Result<FeatureTable> {
    let mut c = Cursor { inner: source };
    let magic: [u8; 4] = c.bytes("magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            expected: "MIFS",
            found: magic,
        });
    }
    let version = u16::from_le_bytes(c.bytes("version")?);
    if version != VERSION {
        return Err(Error::Version {
            format: "MIFS",
            version,
        });
    }
    let n = u64::from_le_bytes(c.bytes("record count")?);
    let visual_dim = c.u32("visual width")? as usize;
    let text_dim = c.u32("text width")? as usize;
    let classes = c.u32("class count")? as usize;
    let mut table = FeatureTable::new(visual_dim, text_dim, classes);
    let mut floats = vec![0u8; 4 * (visual_dim + text_dim)];
    for i in 0..n {
        let context = format!("record {i} of {n}");
        let len = c.u32(&context)? as usize;
        let mut id = vec![0u8; len];
        c.fill(&mut id, &context)?;
        let sample_id =
            String::from_utf8(id).map_err(|_| Error::Corruption(format!("record {i}: sample id is not UTF-8")))?;
        let [split] = c.bytes::<1>(&context)?;
        let split =
            Split::from_byte(split).ok_or_else(|| Error::Corruption(format!("record {i}: split byte {split}")))?;
        c.fill(&mut floats, &context)?;
        let mut values = floats
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let visual: Vec<f32> = values.by_ref().take(visual_dim).collect();
        let text: Vec<f32> = values.collect();
        let label = c.u32(&context)?;
        table.records.push(FeatureRecord {
            sample_id,
            split,
            visual,
            text,
            label,
        });
    }
    let mut probe = [0u8; 1];
    match c.inner.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::Corruption(format!(
                "data continues past the {n} records the header declares"
            )));
        }
        Err(e) => return Err(Error::io("<source>", e)),
    }
    Ok(table)
}

pub fn write_table_file(table: &FeatureTable, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = write_table(table, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

pub fn read_table_file(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}
