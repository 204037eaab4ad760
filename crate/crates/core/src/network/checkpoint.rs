//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "WNILMCKP"
//! version    u32      1
//! meta_len   u32      length of the TOML metadata block
//! meta       bytes    UTF-8 TOML: [network] config echo + caller metadata
//! count      u32      number of parameter arrays
//! manifest   count × (name_len u32, name, rank u32, rank × u64 extent)
//! data       each array in manifest order, f32 little-endian
//! ```
//!
//! Identical parameters and metadata always serialize to identical bytes.

use std::path::Path;

use super::{Network, NetworkConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WNILMCKP";
const VERSION: u32 = 1;

/// Serializes the network plus free-form metadata (stored under `[meta]`).
pub fn write_checkpoint(net: &Network, meta: &toml::Table) -> Result<Vec<u8>> {
    let mut doc = toml::Table::new();
    let config = toml::Value::try_from(net.config())
        .map_err(|e| Error::Checkpoint(format!("cannot encode config: {e}")))?;
    doc.insert("network".into(), config);
    doc.insert("meta".into(), toml::Value::Table(meta.clone()));
    let text = toml::to_string(&doc)
        .map_err(|e| Error::Checkpoint(format!("cannot encode metadata: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_len(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());

    let names = net.param_names();
    let views = net.param_views();
    put_len(&mut out, views.len())?;
    for (name, view) in names.iter().zip(&views) {
        put_len(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_len(&mut out, view.rank)?;
        for &d in view.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for view in &views {
        for &v in view.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint, returning the network and the `[meta]` table.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(Network, toml::Table)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(
            "bad magic; not a wavenilm checkpoint".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let meta_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("metadata is not UTF-8: {e}")))?;
    let mut doc: toml::Table = toml::from_str(text)
        .map_err(|e| Error::Checkpoint(format!("metadata is not valid TOML: {e}")))?;
    let config: NetworkConfig = doc
        .remove("network")
        .ok_or_else(|| Error::Checkpoint("metadata lacks [network]".into()))?
        .try_into()
        .map_err(|e| Error::Checkpoint(format!("bad network config: {e}")))?;
    let meta = match doc.remove("meta") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(Error::Checkpoint("[meta] is not a table".into())),
        None => toml::Table::new(),
    };

    let mut net = Network::build(config, 0)?;
    let names = net.param_names();
    let expected: Vec<Vec<usize>> = net
        .param_views()
        .iter()
        .map(|v| v.dims().to_vec())
        .collect();
    let count = r.u32()? as usize;
    if count != names.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {count} arrays, topology has {}",
            names.len()
        )));
    }
    for (name, dims) in names.iter().zip(&expected) {
        let len = r.u32()? as usize;
        let got = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?;
        if got != name {
            return Err(Error::Checkpoint(format!(
                "manifest entry {got:?} where {name:?} was expected"
            )));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        if &shape != dims {
            return Err(Error::Checkpoint(format!(
                "{name}: manifest shape {shape:?} does not match topology {dims:?}"
            )));
        }
    }
    for slot in net.params_mut() {
        for v in slot.iter_mut() {
            let x = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
            if !x.is_finite() {
                return Err(Error::Checkpoint("non-finite parameter".into()));
            }
            *v = x as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after parameter data",
            bytes.len() - r.pos
        )));
    }
    Ok((net, meta))
}

pub fn save_checkpoint(path: &Path, net: &Network, meta: &toml::Table) -> Result<()> {
    let bytes = write_checkpoint(net, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, toml::Table)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Network {
        Network::build(NetworkConfig::uniform(2, 3, 4, 2), 11).unwrap()
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let net = small();
        let mut meta = toml::Table::new();
        meta.insert("loads".into(), toml::Value::from("a,b,c"));
        let bytes = write_checkpoint(&net, &meta).unwrap();
        let (back, meta_back) = read_checkpoint(&bytes).unwrap();
        assert_eq!(meta_back, meta);
        assert_eq!(back.config(), net.config());
        for (a, b) in back.param_views().iter().zip(net.param_views()) {
            for (x, y) in a.values.iter().zip(b.values) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert_eq!(write_checkpoint(&back, &meta).unwrap(), bytes);
        assert_eq!(write_checkpoint(&net, &meta).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let net = small();
        let bytes = write_checkpoint(&net, &toml::Table::new()).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(read_checkpoint(&long).is_err());
    }

    #[test]
    fn header_starts_with_magic_and_version() {
        let bytes = write_checkpoint(&small(), &toml::Table::new()).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    }
}
