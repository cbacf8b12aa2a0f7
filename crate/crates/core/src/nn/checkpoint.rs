//! `AFPW` weight container, version 1 (all integers little-endian):
//!
//! ```text
//! "AFPW" | u16 version | u16 endianness tag (0x0001)
//! u32 length | JSON network config
//! per parameter, until end of file:
//!   u16 length | UTF-8 name | u8 rank | u32 extent * rank | f32 * product(extents)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::network::{Network, NetworkConfig};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AFPW";
pub const VERSION: u16 = 1;
pub const LITTLE_ENDIAN_TAG: u16 = 0x0001;

fn io(e: std::io::Error) -> Error {
    Error::Format(format!("checkpoint I/O: {e}"))
}

pub fn write_checkpoint<T: Scalar, W: Write>(mut out: W, net: &Network<T>) -> Result<()> {
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&LITTLE_ENDIAN_TAG.to_le_bytes())
        .map_err(io)?;
    let json = serde_json::to_vec(net.config())?;
    out.write_all(&(json.len() as u32).to_le_bytes())
        .map_err(io)?;
    out.write_all(&json).map_err(io)?;
    for p in net.params() {
        let name = p.name.as_bytes();
        out.write_all(&(name.len() as u16).to_le_bytes())
            .map_err(io)?;
        out.write_all(name).map_err(io)?;
        out.write_all(&[p.value.shape().len() as u8]).map_err(io)?;
        for &e in p.value.shape() {
            out.write_all(&(e as u32).to_le_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(p.value.len() * 4);
        for &v in p.value.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(io)?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Network<f32>> {
    if &read_exact::<_, 4>(&mut r)? != MAGIC {
        return Err(Error::Format("not an AFPW checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported AFPW version {version}")));
    }
    let tag = u16::from_le_bytes(read_exact(&mut r)?);
    if tag != LITTLE_ENDIAN_TAG {
        return Err(Error::Format(format!(
            "unsupported endianness tag {tag:#06x}"
        )));
    }
    let len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let config: NetworkConfig = serde_json::from_slice(&json)?;
    let mut net = Network::<f32>::zeros(config)?;

    let mut values = Vec::with_capacity(net.params().len());
    loop {
        let mut len = [0u8; 2];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(io(e)),
        }
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let rank = read_exact::<_, 1>(&mut r)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_exact(&mut r)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw).map_err(io)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();

        let expected = net
            .params()
            .get(values.len())
            .ok_or_else(|| Error::Format(format!("unexpected extra parameter {name}")))?;
        if expected.name != name {
            return Err(Error::Format(format!(
                "parameter {} is {name}, expected {}",
                values.len(),
                expected.name
            )));
        }
        values.push(Tensor::from_vec(&shape, data)?);
    }
    net.set_params(values)
        .map_err(|e| Error::Format(format!("checkpoint does not match its config: {e}")))?;
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, net: &Network<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_checkpoint(BufWriter::new(file), net)
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_checkpoint(BufReader::new(file))
}
