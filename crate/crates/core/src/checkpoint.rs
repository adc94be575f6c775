//! Plain-text parameter checkpoints.
//!
//! ```text
//! eprop-params v1
//! dims <inputs> <cells> <outputs>
//! tensor i.in <rows> <cols>
//! <row-major values, one per line>
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a save/load cycle
//! reproduces every bit.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lstm::{Dims, NetworkParams};

const MAGIC: &str = "eprop-params v1";

pub fn write_params<W: Write>(params: &NetworkParams, mut w: W) -> Result<()> {
    let d = params.dims();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dims {} {} {}", d.inputs, d.cells, d.outputs)?;
    for (name, t) in NetworkParams::tensor_names().iter().zip(params.tensors()) {
        writeln!(w, "tensor {name} {} {}", t.rows(), t.cols())?;
        for v in t.as_slice() {
            writeln!(w, "{v:?}")?;
        }
    }
    Ok(())
}

pub fn read_params<R: Read>(r: R) -> Result<NetworkParams> {
    let mut lines = BufReader::new(r).lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format(format!("checkpoint truncated before {what}")))
    };
    if next("header")?.trim() != MAGIC {
        return Err(Error::Format("not an eprop-params v1 checkpoint".into()));
    }
    let dims_line = next("dims")?;
    let dims: Vec<usize> = dims_line
        .strip_prefix("dims ")
        .ok_or_else(|| Error::Format("missing dims line".into()))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad dimension '{s}'"))))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::Format("dims line needs three values".into()));
    }
    let mut params = NetworkParams::zeros(Dims::new(dims[0], dims[1], dims[2]));
    let names = NetworkParams::tensor_names();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        let header = next("tensor header")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" || parts[1] != name {
            return Err(Error::Format(format!("expected tensor {name}, found '{header}'")));
        }
        let shape = (
            parts[2]
                .parse::<usize>()
                .map_err(|_| Error::Format("bad rows".into()))?,
            parts[3]
                .parse::<usize>()
                .map_err(|_| Error::Format("bad cols".into()))?,
        );
        if shape != t.shape() {
            return Err(Error::Format(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                t.shape()
            )));
        }
        for v in t.as_mut_slice() {
            let line = next(name)?;
            *v = line
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad value '{line}' in {name}")))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite value in {name}")));
            }
        }
    }
    Ok(params)
}

pub fn save(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_params(params, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<NetworkParams> {
    read_params(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), inputs in 1usize..5, cells in 1usize..6, outputs in 1usize..4, scale in -300i32..300) {
            let mut p = NetworkParams::init(&mut Rng::new(seed), Dims::new(inputs, cells, outputs));
            for t in p.tensors_mut() {
                t.scale(10f64.powi(scale / 10));
            }
            let mut buf = Vec::new();
            write_params(&p, &mut buf).unwrap();
            let back = read_params(buf.as_slice()).unwrap();
            for (a, b) in p.tensors().iter().zip(back.tensors()) {
                let bits_a: Vec<u64> = a.as_slice().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.as_slice().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_params("".as_bytes()).is_err());
        assert!(read_params("eprop-params v2\n".as_bytes()).is_err());
        let p = NetworkParams::init(&mut Rng::new(1), Dims::new(1, 2, 1));
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(read_params(truncated.as_bytes()).is_err());
        let renamed = text.replacen("tensor f.in", "tensor x.in", 1);
        assert!(read_params(renamed.as_bytes()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        let p = NetworkParams::init(&mut Rng::new(2), Dims::new(3, 4, 2));
        save(&p, &path).unwrap();
        assert_eq!(load(&path).unwrap(), p);
    }
}
