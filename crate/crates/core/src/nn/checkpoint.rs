//! Binary checkpoint: magic, version, stream tag, free-form metadata,
//! networks, and optional optimizer state. All numbers little-endian.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{Activation, Adam, AdamConfig, Dense, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EVCK";
const MAJOR: u16 = 1;
const MINOR: u16 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Stream identifier, e.g. `ff-bc` or `ec-bc`.
    pub tag: String,
    /// `key=value` lines describing how to rebuild the model around the networks.
    pub meta: String,
    pub networks: Vec<Mlp>,
    pub optimizer: Option<Adam>,
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::parse("checkpoint", "invalid utf-8 string"))
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LE>(&mut out)?;
    Ok(out)
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u16::<LE>(MAJOR)?;
    w.write_u16::<LE>(MINOR)?;
    write_str(w, &ckpt.tag)?;
    write_str(w, &ckpt.meta)?;
    w.write_u32::<LE>(ckpt.networks.len() as u32)?;
    for net in &ckpt.networks {
        let widths = net.widths();
        w.write_u32::<LE>(widths.len() as u32)?;
        for &width in &widths {
            w.write_u32::<LE>(width as u32)?;
        }
        w.write_u8(net.output_activation().code())?;
        for s in net.param_slices() {
            write_f64s(w, s)?;
        }
    }
    match &ckpt.optimizer {
        None => w.write_u8(0)?,
        Some(opt) => {
            w.write_u8(1)?;
            w.write_u64::<LE>(opt.step)?;
            let c = opt.config;
            write_f64s(w, &[c.lr, c.beta1, c.beta2, c.eps])?;
            w.write_u32::<LE>(opt.m.len() as u32)?;
            for (m, v) in opt.m.iter().zip(&opt.v) {
                w.write_u32::<LE>(m.len() as u32)?;
                write_f64s(w, m)?;
                write_f64s(w, v)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::parse("checkpoint header", "bad magic"));
    }
    let major = r.read_u16::<LE>()?;
    let minor = r.read_u16::<LE>()?;
    if major != MAJOR {
        return Err(Error::UnsupportedVersion { major, minor, expected: MAJOR });
    }
    let tag = read_str(r)?;
    let meta = read_str(r)?;
    let n_nets = r.read_u32::<LE>()? as usize;
    let mut networks = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        let n_widths = r.read_u32::<LE>()? as usize;
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            widths.push(r.read_u32::<LE>()? as usize);
        }
        if widths.len() < 2 {
            return Err(Error::parse("checkpoint network", "fewer than two widths"));
        }
        let act = Activation::from_code(r.read_u8()?)
            .ok_or_else(|| Error::parse("checkpoint network", "unknown activation"))?;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = read_f64s(r, fan_in * fan_out)?;
            let b = read_f64s(r, fan_out)?;
            layers.push(Dense {
                weight: Array2::from_shape_vec((fan_out, fan_in), w)
                    .map_err(|e| Error::Shape(e.to_string()))?,
                bias: Array1::from(b),
            });
        }
        networks.push(Mlp::from_layers(layers, act)?);
    }
    let optimizer = match r.read_u8()? {
        0 => None,
        1 => {
            let step = r.read_u64::<LE>()?;
            let c = read_f64s(r, 4)?;
            let config = AdamConfig { lr: c[0], beta1: c[1], beta2: c[2], eps: c[3] };
            let n = r.read_u32::<LE>()? as usize;
            let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let len = r.read_u32::<LE>()? as usize;
                m.push(read_f64s(r, len)?);
                v.push(read_f64s(r, len)?);
            }
            Some(Adam { config, step, m, v })
        }
        other => return Err(Error::parse("checkpoint optimizer", format!("bad flag {other}"))),
    };
    Ok(Checkpoint { tag, meta, networks, optimizer })
}
