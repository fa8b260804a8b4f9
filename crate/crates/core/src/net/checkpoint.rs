//! Versioned binary weights file.
//!
//! Header (little-endian): `b"MCWT"`, version u32, kind u8 (0 = late
//! fusion, 1/2 = uni-modal on that modality), K u32, m u32, d1 u32, d2 u32,
//! q u32, beta f64, sigma0 f64, iteration u64. Uni-modal files carry 0 for
//! the unused dimension. The payload is each present encoder's `K m x d`
//! matrix in row-major order, modality 1 first.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{ActParams, Encoder, UniWeights, Weights};
use crate::error::{Error, Result};
use crate::Modality;

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MCWT";

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkWeights {
    Multi(Weights),
    Uni(UniWeights),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub act: ActParams,
    pub sigma0: f64,
    pub iteration: u64,
    pub weights: NetworkWeights,
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<()> {
    let (kind, k, m, dims, blocks): (u8, usize, usize, [usize; 2], Vec<&Encoder>) = match &ck.weights {
        NetworkWeights::Multi(ws) => (0, ws.k(), ws.m(), ws.dims(), ws.encoders().iter().collect()),
        NetworkWeights::Uni(u) => {
            let mut dims = [0, 0];
            dims[u.modality.index()] = u.encoder.d();
            (u.modality.number(), u.encoder.k(), u.encoder.m(), dims, vec![&u.encoder])
        }
    };
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(WEIGHTS_FORMAT_VERSION)?;
    w.write_u8(kind)?;
    w.write_u32::<LittleEndian>(k as u32)?;
    w.write_u32::<LittleEndian>(m as u32)?;
    w.write_u32::<LittleEndian>(dims[0] as u32)?;
    w.write_u32::<LittleEndian>(dims[1] as u32)?;
    w.write_u32::<LittleEndian>(ck.act.q)?;
    w.write_f64::<LittleEndian>(ck.act.beta)?;
    w.write_f64::<LittleEndian>(ck.sigma0)?;
    w.write_u64::<LittleEndian>(ck.iteration)?;
    for enc in blocks {
        for v in enc.matrix().iter() {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a weights file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != WEIGHTS_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let kind = r.read_u8()?;
    let k = r.read_u32::<LittleEndian>()? as usize;
    let m = r.read_u32::<LittleEndian>()? as usize;
    let dims = [r.read_u32::<LittleEndian>()? as usize, r.read_u32::<LittleEndian>()? as usize];
    let q = r.read_u32::<LittleEndian>()?;
    let beta = r.read_f64::<LittleEndian>()?;
    let sigma0 = r.read_f64::<LittleEndian>()?;
    let iteration = r.read_u64::<LittleEndian>()?;
    let mut read_block = |d: usize| -> Result<Encoder> {
        let mut data = vec![0.0; k * m * d];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        let arr = Array2::from_shape_vec((k * m, d), data).map_err(|e| Error::Format(e.to_string()))?;
        Encoder::from_array(k, m, arr)
    };
    let weights = match kind {
        0 => NetworkWeights::Multi(Weights::new(read_block(dims[0])?, read_block(dims[1])?)?),
        1 | 2 => {
            let modality = Modality::try_from(kind)?;
            let d = dims[modality.index()];
            NetworkWeights::Uni(UniWeights::new(modality, read_block(d)?))
        }
        other => return Err(Error::Format(format!("unknown network kind {other}"))),
    };
    Ok(Checkpoint {
        act: ActParams { q, beta },
        sigma0,
        iteration,
        weights,
    })
}
