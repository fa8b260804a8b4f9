//! Dataset container and CSV export.
//!
//! Layout: `b"MCDS"`, format version (u32), header length (u32), a JSON
//! header, then one record per sample:
//! `y: u32, suff1: u8, suff2: u8, x1: [f64; d1], x2: [f64; d2]`, all
//! little-endian. Debug containers append `z, spike, gaussian` for modality
//! 1 and then modality 2 to every record.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataConfig, Dataset, Provenance};
use crate::error::{Error, Result};
use crate::Modality;

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MCDS";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    n: usize,
    debug: bool,
    config: DataConfig,
}

/// Writes the binary container. With `debug` set the stored codes and noise
/// travel along; this fails if the dataset has none.
pub fn write_dataset<W: Write>(mut w: W, ds: &Dataset, debug: bool) -> Result<()> {
    let prov = if debug {
        Some(ds.provenance().ok_or_else(|| {
            Error::Argument("debug container requested but dataset has no provenance".into())
        })?)
    } else {
        None
    };
    let header = serde_json::to_vec(&Header {
        format_version: DATASET_FORMAT_VERSION,
        n: ds.n(),
        debug,
        config: ds.config.clone(),
    })?;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(DATASET_FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(header.len() as u32)?;
    w.write_all(&header)?;
    let x = [ds.inputs(Modality::First), ds.inputs(Modality::Second)];
    for i in 0..ds.n() {
        w.write_u32::<LittleEndian>(ds.labels()[i] as u32)?;
        let f = ds.sufficiency()[i];
        w.write_u8(f[0] as u8)?;
        w.write_u8(f[1] as u8)?;
        for xr in &x {
            for v in xr.row(i) {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        if let Some(p) = prov {
            for r in 0..2 {
                for arr in [&p.z[r], &p.spike[r], &p.gaussian[r]] {
                    for v in arr.row(i) {
                        w.write_f64::<LittleEndian>(*v)?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset container".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let header: Header = serde_json::from_slice(&buf)?;
    header.config.validate()?;
    let n = header.n;
    let k = header.config.k;
    let dims = header.config.dims();
    let mut x = [Array2::zeros((n, dims[0])), Array2::zeros((n, dims[1]))];
    let mut prov = header.debug.then(|| Provenance {
        z: [Array2::zeros((n, k)), Array2::zeros((n, k))],
        spike: [Array2::zeros((n, k)), Array2::zeros((n, k))],
        gaussian: [Array2::zeros((n, dims[0])), Array2::zeros((n, dims[1]))],
    });
    let mut labels = Vec::with_capacity(n);
    let mut suff = Vec::with_capacity(n);
    for i in 0..n {
        labels.push(r.read_u32::<LittleEndian>()? as usize);
        let s1 = r.read_u8()?;
        let s2 = r.read_u8()?;
        if s1 > 1 || s2 > 1 {
            return Err(Error::Format(format!("record {i}: bad sufficiency flag")));
        }
        suff.push([s1 == 1, s2 == 1]);
        for xr in x.iter_mut() {
            for v in xr.row_mut(i) {
                *v = r.read_f64::<LittleEndian>()?;
            }
        }
        if let Some(p) = prov.as_mut() {
            for m in 0..2 {
                for arr in [&mut p.z[m], &mut p.spike[m], &mut p.gaussian[m]] {
                    for v in arr.row_mut(i) {
                        *v = r.read_f64::<LittleEndian>()?;
                    }
                }
            }
        }
    }
    Dataset::new(header.config, x, labels, suff, prov)
}

/// One row per sample: `y,suff1,suff2,x1_0..,x2_0..`.
pub fn write_dataset_csv<W: Write>(mut w: W, ds: &Dataset) -> Result<()> {
    let dims = ds.config.dims();
    let mut head = vec!["y".to_string(), "suff1".into(), "suff2".into()];
    for (r, d) in dims.iter().enumerate() {
        head.extend((0..*d).map(|i| format!("x{}_{}", r + 1, i)));
    }
    writeln!(w, "{}", head.join(","))?;
    let x = [ds.inputs(Modality::First), ds.inputs(Modality::Second)];
    for i in 0..ds.n() {
        let f = ds.sufficiency()[i];
        let mut row = vec![
            ds.labels()[i].to_string(),
            (f[0] as u8).to_string(),
            (f[1] as u8).to_string(),
        ];
        for xr in &x {
            row.extend(xr.row(i).iter().map(|v| v.to_string()));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseCodingModel;
    use crate::rng::substream;

    fn dataset() -> Dataset {
        let m = SparseCodingModel::new(DataConfig::default(), &mut substream(1, "dictionary")).unwrap();
        m.sample_dataset(25, &mut substream(1, "data")).unwrap()
    }

    #[test]
    fn debug_container_keeps_everything() {
        let ds = dataset();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, true).unwrap();
        assert_eq!(read_dataset(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn release_container_drops_provenance() {
        let ds = dataset();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, false).unwrap();
        let back = read_dataset(&buf[..]).unwrap();
        assert!(back.provenance().is_none());
        assert_eq!(back, ds.without_provenance());
        // header + 25 * (4 + 2 + 128 * 8)
        let header_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 12 + header_len + 25 * (6 + 128 * 8));
    }

    #[test]
    fn bad_magic_rejected() {
        let ds = dataset();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, false).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_dataset(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_container_fails() {
        let ds = dataset();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds, false).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_dataset(&buf[..]).is_err());
    }

    #[test]
    fn csv_shape() {
        let ds = dataset();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 26);
        let head: Vec<&str> = lines[0].split(',').collect();
        assert_eq!(&head[..4], &["y", "suff1", "suff2", "x1_0"]);
        assert_eq!(head.len(), 3 + 128);
        assert_eq!(*head.last().unwrap(), "x2_63");
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0].parse::<usize>().unwrap(), ds.labels()[0]);
        let v: f64 = first[3].parse().unwrap();
        assert_eq!(v, ds.inputs(Modality::First)[[0, 0]]);
    }
}
