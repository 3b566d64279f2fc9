//! Binary tensor checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "RIBCKPT\x01"
//! count      u32
//! count × { name_len u32, name utf-8, rows u64, cols u64 }
//! count × { rows·cols f64 values, row-major }
//! ```

use std::io::{Read, Write};

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RIBCKPT\x01";

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, Matrix)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, m) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
    }
    for (_, m) in tensors {
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Matrix)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut header = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        header.push((name, rows, cols));
    }
    let mut out = Vec::with_capacity(count);
    for (name, rows, cols) in header {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        out.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(out)
}

pub fn params_to_tensors(params: &ParamStore, prefix: &str) -> Vec<(String, Matrix)> {
    params
        .iter()
        .map(|(_, p)| (format!("{prefix}{}", p.name), p.value.clone()))
        .collect()
}

pub fn tensors_to_params(tensors: &[(String, Matrix)]) -> Result<ParamStore> {
    let mut ps = ParamStore::new();
    for (name, m) in tensors {
        ps.add(name.clone(), m.clone())?;
    }
    Ok(ps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let tensors = vec![
            ("a".to_string(), Matrix::from_vec(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap()),
            ("layer.0/w".to_string(), Matrix::zeros(0, 3)),
            ("b".to_string(), Matrix::scalar(std::f64::consts::PI)),
        ];
        let mut buf = Vec::new();
        write_tensors(&mut buf, &tensors).unwrap();
        let back = read_tensors(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for ((n1, m1), (n2, m2)) in tensors.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(m1.shape(), m2.shape());
            let bits1: Vec<u64> = m1.data().iter().map(|x| x.to_bits()).collect();
            let bits2: Vec<u64> = m2.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits1, bits2);
        }
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[("x".into(), Matrix::scalar(1.0))]).unwrap();
        assert!(read_tensors(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(matches!(read_tensors(buf.as_slice()), Err(Error::Checkpoint(_))));
    }
}
