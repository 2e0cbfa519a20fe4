//! Binary checkpoint of a [`Forecaster`].
//!
//! All integers and floats are little-endian.
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `GLFC` |
//! | 4 | u32 format version (1) |
//! | 1 | u8 target: 0 price, 1 solar |
//! | 28 | u32 × 7: n_features, window, horizon, layers, heads, model_dim, ff_dim |
//! | 8 | f64 dropout |
//! | 4 | u32 column count `C` (= n_features) |
//! | per column | u32 name length, UTF-8 name, f64 mean, f64 std |
//! | 8 | u64 parameter count `P` |
//! | 8·P | f64 parameters in layout order |
//!
//! Layout order is: embedding weight and bias; per layer the query, key,
//! value and output projections (weight then bias), first layer-norm gain
//! and bias, feedforward weights and biases, second layer-norm gain and
//! bias; then the head weight and bias. Weights are row-major
//! `(inputs, outputs)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{ModelConfig, Transformer};
use super::train::Forecaster;
use super::{ForecastError, Normalizer, Target};

pub const MAGIC: &[u8; 4] = b"GLFC";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> ForecastError {
    ForecastError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(f: &Forecaster, mut w: W) -> Result<(), ForecastError> {
    let c = &f.model.config;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[match f.target {
        Target::Price => 0,
        Target::Solar => 1,
    }])?;
    for v in [c.n_features, c.window, c.horizon, c.layers, c.heads, c.model_dim, c.ff_dim] {
        let v = u32::try_from(v).map_err(|_| bad("dimension exceeds u32"))?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&c.dropout.to_le_bytes())?;
    w.write_all(&(f.names.len() as u32).to_le_bytes())?;
    for (j, name) in f.names.iter().enumerate() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&f.normalizer.mean[j].to_le_bytes())?;
        w.write_all(&f.normalizer.std[j].to_le_bytes())?;
    }
    w.write_all(&(f.model.params.len() as u64).to_le_bytes())?;
    for p in &f.model.params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], ForecastError> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| bad(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32, ForecastError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, ForecastError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, ForecastError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Forecaster, ForecastError> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>()? != MAGIC {
        return Err(bad("not a forecaster checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let target = match r.bytes::<1>()?[0] {
        0 => Target::Price,
        1 => Target::Solar,
        t => return Err(bad(format!("unknown target tag {t}"))),
    };
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let config = ModelConfig {
        n_features: dims[0],
        window: dims[1],
        horizon: dims[2],
        layers: dims[3],
        heads: dims[4],
        model_dim: dims[5],
        ff_dim: dims[6],
        dropout: r.f64()?,
    };
    config.check()?;
    let columns = r.u32()? as usize;
    if columns != config.n_features {
        return Err(bad(format!("{columns} columns for {} features", config.n_features)));
    }
    let mut names = Vec::with_capacity(columns);
    let mut mean = Vec::with_capacity(columns);
    let mut std = Vec::with_capacity(columns);
    for _ in 0..columns {
        let len = r.u32()? as usize;
        if len > 1 << 16 {
            return Err(bad("column name too long"));
        }
        let mut buf = vec![0u8; len];
        r.inner
            .read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated file: {e}")))?;
        names.push(String::from_utf8(buf).map_err(|_| bad("column name is not UTF-8"))?);
        mean.push(r.f64()?);
        std.push(r.f64()?);
    }
    let n = r.u64()? as usize;
    let expected = super::model::Layout::new(&config).total;
    if n != expected {
        return Err(bad(format!("{n} parameters, layout needs {expected}")));
    }
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push(r.f64()?);
    }
    if r.inner.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(Forecaster {
        target,
        names,
        normalizer: Normalizer { mean, std },
        model: Transformer::from_params(config, params)?,
    })
}

pub fn save(f: &Forecaster, path: &Path) -> Result<(), ForecastError> {
    write_checkpoint(f, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path) -> Result<Forecaster, ForecastError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Forecaster {
        let config = ModelConfig {
            n_features: 2,
            layers: 1,
            model_dim: 8,
            heads: 2,
            ff_dim: 8,
            ..ModelConfig::reduced(2)
        };
        Forecaster {
            target: Target::Solar,
            names: vec!["ghi".into(), "hour_sin".into()],
            normalizer: Normalizer {
                mean: vec![120.5, 0.0],
                std: vec![210.25, 0.7],
            },
            model: Transformer::new(config, 3).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_checkpoint(&f, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"GLFC");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(buf[8], 1);
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&sample(), &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(read_checkpoint(magic.as_slice()).is_err());
        let mut version = buf;
        version[4] = 9;
        assert!(read_checkpoint(version.as_slice()).is_err());
    }
}
