//! Self-describing binary model container: magic "CDE1", little-endian f64
//! payloads, per-section length prefixes, trailing CRC32.

use crate::density::DensityParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{Activation, Layer, NetworkParams};
use crate::train::TrainConfig;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CDE1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub version: u32,
    pub net: NetworkParams,
    pub density: DensityParams,
    pub column_min: Vec<f64>,
    pub column_max: Vec<f64>,
    pub config: TrainConfig,
}

fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB88320 ^ (c >> 1) } else { c >> 1 };
        }
        *entry = c;
    }
    let mut crc = 0xFFFFFFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFFFFFF
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }
    fn section(&mut self, payload: Vec<u8>) {
        self.u64(payload.len() as u64);
        self.buf.extend_from_slice(&payload);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Malformed("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
    fn section(&mut self) -> Result<Reader<'a>> {
        let len = self.u64()? as usize;
        let bytes = self.take(len)?;
        Ok(Reader { bytes, pos: 0 })
    }
}

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
        Activation::Bounded => 3,
    }
}

fn act_from_code(c: u8) -> Result<Activation> {
    match c {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Identity),
        3 => Ok(Activation::Bounded),
        other => Err(Error::Malformed(format!("unknown activation code {other}"))),
    }
}

fn write_layers(w: &mut Writer, layers: &[Layer]) {
    w.u32(layers.len() as u32);
    for l in layers {
        w.u32(l.w.rows as u32);
        w.u32(l.w.cols as u32);
        w.buf.push(act_code(l.activation));
        w.f64s(&l.w.data);
        w.f64s(&l.b);
    }
}

fn read_layers(r: &mut Reader) -> Result<Vec<Layer>> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let act = act_from_code(r.take(1)?[0])?;
        let data = r.f64s()?;
        if data.len() != rows * cols {
            return Err(Error::Malformed("layer weight size mismatch".into()));
        }
        let b = r.f64s()?;
        out.push(Layer {
            w: Matrix::from_vec(rows, cols, data),
            b,
            activation: act,
        });
    }
    Ok(out)
}

pub fn encode(mf: &ModelFile) -> Result<Vec<u8>> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);

    let config_json = serde_json::to_vec(&mf.config)
        .map_err(|e| Error::Malformed(format!("config serialization: {e}")))?;
    w.section(config_json);

    let mut norm = Writer { buf: Vec::new() };
    norm.f64s(&mf.column_min);
    norm.f64s(&mf.column_max);
    w.section(norm.buf);

    let mut net = Writer { buf: Vec::new() };
    net.f64(mf.net.bound_margin);
    write_layers(&mut net, &mf.net.encoder);
    write_layers(&mut net, &mf.net.decoder);
    w.section(net.buf);

    let mut dens = Writer { buf: Vec::new() };
    dens.u32(mf.density.d_latent as u32);
    dens.u32(mf.density.k_cutoff as u32);
    dens.u32(mf.density.rank as u32);
    dens.f64s(&mf.density.lambda);
    for d in 0..mf.density.d_latent {
        dens.f64s(&mf.density.re[d].data);
        dens.f64s(&mf.density.im[d].data);
    }
    w.section(dens.buf);

    let crc = crc32(&w.buf);
    w.u32(crc);
    Ok(w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<ModelFile> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Malformed("missing CDE1 magic".into()));
    }
    if bytes.len() < 4 + 4 + 4 {
        return Err(Error::Malformed("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32(body) != stored {
        return Err(Error::Checksum);
    }
    let mut r = Reader {
        bytes: body,
        pos: 4,
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let cfg_sec = r.section()?;
    let config: TrainConfig = serde_json::from_slice(cfg_sec.bytes)
        .map_err(|e| Error::Malformed(format!("config section: {e}")))?;

    let mut norm = r.section()?;
    let column_min = norm.f64s()?;
    let column_max = norm.f64s()?;

    let mut net_sec = r.section()?;
    let bound_margin = net_sec.f64()?;
    let encoder = read_layers(&mut net_sec)?;
    let decoder = read_layers(&mut net_sec)?;
    let net = NetworkParams {
        encoder,
        decoder,
        bound_margin,
    };

    let mut dens = r.section()?;
    let d_latent = dens.u32()? as usize;
    let k_cutoff = dens.u32()? as usize;
    let rank = dens.u32()? as usize;
    let lambda = dens.f64s()?;
    let mut re = Vec::with_capacity(d_latent);
    let mut im = Vec::with_capacity(d_latent);
    for _ in 0..d_latent {
        let rd = dens.f64s()?;
        let id = dens.f64s()?;
        if rd.len() != k_cutoff * rank || id.len() != k_cutoff * rank {
            return Err(Error::Malformed("half-spectrum size mismatch".into()));
        }
        re.push(Matrix::from_vec(k_cutoff, rank, rd));
        im.push(Matrix::from_vec(k_cutoff, rank, id));
    }
    let density = DensityParams {
        d_latent,
        k_cutoff,
        rank,
        lambda,
        re,
        im,
    };

    Ok(ModelFile {
        version,
        net,
        density,
        column_min,
        column_max,
        config,
    })
}

pub fn save_model(path: &Path, mf: &ModelFile) -> Result<()> {
    std::fs::write(path, encode(mf)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, Activation::*, LayerSpec};

    fn sample_model() -> ModelFile {
        let net = init_params(
            &[LayerSpec::new(3, 4, Tanh), LayerSpec::new(4, 2, Bounded)],
            &[LayerSpec::new(2, 4, Tanh), LayerSpec::new(4, 3, Identity)],
            13,
            false,
        )
        .unwrap();
        ModelFile {
            version: VERSION,
            net,
            density: DensityParams::init_random(2, 3, 4, 99),
            column_min: vec![0.0, -1.0, 2.0],
            column_max: vec![1.0, 4.0, 8.0],
            config: TrainConfig::default(),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mf = sample_model();
        let bytes = encode(&mf).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(mf, back);
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let bytes = encode(&sample_model()).unwrap();
        let cut = &bytes[..bytes.len() - 10];
        match decode(cut) {
            Err(Error::Checksum) | Err(Error::Malformed(_)) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = encode(&sample_model()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        assert!(matches!(decode(&bytes), Err(Error::Checksum)));
    }

    #[test]
    fn version_bump_is_explicit_error() {
        let mut bytes = encode(&sample_model()).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        // refresh checksum so the version check, not the CRC, fires
        let body_len = bytes.len() - 4;
        let crc = crc32(&bytes[..body_len]);
        let tail = bytes.len() - 4;
        bytes[tail..].copy_from_slice(&crc.to_le_bytes());
        match decode(&bytes) {
            Err(Error::Version { found: 2, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
