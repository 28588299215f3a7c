//! Native binary artifact format.
//!
//! Layout: magic `BSQZ`, u32 version, u32 type tag, u64 payload length,
//! payload, CRC32 of the payload. All integers and floats little-endian;
//! matrices are stored row-major as f64. Round-trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::compressed::CompressedPomdp;
use crate::error::{Error, Result};
use crate::sampling::{BeliefMatrix, SampleProvenance};
use crate::solver::{AlphaVector, SpaceTag, ValueFunction};
use crate::vdc::{CompressionBasis, CompressionMethod};

pub const MAGIC: &[u8; 4] = b"BSQZ";
pub const VERSION: u32 = 1;

const TAG_BELIEFS: u32 = 1;
const TAG_BASIS: u32 = 2;
const TAG_COMPRESSED: u32 = 3;
const TAG_VALUE: u32 = 4;

/// Persisted object kinds.
#[derive(Debug, Clone)]
pub enum Artifact {
    Beliefs(BeliefMatrix),
    Basis(CompressionBasis),
    Compressed(CompressedPomdp),
    Value(ValueFunction),
}

impl Artifact {
    fn tag(&self) -> u32 {
        match self {
            Artifact::Beliefs(_) => TAG_BELIEFS,
            Artifact::Basis(_) => TAG_BASIS,
            Artifact::Compressed(_) => TAG_COMPRESSED,
            Artifact::Value(_) => TAG_VALUE,
        }
    }
}

struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    fn new() -> Self {
        Enc { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Artifact("truncated payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Artifact("invalid utf-8 string".into()))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }
}

fn method_tag(m: CompressionMethod) -> u8 {
    match m {
        CompressionMethod::Vdc => 0,
        CompressionMethod::Onmf => 1,
        CompressionMethod::Lpnmf => 2,
        CompressionMethod::Pnmf => 3,
    }
}

fn method_from(tag: u8) -> Result<CompressionMethod> {
    Ok(match tag {
        0 => CompressionMethod::Vdc,
        1 => CompressionMethod::Onmf,
        2 => CompressionMethod::Lpnmf,
        3 => CompressionMethod::Pnmf,
        other => return Err(Error::Artifact(format!("unknown method tag {other}"))),
    })
}

fn encode_basis(enc: &mut Enc, b: &CompressionBasis) {
    enc.u8(method_tag(b.method));
    enc.u8(b.nonnegative as u8);
    match b.contraction_margin {
        Some(m) => {
            enc.u8(1);
            enc.f64(m);
        }
        None => enc.u8(0),
    }
    enc.str(&b.provenance);
    enc.matrix(&b.f);
    enc.matrix(&b.f_dag);
}

fn decode_basis(dec: &mut Dec) -> Result<CompressionBasis> {
    let method = method_from(dec.u8()?)?;
    let nonnegative = dec.u8()? != 0;
    let margin = if dec.u8()? != 0 {
        Some(dec.f64()?)
    } else {
        None
    };
    let provenance = dec.str()?;
    let f = dec.matrix()?;
    let f_dag = dec.matrix()?;
    Ok(CompressionBasis {
        f,
        f_dag,
        method,
        nonnegative,
        contraction_margin: margin,
        provenance,
    })
}

fn encode(artifact: &Artifact) -> Vec<u8> {
    let mut enc = Enc::new();
    match artifact {
        Artifact::Beliefs(bm) => {
            enc.u64(bm.provenance.seed);
            enc.u64(bm.provenance.horizon_cap as u64);
            enc.str(&bm.provenance.policy);
            enc.matrix(bm.matrix());
        }
        Artifact::Basis(b) => encode_basis(&mut enc, b),
        Artifact::Compressed(c) => {
            enc.u64(c.k as u64);
            enc.u64(c.n_actions as u64);
            enc.u64(c.n_obs as u64);
            enc.f64(c.discount);
            enc.matrix(&c.r_tilde);
            for m in &c.t_tilde {
                enc.matrix(m);
            }
            encode_basis(&mut enc, &c.basis);
        }
        Artifact::Value(vf) => {
            match vf.space {
                SpaceTag::Original => {
                    enc.u8(0);
                    enc.u64(0);
                }
                SpaceTag::Compressed { basis_id } => {
                    enc.u8(1);
                    enc.u64(basis_id);
                }
            }
            enc.u64(vf.vectors.len() as u64);
            enc.u64(vf.dim() as u64);
            for v in &vf.vectors {
                enc.u32(v.action as u32);
                for &x in v.values.iter() {
                    enc.f64(x);
                }
            }
        }
    }
    enc.buf
}

fn decode(tag: u32, payload: &[u8]) -> Result<Artifact> {
    let mut dec = Dec {
        buf: payload,
        pos: 0,
    };
    let artifact = match tag {
        TAG_BELIEFS => {
            let seed = dec.u64()?;
            let horizon_cap = dec.u64()? as usize;
            let policy = dec.str()?;
            let data = dec.matrix()?;
            Artifact::Beliefs(BeliefMatrix::from_matrix(
                data,
                SampleProvenance {
                    seed,
                    policy,
                    horizon_cap,
                },
            ))
        }
        TAG_BASIS => Artifact::Basis(decode_basis(&mut dec)?),
        TAG_COMPRESSED => {
            let k = dec.u64()? as usize;
            let n_actions = dec.u64()? as usize;
            let n_obs = dec.u64()? as usize;
            let discount = dec.f64()?;
            let r_tilde = dec.matrix()?;
            let mut t_tilde = Vec::with_capacity(n_actions * n_obs);
            for _ in 0..n_actions * n_obs {
                t_tilde.push(dec.matrix()?);
            }
            let basis = decode_basis(&mut dec)?;
            Artifact::Compressed(CompressedPomdp {
                r_tilde,
                t_tilde,
                basis,
                discount,
                k,
                n_actions,
                n_obs,
            })
        }
        TAG_VALUE => {
            let space = if dec.u8()? == 0 {
                dec.u64()?;
                SpaceTag::Original
            } else {
                SpaceTag::Compressed {
                    basis_id: dec.u64()?,
                }
            };
            let count = dec.u64()? as usize;
            let dim = dec.u64()? as usize;
            let mut vectors = Vec::with_capacity(count);
            for _ in 0..count {
                let action = dec.u32()? as usize;
                let mut values = nalgebra::DVector::zeros(dim);
                for i in 0..dim {
                    values[i] = dec.f64()?;
                }
                vectors.push(AlphaVector { values, action });
            }
            Artifact::Value(ValueFunction { vectors, space })
        }
        other => return Err(Error::Artifact(format!("unknown type tag {other}"))),
    };
    if dec.pos != payload.len() {
        return Err(Error::Artifact(format!(
            "{} trailing bytes after payload",
            payload.len() - dec.pos
        )));
    }
    Ok(artifact)
}

pub fn save_artifact(path: &Path, artifact: &Artifact) -> Result<()> {
    let payload = encode(artifact);
    let crc = crc32fast::hash(&payload);
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&artifact.tag().to_le_bytes())?;
    file.write_all(&(payload.len() as u64).to_le_bytes())?;
    file.write_all(&payload)?;
    file.write_all(&crc.to_le_bytes())?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<Artifact> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[0..4] != MAGIC {
        return Err(Error::Artifact("not a BSQZ artifact".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Artifact(format!(
            "version mismatch: file has {version}, expected {VERSION}"
        )));
    }
    let tag = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() != 20 + len + 4 {
        return Err(Error::Artifact(format!(
            "length mismatch: header says {len} payload bytes, file has {}",
            bytes.len().saturating_sub(24)
        )));
    }
    let payload = &bytes[20..20 + len];
    let stored_crc = u32::from_le_bytes(bytes[20 + len..].try_into().unwrap());
    let crc = crc32fast::hash(payload);
    if crc != stored_crc {
        return Err(Error::Artifact(format!(
            "checksum failure: computed {crc:#010x}, stored {stored_crc:#010x}"
        )));
    }
    decode(tag, payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_pomdp;
    use crate::sampling::sample_beliefs;
    use nalgebra::DVector;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("bsqz-artifact-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn basis_roundtrip_is_bit_exact() {
        let model = random_pomdp(6, 2, 3, 3);
        let obs_w = model.obs_weighted_transitions().unwrap();
        let basis = crate::vdc::krylov_basis(
            &model,
            &obs_w,
            &crate::vdc::VdcConfig::new(crate::vdc::VdcMode::LossyGreedy { k: 3 }),
        )
        .unwrap();
        let path = tmp("basis.bsqz");
        save_artifact(&path, &Artifact::Basis(basis.clone())).unwrap();
        match load_artifact(&path).unwrap() {
            Artifact::Basis(loaded) => {
                assert_eq!(loaded.f, basis.f);
                assert_eq!(loaded.f_dag, basis.f_dag);
                assert_eq!(loaded.method, basis.method);
                assert_eq!(loaded.provenance, basis.provenance);
                assert_eq!(loaded.id(), basis.id());
            }
            other => panic!("wrong artifact kind: {other:?}"),
        }
    }

    #[test]
    fn beliefs_roundtrip() {
        let model = random_pomdp(5, 2, 3, 9);
        let bm = sample_beliefs(&model, 30, 17, 10).unwrap();
        let path = tmp("beliefs.bsqz");
        save_artifact(&path, &Artifact::Beliefs(bm.clone())).unwrap();
        match load_artifact(&path).unwrap() {
            Artifact::Beliefs(loaded) => {
                assert_eq!(loaded.matrix(), bm.matrix());
                assert_eq!(loaded.provenance, bm.provenance);
            }
            other => panic!("wrong artifact kind: {other:?}"),
        }
    }

    #[test]
    fn empty_value_function_roundtrips() {
        // A single zero vector is the degenerate-but-valid case.
        let vf = ValueFunction {
            vectors: vec![AlphaVector {
                values: DVector::zeros(4),
                action: 0,
            }],
            space: SpaceTag::Compressed { basis_id: 99 },
        };
        let path = tmp("value.bsqz");
        save_artifact(&path, &Artifact::Value(vf.clone())).unwrap();
        match load_artifact(&path).unwrap() {
            Artifact::Value(loaded) => assert_eq!(loaded, vf),
            other => panic!("wrong artifact kind: {other:?}"),
        }
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let model = random_pomdp(4, 2, 2, 5);
        let bm = sample_beliefs(&model, 5, 3, 4).unwrap();
        let path = tmp("corrupt.bsqz");
        save_artifact(&path, &Artifact::Beliefs(bm)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        match load_artifact(&path) {
            Err(Error::Artifact(msg)) => assert!(msg.contains("checksum"), "{msg}"),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn large_belief_matrix_roundtrips_quickly() {
        // 20,000 columns: the round-trip budget is five seconds.
        let n = 50;
        let m = 20_000;
        let mut rng = crate::rng::rng_for(8, 0);
        let data = nalgebra::DMatrix::from_fn(n, m, |_, _| rand::Rng::random::<f64>(&mut rng));
        let bm = BeliefMatrix::from_matrix(
            data,
            crate::sampling::SampleProvenance {
                seed: 8,
                policy: "synthetic".into(),
                horizon_cap: 0,
            },
        );
        let path = tmp("large.bsqz");
        let t0 = std::time::Instant::now();
        save_artifact(&path, &Artifact::Beliefs(bm.clone())).unwrap();
        let loaded = match load_artifact(&path).unwrap() {
            Artifact::Beliefs(b) => b,
            other => panic!("wrong artifact kind: {other:?}"),
        };
        let elapsed = t0.elapsed();
        assert_eq!(loaded.matrix(), bm.matrix());
        assert!(elapsed.as_secs_f64() < 5.0, "round-trip took {elapsed:?}");
    }

    #[test]
    fn version_mismatch_is_reported() {
        let model = random_pomdp(4, 2, 2, 5);
        let bm = sample_beliefs(&model, 5, 3, 4).unwrap();
        let path = tmp("version.bsqz");
        save_artifact(&path, &Artifact::Beliefs(bm)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load_artifact(&path) {
            Err(Error::Artifact(msg)) => assert!(msg.contains("version"), "{msg}"),
            other => panic!("expected version mismatch, got {other:?}"),
        }
    }
}
