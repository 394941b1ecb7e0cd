//! Dataset container: magic "CSIT", version u16 LE, tensor count u32 LE,
//! dims `[2, K, N_BS, N_UE]` as u32 LE each, then row-major f32 LE values
//! for every tensor. A sidecar JSON manifest records the generator version,
//! every setting, and per-file digests.

use super::{CsiTensor, GenSetting};
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CSIT";
pub const VERSION: u16 = 1;
/// Bumped when the draw order or formula of the generator changes.
pub const GENERATOR_VERSION: u32 = 1;

/// Write tensors (all with identical dims) to a container file.
pub fn write_container(path: &Path, tensors: &[CsiTensor]) -> Result<()> {
    if tensors.is_empty() {
        return Err(Error::argument("cannot write an empty container"));
    }
    let (k, n_bs, n_ue) = (tensors[0].k, tensors[0].n_bs, tensors[0].n_ue);
    for t in tensors {
        if (t.k, t.n_bs, t.n_ue) != (k, n_bs, n_ue) {
            return Err(Error::argument("container tensors must share dims"));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u16::<LittleEndian>(VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>(tensors.len() as u32).map_err(io_err)?;
    for d in [2u32, k as u32, n_bs as u32, n_ue as u32] {
        w.write_u32::<LittleEndian>(d).map_err(io_err)?;
    }
    for t in tensors {
        for v in &t.data {
            w.write_f32::<LittleEndian>(*v as f32).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Read a container written by [`write_container`]. The subcarrier spacing
/// is not part of the binary layout; it comes from the manifest.
pub fn read_container(path: &Path, subcarrier_spacing_hz: f64) -> Result<Vec<CsiTensor>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let p = path.display().to_string();
    let io_err = |e| Error::io(p.clone(), e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::corrupt(&p, "bad magic bytes"));
    }
    let version = r.read_u16::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(Error::corrupt(&p, format!("unsupported version {version}")));
    }
    let count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut dims = [0u32; 4];
    for d in dims.iter_mut() {
        *d = r.read_u32::<LittleEndian>().map_err(io_err)?;
    }
    if dims[0] != 2 || dims[1..].iter().any(|d| *d == 0) {
        return Err(Error::corrupt(&p, format!("bad dims {dims:?}")));
    }
    let (k, n_bs, n_ue) = (dims[1] as usize, dims[2] as usize, dims[3] as usize);
    let per = 2 * k * n_bs * n_ue;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(per);
        for _ in 0..per {
            data.push(r.read_f32::<LittleEndian>().map_err(io_err)? as f64);
        }
        out.push(CsiTensor {
            data,
            k,
            n_bs,
            n_ue,
            subcarrier_spacing_hz,
        });
    }
    Ok(out)
}

/// Hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// One container file entry in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub tensor_count: usize,
    pub dims: [u32; 4],
    pub setting: GenSetting,
}

/// Sidecar manifest for a generated (or preprocessed) dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub generator_version: u32,
    /// "frequency" for raw CSI, "delay" for preprocessed samples.
    pub domain: String,
    pub subcarrier_spacing_hz: f64,
    pub antenna_model: String,
    pub base_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(domain: &str, subcarrier_spacing_hz: f64, base_seed: u64) -> Self {
        DatasetManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            generator_version: GENERATOR_VERSION,
            domain: domain.to_string(),
            subcarrier_spacing_hz,
            antenna_model: "independent per (BS, UE) antenna pair".to_string(),
            base_seed,
            entries: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("manifest serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&json)
            .map_err(|e| Error::corrupt(path.display().to_string(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelgen::{builtin_profile, generate_csi, DEFAULT_SUBCARRIER_SPACING_HZ};

    #[test]
    fn container_round_trip_preserves_f32_values() {
        let setting = GenSetting {
            profile: builtin_profile("EPA").unwrap(),
            snr_db: Some(20.0),
            k: 16,
            n_bs: 2,
            n_ue: 2,
            seed: 4,
            samples: 3,
            subcarrier_spacing_hz: DEFAULT_SUBCARRIER_SPACING_HZ,
        };
        let tensors = generate_csi(&setting).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csit");
        write_container(&path, &tensors).unwrap();
        let back = read_container(&path, DEFAULT_SUBCARRIER_SPACING_HZ).unwrap();
        assert_eq!(back.len(), tensors.len());
        for (a, b) in tensors.iter().zip(&back) {
            assert_eq!((a.k, a.n_bs, a.n_ue), (b.k, b.n_bs, b.n_ue));
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!((*x as f32) as f64, *y);
            }
        }
    }

    #[test]
    fn rejects_corrupt_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csit");
        std::fs::write(&path, b"NOPE00000000").unwrap();
        let err = read_container(&path, 15e3).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = DatasetManifest::new("frequency", 15e3, 9);
        m.entries.push(ManifestEntry {
            file: "x.csit".into(),
            sha256: "00".into(),
            tensor_count: 1,
            dims: [2, 16, 2, 2],
            setting: GenSetting {
                profile: builtin_profile("EVA").unwrap(),
                snr_db: None,
                k: 16,
                n_bs: 2,
                n_ue: 2,
                seed: 1,
                samples: 1,
                subcarrier_spacing_hz: 15e3,
            },
        });
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.entries.len(), 1);
        assert_eq!(back.domain, "frequency");
        assert_eq!(back.entries[0].setting.snr_db, None);
    }
}
