//! Model files: a TOML header followed by a little-endian `f64` payload.
//!
//! ```text
//! format = "chanest-gmm"
//! version = 1
//! scenario_id = "env-A"
//! structure = "full"
//! ...
//! weights = [0.25, ...]
//! # payload
//! <means: K x N complex> <covariances: K x (N x N complex | rows real)>
//! ```
//! Complex numbers are stored as `(re, im)` pairs, matrices row-major.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::cgmm::{GmmModel, Structure};
use crate::channel_sim::ArrayGeometry;
use crate::error::{Error, Result};
use crate::fsio::{self, Reader};
use crate::speclin::CovarianceRep;
use crate::C64;

const FORMAT: &str = "chanest-gmm";
const VERSION: u32 = 1;
const SEPARATOR: &[u8] = b"\n# payload\n";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    scenario_id: String,
    structure: Structure,
    k: usize,
    n: usize,
    /// Length of each covariance parameter block in `f64` values.
    cov_len: usize,
    payload_bytes: usize,
    geometry: ArrayGeometry,
    weights: Vec<f64>,
}

fn cov_len(structure: Structure, n: usize) -> usize {
    match structure {
        Structure::Full => 2 * n * n,
        Structure::Toeplitz => 4 * n,
        Structure::Circulant => n,
    }
}

pub fn encode_model(model: &GmmModel, scenario_id: &str) -> Vec<u8> {
    let (k, n) = (model.k(), model.n());
    let mut payload = Vec::new();
    let mut put = |v: f64| payload.extend_from_slice(&v.to_le_bytes());
    for z in model.means().iter() {
        put(z.re);
        put(z.im);
    }
    for cov in model.covs() {
        match cov {
            CovarianceRep::Full(c) => c.iter().for_each(|z| {
                put(z.re);
                put(z.im);
            }),
            CovarianceRep::Structured { c, .. } => c.iter().for_each(|&v| put(v)),
        }
    }
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        scenario_id: scenario_id.into(),
        structure: model.structure(),
        k,
        n,
        cov_len: cov_len(model.structure(), n),
        payload_bytes: payload.len(),
        geometry: *model.geometry(),
        weights: model.weights().to_vec(),
    };
    let mut out = toml::to_string(&header).expect("header serializes").into_bytes();
    if out.last() == Some(&b'\n') {
        out.pop();
    }
    out.extend_from_slice(SEPARATOR);
    out.extend_from_slice(&payload);
    out
}

/// Parses a model file, returning the model and its training scenario id.
pub fn decode_model(bytes: &[u8], path: &Path) -> Result<(GmmModel, String)> {
    let split = bytes
        .windows(SEPARATOR.len())
        .position(|w| w == SEPARATOR)
        .ok_or_else(|| Error::format(path, "missing payload separator"))?;
    let text = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::format(path, "header is not UTF-8"))?;
    let header: Header = toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    if header.format != FORMAT {
        return Err(Error::format(path, format!("unexpected format '{}'", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", header.version)));
    }
    let (k, n) = (header.k, header.n);
    if n != header.geometry.n() || header.weights.len() != k || header.cov_len != cov_len(header.structure, n) {
        return Err(Error::format(path, "inconsistent header dimensions"));
    }
    let expected = 8 * (2 * k * n + k * header.cov_len);
    let payload = &bytes[split + SEPARATOR.len()..];
    if header.payload_bytes != expected || payload.len() != expected {
        return Err(Error::format(path, format!("payload has {} bytes, expected {expected}", payload.len())));
    }
    let mut r = Reader::new(payload, path);
    let complex = |r: &mut Reader| -> Result<C64> { Ok(C64::new(r.f64()?, r.f64()?)) };
    let mut means = Array2::<C64>::zeros((k, n));
    for z in means.iter_mut() {
        *z = complex(&mut r)?;
    }
    let factor = header.structure.factor(header.geometry);
    let mut covs = Vec::with_capacity(k);
    for _ in 0..k {
        let cov = match &factor {
            None => {
                let mut c = Array2::<C64>::zeros((n, n));
                for z in c.iter_mut() {
                    *z = complex(&mut r)?;
                }
                CovarianceRep::Full(c)
            }
            Some(f) => {
                let mut c = Array1::<f64>::zeros(header.cov_len);
                for v in c.iter_mut() {
                    *v = r.f64()?;
                }
                CovarianceRep::structured(Arc::clone(f), c).map_err(|e| Error::format(path, e.to_string()))?
            }
        };
        covs.push(cov);
    }
    let model = GmmModel::new(header.geometry, header.structure, Array1::from(header.weights), means, covs)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((model, header.scenario_id))
}

pub fn write_model(path: &Path, model: &GmmModel, scenario_id: &str) -> Result<()> {
    fsio::write_atomic(path, &encode_model(model, scenario_id))
}

pub fn read_model(path: &Path) -> Result<(GmmModel, String)> {
    decode_model(&fsio::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream};
    use rand::Rng;

    fn model(structure: Structure, seed: u64) -> GmmModel {
        let g = ArrayGeometry::new(2, 3, 0.5, 1.0).unwrap();
        let mut rng = stream(seed, 0);
        let k = 3;
        let means = Array2::from_shape_fn((k, 6), |_| complex_normal(&mut rng));
        let covs = (0..k)
            .map(|_| match structure.factor(g) {
                None => {
                    let x = Array2::from_shape_fn((8, 6), |_| complex_normal(&mut rng));
                    CovarianceRep::Full(crate::linalg::outer_sum(x.view()))
                }
                Some(f) => {
                    let c = Array1::from_shape_fn(f.rows(), |_| rng.random::<f64>());
                    CovarianceRep::structured(f, c).unwrap()
                }
            })
            .collect();
        let w = Array1::from(vec![0.2, 0.3, 0.5]);
        GmmModel::new(g, structure, w, means, covs).unwrap()
    }

    #[test]
    fn round_trips_every_structure() {
        for (i, s) in Structure::ALL.into_iter().enumerate() {
            let m = model(s, i as u64);
            let bytes = encode_model(&m, "env-A");
            let (back, id) = decode_model(&bytes, Path::new("m.gmm")).unwrap();
            assert_eq!(back, m);
            assert_eq!(id, "env-A");
        }
    }

    #[test]
    fn header_is_readable_text() {
        let bytes = encode_model(&model(Structure::Circulant, 9), "env-B");
        let split = bytes.windows(SEPARATOR.len()).position(|w| w == SEPARATOR).unwrap();
        let text = std::str::from_utf8(&bytes[..split]).unwrap();
        assert!(text.contains("structure = \"circulant\""));
        assert!(text.contains("version = 1"));
    }

    #[test]
    fn rejects_corrupt_files() {
        let bytes = encode_model(&model(Structure::Full, 3), "env-A");
        let p = Path::new("m.gmm");
        assert!(matches!(decode_model(&bytes[..bytes.len() - 8], p), Err(Error::Format { .. })));
        let text = String::from_utf8_lossy(&bytes).replace("version = 1", "version = 9");
        assert!(decode_model(text.as_bytes(), p).is_err());
        assert!(decode_model(b"garbage", p).is_err());
    }
}
