//! Bundle file layout:
//!
//! ```text
//! magic "SAETIBND" | version u32 LE | header length u64 LE | JSON header | f64 LE payload
//! ```
//!
//! The header carries the configuration, normalization, snippets and the
//! name and shape of every parameter block, in payload order, plus a SHA-256
//! of the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::ParamSet;
use crate::error::{Error, Result};
use crate::models::{Reconstructor, Recognizer};
use crate::snippets::SnippetSet;
use crate::ts::NormParams;

pub const BUNDLE_MAGIC: &[u8; 8] = b"SAETIBND";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub ell: usize,
    pub latent: usize,
    pub seed: u64,
    pub names: Vec<String>,
}

/// Everything needed to impute a new series.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: BundleConfig,
    pub norm: NormParams,
    pub snippets: Vec<SnippetSet>,
    pub recognizer: Recognizer,
    pub reconstructor: Reconstructor,
}

#[derive(Serialize, Deserialize)]
struct Block {
    model: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: BundleConfig,
    norm: NormParams,
    snippets: Vec<SnippetSet>,
    blocks: Vec<Block>,
    payload_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ModelBundle {
    pub fn new(
        config: BundleConfig,
        norm: NormParams,
        snippets: Vec<SnippetSet>,
        recognizer: Recognizer,
        reconstructor: Reconstructor,
    ) -> Result<Self> {
        let c = &config;
        let mismatch = |field: &str, got: usize, want: usize| {
            Error::Format(format!("{field} is {got}, config says {want}"))
        };
        if c.names.len() != c.d {
            return Err(mismatch("names", c.names.len(), c.d));
        }
        if norm.d() != c.d {
            return Err(mismatch("norm.d", norm.d(), c.d));
        }
        if snippets.len() != c.d {
            return Err(mismatch("snippets", snippets.len(), c.d));
        }
        for (j, s) in snippets.iter().enumerate() {
            if s.coord != j || s.m != c.m || s.k() != c.k || s.items.iter().any(|i| i.values.len() != c.m) {
                return Err(Error::Format(format!("snippets[{j}] inconsistent with config")));
            }
        }
        for (field, got, want) in [
            ("recognizer.d", recognizer.d(), c.d),
            ("recognizer.k", recognizer.k(), c.k),
            ("recognizer.m", recognizer.m(), c.m),
            ("reconstructor.d", reconstructor.d(), c.d),
            ("reconstructor.m", reconstructor.m(), c.m),
            ("reconstructor.latent", reconstructor.latent(), c.latent),
        ] {
            if got != want {
                return Err(mismatch(field, got, want));
            }
        }
        Ok(ModelBundle {
            config,
            norm,
            snippets,
            recognizer,
            reconstructor,
        })
    }

    fn models(&self) -> [(&'static str, &ParamSet); 2] {
        [
            ("recognizer", self.recognizer.params()),
            ("reconstructor", self.reconstructor.params()),
        ]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut blocks = Vec::new();
        for (model, params) in self.models() {
            for (name, t) in params.iter() {
                blocks.push(Block {
                    model: model.into(),
                    name: name.into(),
                    shape: t.shape().to_vec(),
                });
                for v in t.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = Header {
            config: self.config.clone(),
            norm: self.norm.clone(),
            snippets: self.snippets.clone(),
            blocks,
            payload_sha256: hex(&Sha256::digest(&payload)),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + payload.len());
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |msg: String| Error::Format(msg);
        if bytes.len() < 20 || &bytes[..8] != BUNDLE_MAGIC {
            return Err(fmt("not a bundle file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != BUNDLE_VERSION {
            return Err(fmt(format!("version {version}, expected {BUNDLE_VERSION}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(fmt(format!(
                "truncated header: {} of {header_len} bytes",
                body.len()
            )));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| fmt(format!("header: {e}")))?;
        let payload = &body[header_len..];

        let c = &header.config;
        let mut recognizer = Recognizer::new(c.d, c.k, c.m, 0)?;
        let mut reconstructor = Reconstructor::new(c.d, c.m, c.latent, 0)?;
        let expected: usize = [recognizer.params(), reconstructor.params()]
            .iter()
            .map(|p| p.num_values() * 8)
            .sum();
        if payload.len() != expected {
            return Err(fmt(format!(
                "payload is {} bytes, config implies {expected}",
                payload.len()
            )));
        }
        if hex(&Sha256::digest(payload)) != header.payload_sha256 {
            return Err(fmt("payload checksum mismatch".into()));
        }

        let mut blocks = header.blocks.iter();
        let mut offset = 0;
        for (model, params) in [
            ("recognizer", recognizer.params_mut()),
            ("reconstructor", reconstructor.params_mut()),
        ] {
            for i in 0..params.len() {
                let block = blocks
                    .next()
                    .ok_or_else(|| fmt(format!("missing block for {model}.{}", params.name(i))))?;
                let t = params.get(i);
                if block.model != model || block.name != params.name(i) || block.shape != t.shape() {
                    return Err(fmt(format!(
                        "block {}.{} {:?} where {model}.{} {:?} expected",
                        block.model,
                        block.name,
                        block.shape,
                        params.name(i),
                        t.shape()
                    )));
                }
                let len = t.len();
                let data = params.get_mut(i).data_mut();
                for (v, chunk) in data.iter_mut().zip(payload[offset..offset + len * 8].chunks_exact(8)) {
                    *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                }
                offset += len * 8;
            }
        }
        if blocks.next().is_some() {
            return Err(fmt("extra parameter blocks".into()));
        }
        ModelBundle::new(header.config, header.norm, header.snippets, recognizer, reconstructor)
    }

    /// SHA-256 of the serialized bundle.
    pub fn checksum(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_bytes()?)))
    }
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, bundle.to_bytes()?)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    ModelBundle::from_bytes(&std::fs::read(path)?)
}
