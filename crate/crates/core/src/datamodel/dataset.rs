//! Line-delimited claims files.
//!
//! Each non-blank line is one JSON object:
//!
//! ```text
//! {"id": "c1", "label": 1,
//!  "embeddings": {"rows": 3, "dim": 4, "data": [...]} | "path/to/nodes.vgt",
//!  "edges": [[0, 1], [0, 2]],
//!  "ocr": [...] | "path.vgt",                  (optional)
//!  "image": "path.ppm" | "path.vgt",           (optional)
//!  "visual_embedding": [...] | "path.vgt"}     (optional)
//! ```
//!
//! Relative paths resolve against the directory holding the claims file.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::claim::Claim;
use super::tensor_io::{load_image, load_tensor, save_tensor};
use crate::error::{Result, VgaError};
use crate::tensorcore::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub claims: Vec<Claim>,
    pub source: Option<PathBuf>,
    /// Generator seed for synthetic datasets.
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixField {
    Path(String),
    Inline {
        rows: usize,
        dim: usize,
        data: Vec<f64>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum VectorField {
    Path(String),
    Inline(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    label: u8,
    embeddings: MatrixField,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ocr: Option<VectorField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    visual_embedding: Option<VectorField>,
}

/// How [`save_dataset`] writes tensors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaveOptions {
    /// Write node embeddings and vectors as VGT1 files next to the claims file instead of inline.
    pub external_tensors: bool,
}

/// Round every value to the nearest `f32`, the precision of all dataset storage.
pub fn snap_f32(mut t: Tensor) -> Tensor {
    for v in t.data_mut() {
        *v = *v as f32 as f64;
    }
    t
}

impl Dataset {
    pub fn new(claims: Vec<Claim>) -> Result<Self> {
        let ds = Dataset {
            claims,
            source: None,
            seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    /// Shared node-embedding width `D`.
    pub fn embedding_dim(&self) -> Option<usize> {
        self.claims.first().map(Claim::embedding_dim)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.claims.iter().map(|c| c.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            claims: indices.iter().map(|&i| self.claims[i].clone()).collect(),
            source: self.source.clone(),
            seed: self.seed,
        }
    }

    /// Unique ids, per-claim validity and a single embedding width across claims.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let dim = self.embedding_dim();
        for c in &self.claims {
            c.validate()?;
            if !ids.insert(c.id.as_str()) {
                return Err(VgaError::Contract(format!("duplicate claim id '{}'", c.id)));
            }
            if Some(c.embedding_dim()) != dim {
                return Err(VgaError::dim(format!(
                    "claim '{}' has embedding width {}, expected {}",
                    c.id,
                    c.embedding_dim(),
                    dim.unwrap_or(0)
                )));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn record_to_claim(rec: Record, base: &Path, line: usize) -> Result<Claim> {
    let parse = |message: String| VgaError::Parse { line, message };
    let node_embeddings = match rec.embeddings {
        MatrixField::Path(p) => load_tensor(resolve(base, &p))?,
        MatrixField::Inline { rows, dim, data } => {
            if rows * dim != data.len() || rows == 0 || dim == 0 {
                return Err(parse(format!(
                    "embeddings declare {rows}×{dim} but hold {} values",
                    data.len()
                )));
            }
            Tensor::new(vec![rows, dim], data)?
        }
    };
    if node_embeddings.rank() != 2 {
        return Err(VgaError::dim(format!(
            "claim '{}': embeddings tensor must be rank 2, got {:?}",
            rec.id,
            node_embeddings.shape()
        )));
    }
    let vector = |f: VectorField, what: &str| -> Result<Tensor> {
        let t = match f {
            VectorField::Path(p) => load_tensor(resolve(base, &p))?,
            VectorField::Inline(v) if v.is_empty() => return Err(parse(format!("empty {what}"))),
            VectorField::Inline(v) => Tensor::vector(v),
        };
        Ok(Tensor::vector(t.into_data()))
    };
    if rec.label > 1 {
        return Err(parse(format!("label must be 0 or 1, found {}", rec.label)));
    }
    let claim = Claim {
        label: rec.label,
        node_embeddings: snap_f32(node_embeddings),
        edges: rec.edges.iter().map(|e| (e[0], e[1])).collect(),
        ocr: rec.ocr.map(|f| vector(f, "ocr")).transpose()?.map(snap_f32),
        image: rec
            .image
            .map(|p| load_image(resolve(base, &p)))
            .transpose()?
            .map(snap_f32),
        visual_embedding: rec
            .visual_embedding
            .map(|f| vector(f, "visual_embedding"))
            .transpose()?
            .map(snap_f32),
        id: rec.id,
    };
    claim.validate()?;
    Ok(claim)
}

/// Read and fully validate a claims file.
///
/// All tensor values are held at `f32` precision, so a dataset survives save/load bit for bit.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| VgaError::file(path, e))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut claims = Vec::new();
    let mut ids = HashSet::new();
    let mut dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| VgaError::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| VgaError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !ids.insert(rec.id.clone()) {
            return Err(VgaError::Parse {
                line: line_no,
                message: format!("duplicate claim id '{}'", rec.id),
            });
        }
        let claim = record_to_claim(rec, &base, line_no)?;
        match dim {
            None => dim = Some(claim.embedding_dim()),
            Some(d) if d != claim.embedding_dim() => {
                return Err(VgaError::dim(format!(
                    "line {line_no}: claim '{}' has embedding width {}, earlier claims have {d}",
                    claim.id,
                    claim.embedding_dim()
                )))
            }
            Some(_) => {}
        }
        claims.push(claim);
    }
    Ok(Dataset {
        claims,
        source: Some(path.to_path_buf()),
        seed: None,
    })
}

/// Directory for tensor files written alongside `path`: `<stem>.assets/`.
pub fn assets_dir(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "claims".into());
    path.with_file_name(format!("{stem}.assets"))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write `ds` as a claims file; images (and, optionally, all tensors) go to `<stem>.assets/`.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, opts: SaveOptions) -> Result<()> {
    let path = path.as_ref();
    let assets = assets_dir(path);
    let assets_name = assets.file_name().unwrap().to_string_lossy().into_owned();
    let needs_assets = opts.external_tensors || ds.claims.iter().any(|c| c.image.is_some());
    if needs_assets {
        fs::create_dir_all(&assets).map_err(|e| VgaError::file(&assets, e))?;
    }
    let mut out = Vec::new();
    for (i, c) in ds.claims.iter().enumerate() {
        let stem = format!("{i:05}_{}", file_safe(&c.id));
        let write_asset = |suffix: &str, t: &Tensor| -> Result<String> {
            let name = format!("{stem}.{suffix}.vgt");
            save_tensor(assets.join(&name), t)?;
            Ok(format!("{assets_name}/{name}"))
        };
        let embeddings = if opts.external_tensors {
            MatrixField::Path(write_asset("nodes", &c.node_embeddings)?)
        } else {
            MatrixField::Inline {
                rows: c.node_embeddings.rows(),
                dim: c.node_embeddings.cols(),
                data: c.node_embeddings.data().to_vec(),
            }
        };
        let vector = |t: &Tensor, suffix: &str| -> Result<VectorField> {
            if opts.external_tensors {
                Ok(VectorField::Path(write_asset(suffix, t)?))
            } else {
                Ok(VectorField::Inline(t.data().to_vec()))
            }
        };
        let ocr = c.ocr.as_ref().map(|t| vector(t, "ocr")).transpose()?;
        let visual_embedding = c
            .visual_embedding
            .as_ref()
            .map(|t| vector(t, "visual"))
            .transpose()?;
        let image = c
            .image
            .as_ref()
            .map(|t| write_asset("image", t))
            .transpose()?;
        let rec = Record {
            id: c.id.clone(),
            label: c.label,
            embeddings,
            edges: c.edges.iter().map(|&(p, ch)| [p, ch]).collect(),
            ocr,
            image,
            visual_embedding,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| VgaError::file(path, e))?;
    f.write_all(&out).map_err(|e| VgaError::file(path, e))
}
