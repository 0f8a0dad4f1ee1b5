//! Single-file checkpoint: versioned JSON header (field names, shapes,
//! seed, vocab) followed by little-endian IEEE-754 arrays in declaration
//! order.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{LayerParams, ModelConfig, ModelParams};
use crate::scalar::Scalar;
use crate::vocab::Vocab;

const MAGIC: &[u8; 8] = b"MLMCKPT\x01";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabSpec {
    pub tokens: Vec<Vec<u8>>,
    pub special: Vec<u32>,
    pub byte_fallback: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dtype: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub fields: Vec<FieldSpec>,
    pub vocab: VocabSpec,
}

fn field_manifest(config: &ModelConfig) -> Vec<FieldSpec> {
    let d = config.dim;
    let ff = config.ff_dim();
    let mut fields = vec![
        FieldSpec {
            name: "tok_emb".into(),
            shape: vec![config.vocab_size, d],
        },
        FieldSpec {
            name: "pos_emb".into(),
            shape: vec![config.context_len, d],
        },
    ];
    for i in 0..config.layers {
        let layer = |n: &str, shape: Vec<usize>| FieldSpec {
            name: format!("layer{i}.{n}"),
            shape,
        };
        fields.push(layer("ln1_g", vec![d]));
        fields.push(layer("wq", vec![d, d]));
        fields.push(layer("wk", vec![d, d]));
        fields.push(layer("wv", vec![d, d]));
        fields.push(layer("wo", vec![d, d]));
        fields.push(layer("ln2_g", vec![d]));
        fields.push(layer("w_fc1", vec![ff, d]));
        fields.push(layer("w_fc2", vec![d, ff]));
    }
    fields.push(FieldSpec {
        name: "lnf_g".into(),
        shape: vec![d],
    });
    if !config.tied_head {
        fields.push(FieldSpec {
            name: "head".into(),
            shape: vec![config.vocab_size, d],
        });
    }
    fields
}

fn arrays_in_order<'a, F: Scalar>(params: &'a ModelParams<F>) -> Vec<&'a [F]> {
    let mut out: Vec<&[F]> = vec![&params.tok_emb, &params.pos_emb];
    for l in &params.layers {
        out.push(&l.ln1_g);
        out.push(&l.wq);
        out.push(&l.wk);
        out.push(&l.wv);
        out.push(&l.wo);
        out.push(&l.ln2_g);
        out.push(&l.w_fc1);
        out.push(&l.w_fc2);
    }
    out.push(&params.lnf_g);
    if let Some(h) = params.head.as_ref() {
        out.push(h);
    }
    out
}

pub fn save_checkpoint<F: Scalar>(params: &ModelParams<F>, path: &Path) -> Result<(), Error> {
    let header = CheckpointHeader {
        version: VERSION,
        dtype: F::DTYPE.to_string(),
        seed: params.seed,
        config: params.config.clone(),
        fields: field_manifest(&params.config),
        vocab: VocabSpec {
            tokens: params.vocab.all_tokens().to_vec(),
            special: params.vocab.special_ids().collect(),
            byte_fallback: params.vocab.byte_fallback(),
        },
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;

    let mut body = Vec::new();
    for arr in arrays_in_order(params) {
        for &v in arr {
            v.write_le(&mut body);
        }
    }

    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    file.write_all(&body)?;
    Ok(())
}

/// Load a checkpoint into precision `F`, converting element-wise when the
/// stored dtype differs.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<ModelParams<F>, Error> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16 + hlen;
    if bytes.len() < header_end {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::Checkpoint(format!("header decode: {e}")))?;
    if header.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {}",
            header.version
        )));
    }
    let expected_fields = field_manifest(&header.config);
    if header.fields.len() != expected_fields.len()
        || header
            .fields
            .iter()
            .zip(&expected_fields)
            .any(|(a, b)| a.name != b.name || a.shape != b.shape)
    {
        return Err(Error::Checkpoint("field manifest mismatch".into()));
    }

    let elem = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::Checkpoint(format!("unknown dtype {other}"))),
    };
    let total_elems: usize = header
        .fields
        .iter()
        .map(|f| f.shape.iter().product::<usize>())
        .sum();
    let body = &bytes[header_end..];
    if body.len() != total_elems * elem {
        return Err(Error::Checkpoint(format!(
            "body size {} does not match manifest ({} elements of {} bytes)",
            body.len(),
            total_elems,
            elem
        )));
    }

    let mut offset = 0usize;
    let mut read_array = |count: usize| -> Vec<F> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let v = match header.dtype.as_str() {
                "f32" => F::from_f64(f32::read_le(&body[offset..]).to_f64()),
                _ => F::from_f64(f64::read_le(&body[offset..])),
            };
            out.push(v);
            offset += elem;
        }
        out
    };

    let config = header.config.clone();
    let d = config.dim;
    let ff = config.ff_dim();
    let tok_emb = read_array(config.vocab_size * d);
    let pos_emb = read_array(config.context_len * d);
    let mut layers = Vec::with_capacity(config.layers);
    for _ in 0..config.layers {
        layers.push(LayerParams {
            ln1_g: read_array(d),
            wq: read_array(d * d),
            wk: read_array(d * d),
            wv: read_array(d * d),
            wo: read_array(d * d),
            ln2_g: read_array(d),
            w_fc1: read_array(ff * d),
            w_fc2: read_array(d * ff),
        });
    }
    let lnf_g = read_array(d);
    let head = (!config.tied_head).then(|| read_array(config.vocab_size * d));

    let special: BTreeSet<u32> = header.vocab.special.iter().copied().collect();
    let vocab = Vocab::from_tokens(header.vocab.tokens, special, header.vocab.byte_fallback);
    if vocab.size() != config.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocab size {} does not match config {}",
            vocab.size(),
            config.vocab_size
        )));
    }

    Ok(ModelParams {
        config,
        vocab,
        seed: header.seed,
        tok_emb,
        pos_emb,
        layers,
        lnf_g,
        head,
    })
}
