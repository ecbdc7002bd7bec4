use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Qep2SeqModel;
use super::params::{ModelDims, Params};
use super::vocab::Vocab;
use super::ModelError;

pub const CHECKPOINT_HEADER: &str = "QEP2SEQ v1";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Meta {
    dims: ModelDims,
    vocab_in: Vocab,
    vocab_out: Vocab,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct TensorMeta {
    name: String,
    len: usize,
}

/// Header line, one JSON metadata line, then every tensor as little-endian
/// `f64` in [`Params::tensors`] order.
pub fn write_model<W: Write>(model: &Qep2SeqModel, mut w: W) -> Result<(), ModelError> {
    model.validate()?;
    let meta = Meta {
        dims: model.dims(),
        vocab_in: model.vocab_in.clone(),
        vocab_out: model.vocab_out.clone(),
        tensors: model
            .params
            .tensors()
            .iter()
            .map(|(n, t)| TensorMeta { name: n.to_string(), len: t.len() })
            .collect(),
    };
    writeln!(w, "{CHECKPOINT_HEADER}")?;
    let json = serde_json::to_string(&meta).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    writeln!(w, "{json}")?;
    for (_, t) in model.params.tensors() {
        for x in t {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<Qep2SeqModel, ModelError> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end_matches('\n') != CHECKPOINT_HEADER {
        return Err(ModelError::Checkpoint("missing header".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let meta: Meta = serde_json::from_str(line.trim_end()).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut model = Qep2SeqModel::zeros(meta.vocab_in, meta.vocab_out, meta.dims);
    let expected: Vec<TensorMeta> = model
        .params
        .tensors()
        .iter()
        .map(|(n, t)| TensorMeta { name: n.to_string(), len: t.len() })
        .collect();
    if expected != meta.tensors {
        return Err(ModelError::Checkpoint("tensor table does not match the declared dimensions".into()));
    }
    let mut buf = [0u8; 8];
    for (_, t) in model.params.tensors_mut() {
        for x in t.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| ModelError::Checkpoint("truncated tensor data".into()))?;
            *x = f64::from_le_bytes(buf);
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes after tensors".into()));
    }
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &Qep2SeqModel, path: &Path) -> Result<(), ModelError> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<Qep2SeqModel, ModelError> {
    read_model(File::open(path)?)
}

impl Params {
    /// Bytes of the tensor section alone, for quick equality checks.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.tensors().iter().flat_map(|(_, t)| t.iter().flat_map(|x| x.to_le_bytes())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Qep2SeqModel {
        Qep2SeqModel::new(
            Vocab::build(["a", "b"]),
            Vocab::build(["x", "<T>"]),
            ModelDims { hidden: 3, enc_embed: 2, dec_embed: 4 },
            0.1,
            5,
        )
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let m = model();
        let mut a = Vec::new();
        write_model(&m, &mut a).unwrap();
        let back = read_model(&a[..]).unwrap();
        assert_eq!(back, m);
        let mut b = Vec::new();
        write_model(&back, &mut b).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(b"QEP2SEQ v1\n"));
    }

    #[test]
    fn truncation_and_bad_header_are_rejected() {
        let mut a = Vec::new();
        write_model(&model(), &mut a).unwrap();
        assert!(matches!(read_model(&a[..a.len() - 3]), Err(ModelError::Checkpoint(_))));
        a[0] = b'X';
        assert!(matches!(read_model(&a[..]), Err(ModelError::Checkpoint(_))));
    }
}
