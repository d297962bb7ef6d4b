//! Versioned checkpoint files: a magic line followed by one JSON document.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::{AdamRecord, AdamState, ParamRecord, ParamSet};
use crate::scalar::Scalar;
use crate::trainer::ModelState;

pub const MAGIC: &str = "SEMSUM-CKPT-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Body {
    scalar: String,
    config: ModelConfig,
    epoch: usize,
    seed: u64,
    passes: u64,
    selector: ParamRecord,
    generator: ParamRecord,
    discriminator: ParamRecord,
    opt_selector: AdamRecord,
    opt_generator: AdamRecord,
    opt_discriminator: AdamRecord,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_bytes<S: Scalar>(state: &ModelState<S>) -> Result<Vec<u8>> {
    let m = &state.model;
    let body = Body {
        scalar: S::NAME.to_string(),
        config: m.config.clone(),
        epoch: state.epoch,
        seed: state.seed,
        passes: state.passes,
        selector: m.selector.params.to_record(),
        generator: m.generator.params.to_record(),
        discriminator: m.discriminator.params.to_record(),
        opt_selector: state.opt_selector.to_record(),
        opt_generator: state.opt_generator.to_record(),
        opt_discriminator: state.opt_discriminator.to_record(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    serde_json::to_writer(&mut out, &body)?;
    out.push(b'\n');
    Ok(out)
}

fn split_magic(bytes: &[u8]) -> Result<&[u8]> {
    let nl = bytes.iter().position(|&b| b == b'\n');
    match nl {
        Some(i) if &bytes[..i] == MAGIC.as_bytes() => Ok(&bytes[i + 1..]),
        _ => Err(Error::Checkpoint(format!(
            "not a checkpoint: missing `{MAGIC}` header"
        ))),
    }
}

fn restore<S: Scalar>(target: &mut ParamSet<S>, rec: &ParamRecord) -> Result<()> {
    target.load_from(&ParamSet::from_record(rec)?)
}

pub fn from_bytes<S: Scalar>(bytes: &[u8]) -> Result<ModelState<S>> {
    let body: Body = serde_json::from_slice(split_magic(bytes)?)
        .map_err(|e| Error::Checkpoint(format!("malformed checkpoint body: {e}")))?;
    if body.scalar != S::NAME {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} parameters, requested {}",
            body.scalar,
            S::NAME
        )));
    }
    let mut model = Model::<S>::new(body.config, body.seed)
        .map_err(|e| Error::Checkpoint(format!("invalid model config: {e}")))?;
    restore(&mut model.selector.params, &body.selector)?;
    restore(&mut model.generator.params, &body.generator)?;
    restore(&mut model.discriminator.params, &body.discriminator)?;
    if !model.all_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    Ok(ModelState {
        opt_selector: AdamState::from_record(&body.opt_selector, &model.selector.params)?,
        opt_generator: AdamState::from_record(&body.opt_generator, &model.generator.params)?,
        opt_discriminator: AdamState::from_record(
            &body.opt_discriminator,
            &model.discriminator.params,
        )?,
        model,
        epoch: body.epoch,
        seed: body.seed,
        passes: body.passes,
    })
}

pub fn save_checkpoint<S: Scalar>(state: &ModelState<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(state)?;
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&bytes).map_err(io_err(path))
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<ModelState<S>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    from_bytes(&bytes)
}

/// Scalar type name (`"f32"` or `"f64"`) recorded in a checkpoint.
pub fn peek_scalar(path: impl AsRef<Path>) -> Result<String> {
    #[derive(Deserialize)]
    struct Head {
        scalar: String,
    }
    let path = path.as_ref();
    let mut reader = BufReader::new(std::fs::File::open(path).map_err(io_err(path))?);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(io_err(path))?;
    if line.trim_end_matches(['\n', '\r']) != MAGIC {
        return Err(Error::Checkpoint(format!(
            "not a checkpoint: missing `{MAGIC}` header"
        )));
    }
    let head: Head = serde_json::from_reader(reader)
        .map_err(|e| Error::Checkpoint(format!("malformed checkpoint body: {e}")))?;
    Ok(head.scalar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let state = ModelState::<f32>::new(ModelConfig::desk(6, 4), 3).unwrap();
        let bytes = to_bytes(&state).unwrap();
        assert!(bytes.starts_with(MAGIC.as_bytes()));
        let back: ModelState<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(back, state);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_wrong_scalar() {
        let state = ModelState::<f64>::new(ModelConfig::desk(3, 2), 0).unwrap();
        let mut bytes = to_bytes(&state).unwrap();
        assert!(from_bytes::<f32>(&bytes).is_err());
        bytes[0] = b'X';
        assert!(matches!(from_bytes::<f64>(&bytes), Err(Error::Checkpoint(_))));
        assert!(from_bytes::<f64>(b"garbage").is_err());
    }
}
