//! Parameter checkpoints and the matching Adam state files.
//!
//! Both start with a text header (a magic line, then one `out in` line per layer,
//! then an empty line) followed by little-endian `f64` data: each layer's weights in
//! row-major order, then its biases. The Adam file has a `step <t>` line after the
//! magic line and stores the first moments followed by the second moments.

use std::path::{Path, PathBuf};

use betree_core::transform::{Activation, AdamConfig, AdamState, LayerParams, MlpArchitecture, ParameterSet};

use crate::error::{IoError, Result};

const CKPT_MAGIC: &str = "BETREE-CKPT v1";
const ADAM_MAGIC: &str = "BETREE-ADAM v1";

/// Where the Adam state belonging to a checkpoint lives.
pub fn adam_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".adam");
    PathBuf::from(s)
}

pub fn encode_checkpoint(params: &ParameterSet) -> Vec<u8> {
    let mut out = layer_header(CKPT_MAGIC, None, params.architecture());
    push_layers(&mut out, params.layers());
    out
}

pub fn encode_adam(state: &AdamState, arch: &MlpArchitecture) -> Vec<u8> {
    let mut out = layer_header(ADAM_MAGIC, Some(state.step), arch);
    push_layers(&mut out, &state.first_moment);
    push_layers(&mut out, &state.second_moment);
    out
}

pub fn write_checkpoint(path: &Path, params: &ParameterSet) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| IoError::io(path, e))
}

pub fn write_adam(path: &Path, state: &AdamState, arch: &MlpArchitecture) -> Result<()> {
    std::fs::write(path, encode_adam(state, arch)).map_err(|e| IoError::io(path, e))
}

/// Reads a checkpoint. The activation is not part of the file and must be supplied.
pub fn read_checkpoint(path: &Path, activation: Activation) -> Result<ParameterSet> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_checkpoint(&bytes, path, activation)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path, activation: Activation) -> Result<ParameterSet> {
    let (header, data) = split_header(bytes, path)?;
    let mut lines = header.lines();
    expect_magic(lines.next(), CKPT_MAGIC, path)?;
    let arch = parse_layers(lines, path, activation)?;
    let mut values = floats(data, path)?;
    let layers = take_layers(&mut values, &arch, path)?;
    ensure_consumed(&values, path)?;
    Ok(ParameterSet::from_layers(arch, layers)?)
}

/// Reads an Adam state and checks it against the architecture it belongs to.
pub fn read_adam(path: &Path, arch: &MlpArchitecture, config: AdamConfig) -> Result<AdamState> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_adam(&bytes, path, arch, config)
}

pub fn decode_adam(bytes: &[u8], path: &Path, arch: &MlpArchitecture, config: AdamConfig) -> Result<AdamState> {
    let (header, data) = split_header(bytes, path)?;
    let mut lines = header.lines();
    expect_magic(lines.next(), ADAM_MAGIC, path)?;
    let step = lines
        .next()
        .and_then(|l| l.strip_prefix("step "))
        .and_then(|s| s.trim().parse::<u64>().ok())
        .ok_or_else(|| IoError::format(path, "step line", "expected `step <count>`"))?;
    let stored = parse_layers(lines, path, arch.activation())?;
    if stored.layer_sizes() != arch.layer_sizes() {
        return Err(IoError::format(
            path,
            "layer shapes",
            format!("file has {stored}, checkpoint has {arch}"),
        ));
    }
    let mut values = floats(data, path)?;
    let first_moment = take_layers(&mut values, arch, path)?;
    let second_moment = take_layers(&mut values, arch, path)?;
    ensure_consumed(&values, path)?;
    Ok(AdamState {
        config,
        step,
        first_moment,
        second_moment,
    })
}

fn layer_header(magic: &str, step: Option<u64>, arch: &MlpArchitecture) -> Vec<u8> {
    let mut text = format!("{magic}\n");
    if let Some(t) = step {
        text.push_str(&format!("step {t}\n"));
    }
    for (out, inp) in arch.layer_shapes() {
        text.push_str(&format!("{out} {inp}\n"));
    }
    text.push('\n');
    text.into_bytes()
}

fn push_layers(out: &mut Vec<u8>, layers: &[LayerParams]) {
    for l in layers {
        for v in l.weight.data().iter().chain(l.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn split_header<'a>(bytes: &'a [u8], path: &Path) -> Result<(&'a str, &'a [u8])> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| IoError::format(path, "header", "missing empty line after the layer list"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| IoError::format(path, "header", "not UTF-8 text"))?;
    Ok((header, &bytes[end + 2..]))
}

fn expect_magic(line: Option<&str>, magic: &str, path: &Path) -> Result<()> {
    match line {
        Some(l) if l == magic => Ok(()),
        other => Err(IoError::format(
            path,
            "magic line",
            format!("expected {magic:?}, found {:?}", other.unwrap_or("")),
        )),
    }
}

fn parse_layers<'a>(lines: impl Iterator<Item = &'a str>, path: &Path, activation: Activation) -> Result<MlpArchitecture> {
    let mut sizes: Vec<usize> = Vec::new();
    for (k, line) in lines.enumerate() {
        let field = format!("layer {k} shape");
        let mut parts = line.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(out)), Some(Ok(inp)), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(IoError::format(path, field, format!("expected `out in`, found {line:?}")));
        };
        match sizes.last() {
            None => sizes.push(inp),
            Some(&prev) if prev != inp => {
                return Err(IoError::format(path, field, format!("input size {inp} does not follow output size {prev}")));
            }
            Some(_) => {}
        }
        sizes.push(out);
    }
    MlpArchitecture::new(sizes, activation).map_err(|e| IoError::format(path, "layer shapes", e.to_string()))
}

fn floats(data: &[u8], path: &Path) -> Result<std::collections::VecDeque<f64>> {
    if !data.len().is_multiple_of(8) {
        return Err(IoError::format(path, "parameter data", format!("{} bytes is not a whole number of f64 values", data.len())));
    }
    Ok(data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn take_layers(values: &mut std::collections::VecDeque<f64>, arch: &MlpArchitecture, path: &Path) -> Result<Vec<LayerParams>> {
    let mut layers = Vec::with_capacity(arch.num_layers());
    for (k, (out, inp)) in arch.layer_shapes().enumerate() {
        if values.len() < out * inp + out {
            return Err(IoError::format(path, "parameter data", format!("truncated in layer {k}")));
        }
        let mut layer = LayerParams::zeros(out, inp);
        for v in layer.weight.data_mut().iter_mut().chain(layer.bias.data_mut()) {
            *v = values.pop_front().expect("length checked");
        }
        layers.push(layer);
    }
    Ok(layers)
}

fn ensure_consumed(values: &std::collections::VecDeque<f64>, path: &Path) -> Result<()> {
    if values.is_empty() {
        Ok(())
    } else {
        Err(IoError::format(path, "parameter data", format!("{} trailing values", values.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use betree_core::transform::init_params;

    fn arch() -> MlpArchitecture {
        MlpArchitecture::new(vec![3, 4, 2], Activation::Tanh).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&init_params(&arch(), 1));
        let text = b"BETREE-CKPT v1\n4 3\n2 4\n\n";
        assert_eq!(&bytes[..text.len()], text);
        assert_eq!(bytes.len(), text.len() + 8 * (12 + 4 + 8 + 2));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let p = init_params(&arch(), 7);
        let back = decode_checkpoint(&encode_checkpoint(&p), Path::new("m"), Activation::Tanh).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn adam_round_trip() {
        let a = arch();
        let mut state = AdamState::new(AdamConfig::default(), &a);
        state.step = 42;
        state.first_moment[1].bias.data_mut()[1] = -0.5;
        state.second_moment[0].weight.data_mut()[5] = 2.5;
        let back = decode_adam(&encode_adam(&state, &a), Path::new("m"), &a, AdamConfig::default()).unwrap();
        assert_eq!(back, state);
        let other = MlpArchitecture::new(vec![3, 5, 2], Activation::Tanh).unwrap();
        assert!(decode_adam(&encode_adam(&state, &a), Path::new("m"), &other, AdamConfig::default()).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_checkpoint(&init_params(&arch(), 1));
        let m = Path::new("m");
        let err = decode_checkpoint(&bytes[..bytes.len() - 8], m, Activation::Relu).unwrap_err();
        assert!(err.to_string().contains("parameter data"), "{err}");
        let mut extra = bytes.clone();
        extra.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(decode_checkpoint(&extra, m, Activation::Relu).is_err());
        let err = decode_checkpoint(b"BETREE-CKPT v2\n1 1\n\n", m, Activation::Relu).unwrap_err();
        assert!(err.to_string().contains("magic line"), "{err}");
        let err = decode_checkpoint(b"BETREE-CKPT v1\n4 3\n2 5\n\n", m, Activation::Relu).unwrap_err();
        assert!(err.to_string().contains("layer 1 shape"), "{err}");
    }

    #[test]
    fn sibling_path() {
        assert_eq!(adam_path(Path::new("out/model.ckpt")), PathBuf::from("out/model.ckpt.adam"));
    }
}
