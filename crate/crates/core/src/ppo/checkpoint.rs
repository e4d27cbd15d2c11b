//! Policy checkpoint files.
//!
//! Layout, version 1:
//!
//! ```text
//! driftnav-policy 1\n
//! <header JSON on one line>\n
//! <payload: little-endian f64, actor parameters then critic parameters>
//! ```
//!
//! The header holds `format_version`, the actor and critic [`MlpSpec`]s, the
//! full [`TrainConfig`], the step and update counters and `payload_len`, the
//! number of f64 values that follow. Within each network the parameters are
//! stored layer by layer, weights (out × in, row-major) before biases.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActorCritic, Mlp, MlpSpec, PpoError, TrainConfig};

const MAGIC: &str = "driftnav-policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub policy: ActorCritic,
    pub config: TrainConfig,
    /// Environment steps trained.
    pub steps: usize,
    pub updates: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    actor: MlpSpec,
    critic: MlpSpec,
    config: TrainConfig,
    steps: usize,
    updates: usize,
    payload_len: usize,
}

pub fn write_checkpoint<W: Write>(mut out: W, ckpt: &PolicyCheckpoint) -> Result<(), PpoError> {
    let header = Header {
        format_version: FORMAT_VERSION,
        actor: ckpt.policy.actor.spec().clone(),
        critic: ckpt.policy.critic.spec().clone(),
        config: ckpt.config.clone(),
        steps: ckpt.steps,
        updates: ckpt.updates,
        payload_len: ckpt.policy.n_params(),
    };
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    let json = serde_json::to_string(&header).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
    writeln!(out, "{json}")?;
    for p in ckpt.policy.actor.params().iter().chain(ckpt.policy.critic.params()) {
        out.write_all(&p.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<PolicyCheckpoint, PpoError> {
    let bad = |m: String| PpoError::Checkpoint(m);
    let mut input = BufReader::new(input);
    let mut line = String::new();
    input.read_line(&mut line)?;
    let version = line
        .trim_end()
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| bad("not a policy checkpoint".into()))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    line.clear();
    input.read_line(&mut line)?;
    let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| bad(format!("header: {e}")))?;
    let expected = h.actor.n_params() + h.critic.n_params();
    if h.payload_len != expected {
        return Err(PpoError::ShapeMismatch {
            expected,
            got: h.payload_len,
        });
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * expected {
        return Err(bad(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            8 * expected
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    let na = h.actor.n_params();
    let actor = Mlp::from_params(h.actor, values[..na].to_vec())?;
    let critic = Mlp::from_params(h.critic, values[na..].to_vec())?;
    Ok(PolicyCheckpoint {
        policy: ActorCritic { actor, critic },
        config: h.config,
        steps: h.steps,
        updates: h.updates,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &PolicyCheckpoint) -> Result<(), PpoError> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(f), ckpt)
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyCheckpoint, PpoError> {
    read_checkpoint(std::fs::File::open(path)?)
}
