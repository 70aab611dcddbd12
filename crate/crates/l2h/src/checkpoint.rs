//! Plain-text model checkpoints.
//!
//! ```text
//! format_version=1
//! architecture=mlp1:32
//! input_dim=2
//! output_dim=3
//! num_classes=3
//! frozen=false
//! seed=42
//! c_e=1.0000000000000000e-1
//! c_1=1.0000000000000000e0
//! param_count=195
//! params=<comma-separated floats>
//! ```
//!
//! `seed`, `c_e` and `c_1` are optional.

use std::path::Path;

use l2h_core::models::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
use l2h_core::{Architecture, CostParams, RngSeed};

use crate::error::{read, write, FormatError};
use crate::kv::{fmt_float, fmt_floats, KvFile};

pub fn to_text(ck: &Checkpoint) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    put("format_version", ck.format_version.to_string());
    put("architecture", ck.architecture.to_string());
    put("input_dim", ck.input_dim.to_string());
    put("output_dim", ck.output_dim.to_string());
    put("num_classes", ck.num_classes.to_string());
    put("frozen", ck.frozen.to_string());
    if let Some(s) = ck.seed {
        put("seed", s.0.to_string());
    }
    if let Some(c) = ck.costs {
        put("c_e", fmt_float(c.c_e));
        put("c_1", fmt_float(c.c_1));
    }
    put("param_count", ck.params.len().to_string());
    put("params", fmt_floats(&ck.params));
    out
}

pub fn from_text(text: &str) -> Result<Checkpoint, FormatError> {
    let kv = KvFile::parse(text)?;
    let version: u32 = kv.parse_req("format_version")?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(FormatError::Version {
            found: version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let architecture: Architecture = kv.req("architecture")?.parse().map_err(|_| {
        FormatError::Inconsistent(format!(
            "unknown architecture `{}`",
            kv.req("architecture").unwrap_or("")
        ))
    })?;
    let input_dim: usize = kv.parse_req("input_dim")?;
    let output_dim: usize = kv.parse_req("output_dim")?;
    let params = kv.floats("params")?;
    let declared: usize = kv.parse_req("param_count")?;
    if declared != params.len() {
        return Err(FormatError::Inconsistent(format!(
            "param_count says {declared} but {} values follow",
            params.len()
        )));
    }
    let expected = architecture.param_count(input_dim, output_dim);
    if expected != params.len() {
        return Err(FormatError::Inconsistent(format!(
            "{architecture} with {input_dim} inputs and {output_dim} outputs needs {expected} params, found {}",
            params.len()
        )));
    }
    let costs = match (kv.parse_opt::<f64>("c_e")?, kv.parse_opt::<f64>("c_1")?) {
        (Some(c_e), Some(c_1)) => Some(CostParams::new(c_e, c_1)?),
        (None, None) => None,
        _ => {
            return Err(FormatError::Inconsistent(
                "c_e and c_1 must appear together".into(),
            ))
        }
    };
    Ok(Checkpoint {
        format_version: version,
        architecture,
        input_dim,
        output_dim,
        num_classes: kv.parse_req("num_classes")?,
        frozen: kv.parse_req("frozen")?,
        seed: kv.parse_opt::<u64>("seed")?.map(RngSeed),
        costs,
        params,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<(), FormatError> {
    write(path, &to_text(ck))
}

pub fn load(path: &Path) -> Result<Checkpoint, FormatError> {
    from_text(&read(path)?)
}
