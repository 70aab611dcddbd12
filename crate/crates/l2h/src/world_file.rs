//! Discrete worlds for the oracle checks.
//!
//! ```text
//! format_version=1
//! points=2
//! classes=3
//! dim=1
//! point.1=0.0
//! point.2=1.0
//! prior=0.5,0.5
//! eta.1=0.7,0.2,0.1
//! eta.2=0.1,0.1,0.8
//! client=1,3
//! ```
//!
//! Labels are 1-based. A stochastic client replaces `client` with one
//! `client_dist.<i>` row per point.

use std::path::Path;

use l2h_core::oracle::{ClientBehavior, DiscreteWorld};
use l2h_core::{FeatureVector, Label};

use crate::error::{read, write, FormatError};
use crate::kv::{fmt_floats, KvFile};

pub const WORLD_FORMAT_VERSION: u32 = 1;

pub fn to_text(world: &DiscreteWorld, client: &ClientBehavior) -> String {
    let mut out = format!(
        "format_version={WORLD_FORMAT_VERSION}\npoints={}\nclasses={}\ndim={}\n",
        world.len(),
        world.num_classes(),
        world.dim()
    );
    for (i, p) in world.support().iter().enumerate() {
        out.push_str(&format!("point.{}={}\n", i + 1, fmt_floats(p.as_slice())));
    }
    out.push_str(&format!("prior={}\n", fmt_floats(world.prior())));
    for s in 0..world.len() {
        out.push_str(&format!("eta.{}={}\n", s + 1, fmt_floats(world.eta(s))));
    }
    match client {
        ClientBehavior::Deterministic(labels) => {
            let l: Vec<String> = labels.iter().map(|l| l.one_based().to_string()).collect();
            out.push_str(&format!("client={}\n", l.join(",")));
        }
        ClientBehavior::Stochastic(rows) => {
            for (s, r) in rows.iter().enumerate() {
                out.push_str(&format!("client_dist.{}={}\n", s + 1, fmt_floats(r)));
            }
        }
    }
    out
}

pub fn from_text(text: &str) -> Result<(DiscreteWorld, ClientBehavior), FormatError> {
    let kv = KvFile::parse(text)?;
    let version: u32 = kv.parse_req("format_version")?;
    if version != WORLD_FORMAT_VERSION {
        return Err(FormatError::Version {
            found: version,
            expected: WORLD_FORMAT_VERSION,
        });
    }
    let s: usize = kv.parse_req("points")?;
    let k: usize = kv.parse_req("classes")?;
    let dim: usize = kv.parse_req("dim")?;
    let rows = |prefix: &str, width: usize| -> Result<Vec<Vec<f64>>, FormatError> {
        (1..=s)
            .map(|i| {
                let key = format!("{prefix}.{i}");
                let row = kv.floats(&key)?;
                if row.len() != width {
                    return Err(FormatError::Inconsistent(format!(
                        "`{key}` has {} values, expected {width}",
                        row.len()
                    )));
                }
                Ok(row)
            })
            .collect()
    };
    let support = rows("point", dim)?.into_iter().map(FeatureVector).collect();
    let prior = kv.floats("prior")?;
    if prior.len() != s {
        return Err(FormatError::Inconsistent(format!(
            "prior has {} values, expected {s}",
            prior.len()
        )));
    }
    let eta = rows("eta", k)?;
    let client = match kv.get("client") {
        Some(list) => {
            let labels = list
                .split(',')
                .map(|t| match t.trim().parse::<usize>() {
                    Ok(l) if (1..=k).contains(&l) => Ok(Label(l - 1)),
                    _ => Err(FormatError::Inconsistent(format!(
                        "client label `{t}` not in 1..={k}"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            ClientBehavior::Deterministic(labels)
        }
        None => ClientBehavior::Stochastic(rows("client_dist", k)?),
    };
    let world = DiscreteWorld::new(support, prior, eta)?;
    client.validate(&world)?;
    Ok((world, client))
}

pub fn save(
    path: &Path,
    world: &DiscreteWorld,
    client: &ClientBehavior,
) -> Result<(), FormatError> {
    write(path, &to_text(world, client))
}

pub fn load(path: &Path) -> Result<(DiscreteWorld, ClientBehavior), FormatError> {
    from_text(&read(path)?)
}
