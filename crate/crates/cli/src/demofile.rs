//! Demonstration file format: one header line (env id, episode count,
//! dims, mean return), then one space-delimited record per step with
//! episode index, step index, observation floats, and action floats.
//! Floats use the shortest round-trip representation, so read(write(x))
//! is bit-exact.

use std::path::Path;

use fpopp_core::env::expert::{DemoSet, DemoStep};
use fpopp_core::env::EnvId;

use crate::error::{Result, RunError};

const TAG: &str = "fpopp-demos";
const VERSION: u32 = 1;

pub fn demos_to_string(demos: &DemoSet) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{TAG} {VERSION} {} {} {} {} {:?}\n",
        demos.env_id.name(),
        demos.episodes.len(),
        demos.obs_dim,
        demos.action_dim,
        demos.mean_return
    ));
    for (ep, steps) in demos.episodes.iter().enumerate() {
        for (t, step) in steps.iter().enumerate() {
            out.push_str(&format!("{ep} {t}"));
            for v in step.obs.iter().chain(step.action.iter()) {
                out.push_str(&format!(" {v:?}"));
            }
            out.push('\n');
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> RunError {
    RunError::Format(format!("corrupt demo file: {}", msg.into()))
}

pub fn demos_from_str(text: &str) -> Result<DemoSet> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 7 || parts[0] != TAG {
        return Err(bad("bad header line"));
    }
    let version: u32 = parts[1].parse().map_err(|_| bad("bad version"))?;
    if version != VERSION {
        return Err(RunError::Format(format!(
            "demo file version mismatch: {version} (expected {VERSION})"
        )));
    }
    let env_id = EnvId::parse(parts[2]).ok_or_else(|| bad(format!("unknown env `{}`", parts[2])))?;
    let episodes: usize = parts[3].parse().map_err(|_| bad("bad episode count"))?;
    let obs_dim: usize = parts[4].parse().map_err(|_| bad("bad obs dim"))?;
    let action_dim: usize = parts[5].parse().map_err(|_| bad("bad action dim"))?;
    let mean_return: f64 = parts[6].parse().map_err(|_| bad("bad mean return"))?;

    let mut out: Vec<Vec<DemoStep>> = vec![Vec::new(); episodes];
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(' ');
        let ep: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad episode index", lineno + 2)))?;
        let step: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad step index", lineno + 2)))?;
        let floats: Vec<f64> = it
            .map(|s| s.parse().map_err(|_| bad(format!("line {}: bad float", lineno + 2))))
            .collect::<Result<_>>()?;
        if floats.len() != obs_dim + action_dim {
            return Err(bad(format!("line {}: wrong record width", lineno + 2)));
        }
        if ep >= episodes {
            return Err(bad(format!("line {}: episode index out of range", lineno + 2)));
        }
        if step != out[ep].len() {
            return Err(bad(format!("line {}: non-contiguous step index", lineno + 2)));
        }
        out[ep].push(DemoStep {
            obs: floats[..obs_dim].to_vec(),
            action: floats[obs_dim..].to_vec(),
        });
    }
    Ok(DemoSet { env_id, obs_dim, action_dim, mean_return, episodes: out })
}

pub fn write_demos(path: &Path, demos: &DemoSet) -> Result<()> {
    std::fs::write(path, demos_to_string(demos)).map_err(RunError::io(path))
}

pub fn read_demos(path: &Path) -> Result<DemoSet> {
    let text = std::fs::read_to_string(path).map_err(RunError::io(path))?;
    demos_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpopp_core::env::expert::generate_demos;

    #[test]
    fn round_trip_is_bit_exact() {
        let demos = generate_demos(EnvId::PointMass, 2, 5).unwrap();
        let text = demos_to_string(&demos);
        let back = demos_from_str(&text).unwrap();
        assert_eq!(demos, back);
        assert_eq!(demos_to_string(&back), text);
    }

    #[test]
    fn empty_body_with_valid_header() {
        let demos = generate_demos(EnvId::PointMass, 0, 5).unwrap();
        let text = demos_to_string(&demos);
        assert_eq!(text.lines().count(), 1);
        let back = demos_from_str(&text).unwrap();
        assert_eq!(back.episodes.len(), 0);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        assert!(demos_from_str("").is_err());
        assert!(demos_from_str("not-a-demo header\n").is_err());
        assert!(demos_from_str("fpopp-demos 9 pointmass 0 6 2 0.0\n").is_err());
        let demos = generate_demos(EnvId::PointMass, 1, 5).unwrap();
        let text = demos_to_string(&demos);
        let chopped: String =
            text.lines().map(|l| l.rsplit_once(' ').unwrap().0.to_string() + "\n").collect();
        assert!(demos_from_str(&chopped).is_err());
    }
}
