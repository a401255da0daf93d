//! Checkpoint format: magic `FPOC`, a version integer, a plain-text
//! header carrying field names/shapes, normalizer statistics, and the
//! config echo, then little-endian f64 payloads in header order.
//! Round-trips are bit-exact, including normalizer and optimizer state.

use std::io::Write;
use std::path::Path;

use fpopp_core::tensor::Tensor;

use crate::agent::Agent;
use crate::config::TrainConfig;
use crate::error::{Result, RunError};

const MAGIC: &[u8; 4] = b"FPOC";
const VERSION: u32 = 1;

/// Serialize an agent plus its effective config.
pub fn checkpoint_bytes(agent: &Agent, cfg: &TrainConfig) -> Vec<u8> {
    let mut header = String::new();
    header.push_str(&format!("version {VERSION}\n"));
    header.push_str(&format!("config {}\n", cfg.echo_json()));
    header.push_str(&format!(
        "normalizer_count {:?}\nnormalizer_clip {:?}\n",
        agent.normalizer.count, agent.normalizer.clip
    ));
    header.push_str(&format!("normalizer_mean {}\n", join_floats(&agent.normalizer.mean)));
    header.push_str(&format!("normalizer_m2 {}\n", join_floats(&agent.normalizer.m2)));
    let o = &agent.optimizer;
    header.push_str(&format!(
        "optimizer {} {:?} {:?} {:?} {:?} {:?}\n",
        o.step_count, o.learning_rate, o.beta1, o.beta2, o.weight_decay, o.epsilon
    ));

    let names = agent.param_names();
    let params = agent.params();
    let mut payload_tensors: Vec<&Tensor> = Vec::new();
    for (name, p) in names.iter().zip(&params) {
        header.push_str(&format!("field {name} {}\n", join_dims(p.shape())));
        payload_tensors.push(p);
    }
    for (prefix, moments) in
        [("optim.m", &o.first_moments), ("optim.v", &o.second_moments)]
    {
        for (name, m) in names.iter().zip(moments) {
            header.push_str(&format!("field {prefix}.{name} {}\n", join_dims(m.shape())));
            payload_tensors.push(m);
        }
    }
    header.push_str("end_header\n");

    let mut out = Vec::with_capacity(header.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(header.as_bytes());
    for t in payload_tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn join_dims(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn save_checkpoint(path: &Path, agent: &Agent, cfg: &TrainConfig) -> Result<()> {
    let bytes = checkpoint_bytes(agent, cfg);
    let mut f = std::fs::File::create(path).map_err(RunError::io(path))?;
    f.write_all(&bytes).map_err(RunError::io(path))
}

fn bad(msg: impl Into<String>) -> RunError {
    RunError::Format(format!("corrupt checkpoint: {}", msg.into()))
}

/// Parse checkpoint bytes back into an agent and its config echo.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<(Agent, TrainConfig)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(bad("missing FPOC magic"));
    }
    let rest = &bytes[4..];
    let end_tag = b"end_header\n";
    let header_end = rest
        .windows(end_tag.len())
        .position(|w| w == end_tag)
        .ok_or_else(|| bad("missing end_header"))?;
    let header = std::str::from_utf8(&rest[..header_end]).map_err(|_| bad("non-utf8 header"))?;
    let payload = &rest[header_end + end_tag.len()..];

    let mut config: Option<TrainConfig> = None;
    let mut norm_count = None;
    let mut norm_clip = None;
    let mut norm_mean: Option<Vec<f64>> = None;
    let mut norm_m2: Option<Vec<f64>> = None;
    let mut optimizer_line: Option<Vec<String>> = None;
    let mut fields: Vec<(String, Vec<usize>)> = Vec::new();

    for line in header.lines() {
        let mut parts = line.splitn(2, ' ');
        let key = parts.next().unwrap_or("");
        let value = parts.next().unwrap_or("");
        match key {
            "version" => {
                let v: u32 = value.parse().map_err(|_| bad("bad version"))?;
                if v != VERSION {
                    return Err(RunError::Format(format!(
                        "checkpoint version mismatch: {v} (expected {VERSION})"
                    )));
                }
            }
            "config" => {
                config = Some(
                    serde_json::from_str(value).map_err(|e| bad(format!("config echo: {e}")))?,
                );
            }
            "normalizer_count" => norm_count = Some(parse_f64(value)?),
            "normalizer_clip" => norm_clip = Some(parse_f64(value)?),
            "normalizer_mean" => norm_mean = Some(parse_floats(value)?),
            "normalizer_m2" => norm_m2 = Some(parse_floats(value)?),
            "optimizer" => {
                optimizer_line = Some(value.split(' ').map(|s| s.to_string()).collect())
            }
            "field" => {
                let mut it = value.split(' ');
                let name = it.next().ok_or_else(|| bad("field without name"))?.to_string();
                let dims: Vec<usize> = it
                    .map(|d| d.parse().map_err(|_| bad("bad field dim")))
                    .collect::<Result<_>>()?;
                fields.push((name, dims));
            }
            "" => {}
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }

    let cfg = config.ok_or_else(|| bad("missing config echo"))?;
    let mut agent = Agent::new(&cfg)?;

    // Normalizer statistics.
    agent.normalizer.count = norm_count.ok_or_else(|| bad("missing normalizer_count"))?;
    agent.normalizer.clip = norm_clip.ok_or_else(|| bad("missing normalizer_clip"))?;
    let mean = norm_mean.ok_or_else(|| bad("missing normalizer_mean"))?;
    let m2 = norm_m2.ok_or_else(|| bad("missing normalizer_m2"))?;
    if mean.len() != agent.normalizer.dim() || m2.len() != agent.normalizer.dim() {
        return Err(bad("normalizer dimension mismatch"));
    }
    agent.normalizer.mean = mean;
    agent.normalizer.m2 = m2;

    // Optimizer scalars.
    let ol = optimizer_line.ok_or_else(|| bad("missing optimizer line"))?;
    if ol.len() != 6 {
        return Err(bad("optimizer line must have 6 entries"));
    }
    agent.optimizer.step_count = ol[0].parse().map_err(|_| bad("bad step count"))?;
    agent.optimizer.learning_rate = parse_f64(&ol[1])?;
    agent.optimizer.beta1 = parse_f64(&ol[2])?;
    agent.optimizer.beta2 = parse_f64(&ol[3])?;
    agent.optimizer.weight_decay = parse_f64(&ol[4])?;
    agent.optimizer.epsilon = parse_f64(&ol[5])?;

    // Expected field list: params, then first moments, then second.
    let names = agent.param_names();
    let mut expected: Vec<String> = names.clone();
    expected.extend(names.iter().map(|n| format!("optim.m.{n}")));
    expected.extend(names.iter().map(|n| format!("optim.v.{n}")));
    if fields.len() != expected.len() {
        return Err(bad(format!(
            "field count mismatch: {} in header, architecture has {}",
            fields.len(),
            expected.len()
        )));
    }

    let mut offset = 0usize;
    let mut read_tensor = |dims: &[usize]| -> Result<Tensor> {
        let numel: usize = dims.iter().product();
        let need = numel * 8;
        if offset + need > payload.len() {
            return Err(bad("payload shorter than header fields"));
        }
        let data: Vec<f64> = payload[offset..offset + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += need;
        Ok(Tensor::new(dims.to_vec(), data))
    };

    let mut loaded: Vec<Tensor> = Vec::with_capacity(fields.len());
    for ((name, dims), want_name) in fields.iter().zip(&expected) {
        if name != want_name {
            return Err(bad(format!("unexpected field `{name}` (expected `{want_name}`)")));
        }
        loaded.push(read_tensor(dims)?);
    }
    if offset != payload.len() {
        return Err(bad("trailing bytes after payload"));
    }

    let n = names.len();
    {
        let mut params = agent.params_mut();
        for (p, t) in params.iter_mut().zip(&loaded[..n]) {
            if p.shape() != t.shape() {
                return Err(RunError::Format(format!(
                    "shape mismatch loading field: expected {:?}, found {:?}",
                    p.shape(),
                    t.shape()
                )));
            }
            **p = t.clone();
        }
    }
    for (m, t) in agent.optimizer.first_moments.iter_mut().zip(&loaded[n..2 * n]) {
        if m.shape() != t.shape() {
            return Err(bad("moment shape mismatch"));
        }
        *m = t.clone();
    }
    for (v, t) in agent.optimizer.second_moments.iter_mut().zip(&loaded[2 * n..]) {
        if v.shape() != t.shape() {
            return Err(bad("moment shape mismatch"));
        }
        *v = t.clone();
    }
    Ok((agent, cfg))
}

pub fn load_checkpoint(path: &Path) -> Result<(Agent, TrainConfig)> {
    let bytes = std::fs::read(path).map_err(RunError::io(path))?;
    parse_checkpoint(&bytes)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| bad(format!("bad float `{s}`")))
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(' ').map(parse_f64).collect()
}
