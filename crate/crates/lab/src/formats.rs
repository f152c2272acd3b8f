//! File formats.
//!
//! - MDPs and policies: one JSON document with dimensions and flattened
//!   row-major tables (`P[s',s,a,x]`, `r[s,a,x]`, `ν[s,x]`, `π[a,s,x]`).
//!   Floats are written with 17 significant digits, so a write/read round
//!   trip is bit-exact.
//! - Datasets: JSON lines `{"id": i, "states": [...], "actions": [...]}`.
//!   The contexts go to a sidecar `<file>.oracle` that only opens with
//!   oracle access.
//! - Occupancies and solver traces: CSV.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use confound_core::dataset::{SealedContexts, SourceMeta, Trajectory, TrajectoryDataset};
use confound_core::rl::TraceRow;
use confound_core::{ContextDistribution, ContextualMdp, Dims, OccupancyMeasure, Policy};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{LabError, Result};

pub const MDP_FORMAT: &str = "confound-mdp/1";
pub const POLICY_FORMAT: &str = "confound-policy/1";
pub const ORACLE_ENV: &str = "CONFOUND_LAB_ORACLE";

/// `{:.16e}`: 17 significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn raw(v: f64) -> Box<RawValue> {
    RawValue::from_string(sci(v)).expect("finite floats print as JSON numbers")
}

fn raw_vec(v: &[f64]) -> Vec<Box<RawValue>> {
    v.iter().map(|&x| raw(x)).collect()
}

/// Parameters of a catastrophic construction, stored with its MDP so the
/// construction can be rebuilt and checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub k: usize,
    pub m: usize,
    pub d_star: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MdpDoc<F> {
    format: String,
    n_states: usize,
    n_contexts: usize,
    n_actions: usize,
    gamma: F,
    transition: Vec<F>,
    reward: Vec<F>,
    rho_online: Vec<F>,
    initial: Vec<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_expert: Option<Vec<F>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    construction: Option<ConstructionParams>,
}

/// An MDP file: the MDP, the context law its expert data is drawn from by
/// default, and construction parameters when it came from one.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvFile {
    pub mdp: ContextualMdp,
    pub rho_expert: Option<ContextDistribution>,
    pub construction: Option<ConstructionParams>,
}

impl EnvFile {
    pub fn plain(mdp: ContextualMdp) -> Self {
        EnvFile {
            mdp,
            rho_expert: None,
            construction: None,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LabError::io(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| LabError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::parse(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| LabError::parse(path, e))
}

pub fn mdp_to_json(env: &EnvFile) -> String {
    let m = &env.mdp;
    let d = m.dims();
    let doc = MdpDoc {
        format: MDP_FORMAT.into(),
        n_states: d.n_states,
        n_contexts: d.n_contexts,
        n_actions: d.n_actions,
        gamma: raw(m.gamma()),
        transition: raw_vec(&m.transition_spec_order()),
        reward: raw_vec(&m.reward_spec_order()),
        rho_online: raw_vec(m.rho_online().weights()),
        initial: raw_vec(&m.initial_spec_order()),
        rho_expert: env.rho_expert.as_ref().map(|r| raw_vec(r.weights())),
        construction: env.construction.clone(),
    };
    serde_json::to_string(&doc).expect("raw numbers serialize")
}

pub fn mdp_from_json(text: &str, origin: &Path) -> Result<EnvFile> {
    let doc: MdpDoc<f64> = serde_json::from_str(text).map_err(|e| LabError::parse(origin, e))?;
    if doc.format != MDP_FORMAT {
        return Err(LabError::parse(
            origin,
            format!("unknown format tag {:?}, expected {MDP_FORMAT:?}", doc.format),
        ));
    }
    let dims = Dims::new(doc.n_states, doc.n_contexts, doc.n_actions);
    let mdp = ContextualMdp::from_spec_order(
        dims,
        &doc.transition,
        &doc.reward,
        ContextDistribution::new(doc.rho_online)?,
        &doc.initial,
        doc.gamma,
    )?;
    let rho_expert = doc.rho_expert.map(ContextDistribution::new).transpose()?;
    Ok(EnvFile {
        mdp,
        rho_expert,
        construction: doc.construction,
    })
}

pub fn write_mdp(path: &Path, env: &EnvFile) -> Result<()> {
    write_text(path, &(mdp_to_json(env) + "\n"))
}

pub fn read_mdp(path: &Path) -> Result<EnvFile> {
    mdp_from_json(&read_to_string(path)?, path)
}

#[derive(Serialize, Deserialize)]
struct PolicyDoc<F> {
    format: String,
    n_states: usize,
    n_contexts: usize,
    n_actions: usize,
    probs: Vec<F>,
}

pub fn write_policy(path: &Path, policy: &Policy) -> Result<()> {
    let d = policy.dims();
    let doc = PolicyDoc {
        format: POLICY_FORMAT.into(),
        n_states: d.n_states,
        n_contexts: d.n_contexts,
        n_actions: d.n_actions,
        probs: raw_vec(&policy.to_spec_order()),
    };
    write_text(path, &(serde_json::to_string(&doc).expect("raw numbers serialize") + "\n"))
}

pub fn read_policy(path: &Path) -> Result<Policy> {
    let doc: PolicyDoc<f64> = read_json(path)?;
    if doc.format != POLICY_FORMAT {
        return Err(LabError::parse(path, format!("unknown format tag {:?}", doc.format)));
    }
    let dims = Dims::new(doc.n_states, doc.n_contexts, doc.n_actions);
    Ok(Policy::from_spec_order(dims, &doc.probs)?)
}

#[derive(Serialize, Deserialize)]
struct TrajectoryLine {
    id: usize,
    states: Vec<usize>,
    actions: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OracleDoc {
    contexts: Vec<usize>,
}

/// Proof that the caller may read sealed contexts.
#[derive(Debug, Clone, Copy)]
pub struct OracleAccess(());

impl OracleAccess {
    /// Granted by an explicit flag or by `CONFOUND_LAB_ORACLE=1`.
    pub fn request(flag: bool) -> Option<Self> {
        let env = std::env::var(ORACLE_ENV).map(|v| v == "1").unwrap_or(false);
        (flag || env).then_some(OracleAccess(()))
    }
}

pub fn oracle_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".oracle");
    PathBuf::from(s)
}

pub fn write_dataset(path: &Path, dataset: &TrajectoryDataset) -> Result<()> {
    let mut w = create(path)?;
    for (id, t) in dataset.trajectories().iter().enumerate() {
        let line = TrajectoryLine {
            id,
            states: t.states.clone(),
            actions: t.actions.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| LabError::parse(path, e))?;
        w.write_all(b"\n").map_err(|e| LabError::io(path, e))?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Writes the dataset and its `.oracle` sidecar.
pub fn write_dataset_with_oracle(path: &Path, dataset: &TrajectoryDataset, sealed: &SealedContexts) -> Result<()> {
    write_dataset(path, dataset)?;
    let doc = OracleDoc {
        contexts: sealed.reveal().to_vec(),
    };
    write_text(
        &oracle_path(path),
        &(serde_json::to_string(&doc).map_err(|e| LabError::parse(path, e))? + "\n"),
    )
}

/// Reads a JSONL dataset for `mdp`; the horizon is taken from the lines,
/// which must all have the same length.
pub fn read_dataset(path: &Path, mdp: &ContextualMdp) -> Result<TrajectoryDataset> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut trajectories = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TrajectoryLine =
            serde_json::from_str(&line).map_err(|e| LabError::parse(path, format!("line {}: {e}", i + 1)))?;
        if t.id != trajectories.len() {
            return Err(LabError::parse(
                path,
                format!("line {}: id {} out of sequence", i + 1, t.id),
            ));
        }
        trajectories.push(Trajectory {
            states: t.states,
            actions: t.actions,
        });
    }
    let horizon = trajectories
        .first()
        .map(|t| t.states.len().saturating_sub(1))
        .ok_or_else(|| LabError::parse(path, "dataset is empty"))?;
    let d = mdp.dims();
    let meta = SourceMeta {
        seed: 0,
        description: path.display().to_string(),
    };
    Ok(TrajectoryDataset::new(
        d.n_states,
        d.n_actions,
        horizon,
        mdp.gamma(),
        trajectories,
        meta,
    )?)
}

pub fn read_sealed(dataset: &Path, access: Option<OracleAccess>) -> Result<SealedContexts> {
    let path = oracle_path(dataset);
    if access.is_none() {
        return Err(LabError::OracleLocked(path));
    }
    let doc: OracleDoc = read_json(&path)?;
    Ok(SealedContexts::new(doc.contexts))
}

/// `s,a,x,mass`: marginal rows with an empty `x`, then per-context rows when
/// the measure carries them.
pub fn occupancy_csv(occ: &OccupancyMeasure) -> String {
    let mut out = String::from("s,a,x,mass\n");
    let (ns, na) = (occ.n_states(), occ.n_actions());
    for s in 0..ns {
        for a in 0..na {
            out += &format!("{s},{a},,{}\n", sci(occ.get(s, a)));
        }
    }
    if let Some(pc) = occ.per_context() {
        for x in 0..pc.weights.len() {
            for s in 0..ns {
                for a in 0..na {
                    out += &format!("{s},{a},{x},{}\n", sci(pc.tables[(x * ns + s) * na + a]));
                }
            }
        }
    }
    out
}

pub const TRACE_HEADER: &str = "iter,value,divergence,lambda,best_value,bonus_norm,rl_residual,selected,rho_s";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let selected = r.selected.map(|m| m.to_string()).unwrap_or_default();
        let rho = r
            .rho_s
            .as_ref()
            .map(|w| w.iter().map(|v| sci(*v)).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        out += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            sci(r.value),
            sci(r.divergence),
            sci(r.lambda),
            sci(r.best_value),
            sci(r.bonus_norm),
            sci(r.rl_residual),
            selected,
            rho
        );
    }
    out
}

/// `(iter, value)` pairs of a trace CSV.
pub fn read_trace_values(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let iter = rec.get(0).and_then(|v| v.parse().ok());
        let value = rec.get(1).and_then(|v| v.parse().ok());
        match (iter, value) {
            (Some(i), Some(v)) => out.push((i, v)),
            _ => return Err(LabError::parse(path, format!("bad trace row {rec:?}"))),
        }
    }
    Ok(out)
}
