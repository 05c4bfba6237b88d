//! File formats: the binary model file, its JSON variant, trace and policy
//! CSVs, and the flat key-value config file.
//!
//! # Binary model layout (little-endian)
//!
//! | offset | size | field                                                    |
//! |-------:|-----:|----------------------------------------------------------|
//! | 0      | 8    | magic `QNPGMDP\0`                                        |
//! | 8      | 4    | `u32` format version (1)                                 |
//! | 12     | 4    | `u32` byte-order mark `0x01020304`                       |
//! | 16     | 8    | `u64` number of states `S`                               |
//! | 24     | 8    | `u64` number of actions `A`                              |
//! | 32     | 8    | `f64` discount                                           |
//! | 40     | 8    | `u64` flags; bit 0 set when generator metadata is valid  |
//! | 48     | 8    | `u64` generator seed                                     |
//! | 56     | 8    | `u64` generator support size                             |
//! | 64     | 16   | generator RNG id, ASCII, NUL padded                      |
//! | 80     | 8SA  | rewards `r[s][a]`, `f64`, state-major                    |
//!
//! followed by one block per action: `u64 nnz`, `S + 1` `u64` row pointers,
//! `nnz` `u64` column indices and `nnz` `f64` probabilities. Nothing may
//! follow the last block.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diagnostics::{ConvergenceDiagnostics, DiagnosticRow};
use crate::error::{Error, Result};
use crate::mdp::{GeneratorInfo, LinearSolverKind, MdpModel};
use crate::qn::{IterationTrace, SolverConfig, WeightSpec};
use crate::regularizer::Family;
use crate::sparse::CsrMatrix;
use crate::table::{Policy, Table};

pub const MAGIC: &[u8; 8] = b"QNPGMDP\0";
pub const FORMAT_VERSION: u32 = 1;
const BYTE_ORDER_MARK: u32 = 0x0102_0304;
const HEADER_LEN: usize = 80;
const RNG_ID_LEN: usize = 16;
const FLAG_GENERATOR: u64 = 1;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn encode_model(model: &MdpModel) -> Result<Vec<u8>> {
    let (ns, na) = (model.num_states, model.num_actions);
    let nnz: usize = model.transitions.iter().map(CsrMatrix::nnz).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * ns * na + 8 * na * (ns + 2) + 16 * nnz);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&BYTE_ORDER_MARK.to_le_bytes());
    out.extend_from_slice(&(ns as u64).to_le_bytes());
    out.extend_from_slice(&(na as u64).to_le_bytes());
    out.extend_from_slice(&model.discount.to_le_bytes());
    let mut rng_id = [0u8; RNG_ID_LEN];
    let (flags, seed, support) = match &model.generator {
        Some(g) => {
            let bytes = g.rng.as_bytes();
            if bytes.len() > RNG_ID_LEN || bytes.contains(&0) {
                return Err(Error::Config(format!(
                    "rng id `{}` does not fit the header",
                    g.rng
                )));
            }
            rng_id[..bytes.len()].copy_from_slice(bytes);
            (FLAG_GENERATOR, g.seed, g.support_size)
        }
        None => (0, 0, 0),
    };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&support.to_le_bytes());
    out.extend_from_slice(&rng_id);
    debug_assert_eq!(out.len(), HEADER_LEN);
    for r in model.rewards.as_slice() {
        out.extend_from_slice(&r.to_le_bytes());
    }
    for p in &model.transitions {
        out.extend_from_slice(&(p.nnz() as u64).to_le_bytes());
        for &x in &p.row_ptr {
            out.extend_from_slice(&(x as u64).to_le_bytes());
        }
        for &c in &p.col_idx {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for &v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!("truncated while reading {what}"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::Format {
            offset: at as u64,
            message: format!("{what} {v} does not fit in memory"),
        })
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Fails early when a count cannot possibly fit in the remaining bytes.
    fn check_room(&self, count: usize, width: usize, what: &str) -> Result<()> {
        match count.checked_mul(width) {
            Some(n) if n <= self.bytes.len() - self.pos => Ok(()),
            _ => self.fail(format!("truncated: {what} needs {count} x {width} bytes")),
        }
    }
}

/// Decodes a binary model and validates it.
pub fn decode_model(bytes: &[u8]) -> Result<MdpModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        r.pos = 0;
        return r.fail("bad magic, not a model file");
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        r.pos -= 4;
        return r.fail(format!("unsupported format version {version}"));
    }
    let bom = r.u32("byte-order mark")?;
    if bom != BYTE_ORDER_MARK {
        r.pos -= 4;
        return if bom == BYTE_ORDER_MARK.swap_bytes() {
            r.fail("file was written big-endian; only little-endian is supported")
        } else {
            r.fail(format!("bad byte-order mark {bom:#010x}"))
        };
    }
    let ns = r.usize("state count")?;
    let na = r.usize("action count")?;
    let discount = r.f64("discount")?;
    let flags = r.u64("flags")?;
    let seed = r.u64("seed")?;
    let support_size = r.u64("support size")?;
    let rng_raw = r.take(RNG_ID_LEN, "rng id")?;
    if flags & !FLAG_GENERATOR != 0 {
        r.pos = 40;
        return r.fail(format!("unknown flags {flags:#x}"));
    }
    let generator = if flags & FLAG_GENERATOR != 0 {
        let end = rng_raw.iter().position(|&b| b == 0).unwrap_or(RNG_ID_LEN);
        let rng = std::str::from_utf8(&rng_raw[..end]).map_err(|_| Error::Format {
            offset: 64,
            message: "rng id is not ASCII".into(),
        })?;
        Some(GeneratorInfo {
            seed,
            support_size,
            rng: rng.to_string(),
        })
    } else {
        None
    };

    let cells = ns.checked_mul(na).ok_or_else(|| Error::Format {
        offset: 16,
        message: "model dimensions overflow".into(),
    })?;
    r.check_room(cells, 8, "reward block")?;
    let rewards = (0..cells)
        .map(|_| r.f64("reward"))
        .collect::<Result<Vec<_>>>()?;

    let mut transitions = Vec::with_capacity(na);
    for a in 0..na {
        let nnz = r.usize("nonzero count")?;
        r.check_room(ns + 1, 8, "row pointers")?;
        let ptr_at = r.pos;
        let row_ptr = (0..=ns)
            .map(|_| r.usize("row pointer"))
            .collect::<Result<Vec<_>>>()?;
        if row_ptr[0] != 0 || row_ptr[ns] != nnz || row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format {
                offset: ptr_at as u64,
                message: format!("inconsistent row pointers for action {a}"),
            });
        }
        r.check_room(nnz, 16, "transition entries")?;
        let col_at = r.pos;
        let col_idx = (0..nnz)
            .map(|_| r.usize("column index"))
            .collect::<Result<Vec<_>>>()?;
        if col_idx.iter().any(|&c| c >= ns) {
            return Err(Error::Format {
                offset: col_at as u64,
                message: format!("column index out of range for action {a}"),
            });
        }
        let values = (0..nnz)
            .map(|_| r.f64("probability"))
            .collect::<Result<Vec<_>>>()?;
        transitions.push(CsrMatrix {
            nrows: ns,
            ncols: ns,
            row_ptr,
            col_idx,
            values,
        });
    }
    if r.pos != bytes.len() {
        return r.fail(format!("{} trailing bytes", bytes.len() - r.pos));
    }

    let model = MdpModel {
        num_states: ns,
        num_actions: na,
        transitions,
        rewards: Table::from_vec(ns, na, rewards)?,
        discount,
        generator,
    };
    model.validate()?;
    Ok(model)
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// The bytes [`write_model`] stores at `path`: the JSON variant for `.json`
/// paths, the binary format otherwise.
pub fn model_bytes(model: &MdpModel, path: impl AsRef<Path>) -> Result<Vec<u8>> {
    if is_json(path.as_ref()) {
        Ok(serde_json::to_vec_pretty(model)?)
    } else {
        encode_model(model)
    }
}

/// Writes a model; `.json` paths get the JSON variant, anything else the
/// binary format.
pub fn write_model(model: &MdpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_bytes(model, path)?)?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<MdpModel> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if is_json(path) {
        let model: MdpModel = serde_json::from_slice(&bytes)?;
        model.validate()?;
        Ok(model)
    } else {
        decode_model(&bytes)
    }
}

/// What goes into a trace CSV besides the fixed columns.
#[derive(Clone, Copy, Debug, Default)]
pub struct TraceCsvOptions<'a> {
    /// Write measured wall time; otherwise the column is 0 so that output is
    /// reproducible byte for byte.
    pub timing: bool,
    /// Adds an `err_frob` column against this policy when the trace has
    /// snapshots.
    pub reference: Option<&'a Policy>,
}

pub const TRACE_HEADER: &str = "iter,xi,objective,solve_steps,wall_ms";

pub fn trace_csv(trace: &IterationTrace, opts: &TraceCsvOptions<'_>) -> String {
    let with_err = opts.reference.is_some()
        && !trace.records.is_empty()
        && trace.records.iter().all(|r| r.snapshot.is_some());
    let mut out = String::from(TRACE_HEADER);
    if with_err {
        out.push_str(",err_frob");
    }
    out.push('\n');
    for rec in &trace.records {
        let wall = if opts.timing { rec.wall_ms } else { 0.0 };
        let _ = write!(
            out,
            "{},{},{},{},{}",
            rec.iter,
            fmt_f64(rec.xi),
            fmt_f64(rec.objective),
            rec.solve_steps,
            fmt_f64(wall)
        );
        if let (true, Some(reference), Some(snap)) = (with_err, opts.reference, &rec.snapshot) {
            let _ = write!(
                out,
                ",{}",
                fmt_f64(snap.table().frobenius_distance(reference.table()))
            );
        }
        out.push('\n');
    }
    out
}

/// Writes the trace CSV with measured wall times.
pub fn write_trace(trace: &IterationTrace, path: impl AsRef<Path>) -> Result<()> {
    write_trace_with(
        trace,
        path,
        &TraceCsvOptions {
            timing: true,
            reference: None,
        },
    )
}

pub fn write_trace_with(
    trace: &IterationTrace,
    path: impl AsRef<Path>,
    opts: &TraceCsvOptions<'_>,
) -> Result<()> {
    fs::write(path, trace_csv(trace, opts))?;
    Ok(())
}

pub const DIAGNOSTICS_HEADER: &str = "iter,err_frob,log_log_err,ratio";

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// The per-iterate diagnostic table; unmeasurable entries are left empty.
pub fn diagnostics_csv(diag: &ConvergenceDiagnostics) -> String {
    let mut out = format!("{DIAGNOSTICS_HEADER}\n");
    for row in &diag.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.iter,
            fmt_f64(row.err_frob),
            opt_f64(row.log_log_err),
            opt_f64(row.ratio)
        );
    }
    out
}

/// Flow samples in the diagnostic layout, with the step index, time and
/// objective in front: `step,t,objective,err_frob,log_log_err,ratio`.
pub fn flow_csv(samples: &[(f64, f64)], rows: &[DiagnosticRow]) -> String {
    let mut out = format!(
        "step,t,objective,{}\n",
        &DIAGNOSTICS_HEADER["iter,".len()..]
    );
    for (k, ((t, e), row)) in samples.iter().zip(rows).enumerate() {
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{}",
            fmt_f64(*t),
            fmt_f64(*e),
            fmt_f64(row.err_frob),
            opt_f64(row.log_log_err),
            opt_f64(row.ratio)
        );
    }
    out
}

/// One line per state, comma-separated probabilities.
pub fn policy_csv(policy: &Policy) -> String {
    let mut out = String::new();
    for s in 0..policy.num_states() {
        let line: Vec<String> = policy.row(s).iter().map(|&p| fmt_f64(p)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_policy(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, policy_csv(policy))?;
    Ok(())
}

/// Solver settings as read from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub solver: SolverConfig,
    pub family: Option<Family>,
    pub beta: Option<f64>,
}

/// Parses the flat `key = value` config format. `#` starts a comment.
///
/// Keys: `reg`, `tau`, `eta`, `eps_tol` (or `tol`), `max_iters`,
/// `bisect_tol`, `solver` (`auto | dense | bicgstab`), `linear_tol`,
/// `linear_max_iters`, `weight_e` (`ones` or comma-separated values),
/// `record_snapshots`, `beta`.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut cfg = ConfigFile {
        solver: SolverConfig::default(),
        family: None,
        beta: None,
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Config(format!("line {}: bad {what} `{value}`", lineno + 1));
        let float = || value.parse::<f64>().map_err(|_| bad(key));
        let int = || value.parse::<usize>().map_err(|_| bad(key));
        match key {
            "reg" => cfg.family = Some(value.parse()?),
            "tau" => cfg.solver.tau = float()?,
            "eta" => cfg.solver.eta = float()?,
            "eps_tol" | "tol" => cfg.solver.eps_tol = float()?,
            "max_iters" => cfg.solver.max_iters = int()?,
            "bisect_tol" => cfg.solver.bisect_tol = float()?,
            "linear_tol" => cfg.solver.linear.tol = float()?,
            "linear_max_iters" => cfg.solver.linear.max_iters = Some(int()?),
            "solver" => {
                cfg.solver.linear.kind = match value {
                    "auto" => LinearSolverKind::Auto,
                    "dense" => LinearSolverKind::Dense,
                    "bicgstab" => LinearSolverKind::BiCgStab,
                    _ => return Err(bad("solver")),
                }
            }
            "weight_e" => {
                cfg.solver.weight_e = if value == "ones" {
                    WeightSpec::Ones
                } else {
                    WeightSpec::Custom(
                        value
                            .split(',')
                            .map(|x| x.trim().parse::<f64>().map_err(|_| bad("weight_e")))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "record_snapshots" => {
                cfg.solver.record_snapshots = value.parse().map_err(|_| bad(key))?
            }
            "beta" => cfg.beta = Some(float()?),
            _ => {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )))
            }
        }
    }
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    parse_config(&fs::read_to_string(path)?)
}

/// Renders a config in the format [`parse_config`] reads.
pub fn config_to_string(cfg: &ConfigFile) -> String {
    let s = &cfg.solver;
    let mut out = String::new();
    if let Some(f) = cfg.family {
        let _ = writeln!(out, "reg = {f}");
    }
    let _ = writeln!(out, "tau = {}", fmt_f64(s.tau));
    let _ = writeln!(out, "eta = {}", fmt_f64(s.eta));
    let _ = writeln!(out, "eps_tol = {}", fmt_f64(s.eps_tol));
    let _ = writeln!(out, "max_iters = {}", s.max_iters);
    let _ = writeln!(out, "bisect_tol = {}", fmt_f64(s.bisect_tol));
    let kind = match s.linear.kind {
        LinearSolverKind::Auto => "auto",
        LinearSolverKind::Dense => "dense",
        LinearSolverKind::BiCgStab => "bicgstab",
    };
    let _ = writeln!(out, "solver = {kind}");
    let _ = writeln!(out, "linear_tol = {}", fmt_f64(s.linear.tol));
    if let Some(m) = s.linear.max_iters {
        let _ = writeln!(out, "linear_max_iters = {m}");
    }
    match &s.weight_e {
        WeightSpec::Ones => {
            let _ = writeln!(out, "weight_e = ones");
        }
        WeightSpec::Custom(e) => {
            let vals: Vec<String> = e.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(out, "weight_e = {}", vals.join(","));
        }
    }
    let _ = writeln!(out, "record_snapshots = {}", s.record_snapshots);
    if let Some(b) = cfg.beta {
        let _ = writeln!(out, "beta = {}", fmt_f64(b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qn::IterationRecord;
    use crate::synth::{generate_synthetic, SynthSpec};

    fn small() -> MdpModel {
        generate_synthetic(&SynthSpec::new(12, 3, 4, 0.9, 5)).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let m = small();
        let bytes = encode_model(&m).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(decode_model(&bytes).unwrap(), m);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_model(&small()).unwrap();
        for cut in [4, 20, HEADER_LEN + 3, bytes.len() - 1] {
            match decode_model(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_foreign_endianness_and_version() {
        let mut bytes = encode_model(&small()).unwrap();
        bytes[12..16].copy_from_slice(&BYTE_ORDER_MARK.to_be_bytes());
        match decode_model(&bytes) {
            Err(Error::Format {
                offset: 12,
                message,
            }) => assert!(message.contains("big-endian")),
            other => panic!("{other:?}"),
        }
        let mut bytes = encode_model(&small()).unwrap();
        bytes[8] = 9;
        assert!(matches!(
            decode_model(&bytes),
            Err(Error::Format { offset: 8, .. })
        ));
        let mut bytes = encode_model(&small()).unwrap();
        bytes.push(0);
        assert!(matches!(decode_model(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn decoding_validates_the_model() {
        let mut m = small();
        m.transitions[0].values[0] += 0.5;
        let bytes = encode_model(&m).unwrap();
        assert!(matches!(decode_model(&bytes), Err(Error::RowSum { .. })));
    }

    #[test]
    fn trace_csv_schema() {
        let empty = IterationTrace::default();
        assert_eq!(
            trace_csv(&empty, &TraceCsvOptions::default()),
            format!("{TRACE_HEADER}\n")
        );

        let pi = Policy::uniform(1, 2);
        let rec = |iter| IterationRecord {
            iter,
            xi: 0.5,
            objective: 1.0,
            solve_steps: 3,
            wall_ms: 12.5,
            snapshot: Some(pi.clone()),
        };
        let trace = IterationTrace {
            records: (1..=7).map(rec).collect(),
            initial: None,
            converged: true,
        };
        let csv = trace_csv(&trace, &TraceCsvOptions::default());
        assert_eq!(csv.lines().count(), 8);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(",0.0000000000000000e0"));
        let with_err = trace_csv(
            &trace,
            &TraceCsvOptions {
                timing: true,
                reference: Some(&pi),
            },
        );
        assert!(with_err.starts_with(&format!("{TRACE_HEADER},err_frob\n")));
        assert_eq!(
            with_err.lines().nth(1).unwrap(),
            "1,5.0000000000000000e-1,1.0000000000000000e0,3,1.2500000000000000e1,0.0000000000000000e0"
        );
    }

    #[test]
    fn config_round_trip() {
        let text = "# run settings\nreg = alpha:-3\ntau = 0.001\neta=1\ntol = 1e-12\nmax_iters = 20\nsolver = bicgstab\nweight_e = 1,2\nbeta = 0.5\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.family, Some(Family::Alpha(-3.0)));
        assert_eq!(cfg.solver.max_iters, 20);
        assert_eq!(cfg.solver.linear.kind, LinearSolverKind::BiCgStab);
        assert_eq!(cfg.solver.weight_e, WeightSpec::Custom(vec![1.0, 2.0]));
        assert_eq!(parse_config(&config_to_string(&cfg)).unwrap(), cfg);
        assert!(parse_config("nonsense").is_err());
        assert!(parse_config("gamma = 0.5").is_err());
        assert!(parse_config("solver = lu").is_err());
    }
}
