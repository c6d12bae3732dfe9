//! Epidemic workload model with a hidden two-phase dissemination rate.
//!
//! The chain state is `(i, r, phase)`: `i` current viewers (the observable
//! workload), `r` past viewers still spreading the gossip, and the hidden
//! phase selecting the dissemination rate (`beta1` buzz-free, `beta2` buzz).
//!
//! Transitions out of `(i, r, p)`:
//!
//! ```text
//! arrival      (i+1, r,   p)    l + (i + r)·beta_p     if i < i_max
//! completion   (i-1, r+1, p)    gamma·i                if i > 0 (r saturates at r_max)
//! forgetting   (i,   r-1, p)    mu·r                   if r > 0
//! phase flip   (i,   r,   3-p)  a1 (p = 1), a2 (p = 2)
//! ```
//!
//! With `a1 = a2 = 0` (and `beta1 = beta2`) the hidden chain is dropped and
//! only phase 1 is enumerated.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Residual target for the stationary solve, on `‖πA‖∞`.
pub const STEADY_STATE_TOL: f64 = 1e-12;
/// Iteration budget for the stationary solve.
pub const STEADY_STATE_MAX_ITER: usize = 1_000_000;
/// Uniformization rate is this factor above the largest exit rate.
pub const UNIFORMIZATION_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub mu: f64,
    pub l: f64,
    pub a1: f64,
    pub a2: f64,
    pub i_max: u32,
    pub r_max: u32,
}

impl ModelParams {
    pub const FIELDS: [&'static str; 9] = [
        "beta1", "beta2", "gamma", "mu", "l", "a1", "a2", "i_max", "r_max",
    ];

    /// Buzz scenario: occasional bursts of fast dissemination.
    pub fn buzz() -> Self {
        ModelParams {
            beta1: 0.1,
            beta2: 0.8,
            gamma: 0.7,
            mu: 0.3,
            l: 1.0,
            a1: 0.006,
            a2: 0.6,
            i_max: 30,
            r_max: 60,
        }
    }

    /// Buzz-free scenario: a single dissemination rate.
    pub fn buzz_free() -> Self {
        ModelParams {
            beta1: 0.1,
            beta2: 0.1,
            gamma: 0.7,
            mu: 0.3,
            l: 1.0,
            a1: 0.0,
            a2: 0.0,
            i_max: 30,
            r_max: 60,
        }
    }

    pub fn is_single_phase(&self) -> bool {
        self.a1 == 0.0 && self.a2 == 0.0
    }

    pub fn num_phases(&self) -> usize {
        if self.is_single_phase() {
            1
        } else {
            2
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_phases() * (self.i_max as usize + 1) * (self.r_max as usize + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("l", self.l),
            ("a1", self.a1),
            ("a2", self.a2),
        ];
        for (name, v) in rates {
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "{name} must be finite, got {v}"
                )));
            }
        }
        for (name, v) in &rates[..5] {
            if *v <= 0.0 {
                return Err(Error::InvalidModel(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.a1 < 0.0 || self.a2 < 0.0 {
            return Err(Error::InvalidModel(format!(
                "phase rates must be >= 0, got a1={} a2={}",
                self.a1, self.a2
            )));
        }
        if (self.a1 == 0.0) != (self.a2 == 0.0) {
            return Err(Error::InvalidModel(format!(
                "a1 and a2 may only vanish together, got a1={} a2={}",
                self.a1, self.a2
            )));
        }
        if self.is_single_phase() && self.beta1 != self.beta2 {
            return Err(Error::InvalidModel(format!(
                "a single-phase model (a1 = a2 = 0) needs beta1 = beta2, got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if self.beta2 < self.beta1 {
            return Err(Error::InvalidModel(format!(
                "beta2 ({}) must be >= beta1 ({})",
                self.beta2, self.beta1
            )));
        }
        if self.i_max < 1 {
            return Err(Error::InvalidModel("i_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Parse the flat `key = value` config format. Every field is required,
    /// unknown keys are rejected, `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut values: [Option<f64>; 9] = [None; 9];
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(origin, line_no, "expected `key = value`"))?;
            let key = key.trim();
            let slot = Self::FIELDS
                .iter()
                .position(|f| *f == key)
                .ok_or_else(|| Error::format(origin, line_no, format!("unknown key `{key}`")))?;
            if values[slot].is_some() {
                return Err(Error::format(
                    origin,
                    line_no,
                    format!("duplicate key `{key}`"),
                ));
            }
            let value = value.trim();
            let parsed: f64 = value.parse().map_err(|_| {
                Error::format(origin, line_no, format!("`{key}`: cannot parse `{value}`"))
            })?;
            values[slot] = Some(parsed);
        }
        let mut get = |k: usize| {
            values[k].take().ok_or_else(|| {
                Error::format(origin, 0, format!("missing key `{}`", Self::FIELDS[k]))
            })
        };
        let beta1 = get(0)?;
        let beta2 = get(1)?;
        let gamma = get(2)?;
        let mu = get(3)?;
        let l = get(4)?;
        let a1 = get(5)?;
        let a2 = get(6)?;
        let i_max = get(7)?;
        let r_max = get(8)?;
        let as_count = |name: &str, v: f64| -> Result<u32> {
            if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
                return Err(Error::format(
                    origin,
                    0,
                    format!("`{name}` must be a non-negative integer, got {v}"),
                ));
            }
            Ok(v as u32)
        };
        let params = ModelParams {
            beta1,
            beta2,
            gamma,
            mu,
            l,
            a1,
            a2,
            i_max: as_count("i_max", i_max)?,
            r_max: as_count("r_max", r_max)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "beta1 = {}", self.beta1)?;
        writeln!(f, "beta2 = {}", self.beta2)?;
        writeln!(f, "gamma = {}", self.gamma)?;
        writeln!(f, "mu = {}", self.mu)?;
        writeln!(f, "l = {}", self.l)?;
        writeln!(f, "a1 = {}", self.a1)?;
        writeln!(f, "a2 = {}", self.a2)?;
        writeln!(f, "i_max = {}", self.i_max)?;
        writeln!(f, "r_max = {}", self.r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    BuzzFree,
    Buzz,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::BuzzFree => 1,
            Phase::Buzz => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Phase::BuzzFree),
            2 => Some(Phase::Buzz),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Phase::BuzzFree => Phase::Buzz,
            Phase::Buzz => Phase::BuzzFree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChainState {
    pub i: u32,
    pub r: u32,
    pub phase: Phase,
}

impl ChainState {
    pub const fn new(i: u32, r: u32, phase: Phase) -> Self {
        ChainState { i, r, phase }
    }

    /// The observable workload.
    pub fn workload(&self) -> f64 {
        self.i as f64
    }
}

impl Default for ChainState {
    fn default() -> Self {
        ChainState::new(0, 0, Phase::BuzzFree)
    }
}

/// Sparse infinitesimal generator over the enumerated state space.
///
/// States are indexed phase-major, then by `i`, then by `r`:
/// `idx = phase_block · (i_max+1)(r_max+1) + i·(r_max+1) + r`.
/// Off-diagonal rates are stored row-wise; the diagonal separately.
#[derive(Debug, Clone)]
pub struct Generator {
    i_max: u32,
    r_max: u32,
    phases: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
    diag: Vec<f64>,
}

impl Generator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn i_max(&self) -> u32 {
        self.i_max
    }

    pub fn r_max(&self) -> u32 {
        self.r_max
    }

    pub fn num_phases(&self) -> usize {
        self.phases
    }

    fn block(&self) -> usize {
        (self.i_max as usize + 1) * (self.r_max as usize + 1)
    }

    pub fn state(&self, idx: usize) -> ChainState {
        let block = self.block();
        let phase = if idx / block == 0 {
            Phase::BuzzFree
        } else {
            Phase::Buzz
        };
        let rem = idx % block;
        let stride = self.r_max as usize + 1;
        ChainState::new((rem / stride) as u32, (rem % stride) as u32, phase)
    }

    pub fn index(&self, s: ChainState) -> Option<usize> {
        if s.i > self.i_max || s.r > self.r_max {
            return None;
        }
        let p = match s.phase {
            Phase::BuzzFree => 0,
            Phase::Buzz if self.phases == 2 => 1,
            Phase::Buzz => return None,
        };
        Some(p * self.block() + s.i as usize * (self.r_max as usize + 1) + s.r as usize)
    }

    /// Diagonal entry `A[s][s]`.
    pub fn diagonal(&self, idx: usize) -> f64 {
        self.diag[idx]
    }

    pub fn exit_rate(&self, idx: usize) -> f64 {
        -self.diag[idx]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |m, &d| m.max(-d))
    }

    /// Off-diagonal transitions `(target, rate)` out of `idx`, in emission order.
    pub fn transitions(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[idx]..self.row_ptr[idx + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.rates[span].iter().copied())
    }

    /// Observable `Φ(s) = i` for every state.
    pub fn observable(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.state(k).workload()).collect()
    }

    /// `y = x A` (row vector times generator).
    pub fn left_mul(&self, x: &[f64], y: &mut [f64]) {
        for (yk, (&xk, &d)) in y.iter_mut().zip(x.iter().zip(&self.diag)) {
            *yk = xk * d;
        }
        for s in 0..self.len() {
            let xs = x[s];
            for k in self.row_ptr[s]..self.row_ptr[s + 1] {
                y[self.cols[k]] += xs * self.rates[k];
            }
        }
    }

    /// `y = A x` (generator times column vector).
    pub fn right_mul(&self, x: &[f64], y: &mut [f64]) {
        for s in 0..self.len() {
            let mut acc = self.diag[s] * x[s];
            for k in self.row_ptr[s]..self.row_ptr[s + 1] {
                acc += self.rates[k] * x[self.cols[k]];
            }
            y[s] = acc;
        }
    }

    /// Largest absolute row sum.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.len())
            .map(|s| (self.diag[s] + self.transitions(s).map(|(_, r)| r).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    /// True when every state reaches every other along positive-rate edges.
    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return false;
        }
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..n {
            for (t, rate) in self.transitions(s) {
                if rate > 0.0 {
                    reverse[t].push(s);
                }
            }
        }
        let forward_ok = reach_all(n, |s, out| {
            out.extend(
                self.transitions(s)
                    .filter(|&(_, r)| r > 0.0)
                    .map(|(t, _)| t),
            )
        });
        forward_ok && reach_all(n, |s, out| out.extend_from_slice(&reverse[s]))
    }

    /// All nonzero entries as `(row, col, rate)`, diagonal included, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.rates.len() + self.len());
        for s in 0..self.len() {
            let mut row: Vec<(usize, usize, f64)> =
                self.transitions(s).map(|(t, r)| (s, t, r)).collect();
            row.push((s, s, self.diag[s]));
            row.sort_by_key(|e| e.1);
            out.extend(row);
        }
        out
    }

    pub fn write_triplets(&self, path: &Path, header: &str) -> Result<()> {
        let mut buf = String::from(header);
        buf.push_str("row_index,col_index,rate\n");
        for (r, c, v) in self.triplets() {
            buf.push_str(&format!("{r},{c},{v}\n"));
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(buf.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

fn reach_all(n: usize, mut neighbours: impl FnMut(usize, &mut Vec<usize>)) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    let mut buf = Vec::new();
    while let Some(s) = queue.pop_front() {
        buf.clear();
        neighbours(s, &mut buf);
        for &t in &buf {
            if !seen[t] {
                seen[t] = true;
                count += 1;
                queue.push_back(t);
            }
        }
    }
    count == n
}

pub fn build_generator(params: &ModelParams) -> Result<Generator> {
    params.validate()?;
    let phases = params.num_phases();
    let n = params.num_states();
    let mut gen = Generator {
        i_max: params.i_max,
        r_max: params.r_max,
        phases,
        row_ptr: Vec::with_capacity(n + 1),
        cols: Vec::with_capacity(4 * n),
        rates: Vec::with_capacity(4 * n),
        diag: Vec::with_capacity(n),
    };
    gen.row_ptr.push(0);
    for idx in 0..n {
        let s = gen.state(idx);
        let (beta, flip) = match s.phase {
            Phase::BuzzFree => (params.beta1, params.a1),
            Phase::Buzz => (params.beta2, params.a2),
        };
        let (i, r) = (s.i as f64, s.r as f64);
        let mut push = |target: ChainState, rate: f64| {
            let t = gen.index(target).expect("target inside state space");
            gen.cols.push(t);
            gen.rates.push(rate);
        };
        if s.i < params.i_max {
            push(
                ChainState::new(s.i + 1, s.r, s.phase),
                params.l + (i + r) * beta,
            );
        }
        if s.i > 0 {
            let r_next = (s.r + 1).min(params.r_max);
            push(ChainState::new(s.i - 1, r_next, s.phase), params.gamma * i);
        }
        if s.r > 0 {
            push(ChainState::new(s.i, s.r - 1, s.phase), params.mu * r);
        }
        if phases == 2 {
            push(ChainState::new(s.i, s.r, s.phase.flipped()), flip);
        }
        let start = *gen.row_ptr.last().unwrap();
        let out: f64 = gen.rates[start..].iter().sum();
        gen.diag.push(-out);
        gen.row_ptr.push(gen.cols.len());
    }
    Ok(gen)
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub pi: Vec<f64>,
    /// Ergodic mean of the workload, the almost-sure value.
    pub mean_i: f64,
    /// `‖πA‖∞` at exit.
    pub residual: f64,
    pub iterations: usize,
    i_max: u32,
    r_max: u32,
}

/// Stationary distribution by power iteration on the uniformized chain
/// `P = I + A/c`.
pub fn steady_state(gen: &Generator) -> Result<SteadyState> {
    steady_state_with(gen, STEADY_STATE_TOL, STEADY_STATE_MAX_ITER)
}

pub fn steady_state_with(gen: &Generator, tol: f64, max_iter: usize) -> Result<SteadyState> {
    if !gen.is_irreducible() {
        return Err(Error::InvalidModel("generator is reducible".into()));
    }
    let n = gen.len();
    let c = UNIFORMIZATION_SAFETY * gen.max_exit_rate();
    let mut pi = vec![1.0 / n as f64; n];
    let mut flow = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        gen.left_mul(&pi, &mut flow);
        residual = flow.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if residual <= tol {
            break;
        }
        for (p, f) in pi.iter_mut().zip(&flow) {
            *p += f / c;
        }
        iterations += 1;
        // Keep the iterate on the simplex against roundoff drift.
        if iterations % 1024 == 0 {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
        }
    }
    if residual > tol {
        return Err(Error::NumericalFailure(format!(
            "stationary solve stalled at residual {residual:e} after {iterations} iterations"
        )));
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p = (*p / total).max(0.0));
    gen.left_mul(&pi, &mut flow);
    let residual = flow.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mean_i = pi
        .iter()
        .enumerate()
        .map(|(k, p)| p * gen.state(k).workload())
        .sum();
    Ok(SteadyState {
        pi,
        mean_i,
        residual,
        iterations,
        i_max: gen.i_max,
        r_max: gen.r_max,
    })
}

impl SteadyState {
    pub fn i_max(&self) -> u32 {
        self.i_max
    }

    /// Phase-2 occupancy; zero for single-phase models.
    pub fn buzz_fraction(&self) -> f64 {
        let block = (self.i_max as usize + 1) * (self.r_max as usize + 1);
        self.pi.iter().skip(block).fold(0.0, |acc, p| acc + p)
    }
}

/// Marginal distribution of the workload `i`.
pub fn marginal_i(ss: &SteadyState) -> Vec<f64> {
    let stride = ss.r_max as usize + 1;
    let block = (ss.i_max as usize + 1) * stride;
    let mut out = vec![0.0; ss.i_max as usize + 1];
    for (k, p) in ss.pi.iter().enumerate() {
        out[(k % block) / stride] += p;
    }
    out
}

/// Writes `i,probability` rows after the given comment header.
pub fn write_marginal_csv(path: &Path, header: &str, marginal: &[f64]) -> Result<()> {
    let mut buf = String::from(header);
    buf.push_str("i,probability\n");
    for (i, p) in marginal.iter().enumerate() {
        buf.push_str(&format!("{i},{p}\n"));
    }
    crate::simulate::write_file(path, &buf)
}

pub fn read_marginal_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (line_no, line) in crate::simulate::data_lines(&text, "i,probability") {
        let [i, p] = crate::simulate::parse_fields::<2>(line, path, line_no)?;
        if i != out.len() as f64 || !(0.0..=1.0).contains(&p) {
            return Err(Error::format(
                path,
                line_no,
                "expected consecutive i and a probability",
            ));
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::format(path, 0, "no data rows"));
    }
    Ok(out)
}
