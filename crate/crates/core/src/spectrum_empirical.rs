//! Per-scale large-deviation spectrum estimated from one sampled trace.
//!
//! At scale `τ` the series is cut into non-overlapping blocks
//! `[(j−1)τ, jτ)` aligned at zero, with integrals `S_j`. For each tilt `q`:
//!
//! ```text
//! Λ_τ(q)  = τ⁻¹ log( k⁻¹ Σ_j exp(q S_j) )
//! α_τ     = Λ'_τ(q)  = Σ S_j w_j / (τ Σ w_j),     w_j = exp(q S_j)
//! Λ''_τ(q)           = weighted variance of S_j / τ
//! ε_τ     = √(Λ''_τ(q) / τ)
//! f_τ     = τ⁻¹ log( #{j : S_j/τ ∈ [α_τ − ε_τ, α_τ + ε_τ]} / k )
//! ```
//!
//! Tilts whose window catches no block are dropped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulate::{data_lines, parse_fields, write_file, SampledSeries};
use crate::spectrum_theory::{Spectrum, SpectrumKind, SpectrumPoint};

/// Fewest complete blocks accepted at any scale.
pub const MIN_BLOCKS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    pub tau: f64,
    /// Block integrals in workload × time units.
    pub sums: Vec<f64>,
}

impl BlockSums {
    pub fn k_tau(&self) -> usize {
        self.sums.len()
    }

    /// Block means `S_j / τ`.
    pub fn means(&self) -> impl Iterator<Item = f64> + '_ {
        self.sums.iter().map(move |s| s / self.tau)
    }
}

/// Integrates the piecewise-constant series over each complete block;
/// the trailing partial block is discarded.
pub fn block_sums(series: &SampledSeries, tau: f64) -> Result<BlockSums> {
    let dt = series.dt;
    if !(tau.is_finite() && tau >= 2.0 * dt) {
        return Err(Error::InvalidInput(format!(
            "block length {tau} must be at least two sampling steps ({dt})"
        )));
    }
    let duration = series.duration();
    let k_tau = (duration / tau).floor() as usize;
    if k_tau < MIN_BLOCKS {
        return Err(Error::InsufficientData(format!(
            "scale {tau} gives {k_tau} blocks over duration {duration}; need at least {MIN_BLOCKS} \
             (duration >= {})",
            MIN_BLOCKS as f64 * tau
        )));
    }
    let per_block = tau / dt;
    let mut sums = vec![0.0; k_tau];
    if (per_block - per_block.round()).abs() < 1e-9 {
        let m = per_block.round() as usize;
        for (sum, chunk) in sums.iter_mut().zip(series.values.chunks_exact(m)) {
            *sum = chunk.iter().sum::<f64>() * dt;
        }
    } else {
        // Blocks cut through samples: integrate overlaps exactly.
        for (k, &v) in series.values.iter().enumerate() {
            let (a, b) = (k as f64 * dt, (k + 1) as f64 * dt);
            let first = (a / tau).floor() as usize;
            let mut j = first;
            while j < k_tau && (j as f64) * tau < b {
                let lo = a.max(j as f64 * tau);
                let hi = b.min((j + 1) as f64 * tau);
                if hi > lo {
                    sums[j] += v * (hi - lo);
                }
                j += 1;
            }
        }
    }
    Ok(BlockSums { tau, sums })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalScgf {
    pub lambda: f64,
    pub dlambda: f64,
    pub d2lambda: f64,
}

/// Block-average SCGF and its first two derivatives from exponentially
/// weighted moments, evaluated with a max shift.
pub fn empirical_scgf(blocks: &BlockSums, q: f64) -> EmpiricalScgf {
    let (weights, pivot, shift) = tilt_weights(blocks, q);
    let k = blocks.sums.len() as f64;
    let total: f64 = weights.iter().sum();
    // Deviations from the pivot block keep identical blocks exact.
    let offset: f64 = weights
        .iter()
        .zip(&blocks.sums)
        .map(|(w, s)| w * (s - pivot))
        .sum::<f64>()
        / total;
    let mean = pivot + offset;
    let var: f64 = weights
        .iter()
        .zip(&blocks.sums)
        .map(|(w, s)| w * (s - mean) * (s - mean))
        .sum::<f64>()
        / total;
    EmpiricalScgf {
        lambda: (shift + (total / k).ln()) / blocks.tau,
        dlambda: mean / blocks.tau,
        d2lambda: var / blocks.tau,
    }
}

/// `(exp(q S_j − max), pivot S, max)`.
fn tilt_weights(blocks: &BlockSums, q: f64) -> (Vec<f64>, f64, f64) {
    let mut pivot = blocks.sums[0];
    let mut shift = q * pivot;
    for &s in &blocks.sums {
        if q * s > shift {
            shift = q * s;
            pivot = s;
        }
    }
    let weights = blocks.sums.iter().map(|s| (q * s - shift).exp()).collect();
    (weights, pivot, shift)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalPoint {
    pub q: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSpectrum {
    pub tau: f64,
    pub points: Vec<EmpiricalPoint>,
}

impl EmpiricalSpectrum {
    /// As an `(α, f)` spectrum; points sharing an `α` keep the larger f.
    pub fn to_spectrum(&self) -> Result<Spectrum> {
        Spectrum::from_points(
            self.points
                .iter()
                .map(|p| SpectrumPoint {
                    alpha: p.alpha,
                    f: p.f,
                })
                .collect(),
            SpectrumKind::Empirical { tau: self.tau },
        )
    }
}

pub fn estimate_spectrum(blocks: &BlockSums, q_grid: &[f64]) -> Result<EmpiricalSpectrum> {
    if blocks.sums.len() < MIN_BLOCKS {
        return Err(Error::InsufficientData(format!(
            "{} blocks at scale {}, need at least {MIN_BLOCKS}",
            blocks.sums.len(),
            blocks.tau
        )));
    }
    let tau = blocks.tau;
    let k = blocks.sums.len() as f64;
    let mut points = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let d = empirical_scgf(blocks, q);
        let alpha = d.dlambda;
        let epsilon = (d.d2lambda.max(0.0) / tau).sqrt();
        let count = blocks
            .means()
            .filter(|m| (alpha - epsilon..=alpha + epsilon).contains(m))
            .count();
        if count == 0 {
            continue;
        }
        points.push(EmpiricalPoint {
            q,
            alpha,
            epsilon,
            f: (count as f64 / k).ln() / tau,
        });
    }
    if points.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no tilt produced a nonempty window at scale {tau}"
        )));
    }
    Ok(EmpiricalSpectrum { tau, points })
}

pub const CSV_HEADER: &str = "tau,q,alpha,epsilon,f";

/// Writes all scales into one `tau,q,alpha,epsilon,f` file.
pub fn write_csv(path: &Path, header: &str, spectra: &[EmpiricalSpectrum]) -> Result<()> {
    let mut out = String::from(header);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for spec in spectra {
        for p in &spec.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                spec.tau, p.q, p.alpha, p.epsilon, p.f
            );
        }
    }
    write_file(path, &out)
}

/// Reads a `tau,q,alpha,epsilon,f` file, grouping rows by scale in order
/// of first appearance.
pub fn read_csv(path: &Path) -> Result<Vec<EmpiricalSpectrum>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<EmpiricalSpectrum> = Vec::new();
    for (line_no, line) in data_lines(&text, CSV_HEADER) {
        let [tau, q, alpha, epsilon, f] = parse_fields::<5>(line, path, line_no)?;
        if tau <= 0.0 || epsilon < 0.0 {
            return Err(Error::format(
                path,
                line_no,
                "tau must be > 0 and epsilon >= 0",
            ));
        }
        let point = EmpiricalPoint {
            q,
            alpha,
            epsilon,
            f,
        };
        match out.iter_mut().find(|s| s.tau == tau) {
            Some(spec) => spec.points.push(point),
            None => out.push(EmpiricalSpectrum {
                tau,
                points: vec![point],
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::format(path, 0, "no data rows"));
    }
    Ok(out)
}
