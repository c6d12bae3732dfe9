//! Provisioning decisions read off a large-deviation spectrum.
//!
//! * [`reactive_timescale`]: the longest reconfiguration period `τ*` for
//!   which a mean-workload excursion above `α*` still has probability at
//!   least `σ*`, with `P(τ) = ∫_{α*} e^{τ f_τ(α)} dα`.
//! * [`capacity_margin`]: the smallest margin `C₀ = C − α_a.s.` such that
//!   the overflow mass
//!   `L(C) = ∫_C (−1/f(α))·e^{Q f(α)/(α−C)} dα` stays below `p_loss`.
//!   `Q` is the buffer size; `Q/(α − C)` is the longest burst at rate `α`
//!   the buffer absorbs. With a finite reservation period `τ_max` the
//!   integrand is `∫_{τ_min}^{τ_max} e^{τ f(α)} dτ` instead.
//! * [`max_servers`]: how many i.i.d. servers fit on a link of capacity
//!   `C` while leaving a margin of at least `C₀` above their summed
//!   nominal load.
//!
//! Integrals stop at the upper edge of the spectrum's support; there is
//! no mass beyond it.

use std::fmt;

use crate::error::{Error, Result};
use crate::spectrum_theory::Spectrum;

/// Relative tolerance of the bisection on `C`.
pub const CAPACITY_REL_TOL: f64 = 1e-6;
/// Relative tolerance of the adaptive quadrature.
pub const QUAD_REL_TOL: f64 = 1e-10;
const QUAD_MAX_SPLITS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimescaleQuery {
    pub alpha_star: f64,
    pub sigma_star: f64,
    pub tau_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityQuery {
    pub p_loss: f64,
    /// Buffer size, in workload × time units.
    pub buffer_q: f64,
    /// Longest reservation period; `f64::INFINITY` for none.
    pub tau_max: f64,
}

impl CapacityQuery {
    fn validate(&self) -> Result<()> {
        if !(self.p_loss > 0.0 && self.p_loss < 1.0) {
            return Err(Error::InvalidInput(format!(
                "p_loss must be in (0, 1), got {}",
                self.p_loss
            )));
        }
        if !(self.buffer_q >= 0.0 && self.buffer_q.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "buffer must be >= 0, got {}",
                self.buffer_q
            )));
        }
        if !(self.tau_max > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tau_max must be > 0, got {}",
                self.tau_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    Timescale,
    CapacityMargin,
    MaxServers,
}

impl AnswerKind {
    pub fn name(self) -> &'static str {
        match self {
            AnswerKind::Timescale => "tau_star",
            AnswerKind::CapacityMargin => "c0",
            AnswerKind::MaxServers => "k",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvisionAnswer {
    pub kind: AnswerKind,
    pub value: f64,
    /// Left-hand side of the defining inequality at `value`.
    pub residual: f64,
    /// The answer sits on the edge of the search bracket.
    pub bracket_limited: bool,
    /// Echo of the query, as `(name, value)` pairs.
    pub inputs: Vec<(String, String)>,
}

impl fmt::Display for ProvisionAnswer {
    /// `key=value` lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind={}", self.kind.name())?;
        writeln!(f, "value={}", self.value)?;
        writeln!(f, "residual={}", self.residual)?;
        writeln!(f, "bracket_limited={}", self.bracket_limited)?;
        for (k, v) in &self.inputs {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl ProvisionAnswer {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["kind", "value", "residual", "bracket_limited"];
        cols.extend(self.inputs.iter().map(|(k, _)| k.as_str()));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.kind.name().to_string(),
            self.value.to_string(),
            self.residual.to_string(),
            self.bracket_limited.to_string(),
        ];
        cols.extend(self.inputs.iter().map(|(_, v)| v.clone()));
        cols.join(",")
    }
}

/// `∫_{α*}^{sup} e^{τ f(α)} dα` by the trapezoid rule on the spectrum's
/// own abscissae, with f interpolated at `α*`.
pub fn exceedance_probability(spec: &Spectrum, alpha_star: f64, tau: f64) -> f64 {
    let (lo, hi) = spec.support();
    if alpha_star >= hi {
        return 0.0;
    }
    let start = alpha_star.max(lo);
    let mut nodes = vec![(start, spec.f_at(start).expect("inside support"))];
    nodes.extend(
        spec.points
            .iter()
            .filter(|p| p.alpha > start)
            .map(|p| (p.alpha, p.f)),
    );
    nodes
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * ((tau * w[0].1).exp() + (tau * w[1].1).exp()))
        .sum()
}

/// Largest `τ` in the range whose exceedance probability is at least `σ*`.
///
/// `scales` pairs each scale with the spectrum to use at that scale
/// (an empirical estimate, or the same theoretical spectrum throughout).
pub fn reactive_timescale(
    scales: &[(f64, Spectrum)],
    query: &TimescaleQuery,
) -> Result<ProvisionAnswer> {
    let TimescaleQuery {
        alpha_star,
        sigma_star,
        tau_range: (tau_lo, tau_hi),
    } = *query;
    if !(sigma_star > 0.0 && sigma_star < 1.0) {
        return Err(Error::InvalidInput(format!(
            "sigma* must be in (0, 1), got {sigma_star}"
        )));
    }
    if !(tau_lo < tau_hi) {
        return Err(Error::InvalidInput(format!(
            "empty tau range [{tau_lo}, {tau_hi}]"
        )));
    }
    let mut grid: Vec<&(f64, Spectrum)> = scales
        .iter()
        .filter(|(tau, _)| (tau_lo..=tau_hi).contains(tau))
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    if grid.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need spectra at >= 3 scales inside [{tau_lo}, {tau_hi}], got {}",
            grid.len()
        )));
    }
    let alpha_as = grid[0].1.alpha_as;
    if !(alpha_star > alpha_as) {
        return Err(Error::InvalidInput(format!(
            "alpha* ({alpha_star}) must exceed the almost-sure workload ({alpha_as})"
        )));
    }
    let probs: Vec<f64> = grid
        .iter()
        .map(|(tau, spec)| exceedance_probability(spec, alpha_star, *tau))
        .collect();
    let mut inputs = vec![
        ("alpha_star".to_string(), alpha_star.to_string()),
        ("sigma_star".to_string(), sigma_star.to_string()),
        ("tau_lo".to_string(), tau_lo.to_string()),
        ("tau_hi".to_string(), tau_hi.to_string()),
        ("alpha_as".to_string(), alpha_as.to_string()),
        (
            "scales".to_string(),
            grid.iter()
                .map(|(t, _)| t.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ),
    ];
    let Some(k) = probs.iter().rposition(|&p| p >= sigma_star) else {
        return Err(Error::NoFeasibleTimescale(format!(
            "P(<i>_tau >= {alpha_star}) < {sigma_star} at every scale in [{tau_lo}, {tau_hi}]"
        )));
    };
    if k + 1 == grid.len() {
        inputs.push(("p_at_value".into(), probs[k].to_string()));
        return Ok(ProvisionAnswer {
            kind: AnswerKind::Timescale,
            value: tau_hi,
            residual: probs[k],
            bracket_limited: true,
            inputs,
        });
    }
    let (t0, t1) = (grid[k].0, grid[k + 1].0);
    let p0 = probs[k];
    // Upper anchor: the coarser estimate, or what the finer spectrum
    // predicts at the coarser scale if that is larger. A coarse spectrum
    // whose support stops short of α* would otherwise pin τ* to t0.
    let p1 = probs[k + 1].max(exceedance_probability(&grid[k].1, alpha_star, t1));
    let (tau_star, residual) = if p1 > 0.0 {
        // log P linear in τ between the bracketing scales.
        let (l0, l1, ls) = (p0.ln(), p1.ln(), sigma_star.ln());
        let frac = ((l0 - ls) / (l0 - l1)).clamp(0.0, 1.0);
        (
            t0 + frac * (t1 - t0),
            (l0 + frac * (l1 - l0)).exp().max(sigma_star),
        )
    } else {
        (t0, p0)
    };
    inputs.push(("p_at_value".into(), residual.to_string()));
    Ok(ProvisionAnswer {
        kind: AnswerKind::Timescale,
        value: tau_star,
        residual,
        bracket_limited: false,
        inputs,
    })
}

/// Overflow mass `L(C)` for a capacity `C`.
pub fn overflow_mass(spec: &Spectrum, capacity: f64, query: &CapacityQuery) -> f64 {
    let (_, sup) = spec.support();
    if capacity >= sup {
        return 0.0;
    }
    let q = query.buffer_q;
    let tau_max = query.tau_max;
    let integrand = |alpha: f64| -> f64 {
        let f = spec.f_at(alpha).expect("inside support");
        overflow_density(f, alpha - capacity, q, tau_max)
    };
    let mut cuts = vec![capacity];
    cuts.extend(
        spec.points
            .iter()
            .map(|p| p.alpha)
            .filter(|&a| a > capacity),
    );
    integrate_pieces(&integrand, &cuts)
}

/// Integrand of `L(C)` at distance `excess = α − C` with `f = f(α) < 0`.
pub fn overflow_density(f: f64, excess: f64, buffer_q: f64, tau_max: f64) -> f64 {
    if excess <= 0.0 || f >= 0.0 {
        return 0.0;
    }
    let tau_min = buffer_q / excess;
    if tau_max.is_infinite() {
        (tau_min * f).exp() / -f
    } else if tau_max > tau_min {
        ((tau_min * f).exp() - (tau_max * f).exp()) / -f
    } else {
        0.0
    }
}

/// Smallest capacity above `alpha_as` meeting the loss target; the answer
/// value is the margin `C₀`.
pub fn capacity_margin(
    spec: &Spectrum,
    alpha_as: f64,
    query: &CapacityQuery,
) -> Result<ProvisionAnswer> {
    query.validate()?;
    let (_, sup) = spec.support();
    if !(alpha_as < sup) {
        return Err(Error::InvalidSpectrum(format!(
            "almost-sure workload {alpha_as} is not below the support edge {sup}"
        )));
    }
    let apex_slack = 1e-9 * alpha_as.abs().max(1.0);
    if let Some(p) = spec
        .points
        .iter()
        .find(|p| p.alpha > alpha_as + apex_slack && p.f >= 0.0)
    {
        return Err(Error::InvalidSpectrum(format!(
            "f({}) = {} is not negative above the apex",
            p.alpha, p.f
        )));
    }
    let l_at = |c: f64| overflow_mass(spec, c, query);
    let l_sup = l_at(sup);
    if l_sup > query.p_loss {
        return Err(Error::InfeasibleCapacity(format!(
            "overflow mass {l_sup} at full capacity {sup} exceeds p_loss {}",
            query.p_loss
        )));
    }
    // L is decreasing in C: bisect for the smallest C with L(C) <= p_loss.
    let (mut lo, mut hi) = (alpha_as, sup);
    let mut l_hi = l_sup;
    while hi - lo > CAPACITY_REL_TOL * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        let l_mid = l_at(mid);
        if l_mid <= query.p_loss {
            hi = mid;
            l_hi = l_mid;
        } else {
            lo = mid;
        }
    }
    Ok(ProvisionAnswer {
        kind: AnswerKind::CapacityMargin,
        value: hi - alpha_as,
        residual: l_hi,
        bracket_limited: hi == sup,
        inputs: vec![
            ("p_loss".into(), query.p_loss.to_string()),
            ("buffer".into(), query.buffer_q.to_string()),
            ("tau_max".into(), query.tau_max.to_string()),
            ("alpha_as".into(), alpha_as.to_string()),
            ("capacity".into(), hi.to_string()),
        ],
    })
}

/// Largest `K` with `link_capacity − K·α_a.s. ≥ C₀`.
pub fn max_servers(
    spec: &Spectrum,
    alpha_as: f64,
    link_capacity: f64,
    query: &CapacityQuery,
) -> Result<ProvisionAnswer> {
    if !(alpha_as > 0.0) {
        return Err(Error::InvalidInput(format!(
            "alpha_as must be > 0, got {alpha_as}"
        )));
    }
    if !(link_capacity > alpha_as && link_capacity.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "link capacity {link_capacity} must exceed the per-server load {alpha_as}"
        )));
    }
    let margin = capacity_margin(spec, alpha_as, query)?;
    let k = servers_for_margin(link_capacity, alpha_as, margin.value);
    let mut inputs = vec![
        ("link_capacity".to_string(), link_capacity.to_string()),
        ("c0".to_string(), margin.value.to_string()),
    ];
    inputs.extend(margin.inputs.into_iter().filter(|(k, _)| k != "capacity"));
    Ok(ProvisionAnswer {
        kind: AnswerKind::MaxServers,
        value: k as f64,
        residual: link_capacity - k as f64 * alpha_as,
        bracket_limited: false,
        inputs,
    })
}

/// `floor((C − C₀)/α_a.s.)`, clamped at zero. Quotients within `1e-12`
/// relative of an integer round up to it.
pub fn servers_for_margin(link_capacity: f64, alpha_as: f64, c0: f64) -> u64 {
    let headroom = link_capacity - c0;
    if headroom < 0.0 {
        return 0;
    }
    let x = headroom / alpha_as;
    let k = x.floor();
    if x - k > 1.0 - 1e-12 * x.max(1.0) {
        k as u64 + 1
    } else {
        k as u64
    }
}

// Gauss–Kronrod 7/15 nodes on [-1, 1], descending to the centre.
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (1, 3, 5, 7).
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// `(kronrod, |kronrod − gauss|)` on `[a, b]`. Never samples the endpoints.
fn gk15(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let centre = g(c);
    let mut kronrod = GK_WEIGHTS[7] * centre;
    let mut gauss = G_WEIGHTS[3] * centre;
    for j in 0..7 {
        let pair = g(c - h * GK_NODES[j]) + g(c + h * GK_NODES[j]);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += G_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive quadrature over consecutive pieces `[cuts[k], cuts[k+1]]`,
/// always splitting the piece with the largest error estimate.
fn integrate_pieces(g: &impl Fn(f64) -> f64, cuts: &[f64]) -> f64 {
    let mut cells: Vec<(f64, f64, f64, f64)> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(g, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..QUAD_MAX_SPLITS {
        let total: f64 = cells.iter().map(|c| c.2).sum();
        let error: f64 = cells.iter().map(|c| c.3).sum();
        if error <= QUAD_REL_TOL * total.abs() || error < 1e-300 {
            break;
        }
        let worst = cells
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(k, _)| k)
            .expect("nonempty");
        let (a, b, _, _) = cells.swap_remove(worst);
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            break;
        }
        for (lo, hi) in [(a, m), (m, b)] {
            let (v, e) = gk15(g, lo, hi);
            cells.push((lo, hi, v, e));
        }
    }
    cells.iter().map(|c| c.2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum_theory::{SpectrumKind, SpectrumPoint};

    /// f(α) = −(α − 2)² on [0, 6].
    fn parabola() -> Spectrum {
        let pts = (0..=600)
            .map(|k| {
                let a = k as f64 / 100.0;
                SpectrumPoint {
                    alpha: a,
                    f: -(a - 2.0) * (a - 2.0),
                }
            })
            .collect();
        Spectrum::from_points(pts, SpectrumKind::Theoretical).unwrap()
    }

    #[test]
    fn gk15_is_exact_on_polynomials() {
        let (v, e) = gk15(&|x: f64| x.powi(6) - 3.0 * x, 0.0, 2.0);
        assert!((v - (128.0 / 7.0 - 6.0)).abs() < 1e-12);
        assert!(e < 1e-10);
        let v = integrate_pieces(&|x: f64| (-x).exp(), &[0.0, 1.0, 5.0]);
        assert!((v - (1.0 - (-5.0f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn exceedance_of_flat_spectrum() {
        let pts = vec![
            SpectrumPoint { alpha: 1.0, f: 0.0 },
            SpectrumPoint { alpha: 3.0, f: 0.0 },
        ];
        let spec = Spectrum::from_points(pts, SpectrumKind::Empirical { tau: 10.0 }).unwrap();
        assert!((exceedance_probability(&spec, 2.0, 10.0) - 1.0).abs() < 1e-15);
        assert!((exceedance_probability(&spec, 0.0, 10.0) - 2.0).abs() < 1e-15);
        assert_eq!(exceedance_probability(&spec, 3.0, 10.0), 0.0);
    }

    #[test]
    fn density_limits() {
        // No buffer: −1/f.
        assert!((overflow_density(-0.5, 1e-12, 0.0, f64::INFINITY) - 2.0).abs() < 1e-15);
        // With a buffer the density vanishes at the capacity.
        assert_eq!(overflow_density(-0.5, 1e-300, 5.0, f64::INFINITY), 0.0);
        // Finite reservation shorter than the buffered burst: no loss.
        assert_eq!(overflow_density(-0.5, 1.0, 5.0, 4.0), 0.0);
        let d = overflow_density(-0.5, 1.0, 0.0, 2.0);
        assert!((d - (1.0 - (-1.0f64).exp()) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn capacity_margin_satisfies_target() {
        let spec = parabola();
        let q = CapacityQuery {
            p_loss: 1e-2,
            buffer_q: 0.5,
            tau_max: f64::INFINITY,
        };
        let ans = capacity_margin(&spec, 2.0, &q).unwrap();
        assert!(ans.residual <= q.p_loss);
        let c = 2.0 + ans.value;
        // Slightly less capacity breaks the target.
        assert!(overflow_mass(&spec, c - 1e-4, &q) > q.p_loss);
    }

    #[test]
    fn loose_sla_needs_no_margin() {
        // Mass near the apex is finite when f drops off immediately.
        let pts = vec![
            SpectrumPoint {
                alpha: 1.0,
                f: -1.0,
            },
            SpectrumPoint { alpha: 2.0, f: 0.0 },
            SpectrumPoint {
                alpha: 2.0 + 1e-9,
                f: -1.0,
            },
            SpectrumPoint {
                alpha: 2.5,
                f: -1.0,
            },
        ];
        let spec = Spectrum::from_points(pts, SpectrumKind::Theoretical).unwrap();
        // L(2⁺) is about 0.5.
        let q = CapacityQuery {
            p_loss: 0.6,
            buffer_q: 0.0,
            tau_max: f64::INFINITY,
        };
        let ans = capacity_margin(&spec, 2.0, &q).unwrap();
        assert!(ans.value < 1e-5, "{}", ans.value);
    }

    #[test]
    fn positive_f_above_apex_is_rejected() {
        let pts = vec![
            SpectrumPoint {
                alpha: 1.0,
                f: -1.0,
            },
            SpectrumPoint { alpha: 2.0, f: 0.0 },
            SpectrumPoint { alpha: 3.0, f: 0.0 },
            SpectrumPoint {
                alpha: 4.0,
                f: -1.0,
            },
        ];
        let spec = Spectrum::from_points(pts, SpectrumKind::Theoretical).unwrap();
        let q = CapacityQuery {
            p_loss: 0.1,
            buffer_q: 0.0,
            tau_max: f64::INFINITY,
        };
        assert!(matches!(
            capacity_margin(&spec, 2.0, &q),
            Err(Error::InvalidSpectrum(_))
        ));
    }

    #[test]
    fn query_validation() {
        let spec = parabola();
        for q in [
            CapacityQuery {
                p_loss: 0.0,
                buffer_q: 0.0,
                tau_max: f64::INFINITY,
            },
            CapacityQuery {
                p_loss: 1.0,
                buffer_q: 0.0,
                tau_max: f64::INFINITY,
            },
            CapacityQuery {
                p_loss: 0.1,
                buffer_q: -1.0,
                tau_max: f64::INFINITY,
            },
            CapacityQuery {
                p_loss: 0.1,
                buffer_q: 0.0,
                tau_max: 0.0,
            },
        ] {
            assert!(matches!(
                capacity_margin(&spec, 2.0, &q),
                Err(Error::InvalidInput(_))
            ));
        }
    }

    #[test]
    fn server_counts() {
        assert_eq!(servers_for_margin(10.0, 1.0, 0.0), 10);
        assert_eq!(servers_for_margin(3.0, 1.0, 3.5), 0);
        let a = 0.1 + 0.2;
        let c0 = 0.7;
        assert_eq!(servers_for_margin(5.0 * a + c0, a, c0), 5);
        assert_eq!(servers_for_margin(7.3, 2.0, 1.0), 3);
    }

    #[test]
    fn timescale_errors() {
        let spec = parabola();
        let scales: Vec<(f64, Spectrum)> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&t| (t, spec.clone()))
            .collect();
        let beyond = TimescaleQuery {
            alpha_star: 7.0,
            sigma_star: 0.1,
            tau_range: (10.0, 40.0),
        };
        assert!(matches!(
            reactive_timescale(&scales, &beyond),
            Err(Error::NoFeasibleTimescale(_))
        ));
        let below = TimescaleQuery {
            alpha_star: 1.0,
            sigma_star: 0.1,
            tau_range: (10.0, 40.0),
        };
        assert!(matches!(
            reactive_timescale(&scales, &below),
            Err(Error::InvalidInput(_))
        ));
        let two = TimescaleQuery {
            alpha_star: 3.0,
            sigma_star: 0.1,
            tau_range: (10.0, 20.0),
        };
        assert!(matches!(
            reactive_timescale(&scales, &two),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn timescale_interpolates_between_scales() {
        let spec = parabola();
        let scales: Vec<(f64, Spectrum)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&t| (t, spec.clone()))
            .collect();
        let p: Vec<f64> = scales
            .iter()
            .map(|(t, s)| exceedance_probability(s, 3.0, *t))
            .collect();
        let sigma = (p[1] * p[2]).sqrt();
        let q = TimescaleQuery {
            alpha_star: 3.0,
            sigma_star: sigma,
            tau_range: (1.0, 8.0),
        };
        let ans = reactive_timescale(&scales, &q).unwrap();
        // Geometric mean of the bracketing probabilities sits half way.
        assert!((ans.value - 3.0).abs() < 1e-9, "{}", ans.value);
        assert!(!ans.bracket_limited);

        // Coarser scales that never reach α*: τ* still lands inside the bracket.
        let narrow = Spectrum::from_points(
            vec![
                SpectrumPoint {
                    alpha: 1.5,
                    f: -0.5,
                },
                SpectrumPoint { alpha: 2.0, f: 0.0 },
                SpectrumPoint {
                    alpha: 2.5,
                    f: -0.5,
                },
            ],
            SpectrumKind::Theoretical,
        )
        .unwrap();
        let mixed = vec![
            (1.0, spec.clone()),
            (2.0, spec.clone()),
            (4.0, narrow.clone()),
            (8.0, narrow),
        ];
        let sigma = 0.5 * (p[1] + exceedance_probability(&spec, 3.0, 4.0));
        let ans = reactive_timescale(
            &mixed,
            &TimescaleQuery {
                sigma_star: sigma,
                ..q
            },
        )
        .unwrap();
        assert!(ans.value > 2.0 && ans.value < 4.0, "{}", ans.value);
        assert!(ans.residual >= sigma);
        // The missing coarse estimate is replaced by the finer spectrum at τ = 4.
        let (l0, l1) = (p[1].ln(), exceedance_probability(&spec, 3.0, 4.0).ln());
        let want = 2.0 + 2.0 * (l0 - sigma.ln()) / (l0 - l1);
        assert!((ans.value - want).abs() < 1e-9, "{} vs {want}", ans.value);

        let tiny = TimescaleQuery {
            sigma_star: 1e-300,
            ..q
        };
        let ans = reactive_timescale(&scales, &tiny).unwrap();
        assert!(ans.bracket_limited);
        assert_eq!(ans.value, 8.0);
    }
}
