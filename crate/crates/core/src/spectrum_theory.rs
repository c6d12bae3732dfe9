//! Scaled cumulant generating function of the workload and its Legendre
//! transform.
//!
//! `Λ(q)` is the Perron root of the tilted generator `T(q) = A + q·diag(Φ)`.
//! It is found by power iteration on the nonnegative matrix
//! `M = I + T(q)/c`, with `c` above `max exit rate + |q|·i_max`, so that
//! `Λ(q) = c·(ρ(M) − 1)`. Both the right and the left Perron vectors are
//! iterated; the pair gives `Λ` to second order and the slope exactly:
//!
//! ```text
//! Λ(q)  = uᵀ T(q) v / uᵀ v
//! Λ'(q) = uᵀ diag(Φ) v / uᵀ v
//! ```
//!
//! The spectrum then follows in parametric form,
//! `α = Λ'(q)`, `f(α) = Λ(q) − q·α`, with `f ≤ 0` and `f(α_a.s.) = 0`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::band::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::model::Generator;

/// Relative tolerance on the Collatz–Wielandt bracket of `ρ(M)`.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;
/// Safety factor on the uniformization constant.
pub const TILT_SAFETY: f64 = 1.1;
/// Slope monotonicity slack accepted by [`legendre`].
pub const CONVEXITY_TOL: f64 = 1e-6;

pub const DEFAULT_Q_MIN: f64 = -3.0;
pub const DEFAULT_Q_MAX: f64 = 3.0;
pub const DEFAULT_Q_POINTS: usize = 201;

/// `n` evenly spaced tilts from `min` to `max` inclusive.
pub fn q_grid(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite()) || n < 1 || (n > 1 && min >= max) {
        return Err(Error::InvalidInput(format!(
            "bad q-grid: min={min} max={max} points={n}"
        )));
    }
    if n == 1 {
        return Ok(vec![min]);
    }
    let span = max - min;
    let last = (n - 1) as f64;
    Ok((0..n).map(|k| min + span * k as f64 / last).collect())
}

pub fn default_q_grid() -> Vec<f64> {
    q_grid(DEFAULT_Q_MIN, DEFAULT_Q_MAX, DEFAULT_Q_POINTS).expect("default grid is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScgfPoint {
    pub q: f64,
    pub lambda: f64,
    pub dlambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgfCurve {
    pub points: Vec<ScgfPoint>,
}

/// Perron data of one tilted generator.
#[derive(Debug, Clone)]
pub struct TiltedEigen {
    pub lambda: f64,
    pub dlambda: f64,
    pub iterations: usize,
    right: Vec<f64>,
    left: Vec<f64>,
}

/// Principal eigenvalue of `A + q·diag(Φ)`.
///
/// Runs shift-and-invert iteration on `σI − T(q)` with `σ` just above a
/// Collatz–Wielandt upper bound of the Perron root, so `σI − T(q)` is a
/// nonsingular M-matrix factorized once per shift. Falls back to
/// [`tilted_eigen_power`] if a factorization breaks down.
///
/// `warm` optionally seeds the right and left iterates (e.g. from a
/// neighbouring tilt); both must be strictly positive.
pub fn tilted_eigen(
    gen: &Generator,
    phi: &[f64],
    q: f64,
    warm: Option<(&[f64], &[f64])>,
) -> Result<TiltedEigen> {
    let n = gen.len();
    assert_eq!(phi.len(), n, "observable length must match the state space");
    if let Some(trivial) = trivial_eigen(gen, phi, q) {
        return Ok(trivial);
    }
    let (mut right, mut left) = initial_vectors(n, warm);
    let tilted = Tilted { gen, phi, q };
    let layout = BandLayout::new(gen);
    let Some((it_r, factors)) = shift_invert(&tilted, &layout, &mut right, Side::Right, None)
    else {
        return tilted_eigen_power(gen, phi, q, warm);
    };
    // The right solve leaves a shift just above the root: reuse it.
    let Some((it_l, _)) = shift_invert(&tilted, &layout, &mut left, Side::Left, factors) else {
        return tilted_eigen_power(gen, phi, q, warm);
    };
    Ok(two_sided(&tilted, right, left, it_r + it_l))
}

/// Same quantity by plain power iteration on the uniformized matrix
/// `M = I + T/c`, `c = 1.1·(max exit rate + |q|·max Φ)`, stopped when the
/// Collatz–Wielandt bracket of `ρ(M)` is within [`POWER_TOL`] relative.
pub fn tilted_eigen_power(
    gen: &Generator,
    phi: &[f64],
    q: f64,
    warm: Option<(&[f64], &[f64])>,
) -> Result<TiltedEigen> {
    let n = gen.len();
    assert_eq!(phi.len(), n, "observable length must match the state space");
    if let Some(trivial) = trivial_eigen(gen, phi, q) {
        return Ok(trivial);
    }
    let c = uniformization_rate(gen, phi, q);
    // M = I + T/c: diagonal entries 1 + (A_ss + q Φ_s)/c, off-diagonals A/c.
    let mdiag: Vec<f64> = (0..n)
        .map(|s| 1.0 + (gen.diagonal(s) + q * phi[s]) / c)
        .collect();
    let (mut right, mut left) = initial_vectors(n, warm);

    let right_step = |x: &[f64], y: &mut [f64]| {
        for s in 0..n {
            let mut acc = mdiag[s] * x[s];
            for (t, rate) in gen.transitions(s) {
                acc += rate / c * x[t];
            }
            y[s] = acc;
        }
    };
    let left_step = |x: &[f64], y: &mut [f64]| {
        for (ys, (xs, d)) in y.iter_mut().zip(x.iter().zip(&mdiag)) {
            *ys = xs * d;
        }
        for s in 0..n {
            let xs = x[s];
            for (t, rate) in gen.transitions(s) {
                y[t] += xs * rate / c;
            }
        }
    };

    let it_r = perron_iterate(&mut right, right_step, q, "right")?;
    let it_l = perron_iterate(&mut left, left_step, q, "left")?;
    Ok(two_sided(&Tilted { gen, phi, q }, right, left, it_r + it_l))
}

fn uniformization_rate(gen: &Generator, phi: &[f64], q: f64) -> f64 {
    let phi_max = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    TILT_SAFETY * (gen.max_exit_rate() + q.abs() * phi_max)
}

fn trivial_eigen(gen: &Generator, phi: &[f64], q: f64) -> Option<TiltedEigen> {
    let n = gen.len();
    // Zero generator and zero tilt: every vector is an eigenvector.
    (uniformization_rate(gen, phi, q) <= 0.0).then(|| TiltedEigen {
        lambda: 0.0,
        dlambda: phi.iter().sum::<f64>() / n as f64,
        iterations: 0,
        right: vec![1.0; n],
        left: vec![1.0 / n as f64; n],
    })
}

fn initial_vectors(n: usize, warm: Option<(&[f64], &[f64])>) -> (Vec<f64>, Vec<f64>) {
    match warm {
        Some((r, l)) => (r.to_vec(), l.to_vec()),
        None => (vec![1.0; n], vec![1.0 / n as f64; n]),
    }
}

struct Tilted<'a> {
    gen: &'a Generator,
    phi: &'a [f64],
    q: f64,
}

impl Tilted<'_> {
    fn apply(&self, side: Side, x: &[f64], y: &mut [f64]) {
        match side {
            Side::Right => self.gen.right_mul(x, y),
            Side::Left => self.gen.left_mul(x, y),
        }
        for (ys, (xs, p)) in y.iter_mut().zip(x.iter().zip(self.phi)) {
            *ys += self.q * p * xs;
        }
    }

    /// Collatz–Wielandt bracket `[min (Tx)_s/x_s, max (Tx)_s/x_s]` of the
    /// Perron root, over components that are not negligibly small.
    fn bracket(&self, side: Side, x: &[f64], scratch: &mut [f64]) -> (f64, f64) {
        self.apply(side, x, scratch);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (&xs, &ys) in x.iter().zip(scratch.iter()) {
            if xs > TINY {
                let ratio = ys / xs;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        (lo, hi)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Right,
    Left,
}

/// Components below this (after max-normalisation) are ignored in brackets.
const TINY: f64 = 1e-280;
const MAX_SOLVES: usize = 500;
const MAX_FACTORIZATIONS: usize = 40;

/// State ordering with `i` outermost so that the generator is banded.
struct BandLayout {
    pos: Vec<usize>,
    lower: usize,
    upper: usize,
}

impl BandLayout {
    fn new(gen: &Generator) -> Self {
        let phases = gen.num_phases();
        let r_len = gen.r_max() as usize + 1;
        let pos: Vec<usize> = (0..gen.len())
            .map(|k| {
                let s = gen.state(k);
                (s.i as usize * r_len + s.r as usize) * phases + (s.phase.number() as usize - 1)
            })
            .collect();
        let (mut lower, mut upper) = (0, 0);
        for s in 0..gen.len() {
            for (t, _) in gen.transitions(s) {
                let (a, b) = (pos[s], pos[t]);
                if a > b {
                    lower = lower.max(a - b);
                } else {
                    upper = upper.max(b - a);
                }
            }
        }
        BandLayout { pos, lower, upper }
    }

    fn factorize(&self, t: &Tilted<'_>, sigma: f64) -> Option<BandLu> {
        let gen = t.gen;
        let mut m = BandMatrix::zeros(gen.len(), self.lower, self.upper);
        for s in 0..gen.len() {
            let row = self.pos[s];
            m.add(row, row, sigma - gen.diagonal(s) - t.q * t.phi[s]);
            for (to, rate) in gen.transitions(s) {
                m.add(row, self.pos[to], -rate);
            }
        }
        m.factorize()
    }
}

/// Inverse iteration for the right (`T v = Λ v`) or left (`uᵀ T = Λ uᵀ`)
/// Perron vector. `factors` may carry a factorization whose shift is known
/// to lie above the root. Returns the number of solves and the last
/// factorization, `None` on breakdown.
fn shift_invert(
    t: &Tilted<'_>,
    layout: &BandLayout,
    x: &mut [f64],
    side: Side,
    factors: Option<BandLu>,
) -> Option<(usize, Option<BandLu>)> {
    let n = x.len();
    let mut scratch = vec![0.0; n];
    let mut permuted = vec![0.0; n];
    normalise_max(x);
    let (mut lo, mut hi) = t.bracket(side, x, &mut scratch);
    let converged = |lo: f64, hi: f64| hi - lo <= POWER_TOL * hi.abs().max(1.0);
    if converged(lo, hi) {
        return Some((0, factors));
    }
    let shift = |lo: f64, hi: f64| hi + (1e-3 * (hi - lo)).max(1e-7 * hi.abs().max(1.0));
    let mut lu = match factors {
        Some(lu) => lu,
        None => {
            let mut sigma = shift(lo, hi);
            factorize_retrying(t, layout, &mut sigma)?
        }
    };
    let mut factorizations = 1;
    let mut width = hi - lo;
    for solve in 1..=MAX_SOLVES {
        for (k, &p) in layout.pos.iter().enumerate() {
            permuted[p] = x[k];
        }
        match side {
            Side::Right => lu.solve(&mut permuted),
            Side::Left => lu.solve_transpose(&mut permuted),
        }
        for (k, &p) in layout.pos.iter().enumerate() {
            x[k] = permuted[p];
        }
        if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return None;
        }
        normalise_max(x);
        (lo, hi) = t.bracket(side, x, &mut scratch);
        if converged(lo, hi) {
            return Some((solve, Some(lu)));
        }
        // Slow contraction: the shift is far from the root, move it in.
        if hi - lo > 0.1 * width && factorizations < MAX_FACTORIZATIONS {
            let mut sigma = shift(lo, hi);
            lu = factorize_retrying(t, layout, &mut sigma)?;
            factorizations += 1;
        }
        width = hi - lo;
    }
    None
}

fn factorize_retrying(t: &Tilted<'_>, layout: &BandLayout, sigma: &mut f64) -> Option<BandLu> {
    let base = *sigma;
    let mut bump = 1e-6 * base.abs().max(1.0);
    for _ in 0..6 {
        if let Some(lu) = layout.factorize(t, *sigma) {
            return Some(lu);
        }
        *sigma = base + bump;
        bump *= 100.0;
    }
    None
}

/// `Λ = uᵀTv / uᵀv` and `Λ' = uᵀ diag(Φ) v / uᵀv`.
fn two_sided(t: &Tilted<'_>, right: Vec<f64>, left: Vec<f64>, iterations: usize) -> TiltedEigen {
    let mut tv = vec![0.0; right.len()];
    t.apply(Side::Right, &right, &mut tv);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut slope = 0.0;
    for s in 0..right.len() {
        let w = left[s] * right[s];
        num += left[s] * tv[s];
        den += w;
        slope += w * t.phi[s];
    }
    TiltedEigen {
        lambda: num / den,
        dlambda: slope / den,
        iterations,
        right,
        left,
    }
}

/// Power iteration on a nonnegative primitive operator until the
/// Collatz–Wielandt bracket `[min (Mx)_s/x_s, max (Mx)_s/x_s]` is tight.
/// Leaves the normalised Perron vector in `x`.
fn perron_iterate(
    x: &mut Vec<f64>,
    step: impl Fn(&[f64], &mut [f64]),
    q: f64,
    side: &str,
) -> Result<usize> {
    let mut y = vec![0.0; x.len()];
    normalise_max(x);
    for it in 0..POWER_MAX_ITER {
        step(x, &mut y);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for (&xs, &ys) in x.iter().zip(y.iter()) {
            // Components deep in the subnormal range carry no information.
            if xs > TINY {
                let ratio = ys / xs;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        std::mem::swap(x, &mut y);
        normalise_max(x);
        if hi - lo <= POWER_TOL * hi {
            return Ok(it + 1);
        }
    }
    Err(Error::NumericalFailure(format!(
        "{side} power iteration at q={q} did not converge in {POWER_MAX_ITER} iterations"
    )))
}

fn normalise_max(x: &mut [f64]) {
    let m = x.iter().fold(0.0_f64, |m, v| m.max(*v));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v /= m);
    }
}

/// `Λ(q)` and `Λ'(q)` over a sorted tilt grid, for the workload observable.
pub fn scgf(gen: &Generator, q_grid: &[f64]) -> Result<ScgfCurve> {
    scgf_with_observable(gen, &gen.observable(), q_grid)
}

pub fn scgf_with_observable(gen: &Generator, phi: &[f64], q_grid: &[f64]) -> Result<ScgfCurve> {
    if q_grid.iter().any(|q| !q.is_finite()) || q_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "q-grid must be finite and strictly increasing".into(),
        ));
    }
    // Sweep outwards from the tilt nearest zero so each solve starts from
    // its neighbour's Perron vectors.
    let n = q_grid.len();
    let mut points = vec![None; n];
    let Some(centre) = (0..n).min_by(|&a, &b| q_grid[a].abs().total_cmp(&q_grid[b].abs())) else {
        return Ok(ScgfCurve { points: Vec::new() });
    };
    let centre_eig = tilted_eigen(gen, phi, q_grid[centre], None)?;
    let mut sweep = |range: &mut dyn Iterator<Item = usize>| -> Result<()> {
        let mut prev = centre_eig.clone();
        for k in range {
            let eig = tilted_eigen(gen, phi, q_grid[k], Some((&prev.right, &prev.left)))?;
            points[k] = Some(ScgfPoint {
                q: q_grid[k],
                lambda: eig.lambda,
                dlambda: eig.dlambda,
            });
            prev = eig;
        }
        Ok(())
    };
    sweep(&mut (centre + 1..n))?;
    sweep(&mut (0..centre).rev())?;
    points[centre] = Some(ScgfPoint {
        q: q_grid[centre],
        lambda: centre_eig.lambda,
        dlambda: centre_eig.dlambda,
    });
    Ok(ScgfCurve {
        points: points
            .into_iter()
            .map(|p| p.expect("every tilt solved"))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumKind {
    Theoretical,
    Empirical { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub alpha: f64,
    pub f: f64,
}

/// Large-deviation spectrum: points sorted by `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub points: Vec<SpectrumPoint>,
    pub kind: SpectrumKind,
    pub alpha_as: f64,
}

impl Spectrum {
    /// Sorts the points, merges duplicate abscissae (keeping the larger f)
    /// and places the apex at the maximum of f.
    pub fn from_points(mut points: Vec<SpectrumPoint>, kind: SpectrumKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpectrum("no points".into()));
        }
        if points.iter().any(|p| !p.alpha.is_finite() || p.f.is_nan()) {
            return Err(Error::InvalidSpectrum("non-finite point".into()));
        }
        points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
        points.dedup_by(|next, kept| {
            if next.alpha == kept.alpha {
                kept.f = kept.f.max(next.f);
                true
            } else {
                false
            }
        });
        let apex = points
            .iter()
            .max_by(|a, b| a.f.total_cmp(&b.f))
            .expect("nonempty")
            .alpha;
        Ok(Spectrum {
            points,
            kind,
            alpha_as: apex,
        })
    }

    /// `(min α, max α)`.
    pub fn support(&self) -> (f64, f64) {
        (
            self.points[0].alpha,
            self.points[self.points.len() - 1].alpha,
        )
    }

    pub fn max_f(&self) -> f64 {
        self.points
            .iter()
            .fold(f64::NEG_INFINITY, |m, p| m.max(p.f))
    }

    /// Linear interpolation of f; `None` outside the support.
    pub fn f_at(&self, alpha: f64) -> Option<f64> {
        let (lo, hi) = self.support();
        if !(lo..=hi).contains(&alpha) {
            return None;
        }
        let k = self.points.partition_point(|p| p.alpha < alpha);
        if k == 0 {
            return Some(self.points[0].f);
        }
        let (a, b) = (self.points[k - 1], self.points[k]);
        let t = (alpha - a.alpha) / (b.alpha - a.alpha);
        Some(a.f + t * (b.f - a.f))
    }

    /// Width of `{α : f(α) ≥ level}` on the interpolated curve, assuming
    /// the superlevel set is an interval containing the apex.
    pub fn level_width(&self, level: f64) -> f64 {
        let (lo, hi) = self.level_interval(level);
        hi - lo
    }

    pub fn level_interval(&self, level: f64) -> (f64, f64) {
        let pts = &self.points;
        let apex = pts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.f.total_cmp(&b.1.f))
            .map(|(k, _)| k)
            .expect("nonempty");
        let crossing = |a: SpectrumPoint, b: SpectrumPoint| {
            // a below level, b above.
            a.alpha + (level - a.f) / (b.f - a.f) * (b.alpha - a.alpha)
        };
        let mut lo = pts[0].alpha;
        for k in (0..apex).rev() {
            if pts[k].f < level {
                lo = crossing(pts[k], pts[k + 1]);
                break;
            }
        }
        let mut hi = pts[pts.len() - 1].alpha;
        for k in apex + 1..pts.len() {
            if pts[k].f < level {
                hi = crossing(pts[k], pts[k - 1]);
                break;
            }
        }
        (lo, hi)
    }
}

/// Parametric Legendre transform of a convex SCGF curve.
pub fn legendre(curve: &ScgfCurve) -> Result<Spectrum> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "Legendre transform needs at least 3 curve points, got {}",
            pts.len()
        )));
    }
    for w in pts.windows(2) {
        let slack = CONVEXITY_TOL * w[0].dlambda.abs().max(1.0);
        if w[1].dlambda < w[0].dlambda - slack {
            return Err(Error::InvalidInput(format!(
                "SCGF is not convex between q={} and q={}",
                w[0].q, w[1].q
            )));
        }
    }
    let alpha_at_zero = pts
        .iter()
        .min_by(|a, b| a.q.abs().total_cmp(&b.q.abs()))
        .map(|p| p.dlambda)
        .expect("nonempty");
    let mut spec = Spectrum::from_points(
        pts.iter()
            .map(|p| SpectrumPoint {
                alpha: p.dlambda,
                f: (p.lambda - p.q * p.dlambda).min(0.0),
            })
            .collect(),
        SpectrumKind::Theoretical,
    )?;
    spec.alpha_as = alpha_at_zero;
    Ok(spec)
}

/// `e^{τ·f(α)}`, zero outside the support.
pub fn deviation_probability(spec: &Spectrum, alpha: f64, tau: f64) -> f64 {
    match spec.f_at(alpha) {
        Some(f) => (tau * f).exp(),
        None => 0.0,
    }
}

/// Writes `q,lambda,alpha,f` rows after the given comment header.
pub fn write_theory_csv(path: &Path, header: &str, curve: &ScgfCurve) -> Result<()> {
    let mut out = String::from(header);
    out.push_str("q,lambda,alpha,f\n");
    for p in &curve.points {
        let f = (p.lambda - p.q * p.dlambda).min(0.0);
        out.push_str(&format!("{},{},{},{}\n", p.q, p.lambda, p.dlambda, f));
    }
    fs::File::create(path)
        .and_then(|mut file| file.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Reads a `q,lambda,alpha,f` file back into the curve it was written from.
pub fn read_theory_csv(path: &Path) -> Result<ScgfCurve> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != "q,lambda,alpha,f" {
                return Err(Error::format(
                    path,
                    n + 1,
                    "expected header `q,lambda,alpha,f`",
                ));
            }
            header_seen = true;
            continue;
        }
        let fields = crate::simulate::parse_fields::<4>(line, path, n + 1)?;
        points.push(ScgfPoint {
            q: fields[0],
            lambda: fields[1],
            dlambda: fields[2],
        });
    }
    if points.is_empty() {
        return Err(Error::format(path, 0, "no data rows"));
    }
    Ok(ScgfCurve { points })
}
