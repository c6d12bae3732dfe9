#![allow(dead_code)]

use buzz_ld::spectrum_theory::{Spectrum, SpectrumKind, SpectrumPoint};
use buzz_ld::ModelParams;
use proptest::prelude::*;

/// Two-state chain i ∈ {0, 1}: up at rate `l`, down at rate `gamma`.
pub fn two_state(l: f64, gamma: f64) -> ModelParams {
    ModelParams {
        beta1: 1.0,
        beta2: 1.0,
        gamma,
        mu: 1.0,
        l,
        a1: 0.0,
        a2: 0.0,
        i_max: 1,
        r_max: 0,
    }
}

/// Rate function of the symmetric unit-rate two-state chain.
pub fn two_state_rate_function(alpha: f64) -> f64 {
    -((1.0 - alpha).sqrt() - alpha.sqrt()).powi(2)
}

/// SCGF of the symmetric unit-rate two-state chain: the larger root of
/// `x² + (2 − q)x − q = 0`.
pub fn two_state_scgf(q: f64) -> f64 {
    ((q - 2.0) + ((q - 2.0) * (q - 2.0) + 4.0 * q).sqrt()) / 2.0
}

/// The closed-form two-state spectrum sampled on `n` interior points.
pub fn two_state_spectrum(n: usize) -> Spectrum {
    let points = (1..n)
        .map(|k| {
            let alpha = k as f64 / n as f64;
            SpectrumPoint {
                alpha,
                f: two_state_rate_function(alpha),
            }
        })
        .collect();
    Spectrum::from_points(points, SpectrumKind::Theoretical).unwrap()
}

/// Valid parameters on small state spaces, two-phase or single-phase.
pub fn small_params() -> impl Strategy<Value = ModelParams> {
    (
        0.01f64..2.0,
        0.0f64..2.0,
        0.05f64..3.0,
        0.05f64..3.0,
        0.05f64..3.0,
        prop::option::of((0.001f64..1.0, 0.001f64..1.0)),
        1u32..8,
        0u32..8,
    )
        .prop_map(|(beta1, extra, gamma, mu, l, flips, i_max, r_max)| {
            let (a1, a2, beta2) = match flips {
                Some((a1, a2)) => (a1, a2, beta1 + extra),
                None => (0.0, 0.0, beta1),
            };
            ModelParams {
                beta1,
                beta2,
                gamma,
                mu,
                l,
                a1,
                a2,
                i_max,
                r_max,
            }
        })
}

/// Composite midpoint rule with `cells` equal cells.
pub fn midpoint(g: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let h = (b - a) / cells as f64;
    (0..cells).map(|k| g(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Overflow mass by midpoint rule on each spectrum segment, refined
/// geometrically towards `capacity`.
pub fn overflow_mass_oracle(
    spec: &Spectrum,
    capacity: f64,
    buffer_q: f64,
    tau_max: f64,
    cells: usize,
) -> f64 {
    let density = |alpha: f64| {
        let f = spec.f_at(alpha).unwrap();
        let excess = alpha - capacity;
        if excess <= 0.0 {
            return if buffer_q == 0.0 { -1.0 / f } else { 0.0 };
        }
        let tau_min = buffer_q / excess;
        if tau_max.is_infinite() {
            (tau_min * f).exp() / -f
        } else if tau_max > tau_min {
            ((tau_min * f).exp() - (tau_max * f).exp()) / -f
        } else {
            0.0
        }
    };
    let mut knots = vec![capacity];
    knots.extend(
        spec.points
            .iter()
            .map(|p| p.alpha)
            .filter(|&a| a > capacity),
    );
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        if a == capacity {
            // Geometric sub-intervals towards the lower end.
            let mut hi = b;
            for _ in 0..30 {
                let lo = a + 0.5 * (hi - a);
                total += midpoint(density, lo, hi, cells);
                hi = lo;
            }
            total += midpoint(density, a, hi, cells);
        } else {
            total += midpoint(density, a, b, cells);
        }
    }
    total
}
