//! Exact sample paths of the chain and uniformly sampled workload series.
//!
//! Paths are drawn event by event: the holding time in state `s` is
//! exponential with rate `−A[s][s]` (inverse transform of an open-interval
//! uniform) and the next state is picked proportionally to its rate. The
//! random stream is ChaCha8 seeded from a `u64`, which is portable across
//! platforms.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::distributions::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ChainState, Generator, Phase};

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// `(t, state)` with `t` strictly increasing, starting at `0`.
    pub events: Vec<(f64, ChainState)>,
    pub horizon: f64,
}

impl Trace {
    /// `∫₀^horizon Φ(X_s) ds`.
    pub fn integral(&self) -> f64 {
        self.weighted(|s| s.workload())
    }

    /// Time average of the workload over the horizon.
    pub fn time_average(&self) -> f64 {
        if self.horizon > 0.0 {
            self.integral() / self.horizon
        } else {
            self.events[0].1.workload()
        }
    }

    /// Fraction of time spent in the buzz phase.
    pub fn buzz_fraction(&self) -> f64 {
        if self.horizon > 0.0 {
            self.weighted(|s| if s.phase == Phase::Buzz { 1.0 } else { 0.0 }) / self.horizon
        } else {
            0.0
        }
    }

    fn weighted(&self, g: impl Fn(&ChainState) -> f64) -> f64 {
        let mut total = 0.0;
        for (k, (t, s)) in self.events.iter().enumerate() {
            let end = self.events.get(k + 1).map_or(self.horizon, |e| e.0);
            total += g(s) * (end - t);
        }
        total
    }

    pub fn write_csv(&self, path: &Path, header: &str) -> Result<()> {
        let mut out = String::with_capacity(header.len() + 24 * self.events.len());
        out.push_str(header);
        out.push_str("t,i,r,phase\n");
        for (t, s) in &self.events {
            let _ = writeln!(out, "{t},{},{},{}", s.i, s.r, s.phase.number());
        }
        write_file(path, &out)
    }

    /// Reads an event file; the horizon is not stored in the file and must
    /// be supplied.
    pub fn read_csv(path: &Path, horizon: f64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut events = Vec::new();
        for (line_no, line) in data_lines(&text, "t,i,r,phase") {
            let v = parse_fields::<4>(line, path, line_no)?;
            let count = |x: f64| -> Result<u32> {
                if x.fract() != 0.0 || x < 0.0 {
                    return Err(Error::format(
                        path,
                        line_no,
                        format!("expected a count, got {x}"),
                    ));
                }
                Ok(x as u32)
            };
            let phase = Phase::from_number(v[3] as u8)
                .filter(|_| v[3] == 1.0 || v[3] == 2.0)
                .ok_or_else(|| Error::format(path, line_no, "phase must be 1 or 2"))?;
            events.push((v[0], ChainState::new(count(v[1])?, count(v[2])?, phase)));
        }
        if events.is_empty() {
            return Err(Error::format(path, 0, "no events"));
        }
        Ok(Trace { events, horizon })
    }
}

/// Uniformly sampled observable: `values[k] = Φ(X(k·dt))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SampledSeries {
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Drops the first `skip` time units.
    pub fn skip(&self, skip: f64) -> SampledSeries {
        let n = ((skip / self.dt).ceil() as usize).min(self.values.len());
        SampledSeries {
            dt: self.dt,
            values: self.values[n..].to_vec(),
        }
    }

    pub fn write_csv(&self, path: &Path, header: &str) -> Result<()> {
        let mut out = String::with_capacity(header.len() + 16 * self.values.len());
        out.push_str(header);
        out.push_str("t,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{v}", k as f64 * self.dt);
        }
        write_file(path, &out)
    }
}

/// Draws an exact path of the chain on `[0, horizon]`.
pub fn simulate(gen: &Generator, horizon: f64, seed: u64, initial: ChainState) -> Result<Trace> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "horizon must be >= 0, got {horizon}"
        )));
    }
    let mut idx = gen.index(initial).ok_or_else(|| {
        Error::InvalidInput(format!(
            "initial state {initial:?} is outside the state space"
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = vec![(0.0, initial)];
    let mut t = 0.0;
    loop {
        let exit = gen.exit_rate(idx);
        if exit <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "state {:?} has zero exit rate",
                gen.state(idx)
            )));
        }
        let u: f64 = Open01.sample(&mut rng);
        t += -u.ln() / exit;
        if t > horizon {
            break;
        }
        let pick: f64 = Open01.sample(&mut rng);
        let mut target = exit * pick;
        let mut next = None;
        for (to, rate) in gen.transitions(idx) {
            next = Some(to);
            if target < rate {
                break;
            }
            target -= rate;
        }
        idx = next.expect("positive exit rate implies a transition");
        events.push((t, gen.state(idx)));
    }
    Ok(Trace { events, horizon })
}

/// Piecewise-constant sampling: value at `k·dt` is the state holding then.
pub fn sample(trace: &Trace, dt: f64) -> Result<SampledSeries> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    let n = (trace.horizon / dt).floor() as usize + 1;
    let mut values = Vec::with_capacity(n);
    let mut cursor = 0;
    for k in 0..n {
        let t = k as f64 * dt;
        while cursor + 1 < trace.events.len() && trace.events[cursor + 1].0 <= t {
            cursor += 1;
        }
        values.push(trace.events[cursor].1.workload());
    }
    Ok(SampledSeries { dt, values })
}

/// Reads a two-column `t,value` series with a constant positive step.
/// `#` comment lines and a `t,value` header row are skipped.
pub fn ingest_csv(path: &Path) -> Result<SampledSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut times: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for (line_no, line) in data_lines(&text, "t,value") {
        let [t, v] = parse_fields::<2>(line, path, line_no)?;
        if v < 0.0 {
            return Err(Error::format(path, line_no, format!("negative value {v}")));
        }
        if let Some(&prev) = times.last() {
            if times.len() >= 2 {
                let dt: f64 = times[1] - times[0];
                let step: f64 = t - prev;
                if (step - dt).abs() > 1e-6 * dt {
                    return Err(Error::format(
                        path,
                        line_no,
                        format!("non-uniform step {step} (expected {dt})"),
                    ));
                }
            } else if t <= prev {
                return Err(Error::format(path, line_no, "time must increase"));
            }
        }
        times.push(t);
        values.push(v);
    }
    if values.len() < 2 {
        return Err(Error::format(
            path,
            0,
            format!(
                "need at least two rows to infer the step, found {}",
                values.len()
            ),
        ));
    }
    Ok(SampledSeries {
        dt: times[1] - times[0],
        values,
    })
}

/// Non-comment, non-empty lines with 1-based numbers, skipping one
/// leading `header` row if present.
pub(crate) fn data_lines<'a>(
    text: &'a str,
    header: &'a str,
) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    let mut first = true;
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .filter(move |(_, l)| {
            let skip = first && *l == header;
            first = false;
            !skip
        })
}

pub(crate) fn parse_fields<const N: usize>(
    line: &str,
    path: &Path,
    line_no: usize,
) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    let mut parts = line.split(',');
    for slot in out.iter_mut() {
        let raw = parts
            .next()
            .ok_or_else(|| Error::format(path, line_no, format!("expected {N} columns")))?
            .trim();
        *slot = raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::format(path, line_no, format!("cannot parse `{raw}`")))?;
    }
    if parts.next().is_some() {
        return Err(Error::format(
            path,
            line_no,
            format!("expected {N} columns"),
        ));
    }
    Ok(out)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_generator, ModelParams};

    fn two_state() -> Generator {
        build_generator(&ModelParams {
            beta1: 1.0,
            beta2: 1.0,
            gamma: 1.0,
            mu: 1.0,
            l: 1.0,
            a1: 0.0,
            a2: 0.0,
            i_max: 1,
            r_max: 0,
        })
        .unwrap()
    }

    #[test]
    fn zero_horizon() {
        let gen = two_state();
        let tr = simulate(&gen, 0.0, 7, ChainState::default()).unwrap();
        assert_eq!(tr.events, vec![(0.0, ChainState::default())]);
        let s = sample(&tr, 0.5).unwrap();
        assert_eq!(s.values, vec![0.0]);
    }

    #[test]
    fn constant_series_from_single_event() {
        let tr = Trace {
            events: vec![(0.0, ChainState::new(4, 1, Phase::BuzzFree))],
            horizon: 10.0,
        };
        let s = sample(&tr, 2.5).unwrap();
        assert_eq!(s.values, vec![4.0; 5]);
    }

    #[test]
    fn interpolation_rule() {
        let tr = Trace {
            events: vec![
                (0.0, ChainState::new(0, 0, Phase::BuzzFree)),
                (1.5, ChainState::new(1, 0, Phase::BuzzFree)),
            ],
            horizon: 3.0,
        };
        assert_eq!(sample(&tr, 1.0).unwrap().values, vec![0.0, 0.0, 1.0, 1.0]);
        assert!((tr.integral() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn path_steps_are_unit_moves() {
        let gen = build_generator(&ModelParams::buzz()).unwrap();
        let tr = simulate(&gen, 500.0, 3, ChainState::default()).unwrap();
        for w in tr.events.windows(2) {
            let (a, b) = (w[0].1, w[1].1);
            assert!(w[1].0 > w[0].0);
            let di = (a.i as i64 - b.i as i64).abs();
            let dr = (a.r as i64 - b.r as i64).abs();
            let dp = (a.phase != b.phase) as i64;
            // Completion moves i and r together, except at r saturation.
            let completion = b.i + 1 == a.i && (b.r == a.r + 1 || b.r == a.r) && dp == 0;
            assert!(completion || di + dr + dp == 1, "{a:?} -> {b:?}");
        }
        assert!(tr.events.last().unwrap().0 <= 500.0);
    }

    #[test]
    fn same_seed_same_path() {
        let gen = build_generator(&ModelParams::buzz()).unwrap();
        let a = simulate(&gen, 200.0, 11, ChainState::default()).unwrap();
        let b = simulate(&gen, 200.0, 11, ChainState::default()).unwrap();
        let c = simulate(&gen, 200.0, 12, ChainState::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        let gen = two_state();
        assert!(simulate(&gen, -1.0, 0, ChainState::default()).is_err());
        assert!(simulate(&gen, 1.0, 0, ChainState::new(2, 0, Phase::BuzzFree)).is_err());
        assert!(simulate(&gen, 1.0, 0, ChainState::new(0, 0, Phase::Buzz)).is_err());
        let tr = simulate(&gen, 1.0, 0, ChainState::default()).unwrap();
        assert!(sample(&tr, 0.0).is_err());
    }

    #[test]
    fn ingest_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "0,5\n1,5\n2,7").unwrap();
        let s = ingest_csv(&p).unwrap();
        assert_eq!(
            s,
            SampledSeries {
                dt: 1.0,
                values: vec![5.0, 5.0, 7.0]
            }
        );

        fs::write(&p, "").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::Format { .. })));

        fs::write(&p, "0,5\n1,5\n3,7\n").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::Format { line: 3, .. })));

        fs::write(&p, "0,5\n1,-2\n").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::Format { line: 2, .. })));

        fs::write(&p, "# comment\nt,value\n0,5\n1,x\n").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::Format { line: 4, .. })));
    }

    #[test]
    fn event_file_roundtrip() {
        let gen = build_generator(&ModelParams::buzz()).unwrap();
        let tr = simulate(&gen, 50.0, 5, ChainState::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        tr.write_csv(&p, "# test\n").unwrap();
        assert_eq!(Trace::read_csv(&p, 50.0).unwrap(), tr);
    }
}
