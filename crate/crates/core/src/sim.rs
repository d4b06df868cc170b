//! Switched trajectories, switching signals and empirical absorption checks.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use thiserror::Error;

use crate::certify::{AbsorbingSetCertificate, SwitchedSystem};
use crate::poly::Polynomial;

/// States whose Euclidean norm exceeds this are reported as divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;
/// Relative slack on `γ` when checking for re-exit.
pub const REEXIT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("switching signal: {0}")]
    InvalidSignal(String),
    #[error("subsystem index {index} out of range for {count} subsystems")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("certificate has not passed verification")]
    UnverifiedCertificate,
    #[error("trajectory from {x0:?} diverged at t = {time} under a certified system")]
    CertificateContradiction { x0: Vec<f64>, time: f64 },
}

/// Piecewise-constant signal: `switches[k] = (t_k, i_k)` activates subsystem `i_k` (0-based) from `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    switches: Vec<(f64, usize)>,
    horizon: f64,
}

impl SwitchingSignal {
    pub fn new(switches: Vec<(f64, usize)>, horizon: f64) -> Result<Self, SimError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SimError::InvalidHorizon(horizon));
        }
        match switches.first() {
            Some(&(t, _)) if t == 0.0 => {}
            _ => return Err(SimError::InvalidSignal("the first switch must be at t = 0".into())),
        }
        if switches.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(SimError::InvalidSignal("switch times must be strictly increasing".into()));
        }
        if switches.iter().any(|&(t, _)| !t.is_finite() || t > horizon) {
            return Err(SimError::InvalidSignal("switch times must lie in [0, T]".into()));
        }
        Ok(SwitchingSignal { switches, horizon })
    }

    pub fn constant(index: usize, horizon: f64) -> Result<Self, SimError> {
        Self::new(vec![(0.0, index)], horizon)
    }

    pub fn switches(&self) -> &[(f64, usize)] {
        &self.switches
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of switch events after `t = 0`.
    pub fn switch_count(&self) -> usize {
        self.switches.len() - 1
    }

    pub fn index_at(&self, t: f64) -> usize {
        let k = self.switches.partition_point(|&(s, _)| s <= t);
        self.switches[k.max(1) - 1].1
    }

    fn max_index(&self) -> usize {
        self.switches.iter().map(|s| s.1).max().unwrap_or(0)
    }

    /// Active index for each step `[t_k, t_{k+1})` with switch times snapped to the nearest grid point.
    fn grid_indices(&self, h: f64, steps: usize) -> Vec<usize> {
        let mut active = vec![0; steps];
        let mut next = 0;
        let snapped: Vec<(usize, usize)> = self.switches.iter().map(|&(t, i)| ((t / h).round() as usize, i)).collect();
        let mut current = snapped[0].1;
        for (k, slot) in active.iter_mut().enumerate() {
            // Later switches snapped onto the same point win.
            while next < snapped.len() && snapped[next].0 <= k {
                current = snapped[next].1;
                next += 1;
            }
            *slot = current;
        }
        active
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Index active on `[t_k, t_{k+1})`; the last entry repeats the final active index.
    pub active: Vec<usize>,
    /// Time at which the divergence guard stopped the integration.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// `t,i,x1..xn` with 1-based `i` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = String::from("t,i");
        for j in 1..=n {
            header.push_str(&format!(",x{}", j));
        }
        writeln!(out, "{}", header)?;
        for ((t, x), i) in self.times.iter().zip(&self.states).zip(&self.active) {
            write!(out, "{:.16e},{}", t, i + 1)?;
            for v in x {
                write!(out, ",{:.16e}", v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    fn step(&mut self, system: &SwitchedSystem, i: usize, x: &mut [f64], h: f64) {
        let f = &system.subsystems()[i];
        let n = x.len();
        f.eval_into(x, &mut self.k[0]);
        for s in 1..4 {
            let c = if s == 3 { h } else { 0.5 * h };
            for j in 0..n {
                self.tmp[j] = x[j] + c * self.k[s - 1][j];
            }
            f.eval_into(&self.tmp, &mut self.k[s]);
        }
        for j in 0..n {
            x[j] += h / 6.0 * (self.k[0][j] + 2.0 * self.k[1][j] + 2.0 * self.k[2][j] + self.k[3][j]);
        }
    }
}

fn grid(h: f64, horizon: f64) -> Result<usize, SimError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SimError::InvalidStep(h));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    Ok(((horizon / h).round() as usize).max(1))
}

fn check_start(system: &SwitchedSystem, x0: &[f64]) -> Result<(), SimError> {
    if x0.len() != system.dim() {
        return Err(SimError::DimensionMismatch { expected: system.dim(), found: x0.len() });
    }
    Ok(())
}

/// Fixed-step RK4 along `signal` on the grid `t_k = k h`, `k h ≤ T`.
pub fn integrate(
    system: &SwitchedSystem,
    signal: &SwitchingSignal,
    x0: &[f64],
    h: f64,
    horizon: f64,
) -> Result<Trajectory, SimError> {
    check_start(system, x0)?;
    let steps = grid(h, horizon)?;
    if signal.max_index() >= system.len() {
        return Err(SimError::IndexOutOfRange { index: signal.max_index(), count: system.len() });
    }
    let active = signal.grid_indices(h, steps);
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    let mut traj = Trajectory {
        step: h,
        times: vec![0.0],
        states: vec![x.clone()],
        active: Vec::with_capacity(steps + 1),
        diverged_at: None,
    };
    for (k, &i) in active.iter().enumerate() {
        traj.active.push(i);
        rk.step(system, i, &mut x, h);
        let t = (k + 1) as f64 * h;
        traj.times.push(t);
        traj.states.push(x.clone());
        if !(norm(&x) <= DIVERGENCE_GUARD) {
            traj.diverged_at = Some(t);
            break;
        }
    }
    let last = *traj.active.last().unwrap_or(&active[0]);
    traj.active.push(last);
    Ok(traj)
}

/// Exponential dwell times with mean `tau`; each switch picks uniformly among the other subsystems.
pub fn random_switching(count: usize, horizon: f64, tau: f64, seed: u64) -> Result<SwitchingSignal, SimError> {
    if count == 0 {
        return Err(SimError::InvalidSignal("no subsystems".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SimError::InvalidSignal(format!("mean dwell time must be positive, got {}", tau)));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(1.0 / tau).map_err(|e| SimError::InvalidSignal(e.to_string()))?;
    let mut current = rng.random_range(0..count);
    let mut switches = vec![(0.0, current)];
    if count == 1 {
        return SwitchingSignal::new(switches, horizon);
    }
    let mut t = 0.0;
    loop {
        t += gaps.sample(&mut rng);
        if t >= horizon {
            break;
        }
        let mut next = rng.random_range(0..count - 1);
        if next >= current {
            next += 1;
        }
        current = next;
        switches.push((t, current));
    }
    SwitchingSignal::new(switches, horizon)
}

fn argmax_lie(system: &SwitchedSystem, grad: &[Polynomial], x: &[f64]) -> usize {
    system.max_lie(grad, x).1
}

/// Greedy signal choosing `argmax_i ∇V·f_i` at every grid point, lowest index on ties.
pub fn adversarial_switching(
    system: &SwitchedSystem,
    v: &Polynomial,
    x0: &[f64],
    h: f64,
    horizon: f64,
) -> Result<SwitchingSignal, SimError> {
    check_start(system, x0)?;
    if v.dim() != system.dim() {
        return Err(SimError::DimensionMismatch { expected: system.dim(), found: v.dim() });
    }
    let steps = grid(h, horizon)?;
    let grad = v.gradient();
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    let mut current = argmax_lie(system, &grad, &x);
    let mut switches = vec![(0.0, current)];
    for k in 0..steps {
        let i = argmax_lie(system, &grad, &x);
        if i != current {
            current = i;
            switches.push((k as f64 * h, i));
        }
        rk.step(system, i, &mut x, h);
        if !(norm(&x) <= DIVERGENCE_GUARD) {
            break;
        }
    }
    SwitchingSignal::new(switches, horizon)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    Fixed(SwitchingSignal),
    /// Greedy signal computed from each initial point with the certificate's `V`.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionEntry {
    pub start: usize,
    pub signal: usize,
    /// First grid time with `V(x) ≤ γ`.
    pub first_entry: Option<f64>,
    /// `max V(x) - γ` over grid times after entry; `-∞` without entry.
    pub post_entry_excess: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionReport {
    pub entries: Vec<AbsorptionEntry>,
    pub gamma: f64,
    pub tolerance: f64,
}

impl AbsorptionReport {
    pub fn violations(&self) -> usize {
        self.entries.iter().filter(|e| e.violation).count()
    }

    pub fn entered(&self) -> usize {
        self.entries.iter().filter(|e| e.first_entry.is_some()).count()
    }
}

/// Entry time into `{V ≤ γ}` and the largest excursion above `γ` afterwards.
pub fn absorption_entry(traj: &Trajectory, v: &Polynomial, gamma: f64, start: usize, signal: usize) -> AbsorptionEntry {
    let limit = gamma * (1.0 + REEXIT_TOLERANCE);
    let mut first_entry = None;
    let mut excess = f64::NEG_INFINITY;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let value = v.eval_unchecked(x);
        if first_entry.is_none() {
            if value <= gamma {
                first_entry = Some(*t);
                excess = value - gamma;
            }
        } else {
            excess = excess.max(value - gamma);
        }
    }
    AbsorptionEntry {
        start,
        signal,
        first_entry,
        post_entry_excess: excess,
        violation: first_entry.is_some() && excess + gamma > limit,
    }
}

/// Simulates every (initial point, signal) pair and checks that `{V ≤ γ}` is never left after entry.
pub fn check_absorption(
    system: &SwitchedSystem,
    certificate: &AbsorbingSetCertificate,
    starts: &[Vec<f64>],
    signals: &[SignalSource],
    h: f64,
    horizon: f64,
) -> Result<AbsorptionReport, SimError> {
    if !certificate.verified() {
        return Err(SimError::UnverifiedCertificate);
    }
    grid(h, horizon)?;
    for x0 in starts {
        check_start(system, x0)?;
    }
    let v = &certificate.v;
    let gamma = certificate.gamma;
    let pairs: Vec<(usize, usize)> =
        (0..starts.len()).flat_map(|a| (0..signals.len()).map(move |b| (a, b))).collect();
    let entries: Result<Vec<AbsorptionEntry>, SimError> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let x0 = &starts[a];
            let signal = match &signals[b] {
                SignalSource::Fixed(s) => s.clone(),
                SignalSource::Adversarial => adversarial_switching(system, v, x0, h, horizon)?,
            };
            let traj = integrate(system, &signal, x0, h, horizon)?;
            if let Some(time) = traj.diverged_at {
                return Err(SimError::CertificateContradiction { x0: x0.clone(), time });
            }
            Ok(absorption_entry(&traj, v, gamma, a, b))
        })
        .collect();
    Ok(AbsorptionReport { entries: entries?, gamma, tolerance: REEXIT_TOLERANCE })
}

/// Tensor grid with `per_axis` points per coordinate over the box `[lo_j, hi_j]`; one point per axis sits at the center.
pub fn grid_points(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let dim = lo.len();
    let axis = |j: usize, k: usize| {
        if per_axis <= 1 {
            0.5 * (lo[j] + hi[j])
        } else {
            lo[j] + (hi[j] - lo[j]) * k as f64 / (per_axis - 1) as f64
        }
    };
    let mut points = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        points.push((0..dim).map(|j| axis(j, idx[j])).collect());
        let mut j = 0;
        while j < dim {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == dim {
            break;
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{parse_expression, PolynomialVectorField};
    use proptest::prelude::*;

    fn system(dim: usize, fields: &[&[&str]]) -> SwitchedSystem {
        SwitchedSystem::new(
            fields
                .iter()
                .map(|c| PolynomialVectorField::new(c.iter().map(|e| parse_expression(e, dim).unwrap()).collect()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn decay() -> SwitchedSystem {
        system(1, &[&["-x1"]])
    }

    #[test]
    fn one_step_of_exponential_decay() {
        let s = SwitchingSignal::constant(0, 0.1).unwrap();
        let t = integrate(&decay(), &s, &[1.0], 0.1, 0.1).unwrap();
        assert_eq!(t.states.len(), 2);
        assert!((t.final_state()[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((t.final_state()[0] - 0.9048375).abs() < 1e-7);
    }

    #[test]
    fn rotation_returns_after_full_period() {
        let sys = system(2, &[&["-x2", "x1"]]);
        let period = std::f64::consts::TAU;
        let h = period / 10000.0;
        let t = integrate(&sys, &SwitchingSignal::constant(0, period).unwrap(), &[1.0, 0.0], h, period).unwrap();
        let x = t.final_state();
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6, "{:?}", x);
        assert!((t.times.last().unwrap() - period).abs() < 1e-9);
    }

    #[test]
    fn rk4_global_error_scales_with_fourth_power() {
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let t = integrate(&decay(), &SwitchingSignal::constant(0, 1.0).unwrap(), &[1.0], h, 1.0).unwrap();
                (t.final_state()[0] - (-1.0f64).exp()).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 16.0 / 4.0 && ratio < 16.0 * 4.0, "ratio {}", ratio);
        }
    }

    #[test]
    fn energy_decreases_for_stable_scalar_system() {
        let t = integrate(&decay(), &SwitchingSignal::constant(0, 5.0).unwrap(), &[2.0], 1e-2, 5.0).unwrap();
        for w in t.states.windows(2) {
            assert!(w[1][0] * w[1][0] < w[0][0] * w[0][0]);
        }
    }

    #[test]
    fn divergence_guard_stops_integration() {
        let sys = system(1, &[&["x1"]]);
        let t = integrate(&sys, &SwitchingSignal::constant(0, 100.0).unwrap(), &[1.0], 1e-2, 100.0).unwrap();
        let at = t.diverged_at.expect("diverges");
        assert!((27.0..29.0).contains(&at), "{}", at);
        assert!(norm(t.final_state()) > DIVERGENCE_GUARD);
    }

    #[test]
    fn concatenation_at_switch_time_is_bitwise() {
        let sys = system(2, &[&["-x1+x2", "-x2"], &["x2", "-x1-x2^3"]]);
        let h = 0.01;
        let full = SwitchingSignal::new(vec![(0.0, 0), (0.5, 1), (1.2, 0)], 2.0).unwrap();
        let whole = integrate(&sys, &full, &[1.0, -0.5], h, 2.0).unwrap();
        let first = integrate(&sys, &SwitchingSignal::new(vec![(0.0, 0), (0.5, 1)], 1.2).unwrap(), &[1.0, -0.5], h, 1.2)
            .unwrap();
        let second = integrate(&sys, &SwitchingSignal::constant(0, 0.8).unwrap(), first.final_state(), h, 0.8).unwrap();
        assert_eq!(whole.final_state(), second.final_state());
        assert_eq!(whole.states[120], *first.final_state());
    }

    #[test]
    fn switch_times_snap_to_grid() {
        let s = SwitchingSignal::new(vec![(0.0, 0), (0.0149, 1)], 1.0).unwrap();
        let idx = s.grid_indices(0.01, 4);
        assert_eq!(idx, vec![0, 1, 1, 1]);
        let s = SwitchingSignal::new(vec![(0.0, 0), (0.0151, 1)], 1.0).unwrap();
        assert_eq!(s.grid_indices(0.01, 4), vec![0, 0, 1, 1]);
    }

    #[test]
    fn signal_validation() {
        assert!(SwitchingSignal::new(vec![(0.1, 0)], 1.0).is_err());
        assert!(SwitchingSignal::new(vec![(0.0, 0), (0.0, 1)], 1.0).is_err());
        assert!(SwitchingSignal::new(vec![(0.0, 0), (2.0, 1)], 1.0).is_err());
        assert!(SwitchingSignal::new(vec![(0.0, 0)], 0.0).is_err());
        let s = SwitchingSignal::new(vec![(0.0, 0), (0.5, 1)], 1.0).unwrap();
        assert_eq!(s.index_at(0.2), 0);
        assert_eq!(s.index_at(0.5), 1);
        assert_eq!(s.index_at(0.9), 1);
        let sys = decay();
        assert!(matches!(integrate(&sys, &s, &[1.0], 0.1, 1.0), Err(SimError::IndexOutOfRange { .. })));
        assert!(matches!(integrate(&sys, &SwitchingSignal::constant(0, 1.0).unwrap(), &[1.0], 0.0, 1.0), Err(SimError::InvalidStep(_))));
        assert!(matches!(integrate(&sys, &SwitchingSignal::constant(0, 1.0).unwrap(), &[1.0, 2.0], 0.1, 1.0), Err(SimError::DimensionMismatch { .. })));
    }

    #[test]
    fn single_subsystem_signal_is_constant() {
        for seed in 0..10 {
            let s = random_switching(1, 50.0, 0.1, seed).unwrap();
            assert_eq!(s.switch_count(), 0);
        }
        let sys = decay();
        let v = parse_expression("x1^2", 1).unwrap();
        assert_eq!(adversarial_switching(&sys, &v, &[1.0], 0.01, 1.0).unwrap().switch_count(), 0);
    }

    #[test]
    fn random_signal_is_deterministic_per_seed() {
        let a = random_switching(3, 20.0, 0.5, 42).unwrap();
        let b = random_switching(3, 20.0, 0.5, 42).unwrap();
        let c = random_switching(3, 20.0, 0.5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.switches().windows(2).all(|w| w[0].1 != w[1].1));
    }

    #[test]
    fn random_switch_count_matches_poisson_mean() {
        let total: usize = (0..100).map(|seed| random_switching(2, 20.0, 0.5, seed).unwrap().switch_count()).sum();
        let mean = total as f64 / 100.0;
        assert!((mean - 40.0).abs() <= 0.3 * 40.0, "mean {}", mean);
    }

    #[test]
    fn adversarial_ties_go_to_lowest_index() {
        let sys = system(1, &[&["-x1"], &["-x1"]]);
        let v = parse_expression("x1^2", 1).unwrap();
        let s = adversarial_switching(&sys, &v, &[1.0], 0.01, 1.0).unwrap();
        assert_eq!(s.switches(), &[(0.0, 0)]);
    }

    #[test]
    fn adversarial_picks_largest_derivative() {
        let sys = system(1, &[&["-2*x1"], &["-x1"]]);
        let v = parse_expression("x1^2", 1).unwrap();
        let s = adversarial_switching(&sys, &v, &[1.0], 0.01, 1.0).unwrap();
        assert_eq!(s.switches(), &[(0.0, 1)]);
    }

    #[test]
    fn adversarial_signal_replays_identically() {
        let sys = system(2, &[&["x2", "-0.1*x1-2*x2"], &["x2", "-13.26*x1-2*x2"]]);
        let v = parse_expression("x1^2+x2^2", 2).unwrap();
        let s = adversarial_switching(&sys, &v, &[1.0, 0.0], 0.01, 5.0).unwrap();
        assert!(s.switch_count() > 0);
        let t = integrate(&sys, &s, &[1.0, 0.0], 0.01, 5.0).unwrap();
        let mut rk = Rk4::new(2);
        let grad = v.gradient();
        let mut x = vec![1.0, 0.0];
        for _ in 0..500 {
            let i = argmax_lie(&sys, &grad, &x);
            rk.step(&sys, i, &mut x, 0.01);
        }
        assert_eq!(t.final_state(), x.as_slice());
    }

    #[test]
    fn csv_header_and_precision() {
        let t = integrate(&system(2, &[&["-x1", "-x2"]]), &SwitchingSignal::constant(0, 0.2).unwrap(), &[1.0, 2.0], 0.1, 0.2)
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,i,x1,x2");
        assert_eq!(lines.len(), 4);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[1], "1");
        assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0);
        let mantissa = fields[3].split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
        let x = t.states[2][0];
        assert_eq!(lines[3].split(',').nth(2).unwrap().parse::<f64>().unwrap(), x);
    }

    #[test]
    fn grid_points_cover_box_corners() {
        let pts = grid_points(&[-1.0, -2.0], &[1.0, 2.0], 3);
        assert_eq!(pts.len(), 9);
        assert!(pts.contains(&vec![-1.0, -2.0]));
        assert!(pts.contains(&vec![1.0, 2.0]));
        assert!(pts.contains(&vec![0.0, 0.0]));
        assert_eq!(grid_points(&[0.0; 3], &[1.0; 3], 2).len(), 8);
    }

    proptest! {
        #[test]
        fn random_signals_are_well_formed(n in 1usize..5, tau in 0.05f64..2.0, seed in any::<u64>()) {
            let s = random_switching(n, 10.0, tau, seed).unwrap();
            prop_assert_eq!(s.switches()[0].0, 0.0);
            prop_assert!(s.switches().windows(2).all(|w| w[1].0 > w[0].0));
            prop_assert!(s.switches().iter().all(|&(t, i)| t < 10.0 && i < n));
        }

        #[test]
        fn halving_step_changes_final_state_by_fourth_order(x0 in -2.0f64..2.0, y0 in -2.0f64..2.0) {
            let sys = system(2, &[&["x2", "-x1-0.3*x2"]]);
            let s = SwitchingSignal::constant(0, 1.0).unwrap();
            let a = integrate(&sys, &s, &[x0, y0], 0.1, 1.0).unwrap();
            let b = integrate(&sys, &s, &[x0, y0], 0.05, 1.0).unwrap();
            let d = norm(&[a.final_state()[0] - b.final_state()[0], a.final_state()[1] - b.final_state()[1]]);
            prop_assert!(d <= 1e-3 * (1.0 + norm(&[x0, y0])) * 0.1f64.powi(4) * 100.0);
        }
    }
}
