//! Quantum-jump unraveling of the master equation with a displaced detection channel.
//!
//! Jump operators are `c₀ = α(t) − i√κ σ_GW` (detector click), `c₁ = √Γ σ_GW`,
//! `c₂ = √γ_d σ_DW` and `c₃ = √Γ σ_GD` (undetected). Displacing `c₀` by the
//! c-number `β = α` is compensated by adding `−(i/2)(β*L − βL†)` with
//! `L = −i√κ σ_GW` to the drive Hamiltonian, since
//! `𝒟[L+β]ρ = 𝒟[L]ρ + [(β*L − βL†)/2, ρ]`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::master::{ket_bra, D, G, W};
use crate::ode::{Dopri5, OdeOptions};
use crate::{Error, PulseSpec, Result, SystemParams};

type C = Complex64;
type Ket = [C; 3];

/// How clicks are spread over detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Assignment {
    #[default]
    RoundRobin,
    Random,
}

impl std::str::FromStr for Assignment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round-robin" => Ok(Assignment::RoundRobin),
            "random" => Ok(Assignment::Random),
            _ => Err(Error::invalid("assignment", format!("`{s}` is not round-robin or random"))),
        }
    }
}

impl std::fmt::Display for Assignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Assignment::RoundRobin => "round-robin",
            Assignment::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub n_pulses: u32,
    pub seed: u64,
    /// Largest integrator step (µs).
    pub dt_max: f64,
    pub detectors: u8,
    pub assignment: Assignment,
    /// Clicks closer than this to the previous click on the same channel are dropped (µs).
    pub dead_time: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            n_pulses: 10_000,
            seed: 1,
            dt_max: 0.05,
            detectors: 1,
            assignment: Assignment::RoundRobin,
            dead_time: 0.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(Error::invalid("n_pulses", "must be at least 1"));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::invalid("dt_max", format!("{} must be positive", self.dt_max)));
        }
        if !(1..=4).contains(&self.detectors) {
            return Err(Error::invalid("detectors", format!("{} is not in 1..=4", self.detectors)));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(Error::invalid("dead_time", format!("{} must be non-negative", self.dead_time)));
        }
        Ok(())
    }
}

/// Detector clicks of one pulse.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClickRecord {
    pub pulse_id: u32,
    /// Ascending detection times (µs).
    pub clicks: Vec<f64>,
    /// Detector index per click.
    pub channels: Vec<u8>,
}

impl ClickRecord {
    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }
}

/// Jump counts by channel: detected, loss, dephasing, dark decay.
pub type JumpCounts = [u32; 4];

/// Full result of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseOutcome {
    pub record: ClickRecord,
    pub jumps: JumpCounts,
    /// Normalized pure state at each requested checkpoint.
    pub checkpoints: Vec<Vector3<C>>,
}

/// Per-pulse random stream keyed on `(seed, pulse_id)`.
pub fn pulse_rng(seed: u64, pulse_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(pulse_id));
    rng
}

/// The stochastic model: jump operators and `H_nh(α) = A₀ + αA₁ + α²A₂`.
#[derive(Debug, Clone)]
pub struct Unraveling {
    pulse: PulseSpec,
    jumps: [Matrix3<C>; 4],
    emit: Matrix3<C>,
    a: [Matrix3<C>; 3],
    opts: OdeOptions,
}

/// Jump operators at drive amplitude `alpha`.
pub fn jump_operators(alpha: f64, params: &SystemParams) -> [Matrix3<C>; 4] {
    let i = C::new(0.0, 1.0);
    [
        Matrix3::identity() * C::from(alpha) - ket_bra(G, W) * (i * params.kappa.sqrt()),
        ket_bra(G, W) * C::from(params.gamma_r.sqrt()),
        ket_bra(D, W) * C::from(params.gamma_d.sqrt()),
        ket_bra(G, D) * C::from(params.gamma_r.sqrt()),
    ]
}

/// Drive Hamiltonian including the displacement compensation.
pub fn compensated_hamiltonian(alpha: f64, params: &SystemParams) -> Matrix3<C> {
    let i = C::new(0.0, 1.0);
    let h0 = (ket_bra(G, W) + ket_bra(W, G)) * C::from(params.kappa.sqrt() * alpha);
    let l = ket_bra(G, W) * (-i * params.kappa.sqrt());
    let beta = C::from(alpha);
    h0 - (l * beta.conj() - l.adjoint() * beta) * (i * 0.5)
}

/// Non-Hermitian effective Hamiltonian `H − (i/2) Σ c†c`.
pub fn effective_hamiltonian(alpha: f64, params: &SystemParams) -> Matrix3<C> {
    let mut h = compensated_hamiltonian(alpha, params);
    for c in jump_operators(alpha, params) {
        h -= c.adjoint() * c * C::new(0.0, 0.5);
    }
    h
}

fn norm_sqr(v: &Ket) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn mat_ket(m: &Matrix3<C>, v: &Ket) -> Ket {
    let mut out = [C::new(0.0, 0.0); 3];
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[(r, 0)] * v[0] + m[(r, 1)] * v[1] + m[(r, 2)] * v[2];
    }
    out
}

impl Unraveling {
    pub fn new(params: SystemParams, pulse: PulseSpec, dt_max: f64) -> Self {
        let h0 = effective_hamiltonian(0.0, &params);
        let hp = effective_hamiltonian(1.0, &params);
        let hm = effective_hamiltonian(-1.0, &params);
        let a1 = (hp - hm) * C::from(0.5);
        let a2 = (hp + hm) * C::from(0.5) - h0;
        // the dynamics use −i·H_nh directly
        let mi = C::new(0.0, -1.0);
        Unraveling {
            pulse,
            jumps: jump_operators(0.0, &params),
            emit: ket_bra(G, W) * C::new(0.0, -params.kappa.sqrt()),
            a: [h0 * mi, a1 * mi, a2 * mi],
            opts: OdeOptions::default()
                .with_rtol(1e-7)
                .with_h_max(dt_max),
        }
    }

    fn generator(&self, t: f64) -> Matrix3<C> {
        let alpha = self.pulse.amplitude(t);
        self.a[0] + self.a[1] * C::from(alpha) + self.a[2] * C::from(alpha * alpha)
    }

    fn jump_op(&self, k: usize, t: f64) -> Matrix3<C> {
        if k == 0 {
            Matrix3::identity() * C::from(self.pulse.amplitude(t)) + self.emit
        } else {
            self.jumps[k]
        }
    }

    /// Runs one trajectory from `|G⟩` over the pulse window.
    pub fn run(
        &self,
        pulse_id: u32,
        cfg: &TrajectoryConfig,
        checkpoints: &[f64],
    ) -> Result<PulseOutcome> {
        let mut rng = pulse_rng(cfg.seed, pulse_id);
        let (t_start, t_end) = (self.pulse.t_start, self.pulse.t_end);
        let mut stops: Vec<f64> = self
            .pulse
            .knots()
            .into_iter()
            .chain(checkpoints.iter().copied())
            .filter(|&s| s > t_start && s <= t_end)
            .chain(std::iter::once(t_end))
            .collect();
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let mut cps: Vec<(usize, f64)> = checkpoints.iter().copied().enumerate().collect();
        cps.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut cp_out = vec![Vector3::zeros(); checkpoints.len()];
        let mut cp_next = 0;
        let ground: Ket = [C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)];
        let fail = |t: f64, detail: String| Error::Trajectory { pulse_id, t, detail };
        let store = |psi: &Ket| {
            let n = norm_sqr(psi).sqrt();
            Vector3::new(psi[0] / n, psi[1] / n, psi[2] / n)
        };
        while cp_next < cps.len() && cps[cp_next].1 <= t_start {
            cp_out[cps[cp_next].0] = store(&ground);
            cp_next += 1;
        }

        let rhs = |t: f64, y: &Ket, dy: &mut Ket| {
            *dy = mat_ket(&self.generator(t), y);
        };
        let mut solver = Dopri5::new(rhs, t_start, ground, self.opts);
        let mut record = ClickRecord {
            pulse_id,
            ..Default::default()
        };
        let mut jumps: JumpCounts = [0; 4];
        let mut last_on_channel = [f64::NEG_INFINITY; 4];
        let mut threshold: f64 = rng.random();
        let mut stop_idx = 0;

        while solver.t() < t_end {
            while stops[stop_idx] <= solver.t() {
                stop_idx += 1;
            }
            let t_prev = solver.t();
            solver
                .step(stops[stop_idx])
                .map_err(|e| fail(t_prev, e.to_string()))?;
            let t_now = solver.t();
            let n_now = norm_sqr(solver.y());
            if !n_now.is_finite() {
                return Err(fail(t_now, format!("state norm is {n_now}")));
            }
            if n_now > threshold {
                while cp_next < cps.len() && cps[cp_next].1 <= t_now {
                    cp_out[cps[cp_next].0] = store(solver.y());
                    cp_next += 1;
                }
                continue;
            }
            // the norm crossed the threshold inside the last step
            let (mut lo, mut hi) = (t_prev, t_now);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if norm_sqr(&solver.dense_at(mid)) > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 * hi.abs().max(1.0) {
                    break;
                }
            }
            let t_jump = hi;
            let psi = solver.dense_at(t_jump);
            let candidates: [Ket; 4] = std::array::from_fn(|k| mat_ket(&self.jump_op(k, t_jump), &psi));
            let weights: [f64; 4] = std::array::from_fn(|k| norm_sqr(&candidates[k]));
            let total: f64 = weights.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(fail(t_jump, format!("jump rate is {total}")));
            }
            let mut u = rng.random::<f64>() * total;
            let mut channel = 3;
            for (k, w) in weights.iter().enumerate() {
                if u < *w {
                    channel = k;
                    break;
                }
                u -= w;
            }
            jumps[channel] += 1;
            if channel == 0 {
                let det = match cfg.assignment {
                    _ if cfg.detectors <= 1 => 0,
                    Assignment::RoundRobin => (jumps[0] - 1) % u32::from(cfg.detectors),
                    Assignment::Random => rng.random_range(0..u32::from(cfg.detectors)),
                } as usize;
                if t_jump - last_on_channel[det] >= cfg.dead_time {
                    record.clicks.push(t_jump);
                    record.channels.push(det as u8);
                    last_on_channel[det] = t_jump;
                }
            }
            let n = weights[channel].sqrt();
            let next = candidates[channel].map(|z| z / n);
            solver.reset(t_jump, next);
            threshold = rng.random();
        }
        while cp_next < cps.len() {
            cp_out[cps[cp_next].0] = store(solver.y());
            cp_next += 1;
        }
        Ok(PulseOutcome {
            record,
            jumps,
            checkpoints: cp_out,
        })
    }
}

/// One trajectory's click record.
pub fn simulate_pulse(
    params: &SystemParams,
    pulse: &PulseSpec,
    pulse_id: u32,
    cfg: &TrajectoryConfig,
) -> Result<ClickRecord> {
    cfg.validate()?;
    Ok(Unraveling::new(*params, *pulse, cfg.dt_max)
        .run(pulse_id, cfg, &[])?
        .record)
}

/// `n_pulses` independent trajectories, returned in pulse order.
pub fn simulate_ensemble(
    params: &SystemParams,
    pulse: &PulseSpec,
    cfg: &TrajectoryConfig,
) -> Result<Vec<ClickRecord>> {
    cfg.validate()?;
    params.validate()?;
    pulse.validate()?;
    let model = Unraveling::new(*params, *pulse, cfg.dt_max);
    (0..cfg.n_pulses)
        .into_par_iter()
        .map(|id| model.run(id, cfg, &[]).map(|o| o.record))
        .collect()
}

/// Trajectory average of `|ψ⟩⟨ψ|` at the given times, with the standard error
/// of every matrix element (real and imaginary parts separately).
#[derive(Debug, Clone)]
pub struct EnsembleDensity {
    pub times: Vec<f64>,
    pub mean: Vec<Matrix3<C>>,
    pub stderr: Vec<Matrix3<C>>,
    pub n_trajectories: u32,
}

pub fn ensemble_density(
    params: &SystemParams,
    pulse: &PulseSpec,
    cfg: &TrajectoryConfig,
    times: &[f64],
) -> Result<EnsembleDensity> {
    cfg.validate()?;
    let model = Unraveling::new(*params, *pulse, cfg.dt_max);
    let m = times.len();
    type Acc = (Vec<Matrix3<C>>, Vec<Matrix3<C>>);
    let zero = || -> Acc { (vec![Matrix3::zeros(); m], vec![Matrix3::zeros(); m]) };
    let per_chunk: Vec<Acc> = (0..cfg.n_pulses)
        .collect::<Vec<_>>()
        .par_chunks(1024)
        .map(|ids| {
            let mut acc = zero();
            for &id in ids {
                let out = model.run(id, cfg, times)?;
                for (c, psi) in out.checkpoints.iter().enumerate() {
                    let rho = psi * psi.adjoint();
                    acc.0[c] += rho;
                    acc.1[c] += rho.map(|z| C::new(z.re * z.re, z.im * z.im));
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = zero();
    for acc in per_chunk {
        for c in 0..m {
            total.0[c] += acc.0[c];
            total.1[c] += acc.1[c];
        }
    }
    let n = f64::from(cfg.n_pulses);
    let mean: Vec<Matrix3<C>> = total.0.iter().map(|s| s / C::from(n)).collect();
    let stderr = total
        .1
        .iter()
        .zip(&mean)
        .map(|(sq, mu)| {
            let var = |s: f64, m: f64| ((s / n - m * m).max(0.0) * n / (n - 1.0).max(1.0) / n).sqrt();
            Matrix3::from_fn(|r, c| C::new(var(sq[(r, c)].re, mu[(r, c)].re), var(sq[(r, c)].im, mu[(r, c)].im)))
        })
        .collect();
    Ok(EnsembleDensity {
        times: times.to_vec(),
        mean,
        stderr,
        n_trajectories: cfg.n_pulses,
    })
}
