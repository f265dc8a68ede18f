//! Driven Lindblad master equation of the superatom and the transmitted photon rate.
//!
//! The density matrix lives on the ordered basis `[G, W, D]`. Superoperators act
//! on the column-stacked vector `vec(ρ)[3·col + row] = ρ[(row, col)]`, so that
//! `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use nalgebra::{Matrix3, SMatrix};
use num_complex::Complex64;

use crate::ode::{Dopri5, OdeOptions};
use crate::{Error, PulseSpec, Result, SystemParams};

type C = Complex64;
pub type Super = SMatrix<C, 9, 9>;
pub type DensityVec = [C; 9];

pub const G: usize = 0;
pub const W: usize = 1;
pub const D: usize = 2;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// `|a⟩⟨b|` on the three-level basis.
pub fn ket_bra(a: usize, b: usize) -> Matrix3<C> {
    let mut m = Matrix3::zeros();
    m[(a, b)] = ONE;
    m
}

pub fn kron(a: &Matrix3<C>, b: &Matrix3<C>) -> Super {
    let mut out = Super::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[(3 * i + k, 3 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Superoperator of `ρ ↦ AρB`.
pub fn sandwich_super(a: &Matrix3<C>, b: &Matrix3<C>) -> Super {
    kron(&b.transpose(), a)
}

/// Superoperator of `−i[H, ρ]`.
pub fn commutator_super(h: &Matrix3<C>) -> Super {
    let id = Matrix3::identity();
    (sandwich_super(h, &id) - sandwich_super(&id, h)) * C::new(0.0, -1.0)
}

/// Superoperator of the dissipator `D[c]ρ = cρc† − ½{c†c, ρ}`.
pub fn dissipator_super(c: &Matrix3<C>) -> Super {
    let id = Matrix3::identity();
    let cd = c.adjoint();
    let n = cd * c;
    sandwich_super(c, &cd) - (sandwich_super(&n, &id) + sandwich_super(&id, &n)) * C::new(0.5, 0.0)
}

/// Largest entry modulus of a complex matrix.
pub fn max_norm<R: nalgebra::Dim, K: nalgebra::Dim, S: nalgebra::RawStorage<C, R, K>>(
    m: &nalgebra::Matrix<C, R, K, S>,
) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn to_vec(rho: &Matrix3<C>) -> DensityVec {
    let mut v = [ZERO; 9];
    for col in 0..3 {
        for row in 0..3 {
            v[3 * col + row] = rho[(row, col)];
        }
    }
    v
}

pub fn from_vec(v: &DensityVec) -> Matrix3<C> {
    Matrix3::from_fn(|row, col| v[3 * col + row])
}

pub fn vec_trace(v: &DensityVec) -> C {
    v[0] + v[4] + v[8]
}

pub(crate) fn apply(m: &Super, v: &DensityVec) -> DensityVec {
    let mut out = [ZERO; 9];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = ZERO;
        for (j, x) in v.iter().enumerate() {
            acc += m[(i, j)] * x;
        }
        *o = acc;
    }
    out
}

/// Density matrix of the superatom at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperatomState {
    pub rho: Matrix3<C>,
    pub t: f64,
}

impl SuperatomState {
    pub fn ground(t: f64) -> Self {
        SuperatomState {
            rho: ket_bra(G, G),
            t,
        }
    }

    pub fn from_vec(v: &DensityVec, t: f64) -> Self {
        SuperatomState { rho: from_vec(v), t }
    }

    pub fn to_vec(&self) -> DensityVec {
        to_vec(&self.rho)
    }

    pub fn population(&self, level: usize) -> f64 {
        self.rho[(level, level)].re
    }

    /// `⟨X⟩ = Tr(ρX)`.
    pub fn expect(&self, op: &Matrix3<C>) -> C {
        (self.rho * op).trace()
    }

    pub fn trace_error(&self) -> f64 {
        (self.rho.trace() - ONE).norm()
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_norm(&(self.rho - self.rho.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.rho + self.rho.adjoint()) * C::new(0.5, 0.0);
        h.symmetric_eigenvalues().min()
    }
}

/// Time-dependent generator evaluated at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianMatrix(pub Super);

impl LiouvillianMatrix {
    pub fn apply(&self, rho: &Matrix3<C>) -> Matrix3<C> {
        from_vec(&apply(&self.0, &to_vec(rho)))
    }
}

/// The master equation for one parameter set and pulse.
///
/// The generator is split as `L(t) = L_diss + α(t) L_drive`, exact because α is real.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    params: SystemParams,
    pulse: PulseSpec,
    dissipative: Super,
    drive: Super,
    opts: OdeOptions,
}

impl MasterEquation {
    pub fn new(params: SystemParams, pulse: PulseSpec) -> Self {
        let dissipative = dissipator_super(&ket_bra(G, W)) * C::from(params.kappa + params.gamma_r)
            + dissipator_super(&ket_bra(D, W)) * C::from(params.gamma_d)
            + dissipator_super(&ket_bra(G, D)) * C::from(params.gamma_r);
        // H₀ per unit α: √κ (σ_GW + σ_WG)
        let h_unit = (ket_bra(G, W) + ket_bra(W, G)) * C::from(params.kappa.sqrt());
        MasterEquation {
            params,
            pulse,
            dissipative,
            drive: commutator_super(&h_unit),
            opts: OdeOptions::default(),
        }
    }

    /// Keeps the coherent drive but removes every dissipator.
    pub fn without_dissipation(mut self) -> Self {
        self.dissipative = Super::zeros();
        self
    }

    pub fn with_tolerance(mut self, rtol: f64) -> Self {
        self.opts.rtol = rtol;
        self
    }

    pub fn with_options(mut self, opts: OdeOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn pulse(&self) -> &PulseSpec {
        &self.pulse
    }

    pub fn liouvillian(&self, t: f64) -> LiouvillianMatrix {
        LiouvillianMatrix(self.dissipative + self.drive * C::from(self.pulse.amplitude(t)))
    }

    fn rhs(&self, t: f64, v: &DensityVec, dv: &mut DensityVec) {
        let a = self.pulse.amplitude(t);
        for i in 0..9 {
            let mut acc = ZERO;
            for j in 0..9 {
                acc += (self.dissipative[(i, j)] + self.drive[(i, j)] * a) * v[j];
            }
            dv[i] = acc;
        }
    }

    /// Propagates a (not necessarily normalized) density vector from `t0` to `t1`,
    /// restarting the integrator at every envelope knot in between.
    pub fn evolve_vec(&self, v: DensityVec, t0: f64, t1: f64) -> Result<DensityVec> {
        if t1 < t0 {
            return Err(Error::Integration {
                t: t0,
                reason: format!("target time {t1} precedes current time"),
            });
        }
        let mut v = v;
        let mut t = t0;
        let mut stops: Vec<f64> = self
            .pulse
            .knots()
            .into_iter()
            .filter(|&k| k > t0 && k < t1)
            .collect();
        stops.push(t1);
        for stop in stops {
            if stop <= t {
                continue;
            }
            let mut solver = Dopri5::new(|t, y: &DensityVec, dy: &mut DensityVec| self.rhs(t, y, dy), t, v, self.opts);
            solver.advance_to(stop)?;
            v = *solver.y();
            t = stop;
        }
        Ok(v)
    }

    pub fn evolve(&self, state: &SuperatomState, t1: f64) -> Result<SuperatomState> {
        let v = self.evolve_vec(state.to_vec(), state.t, t1)?;
        Ok(SuperatomState::from_vec(&v, t1))
    }

    /// The 9×9 propagator of the master equation over `[t0, t1]`.
    pub fn propagator(&self, t0: f64, t1: f64) -> Result<Super> {
        let mut p = Super::zeros();
        for col in 0..9 {
            let mut e = [ZERO; 9];
            e[col] = ONE;
            let v = self.evolve_vec(e, t0, t1)?;
            for (row, x) in v.iter().enumerate() {
                p[(row, col)] = *x;
            }
        }
        Ok(p)
    }

    /// Transmitted photon rate I(t) for the state at its own time.
    pub fn output_rate(&self, state: &SuperatomState) -> f64 {
        output_rate(state, self.pulse.amplitude(state.t), &self.params)
    }
}

/// Generator of the master equation at time `t`.
pub fn liouvillian_at(t: f64, params: &SystemParams, pulse: &PulseSpec) -> LiouvillianMatrix {
    MasterEquation::new(*params, *pulse).liouvillian(t)
}

/// Solves the master equation from `state.t` to `t1` with relative tolerance `tol`.
pub fn evolve(
    state: &SuperatomState,
    t1: f64,
    params: &SystemParams,
    pulse: &PulseSpec,
    tol: f64,
) -> Result<SuperatomState> {
    MasterEquation::new(*params, *pulse)
        .with_tolerance(tol)
        .evolve(state, t1)
}

/// `⟨E†E⟩` with `E = α − i√κ σ_GW`:
/// `|α|² + 2√κ Im(α* ⟨σ_GW⟩) + κ ⟨σ_WW⟩`.
pub fn output_rate(state: &SuperatomState, alpha: f64, params: &SystemParams) -> f64 {
    let sqrt_k = params.kappa.sqrt();
    // ⟨σ_GW⟩ = Tr(ρ |G⟩⟨W|) = ρ_WG
    let coherence = state.rho[(W, G)];
    alpha * alpha + 2.0 * sqrt_k * (alpha * coherence).im + params.kappa * state.population(W)
}

/// One sample of a transmission trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub input_rate: f64,
    pub output_rate: f64,
}

/// Input and transmitted photon rates on a sorted time grid, from a single forward
/// propagation starting in `|G⟩` at the pulse start.
pub fn transmission_trace(
    params: &SystemParams,
    pulse: &PulseSpec,
    grid: &[f64],
) -> Result<Vec<TracePoint>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("grid", "time grid must be sorted ascending"));
    }
    let me = MasterEquation::new(*params, *pulse);
    let start = grid.first().map_or(pulse.t_start, |&t| t.min(pulse.t_start));
    let mut state = SuperatomState::ground(start);
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        state = me.evolve(&state, t)?;
        out.push(TracePoint {
            t,
            input_rate: pulse.input_rate(t),
            output_rate: me.output_rate(&state),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long_pulse(rate: f64) -> PulseSpec {
        PulseSpec::new(rate, 0.0, 40.0, 0.5).unwrap()
    }

    fn random_hermitian(seed: u64) -> Matrix3<C> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix3::from_fn(|_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        m + m.adjoint()
    }

    #[test]
    fn ground_state_is_stationary_without_drive() {
        let p = SystemParams::FITTED;
        let l = liouvillian_at(-1.0, &p, &PulseSpec::default());
        let out = l.apply(&ket_bra(G, G));
        assert!(max_norm(&out) < 1e-15);
        let s = evolve(&SuperatomState::ground(-5.0), -1.0, &p, &PulseSpec::default(), 1e-8).unwrap();
        assert!(max_norm(&(s.rho - ket_bra(G, G))) < 1e-15);
    }

    #[test]
    fn generator_output_is_traceless_hermitian() {
        let p = SystemParams::FITTED;
        let l = liouvillian_at(3.0, &p, &PulseSpec::default());
        for seed in 0..5 {
            let out = l.apply(&random_hermitian(seed));
            assert!(out.trace().norm() < 1e-13);
            assert!(max_norm(&(out - out.adjoint())) < 1e-13);
        }
    }

    #[test]
    fn dissipation_free_generator_is_commutator() {
        let p = SystemParams::new(0.0, 0.0, 0.0).unwrap();
        let l = liouvillian_at(3.0, &p, &PulseSpec::default());
        assert!(max_norm(&l.0) == 0.0); // κ = 0 also removes the drive coupling
        let p = SystemParams::new(0.7, 0.0, 0.0).unwrap();
        let pulse = PulseSpec::default();
        let me = MasterEquation::new(p, pulse).without_dissipation();
        let h = (ket_bra(G, W) + ket_bra(W, G)) * C::from(0.7f64.sqrt() * pulse.amplitude(3.0));
        let rho = random_hermitian(9);
        let expected = (h * rho - rho * h) * C::new(0.0, -1.0);
        assert!(max_norm(&(me.liouvillian(3.0).apply(&rho) - expected)) < 1e-13);
    }

    #[test]
    fn rabi_oscillation_closed_form() {
        let kappa = 0.55;
        let pulse = long_pulse(6.7);
        let me = MasterEquation::new(SystemParams::new(kappa, 0.0, 0.0).unwrap(), pulse).without_dissipation();
        let (t0, _) = pulse.flat_top();
        let g = kappa.sqrt() * 6.7f64.sqrt();
        let mut s = SuperatomState::ground(t0);
        for k in 1..=40 {
            let t = t0 + 0.25 * k as f64;
            s = me.evolve(&s, t).unwrap();
            let expected = (g * (t - t0)).sin().powi(2);
            assert!((s.population(W) - expected).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn damped_rabi_matches_torrey_solution() {
        let kappa = 0.55;
        let rate = 6.7;
        let pulse = long_pulse(rate);
        let me = MasterEquation::new(SystemParams::new(kappa, 0.0, 0.0).unwrap(), pulse);
        let (t0, _) = pulse.flat_top();
        let omega = 2.0 * kappa.sqrt() * rate.sqrt();
        let gamma = kappa;
        let mu = (omega * omega - gamma * gamma / 16.0).sqrt();
        let amp = omega * omega / (2.0 * omega * omega + gamma * gamma);
        let mut s = SuperatomState::ground(t0);
        for k in 1..=60 {
            let tau = 0.2 * k as f64;
            s = me.evolve(&s, t0 + tau).unwrap();
            let expected = amp
                * (1.0 - (-0.75 * gamma * tau).exp() * ((mu * tau).cos() + 0.75 * gamma / mu * (mu * tau).sin()));
            assert!((s.population(W) - expected).abs() < 1e-6, "tau={tau}");
        }
    }

    #[test]
    fn agrees_with_matrix_exponential_on_flat_top() {
        let pulse = long_pulse(15.2);
        let me = MasterEquation::new(SystemParams::FITTED, pulse);
        let (t0, _) = pulse.flat_top();
        let l = me.liouvillian(t0 + 1.0).0;
        let tau = 2.3;
        let exact = (l * C::from(tau)).exp();
        let p = me.propagator(t0, t0 + tau).unwrap();
        assert!(max_norm(&(p - exact)) < 1e-8);
    }

    #[test]
    fn output_rate_special_states() {
        let p = SystemParams::FITTED;
        let g = SuperatomState::ground(0.0);
        assert!((output_rate(&g, 1.7, &p) - 1.7 * 1.7).abs() < 1e-15);
        let w = SuperatomState { rho: ket_bra(W, W), t: 0.0 };
        assert!((output_rate(&w, 0.0, &p) - p.kappa).abs() < 1e-15);
        let mixed = SuperatomState {
            rho: ket_bra(G, G) * C::from(0.3) + ket_bra(W, W) * C::from(0.5) + ket_bra(D, D) * C::from(0.2),
            t: 0.0,
        };
        assert!((output_rate(&mixed, 2.0, &p) - (4.0 + p.kappa * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn trace_limits() {
        let grid: Vec<f64> = (0..=60).map(|k| 0.1 * k as f64).collect();
        let dark = PulseSpec::default().with_peak_rate(0.0).unwrap();
        for pt in transmission_trace(&SystemParams::FITTED, &dark, &grid).unwrap() {
            assert_eq!(pt.output_rate, 0.0);
        }
        let decoupled = SystemParams::new(0.0, 0.14, 1.49).unwrap();
        for pt in transmission_trace(&decoupled, &PulseSpec::default(), &grid).unwrap() {
            assert!((pt.output_rate - pt.input_rate).abs() < 1e-14);
        }
        assert!(transmission_trace(&decoupled, &PulseSpec::default(), &[1.0, 0.5]).is_err());
    }

    #[test]
    fn halving_tolerance_is_converged() {
        let pulse = PulseSpec::default().with_peak_rate(15.2).unwrap();
        let coarse = MasterEquation::new(SystemParams::FITTED, pulse).with_tolerance(1e-7);
        let fine = MasterEquation::new(SystemParams::FITTED, pulse).with_tolerance(5e-8);
        let mut a = SuperatomState::ground(0.0);
        let mut b = a;
        for k in 1..=12 {
            let t = 0.5 * k as f64;
            a = coarse.evolve(&a, t).unwrap();
            b = fine.evolve(&b, t).unwrap();
            let (ia, ib) = (coarse.output_rate(&a), fine.output_rate(&b));
            assert!((ia - ib).abs() <= 1e-7 * ia.abs().max(1.0), "t={t}: {ia} {ib}");
        }
    }
}
