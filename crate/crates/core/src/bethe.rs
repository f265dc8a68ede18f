//! Exactly solvable chiral emitter: outgoing few-photon wave functions and the
//! correlations of the ideal, lossless model.
//!
//! For an incoming product state `∏ψ(sᵢ)` and `s₁ ≥ … ≥ sₙ`,
//!
//! `ψ_out = ∂α₁…∂αₙ e^{(κ/2)Σ(sᵢ−2αᵢ)} φ(s₁−α₁) ∏_{i≥2}[φ(sᵢ−αᵢ) − φ(sᵢ₋₁+αᵢ₋₁)] |_{α=0}`
//!
//! with `φ(s) = ∫ₛ^∞ ψ(t) e^{−κt/2} dt`. The derivatives are taken exactly
//! with [`Multidual`] numbers.

use num_complex::Complex64;

use crate::dual::Multidual;
use crate::jacobi::{connected_g3, from_jacobi, Jacobi, JacobiMap};
use crate::quadrature::{integrate, integrate_to_infinity};
use crate::{Error, Result};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const SQRT_PI_OVER_2: f64 = 1.253_314_137_315_500_3;
/// Gaussian tails beyond this many widths are dropped.
const GAUSS_TAIL: f64 = 15.0;

/// Single-photon incoming mode.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeFunction {
    /// `ψ = 1` on `[start, end]`; either end may be infinite.
    Flat { start: f64, end: f64 },
    /// `ψ = exp(−(t−center)²/(2τ²))`, unit peak amplitude.
    Gaussian { center: f64, tau: f64 },
    /// Linear interpolation of `values[k]` at `t0 + k·dt`, zero outside.
    Sampled { t0: f64, dt: f64, values: Vec<C> },
}

impl ModeFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModeFunction::Flat { start, end } => {
                if start.is_nan() || end.is_nan() || end <= start {
                    return Err(Error::invalid("mode", format!("flat support [{start}, {end}] is empty")));
                }
            }
            ModeFunction::Gaussian { center, tau } => {
                if !(center.is_finite() && *tau > 0.0 && tau.is_finite()) {
                    return Err(Error::invalid("mode", format!("gaussian needs finite center and τ > 0, got τ = {tau}")));
                }
            }
            ModeFunction::Sampled { t0, dt, values } => {
                if !(t0.is_finite() && *dt > 0.0 && dt.is_finite()) || values.len() < 2 {
                    return Err(Error::invalid("mode", "sampled mode needs dt > 0 and at least two samples"));
                }
            }
        }
        Ok(())
    }

    pub fn psi(&self, t: f64) -> C {
        match self {
            ModeFunction::Flat { start, end } => {
                if t >= *start && t <= *end {
                    C::new(1.0, 0.0)
                } else {
                    ZERO
                }
            }
            ModeFunction::Gaussian { center, tau } => {
                let x = (t - center) / tau;
                C::new((-0.5 * x * x).exp(), 0.0)
            }
            ModeFunction::Sampled { t0, dt, values } => {
                let x = (t - t0) / dt;
                if !(x >= 0.0 && x <= (values.len() - 1) as f64) {
                    return ZERO;
                }
                let k = (x.floor() as usize).min(values.len() - 2);
                let f = x - k as f64;
                values[k] * (1.0 - f) + values[k + 1] * f
            }
        }
    }

    /// Interval outside of which ψ is zero or numerically negligible.
    pub fn effective_support(&self) -> (f64, f64) {
        match self {
            ModeFunction::Flat { start, end } => (*start, *end),
            ModeFunction::Gaussian { center, tau } => (center - GAUSS_TAIL * tau, center + GAUSS_TAIL * tau),
            ModeFunction::Sampled { t0, dt, values } => (*t0, t0 + dt * (values.len() - 1) as f64),
        }
    }

    /// `φ′(s) = −ψ(s) e^{−κs/2}`.
    pub fn phi_derivative(&self, s: f64, kappa: f64) -> C {
        -self.psi(s) * (-0.5 * kappa * s).exp()
    }

    /// `φ(s)`, in closed form for flat and gaussian modes and by quadrature otherwise.
    pub fn phi(&self, s: f64, kappa: f64) -> Result<C> {
        match self {
            ModeFunction::Flat { start, end } => flat_phi(*start, *end, s, kappa),
            ModeFunction::Gaussian { center, tau } => Ok(C::new(gaussian_phi(*center, *tau, s, kappa), 0.0)),
            ModeFunction::Sampled { .. } => phi_integral(self, s, kappa),
        }
    }
}

fn flat_phi(start: f64, end: f64, s: f64, kappa: f64) -> Result<C> {
    if end.is_infinite() && kappa <= 0.0 {
        return Err(Error::Domain(format!(
            "φ of an unbounded flat mode diverges for κ = {kappa}"
        )));
    }
    let lo = s.max(start);
    if lo >= end {
        return Ok(ZERO);
    }
    let v = if kappa == 0.0 {
        end - lo
    } else {
        let tail = if end.is_infinite() { 0.0 } else { (-0.5 * kappa * end).exp() };
        2.0 / kappa * ((-0.5 * kappa * lo).exp() - tail)
    };
    Ok(C::new(v, 0.0))
}

/// Tail integral of a unit-peak gaussian against `e^{−κt/2}`.
pub fn gaussian_phi(center: f64, tau: f64, s: f64, kappa: f64) -> f64 {
    let shift = 0.5 * kappa * tau * tau;
    let prefactor = (-0.5 * kappa * center + 0.125 * kappa * kappa * tau * tau).exp();
    prefactor * tau * SQRT_PI_OVER_2 * libm::erfc((s - center + shift) / (std::f64::consts::SQRT_2 * tau))
}

/// `φ(s) = ∫ₛ^∞ ψ(t) e^{−κt/2} dt` by adaptive quadrature.
pub fn phi_integral(mode: &ModeFunction, s: f64, kappa: f64) -> Result<C> {
    mode.validate()?;
    let f = |t: f64| mode.psi(t) * (-0.5 * kappa * t).exp();
    let (abs_tol, rel_tol) = (1e-13, 1e-13);
    match mode {
        ModeFunction::Flat { start, end } => {
            if end.is_infinite() && kappa <= 0.0 {
                return Err(Error::Domain(format!(
                    "φ of an unbounded flat mode diverges for κ = {kappa}"
                )));
            }
            let lo = s.max(*start);
            if lo >= *end {
                return Ok(ZERO);
            }
            if end.is_infinite() {
                integrate_to_infinity(f, lo, abs_tol, rel_tol)
            } else {
                integrate(f, lo, *end, abs_tol, rel_tol)
            }
        }
        ModeFunction::Gaussian { center, tau } => {
            // the integrand is itself a gaussian, centred at center − κτ²/2
            let peak = center - 0.5 * kappa * tau * tau;
            let (lo, hi) = (s.max(peak - GAUSS_TAIL * tau), peak + GAUSS_TAIL * tau);
            if lo >= hi {
                return Ok(ZERO);
            }
            integrate(f, lo, hi, abs_tol, rel_tol)
        }
        ModeFunction::Sampled { .. } => {
            let (a, b) = mode.effective_support();
            let lo = s.max(a);
            if lo >= b {
                return Ok(ZERO);
            }
            integrate(f, lo, b, abs_tol, rel_tol)
        }
    }
}

fn check_photon_number(n: usize, coords: &[f64]) -> Result<()> {
    if !(1..=3).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    if coords.len() != n {
        return Err(Error::invalid("coords", format!("{n} photons need {n} coordinates, got {}", coords.len())));
    }
    Ok(())
}

fn sorted_descending(coords: &[f64]) -> Vec<f64> {
    let mut s = coords.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Outgoing n-photon amplitude of the generating functional; symmetric in `coords`.
pub fn outgoing_wavefunction(n: usize, mode: &ModeFunction, coords: &[f64], kappa: f64) -> Result<C> {
    check_photon_number(n, coords)?;
    mode.validate()?;
    let s = sorted_descending(coords);
    // φ(s − α) and φ(s + α) to first order in the unit α
    let shifted = |x: f64, unit: usize, sign: f64| -> Result<Multidual> {
        Ok(Multidual::linear(mode.phi(x, kappa)?, unit, mode.phi_derivative(x, kappa) * sign))
    };
    let mut acc = shifted(s[0], 0, -1.0)?;
    for i in 1..n {
        acc = acc * (shifted(s[i], i, -1.0)? - shifted(s[i - 1], i - 1, 1.0)?);
    }
    for i in 0..n {
        acc = acc * Multidual::linear(C::new(1.0, 0.0), i, C::new(-kappa, 0.0));
    }
    let prefactor = (0.5 * kappa * s.iter().sum::<f64>()).exp();
    Ok(acc.mixed_derivative(n) * prefactor)
}

/// Three-photon amplitude deep inside a wide pulse, up to the overall phase
/// `(−1)ⁿ` that [`outgoing_wavefunction`] carries.
pub fn asymptotic_psi3(s1: f64, s2: f64, s3: f64, kappa: f64) -> f64 {
    let s = sorted_descending(&[s1, s2, s3]);
    let e = |d: f64| (-0.5 * kappa * d).exp();
    1.0 + 12.0 * e(s[0] - s[2]) - 4.0 * (e(s[0] - s[1]) + e(s[1] - s[2]))
}

/// Two-photon amplitude deep inside a wide pulse.
pub fn asymptotic_psi2(s1: f64, s2: f64, kappa: f64) -> f64 {
    1.0 - 4.0 * (-0.5 * kappa * (s1 - s2).abs()).exp()
}

/// Three-photon bound-state part `4e^{−κ(s₁−s₃)}` of [`asymptotic_psi3`].
pub fn bound_state_component(s1: f64, s2: f64, s3: f64, kappa: f64) -> f64 {
    let s = sorted_descending(&[s1, s2, s3]);
    4.0 * (-kappa * (s[0] - s[2])).exp()
}

/// Everything in [`asymptotic_psi3`] other than the three-photon bound state.
pub fn scattering_component(s1: f64, s2: f64, s3: f64, kappa: f64) -> f64 {
    asymptotic_psi3(s1, s2, s3, kappa) - bound_state_component(s1, s2, s3, kappa)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Outgoing amplitude from the explicit Green's function of the scattering problem,
/// integrated numerically.
///
/// The Green's function lives in reflected coordinates `x = −s` acting on
/// `ψ_G(x) = ψ(−x)`. Each term of its permutation sum pins some integration
/// variables to outgoing coordinates and leaves the rest free on their own
/// interleaved intervals, so the remaining integral factorizes into
/// one-dimensional quadratures.
pub fn greens_scatter_oracle(
    n: usize,
    mode: &ModeFunction,
    coords: &[f64],
    kappa: f64,
    tol: f64,
) -> Result<C> {
    check_photon_number(n, coords)?;
    mode.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("{tol} must be positive")));
    }
    let (lo, hi) = mode.effective_support();
    if lo.is_infinite() || hi.is_infinite() {
        return Err(Error::Domain("the quadrature needs a mode with finite effective support".into()));
    }
    // outgoing coordinates t₁ ≥ … ≥ tₙ and the lower end of the last interval
    let mut t: Vec<f64> = coords.iter().map(|s| -s).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    let floor = -hi;
    let weight = |x: f64| mode.psi(-x) * (0.5 * kappa * x).exp();

    let mut free = Vec::with_capacity(n);
    for j in 0..n {
        let upper = t[j];
        let lower = if j + 1 < n { t[j + 1] } else { floor.min(upper) };
        let (a, b) = (lower.max(-hi), upper.min(-lo));
        let v = if a < b {
            integrate(weight, a, b, tol * 1e-3, tol * 1e-3)?
        } else {
            ZERO
        };
        free.push(v);
    }
    let pinned: Vec<C> = t.iter().map(|&x| weight(x)).collect();

    let mut total = ZERO;
    for sigma in permutations(n) {
        for choice in 0..(1u32 << n) {
            let mut term = C::new(1.0, 0.0);
            let mut is_pinned = [false; 3];
            let mut valid = true;
            for (i, &si) in sigma.iter().enumerate() {
                if choice & (1 << i) != 0 {
                    // δ(tᵢ − s_σᵢ) needs s_σᵢ's interval to end at tᵢ
                    if si != i && si + 1 != i {
                        valid = false;
                        break;
                    }
                    is_pinned[si] = true;
                    term *= pinned[i];
                } else {
                    // −κ θ(tᵢ − s_σᵢ) is one on the domain exactly when σᵢ ≥ i
                    if si < i {
                        valid = false;
                        break;
                    }
                    term *= -kappa;
                }
            }
            if !valid {
                continue;
            }
            for j in 0..n {
                if !is_pinned[j] {
                    term *= free[j];
                }
            }
            total += term;
        }
    }
    Ok(total * (-0.5 * kappa * t.iter().sum::<f64>()).exp())
}

/// Correlations of the ideal model at fixed center of mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealCorrelations {
    /// Pairs (1,2), (1,3), (2,3).
    pub g2: [f64; 3],
    pub g3: f64,
    pub g3_connected: f64,
}

/// Ideal-model correlations at relative Jacobi coordinates (η, ζ).
pub fn ideal_correlations(eta: f64, zeta: f64, kappa: f64) -> IdealCorrelations {
    let [s1, s2, s3] = from_jacobi(Jacobi { r: 0.0, eta, zeta });
    ideal_correlations_at(s1, s2, s3, kappa)
}

/// Ideal-model correlations at explicit times.
pub fn ideal_correlations_at(s1: f64, s2: f64, s3: f64, kappa: f64) -> IdealCorrelations {
    let g2 = [
        asymptotic_psi2(s1, s2, kappa).powi(2),
        asymptotic_psi2(s1, s3, kappa).powi(2),
        asymptotic_psi2(s2, s3, kappa).powi(2),
    ];
    let g3 = asymptotic_psi3(s1, s2, s3, kappa).powi(2);
    IdealCorrelations {
        g2,
        g3,
        g3_connected: connected_g3(g3, g2),
    }
}

/// (η, ζ) map of the ideal g3 and g3_c on `(2·half_cells + 1)²` cell centers.
pub fn ideal_map(kappa: f64, cell_width: f64, half_cells: i64) -> Result<JacobiMap> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa", format!("{kappa} must be positive")));
    }
    if !(cell_width > 0.0 && cell_width.is_finite()) || half_cells < 0 {
        return Err(Error::invalid("cell_width", "map needs a positive cell width"));
    }
    Ok(JacobiMap::from_fn(cell_width, half_cells, |eta, zeta| {
        let c = ideal_correlations(eta, zeta, kappa);
        (c.g3, c.g3_connected)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wide_flat() -> ModeFunction {
        ModeFunction::Flat { start: -60.0, end: 60.0 }
    }

    #[test]
    fn flat_phi_closed_form() {
        let m = ModeFunction::Flat { start: f64::NEG_INFINITY, end: f64::INFINITY };
        for s in [-2.0f64, 0.0, 1.5] {
            let exact = 2.0 / 0.7 * (-0.35 * s).exp();
            assert!((m.phi(s, 0.7).unwrap().re - exact).abs() < 1e-14);
            assert!((phi_integral(&m, s, 0.7).unwrap().re - exact).abs() < 1e-10);
        }
        assert!(matches!(m.phi(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(phi_integral(&m, 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn narrow_pulse_has_empty_tail() {
        let m = ModeFunction::Sampled { t0: 0.0, dt: 0.01, values: vec![C::new(1.0, 0.0); 3] };
        assert_eq!(phi_integral(&m, 0.5, 1.0).unwrap(), ZERO);
        assert_eq!(m.phi(0.5, 1.0).unwrap(), ZERO);
    }

    #[test]
    fn gaussian_phi_matches_quadrature() {
        for (center, tau, kappa) in [(0.0, 1.0, 1.0), (2.0, 0.5, 3.0), (-1.0, 4.0, 0.5)] {
            let m = ModeFunction::Gaussian { center, tau };
            for s in [-8.0, -1.0, 0.0, 0.7, 3.0] {
                let q = phi_integral(&m, s, kappa).unwrap();
                let exact = gaussian_phi(center, tau, s, kappa);
                assert!((q.re - exact).abs() < 1e-9, "{q} vs {exact}");
                assert!(q.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn one_photon_transmission_is_minus_one() {
        let v = outgoing_wavefunction(1, &wide_flat(), &[0.3], 1.0).unwrap();
        assert!((v - C::new(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn two_photon_closed_form() {
        let kappa = 0.8;
        for (a, b) in [(0.0, 0.0), (1.0, 0.2), (-0.5, 2.0)] {
            let v = outgoing_wavefunction(2, &wide_flat(), &[a, b], kappa).unwrap();
            assert!((v.re - asymptotic_psi2(a, b, kappa)).abs() < 1e-8, "{v}");
        }
        let v = outgoing_wavefunction(2, &wide_flat(), &[0.0, 0.0], kappa).unwrap();
        assert!((v.norm() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn three_photon_closed_form() {
        let kappa = 1.3;
        let v = outgoing_wavefunction(3, &wide_flat(), &[0.1, 0.1, 0.1], kappa).unwrap();
        assert!((v.norm() - 5.0).abs() < 1e-8);
        for c in [[0.0, 1.0, -0.4], [2.0, 0.3, 0.3], [-1.0, 0.5, 3.0]] {
            // each transmitted photon carries the phase −1
            let v = outgoing_wavefunction(3, &wide_flat(), &c, kappa).unwrap();
            assert!((v.re + asymptotic_psi3(c[0], c[1], c[2], kappa)).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn unsupported_photon_numbers() {
        assert!(matches!(outgoing_wavefunction(4, &wide_flat(), &[0.0; 4], 1.0), Err(Error::UnsupportedOrder(4))));
        assert!(matches!(greens_scatter_oracle(0, &wide_flat(), &[], 1.0, 1e-8), Err(Error::UnsupportedOrder(0))));
    }

    #[test]
    fn asymptotic_examples() {
        assert!((asymptotic_psi3(0.0, 0.0, 0.0, 2.0) - 5.0).abs() < 1e-15);
        assert!((asymptotic_psi3(200.0, 100.0, 0.0, 2.0) - 1.0).abs() < 1e-15);
        let kappa = 0.9;
        let d = 2.0 * std::f64::consts::LN_2 / kappa;
        assert!((asymptotic_psi3(d, 0.0, 0.0, kappa) - 1.0).abs() < 1e-14);
        assert!((ideal_correlations_at(d, 0.0, 0.0, kappa).g3_connected + 8.0).abs() < 1e-12);
        assert!((bound_state_component(0.0, 0.0, 0.0, kappa) - 4.0).abs() < 1e-15);
        assert!((scattering_component(0.0, 0.0, 0.0, kappa) - 1.0).abs() < 1e-15);
        let half = std::f64::consts::LN_2 / kappa;
        assert!((bound_state_component(half, 0.3, 0.0, kappa) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bunching_along_pair_line_decays_at_kappa() {
        // along s₂ = s₃ the amplitude relaxes to −3; its squared deviation decays at κ
        let kappa = 1.0;
        let dev = |d: f64| (asymptotic_psi3(d, 0.0, 0.0, kappa) + 3.0).powi(2);
        assert!((-(dev(3.0) / dev(2.0)).ln() - kappa).abs() < 1e-12);
        // the bound state alone would decay at 2κ
        let b = |d: f64| bound_state_component(d, 0.0, 0.0, kappa).powi(2);
        assert!((-(b(3.0) / b(2.0)).ln() - 2.0 * kappa).abs() < 1e-12);
    }

    #[test]
    fn ideal_correlations_at_origin() {
        let c = ideal_correlations(0.0, 0.0, 1.0);
        assert!(c.g2.iter().all(|g| (g - 9.0).abs() < 1e-12));
        assert!((c.g3 - 25.0).abs() < 1e-12);
        assert!(c.g3_connected.abs() < 1e-12);
    }

    #[test]
    fn separated_photon_saturates_at_pair_value() {
        let c = ideal_correlations_at(0.4, 0.0, -300.0, 1.0);
        let pair = asymptotic_psi2(0.4, 0.0, 1.0).powi(2);
        assert!((c.g3 - pair).abs() < 1e-12);
        assert!(c.g3_connected.abs() < 1e-12);
    }

    #[test]
    fn oracle_reproduces_one_photon_transmission() {
        let m = ModeFunction::Gaussian { center: 0.0, tau: 1.5 };
        for s in [-1.0, 0.0, 2.0] {
            let a = greens_scatter_oracle(1, &m, &[s], 1.0, 1e-10).unwrap();
            let b = outgoing_wavefunction(1, &m, &[s], 1.0).unwrap();
            assert!((a - b).norm() < 1e-6 * b.norm().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn oracle_matches_generating_functional() {
        let kappa = 1.0;
        let m = ModeFunction::Gaussian { center: 0.0, tau: 2.0 };
        for c in [[0.3, -0.4, 1.1], [2.0, 2.0, -1.0], [-0.2, 0.5, 0.5]] {
            for n in 2..=3 {
                let a = greens_scatter_oracle(n, &m, &c[..n], kappa, 1e-10).unwrap();
                let b = outgoing_wavefunction(n, &m, &c[..n], kappa).unwrap();
                assert!((a - b).norm() < 1e-6 * b.norm(), "n={n} {c:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn wide_gaussian_approaches_asymptotic_value() {
        let kappa = 1.0;
        let err = |tk: f64| {
            let m = ModeFunction::Gaussian { center: 0.0, tau: tk / kappa };
            (outgoing_wavefunction(3, &m, &[0.0; 3], kappa).unwrap().norm() - 5.0).abs()
        };
        let (e10, e40) = (err(10.0), err(40.0));
        assert!(e10 < 10.0 / 10.0, "{e10}");
        assert!(e40 < e10 / 2.0, "{e40} vs {e10}");
    }

    #[test]
    fn ideal_map_respects_window_and_symmetry() {
        let map = ideal_map(1.0, 0.1, 30).unwrap();
        assert_eq!(map.len(), 61 * 61);
        let origin = map.get(0, 0).unwrap();
        assert!(origin.g3_connected.abs() < 1e-9);
        // ideal model is stationary: full six-fold symmetry, including ζ → −ζ
        assert!(map.asymmetry(|a, b| (-a, b)) < 1e-9);
        assert!(map.asymmetry(|a, b| (a, -b)) < 1e-9);
        assert!(ideal_map(0.0, 0.1, 3).is_err());
    }

    proptest! {
        #[test]
        fn wavefunction_is_bosonic(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64) {
            let m = ModeFunction::Gaussian { center: 0.0, tau: 1.0 };
            let base = outgoing_wavefunction(3, &m, &[a, b, c], 0.8).unwrap();
            for p in [[b, a, c], [c, b, a], [a, c, b], [b, c, a]] {
                prop_assert_eq!(outgoing_wavefunction(3, &m, &p, 0.8).unwrap(), base);
            }
        }
    }
}
