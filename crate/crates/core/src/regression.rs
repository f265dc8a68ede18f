//! Normally ordered multi-time correlators of the outgoing field by quantum regression.
//!
//! For sorted times `s₁ ≤ … ≤ sₙ`,
//! `G⁽ⁿ⁾ = Tr[𝒮ₙ 𝒫ₙ,ₙ₋₁ … 𝒮₂ 𝒫₂,₁ 𝒮₁ ρ(s₁)]` where `𝒮ᵢ ρ = E(sᵢ) ρ E†(sᵢ)`,
//! `E = α − i√κ σ_GW`, and `𝒫` propagates the master equation.

use log::warn;
use nalgebra::Matrix3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::counting::BinningSpec;
use crate::jacobi::{
    connected_g3, pair_count, pair_index, sort3, triple_count, triple_index, TripleSource,
    TripleValue, UniformAxis,
};
use crate::master::{
    apply, ket_bra, sandwich_super, vec_trace, DensityVec, MasterEquation, Super, SuperatomState, G, W,
};
use crate::{Error, PulseSpec, Result, SystemParams};

type C = Complex64;

/// Emission operator `E = α 𝟙 − i√κ σ_GW`.
pub fn emission_operator(alpha: f64, kappa: f64) -> Matrix3<C> {
    Matrix3::identity() * C::from(alpha) + ket_bra(G, W) * C::new(0.0, -kappa.sqrt())
}

fn emission_super(alpha: f64, kappa: f64) -> Super {
    let e = emission_operator(alpha, kappa);
    sandwich_super(&e, &e.adjoint())
}

/// Unnormalized `E ρ E†`; its trace is the photon rate.
pub fn sandwich_e(state: &SuperatomState, alpha: f64, kappa: f64) -> Matrix3<C> {
    let e = emission_operator(alpha, kappa);
    e * state.rho * e.adjoint()
}

/// Real part of a correlator trace; roundoff-level negatives are clamped to zero.
fn clamp_correlator(value: C) -> f64 {
    let mag = value.norm();
    if mag > 0.0 && value.im.abs() > 1e-8 * mag {
        warn!("correlator has imaginary part {:e} (magnitude {:e})", value.im, mag);
    }
    if value.re < 0.0 && value.re > -1e-10 {
        warn!("clamping correlator {:e} to zero", value.re);
        return 0.0;
    }
    value.re
}

/// Correlator evaluation for one parameter set and pulse.
#[derive(Debug, Clone)]
pub struct Regression {
    me: MasterEquation,
}

impl Regression {
    pub fn new(params: SystemParams, pulse: PulseSpec) -> Self {
        Regression {
            me: MasterEquation::new(params, pulse),
        }
    }

    pub fn with_tolerance(mut self, rtol: f64) -> Self {
        self.me = self.me.with_tolerance(rtol);
        self
    }

    pub fn master(&self) -> &MasterEquation {
        &self.me
    }

    fn insertion(&self, t: f64) -> Super {
        emission_super(self.me.pulse().amplitude(t), self.me.params().kappa)
    }

    /// `G⁽ⁿ⁾(s₁, …, sₙ)` for `n = times.len() ∈ {1, 2, 3}`; the times are sorted first.
    pub fn correlator(&self, times: &[f64]) -> Result<f64> {
        if times.is_empty() || times.len() > 3 {
            return Err(Error::UnsupportedOrder(times.len()));
        }
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let start = sorted[0].min(self.me.pulse().t_start);
        let mut v = SuperatomState::ground(start).to_vec();
        let mut t = start;
        for &s in &sorted {
            v = self.me.evolve_vec(v, t, s)?;
            v = apply(&self.insertion(s), &v);
            t = s;
        }
        Ok(clamp_correlator(vec_trace(&v)))
    }

    /// `g⁽ⁿ⁾ = G⁽ⁿ⁾ / ∏ I(sᵢ)`.
    pub fn normalized(&self, times: &[f64]) -> Result<f64> {
        let numerator = self.correlator(times)?;
        let mut denominator = 1.0;
        for &s in times {
            denominator *= self.correlator(&[s])?;
        }
        if denominator <= 0.0 {
            return Err(Error::Domain(format!(
                "vanishing intensity in the normalization at times {times:?}"
            )));
        }
        Ok(numerator / denominator)
    }
}

fn check_order(n: usize, times: &[f64]) -> Result<()> {
    if !(1..=3).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    if times.len() != n {
        return Err(Error::invalid(
            "times",
            format!("order {n} needs {n} times, got {}", times.len()),
        ));
    }
    Ok(())
}

/// Unnormalized n-time correlator `G⁽ⁿ⁾`.
pub fn correlator_g(n: usize, times: &[f64], params: &SystemParams, pulse: &PulseSpec) -> Result<f64> {
    check_order(n, times)?;
    Regression::new(*params, *pulse).correlator(times)
}

/// Normalized n-time correlation `g⁽ⁿ⁾`.
pub fn normalized_g(n: usize, times: &[f64], params: &SystemParams, pulse: &PulseSpec) -> Result<f64> {
    check_order(n, times)?;
    Regression::new(*params, *pulse).normalized(times)
}

/// I, G2 and G3 on a uniform time grid.
///
/// G2 covers every grid point; G3 covers the sub-grid of every `stride`-th point.
#[derive(Debug, Clone)]
pub struct CorrelationGrid {
    times: Vec<f64>,
    intensity: Vec<f64>,
    g2_raw: Vec<f64>,
    stride: usize,
    g3_len: usize,
    g3_raw: Vec<f64>,
}

impl CorrelationGrid {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Grid index of the `i`-th G3 sub-grid point.
    pub fn g3_grid_index(&self, i: usize) -> usize {
        i * self.stride
    }

    pub fn g3_times(&self) -> Vec<f64> {
        (0..self.g3_len).map(|i| self.times[i * self.stride]).collect()
    }

    /// Number of sorted triples for which G3 was evaluated.
    pub fn triple_evaluations(&self) -> usize {
        self.g3_raw.len()
    }

    pub fn big_g2(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.g2_raw[pair_index(a, b)]
    }

    /// G3 at sub-grid indices in any order.
    pub fn big_g3(&self, i: usize, j: usize, k: usize) -> f64 {
        let (a, b, c) = sort3(i, j, k);
        self.g3_raw[triple_index(a, b, c)]
    }

    pub fn g2(&self, i: usize, j: usize) -> Option<f64> {
        let den = self.intensity[i] * self.intensity[j];
        (den > 0.0).then(|| self.big_g2(i, j) / den)
    }

    pub fn g3(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let (a, b, c) = (self.g3_grid_index(i), self.g3_grid_index(j), self.g3_grid_index(k));
        let den = self.intensity[a] * self.intensity[b] * self.intensity[c];
        (den > 0.0).then(|| self.big_g3(i, j, k) / den)
    }

    pub fn g3_connected(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let (a, b, c) = (self.g3_grid_index(i), self.g3_grid_index(j), self.g3_grid_index(k));
        Some(connected_g3(
            self.g3(i, j, k)?,
            [self.g2(a, b)?, self.g2(a, c)?, self.g2(b, c)?],
        ))
    }
}

impl TripleSource for CorrelationGrid {
    fn axis(&self) -> UniformAxis {
        let dt = if self.times.len() > 1 {
            (self.times[1] - self.times[0]) * self.stride as f64
        } else {
            0.0
        };
        UniformAxis {
            t0: self.times[0],
            dt,
            len: self.g3_len,
        }
    }

    fn value(&self, i: usize, j: usize, k: usize) -> Option<TripleValue> {
        Some(TripleValue {
            g3: self.g3(i, j, k)?,
            g3_connected: self.g3_connected(i, j, k)?,
            g3_var: None,
            g3c_var: None,
        })
    }
}

fn check_uniform(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("time grid".into()));
    }
    if grid.len() > 1 {
        let dt = grid[1] - grid[0];
        if dt <= 0.0 {
            return Err(Error::invalid("grid", "time grid must be strictly ascending"));
        }
        for (k, w) in grid.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::invalid("grid", format!("spacing changes at index {k}")));
            }
        }
    }
    Ok(())
}

/// Fills I, G2 and G3 over a uniform grid.
///
/// Interval propagators are computed once and reused, so every correlator is a
/// chain of cached 9×9 matrix-vector products.
pub fn g3_grid(
    params: &SystemParams,
    pulse: &PulseSpec,
    grid: &[f64],
    stride: usize,
) -> Result<CorrelationGrid> {
    g3_grid_with(&Regression::new(*params, *pulse), grid, stride)
}

pub fn g3_grid_with(reg: &Regression, grid: &[f64], stride: usize) -> Result<CorrelationGrid> {
    check_uniform(grid)?;
    if stride == 0 {
        return Err(Error::invalid("stride", "must be at least 1"));
    }
    let me = reg.master();
    let m = grid.len();
    let steps: Vec<Super> = grid
        .par_windows(2)
        .map(|w| me.propagator(w[0], w[1]))
        .collect::<Result<_>>()?;
    let inserts: Vec<Super> = grid.iter().map(|&t| reg.insertion(t)).collect();

    let start = grid[0].min(me.pulse().t_start);
    let mut states: Vec<DensityVec> = Vec::with_capacity(m);
    states.push(me.evolve_vec(SuperatomState::ground(start).to_vec(), start, grid[0])?);
    for p in &steps {
        let next = apply(p, states.last().expect("nonempty"));
        states.push(next);
    }
    let intensity: Vec<f64> = (0..m)
        .map(|i| clamp_correlator(vec_trace(&apply(&inserts[i], &states[i]))))
        .collect();

    let g2_rows: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut v = apply(&inserts[i], &states[i]);
            let mut row = Vec::with_capacity(m - i);
            for j in i..m {
                if j > i {
                    v = apply(&steps[j - 1], &v);
                }
                row.push((pair_index(i, j), clamp_correlator(vec_trace(&apply(&inserts[j], &v)))));
            }
            row
        })
        .collect();
    let mut g2_raw = vec![0.0; pair_count(m)];
    for (idx, v) in g2_rows.into_iter().flatten() {
        g2_raw[idx] = v;
    }

    let g3_len = (m - 1) / stride + 1;
    let g3_rows: Vec<Vec<(usize, f64)>> = (0..g3_len)
        .into_par_iter()
        .map(|a| {
            let ia = a * stride;
            let mut out = Vec::new();
            let mut v = apply(&inserts[ia], &states[ia]);
            let mut at = ia;
            for b in a..g3_len {
                let ib = b * stride;
                while at < ib {
                    v = apply(&steps[at], &v);
                    at += 1;
                }
                let mut w = apply(&inserts[ib], &v);
                let mut wt = ib;
                for c in b..g3_len {
                    let ic = c * stride;
                    while wt < ic {
                        w = apply(&steps[wt], &w);
                        wt += 1;
                    }
                    let g = clamp_correlator(vec_trace(&apply(&inserts[ic], &w)));
                    out.push((triple_index(a, b, c), g));
                }
            }
            out
        })
        .collect();
    let mut g3_raw = vec![0.0; triple_count(g3_len)];
    for (idx, v) in g3_rows.into_iter().flatten() {
        g3_raw[idx] = v;
    }

    Ok(CorrelationGrid {
        times: grid.to_vec(),
        intensity,
        g2_raw,
        stride,
        g3_len,
        g3_raw,
    })
}

/// Regression correlations averaged over the cells of a time binning, mirroring
/// what a coincidence-counting estimator measures: bin-averaged G divided by the
/// product of bin-averaged intensities.
#[derive(Debug, Clone)]
pub struct BinnedCorrelations {
    bins: BinningSpec,
    intensity: Vec<f64>,
    g2_raw: Vec<f64>,
    g3_raw: Vec<f64>,
}

impl BinnedCorrelations {
    pub fn bins(&self) -> &BinningSpec {
        &self.bins
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn g2(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let den = self.intensity[a] * self.intensity[b];
        (den > 0.0).then(|| self.g2_raw[pair_index(a, b)] / den)
    }

    pub fn g3(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let (a, b, c) = sort3(i, j, k);
        let den = self.intensity[a] * self.intensity[b] * self.intensity[c];
        (den > 0.0).then(|| self.g3_raw[triple_index(a, b, c)] / den)
    }
}

impl TripleSource for BinnedCorrelations {
    fn axis(&self) -> UniformAxis {
        self.bins.center_axis()
    }

    fn value(&self, i: usize, j: usize, k: usize) -> Option<TripleValue> {
        let g3 = self.g3(i, j, k)?;
        Some(TripleValue {
            g3,
            g3_connected: connected_g3(g3, [self.g2(i, j)?, self.g2(i, k)?, self.g2(j, k)?]),
            g3_var: None,
            g3c_var: None,
        })
    }
}

/// Bin-averaged regression correlations from `subsamples` midpoint samples per bin.
pub fn binned_correlations(
    params: &SystemParams,
    pulse: &PulseSpec,
    bins: &BinningSpec,
    subsamples: usize,
) -> Result<BinnedCorrelations> {
    if subsamples == 0 {
        return Err(Error::invalid("subsamples", "must be at least 1"));
    }
    let nb = bins.n_bins();
    let fine_dt = bins.bin_width / subsamples as f64;
    let fine: Vec<f64> = (0..nb * subsamples)
        .map(|m| bins.t_lo + (m as f64 + 0.5) * fine_dt)
        .collect();
    let grid = g3_grid(params, pulse, &fine, 1)?;
    let p = subsamples;
    let norm2 = (p * p) as f64;
    let norm3 = (p * p * p) as f64;

    let intensity: Vec<f64> = (0..nb)
        .map(|b| grid.intensity()[b * p..(b + 1) * p].iter().sum::<f64>() / p as f64)
        .collect();
    let mut g2_raw = vec![0.0; pair_count(nb)];
    for j in 0..nb {
        for i in 0..=j {
            let mut s = 0.0;
            for x in 0..p {
                for y in 0..p {
                    s += grid.big_g2(i * p + x, j * p + y);
                }
            }
            g2_raw[pair_index(i, j)] = s / norm2;
        }
    }
    let mut g3_raw = vec![0.0; triple_count(nb)];
    for k in 0..nb {
        for j in 0..=k {
            for i in 0..=j {
                let mut s = 0.0;
                for x in 0..p {
                    for y in 0..p {
                        for z in 0..p {
                            s += grid.big_g3(i * p + x, j * p + y, k * p + z);
                        }
                    }
                }
                g3_raw[triple_index(i, j, k)] = s / norm3;
            }
        }
    }
    Ok(BinnedCorrelations {
        bins: *bins,
        intensity,
        g2_raw,
        g3_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::{output_rate, D};

    fn paper_pulse(rate: f64) -> PulseSpec {
        PulseSpec::default().with_peak_rate(rate).unwrap()
    }

    #[test]
    fn sandwich_special_states() {
        let g = SuperatomState::ground(0.0);
        let out = sandwich_e(&g, 1.3, 0.55);
        assert!(crate::master::max_norm(&(out - ket_bra(G, G) * C::from(1.69))) < 1e-15);
        let w = SuperatomState { rho: ket_bra(W, W), t: 0.0 };
        let out = sandwich_e(&w, 0.0, 0.55);
        assert!(crate::master::max_norm(&(out - ket_bra(G, G) * C::from(0.55))) < 1e-15);
    }

    #[test]
    fn sandwich_trace_is_output_rate() {
        let params = SystemParams::FITTED;
        let pulse = paper_pulse(6.7);
        let s = crate::master::evolve(&SuperatomState::ground(0.0), 1.7, &params, &pulse, 1e-8).unwrap();
        let alpha = pulse.amplitude(1.7);
        let tr = sandwich_e(&s, alpha, params.kappa).trace();
        assert!((tr.re - output_rate(&s, alpha, &params)).abs() < 1e-13);
        assert!(tr.im.abs() < 1e-13);
        assert!(s.population(D) > 0.0);
    }

    #[test]
    fn first_order_is_output_rate() {
        let params = SystemParams::FITTED;
        let pulse = paper_pulse(6.7);
        let g1 = correlator_g(1, &[2.2], &params, &pulse).unwrap();
        let trace = crate::master::transmission_trace(&params, &pulse, &[2.2]).unwrap();
        assert!((g1 - trace[0].output_rate).abs() < 1e-9);
    }

    #[test]
    fn coherent_limit() {
        let params = SystemParams::new(0.0, 0.14, 1.49).unwrap();
        let pulse = paper_pulse(6.7);
        let times = [0.3, 2.5, 2.5];
        let expected: f64 = times.iter().map(|&t| pulse.input_rate(t)).product();
        assert!((correlator_g(3, &times, &params, &pulse).unwrap() - expected).abs() < 1e-12);
        assert!((normalized_g(3, &times, &params, &pulse).unwrap() - 1.0).abs() < 1e-14);
        assert!((normalized_g(2, &[1.0, 4.0], &params, &pulse).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn order_and_domain_errors() {
        let params = SystemParams::FITTED;
        let pulse = paper_pulse(6.7);
        assert!(matches!(correlator_g(4, &[1.0; 4], &params, &pulse), Err(Error::UnsupportedOrder(4))));
        assert!(correlator_g(2, &[1.0], &params, &pulse).is_err());
        assert!(matches!(normalized_g(1, &[-1.0], &params, &pulse), Err(Error::Domain(_))));
    }

    #[test]
    fn exchange_symmetry() {
        let params = SystemParams::FITTED;
        let pulse = paper_pulse(6.7);
        let a = normalized_g(3, &[2.1, 2.9, 3.4], &params, &pulse).unwrap();
        let b = normalized_g(3, &[3.4, 2.1, 2.9], &params, &pulse).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn factorization_at_large_separation() {
        let params = SystemParams::FITTED;
        let pulse = PulseSpec::new(6.7, 0.0, 12.0, 0.5).unwrap();
        let g2 = normalized_g(2, &[2.0, 7.0], &params, &pulse).unwrap();
        assert!((g2 - 1.0).abs() < 0.02, "{g2}");
        let g3 = normalized_g(3, &[2.0, 5.5, 9.0], &params, &pulse).unwrap();
        assert!((g3 - 1.0).abs() < 0.02, "{g3}");
        // two coincident photons, one far away
        let pair = normalized_g(2, &[3.0, 3.0], &params, &pulse).unwrap();
        let triple = normalized_g(3, &[3.0, 3.0, 9.5], &params, &pulse).unwrap();
        assert!((triple - pair).abs() < 0.02, "{triple} vs {pair}");
    }

    #[test]
    fn grid_matches_direct_evaluation() {
        let params = SystemParams::FITTED;
        let pulse = paper_pulse(6.7);
        let grid: Vec<f64> = (0..21).map(|k| 1.0 + 0.1 * k as f64).collect();
        let cg = g3_grid(&params, &pulse, &grid, 2).unwrap();
        let reg = Regression::new(params, pulse);
        assert!((cg.intensity()[4] - reg.correlator(&[grid[4]]).unwrap()).abs() < 1e-8);
        let direct2 = reg.correlator(&[grid[3], grid[17]]).unwrap();
        assert!((cg.big_g2(3, 17) - direct2).abs() < 1e-8 * direct2, "{} vs {direct2}", cg.big_g2(3, 17));
        // sub-grid indices 1, 4, 9 → grid indices 2, 8, 18
        let direct = reg.correlator(&[grid[2], grid[8], grid[18]]).unwrap();
        assert!((cg.big_g3(9, 1, 4) - direct).abs() < 1e-8 * direct.max(1.0));
        assert_eq!(cg.g3_times().len(), 11);
    }

    #[test]
    fn single_point_grid() {
        let cg = g3_grid(&SystemParams::FITTED, &paper_pulse(6.7), &[3.0], 1).unwrap();
        assert_eq!(cg.intensity().len(), 1);
        assert_eq!(cg.triple_evaluations(), 1);
    }

    #[test]
    fn sixty_point_grid_triple_count() {
        let grid: Vec<f64> = (0..60).map(|k| 0.5 + 0.1 * k as f64).collect();
        let cg = g3_grid(&SystemParams::FITTED, &paper_pulse(6.7), &grid, 1).unwrap();
        assert!(cg.triple_evaluations() <= 60 * 61 * 62 / 6);
    }

    #[test]
    fn coherent_grid_is_exactly_one() {
        let params = SystemParams::new(0.0, 0.14, 1.49).unwrap();
        let grid: Vec<f64> = (0..31).map(|k| 0.1 + 0.19 * k as f64).collect();
        let cg = g3_grid(&params, &paper_pulse(6.7), &grid, 1).unwrap();
        for i in 0..31 {
            for j in i..31 {
                assert!((cg.g2(i, j).unwrap() - 1.0).abs() < 1e-13);
                for k in j..31 {
                    assert!((cg.g3(i, j, k).unwrap() - 1.0).abs() < 1e-13);
                    assert!(cg.g3_connected(i, j, k).unwrap().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn non_uniform_grid_rejected() {
        assert!(g3_grid(&SystemParams::FITTED, &paper_pulse(6.7), &[0.0, 0.1, 0.3], 1).is_err());
        assert!(g3_grid(&SystemParams::FITTED, &paper_pulse(6.7), &[], 1).is_err());
    }

    #[test]
    fn binned_values_approach_point_values_for_one_subsample() {
        let params = SystemParams::FITTED;
        let pulse = paper_pulse(6.7);
        let bins = BinningSpec::new(0.3, 1.5, 3.3).unwrap();
        let binned = binned_correlations(&params, &pulse, &bins, 1).unwrap();
        let reg = Regression::new(params, pulse);
        let t = |b: usize| bins.center(b);
        let direct = reg.normalized(&[t(0), t(2), t(5)]).unwrap();
        assert!((binned.g3(5, 0, 2).unwrap() - direct).abs() < 1e-7);
    }
}
