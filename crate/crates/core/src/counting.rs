//! Coincidence-counting estimators of I, g2, g3 and g3_c from detector click streams.
//!
//! Only clicks within one pulse are combined. For a sorted bin tuple with
//! coincidence count `C`, per-bin click totals `N_b` and `N` pulses,
//! `g⁽ⁿ⁾ = C · ∏ mᵦ! · Nⁿ⁻¹ / ∏ N_b`, where `mᵦ` is how often bin `b` repeats
//! in the tuple. Errors are grouped delete-one jackknife errors over blocks of pulses.

use rayon::prelude::*;

use crate::jacobi::{
    average_over_r, connected_g3, pair_count, pair_index, sort3, triple_count, triple_index,
    JacobiMap, MapCell, RWindow, TripleSource, TripleValue, UniformAxis,
};
use crate::trajectory::ClickRecord;
use crate::{Error, Result};

/// Uniform time bins `[t_lo + b·w, t_lo + (b+1)·w)`; the last bin also holds `t_hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningSpec {
    pub bin_width: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl BinningSpec {
    /// The window must hold a whole number of bins.
    pub fn new(bin_width: f64, t_lo: f64, t_hi: f64) -> Result<Self> {
        let spec = BinningSpec { bin_width, t_lo, t_hi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::invalid("bin_width", format!("{} must be positive", self.bin_width)));
        }
        if !(self.t_lo.is_finite() && self.t_hi.is_finite() && self.t_hi > self.t_lo) {
            return Err(Error::invalid(
                "window",
                format!("[{}, {}] is empty", self.t_lo, self.t_hi),
            ));
        }
        let n = (self.t_hi - self.t_lo) / self.bin_width;
        if (n - n.round()).abs() > 1e-6 {
            return Err(Error::invalid(
                "bin_width",
                format!("window length is {n} bins, not a whole number"),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        ((self.t_hi - self.t_lo) / self.bin_width).round() as usize
    }

    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if !(t >= self.t_lo && t <= self.t_hi) {
            return None;
        }
        let b = ((t - self.t_lo) / self.bin_width).floor() as usize;
        Some(b.min(self.n_bins() - 1))
    }

    pub fn center(&self, b: usize) -> f64 {
        self.t_lo + (b as f64 + 0.5) * self.bin_width
    }

    pub fn center_axis(&self) -> UniformAxis {
        UniformAxis {
            t0: self.center(0),
            dt: self.bin_width,
            len: self.n_bins(),
        }
    }
}

/// Per-bin click rate with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RateHistogram {
    pub bins: BinningSpec,
    pub n_pulses: u64,
    pub counts: Vec<u64>,
    pub rate: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Click rate per bin; errors use the per-pulse sample variance of the bin counts.
pub fn rate_histogram(records: &[ClickRecord], bins: &BinningSpec) -> Result<RateHistogram> {
    bins.validate()?;
    if records.is_empty() {
        return Err(Error::Empty("no pulse records".into()));
    }
    let nb = bins.n_bins();
    let mut counts = vec![0u64; nb];
    let mut squares = vec![0u64; nb];
    let mut pulse = vec![0u64; nb];
    for r in records {
        pulse.iter_mut().for_each(|c| *c = 0);
        for &t in &r.clicks {
            if let Some(b) = bins.bin_of(t) {
                pulse[b] += 1;
            }
        }
        for b in 0..nb {
            counts[b] += pulse[b];
            squares[b] += pulse[b] * pulse[b];
        }
    }
    let n = records.len() as u64;
    let nf = n as f64;
    let scale = 1.0 / (nf * bins.bin_width);
    let stderr = counts
        .iter()
        .zip(&squares)
        .map(|(&c, &q)| {
            if n < 2 {
                return (c as f64).sqrt() * scale;
            }
            let mean = c as f64 / nf;
            let var = ((q as f64 - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt() / bins.bin_width
        })
        .collect();
    Ok(RateHistogram {
        bins: *bins,
        n_pulses: n,
        rate: counts.iter().map(|&c| c as f64 * scale).collect(),
        stderr,
        counts,
    })
}

/// Within-pulse coincidence counts over sorted bin tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub order: usize,
    pub bins: BinningSpec,
    pub n_pulses: u64,
    counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn empty(order: usize, bins: BinningSpec) -> Result<Self> {
        let n = bins.n_bins();
        let len = match order {
            2 => pair_count(n),
            3 => triple_count(n),
            _ => return Err(Error::UnsupportedOrder(order)),
        };
        Ok(CoincidenceHistogram {
            order,
            bins,
            n_pulses: 0,
            counts: vec![0; len],
        })
    }

    /// Count for bins in any order (`k` is ignored for order 2).
    pub fn count(&self, i: usize, j: usize, k: usize) -> u64 {
        self.counts[self.slot(i, j, k)]
    }

    fn slot(&self, i: usize, j: usize, k: usize) -> usize {
        if self.order == 2 {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            pair_index(a, b)
        } else {
            let (a, b, c) = sort3(i, j, k);
            triple_index(a, b, c)
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another histogram over the same bins and order.
    pub fn merge(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if self.order != other.order || self.bins != other.bins {
            return Err(Error::Inconsistent(
                "histograms with different order or binning cannot be merged".into(),
            ));
        }
        self.n_pulses += other.n_pulses;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
        Ok(())
    }

    /// Accumulates all unordered within-pulse tuples of one pulse.
    pub fn add_pulse(&mut self, clicks: &[f64]) {
        self.n_pulses += 1;
        let mut occupied: Vec<(usize, u64)> = Vec::new();
        let mut sorted: Vec<usize> = clicks.iter().filter_map(|&t| self.bins.bin_of(t)).collect();
        sorted.sort_unstable();
        for b in sorted {
            match occupied.last_mut() {
                Some((last, n)) if *last == b => *n += 1,
                _ => occupied.push((b, 1)),
            }
        }
        let m = occupied.len();
        if self.order == 2 {
            for y in 0..m {
                let (by, ny) = occupied[y];
                self.counts[pair_index(by, by)] += ny * (ny.saturating_sub(1)) / 2;
                for &(bx, nx) in &occupied[..y] {
                    self.counts[pair_index(bx, by)] += nx * ny;
                }
            }
            return;
        }
        for z in 0..m {
            let (bz, nz) = occupied[z];
            let pairs_z = nz * nz.saturating_sub(1) / 2;
            self.counts[triple_index(bz, bz, bz)] += pairs_z * nz.saturating_sub(2) / 3;
            for y in 0..z {
                let (by, ny) = occupied[y];
                self.counts[triple_index(by, by, bz)] += ny * ny.saturating_sub(1) / 2 * nz;
                self.counts[triple_index(by, bz, bz)] += ny * pairs_z;
                for &(bx, nx) in &occupied[..y] {
                    self.counts[triple_index(bx, by, bz)] += nx * ny * nz;
                }
            }
        }
    }
}

/// Coincidence histogram of all pulses, accumulated in parallel and merged associatively.
pub fn coincidence_histogram(
    records: &[ClickRecord],
    bins: &BinningSpec,
    order: usize,
) -> Result<CoincidenceHistogram> {
    bins.validate()?;
    let empty = CoincidenceHistogram::empty(order, *bins)?;
    let parts: Vec<CoincidenceHistogram> = records
        .par_chunks(4096)
        .map(|chunk| {
            let mut h = empty.clone();
            for r in chunk {
                h.add_pulse(&r.clicks);
            }
            h
        })
        .collect();
    let mut total = empty;
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

/// Number of delete-one groups of contiguous pulses behind [`TripleEstimate`] errors.
pub const JACKKNIFE_GROUPS: usize = 50;

/// An estimated correlation value with its standard error and raw count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub count: u64,
}

/// Normalized g2 or g3 estimates per sorted bin tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEstimate {
    pub order: usize,
    pub bins: BinningSpec,
    values: Vec<Option<Estimate>>,
}

impl CorrelationEstimate {
    /// `None` where a bin in the tuple recorded no clicks.
    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<Estimate> {
        self.values[slot(self.order, i, j, k)]
    }

    pub fn g2(&self, i: usize, j: usize) -> Option<Estimate> {
        debug_assert_eq!(self.order, 2);
        self.get(i, j, 0)
    }

    pub fn g3(&self, i: usize, j: usize, k: usize) -> Option<Estimate> {
        debug_assert_eq!(self.order, 3);
        self.get(i, j, k)
    }
}

fn slot(order: usize, i: usize, j: usize, k: usize) -> usize {
    if order == 2 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        pair_index(a, b)
    } else {
        let (a, b, c) = sort3(i, j, k);
        triple_index(a, b, c)
    }
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// `(value, count, one-count value)` per sorted tuple; `None` where a bin has no clicks.
type Normalized = Vec<Option<(f64, u64, f64)>>;

fn normalize(order: usize, n_pulses: u64, clicks: &[u64], counts: &[u64]) -> Result<Normalized> {
    let nb = clicks.len();
    let n = n_pulses as f64;
    let mut out = vec![None; counts.len()];
    let mut eval = |tuple: &[usize]| -> Result<()> {
        let slot = slot(order, tuple[0], tuple[1], tuple.get(2).copied().unwrap_or(0));
        let count = counts[slot];
        let mut groups: Vec<(usize, u32)> = Vec::with_capacity(3);
        for &b in tuple {
            match groups.last_mut() {
                Some((last, m)) if *last == b => *m += 1,
                _ => groups.push((b, 1)),
            }
        }
        if groups.iter().any(|&(b, _)| clicks[b] == 0) {
            if count > 0 {
                return Err(Error::Inconsistent(format!(
                    "{count} coincidences in bins {tuple:?} with a click-free bin"
                )));
            }
            return Ok(());
        }
        let mut scale = n.powi(order as i32 - 1);
        for &(b, m) in &groups {
            scale *= factorial(m) / (clicks[b] as f64).powi(m as i32);
        }
        out[slot] = Some((count as f64 * scale, count, scale));
        Ok(())
    };
    for k in 0..nb {
        for j in 0..=k {
            if order == 2 {
                eval(&[j, k])?;
            } else {
                for i in 0..=j {
                    eval(&[i, j, k])?;
                }
            }
        }
    }
    Ok(out)
}

/// g⁽ⁿ⁾ per sorted bin tuple with the Poisson error `g/√C` of the coincidence count
/// alone (one count when `C = 0`); fluctuations of the normalization are not included.
pub fn normalized_correlation(
    hist: &CoincidenceHistogram,
    rates: &RateHistogram,
) -> Result<CorrelationEstimate> {
    if hist.bins != rates.bins || hist.n_pulses != rates.n_pulses {
        return Err(Error::Inconsistent(format!(
            "coincidences over {} pulses do not match rates over {} pulses with the same bins",
            hist.n_pulses, rates.n_pulses
        )));
    }
    let values = normalize(hist.order, hist.n_pulses, &rates.counts, &hist.counts)?
        .into_iter()
        .map(|v| {
            v.map(|(value, count, scale)| Estimate {
                value,
                stderr: scale * (count as f64).max(1.0).sqrt(),
                count,
            })
        })
        .collect();
    Ok(CorrelationEstimate {
        order: hist.order,
        bins: hist.bins,
        values,
    })
}

/// Click totals and coincidence histograms of a set of pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSummary {
    pub bins: BinningSpec,
    pub n_pulses: u64,
    pub clicks: Vec<u64>,
    pub pairs: CoincidenceHistogram,
    pub triples: CoincidenceHistogram,
}

impl CountSummary {
    pub fn empty(bins: BinningSpec) -> Result<Self> {
        bins.validate()?;
        Ok(CountSummary {
            bins,
            n_pulses: 0,
            clicks: vec![0; bins.n_bins()],
            pairs: CoincidenceHistogram::empty(2, bins)?,
            triples: CoincidenceHistogram::empty(3, bins)?,
        })
    }

    pub fn add_pulse(&mut self, clicks: &[f64]) {
        self.n_pulses += 1;
        for &t in clicks {
            if let Some(b) = self.bins.bin_of(t) {
                self.clicks[b] += 1;
            }
        }
        self.pairs.add_pulse(clicks);
        self.triples.add_pulse(clicks);
    }

    pub fn from_records(records: &[ClickRecord], bins: &BinningSpec) -> Result<Self> {
        let empty = CountSummary::empty(*bins)?;
        let parts: Vec<CountSummary> = records
            .par_chunks(4096)
            .map(|chunk| {
                let mut s = empty.clone();
                for r in chunk {
                    s.add_pulse(&r.clicks);
                }
                s
            })
            .collect();
        let mut total = empty;
        for p in &parts {
            total.merge(p)?;
        }
        Ok(total)
    }

    pub fn merge(&mut self, other: &CountSummary) -> Result<()> {
        if self.bins != other.bins {
            return Err(Error::Inconsistent("summaries over different binnings".into()));
        }
        self.n_pulses += other.n_pulses;
        for (a, b) in self.clicks.iter_mut().zip(&other.clicks) {
            *a += *b;
        }
        self.pairs.merge(&other.pairs)?;
        self.triples.merge(&other.triples)
    }

    /// Counts of these pulses without the subset `part`.
    fn without(&self, part: &CountSummary) -> CountSummary {
        let sub = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let hist = |a: &CoincidenceHistogram, b: &CoincidenceHistogram| CoincidenceHistogram {
            n_pulses: a.n_pulses - b.n_pulses,
            counts: sub(&a.counts, &b.counts),
            ..a.clone()
        };
        CountSummary {
            bins: self.bins,
            n_pulses: self.n_pulses - part.n_pulses,
            clicks: sub(&self.clicks, &part.clicks),
            pairs: hist(&self.pairs, &part.pairs),
            triples: hist(&self.triples, &part.triples),
        }
    }
}

/// Delete-one jackknife standard error over the replicates that are defined.
fn jackknife(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return None;
    }
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    Some(((k - 1.0) / k * v.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt())
}

#[derive(Debug, Clone)]
struct Replicate {
    g2: Vec<Option<f64>>,
    g3: Vec<Option<f64>>,
}

/// g2 and g3 estimates over one binning, usable as a three-time source.
///
/// Errors come from a grouped delete-one jackknife over [`JACKKNIFE_GROUPS`]
/// contiguous blocks of pulses, so they include normalization fluctuations and
/// non-Poissonian statistics. Tuples without coincidences get the one-count error.
#[derive(Debug, Clone)]
pub struct TripleEstimate {
    pub rates: RateHistogram,
    pub g2: CorrelationEstimate,
    pub g3: CorrelationEstimate,
    replicates: Vec<Replicate>,
}

impl TripleEstimate {
    pub fn from_records(records: &[ClickRecord], bins: &BinningSpec) -> Result<Self> {
        let rates = rate_histogram(records, bins)?;
        let n = records.len();
        let k = JACKKNIFE_GROUPS.min(n);
        let groups: Vec<CountSummary> = (0..k)
            .into_par_iter()
            .map(|g| CountSummary::from_records(&records[g * n / k..(g + 1) * n / k], bins))
            .collect::<Result<_>>()?;
        let mut total = CountSummary::empty(*bins)?;
        for g in &groups {
            total.merge(g)?;
        }
        let full2 = normalize(2, total.n_pulses, &total.clicks, &total.pairs.counts)?;
        let full3 = normalize(3, total.n_pulses, &total.clicks, &total.triples.counts)?;
        let replicates: Vec<Replicate> = if k < 2 {
            Vec::new()
        } else {
            groups
                .par_iter()
                .map(|g| {
                    let rest = total.without(g);
                    let values = |order, counts: &[u64]| -> Result<Vec<Option<f64>>> {
                        Ok(normalize(order, rest.n_pulses, &rest.clicks, counts)?
                            .into_iter()
                            .map(|v| v.map(|x| x.0))
                            .collect())
                    };
                    Ok(Replicate {
                        g2: values(2, &rest.pairs.counts)?,
                        g3: values(3, &rest.triples.counts)?,
                    })
                })
                .collect::<Result<_>>()?
        };
        let with_errors = |order: usize, full: Normalized| -> CorrelationEstimate {
            let values = full
                .into_iter()
                .enumerate()
                .map(|(s, v)| {
                    v.map(|(value, count, scale)| {
                        let jk = jackknife(replicates.iter().filter_map(|r| {
                            if order == 2 { r.g2[s] } else { r.g3[s] }
                        }));
                        let stderr = match jk {
                            Some(e) if count > 0 => e,
                            _ => scale * (count as f64).max(1.0).sqrt(),
                        };
                        Estimate { value, stderr, count }
                    })
                })
                .collect();
            CorrelationEstimate { order, bins: *bins, values }
        };
        let g2 = with_errors(2, full2);
        let g3 = with_errors(3, full3);
        Ok(TripleEstimate {
            rates,
            g2,
            g3,
            replicates,
        })
    }

    fn replicate_value(&self, r: usize, i: usize, j: usize, k: usize) -> Option<(f64, f64)> {
        let rep = &self.replicates[r];
        let g3 = rep.g3[slot(3, i, j, k)]?;
        let pair = |a, b| rep.g2[slot(2, a, b, 0)];
        Some((g3, connected_g3(g3, [pair(i, j)?, pair(i, k)?, pair(j, k)?])))
    }

    /// R-averaged (η, ζ) map whose cell errors are jackknifed over whole replicate maps,
    /// which keeps the correlations between the triples sharing a cell.
    pub fn jacobi_map(&self, window: RWindow, cell_width: f64) -> Result<MapEstimate> {
        let mut map = average_over_r(self, window, cell_width)?;
        let replicates: Vec<JacobiMap> = (0..self.replicates.len())
            .into_par_iter()
            .map(|r| average_over_r(&ReplicateSource { est: self, r }, window, cell_width))
            .collect::<Result<_>>()?;
        if replicates.len() >= 2 {
            let keys: Vec<(i64, i64)> = map.iter().map(|(key, _)| key).collect();
            for key in keys {
                let mut cell = *map.get(key.0, key.1).expect("key from this map");
                let cells: Vec<&MapCell> = replicates.iter().filter_map(|m| m.get(key.0, key.1)).collect();
                let jk3 = jackknife(cells.iter().map(|c| c.g3));
                let jkc = jackknife(cells.iter().map(|c| c.g3_connected));
                if let Some(e) = jk3.filter(|&e| e > 0.0) {
                    cell.g3_stderr = Some(e);
                }
                if let Some(e) = jkc.filter(|&e| e > 0.0) {
                    cell.g3c_stderr = Some(e);
                }
                map.insert(key, cell);
            }
        }
        Ok(MapEstimate { map, replicates })
    }
}

impl TripleSource for TripleEstimate {
    fn axis(&self) -> UniformAxis {
        self.rates.bins.center_axis()
    }

    fn value(&self, i: usize, j: usize, k: usize) -> Option<TripleValue> {
        let g3 = self.g3.g3(i, j, k)?;
        let pairs = [self.g2.g2(i, j)?, self.g2.g2(i, k)?, self.g2.g2(j, k)?];
        let g3_connected = connected_g3(g3.value, pairs.map(|p| p.value));
        let rep = (0..self.replicates.len()).filter_map(|r| self.replicate_value(r, i, j, k));
        let g3c_err = match jackknife(rep.map(|v| v.1)) {
            Some(e) if g3.count > 0 => e,
            _ => g3.stderr,
        };
        Some(TripleValue {
            g3: g3.value,
            g3_connected,
            g3_var: Some(g3.stderr * g3.stderr),
            g3c_var: Some(g3c_err * g3c_err),
        })
    }
}

struct ReplicateSource<'a> {
    est: &'a TripleEstimate,
    r: usize,
}

impl TripleSource for ReplicateSource<'_> {
    fn axis(&self) -> UniformAxis {
        self.est.axis()
    }

    fn value(&self, i: usize, j: usize, k: usize) -> Option<TripleValue> {
        let (g3, g3_connected) = self.est.replicate_value(self.r, i, j, k)?;
        Some(TripleValue {
            g3,
            g3_connected,
            g3_var: None,
            g3c_var: None,
        })
    }
}

/// An estimated map together with its delete-one replicate maps.
#[derive(Debug, Clone)]
pub struct MapEstimate {
    pub map: JacobiMap,
    pub replicates: Vec<JacobiMap>,
}

impl MapEstimate {
    /// Jackknife mean and error of any scalar summary of the map.
    pub fn summary(&self, f: impl Fn(&JacobiMap) -> f64) -> (f64, Option<f64>) {
        (f(&self.map), jackknife(self.replicates.iter().map(f)))
    }
}

/// Estimated g3 and g3_c projected onto (η, ζ) cells and averaged over the R window.
pub fn g3c_jacobi_estimate(
    records: &[ClickRecord],
    bins: &BinningSpec,
    window: RWindow,
    cell_width: f64,
) -> Result<JacobiMap> {
    Ok(TripleEstimate::from_records(records, bins)?.jacobi_map(window, cell_width)?.map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: u32, clicks: &[f64]) -> ClickRecord {
        ClickRecord {
            pulse_id: id,
            clicks: clicks.to_vec(),
            channels: vec![0; clicks.len()],
        }
    }

    /// Poisson clicks at a constant rate, sampled by exponential gaps.
    fn poisson_stream(n: u32, rate: f64, t_end: f64, seed: u64) -> Vec<ClickRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|id| {
                let mut t = 0.0;
                let mut clicks = Vec::new();
                loop {
                    let u: f64 = rng.random();
                    t -= (1.0 - u).ln() / rate;
                    if t > t_end {
                        break;
                    }
                    clicks.push(t);
                }
                rec(id, &clicks)
            })
            .collect()
    }

    #[test]
    fn binning_rules() {
        let b = BinningSpec::new(0.3, 0.0, 6.0).unwrap();
        assert_eq!(b.n_bins(), 20);
        assert_eq!(b.bin_of(0.0), Some(0));
        assert_eq!(b.bin_of(0.3), Some(1));
        assert_eq!(b.bin_of(6.0), Some(19));
        assert_eq!(b.bin_of(6.01), None);
        assert_eq!(b.bin_of(-0.01), None);
        assert!(BinningSpec::new(0.7, 0.0, 6.0).is_err());
        assert!(BinningSpec::new(0.0, 0.0, 6.0).is_err());
        assert!(BinningSpec::new(0.1, 2.0, 2.0).is_err());
    }

    #[test]
    fn empty_records_rejected() {
        let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
        assert!(matches!(rate_histogram(&[], &b), Err(Error::Empty(_))));
    }

    #[test]
    fn rate_error_is_sample_variance() {
        let b = BinningSpec::new(0.5, 0.0, 1.0).unwrap();
        let h = rate_histogram(&[rec(0, &[]), rec(1, &[0.1, 0.2])], &b).unwrap();
        assert_eq!(h.counts, vec![2, 0]);
        assert!((h.rate[0] - 2.0).abs() < 1e-15);
        // counts 0 and 2: sample variance 2, error of the mean 1, per 0.5 µs
        assert!((h.stderr[0] - 2.0).abs() < 1e-15);
        assert_eq!(h.stderr[1], 0.0);
    }

    #[test]
    fn no_clicks_gives_zero_rates() {
        let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
        let h = rate_histogram(&[rec(0, &[]), rec(1, &[])], &b).unwrap();
        assert!(h.rate.iter().all(|&r| r == 0.0));
        assert!(h.stderr.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn single_pulse_single_triple() {
        let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
        let h = coincidence_histogram(&[rec(0, &[1.0, 2.0, 3.0])], &b, 3).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.count(6, 2, 4), 1);
        let h2 = coincidence_histogram(&[rec(0, &[1.0, 2.0, 3.0])], &b, 2).unwrap();
        assert_eq!(h2.total(), 3);
    }

    #[test]
    fn too_few_clicks_contribute_nothing() {
        let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
        let h = coincidence_histogram(&[rec(0, &[1.0, 1.1]), rec(1, &[4.0])], &b, 3).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!(h.n_pulses, 2);
    }

    #[test]
    fn unsupported_order() {
        let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
        assert!(matches!(coincidence_histogram(&[], &b, 4), Err(Error::UnsupportedOrder(4))));
    }

    #[test]
    fn zero_rate_with_coincidences_is_inconsistent() {
        let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
        let recs = [rec(0, &[1.0, 2.0])];
        let hist = coincidence_histogram(&recs, &b, 2).unwrap();
        let mut rates = rate_histogram(&recs, &b).unwrap();
        rates.counts[2] = 0;
        assert!(matches!(normalized_correlation(&hist, &rates), Err(Error::Inconsistent(_))));
    }

    fn brute_force(clicks: &[f64], b: &BinningSpec, h: &mut CoincidenceHistogram) {
        h.n_pulses += 1;
        let idx: Vec<usize> = clicks.iter().filter_map(|&t| b.bin_of(t)).collect();
        for x in 0..idx.len() {
            for y in x + 1..idx.len() {
                if h.order == 2 {
                    let s = h.slot(idx[x], idx[y], 0);
                    h.counts[s] += 1;
                    continue;
                }
                for z in y + 1..idx.len() {
                    let s = h.slot(idx[x], idx[y], idx[z]);
                    h.counts[s] += 1;
                }
            }
        }
    }

    proptest! {
        #[test]
        fn occupancy_counting_matches_brute_force(
            clicks in proptest::collection::vec(-0.5..6.5f64, 0..25),
            order in 2usize..=3,
        ) {
            let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
            let mut fast = CoincidenceHistogram::empty(order, b).unwrap();
            fast.add_pulse(&clicks);
            let mut slow = CoincidenceHistogram::empty(order, b).unwrap();
            brute_force(&clicks, &b, &mut slow);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn merge_is_order_independent(
            pulses in proptest::collection::vec(proptest::collection::vec(0.0..6.0f64, 0..10), 1..12),
        ) {
            let b = BinningSpec::new(0.5, 0.0, 6.0).unwrap();
            let recs: Vec<ClickRecord> = pulses.iter().enumerate().map(|(i, c)| rec(i as u32, c)).collect();
            let all = coincidence_histogram(&recs, &b, 3).unwrap();
            let (left, right) = recs.split_at(recs.len() / 2);
            let mut a = coincidence_histogram(right, &b, 3).unwrap();
            a.merge(&coincidence_histogram(left, &b, 3).unwrap()).unwrap();
            prop_assert_eq!(a, all);
        }
    }

    #[test]
    fn poisson_stream_recovers_rate_and_unit_correlations() {
        let rate = 2.0;
        let recs = poisson_stream(40_000, rate, 3.0, 77);
        let b = BinningSpec::new(0.5, 0.0, 3.0).unwrap();
        let rates = rate_histogram(&recs, &b).unwrap();
        for (r, e) in rates.rate.iter().zip(&rates.stderr) {
            assert!((r - rate).abs() < 3.5 * e, "{r} ± {e}");
        }
        let est = TripleEstimate::from_records(&recs, &b).unwrap();
        let n = b.n_bins();
        let mut outliers = 0;
        let mut total = 0;
        for k in 0..n {
            for j in 0..=k {
                let e = est.g2.g2(j, k).unwrap();
                total += 1;
                outliers += usize::from((e.value - 1.0).abs() > 3.0 * e.stderr);
                for i in 0..=j {
                    let e = est.g3.g3(i, j, k).unwrap();
                    total += 1;
                    outliers += usize::from((e.value - 1.0).abs() > 3.0 * e.stderr);
                    let v = est.value(i, j, k).unwrap();
                    total += 1;
                    outliers += usize::from(v.g3_connected.abs() > 3.0 * v.g3c_var.unwrap().sqrt());
                }
            }
        }
        assert!(outliers <= total / 50 + 1, "{outliers} of {total}");
    }

    #[test]
    fn diagonal_multiplicity_convention() {
        // all clicks in one bin: expected C(k,3) per pulse equals (λ³/6) for Poisson λ
        let recs = poisson_stream(60_000, 4.0, 0.5, 5);
        let b = BinningSpec::new(0.5, 0.0, 0.5).unwrap();
        let est = TripleEstimate::from_records(&recs, &b).unwrap();
        let g = est.g3.g3(0, 0, 0).unwrap();
        assert!((g.value - 1.0).abs() < 3.0 * g.stderr, "{g:?}");
        assert!(g.stderr < 0.03);
    }

    #[test]
    fn errors_shrink_with_ensemble_size() {
        let b = BinningSpec::new(0.5, 0.0, 3.0).unwrap();
        let small = TripleEstimate::from_records(&poisson_stream(5_000, 2.0, 3.0, 1), &b).unwrap();
        let large = TripleEstimate::from_records(&poisson_stream(20_000, 2.0, 3.0, 2), &b).unwrap();
        // single jackknife errors scatter by ~10%, so compare means over all triples
        let mean_err = |e: &TripleEstimate| {
            let n = b.n_bins();
            let mut sum = 0.0;
            let mut count = 0.0;
            for k in 0..n {
                for j in 0..=k {
                    for i in 0..=j {
                        sum += e.g3.g3(i, j, k).unwrap().stderr;
                        count += 1.0;
                    }
                }
            }
            sum / count
        };
        let ratio = mean_err(&small) / mean_err(&large);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn coherent_map_has_no_connected_part() {
        let recs = poisson_stream(30_000, 2.0, 6.0, 8);
        let b = BinningSpec::new(0.3, 0.0, 6.0).unwrap();
        let map = g3c_jacobi_estimate(&recs, &b, RWindow::default(), 0.3).unwrap();
        let mut outliers = 0;
        for (_, c) in map.iter() {
            outliers += usize::from(c.g3_connected.abs() > 3.0 * c.g3c_stderr.unwrap());
        }
        assert!(outliers <= map.len() / 20 + 1, "{outliers} of {}", map.len());
    }
}
