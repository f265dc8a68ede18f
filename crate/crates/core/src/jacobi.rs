//! Jacobi coordinates for photon triples, the connected three-photon correlation,
//! and center-of-mass averaged maps over the relative coordinates (η, ζ).

use std::collections::BTreeMap;

use crate::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT6: f64 = 2.449_489_742_783_178;

/// Center-of-mass and relative coordinates of a photon triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobi {
    pub r: f64,
    pub eta: f64,
    pub zeta: f64,
}

/// `R = (s₁+s₂+s₃)/√3`, `η = (s₁−s₂)/√2`, `ζ = √(2/3)[(s₁+s₂)/2 − s₃]`.
pub fn to_jacobi(s1: f64, s2: f64, s3: f64) -> Jacobi {
    Jacobi {
        r: (s1 + s2 + s3) / SQRT3,
        eta: (s1 - s2) / SQRT2,
        zeta: (s1 + s2 - 2.0 * s3) / SQRT6,
    }
}

/// Inverse of [`to_jacobi`]; the map is orthogonal, so this is its transpose.
pub fn from_jacobi(j: Jacobi) -> [f64; 3] {
    let base = j.r / SQRT3;
    [
        base + j.eta / SQRT2 + j.zeta / SQRT6,
        base - j.eta / SQRT2 + j.zeta / SQRT6,
        base - 2.0 * j.zeta / SQRT6,
    ]
}

/// `g3_c = 2 + g3 − (g2₁₂ + g2₁₃ + g2₂₃)`.
pub fn connected_g3(g3: f64, g2_pairs: [f64; 3]) -> f64 {
    2.0 + g3 - g2_pairs.iter().sum::<f64>()
}

/// Center-of-mass window, stored as bounds on the mean time `R/√3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RWindow {
    fn default() -> Self {
        RWindow { lo: 2.5, hi: 3.5 }
    }
}

impl RWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::invalid("r_window", format!("[{lo}, {hi}] is not a valid range")));
        }
        Ok(RWindow { lo, hi })
    }

    /// Bounds on R itself.
    pub fn r_bounds(&self) -> (f64, f64) {
        (SQRT3 * self.lo, SQRT3 * self.hi)
    }

    pub fn contains_mean(&self, mean: f64) -> bool {
        const EPS: f64 = 1e-9;
        mean >= self.lo - EPS && mean <= self.hi + EPS
    }
}

/// Uniform time axis `t0 + i·dt`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformAxis {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl UniformAxis {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }
}

/// Packed position of the multiset `i ≤ j ≤ k` (combinatorial number system).
pub fn triple_index(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i <= j && j <= k);
    let c = k + 2;
    let b = j + 1;
    c * (c - 1) * (c - 2) / 6 + b * (b - 1) / 2 + i
}

/// Number of sorted triples over `n` points.
pub fn triple_count(n: usize) -> usize {
    n * (n + 1) * (n + 2) / 6
}

pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

pub fn pair_count(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn sort3(i: usize, j: usize, k: usize) -> (usize, usize, usize) {
    let mut v = [i, j, k];
    v.sort_unstable();
    (v[0], v[1], v[2])
}

/// Value of g3 and g3_c at one sorted time triple, with optional variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleValue {
    pub g3: f64,
    pub g3_connected: f64,
    pub g3_var: Option<f64>,
    pub g3c_var: Option<f64>,
}

/// Three-time data over a uniform axis, queried at sorted index triples.
pub trait TripleSource: Sync {
    fn axis(&self) -> UniformAxis;
    /// `None` where the value is undefined (for instance a vanishing intensity).
    fn value(&self, i: usize, j: usize, k: usize) -> Option<TripleValue>;
}

/// One populated (η, ζ) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCell {
    pub g3: f64,
    pub g3_connected: f64,
    pub g3_stderr: Option<f64>,
    pub g3c_stderr: Option<f64>,
    pub n_samples: usize,
}

/// Binned map over (η, ζ); cells without data are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiMap {
    pub cell_width: f64,
    pub r_window: Option<RWindow>,
    cells: BTreeMap<(i64, i64), MapCell>,
}

impl JacobiMap {
    pub fn new(cell_width: f64, r_window: Option<RWindow>) -> Self {
        JacobiMap {
            cell_width,
            r_window,
            cells: BTreeMap::new(),
        }
    }

    /// Index of the cell centered on `k·width` that contains `x`; symmetric under `x → −x`.
    pub fn cell_of(&self, x: f64) -> i64 {
        (x / self.cell_width).round() as i64
    }

    pub fn center(&self, index: i64) -> f64 {
        index as f64 * self.cell_width
    }

    pub fn insert(&mut self, key: (i64, i64), cell: MapCell) {
        self.cells.insert(key, cell);
    }

    pub fn get(&self, eta_index: i64, zeta_index: i64) -> Option<&MapCell> {
        self.cells.get(&(eta_index, zeta_index))
    }

    pub fn at(&self, eta: f64, zeta: f64) -> Option<&MapCell> {
        self.get(self.cell_of(eta), self.cell_of(zeta))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Populated cells in (η, ζ) index order.
    pub fn iter(&self) -> impl Iterator<Item = ((i64, i64), &MapCell)> {
        self.cells.iter().map(|(k, v)| (*k, v))
    }

    /// Largest |Δ| of g3 and g3_c between each cell and its image under `(iη, iζ) ↦ f(iη, iζ)`.
    pub fn asymmetry(&self, image: impl Fn(i64, i64) -> (i64, i64)) -> f64 {
        let mut worst: f64 = 0.0;
        for (&(a, b), cell) in &self.cells {
            if let Some(other) = self.cells.get(&image(a, b)) {
                worst = worst
                    .max((cell.g3 - other.g3).abs())
                    .max((cell.g3_connected - other.g3_connected).abs());
            }
        }
        worst
    }

    /// Map of exactly evaluated cell-center values (no R dependence).
    pub fn from_fn(cell_width: f64, half_cells: i64, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut map = JacobiMap::new(cell_width, None);
        for a in -half_cells..=half_cells {
            for b in -half_cells..=half_cells {
                let (g3, g3c) = f(map.center(a), map.center(b));
                map.insert(
                    (a, b),
                    MapCell {
                        g3,
                        g3_connected: g3c,
                        g3_stderr: None,
                        g3c_stderr: None,
                        n_samples: 1,
                    },
                );
            }
        }
        map
    }

    /// Mean g3_c over annuli of width `dr` around the origin: `(radius, mean, cells)`.
    pub fn radial_profile(&self, dr: f64) -> Vec<(f64, f64, usize)> {
        let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for (&(a, b), cell) in &self.cells {
            let r = self.center(a).hypot(self.center(b));
            let e = acc.entry((r / dr).round() as i64).or_insert((0.0, 0));
            e.0 += cell.g3_connected;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (sum, n))| (k as f64 * dr, sum / n as f64, n))
            .collect()
    }
}

#[derive(Default)]
struct CellAccumulator {
    g3: f64,
    g3c: f64,
    n: usize,
    has_var: bool,
    // copies of one sorted triple inside a cell are the same measurement
    multiplicity: BTreeMap<(usize, usize, usize), (u32, f64, f64)>,
}

/// Averages g3 and g3_c over every ordered triple whose mean time lies in `window`,
/// binned by (η, ζ) in square cells of `cell_width`.
///
/// g3 and g3_c are averaged independently. Variances, when the source has them,
/// treat distinct sorted triples as independent and repeated ones as identical.
pub fn average_over_r(
    source: &impl TripleSource,
    window: RWindow,
    cell_width: f64,
) -> Result<JacobiMap> {
    if cell_width <= 0.0 || !cell_width.is_finite() {
        return Err(Error::invalid("cell_width", format!("{cell_width} must be positive")));
    }
    let axis = source.axis();
    let mut map = JacobiMap::new(cell_width, Some(window));
    let mut acc: BTreeMap<(i64, i64), CellAccumulator> = BTreeMap::new();
    let n = axis.len;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let (a, b, c) = sort3(i, j, k);
                let mean = (axis.time(a) + axis.time(b) + axis.time(c)) / 3.0;
                if !window.contains_mean(mean) {
                    continue;
                }
                let Some(v) = source.value(a, b, c) else {
                    continue;
                };
                // relative coordinates from index differences, so sign flips are exact
                let eta = (i as f64 - j as f64) * axis.dt / SQRT2;
                let zeta = ((i + j) as f64 - 2.0 * k as f64) * axis.dt / SQRT6;
                let key = (map.cell_of(eta), map.cell_of(zeta));
                let cell = acc.entry(key).or_default();
                cell.g3 += v.g3;
                cell.g3c += v.g3_connected;
                cell.n += 1;
                if let (Some(v3), Some(vc)) = (v.g3_var, v.g3c_var) {
                    cell.has_var = true;
                    let e = cell.multiplicity.entry((a, b, c)).or_insert((0, v3, vc));
                    e.0 += 1;
                }
            }
        }
    }
    if acc.is_empty() {
        return Err(Error::Empty(format!(
            "no triples with mean time in [{}, {}] us",
            window.lo, window.hi
        )));
    }
    for (key, cell) in acc {
        let n = cell.n as f64;
        let (g3_stderr, g3c_stderr) = if cell.has_var {
            let (mut s3, mut sc) = (0.0, 0.0);
            for (m, v3, vc) in cell.multiplicity.values() {
                let m = f64::from(*m);
                s3 += m * m * v3;
                sc += m * m * vc;
            }
            (Some(s3.sqrt() / n), Some(sc.sqrt() / n))
        } else {
            (None, None)
        };
        map.insert(
            key,
            MapCell {
                g3: cell.g3 / n,
                g3_connected: cell.g3c / n,
                g3_stderr,
                g3c_stderr,
                n_samples: cell.n,
            },
        );
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_point() {
        let j = to_jacobi(1.5, 1.5, 1.5);
        assert!((j.r - SQRT3 * 1.5).abs() < 1e-15);
        assert_eq!(j.eta, 0.0);
        assert_eq!(j.zeta, 0.0);
    }

    #[test]
    fn printed_example() {
        let j = to_jacobi(3.0, 2.0, 1.0);
        assert!((j.r - 3.4641).abs() < 1e-4);
        assert!((j.eta - 0.70711).abs() < 1e-5);
        assert!((j.zeta - 1.22474).abs() < 1e-5);
    }

    #[test]
    fn connected_part_examples() {
        assert_eq!(connected_g3(1.0, [1.0, 1.0, 1.0]), 0.0);
        assert_eq!(connected_g3(2.7, [2.7, 1.0, 1.0]), 0.0);
        assert_eq!(connected_g3(25.0, [9.0, 9.0, 9.0]), 0.0);
    }

    #[test]
    fn packing_is_dense() {
        let n = 7;
        let mut seen = vec![false; triple_count(n)];
        for k in 0..n {
            for j in 0..=k {
                for i in 0..=j {
                    let idx = triple_index(i, j, k);
                    assert!(!seen[idx]);
                    seen[idx] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        let mut seen = vec![false; pair_count(n)];
        for j in 0..n {
            for i in 0..=j {
                seen[pair_index(i, j)] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    proptest! {
        #[test]
        fn roundtrip(s1 in -10.0..10.0f64, s2 in -10.0..10.0f64, s3 in -10.0..10.0f64) {
            let back = from_jacobi(to_jacobi(s1, s2, s3));
            prop_assert!((back[0] - s1).abs() < 1e-12);
            prop_assert!((back[1] - s2).abs() < 1e-12);
            prop_assert!((back[2] - s3).abs() < 1e-12);
        }

        #[test]
        fn connected_is_linear(a in -5.0..5.0f64, b in proptest::array::uniform3(-5.0..5.0f64),
                               c in -5.0..5.0f64, d in proptest::array::uniform3(-5.0..5.0f64),
                               x in -3.0..3.0f64) {
            let lhs = connected_g3(a + x * c, [b[0] + x * d[0], b[1] + x * d[1], b[2] + x * d[2]]);
            let rhs = connected_g3(a, b) + x * (connected_g3(c, d) - 2.0);
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn one_separated_photon_has_no_connected_part(g2 in 0.0..10.0f64) {
            prop_assert!(connected_g3(g2, [g2, 1.0, 1.0]).abs() < 1e-12);
        }
    }

    struct Stationary<F: Fn(f64, f64) -> f64 + Sync> {
        axis: UniformAxis,
        f: F,
    }

    impl<F: Fn(f64, f64) -> f64 + Sync> TripleSource for Stationary<F> {
        fn axis(&self) -> UniformAxis {
            self.axis
        }
        fn value(&self, i: usize, j: usize, k: usize) -> Option<TripleValue> {
            // sorted i ≤ j ≤ k: elapsed gaps
            let d1 = (j - i) as f64 * self.axis.dt;
            let d2 = (k - j) as f64 * self.axis.dt;
            let g3 = (self.f)(d1, d2);
            Some(TripleValue {
                g3,
                g3_connected: g3 - 1.0,
                g3_var: None,
                g3c_var: None,
            })
        }
    }

    #[test]
    fn constant_input_is_unchanged_by_averaging() {
        let src = Stationary {
            axis: UniformAxis { t0: 0.0, dt: 0.1, len: 61 },
            f: |_, _| 1.7,
        };
        let map = average_over_r(&src, RWindow::default(), 0.1).unwrap();
        assert!(!map.is_empty());
        for (_, cell) in map.iter() {
            assert!((cell.g3 - 1.7).abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_symmetric_input_has_sixfold_symmetry() {
        // depends on the two gaps symmetrically, like the ideal chiral-emitter model
        let src = Stationary {
            axis: UniformAxis { t0: 0.0, dt: 0.1, len: 61 },
            f: |d1, d2| 1.0 + (-(d1 + d2)).exp() + 0.3 * (-d1).exp() * (-2.0 * d2).exp() + 0.3 * (-d2).exp() * (-2.0 * d1).exp(),
        };
        let map = average_over_r(&src, RWindow::default(), 0.1).unwrap();
        assert!(map.asymmetry(|a, b| (-a, b)) < 1e-12);
        assert!(map.asymmetry(|a, b| (a, -b)) < 1e-12);
        assert!(map.asymmetry(|a, b| (-a, -b)) < 1e-12);
    }

    #[test]
    fn time_ordered_input_breaks_zeta_mirror() {
        let src = Stationary {
            axis: UniformAxis { t0: 0.0, dt: 0.1, len: 61 },
            f: |d1, d2| 1.0 + (-d1).exp() * (-3.0 * d2).exp(),
        };
        let map = average_over_r(&src, RWindow::default(), 0.1).unwrap();
        assert!(map.asymmetry(|a, b| (-a, b)) < 1e-12);
        assert!(map.asymmetry(|a, b| (a, -b)) > 1e-3);
    }

    #[test]
    fn empty_window_is_an_error() {
        let src = Stationary {
            axis: UniformAxis { t0: 0.0, dt: 0.1, len: 10 },
            f: |_, _| 1.0,
        };
        assert!(matches!(
            average_over_r(&src, RWindow::new(5.0, 6.0).unwrap(), 0.1),
            Err(Error::Empty(_))
        ));
    }
}
