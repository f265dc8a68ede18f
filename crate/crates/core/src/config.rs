//! Run configuration in a line-based `key = value` format with `#` comments.
//!
//! Every key is optional; missing keys take the defaults shown by
//! [`RunConfig::default`]. [`RunConfig::to_text`] writes a file that parses back
//! to the same configuration.

use std::path::{Path, PathBuf};

use crate::trajectory::{Assignment, TrajectoryConfig};
use crate::{Error, PulseSpec, RWindow, Result, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClickFormat {
    #[default]
    Csv,
    Binary,
}

impl ClickFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ClickFormat::Csv => "csv",
            ClickFormat::Binary => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub pulse: PulseSpec,
    /// Peak input rates of the `traces` command (µs⁻¹).
    pub trace_rates: Vec<f64>,
    pub trace_dt: f64,
    /// Time traced after the pulse ends (µs).
    pub trace_tail: f64,
    /// Regression grid spacing; grid points sit at bin centers of the pulse window.
    pub grid_dt: f64,
    pub stride: usize,
    pub r_window: RWindow,
    pub theory_cell: f64,
    pub estimator_bin: f64,
    pub estimator_cell: f64,
    pub trajectory: TrajectoryConfig,
    pub bethe_kappa: f64,
    pub bethe_cell: f64,
    pub bethe_half_cells: i64,
    /// Click file read by `correlate`; empty means the file `simulate` writes into `out_dir`.
    pub clicks_path: Option<PathBuf>,
    pub click_format: ClickFormat,
    pub map_a: Option<PathBuf>,
    pub map_b: Option<PathBuf>,
    /// |z| above this counts as a disagreement in `compare`.
    pub z_threshold: f64,
    pub heatmap: bool,
    pub out_dir: PathBuf,
    /// Worker threads; zero picks the machine default.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: SystemParams::FITTED,
            pulse: PulseSpec::default(),
            trace_rates: vec![3.4, 6.7, 15.2],
            trace_dt: 0.01,
            trace_tail: 1.0,
            grid_dt: 0.1,
            stride: 1,
            r_window: RWindow::default(),
            theory_cell: 0.1,
            estimator_bin: 0.3,
            estimator_cell: 0.3,
            trajectory: TrajectoryConfig::default(),
            bethe_kappa: 1.0,
            bethe_cell: 0.1,
            bethe_half_cells: 40,
            clicks_path: None,
            click_format: ClickFormat::Csv,
            map_a: None,
            map_b: None,
            z_threshold: 3.0,
            heatmap: false,
            out_dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} must be positive")))
    }
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            c.set(key.trim(), value.trim(), line)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
            value.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{key}` expects a {}, found `{value}`", std::any::type_name::<T>()),
            })
        }
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "kappa" => self.params.kappa = num(key, value, line)?,
            "gamma_r" => self.params.gamma_r = num(key, value, line)?,
            "gamma_d" => self.params.gamma_d = num(key, value, line)?,
            "peak_rate" => self.pulse.peak_rate = num(key, value, line)?,
            "t_start" => self.pulse.t_start = num(key, value, line)?,
            "t_end" => self.pulse.t_end = num(key, value, line)?,
            "ramp" => self.pulse.ramp = num(key, value, line)?,
            "trace_rates" => {
                self.trace_rates = value
                    .split(',')
                    .map(|v| num(key, v.trim(), line))
                    .collect::<Result<_>>()?
            }
            "trace_dt" => self.trace_dt = num(key, value, line)?,
            "trace_tail" => self.trace_tail = num(key, value, line)?,
            "grid_dt" => self.grid_dt = num(key, value, line)?,
            "stride" => self.stride = num(key, value, line)?,
            "r_lo" => self.r_window.lo = num(key, value, line)?,
            "r_hi" => self.r_window.hi = num(key, value, line)?,
            "theory_cell" => self.theory_cell = num(key, value, line)?,
            "estimator_bin" => self.estimator_bin = num(key, value, line)?,
            "estimator_cell" => self.estimator_cell = num(key, value, line)?,
            "n_pulses" => self.trajectory.n_pulses = num(key, value, line)?,
            "seed" => self.trajectory.seed = num(key, value, line)?,
            "dt_max" => self.trajectory.dt_max = num(key, value, line)?,
            "detectors" => self.trajectory.detectors = num(key, value, line)?,
            "assignment" => {
                self.trajectory.assignment = value.parse::<Assignment>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`assignment` expects round-robin or random, found `{value}`"),
                })?
            }
            "dead_time" => self.trajectory.dead_time = num(key, value, line)?,
            "bethe_kappa" => self.bethe_kappa = num(key, value, line)?,
            "bethe_cell" => self.bethe_cell = num(key, value, line)?,
            "bethe_half_cells" => self.bethe_half_cells = num(key, value, line)?,
            "clicks_path" => self.clicks_path = path(value),
            "click_format" => {
                self.click_format = match value {
                    "csv" => ClickFormat::Csv,
                    "binary" => ClickFormat::Binary,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("`click_format` expects csv or binary, found `{value}`"),
                        })
                    }
                }
            }
            "map_a" => self.map_a = path(value),
            "map_b" => self.map_b = path(value),
            "z_threshold" => self.z_threshold = num(key, value, line)?,
            "heatmap" => self.heatmap = num(key, value, line)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "threads" => self.threads = num(key, value, line)?,
            _ => {
                return Err(Error::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.pulse.validate()?;
        self.trajectory.validate()?;
        RWindow::new(self.r_window.lo, self.r_window.hi)?;
        if self.trace_rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("trace_rates", "rates must be non-negative"));
        }
        for (name, v) in [
            ("trace_dt", self.trace_dt),
            ("grid_dt", self.grid_dt),
            ("theory_cell", self.theory_cell),
            ("estimator_bin", self.estimator_bin),
            ("estimator_cell", self.estimator_cell),
            ("bethe_kappa", self.bethe_kappa),
            ("bethe_cell", self.bethe_cell),
            ("z_threshold", self.z_threshold),
        ] {
            positive(name, v)?;
        }
        if !(self.trace_tail >= 0.0 && self.trace_tail.is_finite()) {
            return Err(Error::invalid("trace_tail", "must be non-negative"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        if self.bethe_half_cells < 0 {
            return Err(Error::invalid("bethe_half_cells", "must be non-negative"));
        }
        Ok(())
    }

    /// The full resolved configuration, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let t = &self.trajectory;
        let rates: Vec<String> = self.trace_rates.iter().map(f64::to_string).collect();
        let entries: Vec<(&str, String)> = vec![
            ("kappa", self.params.kappa.to_string()),
            ("gamma_r", self.params.gamma_r.to_string()),
            ("gamma_d", self.params.gamma_d.to_string()),
            ("peak_rate", self.pulse.peak_rate.to_string()),
            ("t_start", self.pulse.t_start.to_string()),
            ("t_end", self.pulse.t_end.to_string()),
            ("ramp", self.pulse.ramp.to_string()),
            ("trace_rates", rates.join(", ")),
            ("trace_dt", self.trace_dt.to_string()),
            ("trace_tail", self.trace_tail.to_string()),
            ("grid_dt", self.grid_dt.to_string()),
            ("stride", self.stride.to_string()),
            ("r_lo", self.r_window.lo.to_string()),
            ("r_hi", self.r_window.hi.to_string()),
            ("theory_cell", self.theory_cell.to_string()),
            ("estimator_bin", self.estimator_bin.to_string()),
            ("estimator_cell", self.estimator_cell.to_string()),
            ("n_pulses", t.n_pulses.to_string()),
            ("seed", t.seed.to_string()),
            ("dt_max", t.dt_max.to_string()),
            ("detectors", t.detectors.to_string()),
            ("assignment", t.assignment.to_string()),
            ("dead_time", t.dead_time.to_string()),
            ("bethe_kappa", self.bethe_kappa.to_string()),
            ("bethe_cell", self.bethe_cell.to_string()),
            ("bethe_half_cells", self.bethe_half_cells.to_string()),
            ("clicks_path", path_text(&self.clicks_path)),
            (
                "click_format",
                match self.click_format {
                    ClickFormat::Csv => "csv",
                    ClickFormat::Binary => "binary",
                }
                .into(),
            ),
            ("map_a", path_text(&self.map_a)),
            ("map_b", path_text(&self.map_b)),
            ("z_threshold", self.z_threshold.to_string()),
            ("heatmap", self.heatmap.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("threads", self.threads.to_string()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| if v.is_empty() { format!("{k} =\n") } else { format!("{k} = {v}\n") })
            .collect()
    }

    /// Bin-center regression grid over the pulse window.
    pub fn regression_grid(&self) -> Vec<f64> {
        let span = self.pulse.t_end - self.pulse.t_start;
        let n = (span / self.grid_dt).round().max(1.0) as usize;
        (0..n)
            .map(|k| self.pulse.t_start + (k as f64 + 0.5) * self.grid_dt)
            .collect()
    }

    /// Uniform trace grid from the pulse start to `trace_tail` after its end.
    pub fn trace_grid(&self) -> Vec<f64> {
        let span = self.pulse.t_end + self.trace_tail - self.pulse.t_start;
        let n = (span / self.trace_dt).round() as usize;
        (0..=n)
            .map(|k| self.pulse.t_start + k as f64 * self.trace_dt)
            .collect()
    }
}
