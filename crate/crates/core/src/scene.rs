//! Latent scene description: global parameters, tow control grid, fuzzball
//! geometry and nuisance parameters, all drawn from a seeded stream.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Global generator parameters. Lengths are in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub height_px: u32,
    pub width_px: u32,
    pub tow_width_px: f64,
    /// Control-point displacement sigma relative to the tow width.
    pub jitter_rel_sigma: f64,
    /// Bounds of the column shift magnitude relative to the tow width.
    pub shift_rel_range: [f64; 2],
    pub fuzzball_scale_px: f64,
    /// Inclusive bounds on the number of fibers in a fuzzball.
    pub fuzzball_fiber_count_range: [u32; 2],
    pub shift_probability: f64,
    pub fuzzball_probability: f64,
    /// Standard deviation of the ramp height at the left/right edge.
    pub ramp_edge_sigma: f64,
    pub texture_alpha: f64,
    pub noise_sigma: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::paper_scale()
    }
}

impl GeneratorConfig {
    /// 200x300 maps with 36 px tows (about eight tows across).
    pub fn paper_scale() -> Self {
        Self {
            height_px: 200,
            width_px: 300,
            tow_width_px: 36.0,
            jitter_rel_sigma: 0.03,
            shift_rel_range: [0.05, 0.5],
            fuzzball_scale_px: 30.0,
            fuzzball_fiber_count_range: [40, 80],
            shift_probability: 1.0,
            fuzzball_probability: 1.0,
            ramp_edge_sigma: 0.3,
            texture_alpha: 0.25,
            noise_sigma: 0.02,
        }
    }

    /// Full-size geometry scaled by 1/3 to 64x96 for CPU-sized experiments.
    pub fn desk_scale() -> Self {
        Self {
            height_px: 64,
            width_px: 96,
            tow_width_px: 12.0,
            fuzzball_scale_px: 10.0,
            fuzzball_fiber_count_range: [13, 27],
            ..Self::paper_scale()
        }
    }

    /// Same geometry with every nuisance term switched off.
    pub fn without_nuisance(mut self) -> Self {
        self.ramp_edge_sigma = 0.0;
        self.texture_alpha = 0.0;
        self.noise_sigma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tow_width_px;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.height_px == 0 || self.width_px == 0 {
            return fail("map dimensions must be positive".into());
        }
        if !(t.is_finite() && t > 0.0) {
            return fail(format!("tow_width_px must be positive, got {t}"));
        }
        if (self.height_px as f64) < 2.0 * t {
            return fail(format!(
                "height_px ({}) must be at least twice tow_width_px ({t})",
                self.height_px
            ));
        }
        let [lo, hi] = self.shift_rel_range;
        if !(lo > 0.0 && lo < hi && hi <= 0.5) {
            return fail(format!(
                "shift_rel_range must satisfy 0 < low < high <= 0.5, got [{lo}, {hi}]"
            ));
        }
        if !(self.fuzzball_scale_px.is_finite() && self.fuzzball_scale_px > 0.0) {
            return fail("fuzzball_scale_px must be positive".into());
        }
        let [fmin, fmax] = self.fuzzball_fiber_count_range;
        if fmin > fmax {
            return fail(format!(
                "fuzzball_fiber_count_range is empty: [{fmin}, {fmax}]"
            ));
        }
        for (name, p) in [
            ("shift_probability", self.shift_probability),
            ("fuzzball_probability", self.fuzzball_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, s) in [
            ("jitter_rel_sigma", self.jitter_rel_sigma),
            ("ramp_edge_sigma", self.ramp_edge_sigma),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return fail(format!("{name} must be finite and >= 0, got {s}"));
            }
        }
        if !self.texture_alpha.is_finite() {
            return fail("texture_alpha must be finite".into());
        }
        Ok(())
    }

    pub fn grid_columns(&self) -> usize {
        (self.width_px as f64 / self.tow_width_px).ceil() as usize + 1
    }

    pub fn grid_rows(&self) -> usize {
        (self.height_px as f64 / self.tow_width_px).ceil() as usize + 1
    }
}

/// Rectilinear lattice of tow centre-line points, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    pub columns: usize,
    pub rows: usize,
    pub tow_width: f64,
    pub points: Vec<[f64; 2]>,
    pub shifted_column: Option<usize>,
    pub shift_px: Option<f64>,
}

impl ControlGrid {
    /// Undisplaced lattice position of `(row, col)`.
    pub fn base_point(&self, row: usize, col: usize) -> [f64; 2] {
        [col as f64 * self.tow_width, row as f64 * self.tow_width]
    }

    pub fn point(&self, row: usize, col: usize) -> [f64; 2] {
        self.points[row * self.columns + col]
    }

    /// Control points of one tow, top to bottom.
    pub fn column(&self, col: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.rows).map(move |r| self.point(r, col))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
}

impl Fiber {
    pub fn length(&self) -> f64 {
        (self.p1[0] - self.p0[0]).hypot(self.p1[1] - self.p0[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzballGeometry {
    pub center: [f64; 2],
    pub fibers: Vec<Fiber>,
}

/// Parameters of the randomization layer. Texture offsets are unit fractions
/// resolved against the actual texture size at render time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceParams {
    pub ramp_slope: f64,
    pub texture_top_id: usize,
    pub texture_bottom_id: usize,
    pub texture_offsets: [[f64; 2]; 2],
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub config: GeneratorConfig,
    pub grid: ControlGrid,
    pub fuzzball: Option<FuzzballGeometry>,
    pub nuisance: NuisanceParams,
    pub seed: u64,
}

impl SceneSample {
    pub fn is_defect_free(&self) -> bool {
        self.grid.shifted_column.is_none() && self.fuzzball.is_none()
    }
}

pub fn sample_control_grid<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<ControlGrid> {
    config.validate()?;
    let t = config.tow_width_px;
    let columns = config.grid_columns();
    let rows = config.grid_rows();
    let jitter = Normal::new(0.0, config.jitter_rel_sigma * t)
        .map_err(|e| Error::Config(format!("jitter distribution: {e}")))?;

    let mut points = Vec::with_capacity(rows * columns);
    for r in 0..rows {
        for c in 0..columns {
            let dx = jitter.sample(rng);
            let dy = jitter.sample(rng);
            points.push([c as f64 * t + dx, r as f64 * t + dy]);
        }
    }

    let mut grid = ControlGrid {
        columns,
        rows,
        tow_width: t,
        points,
        shifted_column: None,
        shift_px: None,
    };

    if rng.random_bool(config.shift_probability) {
        let col = rng.random_range(0..columns);
        let [lo, hi] = config.shift_rel_range;
        let magnitude = rng.random_range(lo * t..=hi * t);
        let shift = if rng.random_bool(0.5) {
            magnitude
        } else {
            -magnitude
        };
        for r in 0..rows {
            grid.points[r * columns + col][0] += shift;
        }
        grid.shifted_column = Some(col);
        grid.shift_px = Some(shift);
    }
    Ok(grid)
}

pub fn sample_fuzzball<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<FuzzballGeometry> {
    config.validate()?;
    let v = config.fuzzball_scale_px;
    let center = [
        rng.random_range(0.0..config.width_px as f64),
        rng.random_range(0.0..config.height_px as f64),
    ];
    let [nmin, nmax] = config.fuzzball_fiber_count_range;
    let count = rng.random_range(nmin..=nmax);

    let fibers = (0..count)
        .map(|_| {
            // uniform in the disk of radius v/2
            let radius = 0.5 * v * rng.random::<f64>().sqrt();
            let phi = rng.random_range(-PI..PI);
            let p0 = [
                center[0] + radius * phi.cos(),
                center[1] + radius * phi.sin(),
            ];
            let theta = rng.random_range(-PI..=PI);
            let len = rng.random_range(v..=2.0 * v);
            let p1 = [p0[0] + len * theta.cos(), p0[1] + len * theta.sin()];
            Fiber { p0, p1 }
        })
        .collect();

    Ok(FuzzballGeometry { center, fibers })
}

pub fn sample_nuisance<R: Rng + ?Sized>(
    config: &GeneratorConfig,
    texture_count: usize,
    rng: &mut R,
) -> Result<NuisanceParams> {
    config.validate()?;
    if texture_count == 0 {
        return Err(Error::Config("texture source is empty".into()));
    }
    let slope_sigma = config.ramp_edge_sigma / (config.width_px as f64 / 2.0);
    let ramp = Normal::new(0.0, slope_sigma)
        .map_err(|e| Error::Config(format!("ramp distribution: {e}")))?;
    let ramp_slope = ramp.sample(rng);
    let texture_top_id = rng.random_range(0..texture_count);
    let texture_bottom_id = rng.random_range(0..texture_count);
    let texture_offsets = [[rng.random(), rng.random()], [rng.random(), rng.random()]];
    Ok(NuisanceParams {
        ramp_slope,
        texture_top_id,
        texture_bottom_id,
        texture_offsets,
        noise_seed: rng.random(),
    })
}

const GRID_STREAM: u64 = 1;
const FUZZBALL_STREAM: u64 = 2;
const NUISANCE_STREAM: u64 = 3;

/// Draws a complete scene. Each layer reads from its own ChaCha stream so that
/// toggling one layer's probabilities never perturbs the others.
pub fn sample_scene(
    config: &GeneratorConfig,
    seed: u64,
    texture_count: usize,
) -> Result<SceneSample> {
    config.validate()?;
    let mut grid_rng: ChaCha8Rng = stream_rng(seed, GRID_STREAM);
    let grid = sample_control_grid(config, &mut grid_rng)?;

    let mut fuzz_rng = stream_rng(seed, FUZZBALL_STREAM);
    let fuzzball = if fuzz_rng.random_bool(config.fuzzball_probability) {
        Some(sample_fuzzball(config, &mut fuzz_rng)?)
    } else {
        None
    };

    let mut nuisance_rng = stream_rng(seed, NUISANCE_STREAM);
    let nuisance = sample_nuisance(config, texture_count, &mut nuisance_rng)?;

    Ok(SceneSample {
        config: config.clone(),
        grid,
        fuzzball,
        nuisance,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn grid_dimensions_at_paper_scale() {
        let grid = sample_control_grid(&GeneratorConfig::paper_scale(), &mut rng(1)).unwrap();
        assert_eq!(grid.columns, 10);
        assert_eq!(grid.rows, 7);
        assert_eq!(grid.points.len(), 70);
    }

    #[test]
    fn jitter_sigma_is_three_percent_of_tow_width() {
        let cfg = GeneratorConfig {
            height_px: 1000,
            width_px: 1000,
            tow_width_px: 100.0,
            shift_probability: 0.0,
            ..GeneratorConfig::paper_scale()
        };
        let mut r = rng(5);
        let mut devs = Vec::new();
        for _ in 0..40 {
            let g = sample_control_grid(&cfg, &mut r).unwrap();
            for row in 0..g.rows {
                for col in 0..g.columns {
                    let p = g.point(row, col);
                    let b = g.base_point(row, col);
                    devs.push(p[0] - b[0]);
                    devs.push(p[1] - b[1]);
                }
            }
        }
        let n = devs.len() as f64;
        let mean = devs.iter().sum::<f64>() / n;
        let sd = (devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 3.0).abs() < 0.1, "sd {sd}");
        assert!(mean.abs() < 0.1);
    }

    #[test]
    fn shift_magnitude_in_range() {
        let cfg = GeneratorConfig::paper_scale();
        let mut r = rng(9);
        for _ in 0..2000 {
            let g = sample_control_grid(&cfg, &mut r).unwrap();
            let s = g.shift_px.unwrap().abs();
            assert!((1.8..=18.0).contains(&s), "{s}");
            assert!(g.shifted_column.unwrap() < g.columns);
        }
    }

    #[test]
    fn fiber_lengths_and_center() {
        let cfg = GeneratorConfig::paper_scale();
        let mut r = rng(3);
        for _ in 0..200 {
            let f = sample_fuzzball(&cfg, &mut r).unwrap();
            assert!(f.center[0] >= 0.0 && f.center[0] < 300.0);
            assert!(f.center[1] >= 0.0 && f.center[1] < 200.0);
            assert!((40..=80).contains(&f.fibers.len()));
            for fiber in &f.fibers {
                let l = fiber.length();
                assert!((30.0 - 1e-9..=60.0 + 1e-9).contains(&l), "{l}");
                let d = (fiber.p0[0] - f.center[0]).hypot(fiber.p0[1] - f.center[1]);
                assert!(d <= 15.0 + 1e-9);
            }
        }
    }

    #[test]
    fn fiber_count_mean() {
        let cfg = GeneratorConfig::paper_scale();
        let mut r = rng(11);
        let n = 10_000;
        let total: usize = (0..n)
            .map(|_| sample_fuzzball(&cfg, &mut r).unwrap().fibers.len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((58.0..=62.0).contains(&mean), "{mean}");
    }

    #[test]
    fn nuisance_ramp_and_textures() {
        let cfg = GeneratorConfig {
            ramp_edge_sigma: 0.0,
            ..GeneratorConfig::paper_scale()
        };
        let n = sample_nuisance(&cfg, 1, &mut rng(2)).unwrap();
        assert_eq!(n.ramp_slope, 0.0);
        assert_eq!(n.texture_top_id, n.texture_bottom_id);

        assert!(matches!(
            sample_nuisance(&cfg, 0, &mut rng(2)),
            Err(Error::Config(_))
        ));

        let cfg = GeneratorConfig::paper_scale();
        let mut r = rng(4);
        let slopes: Vec<f64> = (0..20_000)
            .map(|_| sample_nuisance(&cfg, 8, &mut r).unwrap().ramp_slope)
            .collect();
        let sd = (slopes.iter().map(|s| s * s).sum::<f64>() / slopes.len() as f64).sqrt();
        assert!((sd - 0.002).abs() < 0.0001, "{sd}");
    }

    #[test]
    fn scene_is_deterministic() {
        let cfg = GeneratorConfig::paper_scale();
        let a = sample_scene(&cfg, 42, 16).unwrap();
        let b = sample_scene(&cfg, 42, 16).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_ne!(a, sample_scene(&cfg, 43, 16).unwrap());
    }

    #[test]
    fn probabilities_control_defects() {
        let clean = GeneratorConfig {
            shift_probability: 0.0,
            fuzzball_probability: 0.0,
            ..GeneratorConfig::paper_scale()
        };
        let s = sample_scene(&clean, 1, 4).unwrap();
        assert!(s.is_defect_free());
        assert!(s.grid.shift_px.is_none());

        let s = sample_scene(&GeneratorConfig::paper_scale(), 1, 4).unwrap();
        assert!(s.grid.shifted_column.is_some());
        assert!(s.fuzzball.is_some());
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = GeneratorConfig::paper_scale();
        let bad = [
            GeneratorConfig {
                height_px: 50,
                ..base.clone()
            },
            GeneratorConfig {
                shift_rel_range: [0.5, 0.4],
                ..base.clone()
            },
            GeneratorConfig {
                shift_rel_range: [0.05, 0.6],
                ..base.clone()
            },
            GeneratorConfig {
                noise_sigma: -1.0,
                ..base.clone()
            },
            GeneratorConfig {
                shift_probability: 1.5,
                ..base.clone()
            },
            GeneratorConfig {
                tow_width_px: 0.0,
                ..base.clone()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
            assert!(sample_control_grid(&cfg, &mut rng(0)).is_err());
        }
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let json = serde_json::to_string(&GeneratorConfig::paper_scale()).unwrap();
        let back: GeneratorConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, GeneratorConfig::paper_scale());
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<GeneratorConfig>(v).is_err());
    }
}
