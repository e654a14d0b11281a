//! Synthetic phenology and shift/gain perturbation scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{interpolate_at, SigmoidParams};
use crate::seed::rng_for;
use crate::series::{FieldSample, QualityFlag, Series, TimeGrid};

pub const CLIP_LO: f64 = -0.2;
pub const CLIP_HI: f64 = 1.0;

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub base: SigmoidParams,
    /// Standard deviation of the per-field sowing shift, in days.
    pub sowing_jitter: f64,
    pub gain_range: (f64, f64),
    pub value_noise: f64,
}

impl ClassSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let (g_lo, g_hi) = self.gain_range;
        if !(self.sowing_jitter >= 0.0 && g_lo > 0.0 && g_lo <= g_hi && self.value_noise >= 0.0) {
            return Err(Error::Parameter(format!("invalid class spec for {}", self.name)));
        }
        Ok(())
    }

    /// Late, steep season: a second crop sown after winter wheat.
    pub fn corn_like() -> Self {
        Self {
            name: "corn".into(),
            base: SigmoidParams {
                v_min: 0.15,
                v_max: 0.85,
                s1: 195.0,
                s2: 265.0,
                m1: 0.12,
                m2: 0.10,
            },
            sowing_jitter: 5.0,
            gain_range: (0.95, 1.05),
            value_noise: 0.01,
        }
    }

    /// Early green-up, long plateau, gentle slopes.
    pub fn cotton_like() -> Self {
        Self {
            name: "cotton".into(),
            base: SigmoidParams {
                v_min: 0.15,
                v_max: 0.75,
                s1: 160.0,
                s2: 280.0,
                m1: 0.06,
                m2: 0.05,
            },
            sowing_jitter: 5.0,
            gain_range: (0.95, 1.05),
            value_noise: 0.01,
        }
    }
}

/// Draws one field profile: jittered season timing, gain and value noise, clipped.
pub fn synth_profile_with(spec: &ClassSpec, grid: &TimeGrid, rng: &mut impl Rng) -> Series {
    let shift = gaussian(rng, spec.sowing_jitter);
    let gain = uniform(rng, spec.gain_range);
    let params = SigmoidParams {
        s1: spec.base.s1 + shift,
        s2: spec.base.s2 + shift,
        ..spec.base
    };
    let days = grid.days();
    let values = days
        .iter()
        .map(|&d| (gain * params.value_at(d as f64) + gaussian(rng, spec.value_noise)).clamp(CLIP_LO, CLIP_HI))
        .collect();
    Series::clear(days, values).expect("grid days are strictly increasing")
}

pub fn synth_profile(spec: &ClassSpec, grid: &TimeGrid, seed: u64) -> Result<Series> {
    spec.validate()?;
    Ok(synth_profile_with(spec, grid, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// A concrete perturbation applied to one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub shift_days: f64,
    pub gain: f64,
    pub offset: f64,
    pub noise: f64,
    /// Probability that a sample is flagged as cloud (its value is left as is).
    pub cloud_fraction: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Scenario {
    pub const IDENTITY: Self = Self {
        shift_days: 0.0,
        gain: 1.0,
        offset: 0.0,
        noise: 0.0,
        cloud_fraction: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.shift_days.is_finite()
            && self.gain > 0.0
            && self.offset.is_finite()
            && self.noise >= 0.0
            && (0.0..=1.0).contains(&self.cloud_fraction);
        if !ok {
            return Err(Error::Parameter(format!("invalid scenario {self:?}")));
        }
        Ok(())
    }
}

/// Applies `sc` and samples the result on `target_days`: the value at day `t` is the input
/// interpolated at `t - shift`, then `gain * v + offset + noise`.
pub fn apply_scenario_on(series: &Series, sc: &Scenario, target_days: &[i32], rng: &mut impl Rng) -> Result<Series> {
    sc.validate()?;
    let mut values = Vec::with_capacity(target_days.len());
    let mut flags = Vec::with_capacity(target_days.len());
    for &t in target_days {
        let src = t as f64 - sc.shift_days;
        let v = interpolate_at(series.days(), series.values(), src).ok_or_else(|| {
            Error::Coverage(format!(
                "shift {} needs day {src} outside [{}, {}]",
                sc.shift_days,
                series.first_day().unwrap_or(0),
                series.last_day().unwrap_or(0)
            ))
        })?;
        values.push(sc.gain * v + sc.offset + gaussian(rng, sc.noise));
        let cloudy = sc.cloud_fraction > 0.0 && rng.random_bool(sc.cloud_fraction);
        flags.push(if cloudy { QualityFlag::Cloud } else { QualityFlag::Clear });
    }
    Series::new(target_days.to_vec(), values, flags)
}

/// [`apply_scenario_on`] using the series' own days as the target.
pub fn apply_scenario(series: &Series, sc: &Scenario, seed: u64) -> Result<Series> {
    apply_scenario_on(series, sc, series.days(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Ranges from which a per-field [`Scenario`] is drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub shift: (f64, f64),
    pub gain: (f64, f64),
    pub offset: (f64, f64),
    pub noise: f64,
    pub cloud_fraction: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl ScenarioSpec {
    pub fn identity() -> Self {
        Self {
            shift: (0.0, 0.0),
            gain: (1.0, 1.0),
            offset: (0.0, 0.0),
            noise: 0.0,
            cloud_fraction: 0.0,
        }
    }

    /// Shift only.
    pub fn s1() -> Self {
        Self {
            shift: (-10.0, 10.0),
            ..Self::identity()
        }
    }

    /// Gain only.
    pub fn s2() -> Self {
        Self {
            gain: (0.85, 1.15),
            ..Self::identity()
        }
    }

    /// Gain and shift.
    pub fn s3() -> Self {
        Self {
            shift: (-10.0, 10.0),
            gain: (0.85, 1.15),
            ..Self::identity()
        }
    }

    /// Gain, shift and value noise.
    pub fn s4() -> Self {
        Self {
            noise: 0.02,
            ..Self::s3()
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(Self::identity()),
            "s1" => Ok(Self::s1()),
            "s2" => Ok(Self::s2()),
            "s3" => Ok(Self::s3()),
            "s4" => Ok(Self::s4()),
            _ => Err(Error::Parameter(format!("unknown scenario '{name}' (identity|s1|s2|s3|s4)"))),
        }
    }

    pub fn max_abs_shift(&self) -> f64 {
        self.shift.0.abs().max(self.shift.1.abs())
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(ordered(self.shift) && ordered(self.gain) && ordered(self.offset) && self.gain.0 > 0.0) {
            return Err(Error::Parameter(format!("invalid scenario ranges {self:?}")));
        }
        Scenario {
            noise: self.noise,
            cloud_fraction: self.cloud_fraction,
            ..Scenario::IDENTITY
        }
        .validate()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Scenario {
        Scenario {
            shift_days: uniform(rng, self.shift),
            gain: uniform(rng, self.gain),
            offset: uniform(rng, self.offset),
            noise: self.noise,
            cloud_fraction: self.cloud_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: Vec<ClassSpec>,
    pub n_per_class: usize,
    pub grid: TimeGrid,
    pub year_a: i32,
    pub year_b: i32,
    pub scenario_a: ScenarioSpec,
    pub scenario_b: ScenarioSpec,
    /// Reuse each field's base profile in both years; otherwise year B fields are fresh draws.
    pub persistent_fields: bool,
}

impl DatasetSpec {
    pub fn two_class(n_per_class: usize, grid: TimeGrid) -> Self {
        Self {
            classes: vec![ClassSpec::corn_like(), ClassSpec::cotton_like()],
            n_per_class,
            grid,
            year_a: 2019,
            year_b: 2020,
            scenario_a: ScenarioSpec::identity(),
            scenario_b: ScenarioSpec::identity(),
            persistent_fields: true,
        }
    }

    /// Two-class cross-year benchmark: a clean training year and an S4-perturbed test year on
    /// an 8-day grid, with field-level sowing, gain and noise variability.
    pub fn s4_benchmark(n_per_class: usize) -> Self {
        let mut spec = Self::two_class(n_per_class, TimeGrid::new(110, 334, 8).expect("static grid"));
        for class in &mut spec.classes {
            class.sowing_jitter = 12.0;
            class.gain_range = (0.7, 1.3);
            class.value_noise = 0.02;
        }
        spec.scenario_b = ScenarioSpec::s4();
        spec.persistent_fields = false;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.n_per_class == 0 {
            return Err(Error::Parameter("dataset needs at least one class and one field".into()));
        }
        for c in &self.classes {
            c.validate()?;
        }
        self.scenario_a.validate()?;
        self.scenario_b.validate()
    }
}

pub fn field_id(class: &str, index: usize) -> String {
    format!("{class}-{index:04}")
}

/// Labeled datasets for years A and B, in class order then field index.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<(Vec<FieldSample>, Vec<FieldSample>)> {
    spec.validate()?;
    let margin = spec.scenario_a.max_abs_shift().max(spec.scenario_b.max_abs_shift()).ceil() as i32;
    // Daily base curves, so shifted re-sampling interpolates between adjacent days.
    let wide = TimeGrid::new(spec.grid.t_l - margin, spec.grid.t_u + margin, 1)?;
    let target = spec.grid.days();
    let mut year_a = Vec::new();
    let mut year_b = Vec::new();
    for (c, class) in spec.classes.iter().enumerate() {
        for i in 0..spec.n_per_class {
            let stream = ((c as u64) << 32) | i as u64;
            let mut rng = rng_for(seed, stream);
            let base_a = synth_profile_with(class, &wide, &mut rng);
            let base_b = if spec.persistent_fields {
                base_a.clone()
            } else {
                synth_profile_with(class, &wide, &mut rng)
            };
            let sc_a = spec.scenario_a.sample(&mut rng);
            let sc_b = spec.scenario_b.sample(&mut rng);
            let id = field_id(&class.name, i);
            let label = Some(class.name.clone());
            let a = apply_scenario_on(&base_a, &sc_a, &target, &mut rng)?;
            let b = apply_scenario_on(&base_b, &sc_b, &target, &mut rng)?;
            year_a.push(FieldSample::new(id.clone(), spec.year_a, label.clone(), a));
            year_b.push(FieldSample::new(id, spec.year_b, label, b));
        }
    }
    Ok((year_a, year_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{dtw, vdtw, WarpConfig};
    use crate::preprocess::eval_double_sigmoid;
    use crate::window::{median_profile, pivot_day};

    fn grid() -> TimeGrid {
        TimeGrid::new(100, 340, 4).unwrap()
    }

    fn quiet(mut spec: ClassSpec) -> ClassSpec {
        spec.sowing_jitter = 0.0;
        spec.gain_range = (1.0, 1.0);
        spec.value_noise = 0.0;
        spec
    }

    #[test]
    fn noiseless_profile_is_the_base_curve() {
        let spec = quiet(ClassSpec::corn_like());
        let s = synth_profile(&spec, &grid(), 1).unwrap();
        assert_eq!(s, eval_double_sigmoid(&spec.base, &grid()));
    }

    #[test]
    fn profile_is_seed_deterministic_and_clipped() {
        let mut spec = ClassSpec::cotton_like();
        spec.value_noise = 0.5;
        let a = synth_profile(&spec, &grid(), 9).unwrap();
        assert_eq!(a, synth_profile(&spec, &grid(), 9).unwrap());
        assert_ne!(a, synth_profile(&spec, &grid(), 10).unwrap());
        assert!(a.values().iter().all(|v| (CLIP_LO..=CLIP_HI).contains(v)));
    }

    #[test]
    fn gain_scales_the_base() {
        let mut spec = quiet(ClassSpec::cotton_like());
        spec.gain_range = (1.1, 1.1);
        let s = synth_profile(&spec, &grid(), 3).unwrap();
        let base = eval_double_sigmoid(&spec.base, &grid());
        for (v, b) in s.values().iter().zip(base.values()) {
            assert!((v - 1.1 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn scenario_examples() {
        let s = Series::from_values(0, vec![0.1, 0.5, 0.2, 0.8]);
        assert_eq!(apply_scenario(&s, &Scenario::IDENTITY, 0).unwrap(), s);

        let flat = Series::from_values(0, vec![0.3; 5]);
        let sc = Scenario {
            offset: 0.1,
            ..Scenario::IDENTITY
        };
        for v in apply_scenario(&flat, &sc, 0).unwrap().values() {
            assert!((v - 0.4).abs() < 1e-15);
        }

        // Ramp v = 0.01 * day; delayed 10 days it reads 0.01 * (t - 10).
        let days: Vec<i32> = (0..=100).step_by(5).collect();
        let ramp = Series::clear(days.clone(), days.iter().map(|&d| 0.01 * d as f64).collect()).unwrap();
        let sc = Scenario {
            shift_days: 10.0,
            ..Scenario::IDENTITY
        };
        let target: Vec<i32> = (10..=100).step_by(5).collect();
        let out = apply_scenario_on(&ramp, &sc, &target, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (&t, v) in target.iter().zip(out.values()) {
            assert!((v - 0.01 * (t - 10) as f64).abs() < 1e-12);
        }
        assert!(matches!(apply_scenario(&ramp, &sc, 0), Err(Error::Coverage(_))));
    }

    #[test]
    fn gain_only_scenario_is_invisible_to_vdtw() {
        let spec = ClassSpec::corn_like();
        let s = synth_profile(&spec, &grid(), 4).unwrap();
        let sc = Scenario {
            gain: 1.13,
            ..Scenario::IDENTITY
        };
        let g = apply_scenario(&s, &sc, 0).unwrap();
        let cfg = WarpConfig::default();
        assert!(vdtw(&s, &g, &cfg).unwrap() <= 1e-9);
        assert!(dtw(&s, &g, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn shift_within_band_costs_no_more_than_beyond() {
        let days: Vec<i32> = (0..=200).step_by(5).collect();
        let ramp = |d: i32| ((d as f64 - 60.0) / 80.0).clamp(0.0, 1.0) * 0.6 + 0.2;
        let base = Series::clear(days.clone(), days.iter().map(|&d| ramp(d)).collect()).unwrap();
        let target: Vec<i32> = (40..=160).step_by(5).collect();
        let crop = |shift: f64| {
            let sc = Scenario {
                shift_days: shift,
                ..Scenario::IDENTITY
            };
            apply_scenario_on(&base, &sc, &target, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
        };
        let cfg = WarpConfig::default();
        let reference = crop(0.0);
        let near = vdtw(&reference, &crop(10.0), &cfg).unwrap();
        let far = vdtw(&reference, &crop(30.0), &cfg).unwrap();
        assert!(near <= far, "{near} > {far}");
    }

    #[test]
    fn dataset_counts_and_identity_years() {
        let mut spec = DatasetSpec::two_class(1, grid());
        let (a, b) = generate_dataset(&spec, 5).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.series, y.series);
            assert_eq!(x.field_id, y.field_id);
        }
        spec.n_per_class = 7;
        spec.scenario_b = ScenarioSpec::s4();
        let (a, b) = generate_dataset(&spec, 5).unwrap();
        for class in ["corn", "cotton"] {
            assert_eq!(a.iter().filter(|s| s.label.as_deref() == Some(class)).count(), 7);
            assert_eq!(b.iter().filter(|s| s.label.as_deref() == Some(class)).count(), 7);
        }
        assert_eq!((a.clone(), b.clone()), generate_dataset(&spec, 5).unwrap());
        assert!(a.iter().all(|s| s.series.days() == grid().days()));
    }

    #[test]
    fn default_classes_differ_before_the_joint_plateau() {
        let (a, _) = generate_dataset(&DatasetSpec::two_class(40, grid()), 11).unwrap();
        let median = |class: &str| {
            let members: Vec<&Series> = a
                .iter()
                .filter(|s| s.label.as_deref() == Some(class))
                .map(|s| &s.series)
                .collect();
            median_profile(&members).unwrap()
        };
        let corn = median("corn");
        let cotton = median("cotton");
        let pivot = pivot_day(&corn, &cotton).unwrap();
        // Both crops are near peak around day 235.
        assert!(pivot < 220, "pivot {pivot}");
        let idx = corn.days().iter().position(|&d| d == 236).unwrap();
        assert!((corn.values()[idx] - cotton.values()[idx]).abs() < 0.15);
    }
}
