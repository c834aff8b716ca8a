//! Network instance generation: BS/user geometry, target rates, nearest-BS
//! association, log-distance path loss and i.i.d. Rayleigh fading.
//!
//! Everything here is a pure function of `(config, seed)`. Scenario geometry and
//! fading are drawn from separate seeds so a harness can redraw one while
//! keeping the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Upper bound on position draws per user before giving up.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// A point in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Where users are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum UserRegion {
    /// Uniform over the whole `area` rectangle.
    #[default]
    Area,
    /// Uniform over a disc centered in `area`.
    Disc { radius_m: f64 },
}

/// Simulation parameters. Maps 1:1 onto the `[scenario]` table of an
/// experiment config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub num_bs: usize,
    pub num_users: usize,
    pub num_channels: usize,
    /// Width and height of the deployment rectangle anchored at the origin.
    pub area_m: [f64; 2],
    pub bs_positions: Vec<Point>,
    pub min_user_bs_distance_m: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub rate_range_bps: [f64; 2],
    #[serde(default)]
    pub user_region: UserRegion,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    /// Four BSs on a 2x2 grid in a 1 km square, 50 users, 10 subchannels.
    fn default() -> Self {
        let area_m = [1000.0, 1000.0];
        Self {
            num_bs: 4,
            num_users: 50,
            num_channels: 10,
            area_m,
            bs_positions: grid_layout(4, area_m),
            min_user_bs_distance_m: 15.0,
            bandwidth_hz: 200e3,
            noise_psd_dbm_per_hz: -174.0,
            rate_range_bps: [60e3, 600e3],
            user_region: UserRegion::Area,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// A single BS at the center of the area.
    pub fn single_cell(num_users: usize, num_channels: usize) -> Self {
        let mut config = Self::default();
        config.set_num_bs(1);
        config.num_users = num_users;
        config.num_channels = num_channels;
        config
    }

    /// Replaces the BS layout with a `num_bs` grid over the area.
    pub fn set_num_bs(&mut self, num_bs: usize) {
        self.num_bs = num_bs;
        self.bs_positions = grid_layout(num_bs, self.area_m);
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bs == 0 {
            return Err(invalid("num_bs must be positive"));
        }
        if self.num_bs != self.bs_positions.len() {
            return Err(invalid(format!(
                "num_bs = {} but {} BS positions given",
                self.num_bs,
                self.bs_positions.len()
            )));
        }
        if self.num_channels == 0 {
            return Err(invalid("num_channels must be positive"));
        }
        if !(self.area_m[0] > 0.0 && self.area_m[1] > 0.0) {
            return Err(invalid("area must have positive width and height"));
        }
        if !(self.min_user_bs_distance_m > 0.0) {
            return Err(invalid("min_user_bs_distance_m must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(invalid("bandwidth_hz must be positive"));
        }
        let [lo, hi] = self.rate_range_bps;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid(format!("bad rate range [{lo}, {hi}]")));
        }
        if let UserRegion::Disc { radius_m } = self.user_region {
            if !(radius_m > 0.0) {
                return Err(invalid("disc radius must be positive"));
            }
        }
        Ok(())
    }
}

/// BS positions at the cell centers of a near-square grid, row-major.
///
/// Four BSs in a 1000 m square land on (250, 250), (750, 250), (250, 750)
/// and (750, 750); a single BS sits at the center.
pub fn grid_layout(num_bs: usize, area_m: [f64; 2]) -> Vec<Point> {
    if num_bs == 0 {
        return Vec::new();
    }
    let cols = (num_bs as f64).sqrt().ceil() as usize;
    let rows = num_bs.div_ceil(cols);
    let (dx, dy) = (area_m[0] / cols as f64, area_m[1] / rows as f64);
    (0..num_bs)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            Point::new((c as f64 + 0.5) * dx, (r as f64 + 0.5) * dy)
        })
        .collect()
}

/// Path loss in dB at `distance_m`: `128.1 + 37.6 log10(d / 1 km)`.
pub fn path_loss_db(distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(invalid(format!("distance must be positive, got {distance_m}")));
    }
    Ok(128.1 + 37.6 * (distance_m / 1000.0).log10())
}

/// Thermal noise power over `bandwidth_hz`, watts.
pub fn noise_power_w(bandwidth_hz: f64, noise_psd_dbm_per_hz: f64) -> f64 {
    debug_assert!(bandwidth_hz > 0.0);
    10f64.powf((noise_psd_dbm_per_hz - 30.0) / 10.0) * bandwidth_hz
}

/// One drawn network: user positions, targets and association.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub user_positions: Vec<Point>,
    pub target_rates_bps: Vec<f64>,
    /// BS index of each user.
    pub association: Vec<usize>,
    pub noise_power_w: f64,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn num_bs(&self) -> usize {
        self.config.bs_positions.len()
    }

    pub fn num_channels(&self) -> usize {
        self.config.num_channels
    }

    pub fn distance(&self, bs: usize, user: usize) -> f64 {
        self.config.bs_positions[bs].distance(&self.user_positions[user])
    }

    /// Builds a scenario from explicit positions and rates (association is
    /// recomputed). Mostly for tests and hand-made instances.
    pub fn from_parts(
        config: SimConfig,
        user_positions: Vec<Point>,
        target_rates_bps: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        if user_positions.len() != target_rates_bps.len() {
            return Err(invalid("one target rate per user required"));
        }
        let association = user_positions
            .iter()
            .map(|p| nearest_bs(&config.bs_positions, p))
            .collect();
        let noise = noise_power_w(config.bandwidth_hz, config.noise_psd_dbm_per_hz);
        let mut config = config;
        config.num_users = user_positions.len();
        Ok(Self {
            config,
            user_positions,
            target_rates_bps,
            association,
            noise_power_w: noise,
        })
    }
}

/// Lowest-index BS among the nearest ones.
fn nearest_bs(bs_positions: &[Point], p: &Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (m, bs) in bs_positions.iter().enumerate() {
        let d = bs.distance(p);
        if d < best_d {
            best = m;
            best_d = d;
        }
    }
    best
}

/// Drops users uniformly, rejecting positions closer than the minimum
/// distance to any BS, and draws target rates uniformly over the range.
pub fn generate_scenario(config: &SimConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [w, h] = config.area_m;
    let center = Point::new(w / 2.0, h / 2.0);

    let mut positions = Vec::with_capacity(config.num_users);
    for user in 0..config.num_users {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = match config.user_region {
                UserRegion::Area => Point::new(rng.random::<f64>() * w, rng.random::<f64>() * h),
                UserRegion::Disc { radius_m } => {
                    let r = radius_m * rng.random::<f64>().sqrt();
                    let theta = std::f64::consts::TAU * rng.random::<f64>();
                    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
                }
            };
            if config
                .bs_positions
                .iter()
                .all(|bs| bs.distance(&p) >= config.min_user_bs_distance_m)
            {
                placed = Some(p);
                break;
            }
        }
        match placed {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::GenerationFailure {
                    user,
                    min_distance_m: config.min_user_bs_distance_m,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                })
            }
        }
    }

    let [lo, hi] = config.rate_range_bps;
    let rates = (0..config.num_users)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect();

    Scenario::from_parts(config.clone(), positions, rates)
}

/// Small-scale fading law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    /// `|beta|^2` with `beta ~ CN(0, 1)`.
    #[default]
    Rayleigh,
    /// `|beta|^2 = 1`; path loss only.
    None,
}

/// Linear power gains `|H|^2` indexed `[bs][channel][user]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    num_bs: usize,
    num_channels: usize,
    num_users: usize,
    data: Vec<f64>,
}

impl ChannelGains {
    pub fn from_fn(
        num_bs: usize,
        num_channels: usize,
        num_users: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(num_bs * num_channels * num_users);
        for m in 0..num_bs {
            for g in 0..num_channels {
                for n in 0..num_users {
                    let v = f(m, g, n);
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(invalid(format!("gain[{m}][{g}][{n}] = {v} is not positive")));
                    }
                    data.push(v);
                }
            }
        }
        Ok(Self {
            num_bs,
            num_channels,
            num_users,
            data,
        })
    }

    #[inline]
    pub fn get(&self, bs: usize, channel: usize, user: usize) -> f64 {
        self.data[(bs * self.num_channels + channel) * self.num_users + user]
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }
}

pub fn draw_channel_gains(scenario: &Scenario, seed: u64) -> ChannelGains {
    draw_channel_gains_with(scenario, seed, Fading::Rayleigh)
}

pub fn draw_channel_gains_with(scenario: &Scenario, seed: u64, fading: Fading) -> ChannelGains {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path_gain: Vec<Vec<f64>> = (0..scenario.num_bs())
        .map(|m| {
            (0..scenario.num_users())
                .map(|n| {
                    // generation guarantees d >= min distance > 0
                    let pl = path_loss_db(scenario.distance(m, n)).expect("positive distance");
                    10f64.powf(-pl / 10.0)
                })
                .collect()
        })
        .collect();
    ChannelGains::from_fn(
        scenario.num_bs(),
        scenario.num_channels(),
        scenario.num_users(),
        |m, _g, n| {
            let beta_sq = match fading {
                Fading::Rayleigh => rayleigh_power(&mut rng),
                Fading::None => 1.0,
            };
            path_gain[m][n] * beta_sq
        },
    )
    .expect("path gains and fading draws are positive")
}

/// `|beta|^2` for `beta ~ CN(0, 1)`, never exactly zero.
fn rayleigh_power(rng: &mut impl Rng) -> f64 {
    loop {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let v = 0.5 * (re * re + im * im);
        if v > 0.0 {
            return v;
        }
    }
}

/// Scenario plus gains plus the derived per-user quantities every solver needs.
#[derive(Debug, Clone)]
pub struct Network {
    scenario: Scenario,
    gains: ChannelGains,
    spectral_rates: Vec<f64>,
    users_of_bs: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(scenario: Scenario, gains: ChannelGains) -> Result<Self> {
        if gains.num_bs() != scenario.num_bs()
            || gains.num_channels() != scenario.num_channels()
            || gains.num_users() != scenario.num_users()
        {
            return Err(invalid("gain table shape does not match scenario"));
        }
        let bandwidth = scenario.config.bandwidth_hz;
        let spectral_rates = scenario
            .target_rates_bps
            .iter()
            .map(|r| r / bandwidth)
            .collect();
        let mut users_of_bs = vec![Vec::new(); scenario.num_bs()];
        for (n, &m) in scenario.association.iter().enumerate() {
            users_of_bs[m].push(n);
        }
        Ok(Self {
            scenario,
            gains,
            spectral_rates,
            users_of_bs,
        })
    }

    /// Generates geometry with `scenario_seed` and fading with `fading_seed`.
    pub fn generate(config: &SimConfig, scenario_seed: u64, fading_seed: u64) -> Result<Self> {
        let scenario = generate_scenario(config, scenario_seed)?;
        let gains = draw_channel_gains(&scenario, fading_seed);
        Self::new(scenario, gains)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn gains(&self) -> &ChannelGains {
        &self.gains
    }

    #[inline]
    pub fn gain(&self, bs: usize, channel: usize, user: usize) -> f64 {
        self.gains.get(bs, channel, user)
    }

    pub fn num_users(&self) -> usize {
        self.scenario.num_users()
    }

    pub fn num_bs(&self) -> usize {
        self.scenario.num_bs()
    }

    pub fn num_channels(&self) -> usize {
        self.scenario.num_channels()
    }

    pub fn noise_power_w(&self) -> f64 {
        self.scenario.noise_power_w
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.scenario.config.bandwidth_hz
    }

    /// Target rate of `user` in bit/s/Hz.
    #[inline]
    pub fn spectral_rate(&self, user: usize) -> f64 {
        self.spectral_rates[user]
    }

    pub fn spectral_rates(&self) -> &[f64] {
        &self.spectral_rates
    }

    pub fn bs_of(&self, user: usize) -> usize {
        self.scenario.association[user]
    }

    /// Users associated with `bs`, ascending id.
    pub fn users_of_bs(&self, bs: usize) -> &[usize] {
        &self.users_of_bs[bs]
    }

    /// Same network with one user's target rate replaced.
    pub fn with_target_rate(&self, user: usize, rate_bps: f64) -> Self {
        let mut out = self.clone();
        out.scenario.target_rates_bps[user] = rate_bps;
        out.spectral_rates[user] = rate_bps / out.bandwidth_hz();
        out
    }
}
