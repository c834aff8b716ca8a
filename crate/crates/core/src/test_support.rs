use crate::scenario::{ChannelGains, Network, Point, Scenario, SimConfig};

/// Network with explicit gains, `bandwidth = 1 Hz` so rates are spectral.
pub(crate) fn toy_network(
    num_bs: usize,
    num_channels: usize,
    association: &[usize],
    rates: &[f64],
    noise: f64,
    gain: impl FnMut(usize, usize, usize) -> f64,
) -> Network {
    let mut config = SimConfig::default();
    config.num_channels = num_channels;
    config.bandwidth_hz = 1.0;
    config.num_bs = num_bs;
    config.bs_positions = (0..num_bs).map(|m| Point::new(1000.0 * m as f64, 0.0)).collect();
    let positions = association
        .iter()
        .map(|&m| Point::new(1000.0 * m as f64 + 20.0, 0.0))
        .collect();
    let mut scenario = Scenario::from_parts(config, positions, rates.to_vec()).unwrap();
    scenario.noise_power_w = noise;
    assert_eq!(scenario.association, association);
    let gains = ChannelGains::from_fn(num_bs, num_channels, association.len(), gain).unwrap();
    Network::new(scenario, gains).unwrap()
}

