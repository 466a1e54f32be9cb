//! Scenario definitions shared by the integration tests.
#![allow(dead_code)]

use rses::model::{RsesParams, TwoGroupModel};

pub fn params(p: f64, lambda1: f64, lambda0: f64) -> RsesParams {
    RsesParams::new(p, lambda1, lambda0).unwrap()
}

/// Null scenario with equal stratum hazards and half responders.
pub fn null_equal_hazards() -> TwoGroupModel {
    TwoGroupModel::null(params(0.5, 1.0, 1.0))
}

/// Null scenario with few responders who survive longer (hazard ratio 0.4).
pub fn null_rare_responders() -> TwoGroupModel {
    TwoGroupModel::null(params(0.13, 0.4, 1.0))
}

/// Power scenarios: control has p = 0.13 and responder hazard ratio 0.4.
/// `hazard_factor` scales both experimental hazards.
pub fn power_scenario(p_e: f64, hazard_factor: f64) -> TwoGroupModel {
    TwoGroupModel::new(
        params(p_e, 0.4 * hazard_factor, hazard_factor),
        params(0.13, 0.4, 1.0),
    )
}

pub fn plus_resp_small() -> TwoGroupModel {
    power_scenario(0.26, 1.0)
}

pub fn plus_resp_large() -> TwoGroupModel {
    power_scenario(0.52, 1.0)
}

pub fn plus_resp_plus_surv_small() -> TwoGroupModel {
    power_scenario(0.26, 0.75)
}

pub fn plus_resp_plus_surv_large() -> TwoGroupModel {
    power_scenario(0.52, 0.75)
}

pub fn plus_surv() -> TwoGroupModel {
    power_scenario(0.13, 0.5)
}

pub fn power_scenarios() -> [(&'static str, TwoGroupModel); 5] {
    [
        ("+resp (pE=0.26)", plus_resp_small()),
        ("+resp (pE=0.52)", plus_resp_large()),
        ("+resp +surv (pE=0.26)", plus_resp_plus_surv_small()),
        ("+resp +surv (pE=0.52)", plus_resp_plus_surv_large()),
        ("+surv", plus_surv()),
    ]
}

/// Non-responder hazard of the sample-size grid.
pub const GAMMA: f64 = 0.142;

pub const SAMPLE_SIZE_P_E: [f64; 5] = [0.13, 0.26, 0.39, 0.52, 0.8];

/// Constellation `c` (1 to 6) of the sample-size grid with experimental
/// response probability `p_e`; control response probability is 0.13.
pub fn constellation(c: usize, p_e: f64) -> TwoGroupModel {
    let g = GAMMA;
    // (λ1E, λ0E, λ1C, λ0C)
    let (l1e, l0e, l1c, l0c) = match c {
        1 => (g, g, g, g),
        2 => (g / 2.0, g, g, g),
        3 => (g / 3.0, g, g, g),
        4 => (g / 2.0, g / 2.0, g, g),
        5 => (g / 3.0, g / 2.0, g, g),
        6 => (g / 3.0, g / 2.0, g / 2.0, g),
        _ => panic!("no constellation {c}"),
    };
    TwoGroupModel::new(params(p_e, l1e, l0e), params(0.13, l1c, l0c))
}

/// The 29 cells of the sample-size grid in constellation-major order.
pub fn sample_size_grid() -> Vec<(usize, f64, TwoGroupModel)> {
    let mut cells = Vec::new();
    for c in 1..=6 {
        for &p_e in &SAMPLE_SIZE_P_E {
            if c == 1 && p_e == 0.13 {
                continue;
            }
            cells.push((c, p_e, constellation(c, p_e)));
        }
    }
    cells
}
