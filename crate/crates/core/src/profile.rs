//! Named parameter profiles.
//!
//! `paper` follows the published dataset recipe (64-element 16x4 UPA,
//! 48 subcarriers at 28 GHz, 4 users, 100x100 scene grid, 2600 scenarios);
//! `toy` is the desk-scale profile used for end-to-end training runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ArrayGeometry;
use crate::geom::Vec3;
use crate::scene::SceneProfile;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Toy,
    Paper,
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileName::Toy => "toy",
            ProfileName::Paper => "paper",
        })
    }
}

impl FromStr for ProfileName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "toy" => Ok(ProfileName::Toy),
            "paper" => Ok(ProfileName::Paper),
            other => Err(Error::InvalidArgument(format!("unknown profile '{other}'"))),
        }
    }
}

/// Everything needed to synthesize a dataset deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub profile: ProfileName,
    pub array: ArrayGeometry,
    pub users: usize,
    pub pilots_ce: usize,
    pub pilots_loc: usize,
    pub data_len: usize,
    pub code_n: usize,
    pub code_m: usize,
    /// Design E_b/N_0 (dB) for the frozen-set construction.
    pub code_design_ebn0_db: f64,
    pub grid: usize,
    pub snr_ce_db: f64,
    pub snr_loc_db: f64,
    pub snr_det_db: f64,
    pub snr_pre_db: f64,
    /// E_b/N_0 values cycled through when drawing decoding samples.
    pub ebn0_db: Vec<f64>,
    pub p_max: f64,
    pub scenarios: usize,
    pub samples_per_scenario: usize,
    /// Validation and test fractions of the scenario count.
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub scene: SceneProfile,
}

impl SystemParams {
    pub fn toy() -> Self {
        Self {
            profile: ProfileName::Toy,
            array: ArrayGeometry::half_wavelength(4, 4, 28e9, 8, 1.8e3),
            users: 2,
            pilots_ce: 2,
            pilots_loc: 4,
            data_len: 2,
            code_n: 16,
            code_m: 8,
            code_design_ebn0_db: 5.0,
            grid: 32,
            snr_ce_db: 10.0,
            snr_loc_db: 10.0,
            snr_det_db: 10.0,
            snr_pre_db: 10.0,
            ebn0_db: vec![4.0, 5.0, 6.0],
            p_max: 1.0,
            scenarios: 250,
            samples_per_scenario: 10,
            val_fraction: 0.1,
            test_fraction: 0.1,
            scene: SceneProfile::paper(),
        }
    }

    pub fn paper() -> Self {
        Self {
            profile: ProfileName::Paper,
            array: ArrayGeometry::half_wavelength(16, 4, 28e9, 48, 1.8e3),
            users: 4,
            pilots_ce: 4,
            pilots_loc: 8,
            data_len: 2,
            code_n: 64,
            code_m: 32,
            code_design_ebn0_db: 5.0,
            grid: 100,
            snr_ce_db: 10.0,
            snr_loc_db: 10.0,
            snr_det_db: 10.0,
            snr_pre_db: 10.0,
            ebn0_db: vec![4.0, 5.0, 6.0],
            p_max: 1.0,
            scenarios: 2600,
            samples_per_scenario: 50,
            val_fraction: 300.0 / 2600.0,
            test_fraction: 300.0 / 2600.0,
            scene: SceneProfile::paper(),
        }
    }

    pub fn for_profile(name: ProfileName) -> Self {
        match name {
            ProfileName::Toy => Self::toy(),
            ProfileName::Paper => Self::paper(),
        }
    }

    pub fn n_t(&self) -> usize {
        self.array.n_t()
    }

    pub fn bs_pos(&self) -> Vec3 {
        self.scene.bs_pos
    }

    /// (train, val, test) scenario counts.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        split_sizes(self.scenarios, self.val_fraction, self.test_fraction)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.users == 0 || self.users > self.n_t() {
            return bad(format!("users must be in 1..={}", self.n_t()));
        }
        for (name, lp) in [("pilots_ce", self.pilots_ce), ("pilots_loc", self.pilots_loc)] {
            if lp == 0 || lp > self.n_t() {
                return bad(format!("{name} must be in 1..={}", self.n_t()));
            }
        }
        if !self.code_n.is_power_of_two() || self.code_m == 0 || self.code_m >= self.code_n {
            return bad(format!("invalid polar code ({}, {})", self.code_n, self.code_m));
        }
        if self.scenarios == 0 || self.samples_per_scenario == 0 {
            return bad("scenario and sample counts must be positive".into());
        }
        if self.grid < 8 {
            return bad("scene grid must be at least 8".into());
        }
        if self.ebn0_db.is_empty() {
            return bad("ebn0_db must not be empty".into());
        }
        Ok(())
    }
}

pub fn split_sizes(scenarios: usize, val_fraction: f64, test_fraction: f64) -> (usize, usize, usize) {
    let val = (scenarios as f64 * val_fraction).round() as usize;
    let test = (scenarios as f64 * test_fraction).round() as usize;
    let train = scenarios.saturating_sub(val + test);
    (train, val, test)
}
