#![allow(dead_code)]

use musefm_core::datastore::generate_dataset;
use musefm_core::phytasks::PilotSelection;
use musefm_core::profile::SystemParams;
use musefm_core::scene::SceneGraph;
use musefm_model::{ModelConfig, TaskSamples};

/// Two-block config small enough for exhaustive finite differences.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        d: 8,
        layers: 2,
        heads: 2,
        n_t: 8,
        subcarriers: 2,
        users: 2,
        pilots_ce: 2,
        pilots_loc: 2,
        data_len: 2,
        code_n: 8,
        code_m: 4,
        grid: 8,
        patch: 4,
        scene_dim: 8,
        scene_depth: 1,
        scene_heads: 2,
        hyper_emb: 4,
        hyper_hidden: vec![6],
        mlp_ratio: 2,
        seq_cap: 32,
    }
}

pub fn tiny_params() -> SystemParams {
    let mut p = SystemParams::toy();
    p.scenarios = 10;
    p.samples_per_scenario = 2;
    p
}

pub struct Splits {
    pub params: SystemParams,
    pub train: TaskSamples,
    pub val: TaskSamples,
    pub test: TaskSamples,
}

pub fn tiny_splits() -> Splits {
    let params = tiny_params();
    let ds = generate_dataset(&params, 0, PilotSelection::Even).unwrap();
    Splits {
        train: TaskSamples::from_bundles(&ds.train, &params).unwrap(),
        val: TaskSamples::from_bundles(&ds.val, &params).unwrap(),
        test: TaskSamples::from_bundles(&ds.test, &params).unwrap(),
        params,
    }
}

pub fn one_obstacle(w: usize) -> SceneGraph {
    let mut g = SceneGraph::zeros(w);
    for r in w / 4..w / 2 {
        for c in w / 4..w / 2 {
            g.set(r, c, 1);
        }
    }
    g
}
