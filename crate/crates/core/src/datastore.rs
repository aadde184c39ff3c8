//! Deterministic on-disk dataset container.
//!
//! Layout under the dataset root:
//!
//! ```text
//! manifest.json
//! train/ val/ test/
//!     scenes.u8      [S, W, W] scene graphs
//!     scenes.json    scene geometry
//!     channels.f64   h [S, J, K, M, N_t, 2], scale [S, J, K], pos [S, J, K, 3]
//!     ce.f64         y [S, J, K, L_ce, M, 2], sel [S, J, K, L_ce]
//!     loc.f64        y [S, J, K, L_loc, M, 2], sel [S, J, K, L_loc], pos [S, J, K, 2]
//!     det.f64        h [S, J, N_t, K, 2], y [S, J, N_t, L_d, 2], x [S, J, K, L_d, 2], subcarrier [S, J]
//!     pre.f64        h_true, h_noisy [S, J, N_t, K, 2], sigma2 [S, J], subcarrier [S, J]
//!     dec.f64        s_hat [S, J, n], s_tilde [S, J, 2n - m], ebn0 [S, J]
//!     dec.u8         b [S, J, m], z_tilde [S, J, n]
//! ```
//!
//! Reals are little-endian IEEE-754 binary64, complex values are interleaved
//! `(re, im)`, every array is row-major. `S` is the number of scenarios in
//! the split and `J` the drops per scenario. Each file carries a CRC-64/XZ
//! checksum in the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};

use crate::channel::{assemble_channel, normalize_channel, ChannelTensor};
use crate::geom::Vec3;
use crate::phytasks::{
    make_decoding_sample, make_detection_sample, make_localization_sample, make_pilot_obs_with,
    make_precoding_sample, random_bits, DecodingSample, DetectionSample,
    LocalizationSample, PilotObservation, PilotSelection, PrecodingSample,
};
use crate::polar::PolarCode;
use crate::profile::SystemParams;
use crate::propagation::trace_paths;
use crate::scene::{generate_scene, rasterize, sample_user_positions, Scene, SceneGraph};
use crate::seed::{mix, scenario_seed, splitmix64, stream_seed, Stream};
use crate::{CMat, Error, Result, C64};

pub const FORMAT_VERSION: u32 = 1;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const USER_REDRAWS: u64 = 100;

pub fn crc64(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayRecord {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub byte_offset: usize,
    /// Path relative to the dataset root.
    pub file: String,
}

impl ArrayRecord {
    pub fn byte_len(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub file: String,
    pub bytes: usize,
    /// CRC-64/XZ as 16 lowercase hex digits.
    pub crc64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRange {
    pub start: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub profile: String,
    pub scenarios: usize,
    pub samples_per_scenario: usize,
    pub master_seed: u64,
    pub pilot_selection: PilotSelection,
    pub splits: BTreeMap<Split, SplitRange>,
    pub params: SystemParams,
    pub arrays: Vec<ArrayRecord>,
    pub files: Vec<FileRecord>,
}

/// One channel drop inside a scenario: K users and their task samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    pub positions: Vec<Vec3>,
    pub channels: ChannelTensor,
    pub ce: Vec<PilotObservation>,
    pub loc: Vec<LocalizationSample>,
    pub det: DetectionSample,
    pub pre: PrecodingSample,
    pub dec: DecodingSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub index: usize,
    pub scene: Scene,
    pub graph: SceneGraph,
    pub drops: Vec<Drop>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<ScenarioBundle>,
    pub val: Vec<ScenarioBundle>,
    pub test: Vec<ScenarioBundle>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[ScenarioBundle] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Contiguous scenario ranges: train first, then validation, then test.
pub fn split_ranges(params: &SystemParams) -> BTreeMap<Split, SplitRange> {
    let (train, val, test) = params.split_sizes();
    BTreeMap::from([
        (Split::Train, SplitRange { start: 0, count: train }),
        (Split::Val, SplitRange { start: train, count: val }),
        (Split::Test, SplitRange { start: train + val, count: test }),
    ])
}

fn drop_seed(scenario: u64, stream: Stream, drop: usize) -> u64 {
    stream_seed(scenario, stream, drop as u64)
}

fn pick_subcarrier(seed: u64, m: usize) -> usize {
    (splitmix64(seed) % m as u64) as usize
}

/// Every random quantity of scenario `index` is a function of
/// `(master_seed, index, params)` only.
pub fn regenerate_scenario(
    master_seed: u64,
    index: usize,
    params: &SystemParams,
    selection: PilotSelection,
) -> Result<ScenarioBundle> {
    params.validate()?;
    let code = PolarCode::design(params.code_n, params.code_m, params.code_design_ebn0_db)?;
    let s_seed = scenario_seed(master_seed, index as u64);
    let scene = generate_scene(stream_seed(s_seed, Stream::Scene, 0), &params.scene)?;
    let graph = rasterize(&scene, params.grid);
    let geom = &params.array;
    let k = params.users;
    let mut drops = Vec::with_capacity(params.samples_per_scenario);
    for j in 0..params.samples_per_scenario {
        let (positions, h) = draw_users(&scene, params, drop_seed(s_seed, Stream::Users, j))?;
        let mut channels = ChannelTensor { h: Vec::with_capacity(k), scale: Vec::with_capacity(k) };
        for mut hk in h {
            let scale = normalize_channel(&mut hk)
                .ok_or(Error::SamplingExhausted { what: "user with a non-zero channel", attempts: 1 })?;
            channels.h.push(hk);
            channels.scale.push(scale);
        }
        let mut ce = Vec::with_capacity(k);
        let mut loc = Vec::with_capacity(k);
        for u in 0..k {
            let idx = j * k + u;
            let mut obs = make_pilot_obs_with(
                &channels.h[u],
                params.pilots_ce,
                params.snr_ce_db,
                drop_seed(s_seed, Stream::Pilot, idx),
                selection,
            )?;
            obs.user = u;
            ce.push(obs);
            let mut l = make_localization_sample(
                &channels.h[u],
                positions[u],
                params.pilots_loc,
                params.snr_loc_db,
                drop_seed(s_seed, Stream::Localization, idx),
            )?;
            l.obs.user = u;
            loc.push(l);
        }
        let m_total = geom.subcarriers;
        let det_seed = drop_seed(s_seed, Stream::Detection, j);
        let det_m = pick_subcarrier(det_seed, m_total);
        let mut det =
            make_detection_sample(&channels.subcarrier(det_m), params.data_len, params.snr_det_db, mix(det_seed, 1))?;
        det.subcarrier = det_m;
        let pre_seed = drop_seed(s_seed, Stream::Precoding, j);
        let pre_m = pick_subcarrier(pre_seed, m_total);
        let mut pre = make_precoding_sample(&channels.subcarrier(pre_m), params.snr_pre_db, params.p_max, mix(pre_seed, 1));
        pre.subcarrier = pre_m;
        let dec_seed = drop_seed(s_seed, Stream::Decoding, j);
        let global = index * params.samples_per_scenario + j;
        let ebn0 = params.ebn0_db[global % params.ebn0_db.len()];
        let dec = make_decoding_sample(&random_bits(code.m(), dec_seed), &code, ebn0, mix(dec_seed, 1))?;
        drops.push(Drop { positions, channels, ce, loc, det, pre, dec });
    }
    Ok(ScenarioBundle { index, scene, graph, drops })
}

/// Drops K users; the whole set is redrawn while any user has no path.
fn draw_users(scene: &Scene, params: &SystemParams, seed: u64) -> Result<(Vec<Vec3>, Vec<CMat>)> {
    for attempt in 0..USER_REDRAWS {
        let positions = sample_user_positions(scene, params.users, mix(seed, attempt))?;
        let lists: Vec<_> = positions.iter().map(|&p| trace_paths(scene, params.bs_pos(), p, 1)).collect();
        if lists.iter().all(|l| !l.paths.is_empty()) {
            let h = lists.iter().map(|l| assemble_channel(l, &params.array)).collect();
            return Ok((positions, h));
        }
    }
    Err(Error::SamplingExhausted { what: "user drop with at least one path per user", attempts: USER_REDRAWS as usize })
}

/// Generates all scenarios, spreading them over the available cores. The
/// result does not depend on the thread count.
pub fn generate_dataset(params: &SystemParams, master_seed: u64, selection: PilotSelection) -> Result<Dataset> {
    params.validate()?;
    let splits = split_ranges(params);
    let total = params.scenarios;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(total.max(1));
    let chunk = total.div_ceil(threads.max(1)).max(1);
    let mut all: Vec<ScenarioBundle> = Vec::with_capacity(total);
    if threads <= 1 {
        for i in 0..total {
            all.push(regenerate_scenario(master_seed, i, params, selection)?);
        }
    } else {
        let parts: Vec<Result<Vec<ScenarioBundle>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..total)
                .step_by(chunk)
                .map(|start| {
                    s.spawn(move || {
                        (start..(start + chunk).min(total))
                            .map(|i| regenerate_scenario(master_seed, i, params, selection))
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("generation thread panicked")).collect()
        });
        for p in parts {
            all.extend(p?);
        }
    }
    let take = |s: Split, all: &mut Vec<ScenarioBundle>| -> Vec<ScenarioBundle> {
        let r = &splits[&s];
        all.drain(..r.count).collect()
    };
    let train = take(Split::Train, &mut all);
    let val = take(Split::Val, &mut all);
    let test = take(Split::Test, &mut all);
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        profile: params.profile.to_string(),
        scenarios: total,
        samples_per_scenario: params.samples_per_scenario,
        master_seed,
        pilot_selection: selection,
        splits,
        params: params.clone(),
        arrays: Vec::new(),
        files: Vec::new(),
    };
    Ok(Dataset { manifest, train, val, test })
}

/// Checks a stored scenario against a fresh regeneration.
pub fn verify_scenario(stored: &ScenarioBundle, master_seed: u64, params: &SystemParams, selection: PilotSelection) -> Result<()> {
    let fresh = regenerate_scenario(master_seed, stored.index, params, selection)?;
    let mismatch = |what: &str| Err(Error::RegenerationMismatch { index: stored.index, what: what.into() });
    if fresh.scene != stored.scene {
        return mismatch("scene");
    }
    if fresh.graph != stored.graph {
        return mismatch("scene graph");
    }
    if fresh.drops != stored.drops {
        return mismatch("drops");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Encoding

#[derive(Default)]
struct FileBuf {
    bytes: Vec<u8>,
    records: Vec<ArrayRecord>,
}

impl FileBuf {
    fn begin(&mut self, file: &str, name: &str, dtype: DType, shape: Vec<usize>) -> usize {
        let offset = self.bytes.len();
        self.records.push(ArrayRecord { name: name.into(), dtype, shape, byte_offset: offset, file: file.into() });
        offset
    }

    fn finish(&self, start: usize) -> Result<()> {
        let rec = self.records.last().expect("array started");
        if self.bytes.len() - start != rec.byte_len() {
            return Err(Error::ShapeMismatch(format!(
                "array {} holds {} bytes, shape {:?} needs {}",
                rec.name,
                self.bytes.len() - start,
                rec.shape,
                rec.byte_len()
            )));
        }
        Ok(())
    }

    fn f64s(&mut self, file: &str, name: &str, shape: Vec<usize>, data: impl IntoIterator<Item = f64>) -> Result<()> {
        let start = self.begin(file, name, DType::F64, shape);
        for v in data {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.finish(start)
    }

    fn u8s(&mut self, file: &str, name: &str, shape: Vec<usize>, data: impl IntoIterator<Item = u8>) -> Result<()> {
        let start = self.begin(file, name, DType::U8, shape);
        self.bytes.extend(data);
        self.finish(start)
    }
}

fn cplx(c: &C64) -> [f64; 2] {
    [c.re, c.im]
}

/// Row-major interleaved entries of `m`.
fn cmat_rows(m: &CMat) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).flat_map(move |c| cplx(&m[(r, c)])))
}

/// Row-major interleaved entries of `m^T` (columns outermost).
fn cmat_cols(m: &CMat) -> impl Iterator<Item = f64> + '_ {
    (0..m.ncols()).flat_map(move |c| (0..m.nrows()).flat_map(move |r| cplx(&m[(r, c)])))
}

fn split_files(split: &[ScenarioBundle], p: &SystemParams, dir: &str) -> Result<Vec<(String, FileBuf)>> {
    let s = split.len();
    let j = p.samples_per_scenario;
    let (k, m, nt, w) = (p.users, p.array.subcarriers, p.n_t(), p.grid);
    let (lce, lloc, ld) = (p.pilots_ce, p.pilots_loc, p.data_len);
    let (n, cm) = (p.code_n, p.code_m);
    let drops = || split.iter().flat_map(|b| b.drops.iter());
    let path = |f: &str| format!("{dir}/{f}");

    let mut scenes = FileBuf::default();
    let f = path("scenes.u8");
    scenes.u8s(&f, "scenes", vec![s, w, w], split.iter().flat_map(|b| b.graph.grid.iter().copied()))?;

    let mut ch = FileBuf::default();
    let f = path("channels.f64");
    ch.f64s(&f, "channels.h", vec![s, j, k, m, nt, 2], drops().flat_map(|d| d.channels.h.iter().flat_map(cmat_cols)))?;
    ch.f64s(&f, "channels.scale", vec![s, j, k], drops().flat_map(|d| d.channels.scale.iter().copied()))?;
    ch.f64s(&f, "channels.pos", vec![s, j, k, 3], drops().flat_map(|d| d.positions.iter().flat_map(|q| [q.x, q.y, q.z])))?;

    let mut ce = FileBuf::default();
    let f = path("ce.f64");
    ce.f64s(&f, "ce.y", vec![s, j, k, lce, m, 2], drops().flat_map(|d| d.ce.iter().flat_map(|o| cmat_rows(&o.y))))?;
    ce.f64s(&f, "ce.sel", vec![s, j, k, lce], drops().flat_map(|d| d.ce.iter().flat_map(|o| o.selection.iter().map(|&v| v as f64))))?;

    let mut loc = FileBuf::default();
    let f = path("loc.f64");
    loc.f64s(&f, "loc.y", vec![s, j, k, lloc, m, 2], drops().flat_map(|d| d.loc.iter().flat_map(|o| cmat_rows(&o.obs.y))))?;
    loc.f64s(&f, "loc.sel", vec![s, j, k, lloc], drops().flat_map(|d| d.loc.iter().flat_map(|o| o.obs.selection.iter().map(|&v| v as f64))))?;
    loc.f64s(&f, "loc.pos", vec![s, j, k, 2], drops().flat_map(|d| d.loc.iter().flat_map(|o| o.pos)))?;

    let mut det = FileBuf::default();
    let f = path("det.f64");
    det.f64s(&f, "det.h", vec![s, j, nt, k, 2], drops().flat_map(|d| cmat_rows(&d.det.h)))?;
    det.f64s(&f, "det.y", vec![s, j, nt, ld, 2], drops().flat_map(|d| cmat_rows(&d.det.y)))?;
    det.f64s(&f, "det.x", vec![s, j, k, ld, 2], drops().flat_map(|d| cmat_rows(&d.det.x)))?;
    det.f64s(&f, "det.subcarrier", vec![s, j], drops().map(|d| d.det.subcarrier as f64))?;

    let mut pre = FileBuf::default();
    let f = path("pre.f64");
    pre.f64s(&f, "pre.h_true", vec![s, j, nt, k, 2], drops().flat_map(|d| cmat_rows(&d.pre.h_true)))?;
    pre.f64s(&f, "pre.h_noisy", vec![s, j, nt, k, 2], drops().flat_map(|d| cmat_rows(&d.pre.h_noisy)))?;
    pre.f64s(&f, "pre.sigma2", vec![s, j], drops().map(|d| d.pre.sigma2))?;
    pre.f64s(&f, "pre.subcarrier", vec![s, j], drops().map(|d| d.pre.subcarrier as f64))?;

    let mut decf = FileBuf::default();
    let f = path("dec.f64");
    decf.f64s(&f, "dec.s_hat", vec![s, j, n], drops().flat_map(|d| d.dec.s_hat.iter().copied()))?;
    decf.f64s(&f, "dec.s_tilde", vec![s, j, 2 * n - cm], drops().flat_map(|d| d.dec.s_tilde.iter().copied()))?;
    decf.f64s(&f, "dec.ebn0", vec![s, j], drops().map(|d| d.dec.ebn0_db))?;
    let mut decb = FileBuf::default();
    let f = path("dec.u8");
    decb.u8s(&f, "dec.b", vec![s, j, cm], drops().flat_map(|d| d.dec.b.iter().copied()))?;
    decb.u8s(&f, "dec.z_tilde", vec![s, j, n], drops().flat_map(|d| d.dec.z_tilde.iter().copied()))?;

    Ok(vec![
        (path("scenes.u8"), scenes),
        (path("channels.f64"), ch),
        (path("ce.f64"), ce),
        (path("loc.f64"), loc),
        (path("det.f64"), det),
        (path("pre.f64"), pre),
        (path("dec.f64"), decf),
        (path("dec.u8"), decb),
    ])
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the dataset under `root`, filling in array and checksum records.
/// Returns the manifest as written.
pub fn write_dataset(root: &Path, ds: &Dataset) -> Result<DatasetManifest> {
    let mut manifest = ds.manifest.clone();
    let p = &manifest.params;
    for (split, bundles) in [(Split::Train, &ds.train), (Split::Val, &ds.val), (Split::Test, &ds.test)] {
        if bundles.len() != manifest.splits[&split].count {
            return Err(Error::Manifest(format!("{} split holds {} scenarios", split.dir(), bundles.len())));
        }
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut arrays = Vec::new();
    let mut files = Vec::new();
    for (split, bundles) in [(Split::Train, &ds.train), (Split::Val, &ds.val), (Split::Test, &ds.test)] {
        let dir = root.join(split.dir());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (rel, buf) in split_files(bundles, p, split.dir())? {
            write_file(&root.join(&rel), &buf.bytes)?;
            files.push(FileRecord { file: rel, bytes: buf.bytes.len(), crc64: format!("{:016x}", crc64(&buf.bytes)) });
            arrays.extend(buf.records);
        }
        let scenes: Vec<&Scene> = bundles.iter().map(|b| &b.scene).collect();
        let rel = format!("{}/scenes.json", split.dir());
        let bytes = serde_json::to_vec(&scenes)?;
        write_file(&root.join(&rel), &bytes)?;
        files.push(FileRecord { file: rel, bytes: bytes.len(), crc64: format!("{:016x}", crc64(&bytes)) });
    }
    manifest.arrays = arrays;
    manifest.files = files;
    let text = serde_json::to_string_pretty(&manifest)?;
    write_file(&root.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Decoding

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: manifest.format_version, expected: FORMAT_VERSION });
    }
    Ok(manifest)
}

struct Loaded {
    files: BTreeMap<String, Vec<u8>>,
    records: BTreeMap<(String, String), ArrayRecord>,
}

impl Loaded {
    fn raw(&self, file: &str, name: &str, dtype: DType, shape: &[usize]) -> Result<&[u8]> {
        let rec = self
            .records
            .get(&(file.to_string(), name.to_string()))
            .ok_or_else(|| Error::Manifest(format!("array {name} missing from {file}")))?;
        if rec.dtype != dtype || rec.shape != shape {
            return Err(Error::Manifest(format!(
                "array {name} in {file} has {:?} {:?}, expected {:?} {:?}",
                rec.dtype, rec.shape, dtype, shape
            )));
        }
        let bytes = &self.files[file];
        bytes
            .get(rec.byte_offset..rec.byte_offset + rec.byte_len())
            .ok_or_else(|| Error::Manifest(format!("array {name} runs past the end of {file}")))
    }

    fn f64s(&self, file: &str, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let raw = self.raw(file, name, DType::F64, shape)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn u8s(&self, file: &str, name: &str, shape: &[usize]) -> Result<Vec<u8>> {
        Ok(self.raw(file, name, DType::U8, shape)?.to_vec())
    }
}

fn cmat_from_rows(data: &[f64], rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |r, c| {
        let i = 2 * (r * cols + c);
        C64::new(data[i], data[i + 1])
    })
}

fn cmat_from_cols(data: &[f64], rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |r, c| {
        let i = 2 * (c * rows + r);
        C64::new(data[i], data[i + 1])
    })
}

/// Reads and verifies every file listed in the manifest.
pub fn read_dataset(root: &Path) -> Result<Dataset> {
    let manifest = read_manifest(root)?;
    let mut files = BTreeMap::new();
    for rec in &manifest.files {
        let path: PathBuf = root.join(&rec.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != rec.bytes || format!("{:016x}", crc64(&bytes)) != rec.crc64 {
            return Err(Error::Checksum { file: path });
        }
        files.insert(rec.file.clone(), bytes);
    }
    for a in &manifest.arrays {
        if !files.contains_key(&a.file) {
            return Err(Error::Manifest(format!("array {} refers to unlisted file {}", a.name, a.file)));
        }
    }
    for (file, bytes) in &files {
        if file.ends_with(".json") {
            continue;
        }
        let declared: usize = manifest.arrays.iter().filter(|a| &a.file == file).map(ArrayRecord::byte_len).sum();
        if declared != bytes.len() {
            return Err(Error::Manifest(format!("{file} holds {} bytes, arrays declare {declared}", bytes.len())));
        }
    }
    let records = manifest.arrays.iter().map(|a| ((a.file.clone(), a.name.clone()), a.clone())).collect();
    let loaded = Loaded { files, records };
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (slot, split) in out.iter_mut().zip(Split::ALL) {
        let range = manifest
            .splits
            .get(&split)
            .ok_or_else(|| Error::Manifest(format!("split {} missing", split.dir())))?;
        *slot = decode_split(&loaded, &manifest, split, range)?;
    }
    let [train, val, test] = out;
    Ok(Dataset { manifest, train, val, test })
}

fn decode_split(l: &Loaded, man: &DatasetManifest, split: Split, range: &SplitRange) -> Result<Vec<ScenarioBundle>> {
    let p = &man.params;
    let code = PolarCode::design(p.code_n, p.code_m, p.code_design_ebn0_db)?;
    let s = range.count;
    let j = man.samples_per_scenario;
    let (k, m, nt, w) = (p.users, p.array.subcarriers, p.n_t(), p.grid);
    let (lce, lloc, ld) = (p.pilots_ce, p.pilots_loc, p.data_len);
    let (n, cm) = (p.code_n, p.code_m);
    let dir = split.dir();
    let f = |name: &str| format!("{dir}/{name}");

    let scenes_json = &l.files[&f("scenes.json")];
    let scenes: Vec<Scene> = serde_json::from_slice(scenes_json)?;
    if scenes.len() != s {
        return Err(Error::Manifest(format!("{dir}/scenes.json holds {} scenes, expected {s}", scenes.len())));
    }
    let grids = l.u8s(&f("scenes.u8"), "scenes", &[s, w, w])?;
    let ch_h = l.f64s(&f("channels.f64"), "channels.h", &[s, j, k, m, nt, 2])?;
    let ch_scale = l.f64s(&f("channels.f64"), "channels.scale", &[s, j, k])?;
    let ch_pos = l.f64s(&f("channels.f64"), "channels.pos", &[s, j, k, 3])?;
    let ce_y = l.f64s(&f("ce.f64"), "ce.y", &[s, j, k, lce, m, 2])?;
    let ce_sel = l.f64s(&f("ce.f64"), "ce.sel", &[s, j, k, lce])?;
    let loc_y = l.f64s(&f("loc.f64"), "loc.y", &[s, j, k, lloc, m, 2])?;
    let loc_sel = l.f64s(&f("loc.f64"), "loc.sel", &[s, j, k, lloc])?;
    let loc_pos = l.f64s(&f("loc.f64"), "loc.pos", &[s, j, k, 2])?;
    let det_h = l.f64s(&f("det.f64"), "det.h", &[s, j, nt, k, 2])?;
    let det_y = l.f64s(&f("det.f64"), "det.y", &[s, j, nt, ld, 2])?;
    let det_x = l.f64s(&f("det.f64"), "det.x", &[s, j, k, ld, 2])?;
    let det_sc = l.f64s(&f("det.f64"), "det.subcarrier", &[s, j])?;
    let pre_t = l.f64s(&f("pre.f64"), "pre.h_true", &[s, j, nt, k, 2])?;
    let pre_n = l.f64s(&f("pre.f64"), "pre.h_noisy", &[s, j, nt, k, 2])?;
    let pre_s2 = l.f64s(&f("pre.f64"), "pre.sigma2", &[s, j])?;
    let pre_sc = l.f64s(&f("pre.f64"), "pre.subcarrier", &[s, j])?;
    let s_hat = l.f64s(&f("dec.f64"), "dec.s_hat", &[s, j, n])?;
    let s_tilde = l.f64s(&f("dec.f64"), "dec.s_tilde", &[s, j, 2 * n - cm])?;
    let ebn0 = l.f64s(&f("dec.f64"), "dec.ebn0", &[s, j])?;
    let bits = l.u8s(&f("dec.u8"), "dec.b", &[s, j, cm])?;
    let z_tilde = l.u8s(&f("dec.u8"), "dec.z_tilde", &[s, j, n])?;

    let mut out = Vec::with_capacity(s);
    for (si, scene) in scenes.into_iter().enumerate() {
        let graph = SceneGraph { w, grid: grids[si * w * w..(si + 1) * w * w].to_vec() };
        let mut drops = Vec::with_capacity(j);
        for ji in 0..j {
            let d = si * j + ji;
            let mut channels = ChannelTensor { h: Vec::with_capacity(k), scale: Vec::with_capacity(k) };
            let mut positions = Vec::with_capacity(k);
            let mut ce = Vec::with_capacity(k);
            let mut loc = Vec::with_capacity(k);
            for u in 0..k {
                let du = d * k + u;
                let hs = 2 * m * nt;
                channels.h.push(cmat_from_cols(&ch_h[du * hs..(du + 1) * hs], nt, m));
                channels.scale.push(ch_scale[du]);
                positions.push(Vec3::new(ch_pos[3 * du], ch_pos[3 * du + 1], ch_pos[3 * du + 2]));
                let ys = 2 * lce * m;
                ce.push(PilotObservation {
                    y: cmat_from_rows(&ce_y[du * ys..(du + 1) * ys], lce, m),
                    selection: ce_sel[du * lce..(du + 1) * lce].iter().map(|&v| v as usize).collect(),
                    snr_db: p.snr_ce_db,
                    user: u,
                });
                let ys = 2 * lloc * m;
                loc.push(LocalizationSample {
                    obs: PilotObservation {
                        y: cmat_from_rows(&loc_y[du * ys..(du + 1) * ys], lloc, m),
                        selection: loc_sel[du * lloc..(du + 1) * lloc].iter().map(|&v| v as usize).collect(),
                        snr_db: p.snr_loc_db,
                        user: u,
                    },
                    pos: [loc_pos[2 * du], loc_pos[2 * du + 1]],
                });
            }
            let hk = 2 * nt * k;
            let det = DetectionSample {
                h: cmat_from_rows(&det_h[d * hk..(d + 1) * hk], nt, k),
                y: cmat_from_rows(&det_y[d * 2 * nt * ld..(d + 1) * 2 * nt * ld], nt, ld),
                x: cmat_from_rows(&det_x[d * 2 * k * ld..(d + 1) * 2 * k * ld], k, ld),
                snr_db: p.snr_det_db,
                subcarrier: det_sc[d] as usize,
            };
            let pre = PrecodingSample {
                h_true: cmat_from_rows(&pre_t[d * hk..(d + 1) * hk], nt, k),
                h_noisy: cmat_from_rows(&pre_n[d * hk..(d + 1) * hk], nt, k),
                sigma2: pre_s2[d],
                p_max: p.p_max,
                subcarrier: pre_sc[d] as usize,
            };
            let b = bits[d * cm..(d + 1) * cm].to_vec();
            let s_code = code.encode(&b)?;
            let dec = DecodingSample {
                s_bpsk: s_code.iter().map(|&c| 1.0 - 2.0 * f64::from(c)).collect(),
                s_code,
                b,
                s_hat: s_hat[d * n..(d + 1) * n].to_vec(),
                s_tilde: s_tilde[d * (2 * n - cm)..(d + 1) * (2 * n - cm)].to_vec(),
                z_tilde: z_tilde[d * n..(d + 1) * n].to_vec(),
                ebn0_db: ebn0[d],
            };
            drops.push(Drop { positions, channels, ce, loc, det, pre, dec });
        }
        out.push(ScenarioBundle { index: range.start + si, scene, graph, drops });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SystemParams {
        let mut p = SystemParams::toy();
        p.scenarios = 5;
        p.samples_per_scenario = 2;
        p.val_fraction = 0.2;
        p.test_fraction = 0.2;
        p
    }

    #[test]
    fn regeneration_is_deterministic() {
        let p = tiny();
        let a = regenerate_scenario(3, 1, &p, PilotSelection::Even).unwrap();
        let b = regenerate_scenario(3, 1, &p, PilotSelection::Even).unwrap();
        assert_eq!(a, b);
        for d in &a.drops {
            for h in &d.channels.h {
                assert!((h.norm_squared() / 8.0 - 16.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn roundtrip_in_tempdir() {
        let p = tiny();
        let ds = generate_dataset(&p, 1, PilotSelection::Even).unwrap();
        assert_eq!((ds.train.len(), ds.val.len(), ds.test.len()), (3, 1, 1));
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.train, ds.train);
        assert_eq!(back.val, ds.val);
        assert_eq!(back.test, ds.test);
    }
}
