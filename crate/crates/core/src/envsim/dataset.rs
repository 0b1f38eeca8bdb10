//! Episode generation, splits and the on-disk dataset layout.
//!
//! Layout under the dataset root:
//!
//! ```text
//! manifest.json
//! episodes/<id>/frames.bin   little-endian f32, N x H x W x 3
//! episodes/<id>/shape.json   [N, H, W, 3]
//! episodes/<id>/joints.csv   t,j1,j2 (radians)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envsim::kinematics::{inverse_kinematics, ArmConfig, ArmPose};
use crate::envsim::render::{render_scene, RenderConfig};
use crate::envsim::scene::{WorkspaceScene, BALL_DIAMETER_CM, WORKSPACE_HEIGHT_CM, WORKSPACE_WIDTH_CM};
use crate::error::{EclError, Result};
use crate::tensor::Tensor;

/// Per-numerosity sequence counts of the reference robot dataset (counts 1..10).
pub const REFERENCE_COUNTS: [usize; 10] = [405, 206, 134, 102, 81, 66, 58, 51, 45, 40];
pub const REFERENCE_TOTAL: usize = 1188;
pub const REFERENCE_VAL: usize = 242;
pub const REFERENCE_TRAIN: usize = 946;
pub const REFERENCE_SUBSETS: [usize; 2] = [94, 472];

/// Data fractions with a training subset in every manifest.
pub const FRACTIONS: [(&str, f64); 3] = [("0.1", 0.1), ("0.5", 0.5), ("1.0", 1.0)];

/// Largest-remainder apportionment of `total` over `weights`; ties go to the
/// lower index, so non-increasing weights give non-increasing counts.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Zipf-like per-numerosity episode counts summing to `total`, non-increasing
/// in numerosity and at least one per numerosity. With ten classes the
/// weights are the reference robot distribution, so `(1188, 10)` reproduces
/// it exactly; other class counts use `1/n` weights.
pub fn zipf_counts(total: usize, n_max: usize) -> Result<Vec<usize>> {
    if n_max == 0 || total < n_max {
        return Err(EclError::InfeasibleDistribution { total, n_max });
    }
    let weights: Vec<f64> = if n_max == REFERENCE_COUNTS.len() {
        REFERENCE_COUNTS.iter().map(|&c| c as f64).collect()
    } else {
        (1..=n_max).map(|n| 1.0 / n as f64).collect()
    };
    let mut counts = apportion(total, &weights);
    // Lift empty classes by taking from the last of the largest classes,
    // which keeps the vector non-increasing.
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let max = *counts.iter().max().unwrap();
        let donor = counts.iter().rposition(|&c| c == max).unwrap();
        counts[donor] -= 1;
        counts[empty] += 1;
        counts.sort_unstable_by(|a, b| b.cmp(a));
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub total: usize,
    pub n_max: usize,
    pub render: RenderConfig,
    pub arm: ArmConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            total: REFERENCE_TOTAL,
            n_max: 10,
            render: RenderConfig::default(),
            arm: ArmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `H x W x 3`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub pose: ArmPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: String,
    pub count: usize,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub id: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSpec {
    pub width_cm: f64,
    pub height_cm: f64,
    pub ball_diameter_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub render: RenderConfig,
    pub arm: ArmConfig,
    pub workspace: WorkspaceSpec,
    pub episodes: Vec<EpisodeEntry>,
    pub split: Split,
    /// Nested training subsets keyed by fraction ("0.1", "0.5", "1.0").
    pub fraction_subsets: BTreeMap<String, Vec<String>>,
}

impl DatasetManifest {
    pub fn subset(&self, fraction: f64) -> Result<&[String]> {
        let key = FRACTIONS
            .iter()
            .find(|(_, f)| (f - fraction).abs() < 1e-9)
            .map(|(k, _)| *k)
            .ok_or_else(|| EclError::Config(format!("unsupported data fraction {fraction}")))?;
        self.fraction_subsets
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| EclError::Config(format!("manifest has no subset {key}")))
    }

    pub fn count_of(&self, id: &str) -> Option<usize> {
        self.episodes.iter().find(|e| e.id == id).map(|e| e.count)
    }
}

/// A manifest plus its episodes, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn index_of(&self) -> BTreeMap<&str, usize> {
        self.episodes
            .iter()
            .enumerate()
            .map(|(i, e)| (e.episode_id.as_str(), i))
            .collect()
    }
}

fn episode_id(index: usize) -> String {
    format!("ep{index:05}")
}

fn episode_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Renders one episode: sample a scene, visit balls greedily, one frame per visit.
pub fn generate_episode(seed: u64, index: usize, count: usize, config: &DatasetConfig) -> Result<Episode> {
    let mut rng = episode_rng(seed, index);
    let arm = &config.arm;
    let scene = WorkspaceScene::sample(count, arm, &mut rng)?;
    let frames = scene
        .visitation_order()
        .into_iter()
        .map(|b| {
            let ball = scene.balls[b];
            let pose = inverse_kinematics((ball.x - arm.base_x, ball.y - arm.base_y), (arm.l1, arm.l2))?;
            Ok(Frame {
                image: render_scene(&scene, pose, arm, &config.render),
                pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Episode {
        episode_id: episode_id(index),
        count,
        frames,
    })
}

fn label_sequence(seed: u64, config: &DatasetConfig) -> Result<Vec<usize>> {
    let counts = zipf_counts(config.total, config.n_max)?;
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat(k + 1).take(c))
        .collect();
    labels.shuffle(&mut episode_rng(seed, usize::MAX - 1));
    Ok(labels)
}

/// Stratified validation split plus nested, approximately stratified
/// training subsets (every prefix of the interleaved order keeps class
/// proportions).
fn build_splits(
    seed: u64,
    entries: &[EpisodeEntry],
    n_max: usize,
) -> (Split, BTreeMap<String, Vec<String>>) {
    let mut rng = episode_rng(seed, usize::MAX - 2);
    let total = entries.len();
    let val_total = (total as f64 * REFERENCE_VAL as f64 / REFERENCE_TOTAL as f64).round() as usize;
    let mut by_class: Vec<Vec<&str>> = vec![Vec::new(); n_max];
    for e in entries {
        by_class[e.count - 1].push(&e.id);
    }
    let weights: Vec<f64> = by_class.iter().map(|c| c.len() as f64).collect();
    let val_counts = apportion(val_total, &weights);

    let mut val = Vec::new();
    let mut keyed: Vec<(f64, usize, &str)> = Vec::new();
    for (k, ids) in by_class.iter_mut().enumerate() {
        ids.shuffle(&mut rng);
        let take = val_counts[k].min(ids.len());
        val.extend(ids[..take].iter().map(|s| s.to_string()));
        let rest = &ids[take..];
        for (j, id) in rest.iter().enumerate() {
            keyed.push(((j as f64 + 0.5) / rest.len() as f64, k, id));
        }
    }
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let train_order: Vec<String> = keyed.into_iter().map(|(_, _, id)| id.to_string()).collect();
    let n_train = train_order.len();
    let subset_len = |reference: usize| {
        (n_train as f64 * reference as f64 / REFERENCE_TRAIN as f64).round() as usize
    };
    let mut subsets = BTreeMap::new();
    subsets.insert("0.1".to_string(), train_order[..subset_len(REFERENCE_SUBSETS[0])].to_vec());
    subsets.insert("0.5".to_string(), train_order[..subset_len(REFERENCE_SUBSETS[1])].to_vec());
    subsets.insert("1.0".to_string(), train_order.clone());

    let mut train = train_order;
    train.sort();
    val.sort();
    (Split { train, val }, subsets)
}

fn manifest_for(seed: u64, config: &DatasetConfig, labels: &[usize]) -> DatasetManifest {
    let entries: Vec<EpisodeEntry> = labels
        .iter()
        .enumerate()
        .map(|(i, &count)| EpisodeEntry {
            id: episode_id(i),
            count,
        })
        .collect();
    let (split, fraction_subsets) = build_splits(seed, &entries, config.n_max);
    DatasetManifest {
        seed,
        render: config.render,
        arm: config.arm,
        workspace: WorkspaceSpec {
            width_cm: WORKSPACE_WIDTH_CM,
            height_cm: WORKSPACE_HEIGHT_CM,
            ball_diameter_cm: BALL_DIAMETER_CM,
        },
        episodes: entries,
        split,
        fraction_subsets,
    }
}

/// Generates the whole dataset in memory. Episodes render in parallel; each
/// uses its own seed-derived stream, so the result does not depend on
/// scheduling.
pub fn generate_dataset(seed: u64, config: &DatasetConfig) -> Result<Dataset> {
    let labels = label_sequence(seed, config)?;
    let manifest = manifest_for(seed, config, &labels);
    let episodes = labels
        .par_iter()
        .enumerate()
        .map(|(i, &count)| generate_episode(seed, i, count, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, episodes })
}

/// Generates the dataset straight to disk without holding every frame in
/// memory. Returns the manifest that was written.
pub fn generate_dataset_to_dir(seed: u64, config: &DatasetConfig, root: &Path) -> Result<DatasetManifest> {
    let labels = label_sequence(seed, config)?;
    let manifest = manifest_for(seed, config, &labels);
    let episodes_dir = root.join("episodes");
    fs::create_dir_all(&episodes_dir).map_err(|e| write_err(&episodes_dir, e))?;
    labels
        .par_iter()
        .enumerate()
        .try_for_each(|(i, &count)| {
            let ep = generate_episode(seed, i, count, config)?;
            write_episode(&episodes_dir, &ep)
        })?;
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

fn write_err(path: &Path, source: std::io::Error) -> EclError {
    EclError::DatasetWrite {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| write_err(root, e))?;
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| EclError::json("manifest", e))?;
    fs::write(&path, text + "\n").map_err(|e| write_err(&path, e))
}

pub fn write_episode(episodes_dir: &Path, ep: &Episode) -> Result<()> {
    let dir = episodes_dir.join(&ep.episode_id);
    fs::create_dir_all(&dir).map_err(|e| write_err(&dir, e))?;
    let (h, w) = ep
        .frames
        .first()
        .map(|f| (f.image.dim(0), f.image.dim(1)))
        .ok_or(EclError::EmptySequence("episode without frames"))?;

    let frames_path = dir.join("frames.bin");
    let file = fs::File::create(&frames_path).map_err(|e| write_err(&frames_path, e))?;
    let mut out = BufWriter::new(file);
    for f in &ep.frames {
        for v in f.image.data() {
            out.write_all(&v.to_le_bytes()).map_err(|e| write_err(&frames_path, e))?;
        }
    }
    out.flush().map_err(|e| write_err(&frames_path, e))?;

    let shape_path = dir.join("shape.json");
    let shape = serde_json::to_string(&[ep.frames.len(), h, w, 3]).expect("shape serializes");
    fs::write(&shape_path, shape + "\n").map_err(|e| write_err(&shape_path, e))?;

    let joints_path = dir.join("joints.csv");
    let mut csv = String::from("t,j1,j2\n");
    for (t, f) in ep.frames.iter().enumerate() {
        csv.push_str(&format!("{t},{},{}\n", f.pose.j1, f.pose.j2));
    }
    fs::write(&joints_path, csv).map_err(|e| write_err(&joints_path, e))
}

/// Writes an in-memory dataset using the standard layout.
pub fn write_dataset(root: &Path, data: &Dataset) -> Result<()> {
    let episodes_dir = root.join("episodes");
    fs::create_dir_all(&episodes_dir).map_err(|e| write_err(&episodes_dir, e))?;
    data.episodes
        .par_iter()
        .try_for_each(|ep| write_episode(&episodes_dir, ep))?;
    write_manifest(root, &data.manifest)
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join("manifest.json");
    if !path.exists() {
        return Err(EclError::MissingPath(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| EclError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| EclError::json(path.display().to_string(), e))
}

fn parse_err(path: &Path, message: impl Into<String>) -> EclError {
    EclError::Parse {
        what: path.display().to_string(),
        message: message.into(),
    }
}

pub fn read_episode(episodes_dir: &Path, entry: &EpisodeEntry) -> Result<Episode> {
    let dir: PathBuf = episodes_dir.join(&entry.id);
    let shape_path = dir.join("shape.json");
    let shape_text = fs::read_to_string(&shape_path).map_err(|e| EclError::io(&shape_path, e))?;
    let shape: [usize; 4] =
        serde_json::from_str(&shape_text).map_err(|e| EclError::json(shape_path.display().to_string(), e))?;
    let [n, h, w, c] = shape;
    if c != 3 || n != entry.count {
        return Err(parse_err(&shape_path, format!("shape {shape:?} inconsistent with count {}", entry.count)));
    }

    let frames_path = dir.join("frames.bin");
    let bytes = fs::read(&frames_path).map_err(|e| EclError::io(&frames_path, e))?;
    if bytes.len() != n * h * w * 3 * 4 {
        return Err(parse_err(&frames_path, format!("expected {} bytes, found {}", n * h * w * 12, bytes.len())));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let joints_path = dir.join("joints.csv");
    let joints_text = fs::read_to_string(&joints_path).map_err(|e| EclError::io(&joints_path, e))?;
    let mut poses = Vec::with_capacity(n);
    for (lineno, line) in joints_text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(&joints_path, format!("line {}: {e}", lineno + 1)))
        };
        if fields.len() != 3 {
            return Err(parse_err(&joints_path, format!("line {}: expected t,j1,j2", lineno + 1)));
        }
        poses.push(ArmPose {
            j1: parse(fields[1])?,
            j2: parse(fields[2])?,
        });
    }
    if poses.len() != n {
        return Err(parse_err(&joints_path, format!("expected {n} rows, found {}", poses.len())));
    }
    let frame_len = h * w * 3;
    let frames = poses
        .into_iter()
        .enumerate()
        .map(|(t, pose)| Frame {
            image: Tensor::from_vec(&[h, w, 3], values[t * frame_len..(t + 1) * frame_len].to_vec())
                .expect("frame slice matches shape"),
            pose,
        })
        .collect();
    Ok(Episode {
        episode_id: entry.id.clone(),
        count: entry.count,
        frames,
    })
}

/// Loads manifest and all episodes (in manifest order).
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest = read_manifest(root)?;
    let episodes_dir = root.join("episodes");
    let episodes = manifest
        .episodes
        .par_iter()
        .map(|e| read_episode(&episodes_dir, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, episodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_distribution_is_reproduced() {
        assert_eq!(zipf_counts(1188, 10).unwrap(), REFERENCE_COUNTS.to_vec());
        assert_eq!(zipf_counts(10, 10).unwrap(), vec![1; 10]);
    }

    #[test]
    fn infeasible_totals_are_rejected() {
        assert!(matches!(
            zipf_counts(9, 10),
            Err(EclError::InfeasibleDistribution { total: 9, n_max: 10 })
        ));
        assert!(zipf_counts(5, 0).is_err());
    }

    #[test]
    fn hundred_over_four_classes() {
        let c = zipf_counts(100, 4).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.iter().sum::<usize>(), 100);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
    }

    proptest! {
        #[test]
        fn zipf_counts_are_feasible(n_max in 1usize..15, extra in 0usize..3000) {
            let total = n_max + extra;
            let c = zipf_counts(total, n_max).unwrap();
            prop_assert_eq!(c.len(), n_max);
            prop_assert_eq!(c.iter().sum::<usize>(), total);
            prop_assert!(c.iter().all(|&v| v >= 1));
            prop_assert!(c.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn reference_manifest_splits() {
        let cfg = DatasetConfig::default();
        let labels = label_sequence(3, &cfg).unwrap();
        let m = manifest_for(3, &cfg, &labels);
        assert_eq!(m.split.val.len(), REFERENCE_VAL);
        assert_eq!(m.split.train.len(), REFERENCE_TRAIN);
        let s10 = &m.fraction_subsets["0.1"];
        let s50 = &m.fraction_subsets["0.5"];
        let s100 = &m.fraction_subsets["1.0"];
        assert_eq!((s10.len(), s50.len(), s100.len()), (94, 472, 946));
        assert_eq!(&s50[..94], &s10[..]);
        assert_eq!(&s100[..472], &s50[..]);
        let val: std::collections::BTreeSet<_> = m.split.val.iter().collect();
        assert!(s100.iter().all(|id| !val.contains(id)));
        // every numerosity is represented in the smallest subset
        let mut seen = [false; 10];
        for id in s10 {
            seen[m.count_of(id).unwrap() - 1] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn small_dataset_round_trips_through_disk() {
        let cfg = DatasetConfig {
            total: 24,
            render: RenderConfig::with_size(16),
            ..DatasetConfig::default()
        };
        let data = generate_dataset(11, &cfg).unwrap();
        for ep in &data.episodes {
            assert_eq!(ep.frames.len(), ep.count);
        }
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.manifest, data.manifest);
        assert_eq!(loaded.episodes, data.episodes);

        let streamed = tempfile::tempdir().unwrap();
        let m = generate_dataset_to_dir(11, &cfg, streamed.path()).unwrap();
        assert_eq!(m, data.manifest);
        let a = fs::read(dir.path().join("episodes/ep00003/frames.bin")).unwrap();
        let b = fs::read(streamed.path().join("episodes/ep00003/frames.bin")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_manifest_is_a_path_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_manifest(dir.path()), Err(EclError::MissingPath(_))));
    }
}
