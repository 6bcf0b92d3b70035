use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::world::{DeviceState, TaskSpec};

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Sorted distinct labels present.
    pub fn distinct_labels(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.num_classes).filter(|&l| seen[l]).collect()
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Gaussian-cluster generator for one community task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    pub spec: TaskSpec,
    /// One centroid per class, each of length `feature_dim`.
    pub centroids: Vec<Vec<f64>>,
}

impl TaskModel {
    pub fn generate<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Self {
        let centroids = (0..spec.num_classes)
            .map(|_| {
                let v: Vec<f64> = (0..spec.feature_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x * spec.separation / norm).collect()
            })
            .collect();
        Self {
            spec: spec.clone(),
            centroids,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, label: usize, n: usize, rng: &mut R, out: &mut Vec<f64>, labels: &mut Vec<usize>) {
        for _ in 0..n {
            for &c in &self.centroids[label] {
                out.push(c + rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(label);
        }
    }

    fn dataset<R: Rng + ?Sized>(&self, counts: &[(usize, usize)], rng: &mut R) -> Result<Dataset> {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for &(label, n) in counts {
            self.draw(label, n, rng, &mut feats, &mut labels);
        }
        Dataset::new(feats, self.spec.feature_dim, labels, self.spec.num_classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceData {
    pub train: Dataset,
    pub val: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTasks {
    pub tasks: Vec<TaskModel>,
    /// Indexed by device id.
    pub data: Vec<DeviceData>,
}

impl SyntheticTasks {
    pub fn train_sizes(&self) -> Vec<usize> {
        self.data.iter().map(|d| d.train.len()).collect()
    }
}

/// Label sets for `members` devices: classes are randomly permuted and device
/// `i` takes `labels_per_device` consecutive entries of the permutation
/// starting at `i * labels_per_device` (cyclically), so sets are distinct
/// within a device and every class is owned once there are enough slots.
fn assign_labels<R: Rng + ?Sized>(spec: &TaskSpec, members: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    let (c, l) = (spec.num_classes, spec.labels_per_device);
    if l == 0 || c < l {
        return Err(Error::TaskSetup(format!(
            "{c} classes cannot give each device {l} distinct labels"
        )));
    }
    let mut perm: Vec<usize> = (0..c).collect();
    perm.shuffle(rng);
    Ok((0..members)
        .map(|i| {
            let mut set: Vec<usize> = (0..l).map(|j| perm[(i * l + j) % c]).collect();
            set.sort_unstable();
            set
        })
        .collect())
}

/// Builds every community's task and the per-device train/validation sets.
///
/// With the label skew, each device owns `labels_per_device` classes; the
/// `train_per_class` samples of a class are divided equally (up to one
/// sample) among the devices that own it. Validation sets hold
/// `val_per_label` fresh samples of each owned class. With `iid`, a
/// community's pooled samples are shuffled and dealt out evenly instead.
pub fn make_synthetic_tasks<R: Rng + ?Sized>(
    specs: &[TaskSpec],
    devices: &[DeviceState],
    rng: &mut R,
) -> Result<SyntheticTasks> {
    let tasks: Vec<TaskModel> = specs.iter().map(|s| TaskModel::generate(s, rng)).collect();
    let mut data: Vec<Option<DeviceData>> = vec![None; devices.len()];

    for (c, task) in tasks.iter().enumerate() {
        let spec = &task.spec;
        let members: Vec<usize> = devices
            .iter()
            .filter(|d| d.community == c)
            .map(|d| d.id)
            .collect();
        if members.is_empty() {
            continue;
        }
        if spec.iid {
            let mut pool = Vec::new();
            for label in 0..spec.num_classes {
                for _ in 0..spec.train_per_class {
                    pool.push(label);
                }
            }
            pool.shuffle(rng);
            let chunks = split_even(pool.len(), members.len());
            let mut start = 0;
            for (&dev, &n) in members.iter().zip(&chunks) {
                let labels = &pool[start..start + n];
                start += n;
                let counts: Vec<(usize, usize)> = labels.iter().map(|&l| (l, 1)).collect();
                let train = task.dataset(&counts, rng)?;
                let val_labels: Vec<(usize, usize)> = (0..spec.val_per_label * spec.labels_per_device)
                    .map(|_| (rng.random_range(0..spec.num_classes), 1))
                    .collect();
                let val = task.dataset(&val_labels, rng)?;
                data[dev] = Some(DeviceData { train, val });
            }
            continue;
        }

        let label_sets = assign_labels(spec, members.len(), rng)?;
        let mut train_counts: Vec<Vec<(usize, usize)>> = vec![Vec::new(); members.len()];
        for label in 0..spec.num_classes {
            let owners: Vec<usize> = (0..members.len())
                .filter(|&i| label_sets[i].contains(&label))
                .collect();
            if owners.is_empty() {
                continue;
            }
            for (&i, n) in owners.iter().zip(split_even(spec.train_per_class, owners.len())) {
                if n > 0 {
                    train_counts[i].push((label, n));
                }
            }
        }
        for (i, &dev) in members.iter().enumerate() {
            let train = task.dataset(&train_counts[i], rng)?;
            let val_counts: Vec<(usize, usize)> = label_sets[i]
                .iter()
                .map(|&l| (l, spec.val_per_label))
                .collect();
            let val = task.dataset(&val_counts, rng)?;
            data[dev] = Some(DeviceData { train, val });
        }
    }

    let data = data
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.ok_or_else(|| Error::TaskSetup(format!("device {i} has no community task"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticTasks { tasks, data })
}

/// `total` split into `parts` sizes differing by at most one, larger first.
fn split_even(total: usize, parts: usize) -> Vec<usize> {
    let (base, rem) = (total / parts, total % parts);
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::world::{place_devices, ServiceConfig};

    fn setup(iid: bool, seed: u64) -> (ServiceConfig, SyntheticTasks) {
        let mut cfg = ServiceConfig::default();
        for t in &mut cfg.tasks {
            t.iid = iid;
        }
        let devs = place_devices(&cfg, &mut stream(seed, Stream::Placement, &[]));
        let tasks = make_synthetic_tasks(&cfg.tasks, &devs, &mut stream(seed, Stream::Data, &[])).unwrap();
        (cfg, tasks)
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(Dataset::new(vec![], 0, vec![], 2).is_err());
        assert!(Dataset::new(vec![], 3, vec![], 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 2, vec![2], 2).is_err());
        assert!(Dataset::new(vec![1.0], 2, vec![0], 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 2, vec![1], 2).is_ok());
    }

    #[test]
    fn skewed_partition_two_labels_each_and_full_cover() {
        let (cfg, tasks) = setup(false, 5);
        for c in 0..2 {
            let spec = &cfg.tasks[c];
            let mut owned = vec![0usize; spec.num_classes];
            let mut per_label_sizes: Vec<Vec<usize>> = vec![Vec::new(); spec.num_classes];
            for d in &tasks.data[c * 6..(c + 1) * 6] {
                let labels = d.train.distinct_labels();
                assert_eq!(labels.len(), 2);
                assert_eq!(d.val.distinct_labels(), labels);
                let hist = d.train.label_histogram();
                for &l in &labels {
                    owned[l] += 1;
                    per_label_sizes[l].push(hist[l]);
                }
            }
            assert!(owned.iter().all(|&n| n >= 1), "{owned:?}");
            for sizes in per_label_sizes {
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                assert!(hi - lo <= 1);
                assert_eq!(sizes.iter().sum::<usize>(), spec.train_per_class);
            }
        }
    }

    #[test]
    fn iid_partition_histograms_track_global() {
        let (cfg, tasks) = setup(true, 9);
        let spec = &cfg.tasks[0];
        for d in &tasks.data[..6] {
            let hist = d.train.label_histogram();
            let n = d.train.len() as f64;
            let p = 1.0 / spec.num_classes as f64;
            let sd = (n * p * (1.0 - p)).sqrt();
            for &h in &hist {
                assert!((h as f64 - n * p).abs() <= 4.0 * sd, "{hist:?}");
            }
        }
    }

    #[test]
    fn partitions_are_seeded() {
        assert_eq!(setup(false, 21).1, setup(false, 21).1);
        assert_ne!(setup(false, 21).1, setup(false, 22).1);
    }

    #[test]
    fn too_few_classes_is_error() {
        let spec = TaskSpec {
            num_classes: 3,
            labels_per_device: 4,
            ..TaskSpec::default()
        };
        let err = assign_labels(&spec, 2, &mut stream(0, Stream::Data, &[])).unwrap_err();
        assert!(matches!(err, Error::TaskSetup(_)));
    }
}
