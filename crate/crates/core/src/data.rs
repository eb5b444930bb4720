//! Synthetic ordinal, long-tailed datasets and their CSV form.
//!
//! Class `c` is centred at `(c·class_sep, 0, …, 0)` with isotropic Gaussian
//! noise, so neighbouring grades overlap more than distant ones. Class sizes
//! decay geometrically from class 0 to class K−1 by `imbalance_ratio`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{LabelVector, Matrix};

/// Fraction of each class held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

/// Minimum samples per generated class.
pub const MIN_PER_CLASS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub samples: usize,
    pub feature_dim: usize,
    /// Distance between adjacent class centres.
    pub class_sep: f64,
    pub noise_sigma: f64,
    /// Size of class 0 divided by size of class K−1.
    pub imbalance_ratio: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            samples: 2000,
            feature_dim: 16,
            class_sep: 1.0,
            noise_sigma: 0.2,
            imbalance_ratio: 1.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be >= 1"));
        }
        if self.samples < MIN_PER_CLASS * self.classes {
            return Err(Error::invalid(format!(
                "{} samples cannot give {} classes at least {MIN_PER_CLASS} each",
                self.samples, self.classes
            )));
        }
        if !(self.class_sep > 0.0 && self.class_sep.is_finite()) {
            return Err(Error::invalid(format!(
                "class_sep must be positive, got {}",
                self.class_sep
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return Err(Error::invalid(format!(
                "imbalance_ratio must be >= 1, got {}",
                self.imbalance_ratio
            )));
        }
        Ok(())
    }

    /// Per-class sample counts: proportional to `ρ^(−c/(K−1))`, rounded by
    /// largest remainder, then topped up to [`MIN_PER_CLASS`] from the largest classes.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let k = self.classes;
        let weights: Vec<f64> = (0..k)
            .map(|c| self.imbalance_ratio.powf(-(c as f64) / (k - 1) as f64))
            .collect();
        let total: f64 = weights.iter().sum();
        let quotas: Vec<f64> = weights.iter().map(|w| self.samples as f64 * w / total).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = self.samples - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &c in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[c] += 1;
            left -= 1;
        }
        while let Some(small) = counts.iter().position(|&n| n < MIN_PER_CLASS) {
            let donor = (0..k)
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                .expect("k >= 2");
            counts[donor] -= 1;
            counts[small] += 1;
        }
        Ok(counts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<u64>,
    pub features: Matrix,
    pub labels: LabelVector,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.labels.k()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Row indices belonging to `split`, in file order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Features and labels of the given rows.
    pub fn subset(&self, idx: &[usize]) -> (Matrix, LabelVector) {
        (self.features.select_rows(idx), self.labels.select(idx))
    }

    pub fn split(&self, split: Split) -> (Matrix, LabelVector) {
        self.subset(&self.split_indices(split))
    }

    /// Writes the `id,label,split,f0,…` CSV. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("id,label,split");
        for f in 0..self.feature_dim() {
            write!(out, ",f{f}").unwrap();
        }
        out.push('\n');
        for i in 0..self.len() {
            write!(
                out,
                "{},{},{}",
                self.ids[i],
                self.labels.get(i),
                self.splits[i].as_str()
            )
            .unwrap();
            for v in self.features.row(i) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Draws a dataset according to `spec`, with a stratified 80/20 split.
pub fn generate_synthetic(spec: &DatasetSpec) -> Result<Dataset> {
    let counts = spec.class_counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let f = spec.feature_dim;
    let mut data = Vec::with_capacity(spec.samples * f);
    let mut labels = Vec::with_capacity(spec.samples);
    let mut splits = Vec::with_capacity(spec.samples);
    for (c, &n) in counts.iter().enumerate() {
        let center = c as f64 * spec.class_sep;
        for _ in 0..n {
            for d in 0..f {
                let base = if d == 0 { center } else { 0.0 };
                data.push(base + noise.sample(&mut rng));
            }
            labels.push(c);
        }
        let n_test = ((n as f64 * TEST_FRACTION).round() as usize).clamp(1, n - 1);
        let mut tags: Vec<Split> = (0..n)
            .map(|i| if i < n_test { Split::Test } else { Split::Train })
            .collect();
        tags.shuffle(&mut rng);
        splits.extend(tags);
    }
    Ok(Dataset {
        ids: (0..spec.samples as u64).collect(),
        features: Matrix::new(spec.samples, f, data)?,
        labels: LabelVector::new(labels, spec.classes)?,
        splits,
    })
}

/// Reads a dataset CSV, validating the header, labels (`0..classes`) and feature width.
pub fn load_csv(path: impl AsRef<Path>, classes: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, classes, path)
}

fn parse_csv(text: &str, classes: usize, path: &Path) -> Result<Dataset> {
    let err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols[..3] != ["id", "label", "split"] {
        return Err(err(
            1,
            format!("header must start with id,label,split,f0; got {:?}", cols),
        ));
    }
    for (i, name) in cols[3..].iter().enumerate() {
        if *name != format!("f{i}") {
            return Err(err(1, format!("expected column f{i}, found {name:?}")));
        }
    }
    let width = cols.len() - 3;
    let (mut ids, mut labels, mut splits, mut data) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", cols.len(), record.len()),
            ));
        }
        let id: u64 = record[0]
            .parse()
            .map_err(|_| err(line, format!("id {:?} is not an integer", &record[0])))?;
        let label: usize = record[1]
            .parse()
            .map_err(|_| err(line, format!("label {:?} is not an integer", &record[1])))?;
        if label >= classes {
            return Err(err(line, format!("label {label} out of range for {classes} classes")));
        }
        let split: Split = record[2]
            .parse()
            .map_err(|_| err(line, format!("split {:?} must be train or test", &record[2])))?;
        for (j, cell) in record.iter().skip(3).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| err(line, format!("f{j} value {cell:?} is not numeric")))?;
            if !v.is_finite() {
                return Err(err(line, format!("f{j} value {cell:?} is not finite")));
            }
            data.push(v);
        }
        ids.push(id);
        labels.push(label);
        splits.push(split);
    }
    let n = ids.len();
    Ok(Dataset {
        ids,
        features: Matrix::new(n, width, data)?,
        labels: LabelVector::new(labels, classes)?,
        splits,
    })
}

/// Row indices of `split`, shuffled by a stream derived from `(seed, epoch)`
/// and cut into consecutive batches; the last batch may be short.
pub fn batch_iter(
    dataset: &Dataset,
    split: Split,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let mut idx = dataset.split_indices(split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    idx.shuffle(&mut rng);
    Ok(idx.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(samples: usize, rho: f64) -> DatasetSpec {
        DatasetSpec {
            samples,
            imbalance_ratio: rho,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn balanced_counts() {
        assert_eq!(spec(1000, 1.0).class_counts().unwrap(), vec![200; 5]);
    }

    #[test]
    fn geometric_counts() {
        assert_eq!(spec(620, 16.0).class_counts().unwrap(), vec![320, 160, 80, 40, 20]);
    }

    #[test]
    fn tiny_classes_are_topped_up() {
        let counts = spec(12, 1000.0).class_counts().unwrap();
        assert_eq!(counts.iter().sum::<usize>(), 12);
        assert!(counts.iter().all(|&n| n >= MIN_PER_CLASS));
    }

    #[test]
    fn infeasible_counts_rejected() {
        assert!(spec(9, 1.0).class_counts().is_err());
        assert!(generate_synthetic(&spec(9, 1.0)).is_err());
        assert!(DatasetSpec {
            imbalance_ratio: 0.5,
            ..DatasetSpec::default()
        }
        .validate()
        .is_err());
        assert!(DatasetSpec {
            class_sep: 0.0,
            ..DatasetSpec::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn zero_noise_samples_sit_on_centres() {
        let ds = generate_synthetic(&DatasetSpec {
            noise_sigma: 0.0,
            samples: 50,
            class_sep: 2.0,
            ..DatasetSpec::default()
        })
        .unwrap();
        for i in 0..ds.len() {
            let row = ds.features.row(i);
            assert_eq!(row[0], 2.0 * ds.labels.get(i) as f64);
            assert!(row[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn every_class_in_both_splits() {
        let ds = generate_synthetic(&spec(100, 20.0)).unwrap();
        for split in [Split::Train, Split::Test] {
            let (_, labels) = ds.split(split);
            assert!(labels.class_counts().iter().all(|&n| n > 0), "{split:?}");
        }
    }

    #[test]
    fn header_and_rows() {
        let text = "id,label,split,f0,f1\n0,1,train,0.5,-1\n1,0,test,2,3e-3\n2,4,train,1,1\n";
        let ds = parse_csv(text, 5, Path::new("mem.csv")).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_dim(), 2);
        assert_eq!(ds.splits, vec![Split::Train, Split::Test, Split::Train]);
        assert_eq!(ds.features.row(1), &[2.0, 0.003]);
    }

    #[test]
    fn out_of_range_label_names_line() {
        let text = "id,label,split,f0\n0,1,train,0.5\n1,5,test,2\n";
        match parse_csv(text, 5, Path::new("x.csv")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("label 5"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        let p = Path::new("x.csv");
        assert!(parse_csv("id,label,f0\n", 5, p).is_err());
        assert!(parse_csv("id,label,split,f1\n", 5, p).is_err());
        assert!(matches!(
            parse_csv("id,label,split,f0\n0,1,train,abc\n", 5, p),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_csv("id,label,split,f0\n0,1,valid,1\n", 5, p).is_err());
        assert!(parse_csv("id,label,split,f0\n0,1,train\n", 5, p).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = generate_synthetic(&spec(60, 4.0)).unwrap();
        let back = parse_csv(&ds.to_csv_string(), 5, Path::new("m")).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn batches_cover_split_once() {
        let ds = generate_synthetic(&spec(103, 3.0)).unwrap();
        let batches = batch_iter(&ds, Split::Train, 16, 9, 2).unwrap();
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, ds.split_indices(Split::Train));
        assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == 16));
        assert_eq!(batches, batch_iter(&ds, Split::Train, 16, 9, 2).unwrap());
        assert_ne!(batches, batch_iter(&ds, Split::Train, 16, 9, 3).unwrap());
        let one = batch_iter(&ds, Split::Test, 1000, 9, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert!(batch_iter(&ds, Split::Test, 0, 9, 0).is_err());
    }
}
