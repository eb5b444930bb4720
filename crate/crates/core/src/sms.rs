//! Similarity-matrix smoothing.
//!
//! Similarity rows are grouped by the sample's true class. During an epoch
//! the per-class mean and element-wise variance of those rows are
//! accumulated; at the epoch boundary the statistics are smoothed across
//! neighbouring classes with a symmetric Gaussian kernel over class-index
//! distance and frozen. Throughout the following epoch every row of class
//! `j` is mapped element-wise through
//!
//! ```text
//! standard: s̃ = sqrt(Σ̃_j / Σ_j) ⊙ (s − μ_j) + μ̃_j
//! literal:  s̃ = sqrt(Σ̃_j) ⊙ sqrt(|μ̃_j|) ⊙ (s − μ_j) + μ̃_j
//! ```
//!
//! Before the first commit (cold start) calibration is the identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{LabelVector, SimilarityMatrix};

/// Floor applied to every per-class variance entry.
pub const VAR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
}

/// Symmetric kernel over class-index distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Bandwidth in class-index units.
    pub sigma: f64,
    pub include_self: bool,
    pub normalize: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::Gaussian,
            sigma: 1.0,
            include_self: false,
            normalize: true,
        }
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Unnormalized kernel value between classes `a` and `b`.
    pub fn raw_weight(&self, a: usize, b: usize) -> f64 {
        match self.kind {
            KernelKind::Gaussian => {
                let d = a as f64 - b as f64;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            }
        }
    }
}

/// Weights that class `j` assigns to each class `0..k`.
pub fn kernel_weights(spec: &KernelSpec, j: usize, k: usize) -> Result<Vec<f64>> {
    masked_weights(spec, j, k, &vec![true; k.max(2)])
}

fn masked_weights(spec: &KernelSpec, j: usize, k: usize, observed: &[bool]) -> Result<Vec<f64>> {
    spec.validate()?;
    if k < 2 {
        return Err(Error::invalid(format!("kernel needs at least 2 classes, got {k}")));
    }
    if j >= k {
        return Err(Error::invalid(format!("class {j} out of range for {k} classes")));
    }
    let mut w: Vec<f64> = (0..k)
        .map(|b| {
            if (b == j && !spec.include_self) || !observed[b] {
                0.0
            } else {
                spec.raw_weight(j, b)
            }
        })
        .collect();
    if spec.normalize {
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
        }
    }
    Ok(w)
}

/// Which form of the per-row affine map to apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationVariant {
    /// Whitening against the class's own spread, recoloured by the smoothed spread.
    #[default]
    Standard,
    /// Scale by `sqrt(Σ̃)·sqrt(|μ̃|)`.
    Literal,
}

impl std::str::FromStr for CalibrationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "literal" => Ok(Self::Literal),
            other => Err(Error::invalid(format!("unknown calibration variant {other:?}"))),
        }
    }
}

/// Frozen statistics of one class, as used for an entire epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub count: usize,
    pub mean: Option<Vec<f64>>,
    pub var: Option<Vec<f64>>,
    pub smoothed_mean: Option<Vec<f64>>,
    pub smoothed_var: Option<Vec<f64>>,
}

/// Smoothed statistics frozen at an epoch boundary. Serializes to the
/// checkpoint document `{k, dim, classes: [{count, mean, var, smoothed_mean, smoothed_var}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommittedStats {
    pub k: usize,
    pub dim: usize,
    pub classes: Vec<ClassEntry>,
}

/// Per-element affine map `s ↦ scale ⊙ (s − center) + target` for one class.
#[derive(Clone, Copy, Debug)]
pub struct RowMap<'a> {
    pub scale: &'a [f64],
    pub center: &'a [f64],
    pub target: &'a [f64],
}

impl CommittedStats {
    /// Scale vectors per class for `variant`; `None` for classes without statistics.
    pub fn scales(&self, variant: CalibrationVariant) -> Vec<Option<Vec<f64>>> {
        self.classes
            .iter()
            .map(|c| {
                let (Some(var), Some(smean), Some(svar)) = (&c.var, &c.smoothed_mean, &c.smoothed_var) else {
                    return None;
                };
                c.mean.as_ref()?;
                Some(match variant {
                    CalibrationVariant::Standard => svar.iter().zip(var).map(|(sv, v)| (sv / v).sqrt()).collect(),
                    CalibrationVariant::Literal => svar
                        .iter()
                        .zip(smean)
                        .map(|(sv, sm)| sv.sqrt() * sm.abs().sqrt())
                        .collect(),
                })
            })
            .collect()
    }

    /// Calibrates every row with the statistics of its class. Rows of classes
    /// lacking statistics pass through unchanged.
    pub fn calibrate(
        &self,
        s: &SimilarityMatrix,
        classes: &LabelVector,
        variant: CalibrationVariant,
    ) -> Result<SimilarityMatrix> {
        if s.k() != self.dim {
            return Err(Error::invalid(format!(
                "similarity has {} classes, statistics have {}",
                s.k(),
                self.dim
            )));
        }
        if classes.len() != s.m() {
            return Err(Error::invalid(format!(
                "{} labels for {} similarity rows",
                classes.len(),
                s.m()
            )));
        }
        let scales = self.scales(variant);
        let mut out = s.values().clone();
        for i in 0..s.m() {
            let c = classes.get(i);
            if c >= self.k {
                return Err(Error::invalid(format!("label {c} out of range")));
            }
            if let Some(map) = self.row_map(&scales, c) {
                for (o, ((sc, mu), target)) in out
                    .row_mut(i)
                    .iter_mut()
                    .zip(map.scale.iter().zip(map.center).zip(map.target))
                {
                    *o = sc * (*o - mu) + target;
                }
            }
        }
        SimilarityMatrix::new(out, true)
    }

    pub fn row_map<'a>(&'a self, scales: &'a [Option<Vec<f64>>], class: usize) -> Option<RowMap<'a>> {
        let entry = &self.classes[class];
        Some(RowMap {
            scale: scales[class].as_deref()?,
            center: entry.mean.as_deref()?,
            target: entry.smoothed_mean.as_deref()?,
        })
    }
}

/// Result of smoothing a set of raw per-class statistics.
#[derive(Clone, Debug, PartialEq)]
pub enum SmoothOutcome {
    Smoothed(CommittedStats),
    /// Fewer than two classes observed; calibration stays off.
    Disabled {
        observed: usize,
    },
}

/// What happened at an epoch boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitOutcome {
    Committed,
    /// Too few observed classes: calibration disabled for the next epoch.
    Disabled,
    /// Nothing accumulated; previous state kept.
    NoOp,
}

/// Running per-class statistics of similarity rows plus the statistics
/// frozen at the last epoch boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassStats {
    k: usize,
    dim: usize,
    sums: Vec<Vec<f64>>,
    sq_sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    committed: Option<CommittedStats>,
}

impl ClassStats {
    /// Empty statistics for `k` classes over rows of length `k`.
    pub fn new(k: usize) -> Self {
        Self {
            k,
            dim: k,
            sums: vec![vec![0.0; k]; k],
            sq_sums: vec![vec![0.0; k]; k],
            counts: vec![0; k],
            committed: None,
        }
    }

    /// Restores previously committed statistics, with empty accumulators.
    pub fn from_committed(committed: Option<CommittedStats>, k: usize) -> Result<Self> {
        let mut stats = Self::new(k);
        if let Some(c) = &committed {
            if c.k != k || c.dim != k || c.classes.len() != k {
                return Err(Error::invalid("committed statistics do not match class count"));
            }
        }
        stats.committed = committed;
        Ok(stats)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_committed(&self) -> bool {
        self.committed.is_some()
    }

    pub fn committed(&self) -> Option<&CommittedStats> {
        self.committed.as_ref()
    }

    pub fn count(&self, j: usize) -> usize {
        self.counts[j]
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Adds every row of `s` to the accumulator of its true class.
    pub fn accumulate(&mut self, s: &SimilarityMatrix, labels: &LabelVector) -> Result<()> {
        if s.k() != self.dim {
            return Err(Error::invalid(format!(
                "similarity rows have length {}, statistics expect {}",
                s.k(),
                self.dim
            )));
        }
        if labels.len() != s.m() {
            return Err(Error::invalid(format!(
                "{} labels for {} similarity rows",
                labels.len(),
                s.m()
            )));
        }
        for i in 0..s.m() {
            let c = labels.get(i);
            if c >= self.k {
                return Err(Error::invalid(format!("label {c} out of range")));
            }
            self.counts[c] += 1;
            for ((sum, sq), &v) in self.sums[c].iter_mut().zip(&mut self.sq_sums[c]).zip(s.row(i)) {
                *sum += v;
                *sq += v * v;
            }
        }
        Ok(())
    }

    /// Arithmetic mean of class `j`'s rows this epoch.
    pub fn mean(&self, j: usize) -> Option<Vec<f64>> {
        let n = self.counts[j];
        (n > 0).then(|| self.sums[j].iter().map(|s| s / n as f64).collect())
    }

    /// Population variance of class `j`'s rows this epoch, floored at [`VAR_FLOOR`].
    pub fn var(&self, j: usize) -> Option<Vec<f64>> {
        let n = self.counts[j] as f64;
        let mean = self.mean(j)?;
        Some(
            self.sq_sums[j]
                .iter()
                .zip(&mean)
                .map(|(sq, m)| (sq / n - m * m).max(VAR_FLOOR))
                .collect(),
        )
    }

    /// Kernel-smoothed statistics of the current accumulators.
    pub fn smooth(&self, spec: &KernelSpec) -> Result<SmoothOutcome> {
        spec.validate()?;
        let observed: Vec<bool> = self.counts.iter().map(|&n| n > 0).collect();
        let n_observed = observed.iter().filter(|&&o| o).count();
        if n_observed < 2 {
            return Ok(SmoothOutcome::Disabled { observed: n_observed });
        }
        let means: Vec<Option<Vec<f64>>> = (0..self.k).map(|j| self.mean(j)).collect();
        let vars: Vec<Option<Vec<f64>>> = (0..self.k).map(|j| self.var(j)).collect();
        let mut classes = Vec::with_capacity(self.k);
        for j in 0..self.k {
            let w = masked_weights(spec, j, self.k, &observed)?;
            let (smoothed_mean, smoothed_var) = if w.iter().any(|&v| v > 0.0) {
                (
                    Some(weighted_sum(&w, &means, self.dim)),
                    Some(weighted_sum(&w, &vars, self.dim)),
                )
            } else {
                (None, None)
            };
            classes.push(ClassEntry {
                count: self.counts[j],
                mean: means[j].clone(),
                var: vars[j].clone(),
                smoothed_mean,
                smoothed_var,
            });
        }
        Ok(SmoothOutcome::Smoothed(CommittedStats {
            k: self.k,
            dim: self.dim,
            classes,
        }))
    }

    /// Freezes this epoch's smoothed statistics for the next epoch and
    /// resets the accumulators.
    pub fn commit_epoch(&mut self, spec: &KernelSpec) -> Result<CommitOutcome> {
        if self.total_count() == 0 {
            return Ok(CommitOutcome::NoOp);
        }
        let outcome = match self.smooth(spec)? {
            SmoothOutcome::Smoothed(c) => {
                self.committed = Some(c);
                CommitOutcome::Committed
            }
            SmoothOutcome::Disabled { .. } => {
                self.committed = None;
                CommitOutcome::Disabled
            }
        };
        self.reset_accumulators();
        Ok(outcome)
    }

    pub fn reset_accumulators(&mut self) {
        self.sums.iter_mut().chain(&mut self.sq_sums).for_each(|v| v.fill(0.0));
        self.counts.fill(0);
    }
}

fn weighted_sum(w: &[f64], values: &[Option<Vec<f64>>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (&wj, v) in w.iter().zip(values) {
        if wj == 0.0 {
            continue;
        }
        if let Some(v) = v {
            for (o, x) in out.iter_mut().zip(v) {
                *o += wj * x;
            }
        }
    }
    out
}

/// Calibrates rows using committed statistics.
pub fn calibrate_rows(
    s: &SimilarityMatrix,
    labels: &LabelVector,
    stats: &ClassStats,
    variant: CalibrationVariant,
) -> Result<SimilarityMatrix> {
    let committed = stats
        .committed()
        .ok_or_else(|| Error::InvalidState("calibration requires committed statistics".into()))?;
    committed.calibrate(s, labels, variant)
}

/// Calibrates rows if statistics are committed, otherwise returns `s`
/// unchanged (cold start or disabled epoch).
pub fn calibrate_or_identity(
    s: &SimilarityMatrix,
    labels: &LabelVector,
    stats: Option<&CommittedStats>,
    variant: CalibrationVariant,
) -> Result<SimilarityMatrix> {
    match stats {
        Some(c) => c.calibrate(s, labels, variant),
        None => Ok(s.clone()),
    }
}

/// Helper for tests and examples: builds committed statistics directly.
pub fn committed_from_parts(
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
    smoothed_mean: Vec<Vec<f64>>,
    smoothed_var: Vec<Vec<f64>>,
) -> Result<CommittedStats> {
    let k = mean.len();
    let dim = mean.first().map_or(0, Vec::len);
    if [var.len(), smoothed_mean.len(), smoothed_var.len()]
        .iter()
        .any(|&n| n != k)
    {
        return Err(Error::invalid("all statistic arrays need one entry per class"));
    }
    let classes = (0..k)
        .map(|j| ClassEntry {
            count: 1,
            mean: Some(mean[j].clone()),
            var: Some(var[j].clone()),
            smoothed_mean: Some(smoothed_mean[j].clone()),
            smoothed_var: Some(smoothed_var[j].clone()),
        })
        .collect();
    Ok(CommittedStats { k, dim, classes })
}
