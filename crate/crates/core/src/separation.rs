//! Top-layer node attribution and selective reconstruction.
//!
//! Two ways to decide which top-layer nodes encode which input aspect:
//! per-node activation variance over a single-aspect probe batch, and mean
//! relative activity (absolute activation difference) over paired
//! (mixed, single-aspect) inputs. Nodes attributed to the unwanted aspect
//! are inactivated by substituting their mean activation over face-only
//! inputs before the down pass.
//!
//! Everything here runs on mean-field probabilities, so all operations are
//! deterministic.

use std::fs;
use std::path::Path;

use crate::data::{Aspect, ImageSet};
use crate::dbn::{down_pass, up_pass, DbnModel, TopRepresentation};
use crate::error::{Error, Result};
use crate::numerics::{column_mean, column_variance, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    Variance,
    RelativeActivity,
}

impl StatKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::Variance => "variance",
            StatKind::RelativeActivity => "relative_activity",
        }
    }
}

/// Per-node scores over the top layer, with the probe that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStatistics {
    pub values: Matrix,
    pub kind: StatKind,
    pub source_aspect: String,
}

/// Top-layer node indices picked by one method at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceSelection {
    pub node_indices: Vec<usize>,
    pub method: StatKind,
    pub threshold: f64,
    pub n_top: usize,
}

impl RelevanceSelection {
    pub fn len(&self) -> usize {
        self.node_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_indices.is_empty()
    }

    /// All top-layer indices not in the selection.
    pub fn complement(&self) -> Vec<usize> {
        let mut mask = vec![true; self.n_top];
        for &i in &self.node_indices {
            mask[i] = false;
        }
        mask.iter()
            .enumerate()
            .filter_map(|(i, &keep)| keep.then_some(i))
            .collect()
    }

    pub fn jaccard(&self, other: &RelevanceSelection) -> f64 {
        let a: std::collections::HashSet<_> = self.node_indices.iter().collect();
        let b: std::collections::HashSet<_> = other.node_indices.iter().collect();
        let inter = a.intersection(&b).count();
        let union = a.union(&b).count();
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Per-node substitutes used to inactivate nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralValues {
    pub values: Matrix,
}

fn require_trained(m: &DbnModel) -> Result<()> {
    if m.is_trained() {
        Ok(())
    } else {
        Err(Error::Untrained)
    }
}

/// Score nodes by activation variance over a single-aspect probe batch.
pub fn variance_analysis(m: &DbnModel, probe: &ImageSet) -> Result<NodeStatistics> {
    require_trained(m)?;
    if probe.len() < 2 {
        return Err(Error::EmptyInput("variance_analysis"));
    }
    let aspect = probe
        .uniform_aspect()
        .ok_or_else(|| Error::Domain("variance probe mixes aspect tags".into()))?;
    let top = up_pass(m, &probe.images)?;
    Ok(NodeStatistics {
        values: column_variance(&top.activations)?,
        kind: StatKind::Variance,
        source_aspect: aspect.as_str().to_string(),
    })
}

/// Indices whose score is strictly greater than the threshold.
pub fn select_by_threshold(stats: &NodeStatistics, threshold: f64) -> RelevanceSelection {
    let node_indices = stats
        .values
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v > threshold).then_some(i))
        .collect();
    RelevanceSelection {
        node_indices,
        method: stats.kind,
        threshold,
        n_top: stats.values.cols(),
    }
}

/// Select roughly the top `quantile` fraction of nodes by score. The
/// recorded threshold is the highest unselected score, so the selection is
/// reproducible as a strict threshold cut; boundary ties fall out of the
/// selection.
pub fn select_top_quantile(stats: &NodeStatistics, quantile: f64) -> Result<RelevanceSelection> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::Domain(format!(
            "quantile {quantile} outside [0,1]"
        )));
    }
    let n = stats.values.cols();
    let k = ((quantile * n as f64).round() as usize).clamp(1, n);
    let mut sorted: Vec<f64> = stats.values.data().to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // scores are nonnegative, so -1 selects everything when k == n
    let threshold = if k == n { -1.0 } else { sorted[k] };
    Ok(select_by_threshold(stats, threshold))
}

/// |up_pass(mixed) - up_pass(single)| per top node, for one image pair.
pub fn relative_activity(m: &DbnModel, mixed: &Matrix, single: &Matrix) -> Result<Matrix> {
    require_trained(m)?;
    let a = up_pass(m, mixed)?.activations;
    let b = up_pass(m, single)?.activations;
    Ok(a.sub(&b)?.map(f64::abs))
}

/// Signed variant of `relative_activity`; kept for experiments that care
/// about the direction of the activation shift.
pub fn relative_activity_signed(m: &DbnModel, mixed: &Matrix, single: &Matrix) -> Result<Matrix> {
    require_trained(m)?;
    let a = up_pass(m, mixed)?.activations;
    let b = up_pass(m, single)?.activations;
    a.sub(&b)
}

/// Mean relative activity over all pairs in a mixed set. The single-aspect
/// counterpart of each mixed row is resolved through its pair index, on the
/// side matching the aspect of `singles`.
pub fn mean_relative_activity(
    m: &DbnModel,
    mixed_set: &ImageSet,
    singles: &ImageSet,
) -> Result<NodeStatistics> {
    require_trained(m)?;
    let pairs = mixed_set
        .pair_index
        .as_ref()
        .ok_or_else(|| Error::Pairing("mixed set carries no pair indices".into()))?;
    let aspect = singles
        .uniform_aspect()
        .ok_or_else(|| Error::Pairing("singles set mixes aspect tags".into()))?;
    let side: Vec<usize> = pairs
        .iter()
        .map(|p| match aspect {
            Aspect::Face => Ok(p.face),
            Aspect::Digit => Ok(p.digit),
            Aspect::Mixed => Err(Error::Pairing("singles set is tagged mixed".into())),
        })
        .collect::<Result<_>>()?;
    if let Some(&bad) = side.iter().find(|&&i| i >= singles.len()) {
        return Err(Error::Pairing(format!(
            "pair index {bad} out of bounds for {} singles",
            singles.len()
        )));
    }
    let mixed_top = up_pass(m, &mixed_set.images)?.activations;
    let single_top = up_pass(m, &singles.images.select_rows(&side))?.activations;
    let abs_diff = mixed_top.sub(&single_top)?.map(f64::abs);
    Ok(NodeStatistics {
        values: column_mean(&abs_diff)?,
        kind: StatKind::RelativeActivity,
        source_aspect: format!("mixed-vs-{}", aspect.as_str()),
    })
}

/// Mean top activation per node over a face-only probe.
pub fn neutral_values(m: &DbnModel, face_probe: &ImageSet) -> Result<NeutralValues> {
    require_trained(m)?;
    if face_probe.is_empty() {
        return Err(Error::EmptyInput("neutral_values"));
    }
    if face_probe.uniform_aspect() != Some(Aspect::Face) {
        return Err(Error::Domain(
            "neutral values require a face-only probe".into(),
        ));
    }
    let top = up_pass(m, &face_probe.images)?;
    Ok(NeutralValues {
        values: column_mean(&top.activations)?,
    })
}

/// Replace the selected nodes with their neutral values; every other entry
/// is returned bit-identical.
pub fn neutralize(
    top: &TopRepresentation,
    sel: &RelevanceSelection,
    nv: &NeutralValues,
) -> Result<TopRepresentation> {
    let n = top.activations.cols();
    if sel.n_top != n || nv.values.cols() != n {
        return Err(Error::Shape {
            op: "neutralize",
            lhs_rows: top.activations.rows(),
            lhs_cols: n,
            rhs_rows: 1,
            rhs_cols: nv.values.cols(),
        });
    }
    if let Some(&bad) = sel.node_indices.iter().find(|&&i| i >= n) {
        return Err(Error::Domain(format!(
            "selected node {bad} out of range for {n} top nodes"
        )));
    }
    let mut out = top.activations.clone();
    for r in 0..out.rows() {
        for &c in &sel.node_indices {
            out.set(r, c, nv.values.get(0, c));
        }
    }
    Ok(TopRepresentation { activations: out })
}

/// down_pass(neutralize(up_pass(v))).
pub fn selective_reconstruct(
    m: &DbnModel,
    v: &Matrix,
    sel: &RelevanceSelection,
    nv: &NeutralValues,
) -> Result<Matrix> {
    let top = up_pass(m, v)?;
    down_pass(m, &neutralize(&top, sel, nv)?)
}

/// Write one statistics/selection pair as CSV:
/// node_index,value,selected,method,threshold.
pub fn export_csv(stats: &NodeStatistics, sel: &RelevanceSelection, path: &Path) -> Result<()> {
    let mut out = String::from("node_index,value,selected,method,threshold\n");
    let selected: std::collections::HashSet<_> = sel.node_indices.iter().collect();
    for (i, v) in stats.values.data().iter().enumerate() {
        out.push_str(&format!(
            "{i},{v},{},{},{}\n",
            u8::from(selected.contains(&i)),
            sel.method.as_str(),
            sel.threshold
        ));
    }
    fs::write(path, out)?;
    Ok(())
}
