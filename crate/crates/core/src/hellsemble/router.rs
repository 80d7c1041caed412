use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HellsembleError;
use crate::data::{DataView, InstanceId};
use crate::learners::{self, LearnerSpec, TrainedLearner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterEntry {
    /// Row position in the backing training view.
    pub row: usize,
    /// Circle of difficulty, 1-based.
    pub circle: u32,
}

/// Latest circle label of every training instance that has entered a circle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RouterDataset {
    entries: BTreeMap<InstanceId, RouterEntry>,
}

impl RouterDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Labels every `(id, row)` with `circle`, overwriting earlier labels.
    pub fn assign<I>(&mut self, members: I, circle: u32)
    where
        I: IntoIterator<Item = (InstanceId, usize)>,
    {
        for (id, row) in members {
            self.entries.insert(id, RouterEntry { row, circle });
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label(&self, id: InstanceId) -> Option<u32> {
        self.entries.get(&id).map(|e| e.circle)
    }

    pub fn labels(&self) -> BTreeMap<InstanceId, u32> {
        self.entries.iter().map(|(&id, e)| (id, e.circle)).collect()
    }

    pub fn entries(&self) -> &BTreeMap<InstanceId, RouterEntry> {
        &self.entries
    }

    /// Instance count per circle label.
    pub fn histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for e in self.entries.values() {
            *h.entry(e.circle).or_insert(0) += 1;
        }
        h
    }
}

/// Functional form of [`RouterDataset::assign`] over a view of the circle.
pub fn update_router_dataset<V: DataView + ?Sized>(
    rd: &RouterDataset,
    circle: &V,
    rows: &[usize],
    iteration: u32,
) -> RouterDataset {
    let mut next = rd.clone();
    next.assign(rows.iter().map(|&r| (circle.id(r), r)), iteration);
    next
}

/// Fits the router on circle labels. Returns `None` when only one circle is
/// present; every instance then goes to the first member.
pub fn train_router<V: DataView + ?Sized>(
    rd: &RouterDataset,
    backing: &V,
    router_spec: &LearnerSpec,
) -> Result<Option<TrainedLearner>, HellsembleError> {
    if !router_spec.kind().supports_multiclass() {
        return Err(HellsembleError::RouterUnsupported(router_spec.kind()));
    }
    if rd.is_empty() {
        return Err(HellsembleError::EmptyTrainingSet);
    }
    let rows: Vec<usize> = rd.entries.values().map(|e| e.row).collect();
    let labels: Vec<u32> = rd.entries.values().map(|e| e.circle).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        return Ok(None);
    }
    let x = backing.gather_features(&rows);
    Ok(Some(learners::fit(router_spec, &x, &labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    #[test]
    fn latest_label_wins_and_snapshots_restore() {
        let mut rd = RouterDataset::new();
        rd.assign([(1, 0), (2, 1), (3, 2)], 1);
        let snapshot = rd.clone();
        rd.assign([(3, 2)], 2);
        assert_eq!(rd.labels(), BTreeMap::from([(1, 1), (2, 1), (3, 2)]));
        rd = snapshot;
        assert_eq!(rd.labels(), BTreeMap::from([(1, 1), (2, 1), (3, 1)]));
        assert_eq!(rd.histogram(), BTreeMap::from([(1, 3)]));
    }

    #[test]
    fn single_circle_needs_no_router() {
        let data = Dataset::from_rows(&[[0.0], [1.0]], vec![0, 1]).unwrap();
        let rd = update_router_dataset(&RouterDataset::new(), &data, &[0, 1], 1);
        assert!(train_router(&rd, &data, &LearnerSpec::knn(3))
            .unwrap()
            .is_none());
        assert!(matches!(
            train_router(&RouterDataset::new(), &data, &LearnerSpec::knn(3)),
            Err(HellsembleError::EmptyTrainingSet)
        ));
        assert!(matches!(
            train_router(&rd, &data, &LearnerSpec::gaussian_nb()),
            Err(HellsembleError::RouterUnsupported(_))
        ));
    }

    #[test]
    fn separated_circles_route_perfectly() {
        let rows: Vec<[f64; 2]> = (0..10)
            .map(|i| {
                let off = if i < 5 { 0.0 } else { 10.0 };
                [off + (i % 5) as f64 * 0.1, off]
            })
            .collect();
        let data = Dataset::from_rows(&rows, vec![0; 10]).unwrap();
        let mut rd = update_router_dataset(
            &RouterDataset::new(),
            &data,
            &(0..10).collect::<Vec<_>>(),
            1,
        );
        rd = update_router_dataset(&rd, &data, &[5, 6, 7, 8, 9], 2);
        let router = train_router(&rd, &data, &LearnerSpec::knn(3))
            .unwrap()
            .unwrap();
        assert_eq!(router.class_set(), &[1, 2]);
        let routed = router.predict(&data.feature_matrix()).unwrap();
        assert_eq!(routed, vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2]);
    }
}
