//! Named collections of point clouds with optional labels and splits.

use std::collections::BTreeMap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// A named collection of clouds with optional per-cloud class labels,
/// optional per-point labels, and named index splits.
///
/// Splits are pairwise disjoint. The name `"all"`, unless explicitly
/// defined, refers to every cloud.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    clouds: Vec<PointCloud>,
    class_labels: Option<Vec<usize>>,
    point_labels: Option<Vec<Vec<usize>>>,
    num_classes: Option<usize>,
    splits: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, clouds: Vec<PointCloud>) -> Result<Self> {
        if clouds.is_empty() {
            return Err(Error::Dataset("dataset has no clouds".into()));
        }
        Ok(Dataset {
            name: name.into(),
            clouds,
            class_labels: None,
            point_labels: None,
            num_classes: None,
            splits: BTreeMap::new(),
        })
    }

    /// Attaches one class label per cloud; labels must lie in `[0, num_classes)`.
    pub fn with_class_labels(mut self, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != self.clouds.len() {
            return Err(Error::Dataset(format!(
                "{} class labels for {} clouds",
                labels.len(),
                self.clouds.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Dataset(format!(
                "class label {bad} out of range [0, {num_classes})"
            )));
        }
        self.class_labels = Some(labels);
        self.num_classes = Some(num_classes);
        Ok(self)
    }

    /// Attaches per-point labels; each cloud's label list must match its size.
    pub fn with_point_labels(mut self, labels: Vec<Vec<usize>>) -> Result<Self> {
        if labels.len() != self.clouds.len() {
            return Err(Error::Dataset(format!(
                "{} point-label lists for {} clouds",
                labels.len(),
                self.clouds.len()
            )));
        }
        for (i, (cloud, l)) in self.clouds.iter().zip(&labels).enumerate() {
            if cloud.len() != l.len() {
                return Err(Error::Dataset(format!(
                    "cloud {i}: {} point labels for {} points",
                    l.len(),
                    cloud.len()
                )));
            }
        }
        self.point_labels = Some(labels);
        Ok(self)
    }

    /// Defines a named split. Indices must be in bounds, unique, and disjoint
    /// from every previously defined split.
    pub fn with_split(mut self, name: impl Into<String>, indices: Vec<usize>) -> Result<Self> {
        let name = name.into();
        let mut seen = vec![false; self.clouds.len()];
        for (other, list) in &self.splits {
            if *other == name {
                return Err(Error::Dataset(format!("split '{name}' already defined")));
            }
            for &i in list {
                seen[i] = true;
            }
        }
        let mut in_this = vec![false; self.clouds.len()];
        for &i in &indices {
            if i >= self.clouds.len() {
                return Err(Error::Dataset(format!(
                    "split '{name}': index {i} out of bounds ({} clouds)",
                    self.clouds.len()
                )));
            }
            if in_this[i] {
                return Err(Error::Dataset(format!(
                    "split '{name}': duplicate index {i}"
                )));
            }
            if seen[i] {
                return Err(Error::Dataset(format!(
                    "split '{name}': index {i} already belongs to another split"
                )));
            }
            in_this[i] = true;
        }
        self.splits.insert(name, indices);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn clouds(&self) -> &[PointCloud] {
        &self.clouds
    }

    pub fn cloud(&self, i: usize) -> &PointCloud {
        &self.clouds[i]
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        self.class_labels.as_deref()
    }

    pub fn point_labels(&self) -> Option<&[Vec<usize>]> {
        self.point_labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits.keys().map(|s| s.as_str())
    }

    /// Index list of a named split. `"all"` falls back to every index when
    /// not explicitly defined.
    pub fn split(&self, name: &str) -> Result<Vec<usize>> {
        if let Some(list) = self.splits.get(name) {
            return Ok(list.clone());
        }
        if name == "all" {
            return Ok((0..self.clouds.len()).collect());
        }
        Err(Error::UnknownSplit(name.to_string()))
    }

    /// New dataset containing only the clouds of `split`, in split order.
    /// The result carries no splits of its own.
    pub fn restricted_to(&self, split: &str) -> Result<Dataset> {
        let indices = self.split(split)?;
        if indices.is_empty() {
            return Err(Error::Dataset(format!("split '{split}' is empty")));
        }
        Ok(Dataset {
            name: format!("{}/{}", self.name, split),
            clouds: indices.iter().map(|&i| self.clouds[i].clone()).collect(),
            class_labels: self
                .class_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            point_labels: self
                .point_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
            num_classes: self.num_classes,
            splits: BTreeMap::new(),
        })
    }

    /// Adds a train/test split pair. With class labels the split is
    /// stratified: the first `round(fraction * count)` clouds of each class
    /// (in dataset order) go to train. Without labels the dataset is split
    /// by plain index order.
    pub fn with_stratified_split(
        self,
        train_name: &str,
        test_name: &str,
        train_fraction: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Dataset(format!(
                "train fraction {train_fraction} not in [0, 1]"
            )));
        }
        let groups: Vec<Vec<usize>> = match (&self.class_labels, self.num_classes) {
            (Some(labels), Some(num_classes)) => {
                let mut groups = vec![Vec::new(); num_classes];
                for (i, &c) in labels.iter().enumerate() {
                    groups[c].push(i);
                }
                groups
            }
            _ => vec![(0..self.clouds.len()).collect()],
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for group in groups {
            let take = (train_fraction * group.len() as f64).round() as usize;
            train.extend(&group[..take]);
            test.extend(&group[take..]);
        }
        self.with_split(train_name, train)?.with_split(test_name, test)
    }

    /// Part labels observed per object class across the whole dataset
    /// (sorted, deduplicated). Requires both label kinds.
    pub fn parts_per_class(&self) -> Result<BTreeMap<usize, Vec<usize>>> {
        let class_labels = self
            .class_labels
            .as_ref()
            .ok_or_else(|| Error::Dataset("dataset has no class labels".into()))?;
        let point_labels = self
            .point_labels
            .as_ref()
            .ok_or_else(|| Error::Dataset("dataset has no point labels".into()))?;
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&class, labels) in class_labels.iter().zip(point_labels) {
            let entry = map.entry(class).or_default();
            for &part in labels {
                if !entry.contains(&part) {
                    entry.push(part);
                }
            }
        }
        for parts in map.values_mut() {
            parts.sort_unstable();
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(v: f64) -> PointCloud {
        PointCloud::from_coords(&[[v, v, v]]).unwrap()
    }

    #[test]
    fn class_label_validation() {
        let ds = Dataset::new("d", vec![cloud(0.0), cloud(1.0)]).unwrap();
        assert!(ds.clone().with_class_labels(vec![0], 2).is_err());
        assert!(ds.clone().with_class_labels(vec![0, 2], 2).is_err());
        let ds = ds.with_class_labels(vec![0, 1], 2).unwrap();
        assert_eq!(ds.num_classes(), Some(2));
    }

    #[test]
    fn point_label_length_must_match() {
        let ds = Dataset::new("d", vec![cloud(0.0)]).unwrap();
        assert!(ds.clone().with_point_labels(vec![vec![0, 1]]).is_err());
        assert!(ds.with_point_labels(vec![vec![3]]).is_ok());
    }

    #[test]
    fn splits_disjoint_and_in_bounds() {
        let ds = Dataset::new("d", vec![cloud(0.0), cloud(1.0), cloud(2.0)]).unwrap();
        let ds = ds.with_split("train", vec![0, 1]).unwrap();
        assert!(ds.clone().with_split("test", vec![1]).is_err());
        assert!(ds.clone().with_split("test", vec![3]).is_err());
        let ds = ds.with_split("test", vec![2]).unwrap();
        assert_eq!(ds.split("train").unwrap(), vec![0, 1]);
        assert_eq!(ds.split("all").unwrap(), vec![0, 1, 2]);
        assert!(matches!(ds.split("val"), Err(Error::UnknownSplit(_))));
    }

    #[test]
    fn restricted_to_carries_labels() {
        let ds = Dataset::new("d", vec![cloud(0.0), cloud(1.0), cloud(2.0)])
            .unwrap()
            .with_class_labels(vec![0, 1, 0], 2)
            .unwrap()
            .with_split("test", vec![2, 0])
            .unwrap();
        let sub = ds.restricted_to("test").unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.class_labels().unwrap(), &[0, 0]);
        assert_eq!(sub.cloud(0).points()[0].x, 2.0);
    }

    #[test]
    fn parts_per_class_collects_sorted_unique() {
        let ds = Dataset::new("d", vec![cloud(0.0), cloud(1.0)])
            .unwrap()
            .with_class_labels(vec![1, 1], 2)
            .unwrap()
            .with_point_labels(vec![vec![4], vec![2]])
            .unwrap();
        let parts = ds.parts_per_class().unwrap();
        assert_eq!(parts.get(&1).unwrap(), &vec![2, 4]);
        assert!(parts.get(&0).is_none());
    }
}
