use super::rings::RawTreeSeries;

pub const DEFAULT_AGE_BREAKS: [u32; 4] = [75, 100, 125, 150];

/// 1-based class of `age` for ascending `breaks`, with `[lo, hi)` classes.
pub fn age_class(age: u32, breaks: &[u32]) -> usize {
    breaks.iter().take_while(|b| **b <= age).count() + 1
}

#[derive(Debug, Clone, Default)]
pub struct AgeSplit {
    /// `breaks.len() + 1` collections; entry `i` is class `i + 1`.
    pub classes: Vec<Vec<RawTreeSeries>>,
    /// Trees whose age at the reference year is unknown, with the reason.
    pub excluded: Vec<(RawTreeSeries, String)>,
}

impl AgeSplit {
    pub fn class(&self, class: usize) -> Option<&[RawTreeSeries]> {
        class.checked_sub(1).and_then(|i| self.classes.get(i)).map(Vec::as_slice)
    }
}

/// Partitions trees by their ring count at `reference_year`.
pub fn split_age_classes(trees: &[RawTreeSeries], breaks: &[u32], reference_year: i32) -> AgeSplit {
    let mut split = AgeSplit { classes: vec![Vec::new(); breaks.len() + 1], excluded: Vec::new() };
    for tree in trees {
        match tree.age_at(reference_year) {
            Some(age) => split.classes[age_class(age, breaks) - 1].push(tree.clone()),
            None => {
                let reason = format!("first ring {} is after reference year {reference_year}", tree.first_year());
                log::info!("excluding tree {}: {reason}", tree.tree_id);
                split.excluded.push((tree.clone(), reason));
            }
        }
    }
    for (i, class) in split.classes.iter().enumerate() {
        if class.is_empty() {
            log::info!("age class {} is empty", i + 1);
        }
    }
    split
}
