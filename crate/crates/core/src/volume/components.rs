use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, Grid};
use crate::error::{Error, Result};

/// Voxel adjacency used to group foreground voxels into lesions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Shared face.
    #[serde(rename = "6")]
    Six,
    /// Shared face or edge.
    #[serde(rename = "18")]
    Eighteen,
    /// Shared face, edge or corner.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn neighbors(self) -> usize {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Neighbor offsets: every non-zero offset in {-1,0,1}³ whose number of
    /// non-zero components is within the connectivity's limit.
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let max_nonzero = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::with_capacity(self.neighbors());
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let nz = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                    if nz >= 1 && nz <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.neighbors())
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "6" => Ok(Connectivity::Six),
            "18" => Ok(Connectivity::Eighteen),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidParameter(format!("connectivity must be 6, 18 or 26, got {other:?}"))),
        }
    }
}

/// Per-voxel component labels (0 = background) plus the voxels of each
/// component, labeled `1..=count` in ascending order of each component's
/// smallest linear index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledComponents {
    grid: Grid,
    connectivity: Connectivity,
    labels: Vec<u32>,
    voxel_lists: Vec<Vec<usize>>,
}

impl LabeledComponents {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    /// Number of components.
    pub fn count(&self) -> usize {
        self.voxel_lists.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, index: usize) -> u32 {
        self.labels[index]
    }

    /// Voxel indices (ascending) of component `label` (1-based).
    pub fn voxels(&self, label: u32) -> &[usize] {
        &self.voxel_lists[label as usize - 1]
    }

    /// Iterates `(label, voxels)` for every component.
    pub fn components(&self) -> impl Iterator<Item = (u32, &[usize])> {
        self.voxel_lists.iter().enumerate().map(|(i, v)| (i as u32 + 1, v.as_slice()))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.voxel_lists.iter().map(Vec::len).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.voxel_lists.iter().map(Vec::len).sum()
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask { grid: self.grid, data: self.labels.iter().map(|&l| l != 0).collect() }
    }
}

/// Labels the maximal connected foreground components of `mask`.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabeledComponents {
    let grid = *mask.grid();
    let [nx, ny, nz] = grid.dims;
    let offsets = connectivity.offsets();
    let data = mask.data();
    let mut labels = vec![0u32; data.len()];
    let mut voxel_lists: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..data.len() {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        let label = voxel_lists.len() as u32 + 1;
        let mut members = Vec::new();
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let [x, y, z] = grid.coords(i);
            for off in &offsets {
                let (qx, qy, qz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                if qx < 0 || qy < 0 || qz < 0 || qx >= nx as i64 || qy >= ny as i64 || qz >= nz as i64 {
                    continue;
                }
                let j = grid.index(qx as usize, qy as usize, qz as usize);
                if data[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        voxel_lists.push(members);
    }

    LabeledComponents { grid, connectivity, labels, voxel_lists }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn grid(dims: [usize; 3]) -> Grid {
        Grid::new(dims, Spacing::isotropic(1.0).unwrap()).unwrap()
    }

    #[test]
    fn offsets_have_expected_sizes() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let cc = connected_components(&BinaryMask::empty(grid([4, 4, 4])), Connectivity::TwentySix);
        assert_eq!(cc.count(), 0);
        assert!(cc.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn face_neighbors_join_under_any_connectivity() {
        let g = grid([2, 2, 2]);
        let m = BinaryMask::from_indices(g, [g.index(0, 0, 0), g.index(1, 0, 0)]).unwrap();
        for c in [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix] {
            assert_eq!(connected_components(&m, c).count(), 1);
        }
    }

    #[test]
    fn corner_neighbors_join_only_under_26() {
        let g = grid([2, 2, 2]);
        let m = BinaryMask::from_indices(g, [g.index(0, 0, 0), g.index(1, 1, 1)]).unwrap();
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eighteen).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 1);
    }

    #[test]
    fn edge_neighbors_join_under_18_and_26() {
        let g = grid([2, 2, 2]);
        let m = BinaryMask::from_indices(g, [g.index(0, 0, 0), g.index(1, 1, 0)]).unwrap();
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eighteen).count(), 1);
    }

    #[test]
    fn labels_follow_smallest_index() {
        let g = grid([5, 1, 1]);
        let m = BinaryMask::from_indices(g, [4, 0, 2]).unwrap();
        let cc = connected_components(&m, Connectivity::Six);
        assert_eq!(cc.count(), 3);
        assert_eq!(cc.voxels(1), &[0]);
        assert_eq!(cc.voxels(2), &[2]);
        assert_eq!(cc.voxels(3), &[4]);
        assert_eq!(cc.label_at(4), 3);
    }

    #[test]
    fn connectivity_parses() {
        assert_eq!("18".parse::<Connectivity>().unwrap(), Connectivity::Eighteen);
        assert!("8".parse::<Connectivity>().is_err());
    }
}
