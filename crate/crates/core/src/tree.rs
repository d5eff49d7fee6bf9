//! Parent-child tree index over the 3D transform coefficients.
//!
//! Coefficients live on the `(i, j, t)` grid of the coefficient cube. Each
//! axis carries a dyadic band structure with scaling size `b`: coordinate
//! `c < b` sits at scale 0, and `c` in `[b*2^(s-1), b*2^s)` at scale `s`.
//! A node's level is the maximum of its per-axis scales, which labels exactly
//! the separable subbands. Roots (level 0) link to the 7 offset combinations
//! `c -> c + b`; deeper nodes follow the dyadic halving rule, with children
//! outside an axis range dropped (saturated axes, e.g. a short temporal DCT).

use crate::error::{Error, Result};

/// Which coefficient arrangement the tree is built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeLayoutKind {
    /// Wavelet on all three axes, shared level count.
    Wavelet3d,
    /// Block 3D DCT with cubic blocks `P = 2^L`, one tree per block.
    DctBlock,
    /// Wavelet in x/y, full-length DCT in t with dyadic frequency bands.
    HybridWaveletDct,
}

/// Validated tree layout description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLayout {
    pub kind: TreeLayoutKind,
    pub dims: (usize, usize, usize),
    /// Spatial level count L.
    pub levels: usize,
}

impl TreeLayout {
    pub fn wavelet3d(dims: (usize, usize, usize), levels: usize) -> Result<Self> {
        let layout = TreeLayout { kind: TreeLayoutKind::Wavelet3d, dims, levels };
        layout.validate()?;
        Ok(layout)
    }

    pub fn dct_block(dims: (usize, usize, usize), levels: usize) -> Result<Self> {
        let layout = TreeLayout { kind: TreeLayoutKind::DctBlock, dims, levels };
        layout.validate()?;
        Ok(layout)
    }

    pub fn hybrid(dims: (usize, usize, usize), levels: usize) -> Result<Self> {
        let layout = TreeLayout { kind: TreeLayoutKind::HybridWaveletDct, dims, levels };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        let (nx, ny, nt) = self.dims;
        if self.levels == 0 {
            return Err(Error::Layout("level count must be at least 1".into()));
        }
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(Error::Layout("dims must be positive".into()));
        }
        let p = 1usize << self.levels;
        match self.kind {
            TreeLayoutKind::Wavelet3d => {
                for (name, n) in [("n_x", nx), ("n_y", ny), ("n_t", nt)] {
                    if n % p != 0 {
                        return Err(Error::Layout(format!(
                            "{name} = {n} not divisible by 2^{} = {p}",
                            self.levels
                        )));
                    }
                }
            }
            TreeLayoutKind::DctBlock => {
                for (name, n) in [("n_x", nx), ("n_y", ny), ("n_t", nt)] {
                    if n % p != 0 {
                        return Err(Error::Layout(format!(
                            "{name} = {n} not divisible by block size P = {p}"
                        )));
                    }
                }
            }
            TreeLayoutKind::HybridWaveletDct => {
                for (name, n) in [("n_x", nx), ("n_y", ny)] {
                    if n % p != 0 {
                        return Err(Error::Layout(format!(
                            "{name} = {n} not divisible by 2^{} = {p}",
                            self.levels
                        )));
                    }
                }
                if !nt.is_power_of_two() {
                    return Err(Error::Layout(format!(
                        "hybrid layout requires n_t power of two, got {nt}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-axis (block size, scaling size).
    fn axis_geometry(&self) -> [(usize, usize); 3] {
        let (nx, ny, nt) = self.dims;
        let p = 1usize << self.levels;
        match self.kind {
            TreeLayoutKind::Wavelet3d => {
                [(nx, nx / p), (ny, ny / p), (nt, nt / p)]
            }
            TreeLayoutKind::DctBlock => [(p, 1), (p, 1), (p, 1)],
            TreeLayoutKind::HybridWaveletDct => {
                [(nx, nx / p), (ny, ny / p), (nt, 1)]
            }
        }
    }
}

/// Immutable index of levels, parents, and children for all N coefficients.
#[derive(Debug, Clone)]
pub struct TreeIndex {
    pub layout: Option<TreeLayout>,
    level: Vec<u8>,
    parent: Vec<Option<u32>>,
    children: Vec<Vec<u32>>,
    level_counts: Vec<usize>,
    /// Scaling block dims (b_x, b_y, b_t) within one block.
    pub scaling_dims: (usize, usize, usize),
    max_level: usize,
}

fn axis_scale(c: usize, b: usize) -> usize {
    if c < b {
        0
    } else {
        (c / b).ilog2() as usize + 1
    }
}

/// Construct the tree for a layout.
pub fn build_tree(layout: TreeLayout) -> Result<TreeIndex> {
    let (nx, ny, nt) = layout.dims;
    let n = nx * ny * nt;
    let geo = layout.axis_geometry();
    let [(bsx, bx), (bsy, by), (bst, bt)] = geo;
    let max_level = [(bsx, bx), (bsy, by), (bst, bt)]
        .iter()
        .map(|&(bs, b)| (bs / b).ilog2() as usize)
        .max()
        .unwrap();

    let flat = |i: usize, j: usize, t: usize| i + nx * (j + ny * t);

    let mut level = vec![0u8; n];
    let mut parent: Vec<Option<u32>> = vec![None; n];
    let mut children: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut level_counts = vec![0usize; max_level + 1];

    for t in 0..nt {
        for j in 0..ny {
            for i in 0..nx {
                // block origin and within-block coords
                let (oi, wi) = (i - i % bsx, i % bsx);
                let (oj, wj) = (j - j % bsy, j % bsy);
                let (ot, wt) = (t - t % bst, t % bst);
                let sx = axis_scale(wi, bx);
                let sy = axis_scale(wj, by);
                let st = axis_scale(wt, bt);
                let lvl = sx.max(sy).max(st);
                let idx = flat(i, j, t);
                level[idx] = lvl as u8;
                level_counts[lvl] += 1;

                let p = match lvl {
                    0 => None,
                    1 => {
                        // undo the `c + b` root-child offset on scale-1 axes
                        let pi = if sx == 1 { wi - bx } else { wi };
                        let pj = if sy == 1 { wj - by } else { wj };
                        let pt = if st == 1 { wt - bt } else { wt };
                        Some(flat(oi + pi, oj + pj, ot + pt))
                    }
                    _ => Some(flat(oi + wi / 2, oj + wj / 2, ot + wt / 2)),
                };
                if let Some(p) = p {
                    parent[idx] = Some(p as u32);
                    children[p].push(idx as u32);
                }
            }
        }
    }

    Ok(TreeIndex {
        layout: Some(layout),
        level,
        parent,
        children,
        level_counts,
        scaling_dims: (bx, by, bt),
        max_level,
    })
}

impl TreeIndex {
    /// Structureless index with every node at level 1 and no linkage, for
    /// sensing problems without a transform-domain tree.
    pub fn flat(n: usize) -> Self {
        TreeIndex {
            layout: None,
            level: vec![1; n],
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            level_counts: vec![0, n],
            scaling_dims: (0, 0, 0),
            max_level: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.level.len()
    }

    pub fn is_empty(&self) -> bool {
        self.level.is_empty()
    }

    /// Deepest level label L.
    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn level_counts(&self) -> &[usize] {
        &self.level_counts
    }

    fn check(&self, idx: usize) -> Result<()> {
        if idx >= self.level.len() {
            return Err(Error::Index { index: idx, len: self.level.len() });
        }
        Ok(())
    }

    pub fn level_of(&self, idx: usize) -> Result<usize> {
        self.check(idx)?;
        Ok(self.level[idx] as usize)
    }

    pub fn parent_of(&self, idx: usize) -> Result<Option<usize>> {
        self.check(idx)?;
        Ok(self.parent[idx].map(|p| p as usize))
    }

    pub fn children_of(&self, idx: usize) -> Result<&[u32]> {
        self.check(idx)?;
        Ok(&self.children[idx])
    }

    /// Unchecked accessors for the solver's hot path.
    pub fn level_unchecked(&self, idx: usize) -> usize {
        self.level[idx] as usize
    }

    pub fn parent_unchecked(&self, idx: usize) -> Option<usize> {
        self.parent[idx].map(|p| p as usize)
    }

    /// Indices ordered coarse-to-fine, ascending within each level.
    pub fn coarse_to_fine(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| (self.level[i], i));
        order
    }

    /// CSV `level,count` histogram.
    pub fn level_histogram_csv(&self) -> String {
        let mut out = String::from("level,count\n");
        for (l, c) in self.level_counts.iter().enumerate() {
            out.push_str(&format!("{l},{c}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavelet3d_8cube_level_counts() {
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 3).unwrap()).unwrap();
        assert_eq!(tree.level_counts(), &[1, 7, 56, 448]);
        assert_eq!(tree.len(), 512);
        assert_eq!(tree.scaling_dims, (1, 1, 1));
    }

    #[test]
    fn wavelet3d_child_counts_follow_linkage_rules() {
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 3).unwrap()).unwrap();
        for idx in 0..tree.len() {
            let lvl = tree.level_of(idx).unwrap();
            let nc = tree.children_of(idx).unwrap().len();
            match lvl {
                0 => assert_eq!(nc, 7),
                3 => assert_eq!(nc, 0),
                _ => assert_eq!(nc, 8),
            }
        }
    }

    #[test]
    fn parent_child_round_trip() {
        let tree = build_tree(TreeLayout::hybrid((16, 16, 8), 2).unwrap()).unwrap();
        for idx in 0..tree.len() {
            for &c in tree.children_of(idx).unwrap() {
                assert_eq!(tree.parent_of(c as usize).unwrap(), Some(idx));
            }
            if let Some(p) = tree.parent_of(idx).unwrap() {
                assert!(tree.children_of(p).unwrap().contains(&(idx as u32)));
                assert_eq!(tree.level_of(p).unwrap() + 1, tree.level_of(idx).unwrap());
            } else {
                assert_eq!(tree.level_of(idx).unwrap(), 0);
            }
        }
    }

    #[test]
    fn forest_every_node_reaches_one_root() {
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 2).unwrap()).unwrap();
        for idx in 0..tree.len() {
            let mut cur = idx;
            let mut hops = 0;
            while let Some(p) = tree.parent_of(cur).unwrap() {
                cur = p;
                hops += 1;
                assert!(hops <= tree.max_level(), "cycle at node {idx}");
            }
            assert_eq!(tree.level_of(cur).unwrap(), 0);
        }
    }

    #[test]
    fn level_sum_matches_n() {
        for layout in [
            TreeLayout::wavelet3d((16, 8, 8), 2).unwrap(),
            TreeLayout::dct_block((16, 16, 8), 3).unwrap(),
            TreeLayout::hybrid((32, 32, 8), 3).unwrap(),
        ] {
            let tree = build_tree(layout).unwrap();
            let (nx, ny, nt) = layout.dims;
            assert_eq!(tree.level_counts().iter().sum::<usize>(), nx * ny * nt);
        }
    }

    #[test]
    fn dct_block_matches_per_block_wavelet_counts() {
        // 16x16x8 with P = 8: four 8x8x8 blocks, each contributing {1,7,56,448}
        let tree = build_tree(TreeLayout::dct_block((16, 16, 8), 3).unwrap()).unwrap();
        assert_eq!(tree.level_counts(), &[4, 28, 224, 1792]);
        for idx in 0..tree.len() {
            let lvl = tree.level_of(idx).unwrap();
            let nc = tree.children_of(idx).unwrap().len();
            match lvl {
                0 => assert_eq!(nc, 7),
                3 => assert_eq!(nc, 0),
                _ => assert_eq!(nc, 8),
            }
        }
    }

    #[test]
    fn hybrid_roots_and_leaves() {
        // 32x32x8, L = 3: b = (4, 4, 1), temporal bands {0},{1},{2,3},{4..7}
        let tree = build_tree(TreeLayout::hybrid((32, 32, 8), 3).unwrap()).unwrap();
        assert_eq!(tree.scaling_dims, (4, 4, 1));
        assert_eq!(tree.level_counts()[0], 16);
        // root (0,0,0) has the 7 offset children
        let root_children = tree.children_of(0).unwrap();
        assert_eq!(root_children.len(), 7);
        let flat = |i: usize, j: usize, t: usize| (i + 32 * (j + 32 * t)) as u32;
        for c in [
            flat(4, 0, 0),
            flat(0, 4, 0),
            flat(0, 0, 1),
            flat(4, 4, 0),
            flat(4, 0, 1),
            flat(0, 4, 1),
            flat(4, 4, 1),
        ] {
            assert!(root_children.contains(&c));
        }
        // internal nodes carry 8 children when no axis saturates
        for idx in 0..tree.len() {
            let lvl = tree.level_of(idx).unwrap();
            if lvl == tree.max_level() {
                assert!(tree.children_of(idx).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn hybrid_saturated_temporal_axis_drops_children() {
        // n_t = 4 gives temporal depth 2 < L = 3; deep temporal nodes clamp
        let tree = build_tree(TreeLayout::hybrid((32, 32, 4), 3).unwrap()).unwrap();
        assert_eq!(tree.level_counts().iter().sum::<usize>(), 32 * 32 * 4);
        // a level-2 node at max temporal frequency has all dyadic children
        // out of temporal range, so it becomes a leaf below max_level
        let flat = |i: usize, j: usize, t: usize| i + 32 * (j + 32 * t);
        let idx = flat(0, 0, 3); // temporal scale 2, spatial scale 0
        assert_eq!(tree.level_of(idx).unwrap(), 2);
        assert!(tree.children_of(idx).unwrap().is_empty());
        assert_eq!(tree.max_level(), 3);
    }

    #[test]
    fn out_of_range_index_errors() {
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 1).unwrap()).unwrap();
        assert!(matches!(tree.level_of(512), Err(Error::Index { .. })));
    }

    #[test]
    fn indivisible_dims_rejected() {
        assert!(TreeLayout::wavelet3d((12, 8, 8), 3).is_err());
        assert!(TreeLayout::hybrid((32, 32, 6), 3).is_err());
        assert!(TreeLayout::dct_block((12, 16, 8), 3).is_err());
    }

    #[test]
    fn coarse_to_fine_order() {
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 2).unwrap()).unwrap();
        let order = tree.coarse_to_fine();
        let mut last = 0;
        for &i in &order {
            let l = tree.level_of(i).unwrap();
            assert!(l >= last);
            last = l;
        }
        assert_eq!(order.len(), tree.len());
    }
}
