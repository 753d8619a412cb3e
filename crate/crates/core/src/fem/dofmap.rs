use std::ops::Range;

/// Blocks of the optimality system, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    W,
    V,
    P,
    B,
    C,
    LW,
    LV,
    LP,
    LB,
    LVol,
    LBc,
}

impl Block {
    pub const ALL: [Block; 11] = [
        Block::W,
        Block::V,
        Block::P,
        Block::B,
        Block::C,
        Block::LW,
        Block::LV,
        Block::LP,
        Block::LB,
        Block::LVol,
        Block::LBc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::W => "w",
            Block::V => "v",
            Block::P => "p",
            Block::B => "b",
            Block::C => "c",
            Block::LW => "lambda_w",
            Block::LV => "lambda_v",
            Block::LP => "lambda_p",
            Block::LB => "lambda_b",
            Block::LVol => "lambda_vol",
            Block::LBc => "lambda_bc",
        }
    }

    /// The residual block obtained by differentiating with respect to this
    /// variable pairs with the multiplier/primal partner listed here.
    pub fn partner(self) -> Block {
        match self {
            Block::W => Block::LW,
            Block::V => Block::LV,
            Block::P => Block::LP,
            Block::B => Block::LB,
            Block::C => Block::C,
            Block::LW => Block::W,
            Block::LV => Block::V,
            Block::LP => Block::P,
            Block::LB => Block::B,
            Block::LVol => Block::LVol,
            Block::LBc => Block::LBc,
        }
    }
}

/// Contiguous layout `[w | v | p | b | c | λw | λv | λp | λb | λvol | λbc]`.
/// Vector blocks are interleaved per node (`x0 y0 x1 y1 …`); `b`, `c` and
/// `λb` are indexed by position along the obstacle loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofMap {
    pub num_vertices: usize,
    pub num_boundary: usize,
    offsets: [usize; 12],
}

impl DofMap {
    pub fn new(num_vertices: usize, num_boundary: usize) -> Self {
        let mut offsets = [0; 12];
        for (i, b) in Block::ALL.iter().enumerate() {
            offsets[i + 1] = offsets[i] + Self::size_of(*b, num_vertices, num_boundary);
        }
        Self {
            num_vertices,
            num_boundary,
            offsets,
        }
    }

    fn size_of(b: Block, nv: usize, nb: usize) -> usize {
        match b {
            Block::W | Block::V | Block::LW | Block::LV => 2 * nv,
            Block::P | Block::LP => nv,
            Block::B | Block::LB => 2 * nb,
            Block::C => nb,
            Block::LVol => 1,
            Block::LBc => 2,
        }
    }

    fn index(b: Block) -> usize {
        Block::ALL.iter().position(|&x| x == b).unwrap()
    }

    pub fn range(&self, b: Block) -> Range<usize> {
        let i = Self::index(b);
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn offset(&self, b: Block) -> usize {
        self.offsets[Self::index(b)]
    }

    pub fn len(&self) -> usize {
        self.offsets[11]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global index of component `k` of node `i` in a vector block, or of
    /// node `i` in a scalar block (`k` ignored).
    #[inline]
    pub fn dof(&self, b: Block, i: usize, k: usize) -> usize {
        match b {
            Block::W | Block::V | Block::LW | Block::LV | Block::B | Block::LB => self.offset(b) + 2 * i + k,
            Block::LBc => self.offset(b) + k,
            _ => self.offset(b) + i,
        }
    }

    /// Which block a global index belongs to.
    pub fn block_of(&self, dof: usize) -> Option<Block> {
        Block::ALL.into_iter().find(|&b| self.range(b).contains(&dof))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_partition_the_vector() {
        let d = DofMap::new(10, 4);
        let mut covered = vec![0; d.len()];
        for b in Block::ALL {
            for i in d.range(b) {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        assert_eq!(d.len(), 10 * 10 + 5 * 4 + 3);
        assert_eq!(d.dof(Block::LV, 3, 1), d.offset(Block::LV) + 7);
        assert_eq!(d.block_of(d.offset(Block::LBc) + 1), Some(Block::LBc));
    }
}
