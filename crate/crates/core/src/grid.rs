//! Nested structured quadrilateral meshes on the unit square.
//!
//! Fine nodes are numbered lexicographically with `x` fastest:
//! node `(ix, iy)` has global index `iy * (fine_n + 1) + ix`. Fine cells and
//! coarse elements follow the same convention on their own grids.

use crate::error::{Error, Result};

/// A fine mesh of `fine_n x fine_n` squares nested inside a coarse mesh of
/// `coarse_n x coarse_n` squares on `(0, 1)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridHierarchy {
    fine_n: usize,
    coarse_n: usize,
    sub_n: usize,
}

impl GridHierarchy {
    pub fn new(fine_n: usize, coarse_n: usize) -> Result<Self> {
        if coarse_n == 0 || fine_n < coarse_n {
            return Err(Error::Config(format!(
                "need fine_n >= coarse_n >= 1, got fine_n={fine_n}, coarse_n={coarse_n}"
            )));
        }
        if !fine_n.is_multiple_of(coarse_n) {
            return Err(Error::Config(format!(
                "fine mesh ({fine_n}) is not nested in coarse mesh ({coarse_n})"
            )));
        }
        Ok(Self { fine_n, coarse_n, sub_n: fine_n / coarse_n })
    }

    #[inline]
    pub fn fine_n(&self) -> usize {
        self.fine_n
    }

    #[inline]
    pub fn coarse_n(&self) -> usize {
        self.coarse_n
    }

    /// Fine cells per coarse element along one axis.
    #[inline]
    pub fn sub_n(&self) -> usize {
        self.sub_n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.fine_n as f64
    }

    /// Coarse mesh size `H`.
    #[inline]
    pub fn coarse_h(&self) -> f64 {
        1.0 / self.coarse_n as f64
    }

    /// Diameter of a coarse element (the diagonal of the square).
    pub fn elem_diam(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.coarse_h()
    }

    #[inline]
    pub fn n_elem(&self) -> usize {
        self.coarse_n * self.coarse_n
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.fine_n * self.fine_n
    }

    /// Nodes per side of the fine mesh.
    #[inline]
    pub fn nodes_per_side(&self) -> usize {
        self.fine_n + 1
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nodes_per_side() * self.nodes_per_side()
    }

    #[inline]
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nodes_per_side() + ix
    }

    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % self.nodes_per_side(), node / self.nodes_per_side())
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (ix, iy) = self.node_ij(node);
        (ix as f64 * self.h(), iy as f64 * self.h())
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (ix, iy) = self.node_ij(node);
        ix == 0 || iy == 0 || ix == self.fine_n || iy == self.fine_n
    }

    #[inline]
    pub fn cell_index(&self, cx: usize, cy: usize) -> usize {
        cy * self.fine_n + cx
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        ((cx as f64 + 0.5) * self.h(), (cy as f64 + 0.5) * self.h())
    }

    #[inline]
    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.coarse_n + ex
    }

    #[inline]
    pub fn element_ij(&self, elem: usize) -> (usize, usize) {
        (elem % self.coarse_n, elem / self.coarse_n)
    }

    /// Coarse element owning fine cell `(cx, cy)`.
    pub fn element_of_cell(&self, cx: usize, cy: usize) -> usize {
        self.element_index(cx / self.sub_n, cy / self.sub_n)
    }

    /// Closed node box of one coarse element.
    pub fn element_box(&self, elem: usize) -> NodeBox {
        let (ex, ey) = self.element_ij(elem);
        NodeBox::new(ex * self.sub_n, ey * self.sub_n, self.sub_n, self.sub_n)
    }

    /// Node box covering the whole fine mesh.
    pub fn domain_box(&self) -> NodeBox {
        NodeBox::new(0, 0, self.fine_n, self.fine_n)
    }

    /// The `m`-layer oversampling region of coarse element `elem`.
    ///
    /// On a structured mesh the recursive closure-neighbourhood expansion is
    /// the block of coarse cells within Chebyshev distance `m`, clipped to
    /// the domain.
    pub fn oversample(&self, elem: usize, layers: usize) -> Region {
        assert!(elem < self.n_elem(), "coarse element {elem} out of range");
        let (ex, ey) = self.element_ij(elem);
        let x0 = ex.saturating_sub(layers);
        let y0 = ey.saturating_sub(layers);
        let x1 = (ex + layers + 1).min(self.coarse_n);
        let y1 = (ey + layers + 1).min(self.coarse_n);
        Region::from_coarse_block(self, CoarseBlock { x0, y0, x1, y1 })
    }

    /// Region covering all of the domain.
    pub fn whole(&self) -> Region {
        Region::from_coarse_block(
            self,
            CoarseBlock { x0: 0, y0: 0, x1: self.coarse_n, y1: self.coarse_n },
        )
    }

    pub fn local_dof_map(&self, region: &Region) -> LocalDofMap {
        LocalDofMap::new(self, region.node_box())
    }
}

/// Half-open block `[x0, x1) x [y0, y1)` of coarse elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoarseBlock {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CoarseBlock {
    pub fn contains(&self, ex: usize, ey: usize) -> bool {
        (self.x0..self.x1).contains(&ex) && (self.y0..self.y1).contains(&ey)
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

/// A closed rectangle of fine nodes: `x0..=x0+cells_x` by `y0..=y0+cells_y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeBox {
    pub x0: usize,
    pub y0: usize,
    pub cells_x: usize,
    pub cells_y: usize,
}

impl NodeBox {
    pub fn new(x0: usize, y0: usize, cells_x: usize, cells_y: usize) -> Self {
        Self { x0, y0, cells_x, cells_y }
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.cells_x + 1
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.cells_y + 1
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nx() * self.ny()
    }

    #[inline]
    pub fn x1(&self) -> usize {
        self.x0 + self.cells_x
    }

    #[inline]
    pub fn y1(&self) -> usize {
        self.y0 + self.cells_y
    }

    /// Local index of fine node `(ix, iy)`, if it lies in the box.
    #[inline]
    pub fn local(&self, ix: usize, iy: usize) -> Option<usize> {
        if ix < self.x0 || iy < self.y0 || ix > self.x1() || iy > self.y1() {
            return None;
        }
        Some((iy - self.y0) * self.nx() + (ix - self.x0))
    }

    #[inline]
    pub fn local_ij(&self, local: usize) -> (usize, usize) {
        (self.x0 + local % self.nx(), self.y0 + local / self.nx())
    }

    #[inline]
    pub fn on_boundary(&self, ix: usize, iy: usize) -> bool {
        ix == self.x0 || iy == self.y0 || ix == self.x1() || iy == self.y1()
    }

    pub fn intersect(&self, other: &NodeBox) -> Option<NodeBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        (x0 <= x1 && y0 <= y1).then(|| NodeBox::new(x0, y0, x1 - x0, y1 - y0))
    }
}

/// An oversampling region `K_i^m`: a union of coarse elements with its
/// discrete `H^1_0` node set.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    elements: Vec<usize>,
    block: CoarseBlock,
    node_box: NodeBox,
    interior: Vec<usize>,
}

impl Region {
    fn from_coarse_block(g: &GridHierarchy, block: CoarseBlock) -> Self {
        let mut elements = Vec::with_capacity(block.width() * block.height());
        for ey in block.y0..block.y1 {
            for ex in block.x0..block.x1 {
                elements.push(g.element_index(ex, ey));
            }
        }
        let s = g.sub_n();
        let node_box = NodeBox::new(
            block.x0 * s,
            block.y0 * s,
            block.width() * s,
            block.height() * s,
        );
        let mut interior = Vec::new();
        for iy in node_box.y0 + 1..node_box.y1() {
            for ix in node_box.x0 + 1..node_box.x1() {
                interior.push(g.node_index(ix, iy));
            }
        }
        Self { elements, block, node_box, interior }
    }

    /// Coarse element indices, sorted ascending.
    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn block(&self) -> CoarseBlock {
        self.block
    }

    pub fn node_box(&self) -> NodeBox {
        self.node_box
    }

    /// Global indices of the free (discrete `H^1_0`) nodes, lexicographic.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn contains_element(&self, g: &GridHierarchy, elem: usize) -> bool {
        let (ex, ey) = g.element_ij(elem);
        self.block.contains(ex, ey)
    }

    pub fn is_whole(&self, g: &GridHierarchy) -> bool {
        self.elements.len() == g.n_elem()
    }
}

/// Bidirectional local/global node numbering on a node box.
#[derive(Debug, Clone)]
pub struct LocalDofMap {
    node_box: NodeBox,
    nodes_per_side: usize,
    local_to_global: Vec<usize>,
    interior: Vec<bool>,
}

impl LocalDofMap {
    pub fn new(g: &GridHierarchy, node_box: NodeBox) -> Self {
        let mut local_to_global = Vec::with_capacity(node_box.n_nodes());
        let mut interior = Vec::with_capacity(node_box.n_nodes());
        for iy in node_box.y0..=node_box.y1() {
            for ix in node_box.x0..=node_box.x1() {
                let node = g.node_index(ix, iy);
                local_to_global.push(node);
                interior.push(!node_box.on_boundary(ix, iy) && !g.is_boundary_node(node));
            }
        }
        Self { node_box, nodes_per_side: g.nodes_per_side(), local_to_global, interior }
    }

    pub fn len(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_to_global.is_empty()
    }

    pub fn node_box(&self) -> NodeBox {
        self.node_box
    }

    pub fn to_global(&self, local: usize) -> usize {
        self.local_to_global[local]
    }

    pub fn to_local(&self, global: usize) -> Option<usize> {
        let ix = global % self.nodes_per_side;
        let iy = global / self.nodes_per_side;
        self.node_box.local(ix, iy)
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }
}
