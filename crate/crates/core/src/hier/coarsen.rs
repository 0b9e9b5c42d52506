//! Graph coarsening: farthest-point vertex selection, per-level bipartite
//! connectivity, and the sparse inter-level transfer maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::geom::V3;
use crate::fe::BlankMesh;
use crate::graph::element_centers;
use crate::hier::knn::KdTree;
use crate::model::HierarchyConfig;

/// Selects `count` well-spread points by greedy farthest-point sampling.
///
/// The first pick is `start`; each following pick maximises the distance to
/// the already-selected set, with exact ties resolved to the lower index.
/// Returns selection order. Deterministic: no randomness is involved.
pub fn farthest_point_sample(points: &[V3], count: usize, start: usize) -> Result<Vec<usize>> {
    if count == 0 || count > points.len() {
        return Err(Error::Parameter(format!(
            "cannot select {count} of {} points",
            points.len()
        )));
    }
    if start >= points.len() {
        return Err(Error::Parameter(format!(
            "start index {start} out of range for {} points",
            points.len()
        )));
    }
    let d2 = |a: V3, b: V3| {
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    };
    let mut selected = Vec::with_capacity(count);
    selected.push(start);
    let mut dist: Vec<f64> = points.iter().map(|&p| d2(p, points[start])).collect();
    while selected.len() < count {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in dist.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        selected.push(best);
        for (i, d) in dist.iter_mut().enumerate() {
            let nd = d2(points[i], points[best]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}

/// One level of the graph hierarchy. Level 0 is the original bipartite
/// graph; each coarser level keeps a farthest-point subset of the previous
/// level's vertices, separately for mesh-node and element vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLevel {
    /// For each node vertex at this level, its index in the original mesh.
    pub node_orig: Vec<usize>,
    /// For each element vertex at this level, its original element index.
    pub elem_orig: Vec<usize>,
    /// Reference positions of this level's node vertices.
    pub node_pos: Vec<V3>,
    /// Reference centres of this level's element vertices.
    pub elem_pos: Vec<V3>,
    /// Within-level bipartite edges: source node vertex per edge.
    pub edge_nodes: Vec<usize>,
    /// Within-level bipartite edges: element vertex per edge.
    pub edge_elems: Vec<usize>,
}

impl GraphLevel {
    /// Number of node vertices at this level.
    pub fn num_nodes(&self) -> usize {
        self.node_orig.len()
    }

    /// Number of element vertices at this level.
    pub fn num_elements(&self) -> usize {
        self.elem_orig.len()
    }
}

/// Sparse fine-to-coarse assignment for one vertex stream: every fine
/// vertex is linked to its `k` nearest coarse vertices. The upward map is
/// the exact reverse of the same edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMap {
    /// Fine endpoint of each inter-level edge.
    pub fine_idx: Vec<usize>,
    /// Coarse endpoint of each inter-level edge.
    pub coarse_idx: Vec<usize>,
    pub num_fine: usize,
    pub num_coarse: usize,
    /// Neighbours per fine vertex.
    pub k: usize,
}

impl TransferMap {
    /// Number of inter-level edges.
    pub fn num_edges(&self) -> usize {
        self.fine_idx.len()
    }
}

/// Builds the fine→coarse map: `k` exact nearest coarse vertices per fine
/// vertex (ties to the lower coarse index). Edges are ordered fine-major,
/// nearest first.
pub fn build_knn_map(fine: &[V3], coarse: &[V3], k: usize) -> Result<TransferMap> {
    if k == 0 || k > coarse.len() {
        return Err(Error::Parameter(format!(
            "k_nn = {k} out of range for {} coarse vertices",
            coarse.len()
        )));
    }
    let tree = KdTree::build(coarse)?;
    let mut fine_idx = Vec::with_capacity(fine.len() * k);
    let mut coarse_idx = Vec::with_capacity(fine.len() * k);
    for (f, &p) in fine.iter().enumerate() {
        for nb in tree.nearest(p, k)? {
            fine_idx.push(f);
            coarse_idx.push(nb);
        }
    }
    Ok(TransferMap { fine_idx, coarse_idx, num_fine: fine.len(), num_coarse: coarse.len(), k })
}

/// The pair of transfer maps between two adjacent levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterLevelMap {
    /// Map for mesh-node vertices.
    pub node: TransferMap,
    /// Map for element vertices.
    pub elem: TransferMap,
}

/// Complete multi-level structure for one mesh: per-level vertex selections
/// and connectivity plus the maps joining adjacent levels. Built once per
/// mesh and shared read-only by every forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphHierarchy {
    /// Levels ordered fine to coarse; `levels[0]` mirrors the input mesh.
    pub levels: Vec<GraphLevel>,
    /// `maps[l]` joins level `l` (fine side) to level `l + 1`.
    pub maps: Vec<InterLevelMap>,
}

impl GraphHierarchy {
    /// Number of coarsening steps (0 = flat).
    pub fn num_coarse_levels(&self) -> usize {
        self.maps.len()
    }

    /// The coarsest level (level 0 when no coarsening was applied).
    pub fn coarsest(&self) -> &GraphLevel {
        self.levels.last().expect("at least one level")
    }
}

/// Minimum vertex count allowed at any level of either stream.
pub const MIN_LEVEL_VERTICES: usize = 4;

/// Builds the hierarchy for a mesh: `config.levels` farthest-point
/// coarsening steps at `config.ratio`, bipartite connectivity per coarse
/// level joining each element vertex to its `config.k_elem` nearest node
/// vertices, and `config.k_nn` inter-level links per fine vertex.
///
/// All geometry is taken from the reference configuration, so the result
/// is valid for every snapshot of every trajectory on this mesh.
pub fn build_hierarchy(mesh: &BlankMesh, config: &HierarchyConfig) -> Result<GraphHierarchy> {
    config.validate()?;
    let centers = element_centers(&mesh.positions, &mesh.quads);
    let mut edge_nodes = Vec::with_capacity(4 * mesh.quads.len());
    let mut edge_elems = Vec::with_capacity(4 * mesh.quads.len());
    for (e, quad) in mesh.quads.iter().enumerate() {
        for &n in quad {
            edge_nodes.push(n);
            edge_elems.push(e);
        }
    }
    let mut levels = vec![GraphLevel {
        node_orig: (0..mesh.positions.len()).collect(),
        elem_orig: (0..mesh.quads.len()).collect(),
        node_pos: mesh.positions.clone(),
        elem_pos: centers,
        edge_nodes,
        edge_elems,
    }];
    let mut maps = Vec::with_capacity(config.levels);
    for _ in 0..config.levels {
        let prev = levels.last().expect("at least one level");
        let n_count = (config.ratio * prev.num_nodes() as f64).ceil() as usize;
        let e_count = (config.ratio * prev.num_elements() as f64).ceil() as usize;
        if n_count < MIN_LEVEL_VERTICES || e_count < MIN_LEVEL_VERTICES {
            return Err(Error::Parameter(format!(
                "coarsening ratio {} leaves {n_count} node / {e_count} element vertices; \
                 at least {MIN_LEVEL_VERTICES} of each are required",
                config.ratio
            )));
        }
        let n_start = (config.seed % prev.num_nodes() as u64) as usize;
        let e_start = (config.seed % prev.num_elements() as u64) as usize;
        let node_sel = farthest_point_sample(&prev.node_pos, n_count, n_start)?;
        let elem_sel = farthest_point_sample(&prev.elem_pos, e_count, e_start)?;
        let node_pos: Vec<V3> = node_sel.iter().map(|&i| prev.node_pos[i]).collect();
        let elem_pos: Vec<V3> = elem_sel.iter().map(|&i| prev.elem_pos[i]).collect();
        let node_orig: Vec<usize> = node_sel.iter().map(|&i| prev.node_orig[i]).collect();
        let elem_orig: Vec<usize> = elem_sel.iter().map(|&i| prev.elem_orig[i]).collect();
        if config.k_elem > node_pos.len() {
            return Err(Error::Parameter(format!(
                "k_elem = {} exceeds the {} coarse node vertices",
                config.k_elem,
                node_pos.len()
            )));
        }
        let tree = KdTree::build(&node_pos)?;
        let mut edge_nodes = Vec::with_capacity(elem_pos.len() * config.k_elem);
        let mut edge_elems = Vec::with_capacity(elem_pos.len() * config.k_elem);
        for (e, &c) in elem_pos.iter().enumerate() {
            for nb in tree.nearest(c, config.k_elem)? {
                edge_nodes.push(nb);
                edge_elems.push(e);
            }
        }
        let fine = levels.last().expect("at least one level");
        maps.push(InterLevelMap {
            node: build_knn_map(&fine.node_pos, &node_pos, config.k_nn)?,
            elem: build_knn_map(&fine.elem_pos, &elem_pos, config.k_nn)?,
        });
        levels.push(GraphLevel { node_orig, elem_orig, node_pos, elem_pos, edge_nodes, edge_elems });
    }
    Ok(GraphHierarchy { levels, maps })
}

/// Raw geometric descriptors of one level's bipartite edges, in the same
/// eight-channel layout the fine graph uses (reference offset with its
/// norm, twice, since only reference geometry exists at coarse levels).
pub fn coarse_edge_descriptors(level: &GraphLevel) -> crate::nn::Mat<f64> {
    let mut feats = crate::nn::Mat::zeros(level.edge_nodes.len(), 8);
    for e in 0..level.edge_nodes.len() {
        let n = level.node_pos[level.edge_nodes[e]];
        let c = level.elem_pos[level.edge_elems[e]];
        let d = [n[0] - c[0], n[1] - c[1], n[2] - c[2]];
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        for base in [0, 4] {
            feats.set(e, base, norm);
            for k in 0..3 {
                feats.set(e, base + 1 + k, d[k]);
            }
        }
    }
    feats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::build_blank_mesh;

    fn grid_points(n: usize) -> Vec<V3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push([i as f64, j as f64, 0.0]);
            }
        }
        pts
    }

    fn config(levels: usize, ratio: f64) -> HierarchyConfig {
        HierarchyConfig { levels, ratio, ..HierarchyConfig::default() }
    }

    #[test]
    fn first_pick_after_start_is_the_farthest_point() {
        let pts = grid_points(6);
        for start in [0, 7, 20, 35] {
            let sel = farthest_point_sample(&pts, 2, start).unwrap();
            let d2 = |a: V3, b: V3| {
                (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
            };
            let brute = (0..pts.len())
                .max_by(|&a, &b| {
                    d2(pts[a], pts[start])
                        .partial_cmp(&d2(pts[b], pts[start]))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap();
            assert_eq!(sel, vec![start, brute], "start = {start}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_duplicate_free() {
        let pts = grid_points(7);
        let a = farthest_point_sample(&pts, 12, 3).unwrap();
        let b = farthest_point_sample(&pts, 12, 3).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 12, "selections must be distinct");
    }

    #[test]
    fn quarter_ratio_walks_64_to_16_to_4() {
        // 9×9 mesh: 64 elements. Two levels at ratio 0.25 give 16 then 4
        // element vertices.
        let mesh = build_blank_mesh(9, 9, 100.0, 2.0, 10.0).unwrap();
        let hier = build_hierarchy(&mesh, &config(2, 0.25)).unwrap();
        assert_eq!(hier.levels.len(), 3);
        assert_eq!(hier.levels[0].num_elements(), 64);
        assert_eq!(hier.levels[1].num_elements(), 16);
        assert_eq!(hier.levels[2].num_elements(), 4);
        assert_eq!(hier.levels[1].num_nodes(), 21); // ceil(81 / 4)
        assert_eq!(hier.levels[2].num_nodes(), 6); // ceil(21 / 4)
    }

    #[test]
    fn level_zero_mirrors_the_mesh() {
        let mesh = build_blank_mesh(4, 4, 100.0, 2.0, 10.0).unwrap();
        let hier = build_hierarchy(&mesh, &config(1, 0.5)).unwrap();
        let l0 = &hier.levels[0];
        assert_eq!(l0.node_pos, mesh.positions);
        assert_eq!(l0.node_orig, (0..16).collect::<Vec<_>>());
        assert_eq!(l0.edge_nodes.len(), 4 * mesh.quads.len());
        for (e, quad) in mesh.quads.iter().enumerate() {
            for (a, &n) in quad.iter().enumerate() {
                assert_eq!(l0.edge_nodes[4 * e + a], n);
                assert_eq!(l0.edge_elems[4 * e + a], e);
            }
        }
    }

    #[test]
    fn vertex_counts_strictly_decrease() {
        let mesh = build_blank_mesh(9, 9, 100.0, 2.0, 10.0).unwrap();
        let hier = build_hierarchy(&mesh, &config(2, 0.25)).unwrap();
        for w in hier.levels.windows(2) {
            assert!(w[1].num_nodes() < w[0].num_nodes());
            assert!(w[1].num_elements() < w[0].num_elements());
        }
    }

    #[test]
    fn every_fine_vertex_gets_exactly_k_neighbors() {
        let mesh = build_blank_mesh(6, 6, 100.0, 2.0, 10.0).unwrap();
        let hier = build_hierarchy(&mesh, &config(1, 0.4)).unwrap();
        let map = &hier.maps[0].node;
        assert_eq!(map.num_edges(), map.num_fine * map.k);
        let mut per_fine = vec![0usize; map.num_fine];
        for &f in &map.fine_idx {
            per_fine[f] += 1;
        }
        assert!(per_fine.iter().all(|&c| c == map.k));
        assert!(map.coarse_idx.iter().all(|&c| c < map.num_coarse));
    }

    #[test]
    fn knn_map_to_itself_is_the_identity() {
        let pts = grid_points(4);
        let map = build_knn_map(&pts, &pts, 1).unwrap();
        assert_eq!(map.fine_idx, (0..16).collect::<Vec<_>>());
        assert_eq!(map.coarse_idx, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn knn_map_with_k_equal_count_is_complete() {
        let fine = grid_points(3);
        let coarse = vec![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 0.5, 0.0]];
        let map = build_knn_map(&fine, &coarse, 3).unwrap();
        for f in 0..fine.len() {
            let mut nbs: Vec<usize> = (0..map.num_edges())
                .filter(|&e| map.fine_idx[e] == f)
                .map(|e| map.coarse_idx[e])
                .collect();
            nbs.sort_unstable();
            assert_eq!(nbs, vec![0, 1, 2]);
        }
    }

    #[test]
    fn oversized_k_nn_is_a_parameter_error() {
        let fine = grid_points(3);
        let coarse = vec![[0.0; 3], [1.0, 0.0, 0.0]];
        assert!(matches!(build_knn_map(&fine, &coarse, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn too_aggressive_ratio_is_a_parameter_error() {
        // 3×3 mesh: 4 elements; a quarter ratio would leave one element
        // vertex.
        let mesh = build_blank_mesh(3, 3, 100.0, 2.0, 10.0).unwrap();
        assert!(matches!(
            build_hierarchy(&mesh, &config(1, 0.25)),
            Err(Error::Parameter(_))
        ));
        // A ratio keeping at least four of each succeeds.
        let hier = build_hierarchy(&mesh, &config(1, 0.999)).unwrap();
        assert_eq!(hier.levels[1].num_elements(), 4);
        assert_eq!(hier.levels[1].num_nodes(), 9);
    }

    #[test]
    fn one_fewer_level_than_the_bound_always_succeeds() {
        let mesh = build_blank_mesh(9, 9, 100.0, 2.0, 10.0).unwrap();
        // Two levels work (64 → 16 → 4 elements); three would need a
        // single element vertex and must fail.
        assert!(build_hierarchy(&mesh, &config(2, 0.25)).is_ok());
        assert!(matches!(
            build_hierarchy(&mesh, &config(3, 0.25)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn coarse_levels_join_elements_to_their_k_elem_nearest_nodes() {
        let mesh = build_blank_mesh(6, 6, 100.0, 2.0, 10.0).unwrap();
        let cfg = config(1, 0.4);
        let hier = build_hierarchy(&mesh, &cfg).unwrap();
        let l1 = &hier.levels[1];
        assert_eq!(l1.edge_nodes.len(), l1.num_elements() * cfg.k_elem);
        // Verify one element's neighbour set against a brute-force scan.
        let e = 0;
        let brute = crate::hier::knn::brute_force_knn(&l1.node_pos, l1.elem_pos[e], cfg.k_elem)
            .unwrap();
        assert_eq!(&l1.edge_nodes[..cfg.k_elem], &brute[..]);
    }

    #[test]
    fn same_seed_same_structure_different_seed_may_differ() {
        let mesh = build_blank_mesh(6, 6, 100.0, 2.0, 10.0).unwrap();
        let a = build_hierarchy(&mesh, &config(1, 0.4)).unwrap();
        let b = build_hierarchy(&mesh, &config(1, 0.4)).unwrap();
        assert_eq!(a.levels[1].node_orig, b.levels[1].node_orig);
        let shifted = HierarchyConfig { seed: 5, ..config(1, 0.4) };
        let c = build_hierarchy(&mesh, &shifted).unwrap();
        assert_ne!(a.levels[1].node_orig[0], c.levels[1].node_orig[0]);
    }
}
