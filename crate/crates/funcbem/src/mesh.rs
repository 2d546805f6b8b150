//! Conforming triangle meshes, newest-vertex bisection, boundary loops and
//! the boundary layer submesh.
//!
//! Elements are stored as counterclockwise vertex triples `[i, j, k]`; the
//! refinement edge is `(i, j)` and `k` is the newest vertex.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::MeshError;

pub type Point = [f64; 2];

/// Conforming triangulation with the newest-vertex-bisection convention.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub elements: Vec<[usize; 3]>,
    /// Bisection depth of each element relative to the initial mesh.
    pub generation: Vec<u32>,
}

/// Geometries used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `(0, 1/2)^2`, 8x8 cells.
    Square,
    /// `(0, 1/2)^2` without `(1/4, 1/2] x [0, 1/4]`, 16x16 cells.
    LShape,
    /// `(-1/4, 3/4)^2` without the closed L-shape, 16x16 cells.
    ExteriorBox,
}

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

#[inline]
fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn in_lshape(x: f64, y: f64) -> bool {
    x > 0.0 && x < 0.5 && y > 0.0 && y < 0.5 && !(x > 0.25 && y < 0.25)
}

impl Domain {
    /// Whether a point (away from the boundary) lies in the computational domain.
    pub fn contains(&self, p: Point) -> bool {
        let [x, y] = p;
        match self {
            Domain::Square => x > 0.0 && x < 0.5 && y > 0.0 && y < 0.5,
            Domain::LShape => in_lshape(x, y),
            Domain::ExteriorBox => {
                x > -0.25 && x < 0.75 && y > -0.25 && y < 0.75 && {
                    let closed_l = (0.0..=0.5).contains(&x)
                        && (0.0..=0.5).contains(&y)
                        && !(x > 0.25 && y < 0.25);
                    !closed_l
                }
            }
        }
    }

    /// Whether the domain is the complement of the physical body (Γ is an inner loop).
    pub fn is_exterior(&self) -> bool {
        matches!(self, Domain::ExteriorBox)
    }
}

/// The initial mesh of a geometry: a uniform grid of square cells, each split
/// into two right triangles along the `/` diagonal, refinement edge on the
/// hypotenuse.
pub fn initial_mesh(domain: Domain) -> TriMesh {
    let (x0, n, h) = match domain {
        Domain::Square => (0.0, 8, 1.0 / 16.0),
        Domain::LShape => (0.0, 16, 1.0 / 32.0),
        Domain::ExteriorBox => (-0.25, 16, 1.0 / 16.0),
    };
    let mut index = HashMap::new();
    let mut vertices = Vec::new();
    let mut elements = Vec::new();
    let mut vid = |i: usize, j: usize, vertices: &mut Vec<Point>| -> usize {
        *index.entry((i, j)).or_insert_with(|| {
            vertices.push([x0 + i as f64 * h, x0 + j as f64 * h]);
            vertices.len() - 1
        })
    };
    for j in 0..n {
        for i in 0..n {
            let c = [x0 + (i as f64 + 0.5) * h, x0 + (j as f64 + 0.5) * h];
            if !domain.contains(c) {
                continue;
            }
            let a = vid(i, j, &mut vertices);
            let b = vid(i + 1, j, &mut vertices);
            let cc = vid(i + 1, j + 1, &mut vertices);
            let d = vid(i, j + 1, &mut vertices);
            elements.push([cc, a, b]);
            elements.push([a, cc, d]);
        }
    }
    let generation = vec![0; elements.len()];
    TriMesh {
        vertices,
        elements,
        generation,
    }
}

impl TriMesh {
    /// Build from raw data, rotating each triple so its longest edge comes first
    /// and flipping clockwise triples.
    pub fn from_raw_longest_edge(vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Self {
        let elements: Vec<[usize; 3]> = elements
            .into_iter()
            .map(|mut t| {
                let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
                if cross(sub(b, a), sub(c, a)) < 0.0 {
                    t.swap(1, 2);
                }
                let len = |i: usize, j: usize| dist(vertices[t[i]], vertices[t[j]]);
                let l = [len(0, 1), len(1, 2), len(2, 0)];
                let mut best = 0;
                for k in 1..3 {
                    if l[k] > l[best] * (1.0 + 1e-12) {
                        best = k;
                    }
                }
                t.rotate_left(best);
                t
            })
            .collect();
        let generation = vec![0; elements.len()];
        Self {
            vertices,
            elements,
            generation,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e].map(|v| self.vertices[v]);
        0.5 * cross(sub(b, a), sub(c, a))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.area(e)).sum()
    }

    pub fn diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e].map(|v| self.vertices[v]);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Element-count per undirected edge.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), u32> {
        let mut m = HashMap::with_capacity(self.elements.len() * 2);
        for t in &self.elements {
            for k in 0..3 {
                *m.entry(edge_key(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        m
    }

    /// Check positivity of areas and edge conformity (no hanging nodes).
    pub fn check_conforming(&self) -> Result<(), MeshError> {
        for e in 0..self.elements.len() {
            if self.area(e) <= 0.0 {
                return Err(MeshError::Degenerate(e));
            }
        }
        let counts = self.edge_counts();
        if let Some((&(a, _), _)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::NonManifoldBoundary(a));
        }
        // Boundary edges must close up into loops.
        let mut degree: HashMap<usize, u32> = HashMap::new();
        for (&(a, b), &c) in &counts {
            if c == 1 {
                *degree.entry(a).or_insert(0) += 1;
                *degree.entry(b).or_insert(0) += 1;
            }
        }
        if let Some((&v, _)) = degree.iter().find(|(_, &d)| d % 2 == 1) {
            return Err(MeshError::OpenBoundary(v));
        }
        // A hanging node of a bisection mesh sits at an edge midpoint.
        let mut used = vec![false; self.vertices.len()];
        for t in &self.elements {
            for &v in t {
                used[v] = true;
            }
        }
        let key = |p: Point| (p[0].to_bits(), p[1].to_bits());
        let at: HashMap<(u64, u64), usize> = (0..self.vertices.len())
            .filter(|&v| used[v])
            .map(|v| (key(self.vertices[v]), v))
            .collect();
        for &(a, b) in counts.keys() {
            let (p, q) = (self.vertices[a], self.vertices[b]);
            let m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            if let Some(&v) = at.get(&key(m)) {
                return Err(MeshError::HangingNode(v));
            }
        }
        Ok(())
    }

    /// Write the mesh text format.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "vertices {} / elements {}\n",
            self.vertices.len(),
            self.elements.len()
        );
        for p in &self.vertices {
            s.push_str(&format!("{:.17e} {:.17e}\n", p[0], p[1]));
        }
        for t in &self.elements {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s
    }

    /// Parse the mesh text format. Generations are reset to zero.
    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let bad = |m: &str| MeshError::Parse(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 5 || tok[0] != "vertices" || tok[2] != "/" || tok[3] != "elements" {
            return Err(bad("header must read `vertices N / elements M`"));
        }
        let nv: usize = tok[1].parse().map_err(|_| bad("vertex count"))?;
        let ne: usize = tok[4].parse().map_err(|_| bad("element count"))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("missing vertex line"))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("vertex coordinate"))?;
            if v.len() != 2 {
                return Err(bad("vertex line needs two coordinates"));
            }
            vertices.push([v[0], v[1]]);
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let l = lines.next().ok_or_else(|| bad("missing element line"))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("element index"))?;
            if v.len() != 3 {
                return Err(bad("element line needs three indices"));
            }
            if v.iter().any(|&i| i >= nv) {
                return Err(MeshError::BadIndex(elements.len()));
            }
            elements.push([v[0], v[1], v[2]]);
        }
        let m = TriMesh {
            vertices,
            generation: vec![0; elements.len()],
            elements,
        };
        for e in 0..m.elements.len() {
            if m.area(e) <= 0.0 {
                return Err(MeshError::Degenerate(e));
            }
        }
        Ok(m)
    }
}

/// Newest-vertex bisection of the marked elements with conforming closure.
///
/// Every marked element is bisected at least once. The closure marks the
/// refinement edge of every element that has any marked edge, until no
/// element carries a marked edge without its refinement edge being marked;
/// elements are then split by one, two or three bisections.
pub fn refine_nvb(mesh: &TriMesh, marked: &[usize]) -> TriMesh {
    let seeds: Vec<(usize, usize)> = marked
        .iter()
        .map(|&e| {
            let t = mesh.elements[e];
            (t[0], t[1])
        })
        .collect();
    refine_edges(mesh, &seeds)
}

/// Uniform refinement (three bisections, halving all edges) of the given
/// elements, followed by conforming closure.
pub fn refine_uniform(mesh: &TriMesh, elements: &[usize]) -> TriMesh {
    let mut seeds = Vec::with_capacity(elements.len() * 3);
    for &e in elements {
        let t = mesh.elements[e];
        seeds.push((t[0], t[1]));
        seeds.push((t[1], t[2]));
        seeds.push((t[2], t[0]));
    }
    refine_edges(mesh, &seeds)
}

/// Uniform refinement of every element.
pub fn refine_all(mesh: &TriMesh) -> TriMesh {
    let all: Vec<usize> = (0..mesh.elements.len()).collect();
    refine_uniform(mesh, &all)
}

fn refine_edges(mesh: &TriMesh, seeds: &[(usize, usize)]) -> TriMesh {
    if seeds.is_empty() {
        return mesh.clone();
    }
    // Number edges and record the elements adjacent to each.
    let ne = mesh.elements.len();
    let mut edge_id: HashMap<(usize, usize), usize> = HashMap::with_capacity(ne * 2);
    let mut edge_elems: Vec<[usize; 2]> = Vec::with_capacity(ne * 2);
    let mut elem_edges = vec![[0usize; 3]; ne];
    for (e, t) in mesh.elements.iter().enumerate() {
        for k in 0..3 {
            let key = edge_key(t[k], t[(k + 1) % 3]);
            let next = edge_elems.len();
            let id = *edge_id.entry(key).or_insert(next);
            if id == next {
                edge_elems.push([e, usize::MAX]);
            } else {
                edge_elems[id][1] = e;
            }
            elem_edges[e][k] = id;
        }
    }
    let mut marked = vec![false; edge_elems.len()];
    let mut queue = Vec::new();
    for &(a, b) in seeds {
        let id = edge_id[&edge_key(a, b)];
        if !marked[id] {
            marked[id] = true;
            queue.push(id);
        }
    }
    // Closure: any element with a marked edge gets its refinement edge marked.
    while let Some(id) = queue.pop() {
        for &e in &edge_elems[id] {
            if e == usize::MAX {
                continue;
            }
            let r = elem_edges[e][0];
            if !marked[r] {
                marked[r] = true;
                queue.push(r);
            }
        }
    }
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    // Create midpoints in element order for a reproducible vertex numbering.
    for t in &mesh.elements {
        for k in 0..3 {
            let key = edge_key(t[k], t[(k + 1) % 3]);
            if marked[edge_id[&key]] && !midpoint.contains_key(&key) {
                let (p, q) = (mesh.vertices[key.0], mesh.vertices[key.1]);
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                midpoint.insert(key, vertices.len() - 1);
            }
        }
    }
    let mut elements = Vec::with_capacity(ne * 2);
    let mut generation = Vec::with_capacity(ne * 2);
    for (e, &t) in mesh.elements.iter().enumerate() {
        bisect(
            t,
            mesh.generation[e],
            &midpoint,
            &mut elements,
            &mut generation,
        );
    }
    TriMesh {
        vertices,
        elements,
        generation,
    }
}

fn bisect(
    t: [usize; 3],
    gen: u32,
    midpoint: &HashMap<(usize, usize), usize>,
    out: &mut Vec<[usize; 3]>,
    gens: &mut Vec<u32>,
) {
    let [i, j, k] = t;
    match midpoint.get(&edge_key(i, j)) {
        Some(&m) => {
            bisect([k, i, m], gen + 1, midpoint, out, gens);
            bisect([j, k, m], gen + 1, midpoint, out, gens);
        }
        None => {
            out.push(t);
            gens.push(gen);
        }
    }
}

/// Oriented boundary segmentation. Boundary vertex `i` is the start point of
/// segment `i`; segment `i` ends at the start of its loop successor.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    pub points: Vec<Point>,
    /// Parent mesh vertex of each boundary vertex.
    pub mesh_vertex: Vec<usize>,
    /// Segment index ranges of the closed loops.
    pub loops: Vec<Range<usize>>,
    pub length: Vec<f64>,
    /// Unit tangent of each segment.
    pub tangent: Vec<Point>,
    /// Outward unit normal `(t_y, -t_x)`.
    pub normal: Vec<Point>,
}

impl BoundaryMesh {
    /// Build from closed loops of points traversed with the domain on the left.
    pub fn from_loops(loops: &[Vec<Point>]) -> Self {
        let mut points = Vec::new();
        let mut ranges = Vec::new();
        for l in loops {
            let s = points.len();
            points.extend_from_slice(l);
            ranges.push(s..points.len());
        }
        let mesh_vertex = (0..points.len()).collect();
        Self::finish(points, mesh_vertex, ranges)
    }

    fn finish(points: Vec<Point>, mesh_vertex: Vec<usize>, loops: Vec<Range<usize>>) -> Self {
        let n = points.len();
        let mut length = vec![0.0; n];
        let mut tangent = vec![[0.0; 2]; n];
        let mut normal = vec![[0.0; 2]; n];
        for r in &loops {
            for i in r.clone() {
                let j = if i + 1 < r.end { i + 1 } else { r.start };
                let d = sub(points[j], points[i]);
                let l = d[0].hypot(d[1]);
                length[i] = l;
                let t = [d[0] / l, d[1] / l];
                tangent[i] = t;
                normal[i] = [t[1], -t[0]];
            }
        }
        Self {
            points,
            mesh_vertex,
            loops,
            length,
            tangent,
            normal,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn loop_of(&self, i: usize) -> &Range<usize> {
        self.loops
            .iter()
            .find(|r| r.contains(&i))
            .expect("segment index out of range")
    }

    /// Successor segment in the loop.
    pub fn next(&self, i: usize) -> usize {
        let r = self.loop_of(i);
        if i + 1 < r.end {
            i + 1
        } else {
            r.start
        }
    }

    /// Predecessor segment in the loop.
    pub fn prev(&self, i: usize) -> usize {
        let r = self.loop_of(i);
        if i > r.start {
            i - 1
        } else {
            r.end - 1
        }
    }

    /// Precomputed successor table.
    pub fn successors(&self) -> Vec<usize> {
        let mut s = vec![0; self.len()];
        for r in &self.loops {
            for i in r.clone() {
                s[i] = if i + 1 < r.end { i + 1 } else { r.start };
            }
        }
        s
    }

    /// Start and end point of segment `i`.
    pub fn endpoints(&self, i: usize) -> (Point, Point) {
        (self.points[i], self.points[self.next(i)])
    }

    /// Point at local parameter `xi` in `[0, 1]` on segment `i`.
    pub fn point_at(&self, i: usize, xi: f64) -> Point {
        let (a, b) = self.endpoints(i);
        [a[0] + xi * (b[0] - a[0]), a[1] + xi * (b[1] - a[1])]
    }

    /// Signed area enclosed by loop `k` (positive for counterclockwise loops).
    pub fn signed_area(&self, k: usize) -> f64 {
        let r = &self.loops[k];
        let mut s = 0.0;
        for i in r.clone() {
            let j = if i + 1 < r.end { i + 1 } else { r.start };
            s += cross(self.points[i], self.points[j]);
        }
        0.5 * s
    }

    pub fn perimeter(&self, k: usize) -> f64 {
        self.loops[k].clone().map(|i| self.length[i]).sum()
    }

    /// Largest distance between two boundary vertices.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                d = d.max(dist(*p, *q));
            }
        }
        d
    }

    /// Keep only the listed loops.
    pub fn select_loops(&self, keep: &[usize]) -> Self {
        let mut points = Vec::new();
        let mut mesh_vertex = Vec::new();
        let mut loops = Vec::new();
        for &k in keep {
            let s = points.len();
            for i in self.loops[k].clone() {
                points.push(self.points[i]);
                mesh_vertex.push(self.mesh_vertex[i]);
            }
            loops.push(s..points.len());
        }
        Self::finish(points, mesh_vertex, loops)
    }
}

/// All boundary edges of the mesh grouped into closed loops with the domain
/// on the left. Each loop starts at its lowest-numbered mesh vertex.
pub fn extract_boundary(mesh: &TriMesh) -> Result<BoundaryMesh, MeshError> {
    let counts = mesh.edge_counts();
    let mut next: HashMap<usize, usize> = HashMap::new();
    for t in &mesh.elements {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if counts[&edge_key(a, b)] == 1 && next.insert(a, b).is_some() {
                return Err(MeshError::NonManifoldBoundary(a));
            }
        }
    }
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut points = Vec::new();
    let mut mesh_vertex = Vec::new();
    let mut loops = Vec::new();
    for &s in &starts {
        if visited.contains_key(&s) {
            continue;
        }
        let begin = points.len();
        let mut v = s;
        loop {
            visited.insert(v, true);
            points.push(mesh.vertices[v]);
            mesh_vertex.push(v);
            v = *next.get(&v).ok_or(MeshError::OpenBoundary(v))?;
            if v == s {
                break;
            }
            if visited.contains_key(&v) {
                return Err(MeshError::OpenBoundary(v));
            }
        }
        loops.push(begin..points.len());
    }
    Ok(BoundaryMesh::finish(points, mesh_vertex, loops))
}

/// The physical boundary Γ: all loops for interior problems, the inner
/// (clockwise) loops for an exterior truncation box.
pub fn gamma_boundary(mesh: &TriMesh, domain: Domain) -> Result<BoundaryMesh, MeshError> {
    let b = extract_boundary(mesh)?;
    if !domain.is_exterior() {
        return Ok(b);
    }
    let keep: Vec<usize> = (0..b.loops.len())
        .filter(|&k| b.signed_area(k) < 0.0)
        .collect();
    Ok(b.select_loops(&keep))
}

/// Classification of a layer vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexTag {
    Interior,
    OnGamma,
    OnGammaC,
}

/// The boundary layer submesh with its two boundary curves Γ and Γ^c.
#[derive(Debug, Clone)]
pub struct LayerMesh {
    /// Parent element indices forming the layer, increasing.
    pub elements: Vec<usize>,
    /// Local to parent vertex map.
    pub vertices: Vec<usize>,
    pub points: Vec<Point>,
    /// Elements in local vertex numbering (same orientation as the parent).
    pub local_elements: Vec<[usize; 3]>,
    pub tag: Vec<VertexTag>,
    /// Γ edges as `(boundary segment index, local start, local end)`.
    pub gamma_edges: Vec<(usize, usize, usize)>,
    /// Γ^c edges in local numbering.
    pub gammac_edges: Vec<[usize; 2]>,
    /// For every boundary vertex (= segment start) its local layer vertex.
    pub boundary_to_local: Vec<usize>,
    /// For every boundary segment the local layer element containing it.
    pub segment_element: Vec<usize>,
}

/// Which elements form the layer around the seed elements touching Γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerRule {
    /// Every element sharing at least a point with an element that touches Γ.
    #[default]
    VertexPatch,
    /// Every element touching Γ plus all elements sharing an edge with one.
    EdgePatch,
}

/// Second-order patch of Γ (vertex contact counts).
pub fn extract_layer(mesh: &TriMesh, boundary: &BoundaryMesh) -> Result<LayerMesh, MeshError> {
    extract_layer_with(mesh, boundary, LayerRule::VertexPatch)
}

pub fn extract_layer_with(
    mesh: &TriMesh,
    boundary: &BoundaryMesh,
    rule: LayerRule,
) -> Result<LayerMesh, MeshError> {
    let nv = mesh.vertices.len();
    let mut on_gamma = vec![false; nv];
    for &v in &boundary.mesh_vertex {
        on_gamma[v] = true;
    }
    let first: Vec<bool> = mesh
        .elements
        .iter()
        .map(|t| t.iter().any(|&v| on_gamma[v]))
        .collect();
    let in_layer: Vec<bool> = match rule {
        LayerRule::VertexPatch => {
            let mut near = vec![false; nv];
            for (t, &f) in mesh.elements.iter().zip(&first) {
                if f {
                    for &v in t {
                        near[v] = true;
                    }
                }
            }
            mesh.elements
                .iter()
                .map(|t| t.iter().any(|&v| near[v]))
                .collect()
        }
        LayerRule::EdgePatch => {
            let mut edge_first: HashMap<(usize, usize), bool> = HashMap::new();
            for (t, &f) in mesh.elements.iter().zip(&first) {
                if f {
                    for k in 0..3 {
                        edge_first.insert(edge_key(t[k], t[(k + 1) % 3]), true);
                    }
                }
            }
            mesh.elements
                .iter()
                .zip(&first)
                .map(|(t, &f)| {
                    f || (0..3).any(|k| edge_first.contains_key(&edge_key(t[k], t[(k + 1) % 3])))
                })
                .collect()
        }
    };
    let elements: Vec<usize> = (0..mesh.elements.len()).filter(|&e| in_layer[e]).collect();
    let mut local = vec![usize::MAX; nv];
    let mut vertices = Vec::new();
    let mut local_elements = Vec::with_capacity(elements.len());
    for &e in &elements {
        let t = mesh.elements[e];
        let mut lt = [0; 3];
        for k in 0..3 {
            if local[t[k]] == usize::MAX {
                local[t[k]] = vertices.len();
                vertices.push(t[k]);
            }
            lt[k] = local[t[k]];
        }
        local_elements.push(lt);
    }
    let points: Vec<Point> = vertices.iter().map(|&v| mesh.vertices[v]).collect();

    // Boundary of S: edges used by exactly one layer element.
    let mut count: HashMap<(usize, usize), (u32, usize)> = HashMap::new();
    for (le, t) in local_elements.iter().enumerate() {
        for k in 0..3 {
            let c = count
                .entry(edge_key(t[k], t[(k + 1) % 3]))
                .or_insert((0, le));
            c.0 += 1;
        }
    }
    let mut gamma_key: HashMap<(usize, usize), usize> = HashMap::new();
    let succ = boundary.successors();
    let mut boundary_to_local = vec![usize::MAX; boundary.len()];
    for i in 0..boundary.len() {
        let (a, b) = (boundary.mesh_vertex[i], boundary.mesh_vertex[succ[i]]);
        gamma_key.insert(edge_key(local[a], local[b]), i);
        boundary_to_local[i] = local[a];
    }
    let mut gamma_edges = Vec::with_capacity(boundary.len());
    let mut segment_element = vec![usize::MAX; boundary.len()];
    let mut gammac_edges = Vec::new();
    let mut tag = vec![VertexTag::Interior; vertices.len()];
    let mut keys: Vec<_> = count.iter().filter(|(_, c)| c.0 == 1).collect();
    keys.sort_unstable_by_key(|(k, _)| **k);
    for (key, &(_, le)) in keys {
        if let Some(&seg) = gamma_key.get(key) {
            segment_element[seg] = le;
        } else {
            gammac_edges.push([key.0, key.1]);
            tag[key.0] = VertexTag::OnGammaC;
            tag[key.1] = VertexTag::OnGammaC;
        }
    }
    for i in 0..boundary.len() {
        let (a, b) = (boundary_to_local[i], boundary_to_local[succ[i]]);
        gamma_edges.push((i, a, b));
        for v in [a, b] {
            if tag[v] == VertexTag::OnGammaC {
                return Err(MeshError::PinchedLayer(vertices[v]));
            }
            tag[v] = VertexTag::OnGamma;
        }
    }
    Ok(LayerMesh {
        elements,
        vertices,
        points,
        local_elements,
        tag,
        gamma_edges,
        gammac_edges,
        boundary_to_local,
        segment_element,
    })
}

impl LayerMesh {
    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn area(&self, le: usize) -> f64 {
        let [a, b, c] = self.local_elements[le].map(|v| self.points[v]);
        0.5 * cross(sub(b, a), sub(c, a))
    }
}
