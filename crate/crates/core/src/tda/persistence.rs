use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mapper::MapperGraph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Feature classes visible in a diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureClass {
    Component,
    Branch,
    Loop,
}

/// Which part of the extended filtration produced a pair. Distances only
/// match points of the same kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// Sublevel merge: a minimum dying at a saddle.
    OrdinaryBranch,
    /// Whole component: (min, max).
    Component,
    /// Superlevel merge: a maximum dying at a saddle, stored as (max, saddle).
    RelativeBranch,
    /// Independent cycle.
    Loop,
}

impl PairKind {
    pub const ALL: [PairKind; 4] = [PairKind::OrdinaryBranch, PairKind::Component, PairKind::RelativeBranch, PairKind::Loop];

    pub fn class(self) -> FeatureClass {
        match self {
            PairKind::OrdinaryBranch | PairKind::RelativeBranch => FeatureClass::Branch,
            PairKind::Component => FeatureClass::Component,
            PairKind::Loop => FeatureClass::Loop,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairKind::OrdinaryBranch => "ordinary_branch",
            PairKind::Component => "component",
            PairKind::RelativeBranch => "relative_branch",
            PairKind::Loop => "loop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint<T> {
    pub birth: T,
    pub death: T,
    pub kind: PairKind,
}

impl<T: Scalar> DiagramPoint<T> {
    pub fn new(birth: T, death: T, kind: PairKind) -> Self {
        DiagramPoint { birth, death, kind }
    }

    pub fn class(&self) -> FeatureClass {
        self.kind.class()
    }

    /// L-infinity distance to the diagonal.
    pub fn diagonal_cost(&self) -> T {
        (self.death - self.birth).abs() / T::of(2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersistenceDiagram<T> {
    pub points: Vec<DiagramPoint<T>>,
}

impl<T: Scalar> PersistenceDiagram<T> {
    pub fn new(mut points: Vec<DiagramPoint<T>>) -> Self {
        points.sort_by(|a, b| {
            a.kind
                .cmp(&b.kind)
                .then(a.birth.partial_cmp(&b.birth).unwrap_or(Ordering::Equal))
                .then(a.death.partial_cmp(&b.death).unwrap_or(Ordering::Equal))
        });
        PersistenceDiagram { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn of_kind(&self, kind: PairKind) -> Vec<DiagramPoint<T>> {
        self.points.iter().copied().filter(|p| p.kind == kind).collect()
    }

    /// `(birth, death, class)` triples.
    pub fn triples(&self) -> Vec<(T, T, FeatureClass)> {
        self.points.iter().map(|p| (p.birth, p.death, p.class())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Apex,
    Vertex(usize),
    Edge(usize),
    ConeVertex(usize),
    ConeEdge(usize),
}

/// Extended persistence of the node-filtered graph, computed by Z/2 column
/// reduction of the coned filtration.
pub fn persistence<T: Scalar>(graph: &MapperGraph<T>) -> Result<PersistenceDiagram<T>> {
    let values: Vec<T> = graph.nodes.iter().map(|n| n.value).collect();
    graph_persistence(&values, &graph.edges)
}

/// Extended persistence of a graph with vertex values.
pub fn graph_persistence<T: Scalar>(values: &[T], edges: &[(usize, usize)]) -> Result<PersistenceDiagram<T>> {
    let nv = values.len();
    if nv == 0 {
        return Ok(PersistenceDiagram::default());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite node value".into()));
    }
    let mut uniq: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
    for &(a, b) in edges {
        if a >= nv || b >= nv {
            return Err(Error::Precondition(format!("edge ({a}, {b}) references a missing node")));
        }
        if a != b {
            uniq.push((a.min(b), a.max(b)));
        }
    }
    uniq.sort_unstable();
    uniq.dedup();
    let edges = uniq;
    let up = |e: &(usize, usize)| values[e.0].max(values[e.1]);
    let down = |e: &(usize, usize)| values[e.0].min(values[e.1]);
    let cmp = |a: T, b: T| a.partial_cmp(&b).unwrap_or(Ordering::Equal);

    // ascending part: (value, dim, index)
    let mut asc: Vec<(T, usize, usize)> = (0..nv).map(|v| (values[v], 0, v)).collect();
    asc.extend(edges.iter().enumerate().map(|(i, e)| (up(e), 1, i)));
    asc.sort_by(|a, b| cmp(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    // descending cone part: (-value, dim, index)
    let mut desc: Vec<(T, usize, usize)> = (0..nv).map(|v| (values[v], 1, v)).collect();
    desc.extend(edges.iter().enumerate().map(|(i, e)| (down(e), 2, i)));
    desc.sort_by(|a, b| cmp(b.0, a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut order = vec![Cell::Apex];
    for &(_, dim, i) in &asc {
        order.push(if dim == 0 { Cell::Vertex(i) } else { Cell::Edge(i) });
    }
    for &(_, dim, i) in &desc {
        order.push(if dim == 1 { Cell::ConeVertex(i) } else { Cell::ConeEdge(i) });
    }
    let mut pos: HashMap<CellKey, usize> = HashMap::with_capacity(order.len());
    for (p, c) in order.iter().enumerate() {
        pos.insert(CellKey::from(*c), p);
    }
    let at = |c: Cell| pos[&CellKey::from(c)];
    let boundary = |c: Cell| -> Vec<usize> {
        let mut b = match c {
            Cell::Apex | Cell::Vertex(_) => vec![],
            Cell::Edge(i) => vec![at(Cell::Vertex(edges[i].0)), at(Cell::Vertex(edges[i].1))],
            Cell::ConeVertex(v) => vec![at(Cell::Apex), at(Cell::Vertex(v))],
            Cell::ConeEdge(i) => vec![
                at(Cell::Edge(i)),
                at(Cell::ConeVertex(edges[i].0)),
                at(Cell::ConeVertex(edges[i].1)),
            ],
        };
        b.sort_unstable();
        b
    };

    let mut owner: HashMap<usize, usize> = HashMap::new();
    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(order.len());
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (j, &c) in order.iter().enumerate() {
        let mut col = boundary(c);
        while let Some(&low) = col.last() {
            match owner.get(&low) {
                Some(&k) => col = xor(&col, &columns[k]),
                None => break,
            }
        }
        if let Some(&low) = col.last() {
            owner.insert(low, j);
            pairs.push((low, j));
        }
        columns.push(col);
    }

    let value_of = |c: Cell| match c {
        Cell::Apex => T::neg_infinity(),
        Cell::Vertex(v) | Cell::ConeVertex(v) => values[v],
        Cell::Edge(i) => up(&edges[i]),
        Cell::ConeEdge(i) => down(&edges[i]),
    };
    let mut points = Vec::new();
    for (b, d) in pairs {
        let (cb, cd) = (order[b], order[d]);
        let (vb, vd) = (value_of(cb), value_of(cd));
        let kind = match (cb, cd) {
            (Cell::Vertex(_), Cell::Edge(_)) => PairKind::OrdinaryBranch,
            (Cell::Vertex(_), Cell::ConeVertex(_)) => PairKind::Component,
            (Cell::ConeVertex(_), Cell::ConeEdge(_)) => PairKind::RelativeBranch,
            (Cell::Edge(_), Cell::ConeEdge(_)) => PairKind::Loop,
            _ => return Err(Error::Numerical("unexpected persistence pairing".into())),
        };
        let keep = match kind {
            PairKind::Component | PairKind::Loop => true,
            _ => vb != vd,
        };
        if keep {
            points.push(DiagramPoint::new(vb, vd, kind));
        }
    }
    Ok(PersistenceDiagram::new(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct CellKey(u8, usize);

impl From<Cell> for CellKey {
    fn from(c: Cell) -> Self {
        match c {
            Cell::Apex => CellKey(0, 0),
            Cell::Vertex(i) => CellKey(1, i),
            Cell::Edge(i) => CellKey(2, i),
            Cell::ConeVertex(i) => CellKey(3, i),
            Cell::ConeEdge(i) => CellKey(4, i),
        }
    }
}

/// Symmetric difference of two sorted index lists.
fn xor(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
