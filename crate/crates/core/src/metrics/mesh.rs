use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;

use super::tables::{EDGE_TABLE, TRI_TABLE};
use crate::{Error, Result, Volume};

/// Triangle soup with shared vertices, in voxel-index coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Writes `v`/`f` records (1-based faces).
    pub fn write_obj<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Each cube edge as (offset of its lower corner, axis).
const EDGES: [([usize; 3], usize); 12] = [
    ([0, 0, 0], 0),
    ([1, 0, 0], 1),
    ([0, 1, 0], 0),
    ([0, 0, 0], 1),
    ([0, 0, 1], 0),
    ([1, 0, 1], 1),
    ([0, 1, 1], 0),
    ([0, 0, 1], 1),
    ([0, 0, 0], 2),
    ([1, 0, 0], 2),
    ([1, 1, 0], 2),
    ([0, 1, 0], 2),
];

/// Marching cubes over every cell of `volume`. Vertices on a grid edge are
/// shared between the cells touching it and are placed by linear
/// interpolation from the edge's lower endpoint.
pub fn marching_cubes(volume: &Volume, isovalue: f64) -> Result<TriangleMesh> {
    let dims = volume.dims();
    if dims.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument(format!(
            "marching cubes needs at least 2 samples per axis, got {dims:?}"
        )));
    }
    if !isovalue.is_finite() {
        return Err(Error::NonFinite("isovalue"));
    }
    let edge_id = |p: [usize; 3], axis: usize| volume.linear_index(p[0], p[1], p[2]) * 3 + axis;

    // Triangles per z-slab, each vertex named by its global edge id.
    let slabs: Vec<Vec<[usize; 3]>> = (0..dims[2] - 1)
        .into_par_iter()
        .map(|k| {
            let mut tris = Vec::new();
            for j in 0..dims[1] - 1 {
                for i in 0..dims[0] - 1 {
                    let mut case = 0usize;
                    for (c, off) in CORNERS.iter().enumerate() {
                        if (volume.get(i + off[0], j + off[1], k + off[2]) as f64) < isovalue {
                            case |= 1 << c;
                        }
                    }
                    if EDGE_TABLE[case] == 0 {
                        continue;
                    }
                    let row = &TRI_TABLE[case];
                    for t in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                        tris.push(std::array::from_fn(|v| {
                            let (off, axis) = EDGES[t[v] as usize];
                            edge_id([i + off[0], j + off[1], k + off[2]], axis)
                        }));
                    }
                }
            }
            tris
        })
        .collect();

    let mut index_of: HashMap<usize, u32> = HashMap::new();
    let mut mesh = TriangleMesh::default();
    for tri in slabs.into_iter().flatten() {
        let t = tri.map(|edge| {
            *index_of.entry(edge).or_insert_with(|| {
                mesh.vertices.push(edge_vertex(volume, edge, isovalue));
                (mesh.vertices.len() - 1) as u32
            })
        });
        mesh.triangles.push(t);
    }
    Ok(mesh)
}

fn edge_vertex(volume: &Volume, edge: usize, isovalue: f64) -> [f64; 3] {
    let axis = edge % 3;
    let p = volume.unravel(edge / 3);
    let mut q = p;
    q[axis] += 1;
    let a = volume.get(p[0], p[1], p[2]) as f64;
    let b = volume.get(q[0], q[1], q[2]) as f64;
    let t = if b == a {
        0.5
    } else {
        ((isovalue - a) / (b - a)).clamp(0.0, 1.0)
    };
    let mut v = p.map(|x| x as f64);
    v[axis] += t;
    v
}
