//! Plain-text mesh format.
//!
//! ```text
//! demagmesh v1
//! vertices N
//! x y            (N lines)
//! triangles M
//! i j k region   (M lines)
//! boundary E
//! i j marker     (E lines)
//! periodic P
//! ia ib          (P lines)
//! ```
//!
//! Indices are 0-based. Coordinates are written in shortest round-trip form, so a
//! write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, BoundaryMarker, Mesh};
use crate::{Error, Result};

pub const MESH_HEADER: &str = "demagmesh v1";

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh_to_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text, &path.display().to_string())
}

pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "{MESH_HEADER}").unwrap();
    writeln!(s, "vertices {}", mesh.vertices.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(s, "{:e} {:e}", v[0], v[1]).unwrap();
    }
    writeln!(s, "triangles {}", mesh.triangles.len()).unwrap();
    for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
        writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r).unwrap();
    }
    writeln!(s, "boundary {}", mesh.boundary.len()).unwrap();
    for e in &mesh.boundary {
        writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.marker.id()).unwrap();
    }
    writeln!(s, "periodic {}", mesh.periodic.len()).unwrap();
    for p in &mesh.periodic {
        writeln!(s, "{} {}", p[0], p[1]).unwrap();
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    name: &'a str,
    last: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.name.to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// Next non-empty line with its 1-based number.
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                self.last = i + 1;
                return Ok((i + 1, l));
            }
        }
        Err(self.err(self.last + 1, "unexpected end of file"))
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let (ln, l) = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(self.err(ln, format!("expected section `{name} <count>`")));
        }
        let count = it
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| self.err(ln, format!("missing or invalid count for `{name}`")))?;
        if it.next().is_some() {
            return Err(self.err(ln, "trailing tokens after section count"));
        }
        Ok(count)
    }

    fn fields<T: std::str::FromStr, const K: usize>(&mut self) -> Result<(usize, [T; K])> {
        let (ln, l) = self.next()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != K {
            return Err(self.err(ln, format!("expected {K} fields, found {}", toks.len())));
        }
        let mut out = Vec::with_capacity(K);
        for t in toks {
            out.push(
                t.parse::<T>()
                    .map_err(|_| self.err(ln, format!("cannot parse `{t}`")))?,
            );
        }
        match out.try_into() {
            Ok(arr) => Ok((ln, arr)),
            Err(_) => unreachable!(),
        }
    }
}

pub fn parse_mesh(text: &str, name: &str) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        name,
        last: 0,
    };
    let (ln, header) = lines.next()?;
    if header != MESH_HEADER {
        return Err(lines.err(ln, format!("expected header `{MESH_HEADER}`, found `{header}`")));
    }
    let nv = lines.section("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, [x, y]) = lines.fields::<f64, 2>()?;
        if !x.is_finite() || !y.is_finite() {
            return Err(lines.err(ln, "non-finite coordinate"));
        }
        vertices.push([x, y]);
    }
    let check = |lines: &Lines, ln: usize, idx: &[usize]| -> Result<()> {
        match idx.iter().find(|&&i| i >= nv) {
            Some(i) => Err(lines.err(ln, format!("vertex index {i} out of range 0..{nv}"))),
            None => Ok(()),
        }
    };
    let nt = lines.section("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, [i, j, k, r]) = lines.fields::<usize, 4>()?;
        check(&lines, ln, &[i, j, k])?;
        triangles.push([i, j, k]);
        regions.push(u32::try_from(r).map_err(|_| lines.err(ln, "region id too large"))?);
    }
    let ne = lines.section("boundary")?;
    let mut boundary = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, [i, j, m]) = lines.fields::<usize, 3>()?;
        check(&lines, ln, &[i, j])?;
        let marker = u32::try_from(m)
            .ok()
            .and_then(BoundaryMarker::from_id)
            .ok_or_else(|| lines.err(ln, format!("unknown boundary marker {m}")))?;
        boundary.push(BoundaryEdge {
            nodes: [i, j],
            marker,
        });
    }
    let np = lines.section("periodic")?;
    let mut periodic = Vec::with_capacity(np);
    for _ in 0..np {
        let (ln, [a, b]) = lines.fields::<usize, 2>()?;
        check(&lines, ln, &[a, b])?;
        periodic.push([a, b]);
    }
    if let Some((i, l)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(lines.err(i + 1, format!("unexpected trailing content `{}`", l.trim())));
    }
    Mesh::new(vertices, triangles, regions, boundary, periodic)
}
