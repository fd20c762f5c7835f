//! Legacy ASCII VTK export of meshes with cell and point data.

use std::fmt::Write as _;
use std::path::Path;

use crate::mesh::Mesh;
use crate::{Error, Result, Vec2};

#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Scalar(Vec<f64>),
    Int(Vec<i64>),
    Vector(Vec<Vec2>),
    Vector3(Vec<[f64; 3]>),
}

impl Field {
    fn len(&self) -> usize {
        match self {
            Field::Scalar(v) => v.len(),
            Field::Int(v) => v.len(),
            Field::Vector(v) => v.len(),
            Field::Vector3(v) => v.len(),
        }
    }

    fn write(&self, name: &str, s: &mut String) {
        match self {
            Field::Scalar(v) => {
                writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
                for x in v {
                    writeln!(s, "{x:e}").unwrap();
                }
            }
            Field::Int(v) => {
                writeln!(s, "SCALARS {name} int 1\nLOOKUP_TABLE default").unwrap();
                for x in v {
                    writeln!(s, "{x}").unwrap();
                }
            }
            Field::Vector(v) => {
                writeln!(s, "VECTORS {name} double").unwrap();
                for x in v {
                    writeln!(s, "{:e} {:e} 0", x[0], x[1]).unwrap();
                }
            }
            Field::Vector3(v) => {
                writeln!(s, "VECTORS {name} double").unwrap();
                for x in v {
                    writeln!(s, "{:e} {:e} {:e}", x[0], x[1], x[2]).unwrap();
                }
            }
        }
    }
}

/// Named cell and point arrays.
#[derive(Clone, Debug, Default)]
pub struct VtkData {
    pub cells: Vec<(String, Field)>,
    pub points: Vec<(String, Field)>,
}

impl VtkData {
    pub fn cell(mut self, name: &str, f: Field) -> Self {
        self.cells.push((name.to_string(), f));
        self
    }

    pub fn point(mut self, name: &str, f: Field) -> Self {
        self.points.push((name.to_string(), f));
        self
    }
}

fn check(name: &str, f: &Field, n: usize) -> Result<()> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(Error::Invalid(format!("bad VTK array name '{name}'")));
    }
    if f.len() != n {
        return Err(Error::SizeMismatch {
            what: "VTK array",
            expected: n,
            got: f.len(),
        });
    }
    Ok(())
}

pub fn to_vtk(mesh: &Mesh, title: &str, data: &VtkData) -> Result<String> {
    let (nn, nt) = (mesh.num_nodes(), mesh.num_triangles());
    for (name, f) in &data.cells {
        check(name, f, nt)?;
    }
    for (name, f) in &data.points {
        check(name, f, nn)?;
    }
    let mut s = String::new();
    let title = title.replace('\n', " ");
    writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {nn} double").unwrap();
    for p in &mesh.vertices {
        writeln!(s, "{:e} {:e} 0", p[0], p[1]).unwrap();
    }
    writeln!(s, "CELLS {nt} {}", 4 * nt).unwrap();
    for t in &mesh.triangles {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        s.push_str("5\n");
    }
    if !data.cells.is_empty() {
        writeln!(s, "CELL_DATA {nt}").unwrap();
        for (name, f) in &data.cells {
            f.write(name, &mut s);
        }
    }
    if !data.points.is_empty() {
        writeln!(s, "POINT_DATA {nn}").unwrap();
        for (name, f) in &data.points {
            f.write(name, &mut s);
        }
    }
    Ok(s)
}

pub fn write_vtk(path: &Path, mesh: &Mesh, title: &str, data: &VtkData) -> Result<()> {
    let s = to_vtk(mesh, title, data)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::polar_disk;

    fn mesh() -> Mesh {
        polar_disk([0.0, 0.0], &[0.5, 1.0], 8, |_, _| 0).unwrap().mesh
    }

    #[test]
    fn geometry_only() {
        let m = mesh();
        let s = to_vtk(&m, "t", &VtkData::default()).unwrap();
        assert!(s.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(s.contains(&format!("POINTS {} double", m.num_nodes())));
        assert!(s.contains(&format!("CELL_TYPES {}", m.num_triangles())));
        assert!(!s.contains("CELL_DATA"));
    }

    #[test]
    fn labels_stay_integers() {
        let m = mesh();
        let labels: Vec<i64> = (0..m.num_triangles() as i64).map(|t| t % 4).collect();
        let s = to_vtk(&m, "t", &VtkData::default().cell("label", Field::Int(labels.clone()))).unwrap();
        let body = s.split("LOOKUP_TABLE default\n").nth(1).unwrap();
        let back: Vec<i64> = body.lines().map(|l| l.parse().unwrap()).collect();
        assert_eq!(back, labels);
    }

    #[test]
    fn size_mismatch() {
        let m = mesh();
        let d = VtkData::default().point("a", Field::Scalar(vec![0.0; 3]));
        assert!(matches!(to_vtk(&m, "t", &d), Err(Error::SizeMismatch { .. })));
        let d = VtkData::default().cell("two words", Field::Scalar(vec![0.0; m.num_triangles()]));
        assert!(to_vtk(&m, "t", &d).is_err());
    }
}
