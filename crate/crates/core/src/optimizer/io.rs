//! Design snapshots and the convergence log.

use std::fmt::Write as _;
use std::path::Path;

use super::{DesignSpace, DesignState, LogRow};
use crate::{Error, Result};

pub const DESIGN_HEADER: &str = "demagdesign v1";
pub const LOG_HEADER: &str = "iter,J,T,C,volume,lambda,c,kappa,mean_angle_deg,D_nominal,D_damaging,clamp_count";

pub fn design_to_text(space: &DesignSpace, state: &DesignState) -> String {
    let mut s = String::from(DESIGN_HEADER);
    s.push('\n');
    for (node, p) in space.nodes.iter().zip(&state.psi) {
        writeln!(s, "{node} {:e} {:e} {:e}", p[0], p[1], p[2]).unwrap();
    }
    s
}

pub fn write_design(path: &Path, space: &DesignSpace, state: &DesignState) -> Result<()> {
    std::fs::write(path, design_to_text(space, state)).map_err(|e| Error::io(path, e))
}

/// Parses a design; every design node of `space` must appear exactly once.
pub fn parse_design(text: &str, name: &str, space: &DesignSpace) -> Result<DesignState> {
    let err = |line: usize, msg: String| Error::Parse {
        path: name.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DESIGN_HEADER => {}
        _ => return Err(err(1, format!("expected header '{DESIGN_HEADER}'"))),
    }
    let mut psi: Vec<Option<[f64; 3]>> = vec![None; space.nodes.len()];
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(err(i + 1, format!("expected 4 fields, got {}", f.len())));
        }
        let node: usize = f[0].parse().map_err(|_| err(i + 1, format!("bad node index '{}'", f[0])))?;
        let mut v = [0.0; 3];
        for c in 0..3 {
            v[c] = f[c + 1]
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| err(i + 1, format!("bad component '{}'", f[c + 1])))?;
        }
        let slot = space
            .slot_of(node)
            .ok_or_else(|| err(i + 1, format!("node {node} is not a design node")))?;
        if psi[slot].replace(v).is_some() {
            return Err(err(i + 1, format!("node {node} given twice")));
        }
    }
    let psi = psi
        .into_iter()
        .enumerate()
        .map(|(k, p)| p.ok_or_else(|| err(0, format!("design node {} missing", space.nodes[k]))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignState { psi })
}

pub fn read_design(path: &Path, space: &DesignSpace) -> Result<DesignState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_design(&text, &path.display().to_string(), space)
}

pub fn log_to_text(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.iter,
            r.j,
            r.torque,
            r.constraint,
            r.volume,
            r.lambda,
            r.c,
            r.kappa,
            r.mean_angle_deg,
            r.demag_nominal,
            r.demag_damaging,
            r.clamp_count
        )
        .unwrap();
    }
    s
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    std::fs::write(path, log_to_text(rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::Material;
    use crate::mesh::{generate_sector_mesh, Region, SectorGeometry};

    fn space() -> (crate::mesh::Mesh, DesignSpace) {
        let mesh = generate_sector_mesh(&SectorGeometry {
            h: 0.008,
            ..SectorGeometry::default()
        })
        .unwrap();
        let el = (0..mesh.num_triangles())
            .filter(|&t| mesh.regions[t] == Region::RotorDesign.id())
            .collect();
        let s = DesignSpace::new(&mesh, el, vec![Material::Air; mesh.num_triangles()]).unwrap();
        (mesh, s)
    }

    #[test]
    fn design_round_trip_is_exact() {
        let (mesh, s) = space();
        let st = DesignState::from_materials(&s, &mesh, |v, _| Material::from_index(v % 4).unwrap());
        let text = design_to_text(&s, &st);
        assert!(text.starts_with("demagdesign v1\n"));
        let back = parse_design(&text, "d", &s).unwrap();
        assert_eq!(back, st);
        assert_eq!(design_to_text(&s, &back), text);
    }

    #[test]
    fn design_errors_carry_lines() {
        let (mesh, s) = space();
        let st = DesignState::uniform(&s, Material::Iron);
        let text = design_to_text(&s, &st);
        let broken = text.replacen("\n", "\nx", 1);
        match parse_design(&broken, "d", &s) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let short: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(parse_design(&short, "d", &s).is_err());
        assert!(parse_design("nope\n", "d", &s).is_err());
        let _ = mesh;
    }

    #[test]
    fn log_format() {
        let row = LogRow {
            iter: 0,
            j: -1.0,
            torque: 2.0,
            constraint: 0.0,
            volume: 1e-4,
            lambda: 0.0,
            c: 10.0,
            kappa: 0.5,
            mean_angle_deg: 12.5,
            demag_nominal: 0.0,
            demag_damaging: 0.25,
            clamp_count: 3,
        };
        let t = log_to_text(&[row]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines[1].split(',').count(), 12);
        assert!(lines[1].ends_with(",3"));
    }
}
