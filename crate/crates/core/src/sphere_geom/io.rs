//! Plain-text mesh and field files.
//!
//! Mesh: `N <dim>`, then `v x1 .. xN`, `c i j [k]` and `b i nx1 .. nxN` lines.
//! Field: `phi <count>` followed by one value per line. `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::mesh::{SphericalMesh, Vec3};
use super::spec::DomainSpec;
use crate::error::{Error, Result};

pub fn mesh_to_string(mesh: &SphericalMesh) -> String {
    let d = mesh.dim();
    let mut s = String::new();
    writeln!(s, "N {d}").unwrap();
    for x in mesh.nodes() {
        s.push('v');
        for c in &x[..d] {
            write!(s, " {c:.17e}").unwrap();
        }
        s.push('\n');
    }
    for c in 0..mesh.num_cells() {
        s.push('c');
        for i in mesh.cell(c) {
            write!(s, " {i}").unwrap();
        }
        s.push('\n');
    }
    for b in mesh.boundary() {
        write!(s, "b {}", b.node).unwrap();
        for c in &b.conormal[..d] {
            write!(s, " {c:.17e}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn write_mesh(mesh: &SphericalMesh, path: &Path) -> Result<()> {
    fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

fn numbers<T: std::str::FromStr>(line: usize, toks: &[&str]) -> Result<Vec<T>> {
    toks.iter()
        .map(|t| t.parse::<T>().map_err(|_| Error::Parse { line, msg: format!("bad number {t:?}") }))
        .collect()
}

fn pad(v: &[f64]) -> Vec3 {
    let mut p = [0.0; 3];
    p[..v.len()].copy_from_slice(v);
    p
}

pub fn parse_mesh(text: &str, spec: Option<DomainSpec>) -> Result<SphericalMesh> {
    let mut dim = None;
    let (mut nodes, mut cells, mut boundary) = (Vec::new(), Vec::new(), Vec::new());
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let need_dim = || dim.ok_or(Error::Parse { line, msg: "`N <dim>` must come first".into() });
        match toks[0] {
            "N" => {
                let d: Vec<usize> = numbers(line, &toks[1..])?;
                if d.len() != 1 || !(d[0] == 2 || d[0] == 3) {
                    return Err(Error::Parse { line, msg: "expected `N 2` or `N 3`".into() });
                }
                dim = Some(d[0]);
            }
            "v" => {
                let d = need_dim()?;
                let x: Vec<f64> = numbers(line, &toks[1..])?;
                if x.len() != d {
                    return Err(Error::Parse { line, msg: format!("node needs {d} coordinates") });
                }
                let n = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::Parse { line, msg: format!("node is not on the unit sphere (norm {n})") });
                }
                nodes.push(pad(&x));
            }
            "c" => {
                let d = need_dim()?;
                let c: Vec<usize> = numbers(line, &toks[1..])?;
                if c.len() != d {
                    return Err(Error::Parse { line, msg: format!("cell needs {d} vertices") });
                }
                cells.extend(c);
            }
            "b" => {
                let d = need_dim()?;
                if toks.len() != d + 2 {
                    return Err(Error::Parse { line, msg: format!("boundary line needs a node and {d} components") });
                }
                let i: usize = numbers(line, &toks[1..2])?[0];
                let nu: Vec<f64> = numbers(line, &toks[2..])?;
                boundary.push((i, pad(&nu)));
            }
            other => return Err(Error::Parse { line, msg: format!("unknown record {other:?}") }),
        }
    }
    let dim = dim.ok_or(Error::Parse { line: 1, msg: "missing `N <dim>` header".into() })?;
    SphericalMesh::new(dim, nodes, cells, boundary, spec)
}

pub fn read_mesh(path: &Path) -> Result<SphericalMesh> {
    let text = fs::read_to_string(path)?;
    parse_mesh(&text, Some(DomainSpec::MeshFile { path: path.to_path_buf() }))
}

pub fn phi_to_string(phi: &[f64]) -> String {
    let mut s = format!("phi {}\n", phi.len());
    for v in phi {
        writeln!(s, "{v:.17e}").unwrap();
    }
    s
}

pub fn write_phi(phi: &[f64], path: &Path) -> Result<()> {
    fs::write(path, phi_to_string(phi))?;
    Ok(())
}

pub fn parse_phi(text: &str) -> Result<Vec<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty field file".into() })?;
    let count = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["phi", n] => n.parse::<usize>().map_err(|_| Error::Parse { line, msg: "bad count".into() })?,
        _ => return Err(Error::Parse { line, msg: "expected `phi <count>`".into() }),
    };
    let mut out = Vec::with_capacity(count);
    for (line, l) in lines {
        let v: f64 = l.parse().map_err(|_| Error::Parse { line, msg: format!("bad value {l:?}") })?;
        if !v.is_finite() {
            return Err(Error::Parse { line, msg: "phi must be finite".into() });
        }
        out.push(v);
    }
    if out.len() != count {
        return Err(Error::SizeMismatch { expected: count, got: out.len() });
    }
    Ok(out)
}

pub fn read_phi(path: &Path) -> Result<Vec<f64>> {
    parse_phi(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_geom::build_domain;

    #[test]
    fn mesh_round_trip() {
        let m = build_domain(&DomainSpec::Cap { theta: 0.2, r: 0.6 }, 0.2).unwrap();
        let back = parse_mesh(&mesh_to_string(&m), None).unwrap();
        assert_eq!(back.num_nodes(), m.num_nodes());
        assert_eq!(back.num_cells(), m.num_cells());
        for (a, b) in m.boundary().iter().zip(back.boundary()) {
            assert_eq!(a.node, b.node);
            assert!((a.weight - b.weight).abs() < 1e-14);
        }
        assert!(mesh_to_string(&back) == mesh_to_string(&m));
    }

    #[test]
    fn phi_round_trip_and_errors() {
        let phi = vec![0.1, -2.5e-3, 1.0 / 3.0];
        assert_eq!(parse_phi(&phi_to_string(&phi)).unwrap(), phi);
        assert!(matches!(parse_phi("phi 3\n1\n2\n"), Err(Error::SizeMismatch { .. })));
        assert!(parse_phi("psi 1\n0\n").is_err());
    }

    #[test]
    fn rejects_off_sphere_nodes() {
        let e = parse_mesh("N 2\nv 1 0.1\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }
}
