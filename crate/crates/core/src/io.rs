//! Line-oriented text format for meshes and nodal solutions.
//!
//! ```text
//! nv nt
//! x y b        (nv lines, b = 1 on the boundary)
//! i j k        (nt lines, 0-based, counter-clockwise)
//! values       (optional section)
//! v            (nv lines)
//! ```
//!
//! Coordinates are written in shortest round-trip form and values with 17
//! significant digits, so a write followed by a read reproduces every float
//! bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::NodalField;
use crate::mesh::{Mesh, Triangle, Vertex};
use crate::scalar::Real;

const VALUES_TAG: &str = "values";

pub fn format_mesh<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", mesh.num_vertices(), mesh.num_triangles()).unwrap();
    for (v, &b) in mesh.vertices().iter().zip(mesh.is_boundary()) {
        writeln!(out, "{} {} {}", v.x, v.y, u8::from(b)).unwrap();
    }
    for t in mesh.triangles() {
        let [i, j, k] = t.0;
        writeln!(out, "{i} {j} {k}").unwrap();
    }
    out
}

pub fn format_solution<T: Real>(mesh: &Mesh<T>, field: &[T]) -> Result<String> {
    Error::check_len(mesh.num_vertices(), field.len())?;
    let mut out = format_mesh(mesh);
    out.push_str(VALUES_TAG);
    out.push('\n');
    for v in field {
        writeln!(out, "{v:.16e}").unwrap();
    }
    Ok(out)
}

/// Parsed mesh plus the optional `values` section.
pub fn parse<T: Real>(text: &str, path: &Path) -> Result<(Mesh<T>, Option<NodalField<T>>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let eof = || Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "unexpected end of file".into(),
    };

    let (ln, header) = lines.next().ok_or_else(eof)?;
    let counts = fields::<usize>(header, 2).map_err(|m| err(ln, m))?;
    let (nv, nt) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    let mut is_boundary = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(eof)?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(err(
                ln,
                format!("expected `x y b`, got {} fields", parts.len()),
            ));
        }
        let x = parts[0]
            .parse::<T>()
            .map_err(|_| err(ln, format!("bad coordinate `{}`", parts[0])))?;
        let y = parts[1]
            .parse::<T>()
            .map_err(|_| err(ln, format!("bad coordinate `{}`", parts[1])))?;
        let b = match parts[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(err(
                    ln,
                    format!("boundary flag must be 0 or 1, got `{other}`"),
                ))
            }
        };
        vertices.push(Vertex::new(x, y));
        is_boundary.push(b);
    }

    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines.next().ok_or_else(eof)?;
        let idx = fields::<usize>(l, 3).map_err(|m| err(ln, m))?;
        triangles.push(Triangle([idx[0], idx[1], idx[2]]));
    }

    let values = match lines.next() {
        None => None,
        Some((_, VALUES_TAG)) => {
            let mut vals = Vec::with_capacity(nv);
            for _ in 0..nv {
                let (ln, l) = lines.next().ok_or_else(eof)?;
                vals.push(
                    l.parse::<T>()
                        .map_err(|_| err(ln, format!("bad value `{l}`")))?,
                );
            }
            Some(NodalField::from(vals))
        }
        Some((ln, other)) => return Err(err(ln, format!("unexpected line `{other}`"))),
    };
    if let Some((ln, l)) = lines.next() {
        return Err(err(ln, format!("trailing content `{l}`")));
    }
    let mesh = Mesh::new(vertices, triangles, is_boundary)?;
    Ok((mesh, values))
}

fn fields<F: std::str::FromStr>(line: &str, n: usize) -> std::result::Result<Vec<F>, String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != n {
        return Err(format!("expected {n} fields, got {}", parts.len()));
    }
    parts
        .iter()
        .map(|p| p.parse::<F>().map_err(|_| format!("bad integer `{p}`")))
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: PathBuf::from(path),
        source,
    }
}

pub fn read_mesh<T: Real>(path: &Path) -> Result<Mesh<T>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse(&text, path)?.0)
}

pub fn write_mesh<T: Real>(mesh: &Mesh<T>, path: &Path) -> Result<()> {
    fs::write(path, format_mesh(mesh)).map_err(io_err(path))
}

/// Writes the mesh followed by a `values` section.
pub fn export_solution<T: Real>(mesh: &Mesh<T>, field: &[T], path: &Path) -> Result<()> {
    fs::write(path, format_solution(mesh, field)?).map_err(io_err(path))
}

pub fn import_solution<T: Real>(path: &Path) -> Result<(Mesh<T>, NodalField<T>)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match parse(&text, path)? {
        (mesh, Some(values)) => Ok((mesh, values)),
        (_, None) => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "missing `values` section".into(),
        }),
    }
}
