//! Hexahedral meshes: structured boxes and a plain text format.
//!
//! Text format, `#` starts a comment:
//!
//! ```text
//! <node count> <element count>
//! x y z                      (one line per node, mm)
//! n0 n1 n2 n3 n4 n5 n6 n7    (one line per element, 0-based)
//! ```
//!
//! Element nodes follow the usual trilinear ordering: the bottom face
//! counter-clockwise, then the top face.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::shape::{gauss_points, shape_eval};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 8]>,
}

impl Mesh {
    /// Box `[0, size]` split into `divisions` elements per axis.
    pub fn structured_box(size: [f64; 3], divisions: [usize; 3]) -> Result<Mesh> {
        if divisions.contains(&0) || size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "box needs positive size and divisions, got {size:?} / {divisions:?}"
            )));
        }
        let [nx, ny, nz] = divisions;
        let id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    nodes.push([
                        size[0] * i as f64 / nx as f64,
                        size[1] * j as f64 / ny as f64,
                        size[2] * k as f64 / nz as f64,
                    ]);
                }
            }
        }
        let mut elements = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    elements.push([
                        id(i, j, k),
                        id(i + 1, j, k),
                        id(i + 1, j + 1, k),
                        id(i, j + 1, k),
                        id(i, j, k + 1),
                        id(i + 1, j, k + 1),
                        id(i + 1, j + 1, k + 1),
                        id(i, j + 1, k + 1),
                    ]);
                }
            }
        }
        Ok(Mesh { nodes, elements })
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 3]; 8] {
        self.elements[e].map(|n| self.nodes[n])
    }

    /// Checks connectivity and a positive Jacobian at every Gauss point.
    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::InvalidConfig("mesh has no elements".into()));
        }
        for (e, conn) in self.elements.iter().enumerate() {
            if let Some(&bad) = conn.iter().find(|&&n| n >= self.nodes.len()) {
                return Err(Error::InvalidConfig(format!(
                    "element {e} references node {bad}, mesh has {} nodes",
                    self.nodes.len()
                )));
            }
            let coords = self.element_coords(e);
            for xi in gauss_points() {
                let s = shape_eval(&coords, &xi).map_err(|err| match err {
                    Error::BadElement { det, .. } => Error::BadElement { element: e, det },
                    other => other,
                })?;
                debug_assert!(s.det_j > 0.0);
            }
        }
        Ok(())
    }

    /// Smallest and largest coordinate along `axis`.
    pub fn extent(&self, axis: usize) -> (f64, f64) {
        self.nodes
            .iter()
            .map(|x| x[axis])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Nodes whose coordinate along `axis` lies within `tol` of `value`.
    pub fn nodes_at(&self, axis: usize, value: f64, tol: f64) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&n| (self.nodes[n][axis] - value).abs() <= tol).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.nodes.len(), self.elements.len());
        for x in &self.nodes {
            let _ = writeln!(s, "{} {} {}", x[0], x[1], x[2]);
        }
        for conn in &self.elements {
            let line: Vec<String> = conn.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }
}

/// Parses the text format; `origin` names the source in error messages.
pub fn parse_mesh(text: &str, origin: &Path) -> Result<Mesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty mesh file".into()))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(hline, format!("expected `<nodes> <elements>`, found `{header}`")))?;
    let [n_nodes, n_elements] = counts[..] else {
        return Err(err(hline, format!("expected `<nodes> <elements>`, found `{header}`")));
    };

    let mut nodes = Vec::with_capacity(n_nodes);
    let mut last = hline;
    for k in 0..n_nodes {
        let (ln, l) = lines.next().ok_or_else(|| err(last + 1, format!("missing node line {} of {n_nodes}", k + 1)))?;
        last = ln;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(ln, format!("bad node coordinates `{l}`")))?;
        match v[..] {
            [x, y, z] if v.iter().all(|c| c.is_finite()) => nodes.push([x, y, z]),
            _ => return Err(err(ln, format!("expected three coordinates, found `{l}`"))),
        }
    }
    let mut elements = Vec::with_capacity(n_elements);
    for k in 0..n_elements {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| err(last + 1, format!("missing element line {} of {n_elements}", k + 1)))?;
        last = ln;
        let v: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(ln, format!("bad element connectivity `{l}`")))?;
        let conn: [usize; 8] = v
            .try_into()
            .map_err(|_| err(ln, format!("expected eight node indices, found `{l}`")))?;
        if let Some(&bad) = conn.iter().find(|&&n| n >= n_nodes) {
            return Err(err(ln, format!("node index {bad} out of range (mesh has {n_nodes} nodes)")));
        }
        elements.push(conn);
    }
    if let Some((ln, l)) = lines.next() {
        return Err(err(ln, format!("unexpected trailing content `{l}`")));
    }
    let mesh = Mesh { nodes, elements };
    mesh.validate()?;
    Ok(mesh)
}

pub fn read_mesh(location: &Path) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(location)?, location)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_counts_and_round_trip() {
        let m = Mesh::structured_box([2.0, 1.0, 1.0], [2, 1, 3]).unwrap();
        assert_eq!(m.nodes.len(), 3 * 2 * 4);
        assert_eq!(m.elements.len(), 6);
        m.validate().unwrap();
        assert_eq!(parse_mesh(&m.to_text(), Path::new("m")).unwrap(), m);
        assert_eq!(m.nodes_at(0, 2.0, 1e-12).len(), 8);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let good = Mesh::structured_box([1.0; 3], [1, 1, 1]).unwrap().to_text();
        let mut lines: Vec<&str> = good.lines().collect();
        lines[3] = "0 1 nope";
        let e = parse_mesh(&lines.join("\n"), Path::new("m.txt")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 4, .. }), "{e}");
        assert!(e.to_string().starts_with("m.txt:4:"));

        let text = "# two nodes short\n8 1\n0 0 0\n";
        assert!(matches!(parse_mesh(text, Path::new("m")), Err(Error::Parse { line: 4, .. })));
        let text = good.replace("0 1 3 2 4 5 7 6", "0 1 3 2 4 5 7 9");
        assert!(matches!(parse_mesh(&text, Path::new("m")), Err(Error::Parse { line: 10, .. })));
    }

    #[test]
    fn inverted_element_is_rejected() {
        let mut m = Mesh::structured_box([1.0; 3], [1, 1, 1]).unwrap();
        m.elements[0].swap(0, 4);
        m.elements[0].swap(1, 5);
        m.elements[0].swap(2, 6);
        m.elements[0].swap(3, 7);
        assert!(matches!(m.validate(), Err(Error::BadElement { element: 0, .. })));
    }
}
