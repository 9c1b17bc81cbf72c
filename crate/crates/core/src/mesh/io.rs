//! Plain-text mesh format.
//!
//! ```text
//! vertices N
//! x y boundary_flag        (N lines, flag 0|1)
//! triangles M
//! v0 v1 v2 region          (M lines, region 1|2)
//! interface_edges K
//! va vb                    (K lines)
//! ```
//!
//! Tokens are whitespace separated and `#` starts a comment. Coordinates are
//! written with the shortest representation that round-trips exactly.

use std::fmt::Write;

use super::{Mesh, MeshError, Point, Region, Triangle};

pub fn save_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "vertices {}", mesh.n_vertices()).unwrap();
    for (p, &b) in mesh.vertices().iter().zip(mesh.boundary_flags()) {
        writeln!(out, "{:?} {:?} {}", p[0], p[1], u8::from(b)).unwrap();
    }
    writeln!(out, "triangles {}", mesh.n_triangles()).unwrap();
    for t in mesh.triangles() {
        let [a, b, c] = t.vertices;
        writeln!(out, "{a} {b} {c} {}", t.region.tag()).unwrap();
    }
    writeln!(out, "interface_edges {}", mesh.interface_edges().len()).unwrap();
    for [a, b] in mesh.interface_edges() {
        writeln!(out, "{a} {b}").unwrap();
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, as (line number, tokens).
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let body = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if !tokens.is_empty() {
                return Some((i + 1, tokens));
            }
        }
        None
    }

    fn expect_record(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), MeshError> {
        self.next_tokens().ok_or_else(|| MeshError::Parse {
            line: self.last + 1,
            message: format!("unexpected end of input, expected {what}"),
        })
    }

    fn header(&mut self, keyword: &str) -> Result<usize, MeshError> {
        let (line, tokens) = self.expect_record(keyword)?;
        match tokens.as_slice() {
            [k, count] if *k == keyword => parse(count, line, "count"),
            _ => Err(MeshError::Parse { line, message: format!("expected `{keyword} <count>`") }),
        }
    }
}

fn parse<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T, MeshError> {
    token.parse().map_err(|_| MeshError::Parse {
        line,
        message: format!("invalid {what} `{token}`"),
    })
}

fn arity(tokens: &[&str], n: usize, line: usize) -> Result<(), MeshError> {
    if tokens.len() == n {
        Ok(())
    } else {
        Err(MeshError::Parse { line, message: format!("expected {n} fields, found {}", tokens.len()) })
    }
}

pub fn load_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };

    let nv = lines.header("vertices")?;
    let mut vertices: Vec<Point> = Vec::with_capacity(nv);
    let mut on_boundary = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, t) = lines.expect_record("vertex")?;
        arity(&t, 3, line)?;
        vertices.push([parse(t[0], line, "coordinate")?, parse(t[1], line, "coordinate")?]);
        on_boundary.push(match t[2] {
            "0" => false,
            "1" => true,
            other => return Err(MeshError::Parse { line, message: format!("boundary flag `{other}` is not 0 or 1") }),
        });
    }

    let nt = lines.header("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, t) = lines.expect_record("triangle")?;
        arity(&t, 4, line)?;
        let region = Region::from_tag(parse(t[3], line, "region")?)
            .ok_or_else(|| MeshError::Parse { line, message: format!("region `{}` is not 1 or 2", t[3]) })?;
        triangles.push(Triangle {
            vertices: [parse(t[0], line, "index")?, parse(t[1], line, "index")?, parse(t[2], line, "index")?],
            region,
        });
    }

    let ne = lines.header("interface_edges")?;
    let mut interface_edges = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (line, t) = lines.expect_record("interface edge")?;
        arity(&t, 2, line)?;
        let (a, b): (usize, usize) = (parse(t[0], line, "index")?, parse(t[1], line, "index")?);
        if a >= nv || b >= nv {
            return Err(MeshError::Validation(format!("interface edge ({a},{b}) references a vertex index >= {nv}")));
        }
        interface_edges.push([a, b]);
    }
    if let Some((line, _)) = lines.next_tokens() {
        return Err(MeshError::Parse { line, message: "trailing content after interface edges".into() });
    }

    Mesh::new(vertices, triangles, on_boundary, interface_edges)
}
