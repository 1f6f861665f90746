//! Line-oriented graph format:
//!
//! ```text
//! # comment
//! node W role=treatment
//! C2 -> W
//! ```
//!
//! Nodes that appear only in edges get [`Role::Other`].

use std::fmt::Write as _;
use std::path::Path;

use super::{Dag, Node, Role};
use crate::error::{Error, Result};

impl Dag {
    pub fn parse_text(src: &str, origin: &str) -> Result<Dag> {
        let mut nodes: Vec<Node> = Vec::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        for (k, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = k + 1;
            if let Some(rest) = line.strip_prefix("node ") {
                let mut parts = rest.split_whitespace();
                let id = parts
                    .next()
                    .ok_or_else(|| Error::parse(origin, lineno, "missing node id"))?;
                let mut role = Role::Other;
                for attr in parts {
                    match attr.split_once('=') {
                        Some(("role", r)) => {
                            role = r
                                .parse()
                                .map_err(|e: String| Error::parse(origin, lineno, e))?;
                        }
                        _ => {
                            return Err(Error::parse(
                                origin,
                                lineno,
                                format!("unknown attribute `{attr}`"),
                            ))
                        }
                    }
                }
                if nodes.iter().any(|n| n.id == id) {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("node `{id}` declared twice"),
                    ));
                }
                nodes.push(Node {
                    id: id.to_string(),
                    role,
                });
            } else if let Some((a, b)) = line.split_once("->") {
                let (a, b) = (a.trim(), b.trim());
                if a.is_empty()
                    || b.is_empty()
                    || a.contains(char::is_whitespace)
                    || b.contains(char::is_whitespace)
                {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("malformed edge `{line}`"),
                    ));
                }
                edges.push((a.to_string(), b.to_string()));
            } else {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("unrecognised line `{line}`"),
                ));
            }
        }
        for (a, b) in &edges {
            for v in [a, b] {
                if !nodes.iter().any(|n| &n.id == v) {
                    nodes.push(Node {
                        id: v.clone(),
                        role: Role::Other,
                    });
                }
            }
        }
        Ok(Dag::new(nodes, edges)?)
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Dag> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)?;
        Dag::parse_text(&src, &path.display().to_string())
    }

    /// Serialises in declaration order; round-trips through [`Dag::parse_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(out, "node {} role={}", n.id, n.role);
        }
        for (a, b) in self.edge_set() {
            let _ = writeln!(out, "{a} -> {b}");
        }
        out
    }
}

impl std::str::FromStr for Dag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Dag> {
        Dag::parse_text(s, "<string>")
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::generic_features;
    use super::*;

    #[test]
    fn parses_roles_edges_and_comments() {
        let g: Dag = "# confounded\nnode W role=treatment\nnode Y role=outcome\nC -> W  # back door\nC -> Y\nW -> Y\n"
            .parse()
            .unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.role("W").unwrap(), Role::Treatment);
        assert_eq!(g.role("C").unwrap(), Role::Other);
        assert_eq!(g.edge_set().len(), 3);
    }

    #[test]
    fn round_trip() {
        let g = generic_features();
        let back: Dag = g.to_text().parse().unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = "A -> B\nnode C role=bogus\n".parse::<Dag>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = "A -> B\nB => C\n".parse::<Dag>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!("A -> B\nB -> A\n".parse::<Dag>().is_err());
    }
}
