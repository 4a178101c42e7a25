//! Plain-text edge list: a `# partitions: n1,n2,...` header followed by one
//! `u v weight` line per edge.

use std::io::{BufRead, Write};

use super::{Edge, LayeredGraph, Representation};
use crate::error::{Error, Result};

pub fn write_edge_list<W: Write>(g: &LayeredGraph, mut out: W) -> std::io::Result<()> {
    let parts: Vec<String> = g.partitions.iter().map(usize::to_string).collect();
    writeln!(out, "# partitions: {}", parts.join(","))?;
    writeln!(out, "# representation: {}", g.representation)?;
    for e in &g.edges {
        writeln!(out, "{} {} {}", e.u, e.v, e.weight)?;
    }
    out.flush()
}

pub fn read_edge_list<R: BufRead>(input: R) -> Result<LayeredGraph> {
    let bad = |line: usize, msg: &str| Error::Structure(format!("edge list line {line}: {msg}"));
    let mut partitions = None;
    let mut representation = Representation::Fc;
    let mut edges = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<edge list>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(list) = rest.strip_prefix("partitions:") {
                let parsed: std::result::Result<Vec<usize>, _> =
                    list.split(',').map(|s| s.trim().parse()).collect();
                partitions = Some(parsed.map_err(|_| bad(i + 1, "bad partition list"))?);
            } else if let Some(tag) = rest.strip_prefix("representation:") {
                representation = tag.trim().parse()?;
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = || fields.next().ok_or_else(|| bad(i + 1, "expected `u v weight`"));
        let u = next()?.parse().map_err(|_| bad(i + 1, "bad node id"))?;
        let v = next()?.parse().map_err(|_| bad(i + 1, "bad node id"))?;
        let weight = next()?.parse().map_err(|_| bad(i + 1, "bad weight"))?;
        edges.push(Edge { u, v, weight });
    }
    let partitions = partitions.ok_or_else(|| bad(0, "missing `# partitions:` header"))?;
    let g = LayeredGraph {
        partitions,
        edges,
        representation,
    };
    g.validate()?;
    Ok(g)
}
