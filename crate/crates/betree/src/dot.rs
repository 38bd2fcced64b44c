//! Graphviz rendering of a boundary tree.

use std::fmt::Write;

use betree_core::tree::BoundaryTree;

/// Fill colours indexed by `label % 10`.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// A `digraph` with one node per tree node, labelled `id:label` and listed by id,
/// followed by one edge per parent/child link ordered by child id.
pub fn to_dot(tree: &BoundaryTree) -> String {
    let mut out = String::from("digraph boundary_tree {\n    node [shape=circle, style=filled, fontname=\"Helvetica\"];\n");
    for (id, node) in tree.nodes().iter().enumerate() {
        let label = node.sample.label;
        writeln!(out, "    n{id} [label=\"{id}:{label}\", fillcolor=\"{}\"];", PALETTE[label % PALETTE.len()])
            .expect("writing to a String");
    }
    for (id, node) in tree.nodes().iter().enumerate() {
        if let Some(p) = node.parent {
            writeln!(out, "    n{p} -> n{id};").expect("writing to a String");
        }
    }
    out.push_str("}\n");
    out
}
