//! Text, DOT and JSON renderings of fitted trees.

use std::fmt::Write;

use super::tree::TreeNode;

fn fmt_cut(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Indented text: one line per split condition, leaves show the decision,
/// weight and row count.
pub fn to_text(root: &TreeNode, names: &[String]) -> String {
    let mut out = String::new();
    text_node(root, names, 0, &mut out);
    out
}

fn text_node(node: &TreeNode, names: &[String], indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match node {
        TreeNode::Leaf { weight, count } => {
            let decision = if *weight > 0.5 { "treat" } else { "control" };
            let _ = writeln!(out, "{pad}-> {decision} (w = {weight:.4}, n = {count})");
        }
        TreeNode::Split {
            feature,
            cut,
            left,
            right,
        } => {
            let name = &names[*feature];
            let _ = writeln!(out, "{pad}{name} <= {}:", fmt_cut(*cut));
            text_node(left, names, indent + 1, out);
            let _ = writeln!(out, "{pad}{name} > {}:", fmt_cut(*cut));
            text_node(right, names, indent + 1, out);
        }
    }
}

/// Graphviz digraph; left edges are labelled "yes" (condition holds).
pub fn to_dot(root: &TreeNode, names: &[String]) -> String {
    let mut out = String::from("digraph tree {\n  node [shape=box];\n");
    let mut next = 0usize;
    dot_node(root, names, &mut next, &mut out);
    out.push_str("}\n");
    out
}

fn dot_node(node: &TreeNode, names: &[String], next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    match node {
        TreeNode::Leaf { weight, count } => {
            let decision = u8::from(*weight > 0.5);
            let _ = writeln!(
                out,
                "  n{id} [label=\"d = {decision}\\nw = {weight:.4}\\nn = {count}\"];"
            );
        }
        TreeNode::Split {
            feature,
            cut,
            left,
            right,
        } => {
            let label = format!("{} <= {}", names[*feature], fmt_cut(*cut)).replace('"', "\\\"");
            let _ = writeln!(out, "  n{id} [label=\"{label}\"];");
            let l = dot_node(left, names, next, out);
            let r = dot_node(right, names, next, out);
            let _ = writeln!(out, "  n{id} -> n{l} [label=\"yes\"];");
            let _ = writeln!(out, "  n{id} -> n{r} [label=\"no\"];");
        }
    }
    id
}
