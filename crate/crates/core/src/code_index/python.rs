//! Python front end built on tree-sitter.

use std::collections::HashMap;

use tree_sitter::{Node, Parser, Point};

use super::{count_lines, digest, CodeUnit, CodeUnitKind, CodeUnitTree, IndexError, LineSpan};

const IMPORT_KINDS: &[&str] = &[
    "import_statement",
    "import_from_statement",
    "future_import_statement",
];

/// Parse Python source into a [`CodeUnitTree`].
///
/// Every class and function is retained wherever it appears (including
/// definitions nested under `if`/`try` blocks), parented to the nearest
/// enclosing class or function. Module-level statements other than imports
/// and a leading docstring make the file grow a single trailing `Main` unit
/// that collects every line outside the top-level definitions.
pub fn parse_file(source: &str, path: &str) -> Result<CodeUnitTree, IndexError> {
    let line_count = count_lines(source);
    let whole = LineSpan::new(1, line_count + 1);
    let mut root = CodeUnit {
        kind: CodeUnitKind::File,
        name: String::new(),
        signature: String::new(),
        span: whole,
        segments: Vec::new(),
        children: Vec::new(),
        ordinal: 0,
    };

    if !source.trim().is_empty() {
        let mut parser = Parser::new();
        parser
            .set_language(&tree_sitter_python::LANGUAGE.into())
            .map_err(|e| IndexError::Parser(e.to_string()))?;
        let parsed = parser
            .parse(source, None)
            .ok_or_else(|| IndexError::Parser("parse cancelled".into()))?;
        let module = parsed.root_node();
        if module.has_error() {
            return Err(IndexError::SyntaxError {
                path: path.to_string(),
                line: first_error_line(module).unwrap_or(1),
            });
        }
        let src = source.as_bytes();
        root.children = collect_units(module, src);
        if has_module_statements(module) {
            let segments = gaps(whole, &root.children);
            if let (Some(first), Some(last)) = (segments.first(), segments.last()) {
                root.children.push(CodeUnit {
                    kind: CodeUnitKind::Main,
                    name: String::new(),
                    signature: String::new(),
                    span: LineSpan::new(first.start, last.end),
                    segments,
                    children: Vec::new(),
                    ordinal: 0,
                });
            }
        }
    }

    Ok(CodeUnitTree {
        path: path.to_string(),
        root,
        digest: digest(source),
        line_count,
        degraded: false,
    })
}

fn first_error_line(node: Node) -> Option<usize> {
    if node.is_error() || node.is_missing() {
        return Some(node.start_position().row + 1);
    }
    let mut cursor = node.walk();
    let children: Vec<_> = node.children(&mut cursor).collect();
    children
        .into_iter()
        .filter(|c| c.has_error())
        .find_map(first_error_line)
}

fn collect_units(node: Node, src: &[u8]) -> Vec<CodeUnit> {
    let mut out = Vec::new();
    collect_into(node, src, &mut out);
    assign_ordinals(&mut out);
    out
}

fn collect_into(node: Node, src: &[u8], out: &mut Vec<CodeUnit>) {
    let mut cursor = node.walk();
    for child in node.named_children(&mut cursor) {
        match child.kind() {
            "function_definition" | "class_definition" => {
                out.push(build_unit(child, child.start_position(), src));
            }
            "decorated_definition" => match child.child_by_field_name("definition") {
                Some(def) => out.push(build_unit(def, child.start_position(), src)),
                None => collect_into(child, src, out),
            },
            _ => collect_into(child, src, out),
        }
    }
}

fn build_unit(def: Node, start: Point, src: &[u8]) -> CodeUnit {
    let name = def
        .child_by_field_name("name")
        .map(|n| text(n, src).to_string())
        .unwrap_or_default();
    let span = LineSpan::new(start.row + 1, last_line(def) + 1);
    let body = def.child_by_field_name("body");
    let children = body.map(|b| collect_units(b, src)).unwrap_or_default();
    let (kind, signature) = if def.kind() == "class_definition" {
        (CodeUnitKind::Class, body.map(|b| class_attributes(b, src)).unwrap_or_default())
    } else {
        (CodeUnitKind::Function, function_signature(def, src))
    };
    CodeUnit {
        kind,
        name,
        signature,
        span,
        segments: Vec::new(),
        children,
        ordinal: 0,
    }
}

/// 1-based line of the last non-comment token under `node`.
fn last_line(node: Node) -> usize {
    let mut cursor = node.walk();
    let last = node
        .children(&mut cursor)
        .filter(|c| c.kind() != "comment")
        .last();
    match last {
        Some(child) => last_line(child),
        None => {
            let end = node.end_position();
            if end.column == 0 && end.row > node.start_position().row {
                end.row
            } else {
                end.row + 1
            }
        }
    }
}

fn text<'a>(node: Node, src: &'a [u8]) -> &'a str {
    node.utf8_text(src).unwrap_or_default()
}

pub(crate) fn normalize_ws(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace("( ", "(")
        .replace(" )", ")")
        .replace("[ ", "[")
        .replace(" ]", "]")
}

fn function_signature(def: Node, src: &[u8]) -> String {
    let params = def
        .child_by_field_name("parameters")
        .map(|p| text(p, src))
        .unwrap_or("()");
    let mut signature = normalize_ws(params);
    if let Some(ret) = def.child_by_field_name("return_type") {
        signature.push_str(" -> ");
        signature.push_str(&normalize_ws(text(ret, src)));
    }
    signature
}

/// Names assigned in the class body plus `self.<name>` assignments made in
/// its methods, first appearance first.
fn class_attributes(body: Node, src: &[u8]) -> String {
    let mut names: Vec<String> = Vec::new();
    let mut push = |name: &str| {
        if !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    };
    let mut cursor = body.walk();
    for stmt in body.named_children(&mut cursor) {
        if stmt.kind() != "expression_statement" {
            continue;
        }
        let mut inner = stmt.walk();
        for expr in stmt.named_children(&mut inner) {
            if expr.kind() == "assignment" {
                if let Some(left) = expr.child_by_field_name("left") {
                    if left.kind() == "identifier" {
                        push(text(left, src));
                    }
                }
            }
        }
    }
    let mut self_attrs = Vec::new();
    collect_self_attributes(body, src, &mut self_attrs, 0);
    for name in &self_attrs {
        push(name);
    }
    names.join(", ")
}

fn collect_self_attributes(node: Node, src: &[u8], out: &mut Vec<String>, def_depth: usize) {
    let mut cursor = node.walk();
    for child in node.named_children(&mut cursor) {
        let depth = match child.kind() {
            "class_definition" => continue,
            "function_definition" => def_depth + 1,
            _ => def_depth,
        };
        if child.kind() == "assignment" && def_depth == 1 {
            if let Some(left) = child.child_by_field_name("left") {
                if left.kind() == "attribute" {
                    let object = left.child_by_field_name("object").map(|o| text(o, src));
                    let attr = left.child_by_field_name("attribute").map(|a| text(a, src));
                    if let (Some("self"), Some(attr)) = (object, attr) {
                        out.push(attr.to_string());
                    }
                }
            }
        }
        if depth <= 1 {
            collect_self_attributes(child, src, out, depth);
        }
    }
}

fn assign_ordinals(units: &mut [CodeUnit]) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    for unit in units {
        let k = seen.entry(unit.name.clone()).or_default();
        unit.ordinal = *k;
        *k += 1;
    }
}

fn is_docstring(stmt: Node) -> bool {
    stmt.kind() == "expression_statement"
        && stmt.named_child_count() == 1
        && stmt.named_child(0).is_some_and(|c| c.kind() == "string")
}

fn has_module_statements(module: Node) -> bool {
    let mut cursor = module.walk();
    let statements: Vec<_> = module
        .named_children(&mut cursor)
        .filter(|n| n.kind() != "comment")
        .collect();
    statements.iter().enumerate().any(|(i, stmt)| {
        let kind = stmt.kind();
        !(matches!(
            kind,
            "function_definition" | "class_definition" | "decorated_definition"
        ) || IMPORT_KINDS.contains(&kind)
            || (i == 0 && is_docstring(*stmt)))
    })
}

/// Line ranges of `whole` not covered by any unit span.
fn gaps(whole: LineSpan, units: &[CodeUnit]) -> Vec<LineSpan> {
    let mut out = Vec::new();
    let mut cursor = whole.start;
    for unit in units {
        if unit.span.start > cursor {
            out.push(LineSpan::new(cursor, unit.span.start));
        }
        cursor = cursor.max(unit.span.end);
    }
    if cursor < whole.end {
        out.push(LineSpan::new(cursor, whole.end));
    }
    out
}
