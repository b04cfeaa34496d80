//! Random Python repositories with known structure, edits whose affected
//! units are known up front, and a scripted summariser that always answers
//! with a well-formed template.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;

use metarag::code_index::{parse_file, CodeUnitKind, CodeUnitPath};
use metarag::diff::unified;
use metarag::llm::LlmRequest;
use metarag::repo::Snapshot;
use metarag::summary::{mechanical_summary, SummaryNode};
use rand::rngs::StdRng;
use rand::RngExt;

#[derive(Debug, Clone)]
pub struct GenUnit {
    pub class: bool,
    pub name: String,
    pub token: String,
    pub children: Vec<GenUnit>,
}

#[derive(Debug, Clone)]
pub enum Item {
    Unit(GenUnit),
    Const { name: String, value: String },
}

#[derive(Debug, Clone)]
pub struct GenFile {
    pub path: String,
    pub items: Vec<Item>,
}

/// Source of unique identifiers.
#[derive(Debug, Default)]
pub struct Names(usize);

impl Names {
    pub fn next(&mut self, prefix: &str) -> String {
        self.0 += 1;
        format!("{prefix}{}", self.0)
    }
}

fn render_unit(unit: &GenUnit, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    if unit.class {
        let _ = writeln!(out, "{pad}class {}:", unit.name);
        let _ = writeln!(out, "{pad}    attr_{} = \"{}\"", unit.name, unit.token);
        for child in &unit.children {
            out.push('\n');
            render_unit(child, indent + 4, out);
        }
    } else {
        let _ = writeln!(out, "{pad}def {}(x):", unit.name);
        for child in &unit.children {
            render_unit(child, indent + 4, out);
        }
        let _ = writeln!(out, "{pad}    return \"{}\"", unit.token);
    }
}

impl GenFile {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            match item {
                Item::Unit(u) => render_unit(u, 0, &mut out),
                Item::Const { name, value } => {
                    let _ = writeln!(out, "{name} = \"{value}\"");
                }
            }
        }
        out
    }

    pub fn has_consts(&self) -> bool {
        self.items.iter().any(|i| matches!(i, Item::Const { .. }))
    }

    pub fn main_path(&self) -> CodeUnitPath {
        CodeUnitPath::main(self.path.clone())
    }

    pub fn unit_path(&self, names: &[&str]) -> CodeUnitPath {
        format!("{}::{}", self.path, names.join("::")).parse().expect("valid path")
    }

    /// Every unit, as (index path, name path).
    pub fn units(&self) -> Vec<(Vec<usize>, Vec<String>)> {
        fn walk(unit: &GenUnit, idx: Vec<usize>, names: Vec<String>, out: &mut Vec<(Vec<usize>, Vec<String>)>) {
            out.push((idx.clone(), names.clone()));
            for (i, child) in unit.children.iter().enumerate() {
                let mut idx = idx.clone();
                idx.push(i);
                let mut names = names.clone();
                names.push(child.name.clone());
                walk(child, idx, names, out);
            }
        }
        let mut out = Vec::new();
        for (i, item) in self.items.iter().enumerate() {
            if let Item::Unit(u) = item {
                walk(u, vec![i], vec![u.name.clone()], &mut out);
            }
        }
        out
    }

    pub fn unit(&self, idx: &[usize]) -> &GenUnit {
        let Item::Unit(first) = &self.items[idx[0]] else {
            panic!("index does not name a unit")
        };
        let mut unit = first;
        for &i in &idx[1..] {
            unit = &unit.children[i];
        }
        unit
    }

    pub fn unit_mut(&mut self, idx: &[usize]) -> &mut GenUnit {
        let Item::Unit(first) = &mut self.items[idx[0]] else {
            panic!("index does not name a unit")
        };
        let mut unit = first;
        for &i in &idx[1..] {
            unit = &mut unit.children[i];
        }
        unit
    }

    pub fn path_of(&self, names: &[String]) -> CodeUnitPath {
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        self.unit_path(&refs)
    }
}

pub fn gen_unit(rng: &mut StdRng, names: &mut Names, depth: usize, in_class: bool) -> GenUnit {
    let class = !in_class && depth < 2 && rng.random_bool(0.3);
    let mut children = Vec::new();
    if class {
        for _ in 0..rng.random_range(0..=3) {
            children.push(gen_unit(rng, names, depth + 1, true));
        }
    } else if depth < 2 && rng.random_bool(0.2) {
        children.push(gen_unit(rng, names, depth + 1, false));
    }
    GenUnit {
        class,
        name: names.next(if class { "C" } else { "f" }),
        token: names.next("t"),
        children,
    }
}

pub fn gen_file(rng: &mut StdRng, names: &mut Names, path: &str) -> GenFile {
    let mut items = Vec::new();
    for _ in 0..rng.random_range(1..=4) {
        items.push(Item::Unit(gen_unit(rng, names, 0, false)));
    }
    for _ in 0..rng.random_range(0..=2) {
        let at = rng.random_range(0..=items.len());
        items.insert(at, Item::Const { name: names.next("K").to_uppercase(), value: names.next("v") });
    }
    GenFile { path: path.to_string(), items }
}

pub fn gen_repo(rng: &mut StdRng, names: &mut Names) -> Vec<GenFile> {
    (0..rng.random_range(1..=3))
        .map(|i| gen_file(rng, names, &format!("pkg/m{i}.py")))
        .collect()
}

pub fn snapshot(files: &[GenFile]) -> Snapshot {
    let texts: Vec<(String, String)> = files.iter().map(|f| (f.path.clone(), f.render())).collect();
    Snapshot::from_texts(texts.iter().map(|(p, t)| (p.as_str(), t.as_str())))
}

/// What an edit touched, in terms the generator knows without looking at
/// any diff.
#[derive(Debug, Clone, Default)]
pub struct EditEffect {
    /// Units whose own lines changed, by post-change path. These are the
    /// units an incremental update has to re-summarise.
    pub resummarise: BTreeSet<CodeUnitPath>,
    /// Units whose lines a reference patch touches, by path in the version
    /// holding the line.
    pub gold_functions: BTreeSet<CodeUnitPath>,
    pub gold_files: BTreeSet<String>,
    pub new_files: BTreeSet<String>,
}

/// Apply one random edit to `file`, returning what it touched.
pub fn mutate(rng: &mut StdRng, names: &mut Names, file: &mut GenFile) -> EditEffect {
    let mut effect = EditEffect::default();
    effect.gold_files.insert(file.path.clone());
    let units = file.units();
    let functions: Vec<_> = units
        .iter()
        .filter(|(idx, _)| !file.unit(idx).class)
        .cloned()
        .collect();
    let classes: Vec<_> = units
        .iter()
        .filter(|(idx, _)| file.unit(idx).class)
        .cloned()
        .collect();
    let consts: Vec<usize> = (0..file.items.len())
        .filter(|&i| matches!(file.items[i], Item::Const { .. }))
        .collect();
    loop {
        match rng.random_range(0..7) {
            0 if !functions.is_empty() => {
                let (idx, path) = &functions[rng.random_range(0..functions.len())];
                file.unit_mut(idx).token = names.next("t");
                let p = file.path_of(path);
                effect.resummarise.insert(p.clone());
                effect.gold_functions.insert(p);
            }
            1 if !consts.is_empty() => {
                let i = consts[rng.random_range(0..consts.len())];
                if let Item::Const { value, .. } = &mut file.items[i] {
                    *value = names.next("v");
                }
                effect.resummarise.insert(file.main_path());
                effect.gold_functions.insert(file.main_path());
            }
            2 => {
                let at = rng.random_range(0..=file.items.len());
                file.items.insert(at, Item::Const { name: names.next("K").to_uppercase(), value: names.next("v") });
                effect.resummarise.insert(file.main_path());
                effect.gold_functions.insert(file.main_path());
            }
            3 => {
                let unit = GenUnit { class: false, name: names.next("f"), token: names.next("t"), children: Vec::new() };
                let p = file.unit_path(&[&unit.name]);
                let at = rng.random_range(0..=file.items.len());
                file.items.insert(at, Item::Unit(unit));
                effect.resummarise.insert(p.clone());
                effect.gold_functions.insert(p);
            }
            4 if !classes.is_empty() => {
                let (idx, path) = &classes[rng.random_range(0..classes.len())];
                let method = GenUnit { class: false, name: names.next("f"), token: names.next("t"), children: Vec::new() };
                let mut full = path.clone();
                full.push(method.name.clone());
                let class = file.unit_mut(idx);
                let at = rng.random_range(0..=class.children.len());
                class.children.insert(at, method);
                let p = file.path_of(&full);
                effect.resummarise.insert(p.clone());
                effect.gold_functions.insert(p);
            }
            5 if units.len() > 1 => {
                let (idx, path) = &units[rng.random_range(0..units.len())];
                if idx.len() == 1 && file.items.len() == 1 {
                    continue;
                }
                let prefix = path.clone();
                for (other_idx, other) in units.iter().filter(|(_, n)| n.starts_with(&prefix)) {
                    // Lines of a class inside a function belong to the
                    // innermost enclosing function.
                    let owner = if file.unit(other_idx).class {
                        (1..other_idx.len()).rev().find(|&k| !file.unit(&other_idx[..k]).class)
                    } else {
                        None
                    };
                    let owner = owner.map_or(other.as_slice(), |k| &other[..k]);
                    effect.gold_functions.insert(file.path_of(owner));
                }
                if idx.len() == 1 {
                    file.items.remove(idx[0]);
                } else {
                    let parent = file.unit_mut(&idx[..idx.len() - 1]);
                    parent.children.remove(idx[idx.len() - 1]);
                }
            }
            6 if consts.len() > 1 || (consts.len() == 1 && !units.is_empty()) => {
                let i = consts[rng.random_range(0..consts.len())];
                file.items.remove(i);
                effect.gold_functions.insert(file.main_path());
                if file.has_consts() {
                    effect.resummarise.insert(file.main_path());
                }
            }
            _ => continue,
        }
        return effect;
    }
}

/// Unified patch between two versions of a generated repository.
pub fn patch(pre: &[GenFile], post: &[GenFile]) -> String {
    let mut out = String::new();
    for file in post {
        match pre.iter().find(|f| f.path == file.path) {
            Some(old) => {
                let (a, b) = (old.render(), file.render());
                if a != b {
                    out.push_str(&unified(Some(&file.path), Some(&file.path), &a, &b, 3));
                }
            }
            None => out.push_str(&unified(None, Some(&file.path), "", &file.render(), 3)),
        }
    }
    out
}

/// Patch produced by `git diff`, when git is installed.
pub fn git_patch(pre: &[GenFile], post: &[GenFile]) -> Option<String> {
    let dir = tempfile::tempdir().ok()?;
    for (side, files) in [("pre", pre), ("post", post)] {
        for f in files {
            let path = dir.path().join(side).join(&f.path);
            std::fs::create_dir_all(path.parent()?).ok()?;
            std::fs::write(path, f.render()).ok()?;
        }
    }
    std::fs::create_dir_all(dir.path().join("pre")).ok()?;
    let output = std::process::Command::new("git")
        .current_dir(dir.path())
        .args(["diff", "--no-index", "--no-color", "pre", "post"])
        .output()
        .ok()?;
    // Exit status 1 means "differences found".
    if output.status.code() != Some(1) {
        return None;
    }
    let text = String::from_utf8(output.stdout).ok()?;
    Some(text.replace("a/pre/", "a/").replace("b/post/", "b/"))
}

fn describe(node: &SummaryNode, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let _ = write!(out, "{pad}{}\n{pad}  Describes {}.\n", node.header, if node.name.is_empty() { "this part" } else { &node.name });
    for child in &node.children {
        describe(child, depth + 1, out);
    }
}

/// Scripted summariser: parses the code shown in the prompt and answers
/// with a template that matches it exactly.
pub fn faithful(req: &LlmRequest) -> Option<String> {
    let start = req.user.find("```python\n")? + "```python\n".len();
    let end = req.user[start..].rfind("\n```")?;
    let code = &req.user[start..start + end];
    let path = req.user.split('`').nth(1)?.split("::").next()?.to_string();
    let tree = parse_file(code, &path).ok()?;
    let summary = mechanical_summary(&tree);
    let mut out = String::new();
    if req.user.starts_with("Summarise the Python file") {
        describe(&summary.root, 0, &mut out);
    } else {
        match summary
            .root
            .children
            .iter()
            .find(|c| c.kind != CodeUnitKind::Main)
            .or(summary.root.children.first())
        {
            Some(unit) => describe(unit, 0, &mut out),
            None => out.push_str("__MAIN__\n  Module-level statements.\n"),
        }
    }
    Some(out)
}

/// (path, header) of every node, in pre-order.
pub fn shape(tree: &metarag::summary::SummaryTree) -> Vec<(String, String)> {
    tree.nodes().into_iter().map(|(p, n)| (p.to_string(), n.header.clone())).collect()
}
