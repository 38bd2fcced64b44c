//! Tree snapshots.
//!
//! Layout: the line `BETREE-TREE v1`, a line `<nodes> <dim> <classes> <max_children|none>`,
//! then per node in id order a line `<id> <parent|-1> <label>` followed by `dim`
//! little-endian `f64` features.

use std::path::Path;

use betree_core::tree::{BoundaryTree, Sample};

use crate::error::{IoError, Result};

const MAGIC: &str = "BETREE-TREE v1";

pub fn encode_tree(tree: &BoundaryTree) -> Vec<u8> {
    let dim = tree.feature_dim();
    let mc = tree.max_children().map_or_else(|| "none".to_string(), |m| m.to_string());
    let mut out = format!("{MAGIC}\n{} {dim} {} {mc}\n", tree.len(), tree.classes()).into_bytes();
    for (id, node) in tree.nodes().iter().enumerate() {
        let parent = node.parent.map_or(-1, |p| p as i64);
        out.extend_from_slice(format!("{id} {parent} {}\n", node.sample.label).as_bytes());
        for v in &node.sample.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_tree(path: &Path, tree: &BoundaryTree) -> Result<()> {
    std::fs::write(path, encode_tree(tree)).map_err(|e| IoError::io(path, e))
}

pub fn read_tree(path: &Path) -> Result<BoundaryTree> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_tree(&bytes, path)
}

pub fn decode_tree(bytes: &[u8], path: &Path) -> Result<BoundaryTree> {
    let mut cur = Cursor { bytes, pos: 0, path };
    let magic = cur.line("magic line")?;
    if magic != MAGIC {
        return Err(IoError::format(path, "magic line", format!("expected {MAGIC:?}, found {magic:?}")));
    }
    let sizes = cur.line("size line")?;
    let f: Vec<&str> = sizes.split_whitespace().collect();
    let bad_sizes = || IoError::format(path, "size line", format!("expected `<nodes> <dim> <classes> <max_children>`, found {sizes:?}"));
    if f.len() != 4 {
        return Err(bad_sizes());
    }
    let count: usize = f[0].parse().map_err(|_| bad_sizes())?;
    let dim: usize = f[1].parse().map_err(|_| bad_sizes())?;
    let classes: usize = f[2].parse().map_err(|_| bad_sizes())?;
    let max_children = match f[3] {
        "none" => None,
        s => Some(s.parse::<usize>().map_err(|_| bad_sizes())?),
    };

    let mut parts = Vec::with_capacity(count);
    for expected in 0..count {
        let field = format!("node {expected}");
        let line = cur.line(&field)?;
        let bad = || IoError::format(path, field.clone(), format!("expected `<id> <parent> <label>`, found {line:?}"));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let id: usize = f[0].parse().map_err(|_| bad())?;
        let parent: i64 = f[1].parse().map_err(|_| bad())?;
        let label: usize = f[2].parse().map_err(|_| bad())?;
        if id != expected || parent < -1 {
            return Err(bad());
        }
        let features = cur.floats(dim, &field)?;
        let parent = usize::try_from(parent).ok();
        parts.push((parent, Sample::new(features, label)));
    }
    if cur.pos != bytes.len() {
        return Err(IoError::format(path, "trailer", format!("{} unexpected bytes after the last node", bytes.len() - cur.pos)));
    }
    BoundaryTree::from_parts(parts, max_children, classes).map_err(|e| IoError::format(path, "tree structure", e.to_string()))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn line(&mut self, field: &str) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| IoError::format(self.path, field, "truncated file"))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| IoError::format(self.path, field, "not UTF-8 text"))
    }

    fn floats(&mut self, n: usize, field: &str) -> Result<Vec<f64>> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < 8 * n {
            return Err(IoError::format(self.path, field, "truncated feature vector"));
        }
        self.pos += 8 * n;
        Ok(rest[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use betree_core::tree::Identity;

    fn sample_tree() -> BoundaryTree {
        let samples = vec![
            Sample::new(vec![0.0, 0.0], 0),
            Sample::new(vec![10.0, 0.0], 1),
            Sample::new(vec![10.0, 10.0], 2),
            Sample::new(vec![0.0, 10.0], 1),
            Sample::new(vec![0.1, 9.0], 0),
        ];
        BoundaryTree::build(&samples, &Identity, Some(3), 3).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let t = sample_tree();
        let back = decode_tree(&encode_tree(&t), Path::new("m")).unwrap();
        assert_eq!(back.len(), t.len());
        assert_eq!(back.max_children(), Some(3));
        assert_eq!(back.classes(), 3);
        for (a, b) in back.nodes().iter().zip(t.nodes()) {
            assert_eq!(a.parent, b.parent);
            assert_eq!(a.sample, b.sample);
            assert_eq!(a.children, b.children);
        }
    }

    #[test]
    fn header_text() {
        let t = BoundaryTree::new(Sample::new(vec![1.0], 4), None, 5).unwrap();
        let bytes = encode_tree(&t);
        let head = b"BETREE-TREE v1\n1 1 5 none\n0 -1 4\n";
        assert_eq!(&bytes[..head.len()], head);
        assert_eq!(bytes.len(), head.len() + 8);
    }

    #[test]
    fn damaged_snapshots_are_rejected() {
        let bytes = encode_tree(&sample_tree());
        let m = Path::new("m");
        assert!(decode_tree(&bytes[..bytes.len() - 1], m).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_tree(&extra, m).is_err());
        let same_label_edge = b"BETREE-TREE v1\n2 0 2 none\n0 -1 1\n1 0 1\n";
        let err = decode_tree(same_label_edge, m).unwrap_err();
        assert!(err.to_string().contains("tree structure"), "{err}");
    }
}
